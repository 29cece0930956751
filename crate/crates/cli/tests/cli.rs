//! Black-box tests of the `metarest` binary's non-serving subcommands.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_metarest"))
}

fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/family")
}

struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    fn new() -> Workspace {
        let dir = tempfile::tempdir().unwrap();
        let family = dir.path().join("models/Family");
        std::fs::create_dir_all(&family).unwrap();
        for name in ["metamodel.json", "Simpsons.xmi"] {
            std::fs::copy(fixture_dir().join(name), family.join(name)).unwrap();
        }
        let ws = Workspace { dir };
        let out = bin()
            .args([
                "user",
                "add",
                "--users-file",
                ws.users_file().to_str().unwrap(),
                "root",
                "--password",
                "rootpw",
                "--roles",
                "admin",
            ])
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        std::fs::write(
            ws.config_file(),
            format!(
                r#"{{
                    "insecure_http": true,
                    "models_dir": "{}",
                    "users_file": "{}"
                }}"#,
                ws.dir.path().join("models").display(),
                ws.users_file().display()
            ),
        )
        .unwrap();
        ws
    }

    fn users_file(&self) -> PathBuf {
        self.dir.path().join("users.json")
    }

    fn config_file(&self) -> PathBuf {
        self.dir.path().join("config.json")
    }

    fn run(&self, args: &[&str]) -> Output {
        bin().args(args).output().unwrap()
    }
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn validate_clean_fixture_prints_empty_list() {
    let ws = Workspace::new();
    let out = ws.run(&[
        "validate",
        "--config",
        ws.config_file().to_str().unwrap(),
        "Family",
        "Simpsons",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(stdout(&out).trim(), "[]");
}

#[test]
fn validate_violating_instance_exits_one_and_names_invariant() {
    let ws = Workspace::new();
    // Give Bart a third parent directly in storage.
    let xmi_path = ws.dir.path().join("models/Family/Simpsons.xmi");
    let xmi = std::fs::read_to_string(&xmi_path).unwrap();
    let broken = xmi
        .replace(
            "<parents xsi:type=\"m:Parent\" firstName=\"Marge\"",
            "<parents xsi:type=\"m:Parent\" firstName=\"Abe\" age=\"83\"/>\n  \
             <parents xsi:type=\"m:Parent\" firstName=\"Marge\"",
        )
        .replace(
            "age=\"10\" parents=\"#Homer #Marge\"",
            "age=\"10\" parents=\"#Homer #Marge #Abe\"",
        );
    assert_ne!(xmi, broken);
    std::fs::write(&xmi_path, broken).unwrap();

    let out = ws.run(&[
        "validate",
        "--config",
        ws.config_file().to_str().unwrap(),
        "Family",
        "Simpsons",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("maxParents"), "{}", stdout(&out));
}

#[test]
fn validate_unknown_instance_fails() {
    let ws = Workspace::new();
    let out = ws.run(&[
        "validate",
        "--config",
        ws.config_file().to_str().unwrap(),
        "Family",
        "Nobody",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!stderr(&out).is_empty());
}

#[test]
fn import_ecore_matches_direct_parse() {
    let ws = Workspace::new();
    let output = ws.dir.path().join("imported.json");
    let out = ws.run(&[
        "import-ecore",
        fixture_dir().join("family.ecore").to_str().unwrap(),
        output.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));

    let text = std::fs::read_to_string(&output).unwrap();
    let via_file = metarest_core::parse_metamodel(&text).unwrap();
    let ecore = std::fs::read_to_string(fixture_dir().join("family.ecore")).unwrap();
    let direct = metarest_core::ecore::import_ecore_xmi(&ecore).unwrap();
    assert_eq!(
        metarest_core::metamodel::to_canonical_json(&via_file),
        metarest_core::metamodel::to_canonical_json(&direct)
    );
}

#[test]
fn manifest_is_deterministic_json() {
    let ws = Workspace::new();
    let config = ws.config_file();
    let args = ["manifest", "--config", config.to_str().unwrap(), "Family"];
    let a = ws.run(&args);
    let b = ws.run(&args);
    assert!(a.status.success());
    assert_eq!(stdout(&a), stdout(&b));
    let doc: serde_json::Value = serde_json::from_str(&stdout(&a)).unwrap();
    assert_eq!(doc["model"], "Family");
    assert!(doc["routes"].as_array().unwrap().len() > 10);
}

#[test]
fn user_lifecycle_and_duplicate_rejection() {
    let ws = Workspace::new();
    let users = ws.users_file();
    let users = users.to_str().unwrap();

    let out = ws.run(&["user", "add", "--users-file", users, "homer", "--password", "pw"]);
    assert!(out.status.success());
    let doc: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(doc["roles"], serde_json::json!(["user"]));

    let out = ws.run(&["user", "add", "--users-file", users, "homer", "--password", "pw"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("duplicate username"));

    let out = ws.run(&[
        "user", "set-roles", "--users-file", users, "homer", "--roles", "admin,editor",
    ]);
    assert!(out.status.success());
    let doc: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(doc["roles"], serde_json::json!(["user", "admin", "editor"]));

    let out = ws.run(&["user", "set-password", "--users-file", users, "homer", "--password", "new"]);
    assert!(out.status.success());

    let out = ws.run(&["user", "remove", "--users-file", users, "homer"]);
    assert!(out.status.success());

    // Removing the last admin is refused.
    let out = ws.run(&["user", "remove", "--users-file", users, "root"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn usage_errors_exit_two() {
    let out = bin().args(["no-such-command"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = bin().args(["validate"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn serve_refuses_plaintext_without_flag() {
    let ws = Workspace::new();
    let config = ws.dir.path().join("tls-missing.json");
    std::fs::write(
        &config,
        format!(
            r#"{{"models_dir": "{}", "users_file": "{}"}}"#,
            ws.dir.path().join("models").display(),
            ws.users_file().display()
        ),
    )
    .unwrap();
    let out = ws.run(&["serve", "--config", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("TLS is required"));
}

#[test]
fn boot_fails_fast_on_malformed_invariant() {
    let ws = Workspace::new();
    let path = ws.dir.path().join("models/Family/metamodel.json");
    let text = std::fs::read_to_string(&path).unwrap();
    let broken = text.replace(
        "self.parents->size() <= 2",
        "self.parents->size() <=",
    );
    assert_ne!(text, broken);
    std::fs::write(&path, broken).unwrap();
    let out = ws.run(&[
        "validate",
        "--config",
        ws.config_file().to_str().unwrap(),
        "Family",
        "Simpsons",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("maxParents"), "{}", stderr(&out));
}
