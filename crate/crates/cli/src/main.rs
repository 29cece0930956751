//! `metarest` — operator CLI and HTTP(S) entry point for the
//! metamodel-driven REST server.
//!
//! Machine-readable output goes to standard output as JSON; diagnostics go
//! to standard error. Exit codes: 0 success, 1 operational failure,
//! 2 usage error.

mod http;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use metarest_core::config::ServerConfig;
use metarest_core::ecore::import_ecore_xmi;
use metarest_core::manifest::generate_manifest;
use metarest_core::metamodel::to_canonical_json;
use metarest_core::security::UserStore;
use metarest_core::service::Service;

#[derive(Parser)]
#[command(name = "metarest", version, about = "Metamodel-driven REST server")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP(S) server.
    Serve {
        /// Path to the JSON server configuration.
        #[arg(long)]
        config: PathBuf,
    },
    /// Convert an Ecore XMI metamodel to the native JSON metamodel format.
    ImportEcore {
        input: PathBuf,
        output: PathBuf,
    },
    /// Check a model instance against its structural and OCL constraints.
    /// Prints the violation names as a JSON array; exits 1 if any exist.
    Validate {
        #[arg(long)]
        config: PathBuf,
        model: String,
        instance: String,
    },
    /// Print the route manifest for one model as JSON.
    Manifest {
        #[arg(long)]
        config: PathBuf,
        model: String,
    },
    /// Manage entries in the user store file.
    User {
        #[command(subcommand)]
        command: UserCommand,
    },
}

#[derive(Subcommand)]
enum UserCommand {
    Add {
        #[arg(long)]
        users_file: PathBuf,
        username: String,
        #[arg(long)]
        password: String,
        #[arg(long, value_delimiter = ',')]
        roles: Vec<String>,
    },
    Remove {
        #[arg(long)]
        users_file: PathBuf,
        username: String,
    },
    SetRoles {
        #[arg(long)]
        users_file: PathBuf,
        username: String,
        #[arg(long, value_delimiter = ',')]
        roles: Vec<String>,
    },
    SetPassword {
        #[arg(long)]
        users_file: PathBuf,
        username: String,
        #[arg(long)]
        password: String,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("metarest: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Serve { config } => {
            let service = boot(&config)?;
            let config = ServerConfig::load(&config)?;
            http::serve(config, service)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::ImportEcore { input, output } => {
            let text = std::fs::read_to_string(&input)?;
            let metamodel = import_ecore_xmi(&text)?;
            std::fs::write(&output, to_canonical_json(&metamodel))?;
            eprintln!("wrote {}", output.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate {
            config,
            model,
            instance,
        } => {
            let service = boot(&config)?;
            let names = service
                .validate(&model, &instance)
                .map_err(|e| anyhow::anyhow!("{}", e.message))?;
            println!("{}", serde_json::to_string(&names)?);
            Ok(if names.is_empty() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
        Command::Manifest { config, model } => {
            let service = boot(&config)?;
            let metamodel = service
                .metamodel(&model)
                .ok_or_else(|| anyhow::anyhow!("unknown model {model}"))?;
            print!("{}", generate_manifest(metamodel, service.base_url()).to_json());
            Ok(ExitCode::SUCCESS)
        }
        Command::User { command } => {
            user_command(command)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

/// Load configuration, user store and all models, failing fast on any
/// metamodel or invariant error.
fn boot(config_path: &PathBuf) -> anyhow::Result<Service> {
    let config = ServerConfig::load(config_path)?;
    let users = UserStore::load(&config.users_file)?;
    let service = Service::new(
        &config.models_dir,
        users,
        config.effective_base_url(),
        config.cors_allowed_origins.clone(),
    )?;
    Ok(service)
}

fn user_command(command: UserCommand) -> anyhow::Result<()> {
    match command {
        UserCommand::Add {
            users_file,
            username,
            password,
            roles,
        } => {
            // Create the store file on first use.
            let mut store = if users_file.is_file() {
                UserStore::load(&users_file)?
            } else {
                UserStore::new(Some(users_file))
            };
            let salt = rand::random::<[u8; 16]>().to_vec();
            store.add_user(&username, &password, &roles, salt)?;
            print_user(&store, &username);
        }
        UserCommand::Remove {
            users_file,
            username,
        } => {
            let mut store = UserStore::load(&users_file)?;
            store.remove_user(&username)?;
            println!("{{}}");
        }
        UserCommand::SetRoles {
            users_file,
            username,
            roles,
        } => {
            let mut store = UserStore::load(&users_file)?;
            store.set_roles(&username, &roles)?;
            print_user(&store, &username);
        }
        UserCommand::SetPassword {
            users_file,
            username,
            password,
        } => {
            let mut store = UserStore::load(&users_file)?;
            let salt = rand::random::<[u8; 16]>().to_vec();
            store.set_password(&username, &password, salt)?;
            print_user(&store, &username);
        }
    }
    Ok(())
}

fn print_user(store: &UserStore, username: &str) {
    let user = store.user(username).expect("user exists after mutation");
    println!(
        "{}",
        serde_json::json!({"username": user.username, "roles": user.roles})
    );
}
