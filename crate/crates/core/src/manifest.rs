//! Route manifest generation: a deterministic, machine-readable listing of
//! every URL template, method, declared class, role requirement and media
//! type a metamodel exposes. It carries everything a client generator needs
//! without shipping generated client code.

use serde::Serialize;

use crate::metamodel::{ClassDef, Feature, Metamodel};
use crate::repr::WireFormat;

const MEDIA_TYPES: [&str; 2] = ["application/json", "application/xml"];

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Route {
    pub method: &'static str,
    /// URL template; placeholders are `{InstanceId}`, `{id}` and `{i}`.
    pub template: String,
    /// Declared class of the addressed resource.
    pub class: String,
    /// Roles allowed on the declared class; empty means any authenticated user.
    pub roles: Vec<String>,
    pub request_media_types: Vec<&'static str>,
    pub response_media_types: Vec<&'static str>,
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct RouteManifest {
    pub model: String,
    pub base_url: String,
    pub routes: Vec<Route>,
}

/// Enumerate the full method matrix over a metamodel's containment
/// structure. Output is deterministic: classes and features appear in
/// declaration order, containment references are expanded depth-first,
/// and recursion stops when a class reappears on the current path.
pub fn generate_manifest(m: &Metamodel, base_url: &str) -> RouteManifest {
    let mut routes = Vec::new();
    let root_template = format!("/rest/{}/{{InstanceId}}", m.model_id());
    for class in root_classes(m) {
        push_element_routes(&mut routes, &root_template, &class.name, class, true);
        let mut path_classes = vec![class.name.clone()];
        expand_features(m, &mut routes, &root_template, class, &mut path_classes);
    }
    RouteManifest {
        model: m.model_id().to_string(),
        base_url: base_url.to_string(),
        routes,
    }
}

impl RouteManifest {
    pub fn to_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("manifest serializes");
        out.push('\n');
        out
    }
}

/// Concrete classes that no containment reference can own (directly or via
/// one of their supertypes): these are the possible document roots.
fn root_classes(m: &Metamodel) -> Vec<&ClassDef> {
    let mut contained: Vec<&str> = Vec::new();
    for class in m.classes() {
        for reference in &class.references {
            if reference.containment {
                for sub in m.concrete_subtypes(&reference.target).unwrap_or_default() {
                    if !contained.contains(&sub.name.as_str()) {
                        contained.push(&sub.name);
                    }
                }
            }
        }
    }
    let roots: Vec<&ClassDef> = m
        .classes()
        .iter()
        .filter(|c| !c.is_abstract && !contained.contains(&c.name.as_str()))
        .collect();
    if roots.is_empty() {
        // Every concrete class is containable somewhere (e.g. a recursive
        // tree model); any of them may still serve as a document root.
        m.classes().iter().filter(|c| !c.is_abstract).collect()
    } else {
        roots
    }
}

fn expand_features(
    m: &Metamodel,
    routes: &mut Vec<Route>,
    prefix: &str,
    class: &ClassDef,
    path_classes: &mut Vec<String>,
) {
    let references = m.effective_features(&class.name).into_iter().filter_map(
        |f| match f {
            Feature::Reference(r) => Some(r),
            Feature::Attribute(_) => None,
        },
    );
    for reference in references {
        let target = m.class(&reference.target).expect("target class exists");
        let feature_template = format!("{prefix}/{}", reference.name);
        if reference.many() {
            push_collection_routes(routes, &feature_template, target, reference.containment);
            // Members are addressable by identifier value and by position.
            let member_templates = member_templates(m, &feature_template, &reference.target);
            for template in &member_templates {
                push_element_routes(routes, template, &reference.target, target, false);
            }
            if reference.containment && !path_classes.contains(&reference.target) {
                path_classes.push(reference.target.clone());
                for template in &member_templates {
                    expand_features(m, routes, template, target, path_classes);
                }
                path_classes.pop();
            }
        } else {
            push_element_routes(routes, &feature_template, &reference.target, target, false);
            if reference.containment && !path_classes.contains(&reference.target) {
                path_classes.push(reference.target.clone());
                expand_features(m, routes, &feature_template, target, path_classes);
                path_classes.pop();
            }
        }
    }
}

fn member_templates(m: &Metamodel, collection: &str, target: &str) -> Vec<String> {
    let mut templates = Vec::new();
    if m.effective_identifier(target).is_some() {
        templates.push(format!("{collection}/{{id}}"));
    }
    templates.push(format!("{collection}?index={{i}}"));
    templates
}

fn push_element_routes(
    routes: &mut Vec<Route>,
    template: &str,
    class_name: &str,
    class: &ClassDef,
    is_root: bool,
) {
    let roles = class.annotations.roles.clone();
    let mut methods: Vec<(&'static str, bool)> = vec![("GET", false), ("PUT", true)];
    if !is_root {
        methods.push(("DELETE", false));
    }
    methods.push(("HEAD", false));
    methods.push(("OPTIONS", false));
    for (method, has_body) in methods {
        routes.push(route(method, template, class_name, &roles, has_body));
    }
}

fn push_collection_routes(
    routes: &mut Vec<Route>,
    template: &str,
    target: &ClassDef,
    containment: bool,
) {
    let roles = target.annotations.roles.clone();
    let mut methods: Vec<(&'static str, bool)> = vec![("GET", false)];
    if containment {
        methods.push(("POST", true));
    }
    methods.push(("HEAD", false));
    methods.push(("OPTIONS", false));
    for (method, has_body) in methods {
        routes.push(route(method, template, &target.name, &roles, has_body));
    }
}

fn route(
    method: &'static str,
    template: &str,
    class: &str,
    roles: &[String],
    has_body: bool,
) -> Route {
    let response_media_types = match method {
        "DELETE" | "OPTIONS" => vec![],
        "HEAD" => vec![WireFormat::Json.media_type(), WireFormat::Xml.media_type()],
        _ => MEDIA_TYPES.to_vec(),
    };
    Route {
        method,
        template: template.to_string(),
        class: class.to_string(),
        roles: roles.to_vec(),
        request_media_types: if has_body { MEDIA_TYPES.to_vec() } else { vec![] },
        response_media_types,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metamodel::parse_metamodel;

    fn family() -> Metamodel {
        let text = std::fs::read_to_string(
            std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
                .join("fixtures/family/metamodel.json"),
        )
        .unwrap();
        parse_metamodel(&text).unwrap()
    }

    fn has(m: &RouteManifest, method: &str, template: &str) -> bool {
        m.routes
            .iter()
            .any(|r| r.method == method && r.template == template)
    }

    #[test]
    fn family_manifest_covers_method_matrix() {
        let m = family();
        let manifest = generate_manifest(&m, "https://localhost:8443");
        assert_eq!(manifest.model, "Family");
        // Root element rows: no DELETE.
        assert!(has(&manifest, "GET", "/rest/Family/{InstanceId}"));
        assert!(has(&manifest, "PUT", "/rest/Family/{InstanceId}"));
        assert!(!has(&manifest, "DELETE", "/rest/Family/{InstanceId}"));
        // Containment collections accept POST; cross-reference ones do not.
        assert!(has(&manifest, "POST", "/rest/Family/{InstanceId}/pets"));
        assert!(has(&manifest, "GET", "/rest/Family/{InstanceId}/members"));
        assert!(!has(&manifest, "POST", "/rest/Family/{InstanceId}/members"));
        // Members are addressable by id and by index.
        assert!(has(&manifest, "PUT", "/rest/Family/{InstanceId}/parents/{id}"));
        assert!(has(&manifest, "GET", "/rest/Family/{InstanceId}/parents?index={i}"));
        assert!(has(&manifest, "DELETE", "/rest/Family/{InstanceId}/parents/{id}"));
        // Nested cross-references of contained classes appear.
        assert!(has(&manifest, "GET", "/rest/Family/{InstanceId}/sons/{id}/favorite"));
    }

    #[test]
    fn roles_come_from_the_declared_class() {
        let m = family();
        let manifest = generate_manifest(&m, "https://localhost:8443");
        let members = manifest
            .routes
            .iter()
            .find(|r| r.template == "/rest/Family/{InstanceId}/members" && r.method == "GET")
            .unwrap();
        assert_eq!(members.roles, vec!["admin".to_string()]);
        let parents = manifest
            .routes
            .iter()
            .find(|r| r.template == "/rest/Family/{InstanceId}/parents" && r.method == "GET")
            .unwrap();
        assert!(parents.roles.is_empty());
    }

    #[test]
    fn manifest_is_deterministic() {
        let m = family();
        let a = generate_manifest(&m, "https://localhost:8443").to_json();
        let b = generate_manifest(&m, "https://localhost:8443").to_json();
        assert_eq!(a, b);
    }

    #[test]
    fn single_class_model_has_only_root_rows() {
        let m = parse_metamodel(
            r#"{"model": "Solo", "classes": [
                {"name": "Thing", "attributes": [{"name": "label", "type": "string"}]}
            ]}"#,
        )
        .unwrap();
        let manifest = generate_manifest(&m, "https://localhost:8443");
        let methods: Vec<&str> = manifest.routes.iter().map(|r| r.method).collect();
        assert_eq!(methods, vec!["GET", "PUT", "HEAD", "OPTIONS"]);
        assert!(manifest
            .routes
            .iter()
            .all(|r| r.template == "/rest/Solo/{InstanceId}"));
    }

    #[test]
    fn containment_cycles_do_not_recurse_forever() {
        let m = parse_metamodel(
            r#"{"model": "Tree", "classes": [
                {"name": "Node",
                 "attributes": [{"name": "name", "type": "string", "identifier": true}],
                 "references": [{"name": "children", "target": "Node", "containment": true, "upper": -1}]}
            ]}"#,
        )
        .unwrap();
        let manifest = generate_manifest(&m, "https://localhost:8443");
        // One level of expansion below the root, then the cycle stops.
        assert!(has(&manifest, "POST", "/rest/Tree/{InstanceId}/children"));
        assert!(!has(
            &manifest,
            "POST",
            "/rest/Tree/{InstanceId}/children/{id}/children"
        ));
    }
}
