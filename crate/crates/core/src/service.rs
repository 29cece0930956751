//! The request-handling service: wires authentication, authorization, URL
//! resolution, representation and validation into a single `handle` entry
//! point, plus the admin surface for users and validation switches.
//!
//! Mutations follow a clone-mutate-validate-save-swap protocol inside a
//! per-instance lock: the working copy is validated and persisted before
//! it replaces the committed snapshot, so a rejected mutation leaves both
//! memory and storage untouched.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use serde_json::{json, Value};

use crate::instance::{
    apply_assignments, create_element, delete_element, load_instance, resolve_path,
    save_instance, Eid, ModelInstance, Payload, ResolveError, ResourcePath, StorageBinding,
    StorageFormat, Target,
};
use crate::metamodel::{parse_metamodel, Metamodel};
use crate::ocl::{check_instance, collect_invariants, InvariantSet};
use crate::repr::{parse_payload, to_json, to_xml, uri_for, WireDocument, WireFormat};
use crate::router::{
    negotiate, parse_request_url, ApiRequest, ApiResponse, Method, NegotiateError, UrlError,
};
use crate::security::{authorize, SecurityError, UserStore, WWW_AUTHENTICATE};

const ALLOW_ROOT: &str = "GET, PUT, HEAD, OPTIONS";
const ALLOW_ELEMENT: &str = "GET, PUT, DELETE, HEAD, OPTIONS";
const ALLOW_CONTAINMENT_COLLECTION: &str = "GET, POST, HEAD, OPTIONS";
const ALLOW_CROSS_COLLECTION: &str = "GET, HEAD, OPTIONS";

#[derive(Debug, thiserror::Error)]
pub enum BootError {
    #[error("models directory {0} does not exist")]
    MissingModelsDir(PathBuf),
    #[error("{path}: {message}")]
    Metamodel { path: PathBuf, message: String },
    #[error("user store: {0}")]
    Users(#[from] SecurityError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

struct Model {
    metamodel: Arc<Metamodel>,
    invariants: InvariantSet,
    dir: PathBuf,
}

type Slot = Arc<Mutex<Option<ModelInstance>>>;

/// One running API service over a models directory and a user store.
pub struct Service {
    base_url: String,
    cors_allowed_origins: Vec<String>,
    models: HashMap<String, Model>,
    instances: Mutex<HashMap<(String, String), Slot>>,
    pub users: RwLock<UserStore>,
}

impl Service {
    /// Load every metamodel under `models_dir` (one subdirectory per
    /// model, holding `metamodel.json` plus instance files) and compile
    /// all invariants, failing fast on any error.
    pub fn new(
        models_dir: &Path,
        users: UserStore,
        base_url: impl Into<String>,
        cors_allowed_origins: Vec<String>,
    ) -> Result<Service, BootError> {
        if !models_dir.is_dir() {
            return Err(BootError::MissingModelsDir(models_dir.to_path_buf()));
        }
        let mut models = HashMap::new();
        let mut dirs: Vec<PathBuf> = std::fs::read_dir(models_dir)?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.is_dir())
            .collect();
        dirs.sort();
        for dir in dirs {
            let manifest = dir.join("metamodel.json");
            if !manifest.is_file() {
                continue;
            }
            let text = std::fs::read_to_string(&manifest)?;
            let metamodel = parse_metamodel(&text).map_err(|e| BootError::Metamodel {
                path: manifest.clone(),
                message: e.to_string(),
            })?;
            let invariants =
                collect_invariants(&metamodel).map_err(|e| BootError::Metamodel {
                    path: manifest.clone(),
                    message: e.to_string(),
                })?;
            let dir_name = dir.file_name().unwrap().to_string_lossy().into_owned();
            if dir_name != metamodel.model_id() {
                return Err(BootError::Metamodel {
                    path: manifest,
                    message: format!(
                        "directory {dir_name} does not match model id {}",
                        metamodel.model_id()
                    ),
                });
            }
            models.insert(
                dir_name,
                Model {
                    metamodel: Arc::new(metamodel),
                    invariants,
                    dir,
                },
            );
        }
        Ok(Service {
            base_url: base_url.into(),
            cors_allowed_origins,
            models,
            instances: Mutex::new(HashMap::new()),
            users: RwLock::new(users),
        })
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    pub fn model_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.models.keys().cloned().collect();
        ids.sort();
        ids
    }

    pub fn metamodel(&self, model_id: &str) -> Option<&Arc<Metamodel>> {
        self.models.get(model_id).map(|m| &m.metamodel)
    }

    // -----------------------------------------------------------------------
    // Instance slots and persistence
    // -----------------------------------------------------------------------

    fn slot(&self, model_id: &str, instance_id: &str) -> Slot {
        let mut table = self.instances.lock().unwrap();
        table
            .entry((model_id.to_string(), instance_id.to_string()))
            .or_insert_with(|| Arc::new(Mutex::new(None)))
            .clone()
    }

    fn storage_path(&self, model: &Model, instance_id: &str) -> Option<StorageBinding> {
        for format in [StorageFormat::Xmi, StorageFormat::Json] {
            let path = model
                .dir
                .join(format!("{instance_id}.{}", format.extension()));
            if path.is_file() {
                return Some(StorageBinding { path, format });
            }
        }
        None
    }

    fn validation_sidecar(&self, model: &Model, instance_id: &str) -> PathBuf {
        model.dir.join(format!("{instance_id}.validation.json"))
    }

    fn load_slot(
        &self,
        model: &Model,
        instance_id: &str,
        guard: &mut Option<ModelInstance>,
    ) -> Result<(), ApiError> {
        if guard.is_some() {
            return Ok(());
        }
        let binding = self
            .storage_path(model, instance_id)
            .ok_or_else(|| ApiError::not_found("unknown model instance"))?;
        let text = std::fs::read_to_string(&binding.path)
            .map_err(|e| ApiError::internal(format!("storage read failed: {e}")))?;
        let mut instance = load_instance(
            &text,
            binding.format,
            Arc::clone(&model.metamodel),
            instance_id,
        )
        .map_err(|e| ApiError::internal(format!("storage parse failed: {e}")))?;
        instance.storage = Some(binding);
        instance.validation_active =
            read_validation_sidecar(&self.validation_sidecar(model, instance_id));
        *guard = Some(instance);
        Ok(())
    }

    // -----------------------------------------------------------------------
    // Entry point
    // -----------------------------------------------------------------------

    pub fn handle(&self, req: &ApiRequest) -> ApiResponse {
        let format = response_format(req);
        let mut response = match self.route(req) {
            Ok(r) => r,
            Err(e) => e.into_response(format),
        };
        if let Some(origin) = self.allowed_origin(req) {
            response = response.header("Access-Control-Allow-Origin", origin);
        }
        if req.method == Method::Head {
            response.body = Vec::new();
        }
        response
    }

    fn allowed_origin(&self, req: &ApiRequest) -> Option<String> {
        let origin = req.origin.as_deref()?;
        if self
            .cors_allowed_origins
            .iter()
            .any(|o| o == "*" || o == origin)
        {
            Some(origin.to_string())
        } else {
            None
        }
    }

    fn route(&self, req: &ApiRequest) -> Result<ApiResponse, ApiError> {
        if req.method == Method::Options {
            return self.handle_options(req);
        }
        // Authentication first; everything but OPTIONS requires it.
        let user = {
            let users = self.users.read().unwrap();
            match users.authenticate(req.authorization.as_deref()) {
                Ok(u) => u.clone(),
                Err(_) => return Err(ApiError::unauthorized()),
            }
        };

        if let Some(tail) = req.path.strip_prefix("/rest/admin/") {
            if !user.is_admin() {
                return Err(ApiError::forbidden());
            }
            return self.handle_admin(req, tail);
        }

        let path = parse_request_url(&req.path, req.query.as_deref()).map_err(
            |e| match e {
                UrlError::NotFound => ApiError::not_found("no resource at this path"),
                UrlError::BadRequest(m) => ApiError::bad_request(m),
            },
        )?;
        let model = self
            .models
            .get(&path.model_id)
            .ok_or_else(|| ApiError::not_found("unknown model"))?;

        let (response_format, request_format) = negotiate(
            req.accept.as_deref(),
            req.content_type.as_deref(),
            !req.body.is_empty(),
        )
        .map_err(|e| match e {
            NegotiateError::NotAcceptable => ApiError::status(406, "no acceptable representation"),
            NegotiateError::UnsupportedMediaType => {
                ApiError::status(415, "unsupported media type")
            }
        })?;

        let slot = self.slot(&path.model_id, &path.instance_id);
        let mut guard = slot.lock().unwrap();
        self.load_slot(model, &path.instance_id, &mut guard)?;
        let instance = guard.as_mut().expect("slot loaded");

        let target = resolve_path(instance, &path).map_err(|e| match e {
            ResolveError::NotFound(m) => ApiError::not_found(m),
            ResolveError::BadPath(m) => ApiError::bad_request(m),
        })?;

        // Authorization against the finally-addressed class: dynamic class
        // for elements, declared target class for collections.
        let addressed_class = match &target {
            Target::Element(eid) => instance.element(*eid).unwrap().class.clone(),
            Target::Collection {
                declared_target, ..
            } => declared_target.clone(),
        };
        let class_def = model
            .metamodel
            .class(&addressed_class)
            .expect("addressed class exists");
        if !authorize(&user, class_def) {
            return Err(ApiError::forbidden());
        }

        match req.method {
            Method::Get | Method::Head => {
                self.handle_get(instance, &target, response_format)
            }
            Method::Post => self.handle_post(
                model,
                instance,
                &target,
                req,
                response_format,
                request_format,
            ),
            Method::Put => self.handle_put(
                model,
                instance,
                &target,
                req,
                response_format,
                request_format,
            ),
            Method::Delete => self.handle_delete(model, instance, &target),
            Method::Options => unreachable!("handled before authentication"),
        }
    }

    // -----------------------------------------------------------------------
    // Methods
    // -----------------------------------------------------------------------

    fn handle_get(
        &self,
        instance: &ModelInstance,
        target: &Target,
        format: WireFormat,
    ) -> Result<ApiResponse, ApiError> {
        let doc = self.render(instance, target, format);
        Ok(ApiResponse::new(200)
            .header("Content-Type", doc.format.media_type())
            .body(doc.body))
    }

    fn handle_post(
        &self,
        model: &Model,
        instance: &mut ModelInstance,
        target: &Target,
        req: &ApiRequest,
        response_format: WireFormat,
        request_format: Option<WireFormat>,
    ) -> Result<ApiResponse, ApiError> {
        let Target::Collection {
            owner,
            reference,
            declared_target,
            containment,
            ..
        } = target
        else {
            return Err(ApiError::method_not_allowed(allow_for(instance, target)));
        };
        if !containment {
            return Err(ApiError::method_not_allowed(ALLOW_CROSS_COLLECTION));
        }
        let doc = request_document(req, request_format)?;
        let typed = parse_payload(&doc, Some(declared_target), &model.metamodel)
            .map_err(|e| ApiError::bad_request(e.to_string()))?;
        let payload = self.resolve_refs(instance, &typed)?;

        let mut working = instance.clone();
        let eid = create_element(&mut working, *owner, reference, &typed.class, &payload)
            .map_err(|e| ApiError::bad_request(e.to_string()))?;
        self.commit(model, instance, working)?;

        let location = uri_for(instance, eid, &self.base_url)
            .map_err(|e| ApiError::internal(e.to_string()))?;
        let doc = self.render(instance, &Target::Element(eid), response_format);
        Ok(ApiResponse::new(201)
            .header("Location", location)
            .header("Content-Type", doc.format.media_type())
            .body(doc.body))
    }

    fn handle_put(
        &self,
        model: &Model,
        instance: &mut ModelInstance,
        target: &Target,
        req: &ApiRequest,
        response_format: WireFormat,
        request_format: Option<WireFormat>,
    ) -> Result<ApiResponse, ApiError> {
        let Target::Element(eid) = target else {
            return Err(ApiError::method_not_allowed(allow_for(instance, target)));
        };
        let doc = request_document(req, request_format)?;
        // The wrapper class may be any supertype of the element's dynamic
        // class (a body for the declared type updates a subtype element).
        let typed = parse_payload(&doc, None, &model.metamodel)
            .map_err(|e| ApiError::bad_request(e.to_string()))?;
        let dynamic = &instance.element(*eid).unwrap().class;
        if !model
            .metamodel
            .is_subtype(dynamic, &typed.class)
            .unwrap_or(false)
        {
            return Err(ApiError::bad_request(format!(
                "payload class {} does not match element class {dynamic}",
                typed.class
            )));
        }
        let payload = self.resolve_refs(instance, &typed)?;

        let mut working = instance.clone();
        apply_assignments(&mut working, *eid, &payload)
            .map_err(|e| ApiError::bad_request(e.to_string()))?;
        self.commit(model, instance, working)?;

        let doc = self.render(instance, target, response_format);
        Ok(ApiResponse::new(200)
            .header("Content-Type", doc.format.media_type())
            .body(doc.body))
    }

    fn handle_delete(
        &self,
        model: &Model,
        instance: &mut ModelInstance,
        target: &Target,
    ) -> Result<ApiResponse, ApiError> {
        let Target::Element(eid) = target else {
            return Err(ApiError::method_not_allowed(allow_for(instance, target)));
        };
        if instance.roots.contains(eid) {
            return Err(ApiError::method_not_allowed(ALLOW_ROOT));
        }
        let mut working = instance.clone();
        delete_element(&mut working, *eid)
            .map_err(|e| ApiError::bad_request(e.to_string()))?;
        self.commit(model, instance, working)?;
        Ok(ApiResponse::new(204))
    }

    fn handle_options(&self, req: &ApiRequest) -> Result<ApiResponse, ApiError> {
        let allow = if req.path.starts_with("/rest/admin/") {
            "GET, POST, PUT, DELETE, OPTIONS".to_string()
        } else {
            let path = parse_request_url(&req.path, req.query.as_deref()).map_err(
                |e| match e {
                    UrlError::NotFound => ApiError::not_found("no resource at this path"),
                    UrlError::BadRequest(m) => ApiError::bad_request(m),
                },
            )?;
            let model = self
                .models
                .get(&path.model_id)
                .ok_or_else(|| ApiError::not_found("unknown model"))?;
            let slot = self.slot(&path.model_id, &path.instance_id);
            let mut guard = slot.lock().unwrap();
            self.load_slot(model, &path.instance_id, &mut guard)?;
            let instance = guard.as_ref().expect("slot loaded");
            let target = resolve_path(instance, &path).map_err(|e| match e {
                ResolveError::NotFound(m) => ApiError::not_found(m),
                ResolveError::BadPath(m) => ApiError::bad_request(m),
            })?;
            allow_for(instance, &target).to_string()
        };
        let mut response = ApiResponse::new(204).header("Allow", allow);
        if self.allowed_origin(req).is_some() {
            response = response
                .header(
                    "Access-Control-Allow-Methods",
                    "GET, PUT, POST, DELETE, HEAD, OPTIONS",
                )
                .header("Access-Control-Allow-Headers", "Authorization, Content-Type");
        }
        Ok(response)
    }

    // -----------------------------------------------------------------------
    // Helpers
    // -----------------------------------------------------------------------

    fn render(&self, instance: &ModelInstance, target: &Target, format: WireFormat) -> WireDocument {
        match format {
            WireFormat::Json => to_json(instance, target, &self.base_url),
            WireFormat::Xml => to_xml(instance, target, &self.base_url),
        }
    }

    /// Resolve the URI lists of a typed payload against the same instance.
    fn resolve_refs(
        &self,
        instance: &ModelInstance,
        typed: &crate::repr::TypedPayload,
    ) -> Result<Payload, ApiError> {
        let mut payload = Payload {
            attrs: typed.attrs.clone(),
            refs: Default::default(),
        };
        for (field, uris) in &typed.refs {
            let mut eids = Vec::new();
            for uri in uris {
                eids.push(self.resolve_uri(instance, uri).map_err(|m| {
                    ApiError::bad_request(format!("reference {field}: {m}"))
                })?);
            }
            payload.refs.insert(field.clone(), eids);
        }
        Ok(payload)
    }

    fn resolve_uri(&self, instance: &ModelInstance, uri: &str) -> Result<Eid, String> {
        let path_part = uri.strip_prefix(&self.base_url).unwrap_or(uri);
        let (path, query) = match path_part.split_once('?') {
            Some((p, q)) => (p, Some(q)),
            None => (path_part, None),
        };
        let parsed: ResourcePath = parse_request_url(path, query)
            .map_err(|e| format!("bad reference URI {uri}: {e}"))?;
        if parsed.model_id != instance.metamodel.model_id()
            || parsed.instance_id != instance.instance_id
        {
            return Err(format!("URI {uri} addresses a different model instance"));
        }
        match resolve_path(instance, &parsed) {
            Ok(Target::Element(eid)) => Ok(eid),
            Ok(Target::Collection { .. }) => {
                Err(format!("URI {uri} addresses a collection, not an element"))
            }
            Err(e) => Err(format!("dangling reference URI {uri}: {e}")),
        }
    }

    /// Validate and persist a working copy, then swap it in. On violation
    /// nothing changes and the violation names are reported.
    fn commit(
        &self,
        model: &Model,
        instance: &mut ModelInstance,
        working: ModelInstance,
    ) -> Result<(), ApiError> {
        if working.validation_active {
            let mut violations: Vec<String> = working
                .structural_violations()
                .into_iter()
                .map(|(name, _, _)| name)
                .collect();
            let report = check_instance(&working, &model.invariants);
            violations.extend(report.violations.iter().map(|v| v.invariant.clone()));
            if !violations.is_empty() {
                violations.dedup();
                return Err(ApiError::violations(violations));
            }
        }
        save_instance(&working)
            .map_err(|e| ApiError::internal(format!("storage write failed: {e}")))?;
        *instance = working;
        Ok(())
    }

    // -----------------------------------------------------------------------
    // Admin surface
    // -----------------------------------------------------------------------

    fn handle_admin(&self, req: &ApiRequest, tail: &str) -> Result<ApiResponse, ApiError> {
        let segments: Vec<&str> = tail.split('/').filter(|s| !s.is_empty()).collect();
        match segments.as_slice() {
            ["users"] => match req.method {
                Method::Get | Method::Head => {
                    let users = self.users.read().unwrap();
                    let list: Vec<Value> = users.users().map(user_json).collect();
                    Ok(json_response(200, &Value::Array(list)))
                }
                Method::Post => {
                    let body: Value = parse_json_body(&req.body)?;
                    let username = require_str(&body, "username")?;
                    let password = require_str(&body, "password")?;
                    let roles = roles_from(&body)?;
                    let mut users = self.users.write().unwrap();
                    let salt = rand::random::<[u8; 16]>().to_vec();
                    users
                        .add_user(&username, &password, &roles, salt)
                        .map_err(admin_error)?;
                    Ok(json_response(
                        201,
                        &user_json(users.user(&username).unwrap()),
                    ))
                }
                _ => Err(ApiError::method_not_allowed("GET, POST, OPTIONS")),
            },
            ["users", name] => match req.method {
                Method::Get | Method::Head => {
                    let users = self.users.read().unwrap();
                    let user = users
                        .user(name)
                        .ok_or_else(|| ApiError::not_found("unknown user"))?;
                    Ok(json_response(200, &user_json(user)))
                }
                Method::Put => {
                    let body: Value = parse_json_body(&req.body)?;
                    let mut users = self.users.write().unwrap();
                    if users.user(name).is_none() {
                        return Err(ApiError::not_found("unknown user"));
                    }
                    if let Some(password) = body.get("password").and_then(Value::as_str) {
                        let salt = rand::random::<[u8; 16]>().to_vec();
                        users
                            .set_password(name, password, salt)
                            .map_err(admin_error)?;
                    }
                    if body.get("roles").is_some() {
                        let roles = roles_from(&body)?;
                        users.set_roles(name, &roles).map_err(admin_error)?;
                    }
                    Ok(json_response(200, &user_json(users.user(name).unwrap())))
                }
                Method::Delete => {
                    let mut users = self.users.write().unwrap();
                    users.remove_user(name).map_err(admin_error)?;
                    Ok(ApiResponse::new(204))
                }
                _ => Err(ApiError::method_not_allowed("GET, PUT, DELETE, OPTIONS")),
            },
            ["validation", model_id, instance_id] => {
                let model = self
                    .models
                    .get(*model_id)
                    .ok_or_else(|| ApiError::not_found("unknown model"))?;
                let slot = self.slot(model_id, instance_id);
                let mut guard = slot.lock().unwrap();
                self.load_slot(model, instance_id, &mut guard)?;
                let instance = guard.as_mut().expect("slot loaded");
                match req.method {
                    Method::Get | Method::Head => Ok(json_response(
                        200,
                        &json!({"enabled": instance.validation_active}),
                    )),
                    Method::Put => {
                        let body: Value = parse_json_body(&req.body)?;
                        let enabled = body
                            .get("enabled")
                            .and_then(Value::as_bool)
                            .ok_or_else(|| {
                                ApiError::bad_request("body must be {\"enabled\": <bool>}")
                            })?;
                        instance.validation_active = enabled;
                        write_validation_sidecar(
                            &self.validation_sidecar(model, instance_id),
                            enabled,
                        )
                        .map_err(|e| ApiError::internal(e.to_string()))?;
                        Ok(json_response(200, &json!({"enabled": enabled})))
                    }
                    _ => Err(ApiError::method_not_allowed("GET, PUT, OPTIONS")),
                }
            }
            _ => Err(ApiError::not_found("no admin resource at this path")),
        }
    }

    /// The accept/reject decision the server would make for the current
    /// committed state of an instance (used by the CLI).
    pub fn validate(
        &self,
        model_id: &str,
        instance_id: &str,
    ) -> Result<Vec<String>, ApiError> {
        let model = self
            .models
            .get(model_id)
            .ok_or_else(|| ApiError::not_found("unknown model"))?;
        let slot = self.slot(model_id, instance_id);
        let mut guard = slot.lock().unwrap();
        self.load_slot(model, instance_id, &mut guard)?;
        let instance = guard.as_ref().expect("slot loaded");
        let mut names: Vec<String> = instance
            .structural_violations()
            .into_iter()
            .map(|(name, _, _)| name)
            .collect();
        let mut checked = instance.clone();
        checked.validation_active = true;
        let report = check_instance(&checked, &model.invariants);
        names.extend(report.violations.iter().map(|v| v.invariant.clone()));
        names.dedup();
        Ok(names)
    }
}

/// Methods valid for a target shape.
fn allow_for(instance: &ModelInstance, target: &Target) -> &'static str {
    match target {
        Target::Element(eid) if instance.roots.contains(eid) => ALLOW_ROOT,
        Target::Element(_) => ALLOW_ELEMENT,
        Target::Collection { containment, .. } => {
            if *containment {
                ALLOW_CONTAINMENT_COLLECTION
            } else {
                ALLOW_CROSS_COLLECTION
            }
        }
    }
}

fn request_document(
    req: &ApiRequest,
    format: Option<WireFormat>,
) -> Result<WireDocument, ApiError> {
    let format = format.ok_or_else(|| ApiError::bad_request("request body required"))?;
    let body = String::from_utf8(req.body.clone())
        .map_err(|_| ApiError::bad_request("request body is not valid UTF-8"))?;
    Ok(WireDocument { format, body })
}

fn response_format(req: &ApiRequest) -> WireFormat {
    match negotiate(req.accept.as_deref(), None, false) {
        Ok((f, _)) => f,
        Err(_) => WireFormat::Json,
    }
}

fn read_validation_sidecar(path: &Path) -> bool {
    let Ok(text) = std::fs::read_to_string(path) else {
        return true;
    };
    serde_json::from_str::<Value>(&text)
        .ok()
        .and_then(|v| v.get("enabled").and_then(Value::as_bool))
        .unwrap_or(true)
}

fn write_validation_sidecar(path: &Path, enabled: bool) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, format!("{{\n  \"enabled\": {enabled}\n}}\n"))?;
    std::fs::rename(&tmp, path)
}

fn user_json(user: &crate::security::User) -> Value {
    json!({"username": user.username, "roles": user.roles})
}

fn json_response(status: u16, value: &Value) -> ApiResponse {
    let mut body = serde_json::to_string_pretty(value).expect("value serializes");
    body.push('\n');
    ApiResponse::new(status)
        .header("Content-Type", "application/json")
        .body(body)
}

fn parse_json_body(body: &[u8]) -> Result<Value, ApiError> {
    serde_json::from_slice(body)
        .map_err(|e| ApiError::bad_request(format!("bad JSON body: {e}")))
}

fn require_str(body: &Value, key: &str) -> Result<String, ApiError> {
    body.get(key)
        .and_then(Value::as_str)
        .map(String::from)
        .ok_or_else(|| ApiError::bad_request(format!("missing field {key:?}")))
}

fn roles_from(body: &Value) -> Result<Vec<String>, ApiError> {
    match body.get("roles") {
        None => Ok(Vec::new()),
        Some(Value::Array(items)) => items
            .iter()
            .map(|v| {
                v.as_str()
                    .map(String::from)
                    .ok_or_else(|| ApiError::bad_request("roles must be strings"))
            })
            .collect(),
        Some(_) => Err(ApiError::bad_request("roles must be an array")),
    }
}

fn admin_error(e: SecurityError) -> ApiError {
    match e {
        SecurityError::DuplicateUser(_) => ApiError::status(409, e.to_string()),
        SecurityError::UnknownUser(_) => ApiError::not_found(e.to_string()),
        SecurityError::LastAdmin => ApiError::status(409, e.to_string()),
        SecurityError::EmptyUsername => ApiError::bad_request(e.to_string()),
        other => ApiError::internal(other.to_string()),
    }
}

// ---------------------------------------------------------------------------
// Error documents
// ---------------------------------------------------------------------------

/// An HTTP-level failure carrying everything needed for the error body.
#[derive(Debug)]
pub struct ApiError {
    pub status: u16,
    pub message: String,
    pub violations: Vec<String>,
    pub headers: Vec<(String, String)>,
}

impl ApiError {
    pub fn status(status: u16, message: impl Into<String>) -> ApiError {
        ApiError {
            status,
            message: message.into(),
            violations: Vec::new(),
            headers: Vec::new(),
        }
    }

    pub fn not_found(message: impl Into<String>) -> ApiError {
        ApiError::status(404, message)
    }

    pub fn bad_request(message: impl Into<String>) -> ApiError {
        ApiError::status(400, message)
    }

    pub fn internal(message: impl Into<String>) -> ApiError {
        ApiError::status(500, message)
    }

    pub fn unauthorized() -> ApiError {
        let mut e = ApiError::status(401, "authentication required");
        e.headers
            .push(("WWW-Authenticate".to_string(), WWW_AUTHENTICATE.to_string()));
        e
    }

    pub fn forbidden() -> ApiError {
        ApiError::status(403, "insufficient role for this resource")
    }

    pub fn method_not_allowed(allow: &str) -> ApiError {
        let mut e = ApiError::status(405, "method not allowed for this resource");
        e.headers.push(("Allow".to_string(), allow.to_string()));
        e
    }

    pub fn violations(names: Vec<String>) -> ApiError {
        ApiError {
            status: 400,
            message: "validation failed".to_string(),
            violations: names,
            headers: Vec::new(),
        }
    }

    pub fn into_response(self, format: WireFormat) -> ApiResponse {
        let body = match format {
            WireFormat::Json => {
                let mut text = serde_json::to_string_pretty(&json!({
                    "error": {
                        "status": self.status,
                        "message": self.message,
                        "violations": self.violations,
                    }
                }))
                .expect("error document serializes");
                text.push('\n');
                text
            }
            WireFormat::Xml => {
                let mut text = String::from("<error>\n");
                text.push_str(&format!("  <status>{}</status>\n", self.status));
                text.push_str(&format!(
                    "  <message>{}</message>\n",
                    xml_escape(&self.message)
                ));
                text.push_str("  <violations>\n");
                for v in &self.violations {
                    text.push_str(&format!("    <violation>{}</violation>\n", xml_escape(v)));
                }
                text.push_str("  </violations>\n</error>\n");
                text
            }
        };
        let mut response = ApiResponse::new(self.status)
            .header("Content-Type", format.media_type())
            .body(body);
        for (name, value) in self.headers {
            response = response.header(&name, value);
        }
        response
    }
}

fn xml_escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
