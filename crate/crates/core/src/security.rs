//! Authentication (HTTP Basic over a file-backed user store), role-based
//! authorization from class annotations, and user administration.
//!
//! Passwords are hashed with Argon2id; the KDF parameters are recorded
//! per entry so they can evolve without rehashing every user at once.
//! Every user holds the default role "user"; the role "admin" gates the
//! administrative surface and cannot be removed from the last admin.

use std::path::{Path, PathBuf};

use argon2::{Algorithm, Argon2, Params, Version};
use base64::Engine as _;
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::metamodel::ClassDef;

const BASE64: base64::engine::GeneralPurpose = base64::engine::general_purpose::STANDARD;

/// Challenge sent with every 401 response.
pub const WWW_AUTHENTICATE: &str = "Basic realm=\"emf-rest\"";

pub const DEFAULT_ROLE: &str = "user";
pub const ADMIN_ROLE: &str = "admin";

/// Argon2id cost parameters, stored per user entry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KdfParams {
    pub algorithm: String,
    pub m_cost: u32,
    pub t_cost: u32,
    pub p_cost: u32,
}

impl Default for KdfParams {
    fn default() -> KdfParams {
        KdfParams {
            algorithm: "argon2id".to_string(),
            m_cost: Params::DEFAULT_M_COST,
            t_cost: Params::DEFAULT_T_COST,
            p_cost: Params::DEFAULT_P_COST,
        }
    }
}

impl KdfParams {
    /// Low-cost parameters for test fixtures; never use for real stores.
    pub fn fast() -> KdfParams {
        KdfParams {
            algorithm: "argon2id".to_string(),
            m_cost: 1024,
            t_cost: 1,
            p_cost: 1,
        }
    }

    fn kdf(&self) -> Result<Argon2<'static>, SecurityError> {
        if self.algorithm != "argon2id" {
            return Err(SecurityError::Store(format!(
                "unsupported kdf algorithm {}",
                self.algorithm
            )));
        }
        let params = Params::new(self.m_cost, self.t_cost, self.p_cost, None)
            .map_err(|e| SecurityError::Store(format!("bad kdf parameters: {e}")))?;
        Ok(Argon2::new(Algorithm::Argon2id, Version::V0x13, params))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct User {
    pub username: String,
    pub hash: Vec<u8>,
    pub salt: Vec<u8>,
    pub kdf_params: KdfParams,
    /// Always contains "user".
    pub roles: Vec<String>,
}

impl User {
    pub fn has_role(&self, role: &str) -> bool {
        self.roles.iter().any(|r| r.eq_ignore_ascii_case(role))
    }

    pub fn is_admin(&self) -> bool {
        self.has_role(ADMIN_ROLE)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SecurityError {
    #[error("authentication failed")]
    Unauthorized,
    #[error("duplicate username {0}")]
    DuplicateUser(String),
    #[error("unknown username {0}")]
    UnknownUser(String),
    #[error("refusing to remove the last admin")]
    LastAdmin,
    #[error("username must not be empty")]
    EmptyUsername,
    #[error("user store error: {0}")]
    Store(String),
    #[error("failed to persist user store: {0}")]
    Io(#[from] std::io::Error),
}

/// On-disk entry shape: a JSON array of these.
#[derive(Serialize, Deserialize)]
struct UserEntry {
    username: String,
    hash: String,
    salt: String,
    kdf_params: KdfParams,
    roles: Vec<String>,
}

/// File-backed username → User table. All mutations persist atomically
/// (write to a temporary file, then rename) before returning.
#[derive(Debug, Clone)]
pub struct UserStore {
    users: IndexMap<String, User>,
    path: Option<PathBuf>,
    /// Parameters applied to newly set passwords.
    pub new_password_params: KdfParams,
}

impl UserStore {
    pub fn new(path: Option<PathBuf>) -> UserStore {
        UserStore {
            users: IndexMap::new(),
            path,
            new_password_params: KdfParams::default(),
        }
    }

    pub fn load(path: &Path) -> Result<UserStore, SecurityError> {
        let text = std::fs::read_to_string(path)?;
        let entries: Vec<UserEntry> = serde_json::from_str(&text)
            .map_err(|e| SecurityError::Store(format!("{}: {e}", path.display())))?;
        let mut users = IndexMap::new();
        for entry in entries {
            if entry.username.is_empty() {
                return Err(SecurityError::EmptyUsername);
            }
            if !entry
                .roles
                .iter()
                .any(|r| r.eq_ignore_ascii_case(DEFAULT_ROLE))
            {
                return Err(SecurityError::Store(format!(
                    "user {} lacks the default role {DEFAULT_ROLE}",
                    entry.username
                )));
            }
            let user = User {
                username: entry.username.clone(),
                hash: BASE64
                    .decode(&entry.hash)
                    .map_err(|e| SecurityError::Store(format!("bad hash encoding: {e}")))?,
                salt: BASE64
                    .decode(&entry.salt)
                    .map_err(|e| SecurityError::Store(format!("bad salt encoding: {e}")))?,
                kdf_params: entry.kdf_params,
                roles: entry.roles,
            };
            if users.insert(entry.username.clone(), user).is_some() {
                return Err(SecurityError::DuplicateUser(entry.username));
            }
        }
        Ok(UserStore {
            users,
            path: Some(path.to_path_buf()),
            new_password_params: KdfParams::default(),
        })
    }

    pub fn to_string_pretty(&self) -> String {
        let entries: Vec<UserEntry> = self
            .users
            .values()
            .map(|u| UserEntry {
                username: u.username.clone(),
                hash: BASE64.encode(&u.hash),
                salt: BASE64.encode(&u.salt),
                kdf_params: u.kdf_params.clone(),
                roles: u.roles.clone(),
            })
            .collect();
        let mut out = serde_json::to_string_pretty(&entries).expect("store serializes");
        out.push('\n');
        out
    }

    fn persist(&self) -> Result<(), SecurityError> {
        let Some(path) = &self.path else { return Ok(()) };
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, self.to_string_pretty())?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }

    pub fn user(&self, username: &str) -> Option<&User> {
        self.users.get(username)
    }

    pub fn users(&self) -> impl Iterator<Item = &User> {
        self.users.values()
    }

    fn admin_count(&self) -> usize {
        self.users.values().filter(|u| u.is_admin()).count()
    }

    fn hash_password(
        &self,
        password: &str,
        salt: &[u8],
        params: &KdfParams,
    ) -> Result<Vec<u8>, SecurityError> {
        let kdf = params.kdf()?;
        let mut out = vec![0u8; 32];
        kdf.hash_password_into(password.as_bytes(), salt, &mut out)
            .map_err(|e| SecurityError::Store(format!("kdf failure: {e}")))?;
        Ok(out)
    }

    /// Decode a Basic Authorization header and verify the credentials.
    /// Unknown users still run the KDF against a dummy salt so the timing
    /// envelope matches the wrong-password case.
    pub fn authenticate(&self, authorization: Option<&str>) -> Result<&User, SecurityError> {
        let (username, password) = authorization
            .and_then(parse_basic)
            .ok_or(SecurityError::Unauthorized)?;
        match self.users.get(&username) {
            Some(user) => {
                let candidate =
                    self.hash_password(&password, &user.salt, &user.kdf_params)?;
                if constant_time_eq(&candidate, &user.hash) {
                    Ok(user)
                } else {
                    Err(SecurityError::Unauthorized)
                }
            }
            None => {
                let dummy_salt = [0u8; 16];
                let _ = self.hash_password(&password, &dummy_salt, &self.new_password_params);
                Err(SecurityError::Unauthorized)
            }
        }
    }

    /// Add a user with roles {user} ∪ `roles`. The salt is caller-provided
    /// so stores are reproducible in fixtures; use random bytes in anger.
    pub fn add_user(
        &mut self,
        username: &str,
        password: &str,
        roles: &[String],
        salt: Vec<u8>,
    ) -> Result<(), SecurityError> {
        if username.is_empty() {
            return Err(SecurityError::EmptyUsername);
        }
        if self.users.contains_key(username) {
            return Err(SecurityError::DuplicateUser(username.to_string()));
        }
        let params = self.new_password_params.clone();
        let hash = self.hash_password(password, &salt, &params)?;
        self.users.insert(
            username.to_string(),
            User {
                username: username.to_string(),
                hash,
                salt,
                kdf_params: params,
                roles: normalize_roles(roles),
            },
        );
        self.persist()
    }

    pub fn remove_user(&mut self, username: &str) -> Result<(), SecurityError> {
        let user = self
            .users
            .get(username)
            .ok_or_else(|| SecurityError::UnknownUser(username.to_string()))?;
        if user.is_admin() && self.admin_count() == 1 {
            return Err(SecurityError::LastAdmin);
        }
        self.users.shift_remove(username);
        self.persist()
    }

    /// Replace a user's roles with {user} ∪ `roles`. Stripping admin from
    /// the last admin is refused.
    pub fn set_roles(&mut self, username: &str, roles: &[String]) -> Result<(), SecurityError> {
        let new_roles = normalize_roles(roles);
        let user = self
            .users
            .get(username)
            .ok_or_else(|| SecurityError::UnknownUser(username.to_string()))?;
        let drops_admin = user.is_admin()
            && !new_roles.iter().any(|r| r.eq_ignore_ascii_case(ADMIN_ROLE));
        if drops_admin && self.admin_count() == 1 {
            return Err(SecurityError::LastAdmin);
        }
        self.users.get_mut(username).unwrap().roles = new_roles;
        self.persist()
    }

    pub fn set_password(
        &mut self,
        username: &str,
        password: &str,
        salt: Vec<u8>,
    ) -> Result<(), SecurityError> {
        if !self.users.contains_key(username) {
            return Err(SecurityError::UnknownUser(username.to_string()));
        }
        let params = self.new_password_params.clone();
        let hash = self.hash_password(password, &salt, &params)?;
        let user = self.users.get_mut(username).unwrap();
        user.hash = hash;
        user.salt = salt;
        user.kdf_params = params;
        self.persist()
    }
}

/// Ensure the default role is present, preserving order and deduplicating
/// case-insensitively.
fn normalize_roles(roles: &[String]) -> Vec<String> {
    let mut out = vec![DEFAULT_ROLE.to_string()];
    for role in roles {
        if !out.iter().any(|r| r.eq_ignore_ascii_case(role)) {
            out.push(role.clone());
        }
    }
    out
}

/// Decode `Basic <base64(user:pass)>`.
fn parse_basic(header: &str) -> Option<(String, String)> {
    let encoded = header.strip_prefix("Basic ").or_else(|| header.strip_prefix("basic "))?;
    let decoded = BASE64.decode(encoded.trim()).ok()?;
    let text = String::from_utf8(decoded).ok()?;
    let (user, pass) = text.split_once(':')?;
    Some((user.to_string(), pass.to_string()))
}

fn constant_time_eq(a: &[u8], b: &[u8]) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let mut diff = 0u8;
    for (x, y) in a.iter().zip(b) {
        diff |= x ^ y;
    }
    diff == 0
}

/// Class-level authorization: a class without an "Ecore/roles" annotation
/// permits every authenticated user; otherwise the user needs one of the
/// annotated roles (case-insensitive).
pub fn authorize(user: &User, class: &ClassDef) -> bool {
    let required = &class.annotations.roles;
    if required.is_empty() {
        return true;
    }
    required.iter().any(|role| user.has_role(role))
}
