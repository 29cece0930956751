//! Resource path resolution: navigating the containment structure of an
//! instance by reference names, with by-id and by-index selection on
//! multi-valued references.

use super::{Eid, ModelInstance, RefSlot};

/// Parsed form of a request URL below `/rest/`.
///
/// `segments` alternate reference names and (after a multi-valued
/// reference) identifier values; which is which is decided against the
/// metamodel during resolution. The `index` query parameter, when present,
/// selects a position in a terminal collection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResourcePath {
    pub model_id: String,
    pub instance_id: String,
    pub segments: Vec<String>,
    pub index: Option<usize>,
}

/// A resolved resource: one element, or a collection view over a
/// multi-valued reference slot.
#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    Element(Eid),
    Collection {
        owner: Eid,
        reference: String,
        declared_target: String,
        containment: bool,
        members: Vec<Eid>,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum ResolveError {
    #[error("not found: {0}")]
    NotFound(String),
    #[error("bad path: {0}")]
    BadPath(String),
}

/// Resolve a path against an instance, starting from its first root.
pub fn resolve_path(i: &ModelInstance, p: &ResourcePath) -> Result<Target, ResolveError> {
    let root = *i
        .roots
        .first()
        .ok_or_else(|| ResolveError::NotFound("instance has no root element".into()))?;
    let mut target = Target::Element(root);
    for segment in &p.segments {
        target = step(i, target, segment)?;
    }
    match p.index {
        None => Ok(target),
        Some(idx) => match target {
            Target::Collection { ref members, .. } => {
                let eid = members.get(idx).copied().ok_or_else(|| {
                    ResolveError::NotFound(format!("index {idx} out of range"))
                })?;
                Ok(Target::Element(eid))
            }
            Target::Element(_) => Err(ResolveError::BadPath(
                "index selector applied to a single-valued result".into(),
            )),
        },
    }
}

fn step(i: &ModelInstance, target: Target, segment: &str) -> Result<Target, ResolveError> {
    match target {
        Target::Element(eid) => {
            let e = i
                .element(eid)
                .ok_or_else(|| ResolveError::NotFound("element vanished".into()))?;
            let def = i.metamodel.reference(&e.class, segment).ok_or_else(|| {
                ResolveError::NotFound(format!(
                    "unknown reference segment {segment:?} on class {}",
                    e.class
                ))
            })?;
            if def.many() {
                let members = match e.slot(segment) {
                    Some(RefSlot::Many(v)) => v.clone(),
                    Some(RefSlot::One(x)) => vec![*x],
                    None => Vec::new(),
                };
                Ok(Target::Collection {
                    owner: eid,
                    reference: segment.to_string(),
                    declared_target: def.target.clone(),
                    containment: def.containment,
                    members,
                })
            } else {
                match e.slot(segment) {
                    Some(RefSlot::One(child)) => Ok(Target::Element(*child)),
                    Some(RefSlot::Many(v)) if v.len() == 1 => Ok(Target::Element(v[0])),
                    _ => Err(ResolveError::NotFound(format!(
                        "reference {segment} is not set"
                    ))),
                }
            }
        }
        Target::Collection { members, .. } => {
            // A segment after a multi-valued reference is an identifier.
            for m in members {
                if i.identifier_value(m).as_deref() == Some(segment) {
                    return Ok(Target::Element(m));
                }
            }
            Err(ResolveError::NotFound(format!(
                "no element with id {segment:?} in collection"
            )))
        }
    }
}
