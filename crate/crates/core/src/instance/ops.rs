//! CRUD mutation primitives over a model instance. These mutate in place
//! and do not validate invariants; callers apply them to a working copy,
//! validate, persist, and only then commit (see the service layer).

use indexmap::IndexMap;

use super::{AttrValue, Eid, Element, ModelInstance, RefSlot};

#[derive(Debug, Clone, PartialEq)]
pub enum AttrAssign {
    Set(AttrValue),
    Unset,
}

/// A payload with cross-reference URIs already resolved to eids.
#[derive(Debug, Clone, Default)]
pub struct Payload {
    pub attrs: IndexMap<String, AttrAssign>,
    /// Replacement slot contents; an empty list unsets the slot.
    pub refs: IndexMap<String, Vec<Eid>>,
}

#[derive(Debug, thiserror::Error)]
pub enum MutationError {
    #[error("unknown element")]
    UnknownElement,
    #[error("class {class} is not a subtype of the declared target {expected}")]
    TypeMismatch { class: String, expected: String },
    #[error("class {0} is abstract and cannot be instantiated")]
    AbstractClass(String),
    #[error("unknown class: {0}")]
    UnknownClass(String),
    #[error("unknown field {field} on class {class}")]
    UnknownField { class: String, field: String },
    #[error("value for {class}.{field} does not match datatype {expected}")]
    DatatypeMismatch {
        class: String,
        field: String,
        expected: String,
    },
    #[error("containment reference {0} cannot be assigned through a payload")]
    ContainmentNotAssignable(String),
    #[error("reference {field} arity mismatch: {detail}")]
    ArityMismatch { field: String, detail: String },
    #[error("reference {0} is not a containment collection")]
    NotACollection(String),
    #[error("root elements cannot be deleted")]
    RootDeletion,
    #[error("dangling reference target in payload for {0}")]
    DanglingTarget(String),
}

/// Merge payload assignments into an existing element. Only the fields
/// present in the payload change; reference fields replace the whole slot.
pub fn apply_assignments(
    i: &mut ModelInstance,
    eid: Eid,
    payload: &Payload,
) -> Result<(), MutationError> {
    let class = i
        .element(eid)
        .ok_or(MutationError::UnknownElement)?
        .class
        .clone();
    // Validate everything before touching the element.
    for (field, assign) in &payload.attrs {
        let def = i.metamodel.attribute(&class, field).ok_or_else(|| {
            MutationError::UnknownField {
                class: class.clone(),
                field: field.clone(),
            }
        })?;
        if let AttrAssign::Set(value) = assign {
            let ok = match value {
                AttrValue::One(s) => !def.many && s.datatype() == def.datatype,
                AttrValue::Many(vs) => {
                    def.many && vs.iter().all(|s| s.datatype() == def.datatype)
                }
            };
            if !ok {
                return Err(MutationError::DatatypeMismatch {
                    class,
                    field: field.clone(),
                    expected: def.datatype.to_string(),
                });
            }
        }
    }
    for (field, targets) in &payload.refs {
        let def = i.metamodel.reference(&class, field).ok_or_else(|| {
            MutationError::UnknownField {
                class: class.clone(),
                field: field.clone(),
            }
        })?;
        if def.containment {
            return Err(MutationError::ContainmentNotAssignable(field.clone()));
        }
        if !def.many() && targets.len() > 1 {
            return Err(MutationError::ArityMismatch {
                field: field.clone(),
                detail: format!("{} values for a single-valued reference", targets.len()),
            });
        }
        for t in targets {
            if i.element(*t).is_none() {
                return Err(MutationError::DanglingTarget(field.clone()));
            }
        }
    }
    let many_refs: Vec<(String, bool)> = payload
        .refs
        .keys()
        .map(|f| (f.clone(), i.metamodel.reference(&class, f).unwrap().many()))
        .collect();
    let e = i.element_mut(eid).unwrap();
    for (field, assign) in &payload.attrs {
        match assign {
            AttrAssign::Set(v) => {
                e.attrs.insert(field.clone(), v.clone());
            }
            AttrAssign::Unset => {
                e.attrs.shift_remove(field);
            }
        }
    }
    for (field, many) in many_refs {
        let targets = &payload.refs[&field];
        if targets.is_empty() {
            e.refs.shift_remove(&field);
        } else if many {
            e.refs.insert(field, RefSlot::Many(targets.clone()));
        } else {
            e.refs.insert(field, RefSlot::One(targets[0]));
        }
    }
    Ok(())
}

/// Create a new element of `class` appended at the end of the containment
/// collection `reference` of `owner`.
pub fn create_element(
    i: &mut ModelInstance,
    owner: Eid,
    reference: &str,
    class: &str,
    payload: &Payload,
) -> Result<Eid, MutationError> {
    let owner_class = i
        .element(owner)
        .ok_or(MutationError::UnknownElement)?
        .class
        .clone();
    let def = i
        .metamodel
        .reference(&owner_class, reference)
        .ok_or_else(|| MutationError::UnknownField {
            class: owner_class.clone(),
            field: reference.to_string(),
        })?
        .clone();
    if !def.containment || !def.many() {
        return Err(MutationError::NotACollection(reference.to_string()));
    }
    let class_def = i
        .metamodel
        .class(class)
        .ok_or_else(|| MutationError::UnknownClass(class.to_string()))?;
    if class_def.is_abstract {
        return Err(MutationError::AbstractClass(class.to_string()));
    }
    let class_name = class_def.name.clone();
    if !i.metamodel.is_subtype(class, &def.target).unwrap_or(false) {
        return Err(MutationError::TypeMismatch {
            class: class.to_string(),
            expected: def.target.clone(),
        });
    }
    let eid = i.alloc_eid();
    i.insert(Element::new(eid, class_name));
    if let Err(e) = apply_assignments(i, eid, payload) {
        i.remove(eid);
        return Err(e);
    }
    let owner_el = i.element_mut(owner).unwrap();
    match owner_el
        .refs
        .entry(reference.to_string())
        .or_insert_with(|| RefSlot::Many(Vec::new()))
    {
        RefSlot::Many(v) => v.push(eid),
        RefSlot::One(_) => unreachable!("collection slot holds Many"),
    }
    Ok(eid)
}

/// Remove an element and its containment subtree; every cross-reference
/// slot holding a removed eid loses that entry. Returns the removed eids.
pub fn delete_element(i: &mut ModelInstance, eid: Eid) -> Result<Vec<Eid>, MutationError> {
    if i.element(eid).is_none() {
        return Err(MutationError::UnknownElement);
    }
    if i.roots.contains(&eid) {
        return Err(MutationError::RootDeletion);
    }
    let removed = i.containment_subtree(eid);
    let removed_set: std::collections::HashSet<Eid> = removed.iter().copied().collect();
    for e in removed.iter() {
        i.remove(*e);
    }
    for e in i.elements_mut() {
        let mut drop_keys = Vec::new();
        for (name, slot) in e.refs.iter_mut() {
            match slot {
                RefSlot::One(t) => {
                    if removed_set.contains(t) {
                        drop_keys.push(name.clone());
                    }
                }
                RefSlot::Many(v) => {
                    v.retain(|t| !removed_set.contains(t));
                    if v.is_empty() {
                        drop_keys.push(name.clone());
                    }
                }
            }
        }
        for k in drop_keys {
            e.refs.shift_remove(&k);
        }
    }
    Ok(removed)
}
