//! JSON storage format for model instances: the nested-containment analog
//! of the wire JSON. Containment children are inlined as single-key wrapper
//! objects (preserving slot order and dynamic type), cross-references are
//! stored as XMI fragment strings, so the file is self-contained.

use std::sync::Arc;

use serde_json::{json, Map, Value};

use crate::metamodel::{Feature, Metamodel};
use crate::repr::key_name;

use super::{AttrValue, Eid, Element, LoadError, ModelInstance, RefSlot, Scalar};

// ---------------------------------------------------------------------------
// Save
// ---------------------------------------------------------------------------

/// Serialize an instance as a canonical JSON storage document (2-space
/// indent, declaration-order features, slot-order children).
pub fn save_json(i: &ModelInstance) -> String {
    let value = if i.roots.len() == 1 {
        wrap_element(i, i.roots[0])
    } else {
        json!({ "roots": i.roots.iter().map(|r| wrap_element(i, *r)).collect::<Vec<_>>() })
    };
    let mut out = serde_json::to_string_pretty(&value).expect("instance serializes");
    out.push('\n');
    out
}

fn wrap_element(i: &ModelInstance, eid: Eid) -> Value {
    let e = i.element(eid).expect("serialized element exists");
    let mut body = Map::new();
    for feature in i.metamodel.effective_features(&e.class) {
        match feature {
            Feature::Attribute(a) => match e.attr(&a.name) {
                Some(AttrValue::One(s)) => {
                    body.insert(a.name.clone(), scalar_json(s));
                }
                Some(AttrValue::Many(vs)) => {
                    body.insert(
                        a.name.clone(),
                        Value::Array(vs.iter().map(scalar_json).collect()),
                    );
                }
                None => {}
            },
            Feature::Reference(r) => {
                let Some(slot) = e.slot(&r.name) else { continue };
                let eids = slot.eids();
                if eids.is_empty() {
                    continue;
                }
                let value = if r.containment {
                    if r.many() {
                        Value::Array(eids.iter().map(|c| wrap_element(i, *c)).collect())
                    } else {
                        wrap_element(i, eids[0])
                    }
                } else {
                    let frags: Vec<Value> = eids
                        .iter()
                        .map(|t| {
                            Value::String(
                                i.fragment_path(*t).expect("cross-reference target exists"),
                            )
                        })
                        .collect();
                    if r.many() {
                        Value::Array(frags)
                    } else {
                        frags.into_iter().next().unwrap()
                    }
                };
                body.insert(r.name.clone(), value);
            }
        }
    }
    let mut wrapper = Map::new();
    wrapper.insert(key_name(&e.class), Value::Object(body));
    Value::Object(wrapper)
}

fn scalar_json(s: &Scalar) -> Value {
    match s {
        Scalar::Str(v) => Value::String(v.clone()),
        Scalar::Bool(b) => Value::Bool(*b),
        Scalar::Int(n) => json!(n),
        Scalar::Float(x) => json!(x),
    }
}

// ---------------------------------------------------------------------------
// Load
// ---------------------------------------------------------------------------

pub fn load_json(
    text: &str,
    metamodel: Arc<Metamodel>,
    instance_id: &str,
) -> Result<ModelInstance, LoadError> {
    let value: Value =
        serde_json::from_str(text).map_err(|e| LoadError::Syntax(e.to_string()))?;
    let mut i = ModelInstance::new(instance_id, metamodel);
    let mut pending: Vec<(Eid, String, Vec<String>)> = Vec::new();

    let root_values: Vec<&Value> = match value.as_object().and_then(|o| o.get("roots")) {
        Some(Value::Array(roots)) => roots.iter().collect(),
        Some(other) => {
            return Err(LoadError::Syntax(format!(
                "\"roots\" must be an array, got {other}"
            )))
        }
        None => vec![&value],
    };
    if root_values.is_empty() {
        return Err(LoadError::NoRoot);
    }
    for rv in root_values {
        let eid = build_element(&mut i, rv, None, &mut pending)?;
        i.roots.push(eid);
    }

    for (eid, ref_name, frags) in pending {
        let mut targets = Vec::new();
        for frag in &frags {
            let target = i
                .resolve_fragment(frag)
                .ok_or_else(|| LoadError::DanglingFragment(frag.clone()))?;
            targets.push(target);
        }
        let e = i.element(eid).expect("pending element exists");
        let def = i
            .metamodel
            .reference(&e.class, &ref_name)
            .expect("pending reference is declared");
        let slot = if def.many() {
            RefSlot::Many(targets)
        } else {
            RefSlot::One(targets[0])
        };
        i.element_mut(eid).unwrap().refs.insert(ref_name, slot);
    }
    Ok(i)
}

/// `declared`: the declared target class when the wrapper comes from a
/// containment slot (used only for error context).
fn build_element(
    i: &mut ModelInstance,
    wrapped: &Value,
    declared: Option<&str>,
    pending: &mut Vec<(Eid, String, Vec<String>)>,
) -> Result<Eid, LoadError> {
    let obj = wrapped.as_object().ok_or_else(|| {
        LoadError::Syntax(format!("expected a wrapper object, got {wrapped}"))
    })?;
    if obj.len() != 1 {
        return Err(LoadError::Syntax(format!(
            "wrapper object must have exactly one key, got {}",
            obj.len()
        )));
    }
    let (key, body) = obj.iter().next().unwrap();
    let class_def = i
        .metamodel
        .class_for_key(key)
        .ok_or_else(|| LoadError::UnknownClass(format!("{key} (wrapper key)")))?;
    if class_def.is_abstract {
        return Err(LoadError::AbstractClass(class_def.name.clone()));
    }
    if let Some(declared) = declared {
        if !i
            .metamodel
            .is_subtype(&class_def.name, declared)
            .unwrap_or(false)
        {
            return Err(LoadError::UnknownClass(format!(
                "{} is not a subtype of declared target {declared}",
                class_def.name
            )));
        }
    }
    let class = class_def.name.clone();
    let body = body.as_object().ok_or_else(|| {
        LoadError::Syntax(format!("element body for {key} must be an object"))
    })?;
    let eid = i.alloc_eid();
    i.insert(Element::new(eid, class.clone()));

    for (field, value) in body {
        match i.metamodel.feature(&class, field) {
            Some(Feature::Attribute(a)) => {
                let datatype = a.datatype;
                let coerce = |v: &Value| -> Result<Scalar, LoadError> {
                    scalar_from_json(v, datatype).ok_or_else(|| LoadError::Datatype {
                        class: class.clone(),
                        attribute: field.clone(),
                        datatype,
                        value: v.to_string(),
                    })
                };
                let av = if a.many {
                    let arr = value.as_array().ok_or_else(|| LoadError::Arity {
                        class: class.clone(),
                        feature: field.clone(),
                        detail: "multi-valued attribute requires an array".into(),
                    })?;
                    AttrValue::Many(arr.iter().map(coerce).collect::<Result<_, _>>()?)
                } else {
                    AttrValue::One(coerce(value)?)
                };
                i.element_mut(eid).unwrap().attrs.insert(field.clone(), av);
            }
            Some(Feature::Reference(r)) => {
                let (containment, many, target) =
                    (r.containment, r.many(), r.target.clone());
                let name = r.name.clone();
                if containment {
                    let children: Vec<&Value> = if many {
                        value
                            .as_array()
                            .ok_or_else(|| LoadError::Arity {
                                class: class.clone(),
                                feature: field.clone(),
                                detail: "multi-valued containment requires an array".into(),
                            })?
                            .iter()
                            .collect()
                    } else {
                        vec![value]
                    };
                    let mut child_eids = Vec::new();
                    for c in children {
                        child_eids.push(build_element(i, c, Some(&target), pending)?);
                    }
                    let e = i.element_mut(eid).unwrap();
                    if many {
                        e.refs.insert(name, RefSlot::Many(child_eids));
                    } else if let Some(first) = child_eids.first() {
                        e.refs.insert(name, RefSlot::One(*first));
                    }
                } else {
                    let frags: Vec<String> = if many {
                        value
                            .as_array()
                            .ok_or_else(|| LoadError::Arity {
                                class: class.clone(),
                                feature: field.clone(),
                                detail: "multi-valued reference requires an array".into(),
                            })?
                            .iter()
                            .map(|v| {
                                v.as_str().map(String::from).ok_or_else(|| {
                                    LoadError::Syntax(format!(
                                        "cross-reference entries must be fragment strings, got {v}"
                                    ))
                                })
                            })
                            .collect::<Result<_, _>>()?
                    } else {
                        vec![value
                            .as_str()
                            .map(String::from)
                            .ok_or_else(|| {
                                LoadError::Syntax(format!(
                                    "cross-reference must be a fragment string, got {value}"
                                ))
                            })?]
                    };
                    if !frags.is_empty() {
                        pending.push((eid, name, frags));
                    }
                }
            }
            None => {
                return Err(LoadError::UnknownFeature {
                    class,
                    feature: field.clone(),
                })
            }
        }
    }
    Ok(eid)
}

fn scalar_from_json(v: &Value, datatype: crate::metamodel::DataType) -> Option<Scalar> {
    use crate::metamodel::DataType as D;
    match (datatype, v) {
        (D::String, Value::String(s)) => Some(Scalar::Str(s.clone())),
        (D::Boolean, Value::Bool(b)) => Some(Scalar::Bool(*b)),
        (D::Integer, Value::Number(n)) => n.as_i64().map(Scalar::Int),
        (D::Float, Value::Number(n)) => {
            let x = n.as_f64()?;
            x.is_finite().then_some(Scalar::Float(x))
        }
        // Floats also round-trip through strings (the wire mapping).
        (D::Float, Value::String(s)) => Scalar::parse(D::Float, s),
        _ => None,
    }
}
