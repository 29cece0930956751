//! Model instances: containment trees of typed elements, resource path
//! resolution, CRUD mutations and persistence in XMI and JSON storage
//! formats.

mod json;
mod ops;
mod path;
mod xmi;

pub use json::{load_json, save_json};
pub use ops::{
    apply_assignments, create_element, delete_element, AttrAssign, MutationError, Payload,
};
pub use path::{resolve_path, ResolveError, ResourcePath, Target};
pub use xmi::{load_xmi, save_xmi};

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::Arc;

use indexmap::IndexMap;

use crate::metamodel::{DataType, Metamodel};

/// Internal opaque element id, unique within one [`ModelInstance`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Eid(pub u64);

impl std::fmt::Display for Eid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "e{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Scalar {
    Str(String),
    Bool(bool),
    Int(i64),
    Float(f64),
}

impl Scalar {
    pub fn datatype(&self) -> DataType {
        match self {
            Scalar::Str(_) => DataType::String,
            Scalar::Bool(_) => DataType::Boolean,
            Scalar::Int(_) => DataType::Integer,
            Scalar::Float(_) => DataType::Float,
        }
    }

    /// Textual rendering used for identifiers, XMI attributes and the wire
    /// float-to-string mapping. Floats use the shortest round-trip decimal.
    pub fn render(&self) -> String {
        match self {
            Scalar::Str(s) => s.clone(),
            Scalar::Bool(b) => b.to_string(),
            Scalar::Int(n) => n.to_string(),
            Scalar::Float(x) => x.to_string(),
        }
    }

    /// Parse a textual value according to a declared datatype.
    pub fn parse(datatype: DataType, text: &str) -> Option<Scalar> {
        match datatype {
            DataType::String => Some(Scalar::Str(text.to_string())),
            DataType::Boolean => match text {
                "true" => Some(Scalar::Bool(true)),
                "false" => Some(Scalar::Bool(false)),
                _ => None,
            },
            DataType::Integer => text.parse().ok().map(Scalar::Int),
            DataType::Float => {
                let x: f64 = text.parse().ok()?;
                x.is_finite().then_some(Scalar::Float(x))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AttrValue {
    One(Scalar),
    Many(Vec<Scalar>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum RefSlot {
    One(Eid),
    Many(Vec<Eid>),
}

impl RefSlot {
    pub fn eids(&self) -> Vec<Eid> {
        match self {
            RefSlot::One(e) => vec![*e],
            RefSlot::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Element {
    pub eid: Eid,
    pub class: String,
    /// Set attribute values; unset attributes are absent.
    pub attrs: IndexMap<String, AttrValue>,
    /// Set reference slots; unset/empty slots are absent.
    pub refs: IndexMap<String, RefSlot>,
}

impl Element {
    pub fn new(eid: Eid, class: impl Into<String>) -> Element {
        Element {
            eid,
            class: class.into(),
            attrs: IndexMap::new(),
            refs: IndexMap::new(),
        }
    }

    pub fn attr(&self, name: &str) -> Option<&AttrValue> {
        self.attrs.get(name)
    }

    pub fn slot(&self, name: &str) -> Option<&RefSlot> {
        self.refs.get(name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StorageFormat {
    Xmi,
    Json,
}

impl StorageFormat {
    pub fn extension(&self) -> &'static str {
        match self {
            StorageFormat::Xmi => "xmi",
            StorageFormat::Json => "json",
        }
    }
}

#[derive(Debug, Clone)]
pub struct StorageBinding {
    pub path: PathBuf,
    pub format: StorageFormat,
}

/// Containment position of an element: owner, reference name, slot index.
#[derive(Debug, Clone, PartialEq)]
pub struct ParentLink {
    pub owner: Eid,
    pub reference: String,
    pub index: usize,
}

#[derive(Debug, Clone)]
pub struct ModelInstance {
    pub instance_id: String,
    pub metamodel: Arc<Metamodel>,
    pub roots: Vec<Eid>,
    elements: IndexMap<Eid, Element>,
    pub validation_active: bool,
    pub storage: Option<StorageBinding>,
    next_eid: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum InstanceError {
    #[error("unknown element {0}")]
    UnknownElement(Eid),
    #[error("element {eid} of class {class} has no usable identifier or containment path")]
    Unaddressable { eid: Eid, class: String },
}

impl ModelInstance {
    pub fn new(instance_id: impl Into<String>, metamodel: Arc<Metamodel>) -> ModelInstance {
        ModelInstance {
            instance_id: instance_id.into(),
            metamodel,
            roots: Vec::new(),
            elements: IndexMap::new(),
            validation_active: true,
            storage: None,
            next_eid: 0,
        }
    }

    pub fn alloc_eid(&mut self) -> Eid {
        let eid = Eid(self.next_eid);
        self.next_eid += 1;
        eid
    }

    pub fn insert(&mut self, element: Element) {
        self.elements.insert(element.eid, element);
    }

    pub fn remove(&mut self, eid: Eid) -> Option<Element> {
        self.elements.shift_remove(&eid)
    }

    pub fn element(&self, eid: Eid) -> Option<&Element> {
        self.elements.get(&eid)
    }

    pub fn element_mut(&mut self, eid: Eid) -> Option<&mut Element> {
        self.elements.get_mut(&eid)
    }

    pub fn elements(&self) -> impl Iterator<Item = &Element> {
        self.elements.values()
    }

    pub fn elements_mut(&mut self) -> impl Iterator<Item = &mut Element> {
        self.elements.values_mut()
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// Containment parent map over the whole instance.
    pub fn parent_map(&self) -> HashMap<Eid, ParentLink> {
        let mut map = HashMap::new();
        for e in self.elements.values() {
            for (ref_name, slot) in &e.refs {
                let Some(def) = self.metamodel.reference(&e.class, ref_name) else {
                    continue;
                };
                if !def.containment {
                    continue;
                }
                for (index, child) in slot.eids().into_iter().enumerate() {
                    map.insert(
                        child,
                        ParentLink {
                            owner: e.eid,
                            reference: ref_name.clone(),
                            index,
                        },
                    );
                }
            }
        }
        map
    }

    /// The identifier attribute value of an element, rendered as a string,
    /// if its class has an effective identifier and the attribute is set.
    pub fn identifier_value(&self, eid: Eid) -> Option<String> {
        let e = self.element(eid)?;
        let attr = self.metamodel.effective_identifier(&e.class)?;
        match e.attr(attr)? {
            AttrValue::One(s) => Some(s.render()),
            AttrValue::Many(_) => None,
        }
    }

    /// XMI fragment for an element: `#<id>` when the element has an
    /// identifier value, otherwise the positional containment path.
    pub fn fragment_path(&self, eid: Eid) -> Result<String, InstanceError> {
        if self.element(eid).is_none() {
            return Err(InstanceError::UnknownElement(eid));
        }
        if let Some(id) = self.identifier_value(eid) {
            return Ok(format!("#{id}"));
        }
        self.positional_fragment(eid)
    }

    /// Positional XMI fragment: `#/` for the first root, `#/k` for later
    /// roots, `#//@ref.i/...` for contained elements.
    pub fn positional_fragment(&self, eid: Eid) -> Result<String, InstanceError> {
        let steps = self.containment_steps(eid)?;
        let (root, steps) = steps;
        let root_part = match self.roots.iter().position(|r| *r == root) {
            Some(0) => "#/".to_string(),
            Some(k) => format!("#/{k}"),
            None => return Err(InstanceError::Unaddressable {
                eid,
                class: self.element(eid).map(|e| e.class.clone()).unwrap_or_default(),
            }),
        };
        let mut out = root_part;
        for (ref_name, index) in steps {
            match index {
                Some(i) => out.push_str(&format!("/@{ref_name}.{i}")),
                None => out.push_str(&format!("/@{ref_name}")),
            }
        }
        Ok(out)
    }

    /// Positional fragment of a collection slot: owner path plus `/@ref`.
    pub fn collection_fragment(&self, owner: Eid, reference: &str) -> Result<String, InstanceError> {
        let base = self.positional_fragment(owner)?;
        Ok(format!("{base}/@{reference}"))
    }

    /// Walk up the containment tree: returns the root and the downward step
    /// list `(reference, Some(index) for multi-valued | None)`.
    pub fn containment_steps(
        &self,
        eid: Eid,
    ) -> Result<(Eid, Vec<(String, Option<usize>)>), InstanceError> {
        if self.element(eid).is_none() {
            return Err(InstanceError::UnknownElement(eid));
        }
        let parents = self.parent_map();
        let mut steps = Vec::new();
        let mut cur = eid;
        while let Some(link) = parents.get(&cur) {
            let owner = self
                .element(link.owner)
                .ok_or(InstanceError::UnknownElement(link.owner))?;
            let def = self
                .metamodel
                .reference(&owner.class, &link.reference)
                .expect("parent link references a declared feature");
            let index = def.many().then_some(link.index);
            steps.push((link.reference.clone(), index));
            cur = link.owner;
        }
        steps.reverse();
        Ok((cur, steps))
    }

    /// Resolve an XMI fragment (`#<id>`, `#/`, `#/k`, `#//@ref.i/...`).
    pub fn resolve_fragment(&self, fragment: &str) -> Option<Eid> {
        let frag = fragment.strip_prefix('#')?;
        if let Some(rest) = frag.strip_prefix('/') {
            // Positional form.
            let mut parts = rest.split('/').peekable();
            let first = parts.peek().copied().unwrap_or("");
            let mut cur = if first.is_empty() || first.starts_with('@') {
                if first.is_empty() {
                    parts.next();
                }
                *self.roots.first()?
            } else {
                let k: usize = first.parse().ok()?;
                parts.next();
                *self.roots.get(k)?
            };
            for part in parts {
                if part.is_empty() {
                    continue;
                }
                let step = part.strip_prefix('@')?;
                let (ref_name, index) = match step.rsplit_once('.') {
                    Some((r, i)) if i.chars().all(|c| c.is_ascii_digit()) && !i.is_empty() => {
                        (r, Some(i.parse::<usize>().ok()?))
                    }
                    _ => (step, None),
                };
                let e = self.element(cur)?;
                let slot = e.slot(ref_name)?;
                cur = match (slot, index) {
                    (RefSlot::One(c), None) => *c,
                    (RefSlot::Many(v), Some(i)) => *v.get(i)?,
                    (RefSlot::Many(v), None) if v.len() == 1 => v[0],
                    _ => return None,
                };
            }
            Some(cur)
        } else {
            // Identifier form: first element (document order) whose
            // identifier renders to the fragment value.
            self.elements
                .values()
                .find(|e| self.identifier_value(e.eid).as_deref() == Some(frag))
                .map(|e| e.eid)
        }
    }

    /// Every eid reachable from `eid` through containment, including itself.
    pub fn containment_subtree(&self, eid: Eid) -> Vec<Eid> {
        let mut out = Vec::new();
        let mut stack = vec![eid];
        while let Some(cur) = stack.pop() {
            if out.contains(&cur) {
                continue;
            }
            out.push(cur);
            if let Some(e) = self.element(cur) {
                for (ref_name, slot) in &e.refs {
                    if let Some(def) = self.metamodel.reference(&e.class, ref_name) {
                        if def.containment {
                            stack.extend(slot.eids());
                        }
                    }
                }
            }
        }
        out
    }

    /// Structural well-formedness violations against the metamodel bounds
    /// and unique-identifier flags, reported as `(diagnostic, class, eid)`.
    pub fn structural_violations(&self) -> Vec<(String, String, Eid)> {
        let mut out = Vec::new();
        for e in self.elements.values() {
            for def in self.metamodel.effective_references(&e.class) {
                let count = e.slot(&def.name).map(|s| s.eids().len()).unwrap_or(0);
                let below = (count as u32) < def.lower;
                let above = def.upper.map(|u| count as u32 > u).unwrap_or(false);
                if below || above {
                    out.push((
                        format!("cardinality({})", def.name),
                        e.class.clone(),
                        e.eid,
                    ));
                }
            }
            // Unique-flagged identifier duplicated within one collection.
            for (ref_name, slot) in &e.refs {
                let Some(def) = self.metamodel.reference(&e.class, ref_name) else {
                    continue;
                };
                if !def.many() {
                    continue;
                }
                let mut seen = HashMap::new();
                for member in slot.eids() {
                    let Some(me) = self.element(member) else { continue };
                    let Some(id_attr) = self.metamodel.effective_identifier(&me.class) else {
                        continue;
                    };
                    let Some(attr_def) = self.metamodel.attribute(&me.class, id_attr) else {
                        continue;
                    };
                    if !attr_def.unique && !attr_def.identifier {
                        continue;
                    }
                    if let Some(id) = self.identifier_value(member) {
                        if let Some(prev) = seen.insert(id.clone(), member) {
                            if prev != member {
                                out.push((
                                    format!("unique({id_attr})"),
                                    me.class.clone(),
                                    member,
                                ));
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// Check the containment forest invariant: roots are parentless, every
    /// element is reachable from exactly one root, and no reference slot
    /// holds a dangling eid.
    pub fn check_forest(&self) -> Result<(), String> {
        let parents = self.parent_map();
        for r in &self.roots {
            if parents.contains_key(r) {
                return Err(format!("root {r} has a containment parent"));
            }
            if self.element(*r).is_none() {
                return Err(format!("root {r} does not exist"));
            }
        }
        let mut reached = std::collections::HashSet::new();
        for r in &self.roots {
            for eid in self.containment_subtree(*r) {
                if !reached.insert(eid) {
                    return Err(format!("element {eid} contained twice"));
                }
            }
        }
        for e in self.elements.values() {
            if !reached.contains(&e.eid) {
                return Err(format!("orphan element {} ({})", e.eid, e.class));
            }
            for (ref_name, slot) in &e.refs {
                for t in slot.eids() {
                    if self.element(t).is_none() {
                        return Err(format!(
                            "dangling eid {t} in {}.{ref_name}",
                            e.class
                        ));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Structural equality of two instances, ignoring internal eids: trees are
/// matched root by root in slot order, then cross-references are compared
/// through the resulting eid bijection.
pub fn structural_eq(a: &ModelInstance, b: &ModelInstance) -> bool {
    if a.roots.len() != b.roots.len() || a.len() != b.len() {
        return false;
    }
    let mut map: HashMap<Eid, Eid> = HashMap::new();
    fn pair(
        a: &ModelInstance,
        b: &ModelInstance,
        ea: Eid,
        eb: Eid,
        map: &mut HashMap<Eid, Eid>,
    ) -> bool {
        let (xa, xb) = match (a.element(ea), b.element(eb)) {
            (Some(x), Some(y)) => (x, y),
            _ => return false,
        };
        if xa.class != xb.class || xa.attrs != xb.attrs {
            return false;
        }
        map.insert(ea, eb);
        // Containment children must match pairwise in slot order.
        let refs_a: Vec<&String> = xa.refs.keys().collect();
        let refs_b: Vec<&String> = xb.refs.keys().collect();
        let mut keys: Vec<&String> = refs_a.clone();
        for k in refs_b {
            if !keys.contains(&k) {
                keys.push(k);
            }
        }
        for key in keys {
            let def = match a.metamodel.reference(&xa.class, key) {
                Some(d) => d,
                None => return false,
            };
            let va = xa.slot(key).map(|s| s.eids()).unwrap_or_default();
            let vb = xb.slot(key).map(|s| s.eids()).unwrap_or_default();
            if va.len() != vb.len() {
                return false;
            }
            if def.containment {
                for (ca, cb) in va.iter().zip(vb.iter()) {
                    if !pair(a, b, *ca, *cb, map) {
                        return false;
                    }
                }
            }
        }
        true
    }
    for (ra, rb) in a.roots.iter().zip(b.roots.iter()) {
        if !pair(a, b, *ra, *rb, &mut map) {
            return false;
        }
    }
    // Second pass: cross-references through the bijection.
    for ea in a.elements() {
        let eb = match map.get(&ea.eid).and_then(|e| b.element(*e)) {
            Some(x) => x,
            None => return false,
        };
        for (key, slot) in &ea.refs {
            let def = match a.metamodel.reference(&ea.class, key) {
                Some(d) => d,
                None => return false,
            };
            if def.containment {
                continue;
            }
            let va: Vec<Option<Eid>> = slot.eids().iter().map(|e| map.get(e).copied()).collect();
            let vb = eb.slot(key).map(|s| s.eids()).unwrap_or_default();
            if va.len() != vb.len() {
                return false;
            }
            for (ma, mb) in va.iter().zip(vb.iter()) {
                if *ma != Some(*mb) {
                    return false;
                }
            }
        }
    }
    true
}

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("unknown class: {0}")]
    UnknownClass(String),
    #[error("class {0} is abstract and cannot be instantiated")]
    AbstractClass(String),
    #[error("unknown feature {feature} on class {class}")]
    UnknownFeature { class: String, feature: String },
    #[error("dangling fragment reference: {0}")]
    DanglingFragment(String),
    #[error("value {value:?} does not match datatype {datatype} of {class}.{attribute}")]
    Datatype {
        class: String,
        attribute: String,
        datatype: DataType,
        value: String,
    },
    #[error("feature {class}.{feature} arity mismatch: {detail}")]
    Arity {
        class: String,
        feature: String,
        detail: String,
    },
    #[error("document has no root element")]
    NoRoot,
}

/// Load an instance from text in the given storage format.
pub fn load_instance(
    text: &str,
    format: StorageFormat,
    metamodel: Arc<Metamodel>,
    instance_id: &str,
) -> Result<ModelInstance, LoadError> {
    match format {
        StorageFormat::Xmi => load_xmi(text, metamodel, instance_id),
        StorageFormat::Json => load_json(text, metamodel, instance_id),
    }
}

/// Serialize an instance in the given storage format (canonical form).
pub fn save_to_string(i: &ModelInstance, format: StorageFormat) -> String {
    match format {
        StorageFormat::Xmi => save_xmi(i),
        StorageFormat::Json => save_json(i),
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SaveError {
    #[error("instance has no storage binding")]
    NoBinding,
    #[error("storage I/O failure: {0}")]
    Io(#[from] std::io::Error),
}

/// Persist the instance at its storage binding with an atomic
/// write-temp-then-rename replace.
pub fn save_instance(i: &ModelInstance) -> Result<(), SaveError> {
    let binding = i.storage.as_ref().ok_or(SaveError::NoBinding)?;
    let bytes = save_to_string(i, binding.format);
    let tmp = binding.path.with_extension("tmp");
    std::fs::write(&tmp, bytes.as_bytes())?;
    std::fs::rename(&tmp, &binding.path)?;
    Ok(())
}
