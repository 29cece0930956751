//! Metamodel definitions: classes, attributes, references and the structural
//! queries (inheritance, effective identifier) the rest of the server is
//! driven by.
//!
//! Metamodels are immutable after construction and safe to share across
//! request handlers.

use std::collections::{HashMap, HashSet};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::repr::key_name;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DataType {
    String,
    Boolean,
    Integer,
    Float,
}

impl DataType {
    pub fn as_str(&self) -> &'static str {
        match self {
            DataType::String => "string",
            DataType::Boolean => "boolean",
            DataType::Integer => "integer",
            DataType::Float => "float",
        }
    }

    pub fn parse(s: &str) -> Option<DataType> {
        match s {
            "string" => Some(DataType::String),
            "boolean" => Some(DataType::Boolean),
            "integer" => Some(DataType::Integer),
            "float" => Some(DataType::Float),
            _ => None,
        }
    }
}

impl std::fmt::Display for DataType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttributeDef {
    pub name: String,
    pub datatype: DataType,
    pub many: bool,
    pub identifier: bool,
    pub unique: bool,
}

/// Upper bound of a reference: `None` means unbounded (`-1` in the document
/// formats).
pub type UpperBound = Option<u32>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReferenceDef {
    pub name: String,
    pub target: String,
    pub containment: bool,
    pub lower: u32,
    pub upper: UpperBound,
    pub opposite: Option<String>,
}

impl ReferenceDef {
    /// A reference is multi-valued when its upper bound is unbounded or > 1.
    pub fn many(&self) -> bool {
        match self.upper {
            None => true,
            Some(u) => u > 1,
        }
    }
}

/// Class annotations. Recognized sources are `OCL` (invariant name →
/// constraint text), `Ecore/constraints` (active invariant names) and
/// `Ecore/roles` (role names granting access to the class).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AnnotationSet {
    pub ocl: IndexMap<String, String>,
    pub active_constraints: Vec<String>,
    pub roles: Vec<String>,
}

impl AnnotationSet {
    pub fn is_empty(&self) -> bool {
        self.ocl.is_empty() && self.active_constraints.is_empty() && self.roles.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassDef {
    pub name: String,
    pub is_abstract: bool,
    pub supertypes: Vec<String>,
    pub attributes: Vec<AttributeDef>,
    pub references: Vec<ReferenceDef>,
    pub annotations: AnnotationSet,
}

/// Either kind of structural feature.
#[derive(Debug, Clone, Copy)]
pub enum Feature<'a> {
    Attribute(&'a AttributeDef),
    Reference(&'a ReferenceDef),
}

#[derive(Debug, thiserror::Error)]
pub enum MetamodelError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("duplicate class: {0}")]
    DuplicateClass(String),
    #[error("unknown supertype: {class} extends {supertype}")]
    UnknownSupertype { class: String, supertype: String },
    #[error("supertype cycle involving class {0}")]
    SupertypeCycle(String),
    #[error("unknown reference target: {class}.{reference} -> {target}")]
    UnknownTarget {
        class: String,
        reference: String,
        target: String,
    },
    #[error("opposite references not reciprocal: {class}.{reference} <-> {opposite}")]
    NonReciprocalOpposite {
        class: String,
        reference: String,
        opposite: String,
    },
    #[error("containment reference {class}.{reference} has a containment opposite")]
    ContainmentOpposite { class: String, reference: String },
    #[error("duplicate feature name in class {class}: {feature}")]
    DuplicateFeature { class: String, feature: String },
    #[error("identifier attribute {class}.{attribute} must be a single-valued string or integer")]
    BadIdentifierAttribute { class: String, attribute: String },
    #[error("reference {class}.{reference} has lower bound {lower} > upper bound {upper}")]
    BadBounds {
        class: String,
        reference: String,
        lower: u32,
        upper: u32,
    },
    #[error("upper bound of {class}.{reference} must be at least 1")]
    ZeroUpperBound { class: String, reference: String },
    #[error("active constraint {name} on class {class} has no OCL annotation entry")]
    UnknownConstraintName { class: String, name: String },
    #[error("wrapper key collision: classes {first} and {second} both map to key \"{key}\"")]
    KeyNameCollision {
        key: String,
        first: String,
        second: String,
    },
    #[error("unknown class: {0}")]
    UnknownClass(String),
    #[error("invalid datatype: {0}")]
    InvalidDatatype(String),
}

#[derive(Debug)]
pub struct Metamodel {
    model_id: String,
    classes: Vec<ClassDef>,
    index: HashMap<String, usize>,
    /// Wrapper key (lowerCamelCase) -> class name.
    wrapper_keys: HashMap<String, String>,
}

impl Metamodel {
    pub fn new(model_id: String, classes: Vec<ClassDef>) -> Result<Metamodel, MetamodelError> {
        let mut index = HashMap::new();
        for (i, c) in classes.iter().enumerate() {
            if index.insert(c.name.clone(), i).is_some() {
                return Err(MetamodelError::DuplicateClass(c.name.clone()));
            }
        }
        let mut wrapper_keys = HashMap::new();
        for c in &classes {
            let key = key_name(&c.name);
            if let Some(prev) = wrapper_keys.insert(key.clone(), c.name.clone()) {
                return Err(MetamodelError::KeyNameCollision {
                    key,
                    first: prev,
                    second: c.name.clone(),
                });
            }
        }
        let m = Metamodel {
            model_id,
            classes,
            index,
            wrapper_keys,
        };
        m.validate()?;
        Ok(m)
    }

    fn validate(&self) -> Result<(), MetamodelError> {
        // Supertype existence and acyclicity.
        for c in &self.classes {
            for s in &c.supertypes {
                if !self.index.contains_key(s) {
                    return Err(MetamodelError::UnknownSupertype {
                        class: c.name.clone(),
                        supertype: s.clone(),
                    });
                }
            }
        }
        self.check_acyclic()?;
        for c in &self.classes {
            // Feature uniqueness across the class including inherited features.
            let mut seen = HashSet::new();
            for anc in self.linearization(&c.name) {
                for a in &anc.attributes {
                    if !seen.insert(a.name.clone()) {
                        return Err(MetamodelError::DuplicateFeature {
                            class: c.name.clone(),
                            feature: a.name.clone(),
                        });
                    }
                }
                for r in &anc.references {
                    if !seen.insert(r.name.clone()) {
                        return Err(MetamodelError::DuplicateFeature {
                            class: c.name.clone(),
                            feature: r.name.clone(),
                        });
                    }
                }
            }
            for a in &c.attributes {
                if a.identifier
                    && (a.many
                        || !matches!(a.datatype, DataType::String | DataType::Integer))
                {
                    return Err(MetamodelError::BadIdentifierAttribute {
                        class: c.name.clone(),
                        attribute: a.name.clone(),
                    });
                }
            }
            for r in &c.references {
                if !self.index.contains_key(&r.target) {
                    return Err(MetamodelError::UnknownTarget {
                        class: c.name.clone(),
                        reference: r.name.clone(),
                        target: r.target.clone(),
                    });
                }
                if let Some(u) = r.upper {
                    if u == 0 {
                        return Err(MetamodelError::ZeroUpperBound {
                            class: c.name.clone(),
                            reference: r.name.clone(),
                        });
                    }
                    if r.lower > u {
                        return Err(MetamodelError::BadBounds {
                            class: c.name.clone(),
                            reference: r.name.clone(),
                            lower: r.lower,
                            upper: u,
                        });
                    }
                }
                if let Some(opp) = &r.opposite {
                    let target = &self.classes[self.index[&r.target]];
                    let back = self
                        .linearization(&target.name)
                        .into_iter()
                        .flat_map(|cd| cd.references.iter())
                        .find(|o| &o.name == opp);
                    let ok = match back {
                        Some(o) => o.opposite.as_deref() == Some(&r.name) && o.target == c.name,
                        None => false,
                    };
                    if !ok {
                        return Err(MetamodelError::NonReciprocalOpposite {
                            class: c.name.clone(),
                            reference: r.name.clone(),
                            opposite: opp.clone(),
                        });
                    }
                    if r.containment {
                        if let Some(o) = back {
                            if o.containment {
                                return Err(MetamodelError::ContainmentOpposite {
                                    class: c.name.clone(),
                                    reference: r.name.clone(),
                                });
                            }
                        }
                    }
                }
            }
            for name in &c.annotations.active_constraints {
                if !c.annotations.ocl.contains_key(name) {
                    return Err(MetamodelError::UnknownConstraintName {
                        class: c.name.clone(),
                        name: name.clone(),
                    });
                }
            }
        }
        Ok(())
    }

    fn check_acyclic(&self) -> Result<(), MetamodelError> {
        // 0 = white, 1 = on stack, 2 = done
        let mut color = vec![0u8; self.classes.len()];
        fn visit(
            m: &Metamodel,
            i: usize,
            color: &mut Vec<u8>,
        ) -> Result<(), MetamodelError> {
            if color[i] == 1 {
                return Err(MetamodelError::SupertypeCycle(m.classes[i].name.clone()));
            }
            if color[i] == 2 {
                return Ok(());
            }
            color[i] = 1;
            let supers: Vec<usize> = m.classes[i]
                .supertypes
                .iter()
                .map(|s| m.index[s])
                .collect();
            for s in supers {
                visit(m, s, color)?;
            }
            color[i] = 2;
            Ok(())
        }
        for i in 0..self.classes.len() {
            visit(self, i, &mut color)?;
        }
        Ok(())
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn classes(&self) -> &[ClassDef] {
        &self.classes
    }

    pub fn class(&self, name: &str) -> Option<&ClassDef> {
        self.index.get(name).map(|&i| &self.classes[i])
    }

    pub fn class_required(&self, name: &str) -> Result<&ClassDef, MetamodelError> {
        self.class(name)
            .ok_or_else(|| MetamodelError::UnknownClass(name.to_string()))
    }

    /// Resolve a wrapper key (lowerCamelCase) back to its class.
    pub fn class_for_key(&self, key: &str) -> Option<&ClassDef> {
        self.wrapper_keys.get(key).and_then(|n| self.class(n))
    }

    /// Supertype linearization: ancestors before descendants, declaration
    /// order among siblings, each class once.
    pub fn linearization(&self, name: &str) -> Vec<&ClassDef> {
        let mut out = Vec::new();
        let mut seen = HashSet::new();
        self.linearize_into(name, &mut out, &mut seen);
        out
    }

    fn linearize_into<'a>(
        &'a self,
        name: &str,
        out: &mut Vec<&'a ClassDef>,
        seen: &mut HashSet<String>,
    ) {
        let Some(c) = self.class(name) else { return };
        if !seen.insert(c.name.clone()) {
            return;
        }
        // Insert after all ancestors: recurse first.
        let mut tmp_seen = std::mem::take(seen);
        for s in &c.supertypes {
            self.linearize_into(s, out, &mut tmp_seen);
        }
        *seen = tmp_seen;
        // Recursion may have re-added us via a (rejected) cycle; guard anyway.
        if !out.iter().any(|d| d.name == c.name) {
            out.push(c);
        }
    }

    /// True iff `ancestor` is reachable from `child` via zero or more
    /// supertype edges.
    pub fn is_subtype(&self, child: &str, ancestor: &str) -> Result<bool, MetamodelError> {
        self.class_required(child)?;
        self.class_required(ancestor)?;
        Ok(self.linearization(child).iter().any(|c| c.name == ancestor))
    }

    /// All non-abstract classes that are subtypes of `name`, in declaration
    /// order.
    pub fn concrete_subtypes(&self, name: &str) -> Result<Vec<&ClassDef>, MetamodelError> {
        self.class_required(name)?;
        Ok(self
            .classes
            .iter()
            .filter(|c| {
                !c.is_abstract && self.is_subtype(&c.name, name).unwrap_or(false)
            })
            .collect())
    }

    /// Effective features of a class: inherited first (ancestor declaration
    /// order), attributes before references within each declaring class.
    pub fn effective_features(&self, name: &str) -> Vec<Feature<'_>> {
        let mut out = Vec::new();
        for c in self.linearization(name) {
            for a in &c.attributes {
                out.push(Feature::Attribute(a));
            }
            for r in &c.references {
                out.push(Feature::Reference(r));
            }
        }
        out
    }

    pub fn effective_attributes(&self, name: &str) -> Vec<&AttributeDef> {
        self.linearization(name)
            .into_iter()
            .flat_map(|c| c.attributes.iter())
            .collect()
    }

    pub fn effective_references(&self, name: &str) -> Vec<&ReferenceDef> {
        self.linearization(name)
            .into_iter()
            .flat_map(|c| c.references.iter())
            .collect()
    }

    /// Look up an attribute of `class` including inherited ones.
    pub fn attribute(&self, class: &str, attr: &str) -> Option<&AttributeDef> {
        self.linearization(class)
            .into_iter()
            .flat_map(|c| c.attributes.iter())
            .find(|a| a.name == attr)
    }

    /// Look up a reference of `class` including inherited ones.
    pub fn reference(&self, class: &str, reference: &str) -> Option<&ReferenceDef> {
        self.linearization(class)
            .into_iter()
            .flat_map(|c| c.references.iter())
            .find(|r| r.name == reference)
    }

    pub fn feature(&self, class: &str, name: &str) -> Option<Feature<'_>> {
        if let Some(a) = self.attribute(class, name) {
            return Some(Feature::Attribute(a));
        }
        self.reference(class, name).map(Feature::Reference)
    }

    /// The attribute used to address elements of a class by value.
    ///
    /// Precedence: explicit identifier flag, then an attribute named `id`,
    /// then `name`, then the first attribute with the unique flag. Each step
    /// searches the class itself and then its supertypes, nearest first.
    pub fn effective_identifier(&self, class: &str) -> Option<&str> {
        let mut nearest_first = self.linearization(class);
        nearest_first.reverse();
        let attrs: Vec<&AttributeDef> = nearest_first
            .iter()
            .flat_map(|c| c.attributes.iter())
            .collect();
        if let Some(a) = attrs.iter().find(|a| a.identifier) {
            return Some(&a.name);
        }
        if let Some(a) = attrs.iter().find(|a| a.name == "id") {
            return Some(&a.name);
        }
        if let Some(a) = attrs.iter().find(|a| a.name == "name") {
            return Some(&a.name);
        }
        attrs.iter().find(|a| a.unique).map(|a| a.name.as_str())
    }
}

impl PartialEq for Metamodel {
    fn eq(&self, other: &Self) -> bool {
        self.model_id == other.model_id && self.classes == other.classes
    }
}

// ---------------------------------------------------------------------------
// Canonical JSON document format
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct MetamodelDoc {
    model: String,
    #[serde(default)]
    classes: Vec<ClassDoc>,
}

#[derive(Serialize, Deserialize)]
struct ClassDoc {
    name: String,
    #[serde(default, rename = "abstract", skip_serializing_if = "is_false")]
    is_abstract: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    supertypes: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    attributes: Vec<AttributeDoc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    references: Vec<ReferenceDoc>,
    #[serde(default, skip_serializing_if = "AnnotationsDoc::is_empty")]
    annotations: AnnotationsDoc,
}

#[derive(Serialize, Deserialize)]
struct AttributeDoc {
    name: String,
    #[serde(rename = "type")]
    datatype: String,
    #[serde(default, skip_serializing_if = "is_false")]
    many: bool,
    #[serde(default, skip_serializing_if = "is_false")]
    identifier: bool,
    #[serde(default, skip_serializing_if = "is_false")]
    unique: bool,
}

#[derive(Serialize, Deserialize)]
struct ReferenceDoc {
    name: String,
    target: String,
    #[serde(default, skip_serializing_if = "is_false")]
    containment: bool,
    #[serde(default, skip_serializing_if = "is_zero")]
    lower: u32,
    /// `-1` means unbounded; absent means 1.
    #[serde(default = "one", skip_serializing_if = "is_one")]
    upper: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    opposite: Option<String>,
}

#[derive(Serialize, Deserialize, Default)]
struct AnnotationsDoc {
    #[serde(rename = "OCL", default, skip_serializing_if = "IndexMap::is_empty")]
    ocl: IndexMap<String, String>,
    #[serde(
        rename = "Ecore/constraints",
        default,
        skip_serializing_if = "Vec::is_empty"
    )]
    constraints: Vec<String>,
    #[serde(rename = "Ecore/roles", default, skip_serializing_if = "Vec::is_empty")]
    roles: Vec<String>,
}

impl AnnotationsDoc {
    fn is_empty(&self) -> bool {
        self.ocl.is_empty() && self.constraints.is_empty() && self.roles.is_empty()
    }
}

fn is_false(b: &bool) -> bool {
    !*b
}
fn is_zero(n: &u32) -> bool {
    *n == 0
}
fn one() -> i64 {
    1
}
fn is_one(n: &i64) -> bool {
    *n == 1
}

/// Parse the canonical metamodel JSON document.
pub fn parse_metamodel(text: &str) -> Result<Metamodel, MetamodelError> {
    let doc: MetamodelDoc =
        serde_json::from_str(text).map_err(|e| MetamodelError::Syntax {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
    let mut classes = Vec::with_capacity(doc.classes.len());
    for c in doc.classes {
        let mut attributes = Vec::with_capacity(c.attributes.len());
        for a in c.attributes {
            let datatype = DataType::parse(&a.datatype)
                .ok_or_else(|| MetamodelError::InvalidDatatype(a.datatype.clone()))?;
            attributes.push(AttributeDef {
                name: a.name,
                datatype,
                many: a.many,
                identifier: a.identifier,
                unique: a.unique,
            });
        }
        let mut references = Vec::with_capacity(c.references.len());
        for r in c.references {
            let upper = if r.upper < 0 { None } else { Some(r.upper as u32) };
            references.push(ReferenceDef {
                name: r.name,
                target: r.target,
                containment: r.containment,
                lower: r.lower,
                upper,
                opposite: r.opposite,
            });
        }
        classes.push(ClassDef {
            name: c.name,
            is_abstract: c.is_abstract,
            supertypes: c.supertypes,
            attributes,
            references,
            annotations: AnnotationSet {
                ocl: c.annotations.ocl,
                active_constraints: c.annotations.constraints,
                roles: c.annotations.roles,
            },
        });
    }
    Metamodel::new(doc.model, classes)
}

/// Emit the canonical JSON document for a metamodel (2-space indent).
pub fn to_canonical_json(m: &Metamodel) -> String {
    let doc = MetamodelDoc {
        model: m.model_id.clone(),
        classes: m
            .classes
            .iter()
            .map(|c| ClassDoc {
                name: c.name.clone(),
                is_abstract: c.is_abstract,
                supertypes: c.supertypes.clone(),
                attributes: c
                    .attributes
                    .iter()
                    .map(|a| AttributeDoc {
                        name: a.name.clone(),
                        datatype: a.datatype.as_str().to_string(),
                        many: a.many,
                        identifier: a.identifier,
                        unique: a.unique,
                    })
                    .collect(),
                references: c
                    .references
                    .iter()
                    .map(|r| ReferenceDoc {
                        name: r.name.clone(),
                        target: r.target.clone(),
                        containment: r.containment,
                        lower: r.lower,
                        upper: r.upper.map(|u| u as i64).unwrap_or(-1),
                        opposite: r.opposite.clone(),
                    })
                    .collect(),
                annotations: AnnotationsDoc {
                    ocl: c.annotations.ocl.clone(),
                    constraints: c.annotations.active_constraints.clone(),
                    roles: c.annotations.roles.clone(),
                },
            })
            .collect(),
    };
    let mut out = serde_json::to_string_pretty(&doc).expect("metamodel serializes");
    out.push('\n');
    out
}
