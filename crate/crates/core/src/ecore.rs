//! Importer for the supported Ecore-XMI subset: `EPackage` / `EClass` /
//! `EStructuralFeature` elements, `eSuperTypes` fragment refs and
//! `eAnnotations`. Everything outside the subset is rejected with a named
//! diagnostic rather than silently dropped.

use indexmap::IndexMap;
use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;

use crate::metamodel::{
    AnnotationSet, AttributeDef, ClassDef, DataType, Metamodel, MetamodelError, ReferenceDef,
};

#[derive(Debug, thiserror::Error)]
pub enum EcoreImportError {
    #[error("XML syntax error: {0}")]
    Xml(String),
    #[error("unsupported construct: {construct} at {path}")]
    Unsupported { construct: String, path: String },
    #[error("missing attribute {attribute} at {path}")]
    MissingAttribute { attribute: String, path: String },
    #[error("unsupported datatype {datatype} at {path}")]
    UnsupportedDatatype { datatype: String, path: String },
    #[error("document root is not an ecore:EPackage")]
    NotAPackage,
    #[error(transparent)]
    Metamodel(#[from] MetamodelError),
}

/// The local part of a possibly-prefixed XML name.
fn local(name: &[u8]) -> String {
    let s = String::from_utf8_lossy(name);
    match s.rsplit_once(':') {
        Some((_, l)) => l.to_string(),
        None => s.into_owned(),
    }
}

struct Attrs {
    map: IndexMap<String, String>,
}

impl Attrs {
    fn read(start: &BytesStart<'_>) -> Result<Attrs, EcoreImportError> {
        let mut map = IndexMap::new();
        for attr in start.attributes() {
            let attr = attr.map_err(|e| EcoreImportError::Xml(e.to_string()))?;
            let key = local(attr.key.as_ref());
            let value = attr
                .unescape_value()
                .map_err(|e| EcoreImportError::Xml(e.to_string()))?
                .into_owned();
            map.insert(key, value);
        }
        Ok(Attrs { map })
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(|s| s.as_str())
    }

    fn flag(&self, key: &str) -> bool {
        self.get(key) == Some("true")
    }

    fn required(&self, key: &str, path: &str) -> Result<&str, EcoreImportError> {
        self.get(key).ok_or_else(|| EcoreImportError::MissingAttribute {
            attribute: key.to_string(),
            path: path.to_string(),
        })
    }
}

/// Strip a `#//Name` (or `...ecore#//Name`) fragment ref down to `Name`.
fn fragment_name(value: &str) -> &str {
    let frag = match value.rsplit_once('#') {
        Some((_, f)) => f,
        None => value,
    };
    frag.trim_start_matches('/')
}

fn map_datatype(etype: &str, path: &str) -> Result<DataType, EcoreImportError> {
    match fragment_name(etype) {
        "EString" => Ok(DataType::String),
        "EBoolean" | "EBooleanObject" => Ok(DataType::Boolean),
        "EInt" | "EIntegerObject" | "ELong" | "ELongObject" | "EShort" | "EBigInteger" => {
            Ok(DataType::Integer)
        }
        "EFloat" | "EFloatObject" | "EDouble" | "EDoubleObject" | "EBigDecimal" => {
            Ok(DataType::Float)
        }
        other => Err(EcoreImportError::UnsupportedDatatype {
            datatype: other.to_string(),
            path: path.to_string(),
        }),
    }
}

/// Import an Ecore XMI document into a [`Metamodel`] equivalent to one
/// written in the canonical JSON format.
pub fn import_ecore_xmi(text: &str) -> Result<Metamodel, EcoreImportError> {
    let mut reader = Reader::from_str(text);
    reader.config_mut().trim_text(true);

    let mut model_id: Option<String> = None;
    let mut classes: Vec<ClassDef> = Vec::new();
    // Path of element names from the root, for diagnostics.
    let mut path: Vec<String> = Vec::new();
    // Index into `classes` / feature currently open, annotation source.
    let mut cur_class: Option<usize> = None;
    let mut cur_feature_is_attr: Option<bool> = None;
    let mut cur_annotation: Option<String> = None;
    let mut depth_package = false;

    let unsupported = |construct: &str, path: &[String]| EcoreImportError::Unsupported {
        construct: construct.to_string(),
        path: path.join("/"),
    };

    loop {
        let ev = reader
            .read_event()
            .map_err(|e| EcoreImportError::Xml(e.to_string()))?;
        match ev {
            Event::Start(ref start) | Event::Empty(ref start) => {
                let name = local(start.name().as_ref());
                let attrs = Attrs::read(start)?;
                let empty = matches!(ev, Event::Empty(_));
                path.push(name.clone());
                let here = path.join("/");
                match name.as_str() {
                    "EPackage" => {
                        if depth_package {
                            return Err(unsupported("nested EPackage", &path));
                        }
                        depth_package = true;
                        model_id = Some(attrs.required("name", &here)?.to_string());
                    }
                    "eClassifiers" => {
                        let xsi = attrs.required("type", &here)?;
                        match fragment_name(xsi).trim_start_matches("ecore:") {
                            t if t.ends_with("EClass") => {}
                            other => {
                                let construct =
                                    other.rsplit(':').next().unwrap_or(other).to_string();
                                return Err(unsupported(&construct, &path));
                            }
                        }
                        let class_name = attrs.required("name", &here)?.to_string();
                        *path.last_mut().unwrap() = class_name.clone();
                        let supertypes = attrs
                            .get("eSuperTypes")
                            .map(|s| {
                                s.split_whitespace()
                                    .map(|t| fragment_name(t).to_string())
                                    .collect()
                            })
                            .unwrap_or_default();
                        classes.push(ClassDef {
                            name: class_name,
                            is_abstract: attrs.flag("abstract") || attrs.flag("interface"),
                            supertypes,
                            attributes: Vec::new(),
                            references: Vec::new(),
                            annotations: AnnotationSet::default(),
                        });
                        cur_class = Some(classes.len() - 1);
                        if empty {
                            path.pop();
                            cur_class = None;
                        }
                    }
                    "eStructuralFeatures" => {
                        let Some(ci) = cur_class else {
                            return Err(unsupported("eStructuralFeatures outside EClass", &path));
                        };
                        for forbidden in ["derived", "transient", "volatile"] {
                            if attrs.flag(forbidden) {
                                return Err(unsupported(
                                    &format!("{forbidden} feature"),
                                    &path,
                                ));
                            }
                        }
                        let xsi = attrs.required("type", &here)?;
                        let feat_name = attrs.required("name", &here)?.to_string();
                        *path.last_mut().unwrap() = feat_name.clone();
                        let lower: u32 = attrs
                            .get("lowerBound")
                            .and_then(|s| s.parse().ok())
                            .unwrap_or(0);
                        let upper_raw: i64 = attrs
                            .get("upperBound")
                            .and_then(|s| s.parse().ok())
                            .unwrap_or(1);
                        let upper = if upper_raw < 0 {
                            None
                        } else {
                            Some(upper_raw as u32)
                        };
                        match xsi.rsplit(':').next().unwrap_or(xsi) {
                            "EAttribute" => {
                                let etype = attrs.required("eType", &here)?;
                                classes[ci].attributes.push(AttributeDef {
                                    name: feat_name,
                                    datatype: map_datatype(etype, &path.join("/"))?,
                                    many: upper.map(|u| u > 1).unwrap_or(true),
                                    identifier: attrs.flag("iD"),
                                    unique: attrs.flag("unique"),
                                });
                                cur_feature_is_attr = Some(true);
                            }
                            "EReference" => {
                                let etype = attrs.required("eType", &here)?;
                                classes[ci].references.push(ReferenceDef {
                                    name: feat_name,
                                    target: fragment_name(etype).to_string(),
                                    containment: attrs.flag("containment"),
                                    lower,
                                    upper,
                                    opposite: attrs
                                        .get("eOpposite")
                                        .map(|o| {
                                            fragment_name(o)
                                                .rsplit('/')
                                                .next()
                                                .unwrap_or(o)
                                                .to_string()
                                        }),
                                });
                                cur_feature_is_attr = Some(false);
                            }
                            other => return Err(unsupported(other, &path)),
                        }
                        if empty {
                            path.pop();
                            cur_feature_is_attr = None;
                        }
                    }
                    "eOperations" => return Err(unsupported("EOperation", &path)),
                    "eAnnotations" => {
                        if cur_class.is_none() || cur_feature_is_attr.is_some() {
                            return Err(unsupported("eAnnotations outside EClass", &path));
                        }
                        let source = attrs.required("source", &here)?.to_string();
                        cur_annotation = Some(source);
                        if empty {
                            path.pop();
                            cur_annotation = None;
                        }
                    }
                    "details" => {
                        let (Some(ci), Some(source)) = (cur_class, cur_annotation.as_deref())
                        else {
                            return Err(unsupported("details outside eAnnotations", &path));
                        };
                        let key = attrs.required("key", &here)?.to_string();
                        let value = attrs.get("value").unwrap_or("").to_string();
                        let ann = &mut classes[ci].annotations;
                        match source {
                            "OCL" => {
                                ann.ocl.insert(key, value);
                            }
                            "Ecore/constraints" => {
                                // Either one name per key, or a single
                                // "constraints" key with space-separated names.
                                if key == "constraints" {
                                    ann.active_constraints
                                        .extend(value.split_whitespace().map(String::from));
                                } else {
                                    ann.active_constraints.push(key);
                                }
                            }
                            "Ecore" if key == "constraints" => {
                                ann.active_constraints
                                    .extend(value.split_whitespace().map(String::from));
                            }
                            "Ecore/roles" => {
                                if key == "roles" {
                                    ann.roles.extend(value.split_whitespace().map(String::from));
                                } else {
                                    ann.roles.push(key);
                                }
                            }
                            // Unrecognized annotation sources are ignored.
                            _ => {}
                        }
                        if empty {
                            path.pop();
                        }
                    }
                    "eType" => {
                        // Nested eType form is only needed for cross-package
                        // types, which are outside the subset.
                        return Err(unsupported("nested eType element", &path));
                    }
                    other => return Err(unsupported(other, &path)),
                }
                if !empty {
                    continue;
                }
            }
            Event::End(ref end) => {
                let name = local(end.name().as_ref());
                path.pop();
                match name.as_str() {
                    "eClassifiers" => cur_class = None,
                    "eStructuralFeatures" => cur_feature_is_attr = None,
                    "eAnnotations" => cur_annotation = None,
                    _ => {}
                }
            }
            Event::Eof => break,
            Event::Decl(_) | Event::Comment(_) | Event::PI(_) | Event::DocType(_) => {}
            Event::Text(t) => {
                let t = t
                    .unescape()
                    .map_err(|e| EcoreImportError::Xml(e.to_string()))?;
                if !t.trim().is_empty() {
                    return Err(EcoreImportError::Xml(format!(
                        "unexpected text content: {t:?}"
                    )));
                }
            }
            Event::CData(_) => {
                return Err(EcoreImportError::Xml("unexpected CDATA section".into()))
            }
        }
    }

    let model_id = model_id.ok_or(EcoreImportError::NotAPackage)?;
    Ok(Metamodel::new(model_id, classes)?)
}
