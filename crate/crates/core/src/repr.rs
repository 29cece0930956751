//! Wire representations: marshalling resolved targets to JSON and XML
//! documents and parsing inbound payloads (wrapper-key typing, partial
//! field sets, URI-valued references).
//!
//! On the wire every reference — containment or cross — is a URI. JSON
//! multi-valued references group their members by dynamic type: each group
//! key is the lowerCamelCase class name, holding one `{"uri": ...}` object
//! or an array of them. Floats map to strings (no exact JSON datatype
//! correspondence), parsed tolerantly on input.

use indexmap::IndexMap;
use percent_encoding::{percent_decode_str, utf8_percent_encode, AsciiSet, CONTROLS};
use serde_json::{Map, Value};

use crate::instance::{AttrAssign, AttrValue, Eid, ModelInstance, RefSlot, Scalar, Target};
use crate::metamodel::{AttributeDef, DataType, Feature, Metamodel};

/// Characters percent-encoded inside URI id segments.
const ID_ENCODE: &AsciiSet = &CONTROLS
    .add(b' ')
    .add(b'%')
    .add(b'/')
    .add(b'?')
    .add(b'#')
    .add(b'&')
    .add(b'=')
    .add(b'"')
    .add(b'<')
    .add(b'>');

/// lowerCamelCase wire key of a class name: first letter lowered, rest
/// preserved.
pub fn key_name(class_name: &str) -> String {
    let mut chars = class_name.chars();
    match chars.next() {
        Some(first) => first.to_lowercase().chain(chars).collect(),
        None => String::new(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WireFormat {
    Json,
    Xml,
}

impl WireFormat {
    pub fn media_type(&self) -> &'static str {
        match self {
            WireFormat::Json => "application/json",
            WireFormat::Xml => "application/xml",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WireDocument {
    pub format: WireFormat,
    pub body: String,
}

/// A parsed inbound payload: the concrete class named by the wrapper key,
/// plus exactly the fields present in the document. Reference values are
/// URI lists still to be resolved against an instance; an empty list
/// unsets the slot.
#[derive(Debug, Clone, PartialEq)]
pub struct TypedPayload {
    pub class: String,
    pub attrs: IndexMap<String, AttrAssign>,
    pub refs: IndexMap<String, Vec<String>>,
}

#[derive(Debug, thiserror::Error)]
pub enum ReprError {
    #[error("element is not reachable from the first document root")]
    Unaddressable,
    #[error("{0}")]
    Syntax(String),
    #[error("payload must have exactly one top-level wrapper key")]
    WrapperShape,
    #[error("unknown wrapper key {0}")]
    UnknownWrapperKey(String),
    #[error("payload class {class} is not a subtype of {expected}")]
    NotASubtype { class: String, expected: String },
    #[error("class {class} has no feature {field}")]
    UnknownField { class: String, field: String },
    #[error("value for {class}.{field} does not match datatype {expected}: {value}")]
    DatatypeMismatch {
        class: String,
        field: String,
        expected: DataType,
        value: String,
    },
    #[error("bad reference value for {field}: {detail}")]
    BadReference { field: String, detail: String },
}

// ---------------------------------------------------------------------------
// URIs
// ---------------------------------------------------------------------------

/// The URI addressing `eid` under `base` (scheme + authority, no trailing
/// slash): base + /rest/{model}/{instance} + one step per containment edge
/// from the first root. Multi-valued steps use the child's identifier
/// value (percent-encoded) or, for the final step only, `?index=<i>`.
pub fn uri_for(i: &ModelInstance, eid: Eid, base: &str) -> Result<String, ReprError> {
    let parents = i.parent_map();
    // Walk up to a root, collecting links bottom-up.
    let mut chain = Vec::new();
    let mut cursor = eid;
    while let Some(link) = parents.get(&cursor) {
        cursor = link.owner;
        chain.push(link.clone());
    }
    if i.roots.first() != Some(&cursor) {
        return Err(ReprError::Unaddressable);
    }
    chain.reverse();

    let mut uri = format!(
        "{base}/rest/{}/{}",
        i.metamodel.model_id(),
        i.instance_id
    );
    let last = chain.len().saturating_sub(1);
    for (pos, link) in chain.iter().enumerate() {
        let owner_class = &i.element(link.owner).expect("owner exists").class;
        let def = i
            .metamodel
            .reference(owner_class, &link.reference)
            .expect("containment edge is declared");
        uri.push('/');
        uri.push_str(&link.reference);
        if !def.many() {
            continue;
        }
        let child = match pos == last {
            true => eid,
            false => {
                // Re-derive the child on this step from the next link.
                chain[pos + 1].owner
            }
        };
        match i.identifier_value(child) {
            Some(id) => {
                uri.push('/');
                uri.push_str(&utf8_percent_encode(&id, ID_ENCODE).to_string());
            }
            None if pos == last => {
                uri.push_str(&format!("?index={}", link.index));
            }
            None => return Err(ReprError::Unaddressable),
        }
    }
    Ok(uri)
}

// ---------------------------------------------------------------------------
// JSON output
// ---------------------------------------------------------------------------

/// Render a resolved target as canonical wire JSON (declaration-order
/// fields, first-occurrence group order, 2-space indent).
pub fn to_json(i: &ModelInstance, t: &Target, base: &str) -> WireDocument {
    let value = match t {
        Target::Element(eid) => {
            let e = i.element(*eid).expect("target element exists");
            let mut wrapper = Map::new();
            wrapper.insert(key_name(&e.class), Value::Object(element_body_json(i, *eid, base)));
            Value::Object(wrapper)
        }
        Target::Collection {
            reference, members, ..
        } => {
            let mut wrapper = Map::new();
            wrapper.insert(reference.clone(), group_json(i, members, base));
            Value::Object(wrapper)
        }
    };
    let mut body = serde_json::to_string_pretty(&value).expect("wire value serializes");
    body.push('\n');
    WireDocument {
        format: WireFormat::Json,
        body,
    }
}

fn element_body_json(i: &ModelInstance, eid: Eid, base: &str) -> Map<String, Value> {
    let e = i.element(eid).expect("element exists");
    let mut body = Map::new();
    for feature in i.metamodel.effective_features(&e.class) {
        match feature {
            Feature::Attribute(a) => match e.attr(&a.name) {
                Some(AttrValue::One(s)) => {
                    body.insert(a.name.clone(), attr_json(s));
                }
                Some(AttrValue::Many(vs)) => {
                    body.insert(
                        a.name.clone(),
                        Value::Array(vs.iter().map(attr_json).collect()),
                    );
                }
                None => {}
            },
            Feature::Reference(r) => {
                let Some(slot) = e.slot(&r.name) else { continue };
                let value = match slot {
                    RefSlot::One(t) => uri_object(i, *t, base),
                    RefSlot::Many(ts) => group_json(i, ts, base),
                };
                body.insert(r.name.clone(), value);
            }
        }
    }
    body
}

/// Attribute datatype mapping: string, boolean and integer natively;
/// float as a string.
fn attr_json(s: &Scalar) -> Value {
    match s {
        Scalar::Str(v) => Value::String(v.clone()),
        Scalar::Bool(b) => Value::Bool(*b),
        Scalar::Int(n) => Value::Number((*n).into()),
        Scalar::Float(_) => Value::String(s.render()),
    }
}

fn uri_object(i: &ModelInstance, eid: Eid, base: &str) -> Value {
    let mut o = Map::new();
    o.insert(
        "uri".to_string(),
        Value::String(uri_for(i, eid, base).expect("referenced element is addressable")),
    );
    Value::Object(o)
}

/// Members grouped by dynamic type in first-occurrence slot order; one
/// member renders as a single uri object, several as an array.
fn group_json(i: &ModelInstance, members: &[Eid], base: &str) -> Value {
    let mut groups: IndexMap<String, Vec<Value>> = IndexMap::new();
    for m in members {
        let class = &i.element(*m).expect("member exists").class;
        groups
            .entry(key_name(class))
            .or_default()
            .push(uri_object(i, *m, base));
    }
    let mut o = Map::new();
    for (key, mut items) in groups {
        let value = if items.len() == 1 {
            items.pop().unwrap()
        } else {
            Value::Array(items)
        };
        o.insert(key, value);
    }
    Value::Object(o)
}

// ---------------------------------------------------------------------------
// XML output
// ---------------------------------------------------------------------------

/// Render a resolved target as canonical wire XML (same ordering rules as
/// JSON; no XML declaration; 2-space indent).
pub fn to_xml(i: &ModelInstance, t: &Target, base: &str) -> WireDocument {
    let mut out = String::new();
    match t {
        Target::Element(eid) => {
            let e = i.element(*eid).expect("target element exists");
            element_xml(i, *eid, &key_name(&e.class), base, 0, &mut out);
        }
        Target::Collection {
            reference, members, ..
        } => {
            group_xml(i, members, reference, base, 0, &mut out);
        }
    }
    WireDocument {
        format: WireFormat::Xml,
        body: out,
    }
}

fn indent(depth: usize, out: &mut String) {
    for _ in 0..depth {
        out.push_str("  ");
    }
}

fn esc_text(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn text_element(tag: &str, text: &str, depth: usize, out: &mut String) {
    indent(depth, out);
    out.push('<');
    out.push_str(tag);
    out.push('>');
    out.push_str(&esc_text(text));
    out.push_str("</");
    out.push_str(tag);
    out.push_str(">\n");
}

fn element_xml(
    i: &ModelInstance,
    eid: Eid,
    tag: &str,
    base: &str,
    depth: usize,
    out: &mut String,
) {
    let e = i.element(eid).expect("element exists");
    let mut children = String::new();
    for feature in i.metamodel.effective_features(&e.class) {
        match feature {
            Feature::Attribute(a) => match e.attr(&a.name) {
                Some(AttrValue::One(s)) => {
                    text_element(&a.name, &s.render(), depth + 1, &mut children)
                }
                Some(AttrValue::Many(vs)) => {
                    for s in vs {
                        text_element(&a.name, &s.render(), depth + 1, &mut children);
                    }
                }
                None => {}
            },
            Feature::Reference(r) => {
                let Some(slot) = e.slot(&r.name) else { continue };
                match slot {
                    RefSlot::One(t) => {
                        indent(depth + 1, &mut children);
                        children.push_str(&format!("<{}>\n", r.name));
                        let uri = uri_for(i, *t, base).expect("referenced element addressable");
                        text_element("uri", &uri, depth + 2, &mut children);
                        indent(depth + 1, &mut children);
                        children.push_str(&format!("</{}>\n", r.name));
                    }
                    RefSlot::Many(ts) => group_xml(i, ts, &r.name, base, depth + 1, &mut children),
                }
            }
        }
    }
    indent(depth, out);
    if children.is_empty() {
        out.push_str(&format!("<{tag}/>\n"));
    } else {
        out.push_str(&format!("<{tag}>\n"));
        out.push_str(&children);
        indent(depth, out);
        out.push_str(&format!("</{tag}>\n"));
    }
}

fn group_xml(
    i: &ModelInstance,
    members: &[Eid],
    wrapper: &str,
    base: &str,
    depth: usize,
    out: &mut String,
) {
    indent(depth, out);
    if members.is_empty() {
        out.push_str(&format!("<{wrapper}/>\n"));
        return;
    }
    out.push_str(&format!("<{wrapper}>\n"));
    for m in members {
        let class = &i.element(*m).expect("member exists").class;
        let tag = key_name(class);
        indent(depth + 1, out);
        out.push_str(&format!("<{tag}>\n"));
        let uri = uri_for(i, *m, base).expect("member addressable");
        text_element("uri", &uri, depth + 2, out);
        indent(depth + 1, out);
        out.push_str(&format!("</{tag}>\n"));
    }
    indent(depth, out);
    out.push_str(&format!("</{wrapper}>\n"));
}

// ---------------------------------------------------------------------------
// Payload parsing
// ---------------------------------------------------------------------------

/// Parse an inbound document against a declared class context. The wrapper
/// key names the concrete class, which must be a subtype of `expected`
/// when one is given (POST uses the declared target class; PUT checks the
/// dynamic class separately and passes `None`).
pub fn parse_payload(
    doc: &WireDocument,
    expected: Option<&str>,
    m: &Metamodel,
) -> Result<TypedPayload, ReprError> {
    match doc.format {
        WireFormat::Json => parse_json_payload(&doc.body, expected, m),
        WireFormat::Xml => parse_xml_payload(&doc.body, expected, m),
    }
}

fn class_for_wrapper<'m>(
    key: &str,
    expected: Option<&str>,
    m: &'m Metamodel,
) -> Result<&'m str, ReprError> {
    let class = m
        .class_for_key(key)
        .ok_or_else(|| ReprError::UnknownWrapperKey(key.to_string()))?;
    if let Some(expected) = expected {
        if !m.is_subtype(&class.name, expected).unwrap_or(false) {
            return Err(ReprError::NotASubtype {
                class: class.name.clone(),
                expected: expected.to_string(),
            });
        }
    }
    Ok(&class.name)
}

fn parse_json_payload(
    body: &str,
    expected: Option<&str>,
    m: &Metamodel,
) -> Result<TypedPayload, ReprError> {
    let value: Value =
        serde_json::from_str(body).map_err(|e| ReprError::Syntax(e.to_string()))?;
    let obj = value
        .as_object()
        .filter(|o| o.len() == 1)
        .ok_or(ReprError::WrapperShape)?;
    let (key, inner) = obj.iter().next().unwrap();
    let class = class_for_wrapper(key, expected, m)?.to_string();
    let fields = inner.as_object().ok_or_else(|| {
        ReprError::Syntax(format!("body of wrapper {key} must be an object"))
    })?;

    let mut payload = TypedPayload {
        class: class.clone(),
        attrs: IndexMap::new(),
        refs: IndexMap::new(),
    };
    for (field, v) in fields {
        match m.feature(&class, field) {
            Some(Feature::Attribute(a)) => {
                payload
                    .attrs
                    .insert(field.clone(), json_attr_assign(v, a, &class, field)?);
            }
            Some(Feature::Reference(_)) => {
                payload.refs.insert(field.clone(), json_uris(v, field)?);
            }
            None => {
                return Err(ReprError::UnknownField {
                    class,
                    field: field.clone(),
                })
            }
        }
    }
    Ok(payload)
}

fn json_attr_assign(
    v: &Value,
    a: &AttributeDef,
    class: &str,
    field: &str,
) -> Result<AttrAssign, ReprError> {
    if v.is_null() {
        return Ok(AttrAssign::Unset);
    }
    let mismatch = || ReprError::DatatypeMismatch {
        class: class.to_string(),
        field: field.to_string(),
        expected: a.datatype,
        value: v.to_string(),
    };
    if a.many {
        let arr = v.as_array().ok_or_else(mismatch)?;
        let vs = arr
            .iter()
            .map(|item| json_scalar(item, a.datatype).ok_or_else(mismatch))
            .collect::<Result<Vec<_>, _>>()?;
        return Ok(AttrAssign::Set(AttrValue::Many(vs)));
    }
    json_scalar(v, a.datatype)
        .map(|s| AttrAssign::Set(AttrValue::One(s)))
        .ok_or_else(mismatch)
}

fn json_scalar(v: &Value, datatype: DataType) -> Option<Scalar> {
    match (datatype, v) {
        (DataType::String, Value::String(s)) => Some(Scalar::Str(s.clone())),
        (DataType::Boolean, Value::Bool(b)) => Some(Scalar::Bool(*b)),
        (DataType::Integer, Value::Number(n)) => n.as_i64().map(Scalar::Int),
        // Floats arrive as strings (the canonical mapping) or numbers.
        (DataType::Float, Value::String(s)) => Scalar::parse(DataType::Float, s),
        (DataType::Float, Value::Number(n)) => {
            let x = n.as_f64()?;
            x.is_finite().then_some(Scalar::Float(x))
        }
        _ => None,
    }
}

/// Accepted reference shapes: null or empty containers (unset), a URI
/// string, a `{"uri": ...}` object, an array of either, or the grouped
/// form the server itself emits (`{"<classKey>": <uri-obj | [uri-objs]>}`).
fn json_uris(v: &Value, field: &str) -> Result<Vec<String>, ReprError> {
    let bad = |detail: &str| ReprError::BadReference {
        field: field.to_string(),
        detail: detail.to_string(),
    };
    match v {
        Value::Null => Ok(Vec::new()),
        Value::String(s) => Ok(vec![s.clone()]),
        Value::Array(items) => {
            let mut uris = Vec::new();
            for item in items {
                uris.extend(json_uris(item, field)?);
            }
            Ok(uris)
        }
        Value::Object(o) => {
            if let Some(uri) = o.get("uri") {
                if o.len() != 1 {
                    return Err(bad("object with \"uri\" must have no other keys"));
                }
                return match uri {
                    Value::String(s) => Ok(vec![s.clone()]),
                    _ => Err(bad("\"uri\" must be a string")),
                };
            }
            // Grouped-by-type form; flatten groups in key order.
            let mut uris = Vec::new();
            for (_, group) in o {
                uris.extend(json_uris(group, field)?);
            }
            Ok(uris)
        }
        _ => Err(bad("expected a URI string, object or array")),
    }
}

fn parse_xml_payload(
    body: &str,
    expected: Option<&str>,
    m: &Metamodel,
) -> Result<TypedPayload, ReprError> {
    let root = xml_tree(body)?;
    let class = class_for_wrapper(&root.tag, expected, m)?.to_string();
    let mut payload = TypedPayload {
        class: class.clone(),
        attrs: IndexMap::new(),
        refs: IndexMap::new(),
    };
    for child in &root.children {
        match m.feature(&class, &child.tag) {
            Some(Feature::Attribute(a)) => {
                let datatype = a.datatype;
                let many = a.many;
                // String content is significant as-is; other datatypes
                // tolerate surrounding whitespace.
                let text = if datatype == DataType::String {
                    child.text.as_str()
                } else {
                    child.text.trim()
                };
                if many {
                    let scalar = Scalar::parse(datatype, text).ok_or_else(|| {
                        ReprError::DatatypeMismatch {
                            class: class.clone(),
                            field: child.tag.clone(),
                            expected: datatype,
                            value: text.to_string(),
                        }
                    })?;
                    // Repeated elements accumulate into the list.
                    match payload.attrs.entry(child.tag.clone()).or_insert_with(|| {
                        AttrAssign::Set(AttrValue::Many(Vec::new()))
                    }) {
                        AttrAssign::Set(AttrValue::Many(vs)) => vs.push(scalar),
                        _ => unreachable!("many attribute accumulates into Many"),
                    }
                } else if child.children.is_empty() && text.is_empty() {
                    payload.attrs.insert(child.tag.clone(), AttrAssign::Unset);
                } else {
                    let scalar = Scalar::parse(datatype, text).ok_or_else(|| {
                        ReprError::DatatypeMismatch {
                            class: class.clone(),
                            field: child.tag.clone(),
                            expected: datatype,
                            value: text.to_string(),
                        }
                    })?;
                    payload
                        .attrs
                        .insert(child.tag.clone(), AttrAssign::Set(AttrValue::One(scalar)));
                }
            }
            Some(Feature::Reference(_)) => {
                let uris = xml_uris(child, &child.tag)?;
                payload.refs.insert(child.tag.clone(), uris);
            }
            None => {
                return Err(ReprError::UnknownField {
                    class,
                    field: child.tag.clone(),
                })
            }
        }
    }
    Ok(payload)
}

/// Collect `<uri>` text from a reference wrapper: directly nested, or one
/// level deeper inside dynamic-type child elements.
fn xml_uris(node: &XmlNode, field: &str) -> Result<Vec<String>, ReprError> {
    let mut uris = Vec::new();
    for child in &node.children {
        if child.tag == "uri" {
            uris.push(child.text.trim().to_string());
        } else {
            for inner in &child.children {
                if inner.tag == "uri" {
                    uris.push(inner.text.trim().to_string());
                } else {
                    return Err(ReprError::BadReference {
                        field: field.to_string(),
                        detail: format!("unexpected element {}", inner.tag),
                    });
                }
            }
        }
    }
    Ok(uris)
}

struct XmlNode {
    tag: String,
    text: String,
    children: Vec<XmlNode>,
}

fn xml_tree(body: &str) -> Result<XmlNode, ReprError> {
    use quick_xml::events::Event;
    let mut reader = quick_xml::Reader::from_str(body);
    reader.config_mut().trim_text(false);
    let mut stack: Vec<XmlNode> = Vec::new();
    let mut root = None;
    loop {
        match reader
            .read_event()
            .map_err(|e| ReprError::Syntax(e.to_string()))?
        {
            Event::Start(start) => {
                let tag = String::from_utf8_lossy(start.name().as_ref()).into_owned();
                stack.push(XmlNode {
                    tag,
                    text: String::new(),
                    children: Vec::new(),
                });
            }
            Event::Empty(start) => {
                let tag = String::from_utf8_lossy(start.name().as_ref()).into_owned();
                let node = XmlNode {
                    tag,
                    text: String::new(),
                    children: Vec::new(),
                };
                match stack.last_mut() {
                    Some(parent) => parent.children.push(node),
                    None if root.is_none() => root = Some(node),
                    None => return Err(ReprError::Syntax("multiple root elements".into())),
                }
            }
            Event::End(_) => {
                let node = stack.pop().expect("matched end tag");
                match stack.last_mut() {
                    Some(parent) => parent.children.push(node),
                    None if root.is_none() => root = Some(node),
                    None => return Err(ReprError::Syntax("multiple root elements".into())),
                }
            }
            Event::Text(t) => {
                if let Some(node) = stack.last_mut() {
                    node.text.push_str(
                        &t.unescape().map_err(|e| ReprError::Syntax(e.to_string()))?,
                    );
                }
            }
            Event::CData(c) => {
                if let Some(node) = stack.last_mut() {
                    node.text.push_str(&String::from_utf8_lossy(&c));
                }
            }
            Event::Eof => break,
            _ => {}
        }
    }
    root.ok_or_else(|| ReprError::Syntax("empty document".into()))
}

/// Percent-decode a URI path segment.
pub fn decode_segment(segment: &str) -> Result<String, ReprError> {
    percent_decode_str(segment)
        .decode_utf8()
        .map(|s| s.into_owned())
        .map_err(|e| ReprError::Syntax(format!("bad percent-encoding: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{load_xmi, resolve_path, ResourcePath};
    use crate::metamodel::parse_metamodel;
    use std::sync::Arc;

    const BASE: &str = "https://example.com";

    fn family() -> Arc<Metamodel> {
        let text = std::fs::read_to_string(concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/fixtures/family/metamodel.json"
        ))
        .unwrap();
        Arc::new(parse_metamodel(&text).unwrap())
    }

    fn simpsons() -> ModelInstance {
        let text = std::fs::read_to_string(concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/fixtures/family/Simpsons.xmi"
        ))
        .unwrap();
        load_xmi(&text, family(), "Simpsons").unwrap()
    }

    fn eid_by(i: &ModelInstance, attr: &str, value: &str) -> Eid {
        i.elements()
            .find(|e| {
                matches!(e.attr(attr), Some(AttrValue::One(Scalar::Str(s))) if s == value)
            })
            .unwrap()
            .eid
    }

    #[test]
    fn key_name_lowers_first_letter_only() {
        assert_eq!(key_name("RaceDog"), "raceDog");
        assert_eq!(key_name("Family"), "family");
        assert_eq!(key_name("A"), "a");
        assert_eq!(key_name(""), "");
    }

    #[test]
    fn uri_for_root_and_elements() {
        let i = simpsons();
        assert_eq!(
            uri_for(&i, i.roots[0], BASE).unwrap(),
            "https://example.com/rest/Family/Simpsons"
        );
        let homer = eid_by(&i, "firstName", "Homer");
        assert_eq!(
            uri_for(&i, homer, BASE).unwrap(),
            "https://example.com/rest/Family/Simpsons/parents/Homer"
        );
        let helper = eid_by(&i, "name", "Santa's Little Helper");
        assert_eq!(
            uri_for(&i, helper, BASE).unwrap(),
            "https://example.com/rest/Family/Simpsons/pets/Santa's%20Little%20Helper"
        );
    }

    #[test]
    fn uri_for_identifierless_uses_index() {
        let m = Arc::new(
            parse_metamodel(
                r#"{"model": "M", "classes": [
                    {"name": "Box", "references": [
                        {"name": "items", "target": "Item", "containment": true, "upper": -1}]},
                    {"name": "Item"}]}"#,
            )
            .unwrap(),
        );
        let mut i = ModelInstance::new("I", m);
        let root = i.alloc_eid();
        i.insert(crate::instance::Element::new(root, "Box"));
        i.roots.push(root);
        let item = i.alloc_eid();
        i.insert(crate::instance::Element::new(item, "Item"));
        i.element_mut(root)
            .unwrap()
            .refs
            .insert("items".into(), RefSlot::Many(vec![item]));
        assert_eq!(
            uri_for(&i, item, BASE).unwrap(),
            "https://example.com/rest/M/I/items?index=0"
        );
    }

    #[test]
    fn json_rendering_matches_reference_structure() {
        let i = simpsons();
        let doc = to_json(&i, &Target::Element(i.roots[0]), BASE);
        let v: Value = serde_json::from_str(&doc.body).unwrap();
        let fam = &v["family"];
        assert_eq!(fam["address"], "742 Evergreen Terrace");
        assert_eq!(
            fam["parents"]["parent"],
            serde_json::json!([
                {"uri": "https://example.com/rest/Family/Simpsons/parents/Homer"},
                {"uri": "https://example.com/rest/Family/Simpsons/parents/Marge"}
            ])
        );
        assert_eq!(
            fam["pets"],
            serde_json::json!({
                "raceDog": {"uri":
                    "https://example.com/rest/Family/Simpsons/pets/Santa's%20Little%20Helper"},
                "cat": {"uri":
                    "https://example.com/rest/Family/Simpsons/pets/Snowball%20II"}
            })
        );
    }

    #[test]
    fn float_attribute_renders_as_string() {
        let i = simpsons();
        let helper = eid_by(&i, "name", "Santa's Little Helper");
        let doc = to_json(&i, &Target::Element(helper), BASE);
        let v: Value = serde_json::from_str(&doc.body).unwrap();
        assert_eq!(v["raceDog"]["weight"], "15.5");
    }

    #[test]
    fn empty_element_renders_empty_object() {
        let m = Arc::new(
            parse_metamodel(
                r#"{"model": "M", "classes": [{"name": "Empty"}]}"#,
            )
            .unwrap(),
        );
        let mut i = ModelInstance::new("I", m);
        let root = i.alloc_eid();
        i.insert(crate::instance::Element::new(root, "Empty"));
        i.roots.push(root);
        let doc = to_json(&i, &Target::Element(root), BASE);
        assert_eq!(doc.body, "{\n  \"empty\": {}\n}\n");
        let xml = to_xml(&i, &Target::Element(root), BASE);
        assert_eq!(xml.body, "<empty/>\n");
    }

    #[test]
    fn xml_rendering_matches_reference_structure() {
        let i = simpsons();
        let doc = to_xml(&i, &Target::Element(i.roots[0]), BASE);
        assert!(doc.body.starts_with("<family>\n"));
        assert!(doc
            .body
            .contains("  <address>742 Evergreen Terrace</address>\n"));
        assert!(doc.body.contains(
            "  <parents>\n    <parent>\n      \
             <uri>https://example.com/rest/Family/Simpsons/parents/Homer</uri>\n    </parent>\n"
        ));
        assert!(doc.body.contains(
            "    <cat>\n      \
             <uri>https://example.com/rest/Family/Simpsons/pets/Snowball%20II</uri>\n    </cat>\n"
        ));
    }

    #[test]
    fn xml_and_json_same_uri_multiset() {
        let i = simpsons();
        let json = to_json(&i, &Target::Element(i.roots[0]), BASE).body;
        let xml = to_xml(&i, &Target::Element(i.roots[0]), BASE).body;
        let mut json_uris: Vec<String> = Vec::new();
        fn walk(v: &Value, acc: &mut Vec<String>) {
            match v {
                Value::Object(o) => {
                    for (k, v) in o {
                        if k == "uri" {
                            acc.push(v.as_str().unwrap().to_string());
                        } else {
                            walk(v, acc);
                        }
                    }
                }
                Value::Array(a) => a.iter().for_each(|v| walk(v, acc)),
                _ => {}
            }
        }
        walk(&serde_json::from_str(&json).unwrap(), &mut json_uris);
        let mut xml_uris: Vec<String> = xml
            .lines()
            .filter_map(|l| {
                let l = l.trim();
                l.strip_prefix("<uri>")?.strip_suffix("</uri>").map(String::from)
            })
            .collect();
        json_uris.sort();
        xml_uris.sort();
        assert!(!json_uris.is_empty());
        assert_eq!(json_uris, xml_uris);
    }

    #[test]
    fn collection_target_rendering() {
        let i = simpsons();
        let p = ResourcePath {
            model_id: "Family".into(),
            instance_id: "Simpsons".into(),
            segments: vec!["parents".into()],
            index: None,
        };
        let t = resolve_path(&i, &p).unwrap();
        let doc = to_json(&i, &t, BASE);
        let v: Value = serde_json::from_str(&doc.body).unwrap();
        assert_eq!(
            v,
            serde_json::json!({"parents": {"parent": [
                {"uri": "https://example.com/rest/Family/Simpsons/parents/Homer"},
                {"uri": "https://example.com/rest/Family/Simpsons/parents/Marge"}
            ]}})
        );
    }

    #[test]
    fn emitted_uris_resolve_to_their_sources() {
        let i = simpsons();
        for e in i.elements() {
            let uri = uri_for(&i, e.eid, BASE).unwrap();
            let rest = uri.strip_prefix("https://example.com/rest/").unwrap();
            let (path, query) = match rest.split_once('?') {
                Some((p, q)) => (p, Some(q)),
                None => (rest, None),
            };
            let mut parts = path.split('/');
            let model_id = parts.next().unwrap().to_string();
            let instance_id = parts.next().unwrap().to_string();
            let segments: Vec<String> =
                parts.map(|s| decode_segment(s).unwrap()).collect();
            let index = query
                .and_then(|q| q.strip_prefix("index="))
                .map(|v| v.parse().unwrap());
            let p = ResourcePath {
                model_id,
                instance_id,
                segments,
                index,
            };
            assert_eq!(resolve_path(&i, &p).unwrap(), Target::Element(e.eid), "{uri}");
        }
    }

    #[test]
    fn parse_payload_listing_update() {
        let m = family();
        let doc = WireDocument {
            format: WireFormat::Json,
            body: r#"{"parent":{"firstName":"Homero"}}"#.into(),
        };
        let p = parse_payload(&doc, Some("Parent"), &m).unwrap();
        assert_eq!(p.class, "Parent");
        assert_eq!(
            p.attrs.get("firstName"),
            Some(&AttrAssign::Set(AttrValue::One(Scalar::Str("Homero".into()))))
        );
        assert!(p.refs.is_empty());
    }

    #[test]
    fn parse_payload_subtype_by_wrapper_key() {
        let m = family();
        let doc = WireDocument {
            format: WireFormat::Json,
            body: r#"{"raceDog":{"name":"Laddie","weight":"12.5"}}"#.into(),
        };
        let p = parse_payload(&doc, Some("Pet"), &m).unwrap();
        assert_eq!(p.class, "RaceDog");
        assert_eq!(
            p.attrs.get("weight"),
            Some(&AttrAssign::Set(AttrValue::One(Scalar::Float(12.5))))
        );
    }

    #[test]
    fn parse_payload_wrapper_not_subtype() {
        let m = family();
        let doc = WireDocument {
            format: WireFormat::Json,
            body: r#"{"cat":{}}"#.into(),
        };
        let err = parse_payload(&doc, Some("Dog"), &m).unwrap_err();
        assert!(matches!(err, ReprError::NotASubtype { .. }));
    }

    #[test]
    fn parse_payload_errors() {
        let m = family();
        let mk = |body: &str| WireDocument {
            format: WireFormat::Json,
            body: body.into(),
        };
        assert!(matches!(
            parse_payload(&mk(r#"{"nope":{}}"#), Some("Pet"), &m),
            Err(ReprError::UnknownWrapperKey(_))
        ));
        assert!(matches!(
            parse_payload(&mk(r#"{"cat":{},"raceDog":{}}"#), Some("Pet"), &m),
            Err(ReprError::WrapperShape)
        ));
        assert!(matches!(
            parse_payload(&mk(r#"{"cat":{"bogus":1}}"#), Some("Pet"), &m),
            Err(ReprError::UnknownField { .. })
        ));
        assert!(matches!(
            parse_payload(&mk(r#"{"cat":{"weight":true}}"#), Some("Pet"), &m),
            Err(ReprError::DatatypeMismatch { .. })
        ));
        assert!(matches!(
            parse_payload(&mk("not json"), Some("Pet"), &m),
            Err(ReprError::Syntax(_))
        ));
    }

    #[test]
    fn parse_payload_reference_shapes() {
        let m = family();
        let uri = "https://example.com/rest/Family/Simpsons/parents/Homer";
        for body in [
            format!(r#"{{"son":{{"parents":"{uri}"}}}}"#),
            format!(r#"{{"son":{{"parents":["{uri}"]}}}}"#),
            format!(r#"{{"son":{{"parents":{{"uri":"{uri}"}}}}}}"#),
            format!(r#"{{"son":{{"parents":{{"parent":{{"uri":"{uri}"}}}}}}}}"#),
        ] {
            let p = parse_payload(
                &WireDocument {
                    format: WireFormat::Json,
                    body,
                },
                Some("Member"),
                &m,
            )
            .unwrap();
            assert_eq!(p.refs.get("parents"), Some(&vec![uri.to_string()]), "{p:?}");
        }
        // null unsets.
        let p = parse_payload(
            &WireDocument {
                format: WireFormat::Json,
                body: r#"{"son":{"parents":null}}"#.into(),
            },
            Some("Member"),
            &m,
        )
        .unwrap();
        assert_eq!(p.refs.get("parents"), Some(&Vec::new()));
    }

    #[test]
    fn wire_round_trip_single_element() {
        let m = family();
        let i = simpsons();
        let lisa = eid_by(&i, "firstName", "Lisa");
        let doc = to_json(&i, &Target::Element(lisa), BASE);
        let p = parse_payload(&doc, Some("Member"), &m).unwrap();
        assert_eq!(p.class, "Daughter");
        let e = i.element(lisa).unwrap();
        // All attributes reproduced.
        for (name, value) in &e.attrs {
            assert_eq!(p.attrs.get(name), Some(&AttrAssign::Set(value.clone())));
        }
        // Reference URI lists reproduced (multiset: grouping may reorder).
        for (name, slot) in &e.refs {
            let mut expect: Vec<String> = slot
                .eids()
                .iter()
                .map(|t| uri_for(&i, *t, BASE).unwrap())
                .collect();
            let mut got = p.refs.get(name).cloned().unwrap();
            expect.sort();
            got.sort();
            assert_eq!(got, expect);
        }
        assert_eq!(p.attrs.len(), e.attrs.len());
        assert_eq!(p.refs.len(), e.refs.len());
    }

    #[test]
    fn parse_xml_payload_forms() {
        let m = family();
        let doc = WireDocument {
            format: WireFormat::Xml,
            body: "<parent>\n  <firstName>Homero</firstName>\n</parent>\n".into(),
        };
        let p = parse_payload(&doc, Some("Parent"), &m).unwrap();
        assert_eq!(
            p.attrs.get("firstName"),
            Some(&AttrAssign::Set(AttrValue::One(Scalar::Str("Homero".into()))))
        );

        let uri = "https://example.com/rest/Family/Simpsons/parents/Homer";
        let doc = WireDocument {
            format: WireFormat::Xml,
            body: format!(
                "<son><parents><parent><uri>{uri}</uri></parent></parents></son>"
            ),
        };
        let p = parse_payload(&doc, Some("Member"), &m).unwrap();
        assert_eq!(p.refs.get("parents"), Some(&vec![uri.to_string()]));

        // Direct uri child without a dynamic-type wrapper.
        let doc = WireDocument {
            format: WireFormat::Xml,
            body: format!("<son><parents><uri>{uri}</uri></parents></son>"),
        };
        let p = parse_payload(&doc, Some("Member"), &m).unwrap();
        assert_eq!(p.refs.get("parents"), Some(&vec![uri.to_string()]));

        // Empty attribute element unsets.
        let doc = WireDocument {
            format: WireFormat::Xml,
            body: "<parent><lastName/></parent>".into(),
        };
        let p = parse_payload(&doc, Some("Parent"), &m).unwrap();
        assert_eq!(p.attrs.get("lastName"), Some(&AttrAssign::Unset));
    }

    #[test]
    fn xml_wire_round_trip_single_element() {
        let m = family();
        let i = simpsons();
        let lisa = eid_by(&i, "firstName", "Lisa");
        let doc = to_xml(&i, &Target::Element(lisa), BASE);
        let p = parse_payload(&doc, Some("Member"), &m).unwrap();
        assert_eq!(p.class, "Daughter");
        assert_eq!(
            p.attrs.get("firstName"),
            Some(&AttrAssign::Set(AttrValue::One(Scalar::Str("Lisa".into()))))
        );
        assert_eq!(p.refs.get("parents").map(Vec::len), Some(2));
        assert_eq!(p.refs.get("favorite").map(Vec::len), Some(1));
    }
}
