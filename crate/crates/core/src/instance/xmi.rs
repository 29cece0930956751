//! XMI 2.0 persistence for model instances: attributes as XML attributes,
//! containment children as nested elements named by reference with
//! `xsi:type`, cross-references as fragment paths.

use std::sync::Arc;

use percent_encoding::{percent_decode_str, utf8_percent_encode, AsciiSet, CONTROLS};
use quick_xml::events::Event;
use quick_xml::Reader;

use crate::metamodel::{Feature, Metamodel};

use super::{AttrValue, Eid, Element, LoadError, ModelInstance, RefSlot, Scalar};

/// Spaces separate fragment lists in multi-valued reference attributes, so
/// they (and the escape character itself) are percent-encoded in fragments.
const FRAGMENT_ENCODE: &AsciiSet = &CONTROLS.add(b' ').add(b'%');

fn esc_attr(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn esc_text(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn encode_fragment(frag: &str) -> String {
    utf8_percent_encode(frag, FRAGMENT_ENCODE).to_string()
}

// ---------------------------------------------------------------------------
// Save
// ---------------------------------------------------------------------------

/// Serialize an instance as a canonical XMI document: declaration-order
/// features, slot-order elements, 2-space indent.
pub fn save_xmi(i: &ModelInstance) -> String {
    let mut out = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    let ns = format!(
        "xmi:version=\"2.0\" xmlns:xmi=\"http://www.omg.org/XMI\" \
         xmlns:xsi=\"http://www.w3.org/2001/XMLSchema-instance\" \
         xmlns:m=\"urn:metarest:{}\"",
        esc_attr(i.metamodel.model_id())
    );
    if i.roots.len() == 1 {
        write_element(i, i.roots[0], None, Some(&ns), 0, &mut out);
    } else {
        out.push_str(&format!("<xmi:XMI {ns}>\n"));
        for r in &i.roots {
            write_element(i, *r, None, None, 1, &mut out);
        }
        out.push_str("</xmi:XMI>\n");
    }
    out
}

/// `tag_ref`: the containment reference this element sits in, or `None`
/// for a root (tag becomes `m:<Class>`).
fn write_element(
    i: &ModelInstance,
    eid: Eid,
    tag_ref: Option<&str>,
    ns: Option<&str>,
    depth: usize,
    out: &mut String,
) {
    let e = i.element(eid).expect("serialized element exists");
    let indent = "  ".repeat(depth);
    let tag = match tag_ref {
        Some(r) => r.to_string(),
        None => format!("m:{}", e.class),
    };
    out.push_str(&format!("{indent}<{tag}"));
    if tag_ref.is_some() {
        out.push_str(&format!(" xsi:type=\"m:{}\"", esc_attr(&e.class)));
    }
    if let Some(ns) = ns {
        out.push_str(&format!(" {ns}"));
    }

    let mut child_lines: Vec<String> = Vec::new();
    for feature in i.metamodel.effective_features(&e.class) {
        match feature {
            Feature::Attribute(a) => match e.attr(&a.name) {
                Some(AttrValue::One(s)) => {
                    out.push_str(&format!(" {}=\"{}\"", a.name, esc_attr(&s.render())));
                }
                Some(AttrValue::Many(vs)) => {
                    for v in vs {
                        child_lines.push(format!(
                            "{indent}  <{0}>{1}</{0}>\n",
                            a.name,
                            esc_text(&v.render())
                        ));
                    }
                }
                None => {}
            },
            Feature::Reference(r) => {
                let Some(slot) = e.slot(&r.name) else { continue };
                if r.containment {
                    for child in slot.eids() {
                        let mut buf = String::new();
                        write_element(i, child, Some(&r.name), None, depth + 1, &mut buf);
                        child_lines.push(buf);
                    }
                } else {
                    let frags: Vec<String> = slot
                        .eids()
                        .iter()
                        .map(|t| {
                            encode_fragment(
                                &i.fragment_path(*t).expect("cross-reference target exists"),
                            )
                        })
                        .collect();
                    if !frags.is_empty() {
                        out.push_str(&format!(
                            " {}=\"{}\"",
                            r.name,
                            esc_attr(&frags.join(" "))
                        ));
                    }
                }
            }
        }
    }

    if child_lines.is_empty() {
        out.push_str("/>\n");
    } else {
        out.push_str(">\n");
        for line in child_lines {
            out.push_str(&line);
        }
        out.push_str(&format!("{indent}</{tag}>\n"));
    }
}

// ---------------------------------------------------------------------------
// Load
// ---------------------------------------------------------------------------

struct Node {
    tag: String,
    attrs: Vec<(String, String)>,
    children: Vec<Node>,
    text: String,
}

fn local(name: &str) -> &str {
    name.rsplit_once(':').map(|(_, l)| l).unwrap_or(name)
}

fn parse_tree(text: &str) -> Result<Vec<Node>, LoadError> {
    let mut reader = Reader::from_str(text);
    reader.config_mut().trim_text(true);
    let mut stack: Vec<Node> = Vec::new();
    let mut roots: Vec<Node> = Vec::new();
    loop {
        let ev = reader
            .read_event()
            .map_err(|e| LoadError::Syntax(e.to_string()))?;
        match ev {
            Event::Start(ref s) | Event::Empty(ref s) => {
                let mut node = Node {
                    tag: String::from_utf8_lossy(s.name().as_ref()).into_owned(),
                    attrs: Vec::new(),
                    children: Vec::new(),
                    text: String::new(),
                };
                for attr in s.attributes() {
                    let attr = attr.map_err(|e| LoadError::Syntax(e.to_string()))?;
                    let key = String::from_utf8_lossy(attr.key.as_ref()).into_owned();
                    let value = attr
                        .unescape_value()
                        .map_err(|e| LoadError::Syntax(e.to_string()))?
                        .into_owned();
                    node.attrs.push((key, value));
                }
                if matches!(ev, Event::Empty(_)) {
                    match stack.last_mut() {
                        Some(parent) => parent.children.push(node),
                        None => roots.push(node),
                    }
                } else {
                    stack.push(node);
                }
            }
            Event::End(_) => {
                let node = stack.pop().ok_or_else(|| {
                    LoadError::Syntax("unbalanced end tag".into())
                })?;
                match stack.last_mut() {
                    Some(parent) => parent.children.push(node),
                    None => roots.push(node),
                }
            }
            Event::Text(t) => {
                let t = t.unescape().map_err(|e| LoadError::Syntax(e.to_string()))?;
                if let Some(top) = stack.last_mut() {
                    top.text.push_str(&t);
                }
            }
            Event::Eof => break,
            _ => {}
        }
    }
    if !stack.is_empty() {
        return Err(LoadError::Syntax("unclosed element".into()));
    }
    Ok(roots)
}

pub fn load_xmi(
    text: &str,
    metamodel: Arc<Metamodel>,
    instance_id: &str,
) -> Result<ModelInstance, LoadError> {
    let roots = parse_tree(text)?;
    let root = roots.into_iter().next().ok_or(LoadError::NoRoot)?;
    let mut i = ModelInstance::new(instance_id, metamodel);
    // (eid, reference name, raw fragment list) pending cross-references.
    let mut pending: Vec<(Eid, String, Vec<String>)> = Vec::new();

    if local(&root.tag) == "XMI" {
        if root.children.is_empty() {
            return Err(LoadError::NoRoot);
        }
        for child in &root.children {
            let class = local(&child.tag).to_string();
            let eid = build_element(&mut i, child, &class, &mut pending)?;
            i.roots.push(eid);
        }
    } else {
        let class = local(&root.tag).to_string();
        let eid = build_element(&mut i, &root, &class, &mut pending)?;
        i.roots.push(eid);
    }

    for (eid, ref_name, frags) in pending {
        if frags.is_empty() {
            continue;
        }
        let mut targets = Vec::new();
        for frag in &frags {
            let decoded = percent_decode_str(frag)
                .decode_utf8()
                .map_err(|_| LoadError::DanglingFragment(frag.clone()))?;
            let target = i
                .resolve_fragment(&decoded)
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
        } else if targets.len() == 1 {
            RefSlot::One(targets[0])
        } else {
            return Err(LoadError::Arity {
                class: e.class.clone(),
                feature: ref_name,
                detail: format!("{} values for a single-valued reference", targets.len()),
            });
        };
        if !targets_empty(&slot) {
            i.element_mut(eid).unwrap().refs.insert(ref_name, slot);
        }
    }
    Ok(i)
}

fn targets_empty(slot: &RefSlot) -> bool {
    matches!(slot, RefSlot::Many(v) if v.is_empty())
}

fn build_element(
    i: &mut ModelInstance,
    node: &Node,
    class: &str,
    pending: &mut Vec<(Eid, String, Vec<String>)>,
) -> Result<Eid, LoadError> {
    let class_def = i
        .metamodel
        .class(class)
        .ok_or_else(|| LoadError::UnknownClass(class.to_string()))?;
    if class_def.is_abstract {
        return Err(LoadError::AbstractClass(class.to_string()));
    }
    let class = class_def.name.clone();
    let eid = i.alloc_eid();
    i.insert(Element::new(eid, class.clone()));

    // XML attributes: scalar attribute values and cross-reference fragments.
    for (key, value) in &node.attrs {
        if key.starts_with("xmlns") || key.starts_with("xmi:") || key.starts_with("xsi:") {
            continue;
        }
        let name = local(key);
        match i.metamodel.feature(&class, name) {
            Some(Feature::Attribute(a)) => {
                if a.many {
                    return Err(LoadError::Arity {
                        class,
                        feature: name.to_string(),
                        detail: "multi-valued attribute serialized as XML attribute".into(),
                    });
                }
                let scalar =
                    Scalar::parse(a.datatype, value).ok_or_else(|| LoadError::Datatype {
                        class: class.clone(),
                        attribute: name.to_string(),
                        datatype: a.datatype,
                        value: value.clone(),
                    })?;
                i.element_mut(eid)
                    .unwrap()
                    .attrs
                    .insert(name.to_string(), AttrValue::One(scalar));
            }
            Some(Feature::Reference(r)) => {
                if r.containment {
                    return Err(LoadError::Arity {
                        class,
                        feature: name.to_string(),
                        detail: "containment reference serialized as XML attribute".into(),
                    });
                }
                let frags: Vec<String> =
                    value.split_whitespace().map(String::from).collect();
                pending.push((eid, name.to_string(), frags));
            }
            None => {
                return Err(LoadError::UnknownFeature {
                    class,
                    feature: name.to_string(),
                })
            }
        }
    }

    // Child elements: containment children, multi-valued attribute values,
    // or href-style cross-references.
    for child in &node.children {
        let name = local(&child.tag).to_string();
        // Copy out what we need before mutating the instance.
        let feature = match i.metamodel.feature(&class, &name) {
            Some(Feature::Attribute(a)) => OwnedFeature::Attribute {
                datatype: a.datatype,
                many: a.many,
            },
            Some(Feature::Reference(r)) => OwnedFeature::Reference {
                containment: r.containment,
                many: r.many(),
                target: r.target.clone(),
            },
            None => {
                return Err(LoadError::UnknownFeature {
                    class,
                    feature: name,
                })
            }
        };
        match feature {
            OwnedFeature::Attribute { datatype, many } => {
                let scalar = Scalar::parse(datatype, child.text.trim()).ok_or_else(|| {
                    LoadError::Datatype {
                        class: class.clone(),
                        attribute: name.clone(),
                        datatype,
                        value: child.text.clone(),
                    }
                })?;
                let e = i.element_mut(eid).unwrap();
                if many {
                    match e.attrs.entry(name).or_insert_with(|| AttrValue::Many(Vec::new())) {
                        AttrValue::Many(vs) => vs.push(scalar),
                        AttrValue::One(_) => unreachable!("many attribute holds Many"),
                    }
                } else {
                    e.attrs.insert(name, AttrValue::One(scalar));
                }
            }
            OwnedFeature::Reference {
                containment,
                many,
                target,
            } => {
                if containment {
                    let xsi_type = child
                        .attrs
                        .iter()
                        .find(|(k, _)| k == "xsi:type" || local(k) == "type")
                        .map(|(_, v)| local(v).to_string());
                    let child_class = xsi_type.unwrap_or(target);
                    let declared = name.clone();
                    let child_eid = build_element(i, child, &child_class, pending)?;
                    let e = i.element_mut(eid).unwrap();
                    if many {
                        match e
                            .refs
                            .entry(declared)
                            .or_insert_with(|| RefSlot::Many(Vec::new()))
                        {
                            RefSlot::Many(v) => v.push(child_eid),
                            RefSlot::One(_) => unreachable!("many slot holds Many"),
                        }
                    } else {
                        e.refs.insert(declared, RefSlot::One(child_eid));
                    }
                } else {
                    let href = child
                        .attrs
                        .iter()
                        .find(|(k, _)| local(k) == "href")
                        .map(|(_, v)| v.clone())
                        .ok_or_else(|| LoadError::Arity {
                            class: class.clone(),
                            feature: name.clone(),
                            detail: "cross-reference child element without href".into(),
                        })?;
                    // Keep only the fragment part of the href.
                    let frag = match href.find('#') {
                        Some(pos) => href[pos..].to_string(),
                        None => href,
                    };
                    match pending.iter_mut().find(|(e, r, _)| *e == eid && *r == name) {
                        Some((_, _, frags)) => frags.push(frag),
                        None => pending.push((eid, name.clone(), vec![frag])),
                    }
                }
            }
        }
    }
    Ok(eid)
}

/// Owned copy of the feature facts needed while building an element, so the
/// metamodel borrow does not outlive mutation of the instance.
enum OwnedFeature {
    Attribute {
        datatype: crate::metamodel::DataType,
        many: bool,
    },
    Reference {
        containment: bool,
        many: bool,
        target: String,
    },
}
