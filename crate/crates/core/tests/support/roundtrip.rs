//! Round-trip properties over randomly generated instances, shared between
//! the property test target and the acceptance suite: storage serialization
//! is a fixpoint for both formats, wire documents parse back to the values
//! they were rendered from, and every emitted URI addresses the element it
//! was rendered for.

use std::collections::BTreeSet;
use std::sync::Arc;

use rand::rngs::StdRng;
use rand::SeedableRng;

use metarest_core::instance::{
    load_instance, resolve_path, save_json, save_xmi, AttrAssign, ResourcePath, StorageFormat,
    Target,
};
use metarest_core::repr::{parse_payload, to_json, to_xml, uri_for, WireFormat};
use metarest_core::sample::random_instance;
use metarest_core::{Metamodel, ModelInstance};

pub fn instances(
    metamodel: &Arc<Metamodel>,
    count: u64,
) -> impl Iterator<Item = ModelInstance> + '_ {
    (0..count).map(|seed| {
        let mut rng = StdRng::seed_from_u64(seed);
        random_instance(metamodel, &mut rng, "T", 30)
    })
}

pub fn xmi_fixpoint(metamodel: &Arc<Metamodel>, count: u64) {
    for instance in instances(metamodel, count) {
        let text = save_xmi(&instance);
        let reloaded = load_instance(&text, StorageFormat::Xmi, Arc::clone(metamodel), "T")
            .unwrap_or_else(|e| panic!("reload failed: {e}\n{text}"));
        assert_eq!(reloaded.len(), instance.len());
        assert_eq!(save_xmi(&reloaded), text);
    }
}

pub fn json_fixpoint(metamodel: &Arc<Metamodel>, count: u64) {
    for instance in instances(metamodel, count) {
        let text = save_json(&instance);
        let reloaded = load_instance(&text, StorageFormat::Json, Arc::clone(metamodel), "T")
            .unwrap_or_else(|e| panic!("reload failed: {e}\n{text}"));
        assert_eq!(reloaded.len(), instance.len());
        assert_eq!(save_json(&reloaded), text);
    }
}

pub fn formats_agree(metamodel: &Arc<Metamodel>, count: u64) {
    for instance in instances(metamodel, count) {
        let via_xmi = load_instance(
            &save_xmi(&instance),
            StorageFormat::Xmi,
            Arc::clone(metamodel),
            "T",
        )
        .unwrap();
        let via_json = load_instance(
            &save_json(&instance),
            StorageFormat::Json,
            Arc::clone(metamodel),
            "T",
        )
        .unwrap();
        // The two paths may assign different eids; compare the canonical
        // XMI text instead.
        assert_eq!(save_xmi(&via_xmi), save_xmi(&via_json));
    }
}

/// Rendering an element to a wire document and parsing the document back
/// preserves the attribute values and the reference URI multisets.
pub fn wire_parse_back(metamodel: &Arc<Metamodel>, count: u64, base: &str) {
    for instance in instances(metamodel, count) {
        for element in instance.elements() {
            if uri_for(&instance, element.eid, base).is_err() {
                continue;
            }
            for format in [WireFormat::Json, WireFormat::Xml] {
                let target = Target::Element(element.eid);
                let doc = match format {
                    WireFormat::Json => to_json(&instance, &target, base),
                    WireFormat::Xml => to_xml(&instance, &target, base),
                };
                let payload = parse_payload(&doc, Some(&element.class), metamodel)
                    .unwrap_or_else(|e| panic!("{e}\n{}", doc.body));
                assert_eq!(payload.class, element.class);
                for (name, value) in &element.attrs {
                    match payload.attrs.get(name) {
                        Some(AttrAssign::Set(parsed)) => assert_eq!(
                            parsed, value,
                            "attribute {name} of {} ({format:?})",
                            element.class
                        ),
                        other => panic!("attribute {name} parsed as {other:?}"),
                    }
                }
                for (name, slot) in &element.refs {
                    if metamodel
                        .reference(&element.class, name)
                        .map(|r| r.containment)
                        .unwrap_or(false)
                    {
                        continue;
                    }
                    let expected: BTreeSet<String> = slot
                        .eids()
                        .iter()
                        .map(|&eid| uri_for(&instance, eid, base).unwrap())
                        .collect();
                    let parsed: BTreeSet<String> = payload
                        .refs
                        .get(name)
                        .cloned()
                        .unwrap_or_default()
                        .into_iter()
                        .collect();
                    assert_eq!(parsed, expected, "reference {name} ({format:?})");
                }
            }
        }
    }
}

/// Every URI emitted for an element resolves back to that element.
pub fn uris_resolve(metamodel: &Arc<Metamodel>, count: u64, base: &str) {
    for instance in instances(metamodel, count) {
        for element in instance.elements() {
            let Ok(uri) = uri_for(&instance, element.eid, base) else {
                continue;
            };
            let tail = uri.strip_prefix(base).unwrap();
            let (path, query) = match tail.split_once('?') {
                Some((p, q)) => (p, Some(q.to_string())),
                None => (tail, None),
            };
            let parsed: ResourcePath =
                metarest_core::router::parse_request_url(path, query.as_deref()).unwrap();
            match resolve_path(&instance, &parsed) {
                Ok(Target::Element(eid)) => assert_eq!(eid, element.eid, "{uri}"),
                other => panic!("{uri} resolved to {other:?}"),
            }
        }
    }
}
