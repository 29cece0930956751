//! Random conforming-instance generation for property tests and
//! benchmarks: builds a containment tree for an arbitrary metamodel, fills
//! attributes with varied scalar values (including characters that need
//! escaping or percent-encoding) and wires random cross-references.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::instance::{AttrValue, Element, Eid, ModelInstance, RefSlot, Scalar};
use crate::metamodel::{AttributeDef, ClassDef, DataType, Feature, Metamodel, ReferenceDef};

/// Build a random instance with at most `max_elements` elements. Every
/// element with an effective identifier gets a unique value for it, so all
/// elements stay addressable by id; lower bounds of containment references
/// are always honored.
pub fn random_instance(
    metamodel: &Arc<Metamodel>,
    rng: &mut impl Rng,
    instance_id: &str,
    max_elements: usize,
) -> ModelInstance {
    let mut instance = ModelInstance::new(instance_id, Arc::clone(metamodel));
    let roots = root_classes(metamodel);
    let root_class = roots.choose(rng).expect("metamodel has a concrete class");
    let mut generator = Generator {
        metamodel,
        rng,
        budget: max_elements.max(1),
        serial: 0,
    };
    let root = generator.create_tree(&mut instance, &root_class.name.clone());
    instance.roots.push(root);
    generator.fill_cross_references(&mut instance);
    instance
}

/// Concrete classes that cannot be owned by any containment reference;
/// falls back to all concrete classes for fully-recursive metamodels.
fn root_classes(m: &Metamodel) -> Vec<&ClassDef> {
    let mut contained: Vec<&str> = Vec::new();
    for class in m.classes() {
        for reference in &class.references {
            if reference.containment {
                for sub in m.concrete_subtypes(&reference.target).unwrap_or_default() {
                    if !contained.contains(&sub.name.as_str()) {
                        contained.push(&sub.name);
                    }
                }
            }
        }
    }
    let roots: Vec<&ClassDef> = m
        .classes()
        .iter()
        .filter(|c| !c.is_abstract && !contained.contains(&c.name.as_str()))
        .collect();
    if roots.is_empty() {
        m.classes().iter().filter(|c| !c.is_abstract).collect()
    } else {
        roots
    }
}

struct Generator<'a, R: Rng> {
    metamodel: &'a Arc<Metamodel>,
    rng: &'a mut R,
    budget: usize,
    serial: usize,
}

impl<R: Rng> Generator<'_, R> {
    fn create_tree(&mut self, instance: &mut ModelInstance, class: &str) -> Eid {
        self.budget = self.budget.saturating_sub(1);
        let eid = instance.alloc_eid();
        let mut element = Element::new(eid, class);
        let identifier = self.metamodel.effective_identifier(class).map(String::from);
        let (attributes, references): (Vec<AttributeDef>, Vec<ReferenceDef>) = {
            let mut attrs = Vec::new();
            let mut refs = Vec::new();
            for feature in self.metamodel.effective_features(class) {
                match feature {
                    Feature::Attribute(a) => attrs.push(a.clone()),
                    Feature::Reference(r) => refs.push(r.clone()),
                }
            }
            (attrs, refs)
        };
        for attribute in &attributes {
            let is_identifier = identifier.as_deref() == Some(attribute.name.as_str());
            if let Some(value) = self.attribute_value(attribute, is_identifier) {
                element.attrs.insert(attribute.name.clone(), value);
            }
        }
        instance.insert(element);

        for reference in references.iter().filter(|r| r.containment) {
            let targets = self
                .metamodel
                .concrete_subtypes(&reference.target)
                .unwrap_or_default()
                .iter()
                .map(|c| c.name.clone())
                .collect::<Vec<_>>();
            if targets.is_empty() {
                continue;
            }
            let count = self.child_count(reference);
            let mut children = Vec::new();
            for _ in 0..count {
                let target = targets.choose(self.rng).unwrap().clone();
                children.push(self.create_tree(instance, &target));
            }
            if !children.is_empty() {
                let slot = if reference.many() {
                    RefSlot::Many(children)
                } else {
                    RefSlot::One(children[0])
                };
                instance
                    .element_mut(eid)
                    .unwrap()
                    .refs
                    .insert(reference.name.clone(), slot);
            }
        }
        eid
    }

    fn child_count(&mut self, reference: &ReferenceDef) -> usize {
        let lower = reference.lower as usize;
        if self.budget == 0 {
            return lower;
        }
        let cap = reference.upper.map(|u| u as usize).unwrap_or(4).min(4);
        let upper = cap.min(lower + self.budget).max(lower);
        let count = self.rng.gen_range(lower..=upper);
        self.budget = self.budget.saturating_sub(count.saturating_sub(lower));
        count
    }

    fn attribute_value(
        &mut self,
        attribute: &AttributeDef,
        is_identifier: bool,
    ) -> Option<AttrValue> {
        if is_identifier {
            // Unique, always set, occasionally with characters that must be
            // percent-encoded in URLs and XMI fragments.
            self.serial += 1;
            let sep = ["", " ", "'", "-"].choose(self.rng).unwrap();
            return Some(AttrValue::One(Scalar::Str(format!(
                "El{sep}{}",
                self.serial
            ))));
        }
        if attribute.unique {
            self.serial += 1;
            return Some(AttrValue::One(Scalar::Str(format!("U{}", self.serial))));
        }
        // Optional features stay unset about a quarter of the time.
        if self.rng.gen_bool(0.25) {
            return None;
        }
        if attribute.many {
            let values = (0..self.rng.gen_range(1..=3))
                .map(|_| self.scalar(attribute.datatype))
                .collect();
            Some(AttrValue::Many(values))
        } else {
            Some(AttrValue::One(self.scalar(attribute.datatype)))
        }
    }

    fn scalar(&mut self, datatype: DataType) -> Scalar {
        match datatype {
            DataType::String => Scalar::Str(self.string()),
            DataType::Boolean => Scalar::Bool(self.rng.gen()),
            DataType::Integer => Scalar::Int(self.rng.gen_range(-1000..1000)),
            DataType::Float => {
                // Halves round-trip exactly through decimal rendering.
                Scalar::Float(self.rng.gen_range(-2000..2000) as f64 / 2.0)
            }
        }
    }

    fn string(&mut self) -> String {
        const POOLS: [&str; 4] = [
            "abcdefghij",
            "ABC xyz 09",
            "<&>\"' %/#?",
            "éß漢字Ω",
        ];
        // Length >= 1: the XML wire format cannot distinguish an empty
        // string from an unset attribute (both render as an empty element).
        let pool: Vec<char> = POOLS.choose(self.rng).unwrap().chars().collect();
        (0..self.rng.gen_range(1..12))
            .map(|_| *pool.choose(self.rng).unwrap())
            .collect()
    }

    fn fill_cross_references(&mut self, instance: &mut ModelInstance) {
        let eids: Vec<Eid> = instance.elements().map(|e| e.eid).collect();
        for eid in eids {
            let class = instance.element(eid).unwrap().class.clone();
            let references: Vec<ReferenceDef> = self
                .metamodel
                .effective_features(&class)
                .into_iter()
                .filter_map(|f| match f {
                    Feature::Reference(r) if !r.containment => Some(r.clone()),
                    _ => None,
                })
                .collect();
            for reference in references {
                let candidates: Vec<Eid> = instance
                    .elements()
                    .filter(|e| {
                        self.metamodel
                            .is_subtype(&e.class, &reference.target)
                            .unwrap_or(false)
                    })
                    .map(|e| e.eid)
                    .collect();
                if candidates.is_empty() {
                    continue;
                }
                let cap = reference
                    .upper
                    .map(|u| u as usize)
                    .unwrap_or(candidates.len())
                    .min(candidates.len());
                let lower = (reference.lower as usize).min(cap);
                let count = self.rng.gen_range(lower..=cap);
                if count == 0 {
                    continue;
                }
                let mut chosen = candidates;
                chosen.shuffle(self.rng);
                chosen.truncate(count);
                let slot = if reference.many() {
                    RefSlot::Many(chosen)
                } else {
                    RefSlot::One(chosen[0])
                };
                instance
                    .element_mut(eid)
                    .unwrap()
                    .refs
                    .insert(reference.name.clone(), slot);
            }
        }
    }
}
