use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::{Entity, EntityId, EquivalenceSet, PropertyValue, ValueKey};
use crate::normalize::CleanerChain;

/// Id lookup over a borrowed slice of entities.
#[derive(Debug, Clone, Default)]
pub struct EntityIndex<'a> {
    by_id: HashMap<&'a EntityId, &'a Entity>,
}

impl<'a> EntityIndex<'a> {
    pub fn new(entities: impl IntoIterator<Item = &'a Entity>) -> Self {
        Self {
            by_id: entities.into_iter().map(|e| (&e.id, e)).collect(),
        }
    }

    pub fn get(&self, id: &EntityId) -> Option<&'a Entity> {
        self.by_id.get(id).copied()
    }

    pub fn len(&self) -> usize {
        self.by_id.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_id.is_empty()
    }
}

/// A unique-valued property carrying two or more distinct values across one
/// equivalence set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintViolation {
    pub set: EquivalenceSet,
    pub property: String,
    /// One representative per distinct normalized value, ordered by value.
    pub values: Vec<PropertyValue>,
}

/// Reports every unique property whose values disagree inside `class`.
///
/// Values are compared after the property's cleaner chain (if any) has been
/// applied, so `+43 ...` and `0043 ...` count as one value under a phone
/// chain. Members missing from `entities` contribute nothing.
pub fn detect_violations(
    class: &EquivalenceSet,
    entities: &EntityIndex<'_>,
    unique_props: &BTreeSet<String>,
    chains: &BTreeMap<String, CleanerChain>,
) -> Vec<ConstraintViolation> {
    let mut out = Vec::new();
    for property in unique_props {
        let chain = chains.get(property);
        let mut distinct: BTreeMap<ValueKey, PropertyValue> = BTreeMap::new();
        for member in class.members() {
            let Some(entity) = entities.get(member) else {
                continue;
            };
            for value in entity.values(property) {
                let cleaned = match chain {
                    Some(chain) => chain.clean(value),
                    None => vec![value.clone()],
                };
                for c in cleaned {
                    distinct.entry(c.key()).or_insert_with(|| value.clone());
                }
            }
        }
        if distinct.len() >= 2 {
            out.push(ConstraintViolation {
                set: class.clone(),
                property: property.clone(),
                values: distinct.into_values().collect(),
            });
        }
    }
    out
}
