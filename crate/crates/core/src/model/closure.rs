use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{EntityId, ModelError, Pair, SameAsAssertion, Verdict};

/// Disjoint-set forest with path halving and union by size.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    pub fn new(len: usize) -> Self {
        Self {
            parent: (0..len).collect(),
            size: vec![1; len],
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Returns `true` if two distinct sets were merged.
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
        true
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }
}

/// One identity group. Members are never empty; singletons are valid sets.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EquivalenceSet {
    members: BTreeSet<EntityId>,
}

impl EquivalenceSet {
    pub fn new(members: BTreeSet<EntityId>) -> Option<Self> {
        (!members.is_empty()).then_some(Self { members })
    }

    pub fn singleton(id: EntityId) -> Self {
        Self {
            members: BTreeSet::from([id]),
        }
    }

    pub fn members(&self) -> &BTreeSet<EntityId> {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, id: &EntityId) -> bool {
        self.members.contains(id)
    }

    /// Smallest member id; used as a stable label for the set.
    pub fn representative(&self) -> &EntityId {
        self.members.iter().next().expect("non-empty")
    }
}

/// Transitive closure of the `same` assertions over `ids`.
///
/// Assertions with any other verdict are ignored, `related` included. Every
/// id lands in exactly one output set; sets are ordered by their smallest
/// member.
pub fn equivalence_classes<'a, I>(
    ids: I,
    confirmed: &[SameAsAssertion],
) -> Result<Vec<EquivalenceSet>, ModelError>
where
    I: IntoIterator<Item = &'a EntityId>,
{
    equivalence_classes_from_pairs(
        ids,
        confirmed
            .iter()
            .filter(|a| a.verdict == Verdict::Same)
            .map(|a| &a.pair),
    )
}

pub fn equivalence_classes_from_pairs<'a, 'p, I, P>(
    ids: I,
    pairs: P,
) -> Result<Vec<EquivalenceSet>, ModelError>
where
    I: IntoIterator<Item = &'a EntityId>,
    P: IntoIterator<Item = &'p Pair>,
{
    let index: BTreeMap<&EntityId, usize> = ids
        .into_iter()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .enumerate()
        .map(|(i, id)| (id, i))
        .collect();
    let mut uf = UnionFind::new(index.len());
    for pair in pairs {
        let a = *index
            .get(pair.a())
            .ok_or_else(|| ModelError::DanglingId(pair.a().clone()))?;
        let b = *index
            .get(pair.b())
            .ok_or_else(|| ModelError::DanglingId(pair.b().clone()))?;
        uf.union(a, b);
    }

    let mut groups: BTreeMap<usize, BTreeSet<EntityId>> = BTreeMap::new();
    for (id, &i) in &index {
        groups.entry(uf.find(i)).or_default().insert((*id).clone());
    }
    let mut sets: Vec<EquivalenceSet> = groups
        .into_values()
        .map(|members| EquivalenceSet { members })
        .collect();
    sets.sort_by(|x, y| x.representative().cmp(y.representative()));
    Ok(sets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::canonical_pair;

    fn id(s: &str) -> EntityId {
        EntityId::new(s).unwrap()
    }

    fn same(a: &str, b: &str) -> SameAsAssertion {
        SameAsAssertion::confirmed(canonical_pair(id(a), id(b)).unwrap())
    }

    fn names(sets: &[EquivalenceSet]) -> Vec<Vec<&str>> {
        sets.iter()
            .map(|s| s.members().iter().map(EntityId::as_str).collect())
            .collect()
    }

    #[test]
    fn transitive_chain() {
        let ids: Vec<_> = ["a", "b", "c", "d"].into_iter().map(id).collect();
        let sets = equivalence_classes(&ids, &[same("a", "b"), same("b", "c")]).unwrap();
        assert_eq!(names(&sets), vec![vec!["a", "b", "c"], vec!["d"]]);
    }

    #[test]
    fn reflexivity_only() {
        let ids: Vec<_> = ["a", "b"].into_iter().map(id).collect();
        let sets = equivalence_classes(&ids, &[]).unwrap();
        assert_eq!(names(&sets), vec![vec!["a"], vec!["b"]]);
    }

    #[test]
    fn star_shape_merges() {
        let ids: Vec<_> = ["a", "b", "c"].into_iter().map(id).collect();
        let sets = equivalence_classes(&ids, &[same("a", "b"), same("a", "c")]).unwrap();
        assert_eq!(names(&sets), vec![vec!["a", "b", "c"]]);
    }

    #[test]
    fn related_does_not_merge() {
        let ids: Vec<_> = ["a", "b"].into_iter().map(id).collect();
        let mut rel = same("a", "b");
        rel.verdict = Verdict::Related;
        let sets = equivalence_classes(&ids, &[rel]).unwrap();
        assert_eq!(sets.len(), 2);
    }

    #[test]
    fn dangling_id_is_an_error() {
        let ids = vec![id("a")];
        assert_eq!(
            equivalence_classes(&ids, &[same("a", "z")]),
            Err(ModelError::DanglingId(id("z")))
        );
    }

    #[test]
    fn union_find_basics() {
        let mut uf = UnionFind::new(4);
        assert!(uf.union(0, 1));
        assert!(!uf.union(1, 0));
        assert_eq!(uf.find(0), uf.find(1));
        assert_ne!(uf.find(0), uf.find(2));
    }
}
