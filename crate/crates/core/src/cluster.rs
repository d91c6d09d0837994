//! Duplicate clusters as connected components of the collision graph.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::{CollisionEdge, Error};

/// Disjoint sets with path compression and union by size.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        Self { parent: (0..n).collect(), size: alloc::vec![1; n] }
    }

    pub fn find(&mut self, x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        let mut cur = x;
        while self.parent[cur] != root {
            let next = self.parent[cur];
            self.parent[cur] = root;
            cur = next;
        }
        root
    }

    /// Merges the sets of `a` and `b`; returns false if they were already one.
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra] < self.size[rb] {
            core::mem::swap(&mut ra, &mut rb);
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

/// A set of at least two mutually duplicate images.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DuplicateCluster {
    pub id: usize,
    /// Sorted.
    pub members: Vec<String>,
    /// The member kept by deduplication: the lexicographically smallest id.
    pub retained: String,
}

impl DuplicateCluster {
    pub fn removed(&self) -> impl Iterator<Item = &str> {
        self.members.iter().map(String::as_str).filter(move |m| *m != self.retained)
    }
}

/// Connected components of `edges` over `all_ids`, skipping singletons.
/// Clusters are numbered in order of their retained id.
pub fn cluster(
    edges: &[CollisionEdge],
    all_ids: &[String],
) -> Result<Vec<DuplicateCluster>, Error> {
    let mut position: BTreeMap<&str, usize> = BTreeMap::new();
    for (i, id) in all_ids.iter().enumerate() {
        if position.insert(id.as_str(), i).is_some() {
            return Err(Error::InvalidInput(format!("duplicate image id {id:?}")));
        }
    }
    let lookup = |id: &str| {
        position
            .get(id)
            .copied()
            .ok_or_else(|| Error::InvalidInput(format!("edge references unknown id {id:?}")))
    };

    let mut sets = UnionFind::new(all_ids.len());
    for edge in edges {
        let (a, b) = (lookup(&edge.a)?, lookup(&edge.b)?);
        sets.union(a, b);
    }

    let mut groups: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    for (i, id) in all_ids.iter().enumerate() {
        let root = sets.find(i);
        groups.entry(root).or_default().push(id.clone());
    }
    let mut clusters: Vec<DuplicateCluster> = groups
        .into_values()
        .filter(|members| members.len() > 1)
        .map(|mut members| {
            members.sort();
            DuplicateCluster { id: 0, retained: members[0].clone(), members }
        })
        .collect();
    clusters.sort_by(|x, y| x.retained.cmp(&y.retained));
    for (i, c) in clusters.iter_mut().enumerate() {
        c.id = i;
    }
    Ok(clusters)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{PerceptualHash, Transform};
    use alloc::string::ToString;
    use alloc::vec;

    fn edge(a: &str, b: &str) -> CollisionEdge {
        CollisionEdge {
            a: a.into(),
            b: b.into(),
            witness: Transform::Identity,
            target: Transform::Identity,
            hash: PerceptualHash::from_bits(0),
        }
    }

    fn ids(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn no_edges_no_clusters() {
        assert!(cluster(&[], &ids(&["a", "b"])).unwrap().is_empty());
    }

    #[test]
    fn transitive_chain() {
        let clusters =
            cluster(&[edge("c", "b"), edge("b", "a")], &ids(&["a", "b", "c", "d"])).unwrap();
        assert_eq!(clusters.len(), 1);
        assert_eq!(clusters[0].members, ids(&["a", "b", "c"]));
        assert_eq!(clusters[0].retained, "a");
        assert_eq!(clusters[0].removed().collect::<Vec<_>>(), vec!["b", "c"]);
    }

    #[test]
    fn unknown_id_is_an_error() {
        assert!(cluster(&[edge("a", "z")], &ids(&["a"])).is_err());
        assert!(cluster(&[], &ids(&["a", "a"])).is_err());
    }

    #[test]
    fn union_by_size() {
        let mut uf = UnionFind::new(5);
        assert!(uf.union(0, 1));
        assert!(uf.union(2, 1));
        assert!(!uf.union(0, 2));
        assert_eq!(uf.find(2), uf.find(0));
        assert_ne!(uf.find(3), uf.find(0));
    }
}
