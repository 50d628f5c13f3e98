//! Object similarity.
//!
//! Two objects are similar when some isomorphism between their weakly
//! connected components maps one onto the other. Node labels must match
//! exactly (concept equality) and edges keep both relation name and direction.
//!
//! Every check first runs color refinement on each component, one round at
//! a time. Colors are isomorphism-invariant, so the first round at which the
//! two objects' colors (or the two components' color histograms) differ
//! refutes similarity without search. Pairs that survive until the partition
//! stops splitting go to the exact backtracking search, which restricts
//! candidates to same-colored neighbors of already mapped nodes.

use std::collections::hash_map::DefaultHasher;
use std::collections::{HashMap, HashSet, VecDeque};
use std::hash::{Hash, Hasher};

use super::{Dir, Incident, KnowledgeError, KnowledgeView, ObjectId};
use crate::ontology::{ConceptIdx, RelIdx};

struct LocalGraph {
    nodes: Vec<ObjectId>,
    concepts: Vec<ConceptIdx>,
    adj: Vec<Vec<(Dir, RelIdx, usize)>>,
    edges: HashSet<(RelIdx, usize, usize)>,
}

impl LocalGraph {
    fn of_component<V: KnowledgeView>(view: &V, start: ObjectId) -> LocalGraph {
        let mut seen = HashSet::from([start]);
        let mut queue = VecDeque::from([start]);
        let mut raw: Vec<(ObjectId, Vec<Incident>)> = Vec::new();
        while let Some(cur) = queue.pop_front() {
            let mut inc = Vec::new();
            view.incident(cur, &mut inc);
            for &(_, _, other) in &inc {
                if seen.insert(other) {
                    queue.push_back(other);
                }
            }
            raw.push((cur, inc));
        }
        raw.sort_by_key(|(id, _)| *id);
        let nodes: Vec<ObjectId> = raw.iter().map(|(id, _)| *id).collect();
        let local = |id: ObjectId| nodes.binary_search(&id).expect("component is closed");
        let mut adj = Vec::with_capacity(nodes.len());
        let mut edges = HashSet::new();
        for (i, (_, inc)) in raw.iter().enumerate() {
            let mut list: Vec<(Dir, RelIdx, usize)> =
                inc.iter().map(|&(d, r, o)| (d, r, local(o))).collect();
            list.sort_unstable();
            for &(d, r, j) in &list {
                if d == Dir::Out {
                    edges.insert((r, i, j));
                }
            }
            adj.push(list);
        }
        let concepts = nodes.iter().map(|&id| view.concept_of(id)).collect();
        LocalGraph {
            nodes,
            concepts,
            adj,
            edges,
        }
    }

    fn local(&self, id: ObjectId) -> Option<usize> {
        self.nodes.binary_search(&id).ok()
    }

    fn has(&self, relation: RelIdx, src: usize, dst: usize) -> bool {
        self.edges.contains(&(relation, src, dst))
    }
}

fn hash_of<T: Hash>(value: &T) -> u64 {
    let mut h = DefaultHasher::new();
    value.hash(&mut h);
    h.finish()
}

/// Color refinement computed one round at a time. Every round is kept, so
/// two nodes can be told apart at the first round where their colors differ
/// without refining the rest of the way.
struct Refinement {
    rounds: Vec<Vec<u64>>,
    /// Sorted colors of each round.
    histograms: Vec<Vec<u64>>,
    /// First round that split no class.
    stable: Option<usize>,
}

fn class_count(histogram: &[u64]) -> usize {
    histogram.windows(2).filter(|w| w[0] != w[1]).count() + usize::from(!histogram.is_empty())
}

impl Refinement {
    fn new(g: &LocalGraph) -> Self {
        let colors: Vec<u64> = g.concepts.iter().map(|c| hash_of(&c.0)).collect();
        let mut histogram = colors.clone();
        histogram.sort_unstable();
        Refinement {
            rounds: vec![colors],
            histograms: vec![histogram],
            stable: None,
        }
    }

    fn step(&mut self, g: &LocalGraph) {
        let colors = self.rounds.last().expect("round zero exists");
        let mut sig: Vec<(u8, u32, u64)> = Vec::new();
        let next: Vec<u64> = (0..g.nodes.len())
            .map(|v| {
                sig.clear();
                sig.extend(g.adj[v].iter().map(|&(d, r, w)| (d as u8, r.0, colors[w])));
                sig.sort_unstable();
                hash_of(&(colors[v], &sig))
            })
            .collect();
        let mut histogram = next.clone();
        histogram.sort_unstable();
        let before = class_count(self.histograms.last().expect("round zero exists"));
        if class_count(&histogram) == before {
            self.stable = Some(self.rounds.len());
        }
        self.rounds.push(next);
        self.histograms.push(histogram);
    }

    fn reach(&mut self, g: &LocalGraph, k: usize) {
        while self.rounds.len() <= k {
            self.step(g);
        }
    }

    fn run(&mut self, g: &LocalGraph) -> usize {
        while self.stable.is_none() {
            self.step(g);
        }
        self.stable.expect("loop ran to stability")
    }
}

/// Refines until `x` and `y` of the same graph get different colors, or the
/// partition is stable. Returns the stable round if they never split.
fn unsplit_within(g: &LocalGraph, r: &mut Refinement, x: usize, y: usize) -> Option<usize> {
    for k in 0.. {
        r.reach(g, k);
        if r.rounds[k][x] != r.rounds[k][y] {
            return None;
        }
        if r.stable == Some(k) {
            return Some(k);
        }
    }
    unreachable!()
}

/// As [`unsplit_within`] for nodes of two graphs, also comparing the color
/// histograms round by round. Equal histograms imply both partitions become
/// stable at the same round.
fn unsplit_between(
    a: &LocalGraph,
    ra: &mut Refinement,
    a0: usize,
    b: &LocalGraph,
    rb: &mut Refinement,
    b0: usize,
) -> Option<usize> {
    for k in 0.. {
        ra.reach(a, k);
        rb.reach(b, k);
        if ra.rounds[k][a0] != rb.rounds[k][b0] || ra.histograms[k] != rb.histograms[k] {
            return None;
        }
        if ra.stable == Some(k) {
            return Some(k);
        }
    }
    unreachable!()
}

/// Searches for an isomorphism `a -> b` with `a0 -> b0`. Callers guarantee
/// equal node and edge counts.
fn find_iso(a: &LocalGraph, ca: &[u64], a0: usize, b: &LocalGraph, cb: &[u64], b0: usize) -> bool {
    let n = a.nodes.len();
    // BFS order over `a`, each node remembering how it was reached.
    let mut order = vec![(a0, usize::MAX, Dir::Out, RelIdx(0))];
    let mut placed = vec![false; n];
    placed[a0] = true;
    let mut head = 0;
    while head < order.len() {
        let u = order[head].0;
        head += 1;
        for &(d, r, w) in &a.adj[u] {
            if !placed[w] {
                placed[w] = true;
                order.push((w, u, d, r));
            }
        }
    }
    debug_assert_eq!(order.len(), n, "component must be connected");

    struct Search<'s> {
        a: &'s LocalGraph,
        b: &'s LocalGraph,
        ca: &'s [u64],
        cb: &'s [u64],
        order: Vec<(usize, usize, Dir, RelIdx)>,
        map: Vec<usize>,
        used: Vec<bool>,
    }

    impl Search<'_> {
        fn fits(&self, u: usize, w: usize) -> bool {
            if self.a.concepts[u] != self.b.concepts[w]
                || self.ca[u] != self.cb[w]
                || self.a.adj[u].len() != self.b.adj[w].len()
                || self.used[w]
            {
                return false;
            }
            self.a.adj[u].iter().all(|&(d, r, x)| {
                let image = if x == u { w } else { self.map[x] };
                if image == usize::MAX {
                    return true;
                }
                match d {
                    Dir::Out => self.b.has(r, w, image),
                    Dir::In => self.b.has(r, image, w),
                }
            })
        }

        fn extend(&mut self, k: usize) -> bool {
            if k == self.order.len() {
                return true;
            }
            let (u, parent, dir, rel) = self.order[k];
            let pw = self.map[parent];
            let candidates: Vec<usize> = self.b.adj[pw]
                .iter()
                .filter(|&&(d, r, _)| d == dir && r == rel)
                .map(|&(_, _, w)| w)
                .collect();
            for w in candidates {
                if self.fits(u, w) {
                    self.map[u] = w;
                    self.used[w] = true;
                    if self.extend(k + 1) {
                        return true;
                    }
                    self.used[w] = false;
                    self.map[u] = usize::MAX;
                }
            }
            false
        }
    }

    let mut search = Search {
        a,
        b,
        ca,
        cb,
        order,
        map: vec![usize::MAX; n],
        used: vec![false; b.nodes.len()],
    };
    if !search.fits(a0, b0) {
        return false;
    }
    search.map[a0] = b0;
    search.used[b0] = true;
    search.extend(1)
}

/// Hash of the two-hop unfolding around `v`: its concept, the labelled edges
/// to its neighbors, and the same one level further out. Isomorphisms
/// preserve it, and it costs only the two-hop neighborhood to compute.
fn neighborhood_hash<V: KnowledgeView>(view: &V, v: ObjectId) -> u64 {
    let mut inc = Vec::new();
    let mut around = Vec::new();
    view.incident(v, &mut inc);
    let mut level: Vec<(u8, u32, u64)> = inc
        .iter()
        .map(|&(d, r, w)| {
            around.clear();
            view.incident(w, &mut around);
            let mut first: Vec<(u8, u32, u32)> = around
                .iter()
                .map(|&(d2, r2, x)| (d2 as u8, r2.0, view.concept_of(x).0))
                .collect();
            first.sort_unstable();
            (d as u8, r.0, hash_of(&(view.concept_of(w).0, first)))
        })
        .collect();
    level.sort_unstable();
    hash_of(&(view.concept_of(v).0, level))
}

/// True iff `obj` is similar to at least one of `candidates`.
pub fn similar_to_any<V: KnowledgeView>(view: &V, obj: ObjectId, candidates: &[ObjectId]) -> bool {
    similar_witness(view, obj, candidates).is_some()
}

/// The first of `candidates` found similar to `obj`, if any.
///
/// Candidates whose two-hop neighborhood differs are dropped before any
/// component is built. Components of the remaining candidates are built and
/// refined once each, so a long list sharing a few components stays cheap.
pub fn similar_witness<V: KnowledgeView>(
    view: &V,
    obj: ObjectId,
    candidates: &[ObjectId],
) -> Option<ObjectId> {
    if candidates.contains(&obj) {
        return Some(obj);
    }
    let local = neighborhood_hash(view, obj);
    let candidates: Vec<ObjectId> = candidates
        .iter()
        .copied()
        .filter(|&p| neighborhood_hash(view, p) == local)
        .collect();
    if candidates.is_empty() {
        return None;
    }
    let target = LocalGraph::of_component(view, obj);
    let mut refined = Refinement::new(&target);
    let t0 = target.local(obj).expect("start node is in its component");
    let mut cache: Vec<(LocalGraph, Refinement)> = Vec::new();
    let mut owner: HashMap<ObjectId, usize> = HashMap::new();

    for p in candidates {
        if let Some(pl) = target.local(p) {
            if let Some(k) = unsplit_within(&target, &mut refined, t0, pl) {
                let colors = &refined.rounds[k];
                if find_iso(&target, colors, t0, &target, colors, pl) {
                    return Some(p);
                }
            }
            continue;
        }
        let idx = match owner.get(&p) {
            Some(&i) => i,
            None => {
                let g = LocalGraph::of_component(view, p);
                let r = Refinement::new(&g);
                let i = cache.len();
                for &m in &g.nodes {
                    owner.insert(m, i);
                }
                cache.push((g, r));
                i
            }
        };
        let (g, r) = &mut cache[idx];
        if g.nodes.len() != target.nodes.len() || g.edges.len() != target.edges.len() {
            continue;
        }
        let pl = g.local(p).expect("candidate is in its component");
        if let Some(k) = unsplit_between(&target, &mut refined, t0, g, r, pl) {
            if find_iso(&target, &refined.rounds[k], t0, g, &r.rounds[k], pl) {
                return Some(p);
            }
        }
    }
    None
}

/// Whether an isomorphism of the two objects' components maps `a` to `b`.
pub fn objects_similar<V: KnowledgeView>(
    view: &V,
    a: ObjectId,
    b: ObjectId,
) -> Result<bool, KnowledgeError> {
    for id in [a, b] {
        if !view.contains(id) {
            return Err(KnowledgeError::UnknownObject(id));
        }
    }
    Ok(similar_to_any(view, a, &[b]))
}

/// Stable color-refinement color of `obj` within its component. Similar
/// objects always share it; the converse does not hold.
pub fn refinement_hash<V: KnowledgeView>(view: &V, obj: ObjectId) -> Result<u64, KnowledgeError> {
    if !view.contains(obj) {
        return Err(KnowledgeError::UnknownObject(obj));
    }
    let g = LocalGraph::of_component(view, obj);
    let mut r = Refinement::new(&g);
    let k = r.run(&g);
    Ok(
        r.rounds[k][g.local(obj).expect("start node is in its component")]
            ^ (k as u64).rotate_left(32),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::knowledge::{Edge, KnowledgeState, Provenance};

    fn state(concepts: &[u32], edges: &[(u32, u32, u32)]) -> KnowledgeState {
        let mut s = KnowledgeState::new();
        for (i, &c) in concepts.iter().enumerate() {
            s.add_object(ConceptIdx(c), Provenance::FromRequest(format!("o{i}")));
        }
        for &(r, a, b) in edges {
            s.add_edge(Edge {
                relation: RelIdx(r),
                src: ObjectId(a),
                dst: ObjectId(b),
            });
        }
        s
    }

    #[test]
    fn reflexive() {
        let s = state(&[0, 1], &[(0, 0, 1)]);
        assert!(objects_similar(&s, ObjectId(0), ObjectId(0)).unwrap());
    }

    #[test]
    fn isolated_objects() {
        let s = state(&[0, 0, 1], &[]);
        assert!(objects_similar(&s, ObjectId(0), ObjectId(1)).unwrap());
        assert!(!objects_similar(&s, ObjectId(0), ObjectId(2)).unwrap());
    }

    #[test]
    fn relation_names_matter() {
        // person->city via hasDest (r0) vs person->city via isLocatedIn (r1)
        let s = state(&[0, 1, 0, 1], &[(0, 0, 1), (1, 2, 3)]);
        assert!(!objects_similar(&s, ObjectId(0), ObjectId(2)).unwrap());
        let s = state(&[0, 1, 0, 1], &[(0, 0, 1), (0, 2, 3)]);
        assert!(objects_similar(&s, ObjectId(0), ObjectId(2)).unwrap());
        assert!(objects_similar(&s, ObjectId(1), ObjectId(3)).unwrap());
        assert!(!objects_similar(&s, ObjectId(0), ObjectId(3)).unwrap());
    }

    #[test]
    fn direction_matters() {
        let s = state(&[0, 0, 0, 0], &[(0, 0, 1), (0, 3, 2)]);
        assert!(objects_similar(&s, ObjectId(0), ObjectId(3)).unwrap());
        assert!(!objects_similar(&s, ObjectId(0), ObjectId(2)).unwrap());
    }

    #[test]
    fn automorphism_inside_one_component() {
        // u -> a, u -> b: a and b are swappable.
        let s = state(&[0, 1, 1], &[(0, 0, 1), (0, 0, 2)]);
        assert!(objects_similar(&s, ObjectId(1), ObjectId(2)).unwrap());
        // a directed path has no non-trivial automorphism
        let s = state(&[0, 0, 0], &[(0, 0, 1), (0, 1, 2)]);
        assert!(!objects_similar(&s, ObjectId(0), ObjectId(2)).unwrap());
    }

    #[test]
    fn refinement_blind_spot_resolved_by_search() {
        // Two 6-cycles vs. two triangles look identical to color refinement
        // (every node has one in- and one out-edge) but differ structurally.
        let mut edges = vec![];
        for i in 0..6 {
            edges.push((0, i, (i + 1) % 6));
        }
        for i in 0..3 {
            edges.push((0, 6 + i, 6 + (i + 1) % 3));
            edges.push((0, 9 + i, 9 + (i + 1) % 3));
        }
        let s = state(&[0; 12], &edges);
        assert!(!objects_similar(&s, ObjectId(0), ObjectId(6)).unwrap());
        assert!(objects_similar(&s, ObjectId(6), ObjectId(9)).unwrap());
        assert!(objects_similar(&s, ObjectId(0), ObjectId(3)).unwrap());
    }

    #[test]
    fn hash_separates_obvious_cases() {
        let s = state(&[0, 1, 0, 1], &[(0, 0, 1), (1, 2, 3)]);
        assert_ne!(
            refinement_hash(&s, ObjectId(0)).unwrap(),
            refinement_hash(&s, ObjectId(2)).unwrap()
        );
        assert!(refinement_hash(&s, ObjectId(7)).is_err());
    }
}
