//! The dynamic knowledge state: typed objects and labeled relation edges.
//!
//! Knowledge only grows. Objects get dense ids in creation order, edges have
//! set semantics, and adjacency lists are kept in insertion order so every
//! traversal is deterministic.

mod similarity;

use std::collections::HashSet;
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ontology::{ConceptIdx, Ontology, RelIdx};
use crate::service::{CompiledService, Request, Service, ServiceError, Slot};

pub use similarity::{objects_similar, refinement_hash, similar_to_any, similar_witness};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObjectId(pub u32);

impl ObjectId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for ObjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Provenance {
    FromRequest(String),
    FromCall { call: usize, output: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObjectInstance {
    pub id: ObjectId,
    pub concept: ConceptIdx,
    pub provenance: Provenance,
}

/// A materialized relation edge `relation(src, dst)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Edge {
    pub relation: RelIdx,
    pub src: ObjectId,
    pub dst: ObjectId,
}

/// Map from parameter names to objects, in the owning query's node order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct Binding {
    entries: Vec<(String, ObjectId)>,
}

impl Binding {
    pub fn new(entries: Vec<(String, ObjectId)>) -> Self {
        Binding { entries }
    }

    pub fn zip(names: &[String], objects: &[ObjectId]) -> Self {
        Binding {
            entries: names.iter().cloned().zip(objects.iter().copied()).collect(),
        }
    }

    pub fn get(&self, name: &str) -> Option<ObjectId> {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|&(_, o)| o)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, ObjectId)> {
        self.entries.iter().map(|(n, o)| (n.as_str(), *o))
    }

    pub fn objects(&self) -> impl Iterator<Item = ObjectId> + '_ {
        self.entries.iter().map(|&(_, o)| o)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl fmt::Display for Binding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (name, obj) in &self.entries {
            if !first {
                f.write_str(" ")?;
            }
            first = false;
            write!(f, "{name}={obj}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KnowledgeError {
    #[error("parameter `{0}` is not bound")]
    UnboundParameter(String),
    #[error("unknown object {0}")]
    UnknownObject(ObjectId),
    #[error("unknown concept `{0}`")]
    UnknownConcept(String),
    #[error("unknown relation `{0}`")]
    UnknownRelation(String),
    #[error(transparent)]
    Service(#[from] ServiceError),
}

/// Edge direction as seen from one endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Dir {
    Out,
    In,
}

/// An edge seen from one endpoint: `(direction, relation, other end)`.
pub type Incident = (Dir, RelIdx, ObjectId);

/// Read access shared by the real state and simulated extensions of it.
pub trait KnowledgeView {
    fn object_count(&self) -> usize;
    fn concept_of(&self, id: ObjectId) -> ConceptIdx;
    /// Appends every edge touching `id` as `(direction, relation, other end)`.
    /// A self-loop appears once in each direction.
    fn incident(&self, id: ObjectId, buf: &mut Vec<Incident>);

    fn contains(&self, id: ObjectId) -> bool {
        id.index() < self.object_count()
    }
}

#[derive(Debug, Clone, Default)]
pub struct KnowledgeState {
    objects: Vec<ObjectInstance>,
    edges: Vec<Edge>,
    edge_set: HashSet<Edge>,
    out_adj: Vec<Vec<(RelIdx, ObjectId)>>,
    in_adj: Vec<Vec<(RelIdx, ObjectId)>>,
    by_concept: Vec<Vec<ObjectId>>,
    /// Union-find over weakly connected components, without path compression
    /// so lookups need only `&self`; union by size keeps trees shallow.
    parent: Vec<u32>,
    size: Vec<u32>,
    /// Per component root, the version at which the component last changed.
    touched: Vec<u64>,
}

/// What one call added to the knowledge.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CallEffects {
    /// One object per output parameter, in output order.
    pub new_objects: Vec<ObjectId>,
    /// Effect edges that were not already known.
    pub new_edges: Vec<Edge>,
}

impl KnowledgeState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    /// Id the next created object will get.
    pub fn next_id(&self) -> ObjectId {
        ObjectId(self.objects.len() as u32)
    }

    pub fn objects(&self) -> &[ObjectInstance] {
        &self.objects
    }

    pub fn object(&self, id: ObjectId) -> Option<&ObjectInstance> {
        self.objects.get(id.index())
    }

    /// Edges in insertion order.
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn has_edge(&self, relation: RelIdx, src: ObjectId, dst: ObjectId) -> bool {
        self.edge_set.contains(&Edge { relation, src, dst })
    }

    pub fn out_edges(&self, id: ObjectId) -> &[(RelIdx, ObjectId)] {
        &self.out_adj[id.index()]
    }

    pub fn in_edges(&self, id: ObjectId) -> &[(RelIdx, ObjectId)] {
        &self.in_adj[id.index()]
    }

    /// Objects whose concept is exactly `concept`, ascending.
    pub fn objects_of_concept(&self, concept: ConceptIdx) -> &[ObjectId] {
        self.by_concept
            .get(concept.index())
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// Grows by one with every added object or edge.
    pub fn version(&self) -> u64 {
        (self.objects.len() + self.edges.len()) as u64
    }

    fn root(&self, id: ObjectId) -> usize {
        let mut cur = id.index();
        while self.parent[cur] as usize != cur {
            cur = self.parent[cur] as usize;
        }
        cur
    }

    /// The version at which the component containing `id` last gained an
    /// object or an edge.
    pub fn component_version(&self, id: ObjectId) -> u64 {
        self.touched[self.root(id)]
    }

    pub fn add_object(&mut self, concept: ConceptIdx, provenance: Provenance) -> ObjectId {
        let id = self.next_id();
        self.parent.push(id.0);
        self.size.push(1);
        self.touched.push(self.version() + 1);
        self.objects.push(ObjectInstance {
            id,
            concept,
            provenance,
        });
        self.out_adj.push(Vec::new());
        self.in_adj.push(Vec::new());
        if self.by_concept.len() <= concept.index() {
            self.by_concept.resize(concept.index() + 1, Vec::new());
        }
        self.by_concept[concept.index()].push(id);
        id
    }

    /// Inserts an edge; returns false if it was already present.
    ///
    /// # Panics
    /// If either endpoint does not exist.
    pub fn add_edge(&mut self, edge: Edge) -> bool {
        assert!(
            self.contains(edge.src) && self.contains(edge.dst),
            "edge {edge:?} has a dangling endpoint"
        );
        if !self.edge_set.insert(edge) {
            return false;
        }
        self.edges.push(edge);
        let (mut a, mut b) = (self.root(edge.src), self.root(edge.dst));
        if a != b {
            if self.size[a] < self.size[b] {
                std::mem::swap(&mut a, &mut b);
            }
            self.parent[b] = a as u32;
            self.size[a] += self.size[b];
        }
        self.touched[a] = self.version();
        self.out_adj[edge.src.index()].push((edge.relation, edge.dst));
        self.in_adj[edge.dst.index()].push((edge.relation, edge.src));
        true
    }

    /// Applies a call of `service` with its inputs bound to `inputs`
    /// (in input order).
    pub fn apply_compiled(
        &mut self,
        service: &CompiledService,
        inputs: &[ObjectId],
        call_index: usize,
    ) -> CallEffects {
        debug_assert_eq!(inputs.len(), service.input_names.len());
        let new_objects: Vec<ObjectId> = service
            .output_concepts
            .iter()
            .zip(&service.output_names)
            .map(|(&concept, name)| {
                self.add_object(
                    concept,
                    Provenance::FromCall {
                        call: call_index,
                        output: name.clone(),
                    },
                )
            })
            .collect();
        let resolve = |slot: Slot| match slot {
            Slot::Input(i) => inputs[i],
            Slot::Output(j) => new_objects[j],
        };
        let mut new_edges = Vec::new();
        for atom in &service.effects {
            let edge = Edge {
                relation: atom.relation,
                src: resolve(atom.from),
                dst: resolve(atom.to),
            };
            if self.add_edge(edge) {
                new_edges.push(edge);
            }
        }
        CallEffects {
            new_objects,
            new_edges,
        }
    }

    /// Deterministic text listing: objects by id, then edges sorted by
    /// relation name and endpoints.
    pub fn dump(&self, ontology: &Ontology) -> String {
        let mut out = String::from("objects:\n");
        for o in &self.objects {
            let origin = match &o.provenance {
                Provenance::FromRequest(p) => format!("request {p}"),
                Provenance::FromCall { call, output } => format!("call {call} {output}"),
            };
            let _ = writeln!(
                out,
                "  {} {} <- {}",
                o.id,
                ontology.concept_name(o.concept),
                origin
            );
        }
        out.push_str("edges:\n");
        let mut edges: Vec<(&str, ObjectId, ObjectId)> = self
            .edges
            .iter()
            .map(|e| (ontology.relation_name(e.relation), e.src, e.dst))
            .collect();
        edges.sort();
        for (rel, src, dst) in edges {
            let _ = writeln!(out, "  {rel}({src}, {dst})");
        }
        out
    }
}

impl KnowledgeView for KnowledgeState {
    fn object_count(&self) -> usize {
        self.objects.len()
    }

    fn concept_of(&self, id: ObjectId) -> ConceptIdx {
        self.objects[id.index()].concept
    }

    fn incident(&self, id: ObjectId, buf: &mut Vec<Incident>) {
        buf.extend(
            self.out_adj[id.index()]
                .iter()
                .map(|&(r, o)| (Dir::Out, r, o)),
        );
        buf.extend(
            self.in_adj[id.index()]
                .iter()
                .map(|&(r, o)| (Dir::In, r, o)),
        );
    }
}

/// The state as it would look after one more call, without touching it.
pub struct Overlay<'a> {
    base: &'a KnowledgeState,
    concepts: Vec<ConceptIdx>,
    edges: Vec<Edge>,
}

impl<'a> Overlay<'a> {
    pub fn simulate(
        base: &'a KnowledgeState,
        service: &CompiledService,
        inputs: &[ObjectId],
    ) -> Self {
        let first = base.len() as u32;
        let resolve = |slot: Slot| match slot {
            Slot::Input(i) => inputs[i],
            Slot::Output(j) => ObjectId(first + j as u32),
        };
        let mut edges: Vec<Edge> = Vec::new();
        for atom in &service.effects {
            let edge = Edge {
                relation: atom.relation,
                src: resolve(atom.from),
                dst: resolve(atom.to),
            };
            let known = edge.src.0 < first && edge.dst.0 < first && base.edge_set.contains(&edge);
            if !known && !edges.contains(&edge) {
                edges.push(edge);
            }
        }
        Overlay {
            base,
            concepts: service.output_concepts.clone(),
            edges,
        }
    }

    /// Ids the simulated call would create.
    pub fn new_objects(&self) -> impl Iterator<Item = ObjectId> {
        let first = self.base.len() as u32;
        (0..self.concepts.len() as u32).map(move |j| ObjectId(first + j))
    }

    /// Simulated edges that are not in the base state.
    pub fn new_edges(&self) -> &[Edge] {
        &self.edges
    }
}

impl KnowledgeView for Overlay<'_> {
    fn object_count(&self) -> usize {
        self.base.len() + self.concepts.len()
    }

    fn concept_of(&self, id: ObjectId) -> ConceptIdx {
        match id.index().checked_sub(self.base.len()) {
            Some(j) => self.concepts[j],
            None => self.base.concept_of(id),
        }
    }

    fn incident(&self, id: ObjectId, buf: &mut Vec<Incident>) {
        if id.index() < self.base.len() {
            self.base.incident(id, buf);
        }
        for e in &self.edges {
            if e.src == id {
                buf.push((Dir::Out, e.relation, e.dst));
            }
            if e.dst == id {
                buf.push((Dir::In, e.relation, e.src));
            }
        }
    }
}

/// Builds the initial knowledge: one object per provided parameter and one
/// edge per provided relation. Returns the provided parameters' objects.
pub fn init_from_request(
    ontology: &Ontology,
    request: &Request,
) -> Result<(KnowledgeState, Binding), KnowledgeError> {
    let mut state = KnowledgeState::new();
    let mut entries = Vec::with_capacity(request.provided.len());
    for p in &request.provided {
        let concept = match &p.concept {
            crate::service::ParamType::Concept(c) => ontology
                .concept(c)
                .ok_or_else(|| KnowledgeError::UnknownConcept(c.clone()))?,
            crate::service::ParamType::Any => {
                return Err(ServiceError::AnyNotAllowed {
                    owner: request.name.clone(),
                    name: p.name.clone(),
                }
                .into())
            }
        };
        let id = state.add_object(concept, Provenance::FromRequest(p.name.clone()));
        entries.push((p.name.clone(), id));
    }
    let binding = Binding::new(entries);
    for atom in &request.provided_relations {
        let relation = ontology
            .relation(&atom.relation)
            .ok_or_else(|| KnowledgeError::UnknownRelation(atom.relation.clone()))?;
        let lookup = |n: &str| {
            binding
                .get(n)
                .ok_or_else(|| KnowledgeError::UnboundParameter(n.to_string()))
        };
        state.add_edge(Edge {
            relation,
            src: lookup(&atom.from)?,
            dst: lookup(&atom.to)?,
        });
    }
    Ok((state, binding))
}

/// Applies a call given by name-level service and binding.
pub fn apply_call_effects(
    ontology: &Ontology,
    state: &mut KnowledgeState,
    service: &Service,
    binding: &Binding,
    call_index: usize,
) -> Result<CallEffects, KnowledgeError> {
    let compiled = CompiledService::compile(ontology, service)?;
    let inputs = compiled
        .input_names
        .iter()
        .map(|n| {
            let id = binding
                .get(n)
                .ok_or_else(|| KnowledgeError::UnboundParameter(n.clone()))?;
            if state.contains(id) {
                Ok(id)
            } else {
                Err(KnowledgeError::UnknownObject(id))
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(state.apply_compiled(&compiled, &inputs, call_index))
}

/// A weakly connected component, with objects and edges sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Component {
    pub objects: Vec<ObjectId>,
    pub edges: Vec<Edge>,
}

/// The weakly connected component containing `obj` (direction ignored for
/// connectivity, kept on the returned edges).
pub fn connected_component<V: KnowledgeView>(
    view: &V,
    obj: ObjectId,
) -> Result<Component, KnowledgeError> {
    if !view.contains(obj) {
        return Err(KnowledgeError::UnknownObject(obj));
    }
    let mut seen = HashSet::from([obj]);
    let mut stack = vec![obj];
    let mut objects = Vec::new();
    let mut edges = Vec::new();
    let mut buf = Vec::new();
    while let Some(cur) = stack.pop() {
        objects.push(cur);
        buf.clear();
        view.incident(cur, &mut buf);
        for &(dir, relation, other) in &buf {
            if dir == Dir::Out {
                edges.push(Edge {
                    relation,
                    src: cur,
                    dst: other,
                });
            }
            if seen.insert(other) {
                stack.push(other);
            }
        }
    }
    objects.sort();
    edges.sort_by_key(|e| (e.src, e.dst, e.relation));
    Ok(Component { objects, edges })
}

/// Partition of the state into weakly connected components, ordered by
/// their smallest object id.
pub fn components(state: &KnowledgeState) -> Vec<Component> {
    let mut assigned = vec![false; state.len()];
    let mut out = Vec::new();
    for o in state.objects() {
        if assigned[o.id.index()] {
            continue;
        }
        let comp = connected_component(state, o.id).expect("object exists");
        for m in &comp.objects {
            assigned[m.index()] = true;
        }
        out.push(comp);
    }
    out
}
