//! Finding bindings of a service's inputs in the knowledge state.
//!
//! A service's inputs and preconditions form a small query graph; the
//! knowledge state is the data graph. A binding maps every query node to an
//! object whose concept is a subtype of the node's concept, such that every
//! query edge has a same-named data edge between the images.
//!
//! The default semantics is non-injective (two inputs may share an object),
//! which makes this a labeled graph homomorphism search. `injective: true`
//! restores subgraph-isomorphism semantics.

mod search;

use std::collections::HashSet;

use thiserror::Error;

use crate::knowledge::{Binding, KnowledgeState, KnowledgeView, ObjectId};
use crate::ontology::{ConceptIdx, Ontology, RelIdx};
use crate::service::{CompiledService, InputLabel, Service, ServiceError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeLabel {
    Concept(ConceptIdx),
    Any,
    /// Matches exactly this object.
    Pinned(ObjectId),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryNode {
    pub name: String,
    pub label: NodeLabel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QueryEdge {
    pub relation: RelIdx,
    pub from: usize,
    pub to: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct QueryGraph {
    pub nodes: Vec<QueryNode>,
    pub edges: Vec<QueryEdge>,
}

impl QueryGraph {
    /// One node per input, one edge per precondition. `pins` are
    /// `(input position, object)` pairs.
    pub fn from_compiled(service: &CompiledService, pins: &[(usize, ObjectId)]) -> QueryGraph {
        let nodes = service
            .input_names
            .iter()
            .zip(&service.input_labels)
            .enumerate()
            .map(|(i, (name, label))| {
                let label = match pins.iter().find(|&&(p, _)| p == i) {
                    Some(&(_, obj)) => NodeLabel::Pinned(obj),
                    None => match *label {
                        InputLabel::Concept(c) => NodeLabel::Concept(c),
                        InputLabel::Any => NodeLabel::Any,
                    },
                };
                QueryNode {
                    name: name.clone(),
                    label,
                }
            })
            .collect();
        let edges = service
            .preconditions
            .iter()
            .map(|a| QueryEdge {
                relation: a.relation,
                from: a.from,
                to: a.to,
            })
            .collect();
        QueryGraph { nodes, edges }
    }

    pub fn node_names(&self) -> Vec<String> {
        self.nodes.iter().map(|n| n.name.clone()).collect()
    }

    /// Weakly connected components as sorted node-index lists, ordered by
    /// their smallest node.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let n = self.nodes.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for e in &self.edges {
            let (a, b) = (find(&mut parent, e.from), find(&mut parent, e.to));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
        let mut groups: Vec<Vec<usize>> = Vec::new();
        let mut slot = vec![usize::MAX; n];
        for u in 0..n {
            let root = find(&mut parent, u);
            if slot[root] == usize::MAX {
                slot[root] = groups.len();
                groups.push(Vec::new());
            }
            groups[slot[root]].push(u);
        }
        groups
    }

    /// The subgraph induced by `nodes` (sorted), with node indices renumbered.
    fn induced(&self, nodes: &[usize]) -> QueryGraph {
        let local = |u: usize| nodes.binary_search(&u).ok();
        QueryGraph {
            nodes: nodes.iter().map(|&u| self.nodes[u].clone()).collect(),
            edges: self
                .edges
                .iter()
                .filter_map(|e| {
                    Some(QueryEdge {
                        relation: e.relation,
                        from: local(e.from)?,
                        to: local(e.to)?,
                    })
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MatchError {
    #[error("pin on `{0}`, which is not an input of the service")]
    PinTargetMissing(String),
    #[error("more than {limit} bindings")]
    LimitExceeded { limit: usize },
    #[error(transparent)]
    Service(#[from] ServiceError),
}

/// Builds the query graph of a (validated) service. `pins` fixes named
/// inputs to specific objects.
pub fn build_query_graph(
    ontology: &Ontology,
    service: &Service,
    pins: &Binding,
) -> Result<QueryGraph, MatchError> {
    let compiled = CompiledService::compile(ontology, service)?;
    let pins = pins
        .iter()
        .map(|(name, obj)| {
            compiled
                .input_position(name)
                .map(|i| (i, obj))
                .ok_or_else(|| MatchError::PinTargetMissing(name.to_string()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(QueryGraph::from_compiled(&compiled, &pins))
}

/// Labeled view of a knowledge state. A node's label set is every
/// supertype of its concept, itself included.
#[derive(Clone, Copy)]
pub struct DataGraph<'a> {
    pub ontology: &'a Ontology,
    pub state: &'a KnowledgeState,
}

pub fn build_data_graph<'a>(ontology: &'a Ontology, state: &'a KnowledgeState) -> DataGraph<'a> {
    DataGraph { ontology, state }
}

impl DataGraph<'_> {
    pub fn node_count(&self) -> usize {
        self.state.len()
    }

    pub fn edge_count(&self) -> usize {
        self.state.edges().len()
    }

    pub fn label_set(&self, obj: ObjectId) -> Vec<ConceptIdx> {
        self.ontology
            .supertypes_of(self.state.objects()[obj.index()].concept)
    }

    pub fn matches_label(&self, label: &NodeLabel, obj: ObjectId) -> bool {
        match *label {
            NodeLabel::Any => self.state.contains(obj),
            NodeLabel::Pinned(p) => p == obj && self.state.contains(obj),
            NodeLabel::Concept(c) => self
                .state
                .object(obj)
                .is_some_and(|o| self.ontology.is_subtype_idx(o.concept, c)),
        }
    }

    /// Objects satisfying `label`, ascending.
    fn label_candidates(&self, label: &NodeLabel) -> Vec<ObjectId> {
        match *label {
            NodeLabel::Any => (0..self.state.len() as u32).map(ObjectId).collect(),
            NodeLabel::Pinned(p) => {
                if self.state.contains(p) {
                    vec![p]
                } else {
                    vec![]
                }
            }
            NodeLabel::Concept(c) => {
                let mut out: Vec<ObjectId> = self
                    .ontology
                    .subtypes_of(c)
                    .iter()
                    .flat_map(|&s| self.state.objects_of_concept(s).iter().copied())
                    .collect();
                out.sort_unstable();
                out
            }
        }
    }

    fn candidate_estimate(&self, label: &NodeLabel) -> usize {
        match *label {
            NodeLabel::Any => self.state.len(),
            NodeLabel::Pinned(_) => 1,
            NodeLabel::Concept(c) => self
                .ontology
                .subtypes_of(c)
                .iter()
                .map(|&s| self.state.objects_of_concept(s).len())
                .sum(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MatchMode {
    FirstOnly,
    #[default]
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatchConfig {
    pub injective: bool,
    pub mode: MatchMode,
    /// In `All` mode, more than `limit` bindings is an error.
    pub limit: Option<usize>,
    /// Label/degree filtering, fail-first ordering and neighbor-anchored
    /// candidates. Turning it off leaves a plain declaration-order
    /// backtracker over all objects; results are the same.
    pub pruning: bool,
}

impl Default for MatchConfig {
    fn default() -> Self {
        MatchConfig {
            injective: false,
            mode: MatchMode::All,
            limit: None,
            pruning: true,
        }
    }
}

impl MatchConfig {
    pub fn all() -> Self {
        Self::default()
    }

    pub fn first() -> Self {
        MatchConfig {
            mode: MatchMode::FirstOnly,
            ..Self::default()
        }
    }

    pub fn injective(mut self, injective: bool) -> Self {
        self.injective = injective;
        self
    }

    pub fn pruning(mut self, pruning: bool) -> Self {
        self.pruning = pruning;
        self
    }

    pub fn limit(mut self, limit: usize) -> Self {
        assert!(limit >= 1, "limit must be positive");
        self.limit = Some(limit);
        self
    }
}

/// All bindings as object vectors in query node order.
pub fn enumerate_assignments(
    query: &QueryGraph,
    data: &DataGraph<'_>,
    config: &MatchConfig,
) -> Result<Vec<Vec<ObjectId>>, MatchError> {
    search::run(query, data, config)
}

/// Matches the whole query at once.
pub fn enumerate_matches(
    query: &QueryGraph,
    data: &DataGraph<'_>,
    config: &MatchConfig,
) -> Result<Vec<Binding>, MatchError> {
    let names = query.node_names();
    Ok(enumerate_assignments(query, data, config)?
        .iter()
        .map(|a| Binding::zip(&names, a))
        .collect())
}

/// Matches each weakly connected component of the query separately and
/// combines the results.
///
/// Existence (`FirstOnly`) only needs one match per component. Under
/// injective matching the per-component picks may collide on an object; then
/// the whole query is searched directly. In `All` mode the per-component
/// results are crossed, dropping object-sharing combinations when injective.
pub fn split_assignments(
    query: &QueryGraph,
    data: &DataGraph<'_>,
    config: &MatchConfig,
) -> Result<Vec<Vec<ObjectId>>, MatchError> {
    let parts = query.components();
    if parts.len() <= 1 {
        return search::run(query, data, config);
    }
    let subqueries: Vec<QueryGraph> = parts.iter().map(|p| query.induced(p)).collect();

    let first = MatchConfig {
        mode: MatchMode::FirstOnly,
        limit: None,
        ..*config
    };
    let mut picks = Vec::with_capacity(parts.len());
    for q in &subqueries {
        match search::run(q, data, &first)?.pop() {
            Some(a) => picks.push(a),
            None => return Ok(Vec::new()),
        }
    }

    if config.mode == MatchMode::FirstOnly {
        let combined = combine(query.nodes.len(), &parts, picks.iter());
        if config.injective && !pairwise_distinct(&combined) {
            return search::run(query, data, config);
        }
        return Ok(vec![combined]);
    }

    // Every component has at least one match, so without injectivity each
    // component's count is a lower bound on the product.
    let per_part = MatchConfig {
        limit: if config.injective { None } else { config.limit },
        ..*config
    };
    let results: Vec<Vec<Vec<ObjectId>>> = subqueries
        .iter()
        .map(|q| search::run(q, data, &per_part))
        .collect::<Result<_, _>>()?;

    let mut out = Vec::new();
    let mut odometer = vec![0usize; parts.len()];
    'product: loop {
        let combined = combine(
            query.nodes.len(),
            &parts,
            odometer.iter().zip(&results).map(|(&i, r)| &r[i]),
        );
        if !config.injective || pairwise_distinct(&combined) {
            out.push(combined);
            if let Some(limit) = config.limit {
                if out.len() > limit {
                    return Err(MatchError::LimitExceeded { limit });
                }
            }
        }
        for slot in (0..odometer.len()).rev() {
            odometer[slot] += 1;
            if odometer[slot] < results[slot].len() {
                continue 'product;
            }
            odometer[slot] = 0;
        }
        break;
    }
    out.sort_unstable();
    Ok(out)
}

pub fn split_and_match(
    query: &QueryGraph,
    data: &DataGraph<'_>,
    config: &MatchConfig,
) -> Result<Vec<Binding>, MatchError> {
    let names = query.node_names();
    Ok(split_assignments(query, data, config)?
        .iter()
        .map(|a| Binding::zip(&names, a))
        .collect())
}

fn combine<'a>(
    n: usize,
    parts: &[Vec<usize>],
    picks: impl Iterator<Item = &'a Vec<ObjectId>>,
) -> Vec<ObjectId> {
    let mut out = vec![ObjectId(u32::MAX); n];
    for (part, pick) in parts.iter().zip(picks) {
        for (&u, &x) in part.iter().zip(pick) {
            out[u] = x;
        }
    }
    out
}

fn pairwise_distinct(assignment: &[ObjectId]) -> bool {
    let mut seen = HashSet::with_capacity(assignment.len());
    assignment.iter().all(|x| seen.insert(*x))
}

/// Re-checks one assignment against both matching conditions directly,
/// preconditions first.
pub fn check_assignment(
    query: &QueryGraph,
    data: &DataGraph<'_>,
    assignment: &[ObjectId],
) -> Result<(), String> {
    if assignment.len() != query.nodes.len() {
        return Err(format!(
            "{} objects for {} parameters",
            assignment.len(),
            query.nodes.len()
        ));
    }
    for e in &query.edges {
        let (src, dst) = (assignment[e.from], assignment[e.to]);
        if !data.state.has_edge(e.relation, src, dst) {
            return Err(format!(
                "precondition {}({}, {}) unmatched: no edge {}({src}, {dst})",
                data.ontology.relation_name(e.relation),
                query.nodes[e.from].name,
                query.nodes[e.to].name,
                data.ontology.relation_name(e.relation),
            ));
        }
    }
    for (node, &x) in query.nodes.iter().zip(assignment) {
        if !data.state.contains(x) {
            return Err(format!("`{}` bound to unknown object {x}", node.name));
        }
        if !data.matches_label(&node.label, x) {
            let concept = data
                .ontology
                .concept_name(data.state.objects()[x.index()].concept);
            return Err(format!(
                "`{}` bound to {x} of incompatible concept `{concept}`",
                node.name
            ));
        }
    }
    Ok(())
}
