//! Random builders and brute-force oracles shared by the integration tests.
//!
//! The oracles are deliberately naive: they enumerate every candidate
//! mapping or every bijection and filter, with no pruning of any kind.

#![allow(dead_code)]

use std::collections::{BTreeSet, HashSet, VecDeque};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use wscompose::composer::CompositionProblem;
use wscompose::io::{generate_instance, GeneratorParams};
use wscompose::knowledge::{Edge, KnowledgeState, ObjectId, Provenance};
use wscompose::matcher::{NodeLabel, QueryEdge, QueryGraph, QueryNode};
use wscompose::ontology::{Ontology, RelationDef};
use wscompose::service::{ParameterDecl, Repository, Request, Service, ServiceKind};

pub fn concept_name(i: usize) -> String {
    format!("c{i}")
}

pub fn relation_name(i: usize) -> String {
    format!("r{i}")
}

/// Concepts `c0..cN` and relations `r0..rM`. With `hierarchical`, random
/// subtype edges point from lower to higher index, so they never cycle.
pub fn random_ontology(
    concepts: usize,
    relations: usize,
    hierarchical: bool,
    rng: &mut ChaCha8Rng,
) -> Ontology {
    let mut subtypes = Vec::new();
    if hierarchical {
        for sub in 0..concepts {
            for sup in sub + 1..concepts {
                if rng.gen_bool(0.25) {
                    subtypes.push((concept_name(sub), concept_name(sup)));
                }
            }
        }
    }
    Ontology::build(
        (0..concepts).map(concept_name),
        subtypes,
        (0..relations)
            .map(|r| RelationDef::new(relation_name(r)))
            .collect(),
        Vec::new(),
    )
    .expect("random ontologies are valid")
}

pub fn random_state(
    ontology: &Ontology,
    objects: usize,
    edges: usize,
    rng: &mut ChaCha8Rng,
) -> KnowledgeState {
    let mut state = KnowledgeState::new();
    for i in 0..objects {
        let c = ontology
            .concept(&concept_name(rng.gen_range(0..ontology.concept_count())))
            .expect("declared");
        state.add_object(c, Provenance::FromRequest(format!("o{i}")));
    }
    if objects > 0 {
        for _ in 0..edges {
            let relation = ontology
                .relation(&relation_name(rng.gen_range(0..ontology.relations().len())))
                .expect("declared");
            state.add_edge(Edge {
                relation,
                src: ObjectId(rng.gen_range(0..objects) as u32),
                dst: ObjectId(rng.gen_range(0..objects) as u32),
            });
        }
    }
    state
}

/// Labels are mostly concepts, sometimes `Any`, rarely a pinned object.
pub fn random_query(
    ontology: &Ontology,
    nodes: usize,
    edges: usize,
    objects: usize,
    rng: &mut ChaCha8Rng,
) -> QueryGraph {
    let nodes: Vec<QueryNode> = (0..nodes)
        .map(|i| {
            let roll: f64 = rng.gen();
            let label = if roll < 0.1 && objects > 0 {
                NodeLabel::Pinned(ObjectId(rng.gen_range(0..objects) as u32))
            } else if roll < 0.25 {
                NodeLabel::Any
            } else {
                NodeLabel::Concept(
                    ontology
                        .concept(&concept_name(rng.gen_range(0..ontology.concept_count())))
                        .expect("declared"),
                )
            };
            QueryNode {
                name: format!("q{i}"),
                label,
            }
        })
        .collect();
    let n = nodes.len();
    let edges = (0..edges)
        .map(|_| QueryEdge {
            relation: ontology
                .relation(&relation_name(rng.gen_range(0..ontology.relations().len())))
                .expect("declared"),
            from: rng.gen_range(0..n),
            to: rng.gen_range(0..n),
        })
        .collect();
    QueryGraph { nodes, edges }
}

fn label_ok(ontology: &Ontology, state: &KnowledgeState, label: &NodeLabel, o: ObjectId) -> bool {
    match *label {
        NodeLabel::Any => true,
        NodeLabel::Pinned(p) => p == o,
        NodeLabel::Concept(c) => ontology.is_subtype_idx(state.objects()[o.index()].concept, c),
    }
}

/// Every mapping from query nodes to objects, in lexicographic order, kept
/// when all labels and edges hold (and, if asked, no object is reused).
pub fn brute_force_matches(
    query: &QueryGraph,
    ontology: &Ontology,
    state: &KnowledgeState,
    injective: bool,
) -> Vec<Vec<ObjectId>> {
    let k = query.nodes.len();
    let n = state.len();
    let mut out = Vec::new();
    if k == 0 {
        out.push(Vec::new());
        return out;
    }
    if n == 0 {
        return out;
    }
    let mut digits = vec![0usize; k];
    loop {
        let mapping: Vec<ObjectId> = digits.iter().map(|&d| ObjectId(d as u32)).collect();
        let labels = query
            .nodes
            .iter()
            .zip(&mapping)
            .all(|(q, &o)| label_ok(ontology, state, &q.label, o));
        let edges = query
            .edges
            .iter()
            .all(|e| state.has_edge(e.relation, mapping[e.from], mapping[e.to]));
        let distinct = !injective || mapping.iter().collect::<HashSet<_>>().len() == k;
        if labels && edges && distinct {
            out.push(mapping);
        }
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            digits[i] += 1;
            if digits[i] < n {
                break;
            }
            digits[i] = 0;
        }
    }
}

/// Weakly connected component of `start`, ascending.
pub fn component_of(state: &KnowledgeState, start: ObjectId) -> Vec<ObjectId> {
    let mut seen = BTreeSet::from([start]);
    let mut queue = VecDeque::from([start]);
    while let Some(cur) = queue.pop_front() {
        let around = state
            .out_edges(cur)
            .iter()
            .chain(state.in_edges(cur))
            .map(|&(_, o)| o);
        for o in around {
            if seen.insert(o) {
                queue.push_back(o);
            }
        }
    }
    seen.into_iter().collect()
}

fn permutations(items: &[ObjectId]) -> Vec<Vec<ObjectId>> {
    if items.is_empty() {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(i);
        for mut tail in permutations(&rest) {
            tail.insert(0, head);
            out.push(tail);
        }
    }
    out
}

/// Tries every bijection between the two components and accepts one that
/// sends `a` to `b`, keeps concepts, and maps the edge set exactly onto the
/// other edge set.
pub fn brute_force_similar(state: &KnowledgeState, a: ObjectId, b: ObjectId) -> bool {
    let ca = component_of(state, a);
    let cb = component_of(state, b);
    if ca.len() != cb.len() {
        return false;
    }
    let edges_of = |comp: &[ObjectId]| -> BTreeSet<Edge> {
        state
            .edges()
            .iter()
            .filter(|e| comp.contains(&e.src))
            .copied()
            .collect()
    };
    let ea = edges_of(&ca);
    let eb = edges_of(&cb);
    if ea.len() != eb.len() {
        return false;
    }
    let concept = |o: ObjectId| state.objects()[o.index()].concept;
    permutations(&cb).into_iter().any(|image| {
        let map = |o: ObjectId| image[ca.binary_search(&o).expect("in component")];
        map(a) == b
            && ca.iter().all(|&o| concept(o) == concept(map(o)))
            && ea.iter().all(|e| {
                eb.contains(&Edge {
                    relation: e.relation,
                    src: map(e.src),
                    dst: map(e.dst),
                })
            })
    })
}

/// Name-level reachability with no relations: a service fires when every
/// input concept is covered by some available concept below it, and adds
/// its output concepts. Solvable iff every wanted concept ends up covered.
pub fn set_fixpoint_solvable(ontology: &Ontology, services: &[Service], request: &Request) -> bool {
    let name = |p: &ParameterDecl| p.concept.to_string();
    let mut available: BTreeSet<String> = request.provided.iter().map(name).collect();
    let covered = |available: &BTreeSet<String>, wanted: &str| {
        available
            .iter()
            .any(|have| ontology.is_subtype(have, wanted).expect("declared"))
    };
    loop {
        let before = available.len();
        for s in services {
            if s.inputs.iter().all(|p| covered(&available, &name(p))) {
                available.extend(s.outputs.iter().map(name));
            }
        }
        if available.len() == before {
            break;
        }
    }
    request.wanted.iter().all(|p| covered(&available, &name(p)))
}

/// A relation-free problem: random services over `concepts` concepts and a
/// request providing a few concepts and wanting one or two.
pub fn random_taxonomy_problem(rng: &mut ChaCha8Rng, hierarchical: bool) -> CompositionProblem {
    let concepts = rng.gen_range(4..=10);
    let mut subtypes = Vec::new();
    if hierarchical {
        for sub in 0..concepts {
            for sup in sub + 1..concepts {
                if rng.gen_bool(0.2) {
                    subtypes.push((concept_name(sub), concept_name(sup)));
                }
            }
        }
    }
    let ontology = Ontology::build(
        (0..concepts).map(concept_name),
        subtypes,
        Vec::new(),
        Vec::new(),
    )
    .expect("valid");
    let pick = |rng: &mut ChaCha8Rng| concept_name(rng.gen_range(0..concepts));
    let services = (0..rng.gen_range(1..=8))
        .map(|i| Service {
            name: format!("s{i}"),
            inputs: (0..rng.gen_range(1..=2))
                .map(|j| ParameterDecl::new(format!("in{j}"), pick(rng)))
                .collect(),
            outputs: (0..rng.gen_range(1..=2))
                .map(|j| ParameterDecl::new(format!("out{j}"), pick(rng)))
                .collect(),
            preconditions: Vec::new(),
            effects: Vec::new(),
            kind: ServiceKind::Plain,
        })
        .collect();
    let request = Request {
        name: "query".into(),
        provided: (0..rng.gen_range(1..=2))
            .map(|j| ParameterDecl::new(format!("have{j}"), pick(rng)))
            .collect(),
        provided_relations: Vec::new(),
        wanted: (0..rng.gen_range(1..=2))
            .map(|j| ParameterDecl::new(format!("want{j}"), pick(rng)))
            .collect(),
        wanted_relations: Vec::new(),
    };
    CompositionProblem::new(ontology, Repository::new(services), request).expect("valid")
}

/// Parameters for a small generated instance that the exhaustive oracle
/// can decide: at most 8 services and a planted run of at most 6 calls.
pub fn oracle_scale_params(seed: u64) -> GeneratorParams {
    let depth = 1 + (seed % 5) as usize;
    let max_rule_steps = depth.min(6 - depth);
    GeneratorParams {
        concepts: 18,
        services: 4 + (seed % 5) as usize,
        depth,
        rule_steps: (seed / 5 % (max_rule_steps as u64 + 1)) as usize,
        max_inputs: 2,
        max_outputs: 2,
        solvable: seed % 4 != 3,
        seed,
        ..GeneratorParams::default()
    }
}

pub fn generated(params: &GeneratorParams) -> CompositionProblem {
    generate_instance(params)
        .expect("parameters are in range")
        .to_problem()
        .expect("generated documents are valid")
}

/// Shuffled copy of `items`, for order-independence checks.
pub fn shuffled<T: Clone>(rng: &mut ChaCha8Rng, items: &[T]) -> Vec<T> {
    let mut v = items.to_vec();
    v.shuffle(rng);
    v
}
