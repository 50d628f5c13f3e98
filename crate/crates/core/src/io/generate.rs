//! Seeded random instances with a planted solution.
//!
//! Concepts `c0..cN` are ranked by index. Every generated service produces
//! outputs ranked strictly above its inputs, and subtype edges always point
//! from a lower to a higher rank, so derivations cannot loop through the
//! concept hierarchy and the knowledge stays finite.
//!
//! When `solvable` is set, a chain of `depth` services is simulated from the
//! request's provided objects; `rule_steps` of its links go through an
//! inference rule whose effect relation nothing else produces, so the rule
//! application is required. The last link asserts the goal relation from a
//! provided object to its output. Without `solvable`, that last effect uses
//! an ordinary relation instead and the goal relation is produced nowhere.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::document::{InstanceDocument, OntologySection};
use crate::ontology::{ConceptIdx, InferenceRule, Ontology, RelationAtom, RelationDef};
use crate::service::{ParameterDecl, Request, Service, ServiceKind};

pub const GOAL_RELATION: &str = "goal";
const MAX_CONCEPTS: usize = 10_000;
const MAX_SERVICES: usize = 100_000;
const MAX_DEPTH: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GeneratorParams {
    pub concepts: usize,
    pub subtype_edges: usize,
    /// Ordinary relations; rule-derived and goal relations come on top.
    pub relations: usize,
    /// Decoy rules besides the planted ones.
    pub rules: usize,
    /// All plain services, planted chain included.
    pub services: usize,
    /// Plain services in the planted chain.
    pub depth: usize,
    /// Planted rule applications.
    pub rule_steps: usize,
    pub max_inputs: usize,
    pub max_outputs: usize,
    /// Chance that an ordinary relation is declared transitive (and,
    /// separately, symmetric).
    pub property_chance: f64,
    /// Chance that a distractor is open: one input, no precondition, so it
    /// fires on every object of its input type. The others take two or more
    /// inputs linked by preconditions. Many open distractors per concept make
    /// every new object enable several calls, and the knowledge then grows
    /// exponentially with depth.
    pub open_chance: f64,
    pub solvable: bool,
    pub seed: u64,
}

impl Default for GeneratorParams {
    fn default() -> Self {
        GeneratorParams {
            concepts: 15,
            subtype_edges: 6,
            relations: 3,
            rules: 1,
            services: 8,
            depth: 3,
            rule_steps: 1,
            max_inputs: 2,
            max_outputs: 1,
            property_chance: 0.1,
            open_chance: 0.5,
            solvable: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GenerateError {
    #[error("parameter out of range: {0}")]
    GuardExceeded(String),
}

impl GeneratorParams {
    pub fn check(&self) -> Result<(), GenerateError> {
        let fail = |msg: String| Err(GenerateError::GuardExceeded(msg));
        if !(1..=MAX_DEPTH).contains(&self.depth) {
            return fail(format!("depth must be in 1..={MAX_DEPTH}"));
        }
        if self.concepts > MAX_CONCEPTS || self.concepts < 3 * self.depth + 3 {
            return fail(format!(
                "concepts must be in {}..={MAX_CONCEPTS} for depth {}",
                3 * self.depth + 3,
                self.depth
            ));
        }
        if self.services > MAX_SERVICES || self.services < self.depth {
            return fail(format!(
                "services must be in {}..={MAX_SERVICES}",
                self.depth
            ));
        }
        if self.subtype_edges > self.concepts * (self.concepts - 1) / 2 {
            return fail("more subtype edges than concept pairs".into());
        }
        if self.relations == 0 {
            return fail("at least one relation is needed".into());
        }
        if self.rule_steps > self.depth {
            return fail("rule steps cannot exceed depth".into());
        }
        if !(1..=4).contains(&self.max_inputs) || !(1..=3).contains(&self.max_outputs) {
            return fail("max inputs must be in 1..=4 and max outputs in 1..=3".into());
        }
        if !(0.0..=1.0).contains(&self.property_chance) || !(0.0..=1.0).contains(&self.open_chance)
        {
            return fail("chances must be in [0, 1]".into());
        }
        Ok(())
    }
}

/// An edge known to hold along the planted run, over object indices.
#[derive(Clone)]
struct KnownEdge {
    relation: String,
    from: usize,
    to: usize,
}

struct Builder<'a> {
    params: &'a GeneratorParams,
    rng: ChaCha8Rng,
    taxonomy: Ontology,
    base_relations: Vec<String>,
}

impl Builder<'_> {
    fn concept(&self, idx: usize) -> String {
        format!("c{idx}")
    }

    fn rank(&self, c: ConceptIdx) -> usize {
        c.index()
    }

    /// Output concept ranked above `floor`.
    fn output_concept(&mut self, floor: usize) -> usize {
        let top = (floor + 2).min(self.params.concepts - 1);
        self.rng.gen_range(floor + 1..=top)
    }

    fn base_relation(&mut self) -> String {
        self.base_relations
            .choose(&mut self.rng)
            .expect("at least one relation")
            .clone()
    }

    /// Parameter type for an object of concept `c`: usually `c` itself,
    /// sometimes a supertype ranked at most `limit`.
    fn input_concept(&mut self, c: usize, limit: usize) -> usize {
        let supers: Vec<usize> = self
            .taxonomy
            .supertypes_of(self.taxonomy.concept(&self.concept(c)).expect("declared"))
            .into_iter()
            .map(|s| self.rank(s))
            .filter(|&s| s != c && s <= limit)
            .collect();
        if !supers.is_empty() && self.rng.gen_bool(0.3) {
            *supers.choose(&mut self.rng).expect("non-empty")
        } else {
            c
        }
    }

    fn distractor(&mut self) -> Service {
        let p = self.params;
        let open = p.max_inputs == 1 || self.rng.gen_bool(p.open_chance);
        let n_in = if open {
            1
        } else {
            self.rng.gen_range(2..=p.max_inputs)
        };
        let inputs: Vec<usize> = (0..n_in)
            .map(|_| self.rng.gen_range(0..p.concepts - 1))
            .collect();
        let floor = *inputs.iter().max().expect("non-empty");
        let n_out = self.rng.gen_range(1..=p.max_outputs);
        let outputs: Vec<usize> = (0..n_out).map(|_| self.output_concept(floor)).collect();

        // A random tree over the inputs, each edge in a random direction.
        let mut preconditions = Vec::new();
        for i in 1..n_in {
            let mut ends = [format!("in{}", self.rng.gen_range(0..i)), format!("in{i}")];
            if self.rng.gen_bool(0.5) {
                ends.swap(0, 1);
            }
            let [from, to] = ends;
            preconditions.push(RelationAtom::new(self.base_relation(), from, to));
        }
        let mut effects = Vec::new();
        for j in 0..n_out {
            if self.rng.gen_bool(0.8) {
                let i = self.rng.gen_range(0..n_in);
                effects.push(RelationAtom::new(
                    self.base_relation(),
                    format!("in{i}"),
                    format!("out{j}"),
                ));
            }
        }
        Service {
            name: String::new(),
            inputs: inputs
                .iter()
                .enumerate()
                .map(|(i, &c)| ParameterDecl::new(format!("in{i}"), self.concept(c)))
                .collect(),
            outputs: outputs
                .iter()
                .enumerate()
                .map(|(j, &c)| ParameterDecl::new(format!("out{j}"), self.concept(c)))
                .collect(),
            preconditions,
            effects,
            kind: ServiceKind::Plain,
        }
    }

    fn decoy_rule(&mut self) -> InferenceRule {
        if self.rng.gen_bool(0.5) {
            InferenceRule {
                name: String::new(),
                parameters: vec!["x".into(), "y".into(), "z".into()],
                preconditions: vec![
                    RelationAtom::new(self.base_relation(), "x", "y"),
                    RelationAtom::new(self.base_relation(), "y", "z"),
                ],
                effects: vec![RelationAtom::new(self.base_relation(), "x", "z")],
            }
        } else {
            InferenceRule {
                name: String::new(),
                parameters: vec!["x".into(), "y".into()],
                preconditions: vec![RelationAtom::new(self.base_relation(), "x", "y")],
                effects: vec![RelationAtom::new(self.base_relation(), "y", "x")],
            }
        }
    }
}

pub fn generate_instance(params: &GeneratorParams) -> Result<InstanceDocument, GenerateError> {
    params.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let n = params.concepts;

    let concepts: Vec<String> = (0..n).map(|i| format!("c{i}")).collect();
    let mut subtypes: Vec<(String, String)> = Vec::new();
    while subtypes.len() < params.subtype_edges {
        let a = rng.gen_range(0..n - 1);
        let b = rng.gen_range(a + 1..n);
        let pair = (concepts[a].clone(), concepts[b].clone());
        if !subtypes.contains(&pair) {
            subtypes.push(pair);
        }
    }
    let base_relations: Vec<String> = (0..params.relations).map(|i| format!("r{i}")).collect();
    let mut relations: Vec<RelationDef> = base_relations
        .iter()
        .map(|name| RelationDef {
            name: name.clone(),
            transitive: rng.gen_bool(params.property_chance),
            symmetric: rng.gen_bool(params.property_chance),
        })
        .collect();
    let taxonomy = Ontology::build(
        concepts.iter().cloned(),
        subtypes.iter().map(|(a, b)| (a.as_str(), b.as_str())),
        vec![],
        vec![],
    )
    .expect("rank-ordered subtype edges are acyclic");
    let mut b = Builder {
        params,
        rng,
        taxonomy,
        base_relations,
    };

    // Planted run over object indices; `objects[i]` is the object's concept.
    let rule_positions: Vec<usize> = {
        let mut all: Vec<usize> = (0..params.depth).collect();
        all.shuffle(&mut b.rng);
        let mut chosen = all[..params.rule_steps].to_vec();
        chosen.sort_unstable();
        chosen
    };
    let n_provided =
        b.rng
            .gen_range(1..=params.max_inputs.max(2))
            .max(if rule_positions.first() == Some(&0) {
                2
            } else {
                1
            });
    let mut objects: Vec<usize> = (0..n_provided).map(|_| b.rng.gen_range(0..n / 3)).collect();
    let provided: Vec<ParameterDecl> = objects
        .iter()
        .enumerate()
        .map(|(i, &c)| ParameterDecl::new(format!("p{i}"), b.concept(c)))
        .collect();
    let mut known: Vec<KnownEdge> = Vec::new();
    let mut provided_relations = Vec::new();
    let n_provided_edges = b
        .rng
        .gen_range(0..=n_provided)
        .max(if n_provided >= 2 { 1 } else { 0 });
    for _ in 0..if n_provided >= 2 { n_provided_edges } else { 0 } {
        let from = b.rng.gen_range(0..n_provided);
        let to = (from + b.rng.gen_range(1..n_provided)) % n_provided;
        let relation = b.base_relation();
        provided_relations.push(RelationAtom::new(
            relation.clone(),
            format!("p{from}"),
            format!("p{to}"),
        ));
        known.push(KnownEdge { relation, from, to });
    }
    let pin = b.rng.gen_range(0..n_provided);

    let mut rules: Vec<InferenceRule> = Vec::new();
    let mut services: Vec<Service> = Vec::new();
    let mut previous_outputs: Vec<usize> = (0..n_provided).collect();
    let mut result_concept = 0;
    for step in 0..params.depth {
        let mut required: Vec<usize> =
            vec![*previous_outputs.choose(&mut b.rng).expect("non-empty")];
        let mut derived: Option<(String, usize, usize)> = None;
        if rule_positions.contains(&step) && !known.is_empty() {
            // Prefer the most recent edges so the rule sits on the chain.
            let recent = known.len().saturating_sub(4);
            let e1 = known[b.rng.gen_range(recent..known.len())].clone();
            let follow: Vec<KnownEdge> =
                known.iter().filter(|e| e.from == e1.to).cloned().collect();
            let relation = format!("d{}", rules.len());
            relations.push(RelationDef::new(relation.clone()));
            let (rule, from, to) = match follow.choose(&mut b.rng) {
                Some(e2) => (
                    InferenceRule {
                        name: String::new(),
                        parameters: vec!["x".into(), "y".into(), "z".into()],
                        preconditions: vec![
                            RelationAtom::new(e1.relation.clone(), "x", "y"),
                            RelationAtom::new(e2.relation.clone(), "y", "z"),
                        ],
                        effects: vec![RelationAtom::new(relation.clone(), "x", "z")],
                    },
                    e1.from,
                    e2.to,
                ),
                None => (
                    InferenceRule {
                        name: String::new(),
                        parameters: vec!["x".into(), "y".into()],
                        preconditions: vec![RelationAtom::new(e1.relation.clone(), "x", "y")],
                        effects: vec![RelationAtom::new(relation.clone(), "x", "y")],
                    },
                    e1.from,
                    e1.to,
                ),
            };
            rules.push(rule);
            known.push(KnownEdge {
                relation: relation.clone(),
                from,
                to,
            });
            required.extend([from, to]);
            derived = Some((relation, from, to));
        }
        let last = step + 1 == params.depth;
        if last {
            required.push(pin);
        }
        let extra = b.rng.gen_range(0..params.max_inputs);
        for _ in 0..extra {
            required.push(b.rng.gen_range(0..objects.len()));
        }
        let mut inputs: Vec<usize> = Vec::new();
        for o in required {
            if !inputs.contains(&o) {
                inputs.push(o);
            }
        }
        let slot = |o: usize| format!("in{}", inputs.iter().position(|&x| x == o).expect("input"));
        // Chain objects before this step rank at most `limit`, and each step
        // raises that by two, which keeps the last outputs within range.
        let limit = params.concepts - 2 - 2 * (params.depth - 1 - step);
        let input_types: Vec<usize> = inputs
            .iter()
            .map(|&o| b.input_concept(objects[o], limit))
            .collect();
        let floor = *input_types.iter().max().expect("non-empty");

        let mut preconditions = Vec::new();
        if let Some((relation, from, to)) = &derived {
            preconditions.push(RelationAtom::new(relation.clone(), slot(*from), slot(*to)));
        }
        for e in &known {
            if inputs.contains(&e.from) && inputs.contains(&e.to) {
                let atom = RelationAtom::new(e.relation.clone(), slot(e.from), slot(e.to));
                if !preconditions.contains(&atom) && b.rng.gen_bool(0.3) {
                    preconditions.push(atom);
                }
            }
        }

        let n_out = b.rng.gen_range(1..=params.max_outputs);
        let first_output = objects.len();
        let mut outputs = Vec::new();
        let mut effects = Vec::new();
        for j in 0..n_out {
            let c = b.output_concept(floor);
            outputs.push(ParameterDecl::new(format!("out{j}"), b.concept(c)));
            objects.push(c);
            let obj = first_output + j;
            if last && j == 0 {
                result_concept = c;
                let relation = if params.solvable {
                    GOAL_RELATION.to_string()
                } else {
                    b.base_relation()
                };
                effects.push(RelationAtom::new(
                    relation.clone(),
                    slot(pin),
                    format!("out{j}"),
                ));
                known.push(KnownEdge {
                    relation,
                    from: pin,
                    to: obj,
                });
            } else if j == 0 || b.rng.gen_bool(0.8) {
                let from = *inputs.choose(&mut b.rng).expect("non-empty");
                let relation = b.base_relation();
                effects.push(RelationAtom::new(
                    relation.clone(),
                    slot(from),
                    format!("out{j}"),
                ));
                known.push(KnownEdge {
                    relation,
                    from,
                    to: obj,
                });
            }
        }
        services.push(Service {
            name: String::new(),
            inputs: inputs
                .iter()
                .zip(&input_types)
                .map(|(&o, &c)| ParameterDecl::new(slot(o), b.concept(c)))
                .collect(),
            outputs,
            preconditions,
            effects,
            kind: ServiceKind::Plain,
        });
        previous_outputs = (first_output..objects.len()).collect();
    }
    relations.push(RelationDef::new(GOAL_RELATION));

    for _ in params.depth..params.services {
        let s = b.distractor();
        services.push(s);
    }
    for _ in 0..params.rules {
        let r = b.decoy_rule();
        rules.push(r);
    }
    services.shuffle(&mut b.rng);
    rules.shuffle(&mut b.rng);
    for (i, s) in services.iter_mut().enumerate() {
        s.name = format!("svc{i}");
    }
    for (i, r) in rules.iter_mut().enumerate() {
        r.name = format!("rule{i}");
    }

    let query = Request {
        name: "query".into(),
        provided,
        provided_relations,
        wanted: vec![ParameterDecl::new("result", b.concept(result_concept))],
        wanted_relations: vec![RelationAtom::new(
            GOAL_RELATION,
            format!("p{pin}"),
            "result",
        )],
    };
    Ok(InstanceDocument {
        ontology: OntologySection {
            concepts,
            subtypes,
            relations,
            rules,
        },
        repository: services,
        query,
    })
}
