//! Forward-chaining composition.
//!
//! Starting from the request's provided objects, every sweep tries each
//! service (plain services in repository order, then inference rules as
//! virtual services) against the current knowledge and executes the calls
//! that add something new. The loop stops as soon as the request's goal
//! pattern matches, when a sweep makes no call, or when a bound trips.

mod oracle;
mod prune;

use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::knowledge::{
    init_from_request, similar_witness, Binding, Edge, KnowledgeError, KnowledgeState,
    KnowledgeView, ObjectId, Overlay, Provenance,
};
use crate::matcher::{build_data_graph, split_assignments, MatchConfig, MatchError, QueryGraph};
use crate::ontology::Ontology;
use crate::service::{
    request_as_goal_service, rule_as_virtual_service, validate_request, CompiledService,
    Repository, Request, Service, ServiceError, ServiceKind,
};

pub use oracle::{
    brute_force_compose, brute_force_search, OracleConfig, OracleOutcome, MAX_ORACLE_DEPTH,
    MAX_ORACLE_SERVICES,
};
pub use prune::prune_plan;

/// Ontology, repository and request, checked against each other.
#[derive(Debug, Clone)]
pub struct CompositionProblem {
    pub ontology: Ontology,
    pub repository: Repository,
    pub request: Request,
}

impl CompositionProblem {
    pub fn new(
        ontology: Ontology,
        repository: Repository,
        request: Request,
    ) -> Result<Self, ServiceError> {
        repository.validate(&ontology)?;
        validate_request(&ontology, &request)?;
        Ok(CompositionProblem {
            ontology,
            repository,
            request,
        })
    }

    /// Plain services, then one virtual service per inference rule.
    pub fn callable_services(&self) -> Vec<Service> {
        self.repository
            .services
            .iter()
            .cloned()
            .chain(self.ontology.all_rules().map(rule_as_virtual_service))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServiceCall {
    pub index: usize,
    pub service: String,
    /// True for rule applications.
    pub is_virtual: bool,
    /// Inputs in declaration order.
    pub binding: Binding,
    /// `(output parameter, new object)` in output order.
    pub produced: Vec<(String, ObjectId)>,
    /// Effect edges that were new when the call ran.
    pub added_edges: Vec<Edge>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompositionPlan {
    pub calls: Vec<ServiceCall>,
    /// Binds the goal's inputs: wanted parameters, then any provided
    /// parameters the wanted relations mention.
    pub goal_binding: Binding,
    /// Main-loop sweeps performed.
    pub iterations: usize,
    /// False when rule applications were left out of `calls`; replaying
    /// such a plan has to saturate the rules before each call.
    pub includes_rule_calls: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ComposerConfig {
    pub max_iterations: usize,
    pub max_objects: usize,
    pub injective: bool,
    /// Drop calls the goal does not depend on.
    pub prune: bool,
    pub include_rule_calls_in_plan: bool,
}

impl Default for ComposerConfig {
    fn default() -> Self {
        ComposerConfig {
            max_iterations: 100,
            max_objects: 10_000,
            injective: false,
            prune: false,
            include_rule_calls_in_plan: true,
        }
    }
}

impl ComposerConfig {
    pub fn validate(&self) -> Result<(), ComposeError> {
        if self.max_iterations == 0 {
            return Err(ComposeError::InvalidConfig(
                "max iterations must be positive".into(),
            ));
        }
        if self.max_objects == 0 {
            return Err(ComposeError::InvalidConfig(
                "max objects must be positive".into(),
            ));
        }
        Ok(())
    }

    fn match_config(&self) -> MatchConfig {
        MatchConfig::all().injective(self.injective)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NotSolvedReason {
    /// A full sweep executed no call.
    NoProgress,
    IterationBound,
    ObjectBound,
}

impl fmt::Display for NotSolvedReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NotSolvedReason::NoProgress => "no useful call left",
            NotSolvedReason::IterationBound => "iteration bound reached",
            NotSolvedReason::ObjectBound => "object bound reached",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ComposeError {
    #[error("not solved: {0}")]
    NotSolved(NotSolvedReason),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("unknown service `{0}`")]
    UnknownService(String),
    #[error("oracle guard exceeded: {0}")]
    GuardExceeded(String),
    #[error(transparent)]
    Match(#[from] MatchError),
    #[error(transparent)]
    Knowledge(#[from] KnowledgeError),
    #[error(transparent)]
    Service(#[from] ServiceError),
}

/// The service a plan call refers to: a repository service, or for virtual
/// calls an inference rule.
pub(crate) fn lookup_service(
    problem: &CompositionProblem,
    name: &str,
    is_virtual: bool,
) -> Result<Service, ComposeError> {
    let found = if is_virtual {
        problem
            .ontology
            .all_rules()
            .find(|r| r.name == name)
            .map(rule_as_virtual_service)
    } else {
        problem.repository.get(name).cloned()
    };
    found.ok_or_else(|| ComposeError::UnknownService(name.to_string()))
}

/// The goal pattern: query graph with provided parameters pinned to the
/// request's own objects.
pub(crate) fn goal_query(
    ontology: &Ontology,
    state: &KnowledgeState,
    request: &Request,
) -> Result<QueryGraph, ComposeError> {
    let goal = CompiledService::compile(ontology, &request_as_goal_service(request))?;
    let ServiceKind::Goal { pinned } = &goal.kind else {
        unreachable!("goal service has goal kind")
    };
    let mut pins = Vec::with_capacity(pinned.len());
    for name in pinned {
        let obj = state
            .objects()
            .iter()
            .find(|o| matches!(&o.provenance, Provenance::FromRequest(p) if p == name))
            .ok_or_else(|| KnowledgeError::UnboundParameter(name.clone()))?;
        let pos = goal
            .input_position(name)
            .expect("pinned names are goal inputs");
        pins.push((pos, obj.id));
    }
    Ok(QueryGraph::from_compiled(&goal, &pins))
}

/// A binding of the goal pattern in `state`, if the request is answered.
pub fn can_answer_query(
    ontology: &Ontology,
    state: &KnowledgeState,
    request: &Request,
    injective: bool,
) -> Result<Option<Binding>, ComposeError> {
    let query = goal_query(ontology, state, request)?;
    answer(&query, ontology, state, injective)
}

fn answer(
    query: &QueryGraph,
    ontology: &Ontology,
    state: &KnowledgeState,
    injective: bool,
) -> Result<Option<Binding>, ComposeError> {
    let data = build_data_graph(ontology, state);
    let found = split_assignments(query, &data, &MatchConfig::first().injective(injective))?;
    Ok(found.first().map(|a| Binding::zip(&query.node_names(), a)))
}

/// Whether calling `service` with `inputs` would add anything new: either an
/// effect edge between two already known objects that is not yet present, or
/// a created object not similar to any known object of its concept.
///
/// Edges that touch a created object are necessarily absent and do not count
/// on their own; the object's similarity test covers them.
pub(crate) fn useful(
    state: &KnowledgeState,
    service: &CompiledService,
    inputs: &[ObjectId],
) -> bool {
    redundancy_witnesses(state, service, inputs).is_none()
}

/// `None` when the call is useful. Otherwise, for each created object, an
/// existing object it is similar to. The verdict stays valid while neither
/// the inputs' components nor the witnesses' components change, because
/// edges between known objects are never removed.
fn redundancy_witnesses(
    state: &KnowledgeState,
    service: &CompiledService,
    inputs: &[ObjectId],
) -> Option<Vec<ObjectId>> {
    let overlay = Overlay::simulate(state, service, inputs);
    let known = state.len() as u32;
    if overlay
        .new_edges()
        .iter()
        .any(|e| e.src.0 < known && e.dst.0 < known)
    {
        return None;
    }
    overlay
        .new_objects()
        .map(|obj| {
            similar_witness(
                &overlay,
                obj,
                state.objects_of_concept(overlay.concept_of(obj)),
            )
        })
        .collect()
}

/// Name-level form of the usefulness filter. The binding is assumed to
/// match; only the parameter names and object ids are used.
pub fn provides_useful_information(
    ontology: &Ontology,
    state: &KnowledgeState,
    service: &Service,
    binding: &Binding,
) -> Result<bool, KnowledgeError> {
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
    Ok(useful(state, &compiled, &inputs))
}

/// Runs the composition loop.
pub fn compose(
    problem: &CompositionProblem,
    config: &ComposerConfig,
) -> Result<CompositionPlan, ComposeError> {
    config.validate()?;
    let ontology = &problem.ontology;
    let (mut state, _) = init_from_request(ontology, &problem.request)?;
    let goal = goal_query(ontology, &state, &problem.request)?;

    let services = problem
        .callable_services()
        .iter()
        .map(|s| CompiledService::compile(ontology, s))
        .collect::<Result<Vec<_>, _>>()?;
    let queries: Vec<QueryGraph> = services
        .iter()
        .map(|s| QueryGraph::from_compiled(s, &[]))
        .collect();
    let match_config = config.match_config();
    let effect_inputs: Vec<Vec<usize>> = services.iter().map(|s| s.effect_inputs()).collect();

    let mut executed: HashSet<(usize, Vec<ObjectId>)> = HashSet::new();
    // Calls found redundant, keyed by the inputs their effects touch (the
    // others cannot change the outcome), with the state version of the check
    // and the objects that witnessed it.
    let mut redundant: HashMap<(usize, Vec<ObjectId>), (u64, Vec<ObjectId>)> = HashMap::new();
    let mut calls: Vec<ServiceCall> = Vec::new();
    let mut iterations = 0;
    loop {
        if let Some(goal_binding) = answer(&goal, ontology, &state, config.injective)? {
            let mut plan = CompositionPlan {
                calls,
                goal_binding,
                iterations,
                includes_rule_calls: true,
            };
            if config.prune {
                plan = prune_plan(&plan, problem)?;
            }
            if !config.include_rule_calls_in_plan {
                plan = without_rule_calls(plan);
            }
            return Ok(plan);
        }
        if iterations >= config.max_iterations {
            return Err(ComposeError::NotSolved(NotSolvedReason::IterationBound));
        }
        iterations += 1;

        let mut updated = false;
        for (si, (service, query)) in services.iter().zip(&queries).enumerate() {
            let matches =
                split_assignments(query, &build_data_graph(ontology, &state), &match_config)?;
            for inputs in matches {
                let key = (si, inputs);
                if executed.contains(&key) {
                    continue;
                }
                let touched = (si, effect_inputs[si].iter().map(|&i| key.1[i]).collect());
                if let Some((at, witnesses)) = redundant.get(&touched) {
                    if touched
                        .1
                        .iter()
                        .chain(witnesses)
                        .all(|&o| state.component_version(o) <= *at)
                    {
                        continue;
                    }
                }
                if let Some(witnesses) = redundancy_witnesses(&state, service, &key.1) {
                    redundant.insert(touched, (state.version(), witnesses));
                    continue;
                }
                if state.len() + service.output_concepts.len() > config.max_objects {
                    return Err(ComposeError::NotSolved(NotSolvedReason::ObjectBound));
                }
                let effects = state.apply_compiled(service, &key.1, calls.len());
                calls.push(ServiceCall {
                    index: calls.len(),
                    service: service.name.clone(),
                    is_virtual: service.kind.is_virtual(),
                    binding: Binding::zip(&service.input_names, &key.1),
                    produced: service
                        .output_names
                        .iter()
                        .cloned()
                        .zip(effects.new_objects)
                        .collect(),
                    added_edges: effects.new_edges,
                });
                executed.insert(key);
                updated = true;
            }
        }
        if !updated {
            return Err(ComposeError::NotSolved(NotSolvedReason::NoProgress));
        }
    }
}

fn without_rule_calls(plan: CompositionPlan) -> CompositionPlan {
    let calls = plan
        .calls
        .into_iter()
        .filter(|c| !c.is_virtual)
        .enumerate()
        .map(|(index, c)| ServiceCall { index, ..c })
        .collect();
    CompositionPlan {
        calls,
        includes_rule_calls: false,
        ..plan
    }
}
