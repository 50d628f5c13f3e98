//! Exhaustive search over call sequences, used as a test oracle.
//!
//! Iterative deepening over every enabled call of every service and rule,
//! checking the goal after each step. Three reductions keep it tractable
//! without losing solutions:
//!
//! * calls that change nothing are skipped;
//! * a call identical to one already on the path (same service, same
//!   inputs) is skipped, since under non-injective matching its outputs can
//!   always be replaced by the earlier copies;
//! * two adjacent calls that were both enabled before the first of them are
//!   explored in one order only.

use super::{answer, goal_query, ComposeError, CompositionProblem};
use crate::knowledge::{init_from_request, Edge, KnowledgeState, ObjectId};
use crate::matcher::{build_data_graph, enumerate_assignments, MatchConfig, QueryGraph};
use crate::service::CompiledService;

pub const MAX_ORACLE_SERVICES: usize = 8;
pub const MAX_ORACLE_DEPTH: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleOutcome {
    /// Minimal number of calls (rule applications included).
    SolvableAt(usize),
    NotSolvableWithin(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleConfig {
    pub max_depth: usize,
    /// When false, inference rules are never applied.
    pub use_rules: bool,
    pub partial_order_reduction: bool,
}

impl OracleConfig {
    pub fn new(max_depth: usize) -> Self {
        OracleConfig {
            max_depth,
            use_rules: true,
            partial_order_reduction: true,
        }
    }
}

pub fn brute_force_compose(
    problem: &CompositionProblem,
    max_depth: usize,
) -> Result<OracleOutcome, ComposeError> {
    brute_force_search(problem, &OracleConfig::new(max_depth))
}

pub fn brute_force_search(
    problem: &CompositionProblem,
    config: &OracleConfig,
) -> Result<OracleOutcome, ComposeError> {
    if problem.repository.services.len() > MAX_ORACLE_SERVICES {
        return Err(ComposeError::GuardExceeded(format!(
            "{} services, at most {MAX_ORACLE_SERVICES} allowed",
            problem.repository.services.len()
        )));
    }
    if config.max_depth > MAX_ORACLE_DEPTH {
        return Err(ComposeError::GuardExceeded(format!(
            "depth {}, at most {MAX_ORACLE_DEPTH} allowed",
            config.max_depth
        )));
    }
    let ontology = &problem.ontology;
    let (state, _) = init_from_request(ontology, &problem.request)?;
    let mut services = problem.callable_services();
    if !config.use_rules {
        services.truncate(problem.repository.services.len());
    }
    let services = services
        .iter()
        .map(|s| CompiledService::compile(ontology, s))
        .collect::<Result<Vec<_>, _>>()?;
    let search = Search {
        problem,
        goal: goal_query(ontology, &state, &problem.request)?,
        queries: services
            .iter()
            .map(|s| QueryGraph::from_compiled(s, &[]))
            .collect(),
        services,
        reduce: config.partial_order_reduction,
    };
    for depth in 0..=config.max_depth {
        if search.dfs(&state, &mut Vec::new(), None, depth)? {
            return Ok(OracleOutcome::SolvableAt(depth));
        }
    }
    Ok(OracleOutcome::NotSolvableWithin(config.max_depth))
}

type CallKey = (usize, Vec<ObjectId>);

struct LastCall {
    key: CallKey,
    objects_before: usize,
    new_edges: Vec<Edge>,
}

struct Search<'a> {
    problem: &'a CompositionProblem,
    goal: QueryGraph,
    services: Vec<CompiledService>,
    queries: Vec<QueryGraph>,
    reduce: bool,
}

impl Search<'_> {
    /// Whether the call `key` was already enabled in the state before `last`.
    fn enabled_before(&self, last: &LastCall, key: &CallKey) -> bool {
        let (si, inputs) = key;
        inputs.iter().all(|o| o.index() < last.objects_before)
            && self.services[*si].preconditions.iter().all(|a| {
                let edge = Edge {
                    relation: a.relation,
                    src: inputs[a.from],
                    dst: inputs[a.to],
                };
                !last.new_edges.contains(&edge)
            })
    }

    fn dfs(
        &self,
        state: &KnowledgeState,
        path: &mut Vec<CallKey>,
        last: Option<&LastCall>,
        depth_left: usize,
    ) -> Result<bool, ComposeError> {
        let ontology = &self.problem.ontology;
        if answer(&self.goal, ontology, state, false)?.is_some() {
            return Ok(true);
        }
        if depth_left == 0 {
            return Ok(false);
        }
        let data = build_data_graph(ontology, state);
        for (si, query) in self.queries.iter().enumerate() {
            for inputs in enumerate_assignments(query, &data, &MatchConfig::all())? {
                let key = (si, inputs);
                if path.contains(&key) {
                    continue;
                }
                if self.reduce {
                    if let Some(last) = last {
                        if key < last.key && self.enabled_before(last, &key) {
                            continue;
                        }
                    }
                }
                let mut next = state.clone();
                let effects = next.apply_compiled(&self.services[si], &key.1, path.len());
                if effects.new_objects.is_empty() && effects.new_edges.is_empty() {
                    continue;
                }
                let step = LastCall {
                    key: key.clone(),
                    objects_before: state.len(),
                    new_edges: effects.new_edges,
                };
                path.push(key);
                let found = self.dfs(&next, path, Some(&step), depth_left - 1)?;
                path.pop();
                if found {
                    return Ok(true);
                }
            }
        }
        Ok(false)
    }
}
