//! Plan verification by replay.
//!
//! Starting again from the request's initial knowledge, every call's binding
//! is re-checked against the service's inputs and preconditions, its effects
//! are re-applied, and the recorded objects and edges are compared with what
//! the replay produced. Finally the goal binding is checked.

use std::fmt;

use super::plan::{edge_record, Origin, PlanDocument};
use crate::composer::{
    goal_query, lookup_service, ComposerConfig, CompositionPlan, CompositionProblem,
};
use crate::knowledge::{init_from_request, KnowledgeState, ObjectId, Provenance};
use crate::matcher::{
    build_data_graph, check_assignment, enumerate_assignments, MatchConfig, QueryGraph,
};
use crate::ontology::Ontology;
use crate::service::{rule_as_virtual_service, CompiledService};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Step {
    /// Zero-based call index.
    Call(usize),
    Goal,
    Objects,
}

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Step::Call(i) => write!(f, "step {}", i + 1),
            Step::Goal => f.write_str("goal"),
            Step::Objects => f.write_str("objects"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Valid,
    Invalid { at: Step, reason: String },
}

impl Verdict {
    pub fn is_valid(&self) -> bool {
        *self == Verdict::Valid
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Valid => f.write_str("valid"),
            Verdict::Invalid { at, reason } => write!(f, "invalid at {at}: {reason}"),
        }
    }
}

/// Applies every rule until no rule adds an edge. Rules create no objects,
/// so this terminates.
fn saturate_rules(
    ontology: &Ontology,
    state: &mut KnowledgeState,
    rules: &[(CompiledService, QueryGraph)],
) {
    loop {
        let mut changed = false;
        for (rule, query) in rules {
            let matches = enumerate_assignments(
                query,
                &build_data_graph(ontology, state),
                &MatchConfig::all(),
            )
            .expect("no limit set");
            for inputs in matches {
                changed |= !state
                    .apply_compiled(rule, &inputs, usize::MAX)
                    .new_edges
                    .is_empty();
            }
        }
        if !changed {
            return;
        }
    }
}

fn invalid(at: Step, reason: impl Into<String>) -> Verdict {
    Verdict::Invalid {
        at,
        reason: reason.into(),
    }
}

fn distinct(objects: &[ObjectId]) -> bool {
    objects
        .iter()
        .enumerate()
        .all(|(i, o)| !objects[..i].contains(o))
}

/// Replays `plan` against `problem`.
pub fn verify_plan(problem: &CompositionProblem, plan: &PlanDocument) -> Verdict {
    let ontology = &problem.ontology;
    let injective = plan.metadata.config.injective;
    let (mut state, _) = match init_from_request(ontology, &problem.request) {
        Ok(s) => s,
        Err(e) => return invalid(Step::Objects, e.to_string()),
    };
    let rules: Vec<(CompiledService, QueryGraph)> = if plan.metadata.includes_rule_calls {
        Vec::new()
    } else {
        ontology
            .all_rules()
            .map(|r| {
                let c = CompiledService::compile(ontology, &rule_as_virtual_service(r))
                    .expect("rules validate");
                let q = QueryGraph::from_compiled(&c, &[]);
                (c, q)
            })
            .collect()
    };

    for (i, call) in plan.calls.iter().enumerate() {
        let at = Step::Call(i);
        saturate_rules(ontology, &mut state, &rules);
        if call.is_virtual && !plan.metadata.includes_rule_calls {
            return invalid(at, "rule call in a plan that declares rule calls omitted");
        }
        let service = match lookup_service(problem, &call.service, call.is_virtual) {
            Ok(s) => s,
            Err(e) => return invalid(at, e.to_string()),
        };
        let compiled =
            CompiledService::compile(ontology, &service).expect("problem services validate");
        if let Some(extra) = call
            .binding
            .keys()
            .find(|k| compiled.input_position(k).is_none())
        {
            return invalid(
                at,
                format!("`{extra}` is not an input of `{}`", call.service),
            );
        }
        let mut inputs = Vec::with_capacity(compiled.input_names.len());
        for name in &compiled.input_names {
            match call.binding.get(name) {
                Some(&o) => inputs.push(o),
                None => return invalid(at, format!("input `{name}` is unbound")),
            }
        }
        let query = QueryGraph::from_compiled(&compiled, &[]);
        if let Err(reason) = check_assignment(&query, &build_data_graph(ontology, &state), &inputs)
        {
            return invalid(at, reason);
        }
        if injective && !distinct(&inputs) {
            return invalid(at, "two inputs share an object under injective matching");
        }
        if call.index != i {
            return invalid(at, format!("call numbered {} at position {i}", call.index));
        }
        let effects = state.apply_compiled(&compiled, &inputs, i);
        let produced: Vec<(String, ObjectId)> = compiled
            .output_names
            .iter()
            .cloned()
            .zip(effects.new_objects)
            .collect();
        let recorded: Vec<(String, ObjectId)> = call
            .produced
            .iter()
            .map(|p| (p.param.clone(), p.object))
            .collect();
        if produced != recorded {
            return invalid(at, "produced objects differ from the replay");
        }
        let added: Vec<_> = effects
            .new_edges
            .iter()
            .map(|e| edge_record(ontology, e))
            .collect();
        if added != call.added_edges {
            return invalid(at, "added edges differ from the replay");
        }
    }
    saturate_rules(ontology, &mut state, &rules);

    let goal = match goal_query(ontology, &state, &problem.request) {
        Ok(q) => q,
        Err(e) => return invalid(Step::Goal, e.to_string()),
    };
    let names = goal.node_names();
    if let Some(extra) = plan.goal_binding.keys().find(|k| !names.contains(k)) {
        return invalid(Step::Goal, format!("`{extra}` is not a goal parameter"));
    }
    let mut image = Vec::with_capacity(names.len());
    for name in &names {
        match plan.goal_binding.get(name) {
            Some(&o) => image.push(o),
            None => return invalid(Step::Goal, format!("goal parameter `{name}` is unbound")),
        }
    }
    if let Err(reason) = check_assignment(&goal, &build_data_graph(ontology, &state), &image) {
        return invalid(Step::Goal, reason);
    }
    if injective && !distinct(&image) {
        return invalid(
            Step::Goal,
            "two goal parameters share an object under injective matching",
        );
    }

    if plan.objects.len() != state.len() {
        return invalid(
            Step::Objects,
            format!(
                "{} objects listed, replay has {}",
                plan.objects.len(),
                state.len()
            ),
        );
    }
    for (record, obj) in plan.objects.iter().zip(state.objects()) {
        let origin = match &obj.provenance {
            Provenance::FromRequest(p) => Origin::Request { param: p.clone() },
            Provenance::FromCall { call, output } => Origin::Call {
                call: *call,
                param: output.clone(),
            },
        };
        if record.id != obj.id
            || record.concept != ontology.concept_name(obj.concept)
            || record.origin != origin
        {
            return invalid(
                Step::Objects,
                format!("object {} does not match the replay", obj.id),
            );
        }
    }
    Verdict::Valid
}

/// Verifies an in-memory plan through its document form.
pub fn verify_composition(
    problem: &CompositionProblem,
    plan: &CompositionPlan,
    config: &ComposerConfig,
) -> Verdict {
    match PlanDocument::from_plan(problem, plan, config) {
        Ok(doc) => verify_plan(problem, &doc),
        Err(e) => invalid(Step::Objects, e.to_string()),
    }
}
