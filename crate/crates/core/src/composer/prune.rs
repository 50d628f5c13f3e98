use std::collections::{HashMap, HashSet};

use super::{
    goal_query, lookup_service, ComposeError, CompositionPlan, CompositionProblem, ServiceCall,
};
use crate::knowledge::{init_from_request, Binding, Edge, KnowledgeError, ObjectId};
use crate::service::CompiledService;

/// Keeps only the calls the goal binding depends on, through the objects
/// they created or the edges they added, and replays them on a fresh state
/// so that object ids and call indices stay dense.
///
/// A plan without its rule calls carries no record of which edges the rules
/// derived, so it is returned unchanged.
pub fn prune_plan(
    plan: &CompositionPlan,
    problem: &CompositionProblem,
) -> Result<CompositionPlan, ComposeError> {
    if !plan.includes_rule_calls {
        return Ok(plan.clone());
    }
    let ontology = &problem.ontology;
    let (mut state, _) = init_from_request(ontology, &problem.request)?;
    let goal = goal_query(ontology, &state, &problem.request)?;

    let compiled = plan
        .calls
        .iter()
        .map(|c| {
            let service = lookup_service(problem, &c.service, c.is_virtual)?;
            Ok(CompiledService::compile(ontology, &service)?)
        })
        .collect::<Result<Vec<_>, ComposeError>>()?;
    let inputs_of = |k: usize| -> Result<Vec<ObjectId>, ComposeError> {
        compiled[k]
            .input_names
            .iter()
            .map(|n| {
                plan.calls[k]
                    .binding
                    .get(n)
                    .ok_or_else(|| KnowledgeError::UnboundParameter(n.clone()).into())
            })
            .collect()
    };

    let mut needed_objects: HashSet<ObjectId> = plan.goal_binding.objects().collect();
    let mut needed_edges: HashSet<Edge> = HashSet::new();
    let goal_objects: Vec<ObjectId> = goal
        .node_names()
        .iter()
        .map(|n| {
            plan.goal_binding
                .get(n)
                .ok_or_else(|| KnowledgeError::UnboundParameter(n.clone()))
        })
        .collect::<Result<_, _>>()?;
    for e in &goal.edges {
        needed_edges.insert(Edge {
            relation: e.relation,
            src: goal_objects[e.from],
            dst: goal_objects[e.to],
        });
    }

    let mut keep = vec![false; plan.calls.len()];
    for k in (0..plan.calls.len()).rev() {
        let call = &plan.calls[k];
        let contributes = call
            .produced
            .iter()
            .any(|(_, o)| needed_objects.contains(o))
            || call.added_edges.iter().any(|e| needed_edges.contains(e));
        if !contributes {
            continue;
        }
        keep[k] = true;
        let inputs = inputs_of(k)?;
        needed_objects.extend(inputs.iter().copied());
        for a in &compiled[k].preconditions {
            needed_edges.insert(Edge {
                relation: a.relation,
                src: inputs[a.from],
                dst: inputs[a.to],
            });
        }
    }

    let mut remap: HashMap<ObjectId, ObjectId> = (0..state.len() as u32)
        .map(|i| (ObjectId(i), ObjectId(i)))
        .collect();
    let mut calls = Vec::new();
    for k in (0..plan.calls.len()).filter(|&k| keep[k]) {
        let inputs: Vec<ObjectId> = inputs_of(k)?
            .iter()
            .map(|o| {
                remap
                    .get(o)
                    .copied()
                    .ok_or(KnowledgeError::UnknownObject(*o))
            })
            .collect::<Result<_, _>>()?;
        let service = &compiled[k];
        let effects = state.apply_compiled(service, &inputs, calls.len());
        for ((_, old), new) in plan.calls[k].produced.iter().zip(&effects.new_objects) {
            remap.insert(*old, *new);
        }
        calls.push(ServiceCall {
            index: calls.len(),
            service: service.name.clone(),
            is_virtual: plan.calls[k].is_virtual,
            binding: Binding::zip(&service.input_names, &inputs),
            produced: service
                .output_names
                .iter()
                .cloned()
                .zip(effects.new_objects)
                .collect(),
            added_edges: effects.new_edges,
        });
    }
    let goal_binding = Binding::new(
        plan.goal_binding
            .iter()
            .map(|(n, o)| {
                Ok((
                    n.to_string(),
                    remap
                        .get(&o)
                        .copied()
                        .ok_or(KnowledgeError::UnknownObject(o))?,
                ))
            })
            .collect::<Result<_, KnowledgeError>>()?,
    );
    Ok(CompositionPlan {
        calls,
        goal_binding,
        iterations: plan.iterations,
        includes_rule_calls: true,
    })
}
