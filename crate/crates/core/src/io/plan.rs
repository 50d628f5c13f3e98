//! Canonical plan documents.
//!
//! Keys appear in a fixed order and bindings are sorted by parameter name,
//! so equal plans serialize to identical bytes. Objects carry their origin,
//! which makes a plan readable without re-running the solver.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::composer::{
    lookup_service, ComposeError, ComposerConfig, CompositionPlan, CompositionProblem,
};
use crate::knowledge::{init_from_request, Binding, Edge, ObjectId, Provenance};
use crate::ontology::Ontology;
use crate::service::ParamType;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeRecord {
    pub relation: String,
    pub from: ObjectId,
    pub to: ObjectId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProducedRecord {
    pub param: String,
    pub object: ObjectId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct CallRecord {
    pub index: usize,
    pub service: String,
    #[serde(rename = "virtual")]
    pub is_virtual: bool,
    pub binding: BTreeMap<String, ObjectId>,
    /// In output declaration order.
    pub produced: Vec<ProducedRecord>,
    pub added_edges: Vec<EdgeRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase", deny_unknown_fields)]
pub enum Origin {
    Request { param: String },
    Call { call: usize, param: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectRecord {
    pub id: ObjectId,
    pub concept: String,
    pub origin: Origin,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct PlanMetadata {
    pub iterations: usize,
    pub includes_rule_calls: bool,
    pub config: ComposerConfig,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct PlanDocument {
    pub calls: Vec<CallRecord>,
    pub goal_binding: BTreeMap<String, ObjectId>,
    pub objects: Vec<ObjectRecord>,
    pub metadata: PlanMetadata,
}

fn binding_map(b: &Binding) -> BTreeMap<String, ObjectId> {
    b.iter().map(|(n, o)| (n.to_string(), o)).collect()
}

pub(crate) fn edge_record(ontology: &Ontology, e: &Edge) -> EdgeRecord {
    EdgeRecord {
        relation: ontology.relation_name(e.relation).to_string(),
        from: e.src,
        to: e.dst,
    }
}

impl PlanDocument {
    pub fn from_plan(
        problem: &CompositionProblem,
        plan: &CompositionPlan,
        config: &ComposerConfig,
    ) -> Result<PlanDocument, ComposeError> {
        let ontology = &problem.ontology;
        let (state, _) = init_from_request(ontology, &problem.request)?;
        let mut objects: Vec<ObjectRecord> = state
            .objects()
            .iter()
            .map(|o| ObjectRecord {
                id: o.id,
                concept: ontology.concept_name(o.concept).to_string(),
                origin: match &o.provenance {
                    Provenance::FromRequest(p) => Origin::Request { param: p.clone() },
                    Provenance::FromCall { call, output } => Origin::Call {
                        call: *call,
                        param: output.clone(),
                    },
                },
            })
            .collect();
        let mut calls = Vec::with_capacity(plan.calls.len());
        for call in &plan.calls {
            let service = lookup_service(problem, &call.service, call.is_virtual)?;
            for (param, obj) in &call.produced {
                let concept = match service
                    .outputs
                    .iter()
                    .find(|p| &p.name == param)
                    .map(|p| &p.concept)
                {
                    Some(ParamType::Concept(c)) => c.clone(),
                    _ => {
                        return Err(ComposeError::UnknownService(format!(
                            "{}.{param}",
                            call.service
                        )))
                    }
                };
                objects.push(ObjectRecord {
                    id: *obj,
                    concept,
                    origin: Origin::Call {
                        call: call.index,
                        param: param.clone(),
                    },
                });
            }
            calls.push(CallRecord {
                index: call.index,
                service: call.service.clone(),
                is_virtual: call.is_virtual,
                binding: binding_map(&call.binding),
                produced: call
                    .produced
                    .iter()
                    .map(|(p, o)| ProducedRecord {
                        param: p.clone(),
                        object: *o,
                    })
                    .collect(),
                added_edges: call
                    .added_edges
                    .iter()
                    .map(|e| edge_record(ontology, e))
                    .collect(),
            });
        }
        objects.sort_by_key(|o| o.id);
        Ok(PlanDocument {
            calls,
            goal_binding: binding_map(&plan.goal_binding),
            objects,
            metadata: PlanMetadata {
                iterations: plan.iterations,
                includes_rule_calls: plan.includes_rule_calls,
                config: *config,
            },
        })
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("plans serialize");
        text.push('\n');
        text
    }

    pub fn from_json(text: &str) -> Result<PlanDocument, String> {
        let mut de = serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(&mut de).map_err(|e| {
            let path = e.path().to_string();
            if path == "." {
                e.inner().to_string()
            } else {
                format!("{path}: {}", e.inner())
            }
        })
    }
}
