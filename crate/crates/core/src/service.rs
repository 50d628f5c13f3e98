//! Services, user requests and the virtual services compiled from inference
//! rules and from the request's goal.
//!
//! Every parameter carries a local name and a concept type, so a service can
//! take two distinct objects of the same concept. Pre/effect atoms are kept
//! apart explicitly instead of being inferred from endpoint positions.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::ontology::{ConceptIdx, InferenceRule, Ontology, RelIdx, RelationAtom};

/// Wildcard marker for untyped parameters in documents.
pub const ANY_MARKER: &str = "*";

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ParamType {
    Concept(String),
    /// Matches every object; only rule-derived virtual services use it.
    Any,
}

impl Serialize for ParamType {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            ParamType::Concept(c) => s.serialize_str(c),
            ParamType::Any => s.serialize_str(ANY_MARKER),
        }
    }
}

impl<'de> Deserialize<'de> for ParamType {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Ok(if s == ANY_MARKER {
            ParamType::Any
        } else {
            ParamType::Concept(s)
        })
    }
}

impl fmt::Display for ParamType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamType::Concept(c) => f.write_str(c),
            ParamType::Any => f.write_str(ANY_MARKER),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct ParameterDecl {
    pub name: String,
    pub concept: ParamType,
}

impl ParameterDecl {
    pub fn new(name: impl Into<String>, concept: impl Into<String>) -> Self {
        ParameterDecl {
            name: name.into(),
            concept: ParamType::Concept(concept.into()),
        }
    }

    /// Parameter named after its concept.
    pub fn of(concept: impl Into<String>) -> Self {
        let c = concept.into();
        ParameterDecl::new(c.clone(), c)
    }

    pub fn any(name: impl Into<String>) -> Self {
        ParameterDecl {
            name: name.into(),
            concept: ParamType::Any,
        }
    }
}

impl<'de> Deserialize<'de> for ParameterDecl {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        // A bare string is shorthand for a parameter named after its concept.
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Short(String),
            Full { name: String, concept: ParamType },
        }
        Ok(match Repr::deserialize(d)? {
            Repr::Short(c) => ParameterDecl::of(c),
            Repr::Full { name, concept } => ParameterDecl { name, concept },
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub enum ServiceKind {
    #[default]
    Plain,
    /// Compiled from an inference rule.
    Rule,
    /// Compiled from the user request; `pinned` inputs are provided
    /// parameters that must bind to the request's own objects.
    Goal { pinned: Vec<String> },
}

impl ServiceKind {
    pub fn is_virtual(&self) -> bool {
        !matches!(self, ServiceKind::Plain)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Service {
    pub name: String,
    #[serde(default)]
    pub inputs: Vec<ParameterDecl>,
    #[serde(default)]
    pub outputs: Vec<ParameterDecl>,
    #[serde(default)]
    pub preconditions: Vec<RelationAtom>,
    #[serde(default)]
    pub effects: Vec<RelationAtom>,
    #[serde(skip)]
    pub kind: ServiceKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Request {
    #[serde(default = "default_request_name")]
    pub name: String,
    #[serde(default)]
    pub provided: Vec<ParameterDecl>,
    #[serde(default)]
    pub provided_relations: Vec<RelationAtom>,
    #[serde(default)]
    pub wanted: Vec<ParameterDecl>,
    #[serde(default)]
    pub wanted_relations: Vec<RelationAtom>,
}

fn default_request_name() -> String {
    "query".to_string()
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Repository {
    pub services: Vec<Service>,
}

impl Repository {
    pub fn new(services: Vec<Service>) -> Self {
        Repository { services }
    }

    pub fn get(&self, name: &str) -> Option<&Service> {
        self.services.iter().find(|s| s.name == name)
    }

    pub fn validate(&self, ontology: &Ontology) -> Result<(), ServiceError> {
        let mut names = HashSet::new();
        for s in &self.services {
            if !names.insert(s.name.as_str()) {
                return Err(ServiceError::DuplicateName {
                    owner: "repository".into(),
                    name: s.name.clone(),
                });
            }
            validate_service(ontology, s)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ServiceError {
    #[error("`{owner}`: unknown concept `{concept}`")]
    UnknownConcept { owner: String, concept: String },
    #[error("`{owner}`: unknown relation `{relation}`")]
    UnknownRelation { owner: String, relation: String },
    #[error("`{owner}`: parameter `{name}` is both an input and an output")]
    InputOutputOverlap { owner: String, name: String },
    #[error("`{owner}`: precondition {atom} mentions a non-input parameter")]
    PreconditionMentionsOutput { owner: String, atom: RelationAtom },
    #[error("`{owner}`: duplicate name `{name}`")]
    DuplicateName { owner: String, name: String },
    #[error("`{owner}`: atom {atom} uses undeclared parameter `{name}`")]
    UndeclaredParameter {
        owner: String,
        atom: RelationAtom,
        name: String,
    },
    #[error("`{owner}`: untyped parameter `{name}` outside a rule")]
    AnyNotAllowed { owner: String, name: String },
    #[error("`{owner}`: effect {atom} relates inputs only; that belongs in the preconditions")]
    EffectBetweenInputs { owner: String, atom: RelationAtom },
    #[error("`{owner}`: service has neither outputs nor effects")]
    NoOutputOrEffect { owner: String },
    #[error("empty service name")]
    EmptyName,
}

struct Scope<'a> {
    owner: &'a str,
    inputs: HashSet<&'a str>,
    outputs: HashSet<&'a str>,
}

impl<'a> Scope<'a> {
    fn new(
        ontology: &Ontology,
        owner: &'a str,
        inputs: &'a [ParameterDecl],
        outputs: &'a [ParameterDecl],
        allow_any: bool,
    ) -> Result<Self, ServiceError> {
        let mut scope = Scope {
            owner,
            inputs: HashSet::new(),
            outputs: HashSet::new(),
        };
        for (decls, into_inputs) in [(inputs, true), (outputs, false)] {
            for p in decls {
                if p.name.is_empty() {
                    return Err(ServiceError::EmptyName);
                }
                match &p.concept {
                    ParamType::Any if !allow_any => {
                        return Err(ServiceError::AnyNotAllowed {
                            owner: owner.into(),
                            name: p.name.clone(),
                        })
                    }
                    ParamType::Any => {}
                    ParamType::Concept(c) => {
                        if ontology.concept(c).is_none() {
                            return Err(ServiceError::UnknownConcept {
                                owner: owner.into(),
                                concept: c.clone(),
                            });
                        }
                    }
                }
                let set = if into_inputs {
                    &mut scope.inputs
                } else {
                    &mut scope.outputs
                };
                if !set.insert(p.name.as_str()) {
                    return Err(ServiceError::DuplicateName {
                        owner: owner.into(),
                        name: p.name.clone(),
                    });
                }
            }
        }
        if let Some(name) = scope.inputs.intersection(&scope.outputs).min() {
            return Err(ServiceError::InputOutputOverlap {
                owner: owner.into(),
                name: name.to_string(),
            });
        }
        Ok(scope)
    }

    fn check_atom(&self, ontology: &Ontology, atom: &RelationAtom) -> Result<(), ServiceError> {
        if ontology.relation(&atom.relation).is_none() {
            return Err(ServiceError::UnknownRelation {
                owner: self.owner.into(),
                relation: atom.relation.clone(),
            });
        }
        for end in [&atom.from, &atom.to] {
            if !self.inputs.contains(end.as_str()) && !self.outputs.contains(end.as_str()) {
                return Err(ServiceError::UndeclaredParameter {
                    owner: self.owner.into(),
                    atom: atom.clone(),
                    name: end.clone(),
                });
            }
        }
        Ok(())
    }

    fn input_only(&self, atom: &RelationAtom) -> bool {
        self.inputs.contains(atom.from.as_str()) && self.inputs.contains(atom.to.as_str())
    }
}

/// Checks a service against the ontology.
///
/// Plain services must produce something (an output or an effect), keep
/// input-input atoms in their preconditions and use only typed parameters.
/// Rule-derived services are exempt from those three restrictions.
pub fn validate_service(ontology: &Ontology, service: &Service) -> Result<(), ServiceError> {
    if service.name.is_empty() {
        return Err(ServiceError::EmptyName);
    }
    let is_rule = service.kind == ServiceKind::Rule;
    let scope = Scope::new(
        ontology,
        &service.name,
        &service.inputs,
        &service.outputs,
        is_rule,
    )?;
    for atom in &service.preconditions {
        scope.check_atom(ontology, atom)?;
        if !scope.input_only(atom) {
            return Err(ServiceError::PreconditionMentionsOutput {
                owner: service.name.clone(),
                atom: atom.clone(),
            });
        }
    }
    for atom in &service.effects {
        scope.check_atom(ontology, atom)?;
        if service.kind == ServiceKind::Plain && scope.input_only(atom) {
            return Err(ServiceError::EffectBetweenInputs {
                owner: service.name.clone(),
                atom: atom.clone(),
            });
        }
    }
    if service.kind == ServiceKind::Plain
        && service.outputs.is_empty()
        && service.effects.is_empty()
    {
        return Err(ServiceError::NoOutputOrEffect {
            owner: service.name.clone(),
        });
    }
    Ok(())
}

/// Same disjointness rules as a service. Provided relations may only mention
/// provided parameters; wanted relations may mention both sides.
pub fn validate_request(ontology: &Ontology, request: &Request) -> Result<(), ServiceError> {
    let scope = Scope::new(
        ontology,
        &request.name,
        &request.provided,
        &request.wanted,
        false,
    )?;
    for atom in &request.provided_relations {
        scope.check_atom(ontology, atom)?;
        if !scope.input_only(atom) {
            return Err(ServiceError::PreconditionMentionsOutput {
                owner: request.name.clone(),
                atom: atom.clone(),
            });
        }
    }
    for atom in &request.wanted_relations {
        scope.check_atom(ontology, atom)?;
    }
    Ok(())
}

pub fn rule_as_virtual_service(rule: &InferenceRule) -> Service {
    Service {
        name: rule.name.clone(),
        inputs: rule.parameters.iter().map(ParameterDecl::any).collect(),
        outputs: Vec::new(),
        preconditions: rule.preconditions.clone(),
        effects: rule.effects.clone(),
        kind: ServiceKind::Rule,
    }
}

/// The request's goal as a zero-output service whose preconditions are the
/// wanted relations.
///
/// Provided parameters referenced by a wanted relation become extra inputs,
/// appended after the wanted ones and pinned to the request's objects at
/// match time.
pub fn request_as_goal_service(request: &Request) -> Service {
    let mut inputs = request.wanted.clone();
    let mut pinned = Vec::new();
    for p in &request.provided {
        let referenced = request
            .wanted_relations
            .iter()
            .any(|a| a.from == p.name || a.to == p.name);
        if referenced {
            inputs.push(p.clone());
            pinned.push(p.name.clone());
        }
    }
    Service {
        name: request.name.clone(),
        inputs,
        outputs: Vec::new(),
        preconditions: request.wanted_relations.clone(),
        effects: Vec::new(),
        kind: ServiceKind::Goal { pinned },
    }
}

/// Input label of a compiled service.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InputLabel {
    Concept(ConceptIdx),
    Any,
}

/// Endpoint of a compiled effect atom.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Slot {
    Input(usize),
    Output(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CompiledAtom<E> {
    pub relation: RelIdx,
    pub from: E,
    pub to: E,
}

/// A service with every name resolved against one ontology.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompiledService {
    pub name: String,
    pub kind: ServiceKind,
    pub input_names: Vec<String>,
    pub input_labels: Vec<InputLabel>,
    pub output_names: Vec<String>,
    pub output_concepts: Vec<ConceptIdx>,
    /// Endpoints index into the inputs.
    pub preconditions: Vec<CompiledAtom<usize>>,
    pub effects: Vec<CompiledAtom<Slot>>,
}

impl CompiledService {
    /// Resolves names. The service is expected to be validated already; an
    /// unresolved name is still reported rather than panicking.
    pub fn compile(
        ontology: &Ontology,
        service: &Service,
    ) -> Result<CompiledService, ServiceError> {
        let owner = || service.name.clone();
        let concept = |c: &str| {
            ontology
                .concept(c)
                .ok_or_else(|| ServiceError::UnknownConcept {
                    owner: owner(),
                    concept: c.to_string(),
                })
        };
        let relation = |r: &str| {
            ontology
                .relation(r)
                .ok_or_else(|| ServiceError::UnknownRelation {
                    owner: owner(),
                    relation: r.to_string(),
                })
        };
        let input_labels = service
            .inputs
            .iter()
            .map(|p| match &p.concept {
                ParamType::Any => Ok(InputLabel::Any),
                ParamType::Concept(c) => concept(c).map(InputLabel::Concept),
            })
            .collect::<Result<Vec<_>, _>>()?;
        let output_concepts = service
            .outputs
            .iter()
            .map(|p| match &p.concept {
                ParamType::Any => Err(ServiceError::AnyNotAllowed {
                    owner: owner(),
                    name: p.name.clone(),
                }),
                ParamType::Concept(c) => concept(c),
            })
            .collect::<Result<Vec<_>, _>>()?;

        let slot = |atom: &RelationAtom, name: &str| {
            if let Some(i) = service.inputs.iter().position(|p| p.name == name) {
                Ok(Slot::Input(i))
            } else if let Some(j) = service.outputs.iter().position(|p| p.name == name) {
                Ok(Slot::Output(j))
            } else {
                Err(ServiceError::UndeclaredParameter {
                    owner: owner(),
                    atom: atom.clone(),
                    name: name.to_string(),
                })
            }
        };
        let mut preconditions = Vec::with_capacity(service.preconditions.len());
        for atom in &service.preconditions {
            let (Slot::Input(from), Slot::Input(to)) =
                (slot(atom, &atom.from)?, slot(atom, &atom.to)?)
            else {
                return Err(ServiceError::PreconditionMentionsOutput {
                    owner: owner(),
                    atom: atom.clone(),
                });
            };
            preconditions.push(CompiledAtom {
                relation: relation(&atom.relation)?,
                from,
                to,
            });
        }
        let mut effects = Vec::with_capacity(service.effects.len());
        for atom in &service.effects {
            effects.push(CompiledAtom {
                relation: relation(&atom.relation)?,
                from: slot(atom, &atom.from)?,
                to: slot(atom, &atom.to)?,
            });
        }

        Ok(CompiledService {
            name: service.name.clone(),
            kind: service.kind.clone(),
            input_names: service.inputs.iter().map(|p| p.name.clone()).collect(),
            input_labels,
            output_names: service.outputs.iter().map(|p| p.name.clone()).collect(),
            output_concepts,
            preconditions,
            effects,
        })
    }

    pub fn input_position(&self, name: &str) -> Option<usize> {
        self.input_names.iter().position(|n| n == name)
    }

    /// Positions of the inputs some effect touches, ascending.
    pub fn effect_inputs(&self) -> Vec<usize> {
        let mut positions: Vec<usize> = self
            .effects
            .iter()
            .flat_map(|a| [a.from, a.to])
            .filter_map(|slot| match slot {
                Slot::Input(i) => Some(i),
                Slot::Output(_) => None,
            })
            .collect();
        positions.sort_unstable();
        positions.dedup();
        positions
    }
}
