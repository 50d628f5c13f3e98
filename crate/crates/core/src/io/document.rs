//! The JSON instance format: one file with `ontology`, `repository` and
//! `query` sections.
//!
//! ```json
//! {
//!   "ontology": {
//!     "concepts": ["person", "city"],
//!     "subtypes": [["capital", "city"]],
//!     "relations": [{ "name": "livesIn", "transitive": false, "symmetric": false }],
//!     "rules": [{ "name": "r", "parameters": ["x", "y"],
//!                 "preconditions": [...], "effects": [...] }]
//!   },
//!   "repository": [
//!     { "name": "s", "inputs": ["person"], "outputs": [{ "name": "home", "concept": "city" }],
//!       "preconditions": [], "effects": [{ "relation": "livesIn", "from": "person", "to": "home" }] }
//!   ],
//!   "query": { "provided": [...], "providedRelations": [...], "wanted": [...], "wantedRelations": [...] }
//! }
//! ```
//!
//! A parameter written as a bare string is named after its concept.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::composer::CompositionProblem;
use crate::ontology::{InferenceRule, Ontology, OntologyError, RelationAtom, RelationDef};
use crate::service::{
    validate_request, validate_service, ParameterDecl, Repository, Request, Service, ServiceError,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OntologySection {
    pub concepts: Vec<String>,
    /// `[sub, super]` pairs.
    #[serde(default)]
    pub subtypes: Vec<(String, String)>,
    #[serde(default)]
    pub relations: Vec<RelationDef>,
    #[serde(default)]
    pub rules: Vec<InferenceRule>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceDocument {
    pub ontology: OntologySection,
    #[serde(default)]
    pub repository: Vec<Service>,
    pub query: Request,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DocumentError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{path}: {message}")]
    Shape { path: String, message: String },
    #[error("{path}: {source}")]
    Ontology { path: String, source: OntologyError },
    #[error("{path}: {source}")]
    Service {
        path: String,
        source: Box<ServiceError>,
    },
}

impl InstanceDocument {
    pub fn from_json(text: &str) -> Result<InstanceDocument, DocumentError> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| DocumentError::Syntax {
                line: e.line(),
                column: e.column(),
                message: e.to_string(),
            })?;
        serde_path_to_error::deserialize(value).map_err(|e| DocumentError::Shape {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })
    }

    /// Pretty-printed, newline-terminated.
    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("documents serialize");
        text.push('\n');
        text
    }

    pub fn from_problem(problem: &CompositionProblem) -> InstanceDocument {
        let o = &problem.ontology;
        InstanceDocument {
            ontology: OntologySection {
                concepts: o.concepts().to_vec(),
                subtypes: o
                    .subtype_edges()
                    .map(|(a, b)| (a.to_string(), b.to_string()))
                    .collect(),
                relations: o.relations().to_vec(),
                rules: o.declared_rules().to_vec(),
            },
            repository: problem.repository.services.clone(),
            query: problem.request.clone(),
        }
    }

    /// Validates everything, reporting the first problem with the path of
    /// the offending element.
    pub fn to_problem(&self) -> Result<CompositionProblem, DocumentError> {
        let section = &self.ontology;
        let ontology = Ontology::build(
            section.concepts.iter().cloned(),
            section
                .subtypes
                .iter()
                .map(|(a, b)| (a.as_str(), b.as_str())),
            section.relations.clone(),
            section.rules.clone(),
        )
        .map_err(|source| DocumentError::Ontology {
            path: locate_ontology_error(section, &source),
            source,
        })?;

        let mut names = HashSet::new();
        for (i, service) in self.repository.iter().enumerate() {
            let path = format!("repository[{i}]");
            if !names.insert(service.name.as_str()) {
                return Err(DocumentError::Service {
                    path: format!("{path}.name"),
                    source: Box::new(ServiceError::DuplicateName {
                        owner: "repository".into(),
                        name: service.name.clone(),
                    }),
                });
            }
            validate_service(&ontology, service).map_err(|source| DocumentError::Service {
                path: path.clone()
                    + &locate_in(
                        ("inputs", &service.inputs),
                        ("outputs", &service.outputs),
                        &[
                            ("preconditions", &service.preconditions),
                            ("effects", &service.effects),
                        ],
                        &source,
                    ),
                source: Box::new(source),
            })?;
        }
        let q = &self.query;
        validate_request(&ontology, q).map_err(|source| DocumentError::Service {
            path: "query".to_string()
                + &locate_in(
                    ("provided", &q.provided),
                    ("wanted", &q.wanted),
                    &[
                        ("providedRelations", &q.provided_relations),
                        ("wantedRelations", &q.wanted_relations),
                    ],
                    &source,
                ),
            source: Box::new(source),
        })?;
        Ok(CompositionProblem {
            ontology,
            repository: Repository::new(self.repository.clone()),
            request: q.clone(),
        })
    }
}

pub fn parse_instance(text: &str) -> Result<CompositionProblem, DocumentError> {
    InstanceDocument::from_json(text)?.to_problem()
}

pub fn serialize_instance(problem: &CompositionProblem) -> String {
    InstanceDocument::from_problem(problem).to_json()
}

fn locate_ontology_error(section: &OntologySection, err: &OntologyError) -> String {
    let rule_path = |rule: &str| match section.rules.iter().position(|r| r.name == rule) {
        Some(i) => format!("ontology.rules[{i}]"),
        // Synthesized from a relation's properties.
        None => "ontology.relations".to_string(),
    };
    match err {
        OntologyError::CycleInSubtypeGraph(_) => "ontology.subtypes".into(),
        OntologyError::UnknownConcept(name) => section
            .subtypes
            .iter()
            .position(|(a, b)| a == name || b == name)
            .map_or("ontology.subtypes".into(), |i| {
                format!("ontology.subtypes[{i}]")
            }),
        OntologyError::DuplicateName { kind, name } => named_position(section, kind, name),
        OntologyError::EmptyName(kind) => named_position(section, kind, ""),
        OntologyError::UnknownRelationInRule { rule, .. }
        | OntologyError::UndeclaredRuleParameter { rule, .. }
        | OntologyError::EmptyRuleEffects(rule) => rule_path(rule),
    }
}

/// Last element of the given kind carrying `name`.
fn named_position(section: &OntologySection, kind: &str, name: &str) -> String {
    let (base, names): (&str, Vec<&str>) = match kind {
        "concept" => (
            "ontology.concepts",
            section.concepts.iter().map(String::as_str).collect(),
        ),
        "relation" => (
            "ontology.relations",
            section.relations.iter().map(|r| r.name.as_str()).collect(),
        ),
        _ => (
            "ontology.rules",
            section.rules.iter().map(|r| r.name.as_str()).collect(),
        ),
    };
    match names.iter().rposition(|&n| n == name) {
        Some(i) => format!("{base}[{i}]"),
        None => base.to_string(),
    }
}

/// Path suffix pointing at the parameter or atom a service error is about.
fn locate_in(
    (in_field, inputs): (&str, &[ParameterDecl]),
    (out_field, outputs): (&str, &[ParameterDecl]),
    atom_lists: &[(&str, &Vec<RelationAtom>)],
    err: &ServiceError,
) -> String {
    let find_atom = |atom: &RelationAtom| {
        atom_lists.iter().find_map(|(field, list)| {
            list.iter()
                .position(|a| a == atom)
                .map(|j| format!(".{field}[{j}]"))
        })
    };
    let find_param = |pred: &dyn Fn(&ParameterDecl) -> bool| {
        [(in_field, inputs), (out_field, outputs)]
            .iter()
            .find_map(|(field, list)| list.iter().position(pred).map(|j| format!(".{field}[{j}]")))
    };
    let found = match err {
        ServiceError::UnknownConcept { concept, .. } => find_param(
            &|p| matches!(&p.concept, crate::service::ParamType::Concept(c) if c == concept),
        ),
        ServiceError::UnknownRelation { relation, .. } => {
            atom_lists.iter().find_map(|(field, list)| {
                list.iter()
                    .position(|a| &a.relation == relation)
                    .map(|j| format!(".{field}[{j}]"))
            })
        }
        ServiceError::PreconditionMentionsOutput { atom, .. }
        | ServiceError::UndeclaredParameter { atom, .. }
        | ServiceError::EffectBetweenInputs { atom, .. } => find_atom(atom),
        ServiceError::InputOutputOverlap { name, .. } => outputs
            .iter()
            .position(|p| &p.name == name)
            .map(|j| format!(".{out_field}[{j}]")),
        ServiceError::DuplicateName { name, .. } | ServiceError::AnyNotAllowed { name, .. } => {
            find_param(&|p| &p.name == name)
        }
        ServiceError::EmptyName => {
            find_param(&|p| p.name.is_empty()).or_else(|| Some(".name".into()))
        }
        ServiceError::NoOutputOrEffect { .. } => None,
    };
    found.unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "ontology": { "concepts": ["a", "b"], "relations": [{ "name": "r" }] },
        "repository": [
            { "name": "s", "inputs": ["a"], "outputs": ["b"],
              "effects": [{ "relation": "r", "from": "a", "to": "b" }] }
        ],
        "query": { "provided": ["a"], "wanted": ["b"] }
    }"#;

    #[test]
    fn parses_and_round_trips() {
        let p = parse_instance(MINIMAL).unwrap();
        assert_eq!(p.repository.services.len(), 1);
        assert_eq!(p.request.name, "query");
        let text = serialize_instance(&p);
        let again = parse_instance(&text).unwrap();
        assert_eq!(serialize_instance(&again), text);
        assert_eq!(
            InstanceDocument::from_json(&text).unwrap(),
            InstanceDocument::from_problem(&p)
        );
    }

    #[test]
    fn empty_repository_trivial_query() {
        let text = r#"{ "ontology": { "concepts": ["a"] }, "query": { "provided": ["a"], "wanted": [] } }"#;
        let p = parse_instance(text).unwrap();
        assert!(p.repository.services.is_empty());
    }

    #[test]
    fn syntax_errors_have_positions() {
        match parse_instance("{\n  \"ontology\": [,\n}") {
            Err(DocumentError::Syntax { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected syntax error, got {other:?}"),
        }
    }

    #[test]
    fn shape_errors_have_paths() {
        let text = MINIMAL.replace(r#""outputs": ["b"]"#, r#""outputs": [7]"#);
        match parse_instance(&text) {
            Err(DocumentError::Shape { path, .. }) => assert_eq!(path, "repository[0].outputs[0]"),
            other => panic!("expected shape error, got {other:?}"),
        }
        let text = MINIMAL.replace(r#""wanted""#, r#""wnated""#);
        assert!(matches!(
            parse_instance(&text),
            Err(DocumentError::Shape { .. })
        ));
    }

    #[test]
    fn validation_errors_have_paths() {
        let text = MINIMAL.replace(r#""relation": "r""#, r#""relation": "q""#);
        let err = parse_instance(&text).unwrap_err();
        assert_eq!(
            err.to_string(),
            "repository[0].effects[0]: `s`: unknown relation `q`"
        );

        let text = MINIMAL.replace(r#""outputs": ["b"]"#, r#""outputs": ["c"]"#);
        let err = parse_instance(&text).unwrap_err();
        assert!(
            matches!(&err, DocumentError::Service { path, .. } if path == "repository[0].outputs[0]"),
            "{err}"
        );

        let text = MINIMAL.replace(
            r#""concepts": ["a", "b"]"#,
            r#""concepts": ["a", "b", "a"]"#,
        );
        let err = parse_instance(&text).unwrap_err();
        assert!(
            matches!(&err, DocumentError::Ontology { path, .. } if path == "ontology.concepts[2]"),
            "{err}"
        );

        let text = MINIMAL.replace(r#""wanted": ["b"]"#, r#""wanted": ["z"]"#);
        let err = parse_instance(&text).unwrap_err();
        assert!(
            matches!(&err, DocumentError::Service { path, .. } if path == "query.wanted[0]"),
            "{err}"
        );
    }
}
