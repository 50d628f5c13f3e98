//! The static semantic world: concepts, the subtype hierarchy, relation
//! definitions and inference rules.
//!
//! An [`Ontology`] is immutable once built. Construction validates every
//! cross-reference and precomputes the reflexive-transitive subtype closure,
//! so matching can answer `is_subtype` in constant time.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Dense index of a concept inside one ontology.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ConceptIdx(pub(crate) u32);

impl ConceptIdx {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Dense index of a relation definition inside one ontology.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RelIdx(pub(crate) u32);

impl RelIdx {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelationDef {
    pub name: String,
    #[serde(default)]
    pub transitive: bool,
    #[serde(default)]
    pub symmetric: bool,
}

impl RelationDef {
    pub fn new(name: impl Into<String>) -> Self {
        RelationDef {
            name: name.into(),
            transitive: false,
            symmetric: false,
        }
    }

    pub fn transitive(mut self) -> Self {
        self.transitive = true;
        self
    }

    pub fn symmetric(mut self) -> Self {
        self.symmetric = true;
        self
    }
}

/// `relation(from, to)` over parameter names of a rule, service or request.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelationAtom {
    pub relation: String,
    pub from: String,
    pub to: String,
}

impl RelationAtom {
    pub fn new(
        relation: impl Into<String>,
        from: impl Into<String>,
        to: impl Into<String>,
    ) -> Self {
        RelationAtom {
            relation: relation.into(),
            from: from.into(),
            to: to.into(),
        }
    }
}

impl fmt::Display for RelationAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({}, {})", self.relation, self.from, self.to)
    }
}

/// A cost-free implication over untyped, rule-local parameters.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InferenceRule {
    pub name: String,
    pub parameters: Vec<String>,
    #[serde(default)]
    pub preconditions: Vec<RelationAtom>,
    pub effects: Vec<RelationAtom>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OntologyError {
    #[error("subtype edges form a cycle: {}", .0.join(" -> "))]
    CycleInSubtypeGraph(Vec<String>),
    #[error("unknown concept `{0}`")]
    UnknownConcept(String),
    #[error("duplicate {kind} name `{name}`")]
    DuplicateName { kind: &'static str, name: String },
    #[error("empty {0} name")]
    EmptyName(&'static str),
    #[error("rule `{rule}` refers to unknown relation `{relation}`")]
    UnknownRelationInRule { rule: String, relation: String },
    #[error("rule `{rule}` uses undeclared parameter `{parameter}`")]
    UndeclaredRuleParameter { rule: String, parameter: String },
    #[error("rule `{0}` has no effects")]
    EmptyRuleEffects(String),
}

/// Reflexive-transitive closure of the declared subtype edges.
#[derive(Debug, Clone)]
struct SubtypeClosure {
    words: usize,
    /// Row `c` has bit `s` set iff `c subtypeOf s`.
    supers: Vec<u64>,
    /// All subtypes of each concept (itself included), ascending.
    subs: Vec<Vec<ConceptIdx>>,
}

impl SubtypeClosure {
    fn contains(&self, sub: ConceptIdx, sup: ConceptIdx) -> bool {
        let row = sub.index() * self.words;
        let word = self.supers[row + sup.index() / 64];
        word & (1u64 << (sup.index() % 64)) != 0
    }

    fn compute(
        n: usize,
        edges: &[(ConceptIdx, ConceptIdx)],
        names: &[String],
    ) -> Result<Self, OntologyError> {
        let mut out: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut indegree = vec![0usize; n];
        for &(sub, sup) in edges {
            if sub == sup {
                return Err(OntologyError::CycleInSubtypeGraph(vec![
                    names[sub.index()].clone(),
                    names[sup.index()].clone(),
                ]));
            }
            out[sub.index()].push(sup.index());
            indegree[sup.index()] += 1;
        }

        // Kahn's algorithm; subs come before their supers in `order`.
        let mut order = Vec::with_capacity(n);
        let mut ready: Vec<usize> = (0..n).filter(|&c| indegree[c] == 0).collect();
        while let Some(c) = ready.pop() {
            order.push(c);
            for &s in &out[c] {
                indegree[s] -= 1;
                if indegree[s] == 0 {
                    ready.push(s);
                }
            }
        }
        if order.len() < n {
            return Err(OntologyError::CycleInSubtypeGraph(find_cycle(
                &out, &indegree, names,
            )));
        }

        let words = n.div_ceil(64).max(1);
        let mut supers = vec![0u64; n * words];
        for &c in order.iter().rev() {
            supers[c * words + c / 64] |= 1 << (c % 64);
            for &s in &out[c] {
                for w in 0..words {
                    let bits = supers[s * words + w];
                    supers[c * words + w] |= bits;
                }
            }
        }

        let mut subs = vec![Vec::new(); n];
        for c in 0..n {
            for s in 0..n {
                if supers[c * words + s / 64] & (1 << (s % 64)) != 0 {
                    subs[s].push(ConceptIdx(c as u32));
                }
            }
        }
        Ok(SubtypeClosure {
            words,
            supers,
            subs,
        })
    }
}

/// Walks the leftover (non-zero indegree) part of the graph until a node repeats.
fn find_cycle(out: &[Vec<usize>], indegree: &[usize], names: &[String]) -> Vec<String> {
    let start = indegree.iter().position(|&d| d > 0).unwrap_or(0);
    let mut path = vec![start];
    let mut seen: HashMap<usize, usize> = HashMap::from([(start, 0)]);
    let mut cur = start;
    while let Some(&next) = out[cur].iter().find(|&&s| indegree[s] > 0) {
        if let Some(&pos) = seen.get(&next) {
            let mut cycle: Vec<String> = path[pos..].iter().map(|&c| names[c].clone()).collect();
            cycle.push(names[next].clone());
            return cycle;
        }
        seen.insert(next, path.len());
        path.push(next);
        cur = next;
    }
    path.iter().map(|&c| names[c].clone()).collect()
}

#[derive(Debug, Clone)]
pub struct Ontology {
    concepts: Vec<String>,
    concept_index: HashMap<String, ConceptIdx>,
    subtype_edges: Vec<(ConceptIdx, ConceptIdx)>,
    closure: SubtypeClosure,
    relations: Vec<RelationDef>,
    relation_index: HashMap<String, RelIdx>,
    rules: Vec<InferenceRule>,
    property_rules: Vec<InferenceRule>,
}

impl Ontology {
    /// Validates the declarations and computes the subtype closure.
    ///
    /// Declared subtype edges must be acyclic; a self-loop counts as a cycle.
    /// Rules synthesized from relation properties (see [`property_rules`])
    /// share the rule namespace with declared rules.
    pub fn build<C, S>(
        concepts: impl IntoIterator<Item = C>,
        subtype_edges: impl IntoIterator<Item = (S, S)>,
        relations: Vec<RelationDef>,
        rules: Vec<InferenceRule>,
    ) -> Result<Ontology, OntologyError>
    where
        C: Into<String>,
        S: AsRef<str>,
    {
        let concepts: Vec<String> = concepts.into_iter().map(Into::into).collect();
        let mut concept_index = HashMap::with_capacity(concepts.len());
        for (i, name) in concepts.iter().enumerate() {
            if name.is_empty() {
                return Err(OntologyError::EmptyName("concept"));
            }
            if concept_index
                .insert(name.clone(), ConceptIdx(i as u32))
                .is_some()
            {
                return Err(OntologyError::DuplicateName {
                    kind: "concept",
                    name: name.clone(),
                });
            }
        }

        let mut edges = Vec::new();
        let mut seen_edges = HashSet::new();
        for (sub, sup) in subtype_edges {
            let lookup = |name: &str| {
                concept_index
                    .get(name)
                    .copied()
                    .ok_or_else(|| OntologyError::UnknownConcept(name.to_string()))
            };
            let edge = (lookup(sub.as_ref())?, lookup(sup.as_ref())?);
            if seen_edges.insert(edge) {
                edges.push(edge);
            }
        }
        let closure = SubtypeClosure::compute(concepts.len(), &edges, &concepts)?;

        let mut relation_index = HashMap::with_capacity(relations.len());
        for (i, rel) in relations.iter().enumerate() {
            if rel.name.is_empty() {
                return Err(OntologyError::EmptyName("relation"));
            }
            if relation_index
                .insert(rel.name.clone(), RelIdx(i as u32))
                .is_some()
            {
                return Err(OntologyError::DuplicateName {
                    kind: "relation",
                    name: rel.name.clone(),
                });
            }
        }

        let property_rules: Vec<InferenceRule> =
            relations.iter().flat_map(property_rules).collect();
        let mut rule_names = HashSet::new();
        for rule in rules.iter().chain(&property_rules) {
            if rule.name.is_empty() {
                return Err(OntologyError::EmptyName("rule"));
            }
            if !rule_names.insert(rule.name.as_str()) {
                return Err(OntologyError::DuplicateName {
                    kind: "rule",
                    name: rule.name.clone(),
                });
            }
            validate_rule(rule, &relation_index)?;
        }

        Ok(Ontology {
            concepts,
            concept_index,
            subtype_edges: edges,
            closure,
            relations,
            relation_index,
            rules,
            property_rules,
        })
    }

    pub fn concepts(&self) -> &[String] {
        &self.concepts
    }

    pub fn concept_count(&self) -> usize {
        self.concepts.len()
    }

    pub fn concept(&self, name: &str) -> Option<ConceptIdx> {
        self.concept_index.get(name).copied()
    }

    pub fn concept_name(&self, idx: ConceptIdx) -> &str {
        &self.concepts[idx.index()]
    }

    pub fn relations(&self) -> &[RelationDef] {
        &self.relations
    }

    pub fn relation(&self, name: &str) -> Option<RelIdx> {
        self.relation_index.get(name).copied()
    }

    pub fn relation_name(&self, idx: RelIdx) -> &str {
        &self.relations[idx.index()].name
    }

    /// Declared subtype edges as `(sub, super)` names, in declaration order.
    pub fn subtype_edges(&self) -> impl Iterator<Item = (&str, &str)> {
        self.subtype_edges
            .iter()
            .map(|&(a, b)| (self.concept_name(a), self.concept_name(b)))
    }

    /// Rules as declared, without the ones synthesized from relation properties.
    pub fn declared_rules(&self) -> &[InferenceRule] {
        &self.rules
    }

    /// Declared rules followed by property rules, in relation declaration order.
    pub fn all_rules(&self) -> impl Iterator<Item = &InferenceRule> {
        self.rules.iter().chain(&self.property_rules)
    }

    pub fn is_subtype(&self, sub: &str, sup: &str) -> Result<bool, OntologyError> {
        let lookup = |name: &str| {
            self.concept(name)
                .ok_or_else(|| OntologyError::UnknownConcept(name.to_string()))
        };
        Ok(self.is_subtype_idx(lookup(sub)?, lookup(sup)?))
    }

    #[inline]
    pub fn is_subtype_idx(&self, sub: ConceptIdx, sup: ConceptIdx) -> bool {
        self.closure.contains(sub, sup)
    }

    /// Every concept that is a subtype of `sup`, itself included, ascending.
    pub fn subtypes_of(&self, sup: ConceptIdx) -> &[ConceptIdx] {
        &self.closure.subs[sup.index()]
    }

    /// Every supertype of `sub`, itself included, ascending.
    pub fn supertypes_of(&self, sub: ConceptIdx) -> Vec<ConceptIdx> {
        (0..self.concepts.len() as u32)
            .map(ConceptIdx)
            .filter(|&s| self.closure.contains(sub, s))
            .collect()
    }

    /// The closure as a set of `(sub, super)` name pairs.
    pub fn closure_pairs(&self) -> BTreeSet<(String, String)> {
        let mut pairs = BTreeSet::new();
        for sup in 0..self.concepts.len() {
            for sub in &self.closure.subs[sup] {
                pairs.insert((
                    self.concepts[sub.index()].clone(),
                    self.concepts[sup].clone(),
                ));
            }
        }
        pairs
    }
}

fn validate_rule(
    rule: &InferenceRule,
    relations: &HashMap<String, RelIdx>,
) -> Result<(), OntologyError> {
    let mut params = HashSet::new();
    for p in &rule.parameters {
        if !params.insert(p.as_str()) {
            return Err(OntologyError::DuplicateName {
                kind: "rule parameter",
                name: p.clone(),
            });
        }
    }
    if rule.effects.is_empty() {
        return Err(OntologyError::EmptyRuleEffects(rule.name.clone()));
    }
    for atom in rule.preconditions.iter().chain(&rule.effects) {
        if !relations.contains_key(&atom.relation) {
            return Err(OntologyError::UnknownRelationInRule {
                rule: rule.name.clone(),
                relation: atom.relation.clone(),
            });
        }
        for endpoint in [&atom.from, &atom.to] {
            if !params.contains(endpoint.as_str()) {
                return Err(OntologyError::UndeclaredRuleParameter {
                    rule: rule.name.clone(),
                    parameter: endpoint.clone(),
                });
            }
        }
    }
    Ok(())
}

/// Compiles symmetry and transitivity of a relation into ordinary rules.
pub fn property_rules(relation: &RelationDef) -> Vec<InferenceRule> {
    let r = relation.name.as_str();
    let mut rules = Vec::new();
    if relation.symmetric {
        rules.push(InferenceRule {
            name: format!("{r}_symmetric"),
            parameters: vec!["X".into(), "Y".into()],
            preconditions: vec![RelationAtom::new(r, "X", "Y")],
            effects: vec![RelationAtom::new(r, "Y", "X")],
        });
    }
    if relation.transitive {
        rules.push(InferenceRule {
            name: format!("{r}_transitive"),
            parameters: vec!["X".into(), "Y".into(), "Z".into()],
            preconditions: vec![
                RelationAtom::new(r, "X", "Y"),
                RelationAtom::new(r, "Y", "Z"),
            ],
            effects: vec![RelationAtom::new(r, "X", "Z")],
        });
    }
    rules
}
