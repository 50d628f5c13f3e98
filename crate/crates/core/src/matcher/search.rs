use std::cmp::Reverse;
use std::collections::BTreeMap;

use super::{DataGraph, MatchConfig, MatchError, MatchMode, NodeLabel, QueryGraph};
use crate::knowledge::ObjectId;
use crate::ontology::RelIdx;

const UNSET: ObjectId = ObjectId(u32::MAX);

/// Per-node requirements derived from the query's own edges.
#[derive(Default)]
struct NodeNeeds {
    /// Out/in relation labels to other nodes, with the number of distinct
    /// neighbors per label (only enforced under injective matching).
    out: BTreeMap<RelIdx, usize>,
    inc: BTreeMap<RelIdx, usize>,
    loops: Vec<RelIdx>,
}

fn node_needs(query: &QueryGraph) -> Vec<NodeNeeds> {
    let mut needs: Vec<NodeNeeds> = (0..query.nodes.len())
        .map(|_| NodeNeeds::default())
        .collect();
    let mut out_pairs = std::collections::BTreeSet::new();
    for e in &query.edges {
        if e.from == e.to {
            needs[e.from].loops.push(e.relation);
        } else {
            out_pairs.insert((e.from, e.relation, e.to));
        }
    }
    for &(from, rel, to) in &out_pairs {
        *needs[from].out.entry(rel).or_default() += 1;
        *needs[to].inc.entry(rel).or_default() += 1;
    }
    needs
}

/// Fixed processing order plus, for each position, the edges to check and
/// an optional anchor edge for generating candidates from a neighbor.
struct Plan {
    order: Vec<usize>,
    /// Query edge indices whose both endpoints are placed at positions <= k.
    checks: Vec<Vec<usize>>,
    /// `(relation, earlier node, true if edge runs earlier -> current)`.
    anchors: Vec<Option<(RelIdx, usize, bool)>>,
}

fn plan(query: &QueryGraph, data: &DataGraph<'_>, pruning: bool) -> Plan {
    let n = query.nodes.len();
    let degree: Vec<usize> = (0..n)
        .map(|u| {
            query
                .edges
                .iter()
                .filter(|e| e.from == u || e.to == u)
                .count()
        })
        .collect();

    let order: Vec<usize> = if !pruning {
        (0..n).collect()
    } else {
        let estimate: Vec<usize> = query
            .nodes
            .iter()
            .map(|q| data.candidate_estimate(&q.label))
            .collect();
        let mut placed = vec![false; n];
        let mut order = Vec::with_capacity(n);
        while order.len() < n {
            let links = |u: usize| {
                query
                    .edges
                    .iter()
                    .filter(|e| (e.from == u && placed[e.to]) || (e.to == u && placed[e.from]))
                    .count()
            };
            let next = (0..n)
                .filter(|&u| !placed[u])
                .max_by_key(|&u| {
                    let pinned = matches!(query.nodes[u].label, NodeLabel::Pinned(_));
                    (
                        links(u),
                        pinned,
                        degree[u],
                        Reverse(estimate[u]),
                        Reverse(u),
                    )
                })
                .expect("an unplaced node remains");
            placed[next] = true;
            order.push(next);
        }
        order
    };

    let mut position = vec![0; n];
    for (k, &u) in order.iter().enumerate() {
        position[u] = k;
    }
    let mut checks = vec![Vec::new(); n];
    let mut anchors = vec![None; n];
    for (i, e) in query.edges.iter().enumerate() {
        let k = position[e.from].max(position[e.to]);
        checks[k].push(i);
        if pruning && e.from != e.to && anchors[k].is_none() {
            let current = order[k];
            anchors[k] = Some(if e.to == current {
                (e.relation, e.from, true)
            } else {
                (e.relation, e.to, false)
            });
        }
    }
    Plan {
        order,
        checks,
        anchors,
    }
}

struct Search<'q, 'd> {
    query: &'q QueryGraph,
    data: &'q DataGraph<'d>,
    config: &'q MatchConfig,
    plan: Plan,
    needs: Vec<NodeNeeds>,
    assignment: Vec<ObjectId>,
    used: Vec<bool>,
    results: Vec<Vec<ObjectId>>,
    done: bool,
}

impl Search<'_, '_> {
    /// Label-presence (and, when injective, neighbor-count) filter.
    fn admissible(&self, u: usize, x: ObjectId) -> bool {
        let needs = &self.needs[u];
        let state = self.data.state;
        let satisfied = |adj: &[(RelIdx, ObjectId)], req: &BTreeMap<RelIdx, usize>| {
            req.iter().all(|(&rel, &count)| {
                if self.config.injective && count > 1 {
                    let mut seen: Vec<ObjectId> = adj
                        .iter()
                        .filter(|&&(r, o)| r == rel && o != x)
                        .map(|&(_, o)| o)
                        .collect();
                    seen.sort_unstable();
                    seen.dedup();
                    seen.len() >= count
                } else {
                    adj.iter()
                        .any(|&(r, o)| r == rel && (!self.config.injective || o != x))
                }
            })
        };
        satisfied(state.out_edges(x), &needs.out)
            && satisfied(state.in_edges(x), &needs.inc)
            && needs.loops.iter().all(|&r| state.has_edge(r, x, x))
    }

    fn consistent(&self, k: usize, u: usize, x: ObjectId) -> bool {
        if !self.data.matches_label(&self.query.nodes[u].label, x) {
            return false;
        }
        if self.config.injective && self.used[x.index()] {
            return false;
        }
        self.plan.checks[k].iter().all(|&i| {
            let e = &self.query.edges[i];
            let image = |v: usize| if v == u { x } else { self.assignment[v] };
            self.data
                .state
                .has_edge(e.relation, image(e.from), image(e.to))
        })
    }

    fn candidates(&self, k: usize, u: usize) -> Vec<ObjectId> {
        if !self.config.pruning {
            return (0..self.data.state.len() as u32).map(ObjectId).collect();
        }
        match self.plan.anchors[k] {
            Some((rel, other, forward)) => {
                let anchor = self.assignment[other];
                let adj = if forward {
                    self.data.state.out_edges(anchor)
                } else {
                    self.data.state.in_edges(anchor)
                };
                adj.iter()
                    .filter(|&&(r, _)| r == rel)
                    .map(|&(_, o)| o)
                    .collect()
            }
            None => self.data.label_candidates(&self.query.nodes[u].label),
        }
    }

    fn extend(&mut self, k: usize) -> Result<(), MatchError> {
        if self.done {
            return Ok(());
        }
        if k == self.plan.order.len() {
            self.results.push(self.assignment.clone());
            if self.config.mode == MatchMode::FirstOnly {
                self.done = true;
            } else if let Some(limit) = self.config.limit {
                if self.results.len() > limit {
                    return Err(MatchError::LimitExceeded { limit });
                }
            }
            return Ok(());
        }
        let u = self.plan.order[k];
        for x in self.candidates(k, u) {
            if !self.consistent(k, u, x) {
                continue;
            }
            if self.config.pruning && !self.admissible(u, x) {
                continue;
            }
            self.assignment[u] = x;
            if self.config.injective {
                self.used[x.index()] = true;
            }
            self.extend(k + 1)?;
            if self.config.injective {
                self.used[x.index()] = false;
            }
            self.assignment[u] = UNSET;
            if self.done {
                break;
            }
        }
        Ok(())
    }
}

/// Backtracking enumeration. Assignments are in query node order; in `All`
/// mode they are sorted lexicographically.
pub(super) fn run(
    query: &QueryGraph,
    data: &DataGraph<'_>,
    config: &MatchConfig,
) -> Result<Vec<Vec<ObjectId>>, MatchError> {
    let n = query.nodes.len();
    let mut search = Search {
        query,
        data,
        config,
        plan: plan(query, data, config.pruning),
        needs: node_needs(query),
        assignment: vec![UNSET; n],
        used: vec![false; data.state.len()],
        results: Vec::new(),
        done: false,
    };
    search.extend(0)?;
    let mut results = search.results;
    if config.mode == MatchMode::All {
        results.sort_unstable();
    }
    Ok(results)
}
