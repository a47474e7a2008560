//! Typed, ego-anchored subgraph matching of ASG patterns into scenes.
//!
//! [`find_embeddings`] is a VF2-style backtracking search: pattern nodes are
//! visited in BFS order from the ego, every non-ego node is drawn from the
//! neighbourhood of an already matched node (the VF2 terminal set), and
//! candidates are pruned by class, by edges to matched nodes and by a
//! per-label look-ahead on edges to nodes not matched yet.
//!
//! [`brute_force_embeddings`] enumerates every injective assignment and filters
//! it; it shares no code with the search and serves as its oracle.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};
use std::ops::ControlFlow;

use serde::Serialize;
use thiserror::Error;

use crate::object_model::ObjectModel;
use crate::scene_graph::{AbstractSceneGraph, ConcreteSceneGraph};

/// Default node bound for [`brute_force_embeddings`].
pub const ORACLE_NODE_BOUND: usize = 12;

/// Injective map from pattern node ids to scene object ids.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Default)]
#[serde(transparent)]
pub struct Embedding(BTreeMap<String, String>);

impl Embedding {
    pub fn get(&self, pattern_id: &str) -> Option<&str> {
        self.0.get(pattern_id).map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.0.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl<K: Into<String>, V: Into<String>> FromIterator<(K, V)> for Embedding {
    fn from_iter<I: IntoIterator<Item = (K, V)>>(iter: I) -> Self {
        Embedding(
            iter.into_iter()
                .map(|(k, v)| (k.into(), v.into()))
                .collect(),
        )
    }
}

/// How pattern edges constrain the matched subgraph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MatchMode {
    /// Pattern edges must be present; other scene edges between matched
    /// objects are allowed.
    #[default]
    Monomorphism,
    /// Additionally, every scene edge between two matched objects must be a
    /// pattern edge.
    Induced,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("scene has {nodes} nodes, above the brute-force bound of {bound}")]
pub struct OracleBoundExceeded {
    pub nodes: usize,
    pub bound: usize,
}

/// Why an embedding is not a valid match.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EmbeddingDefect {
    #[error("pattern node `{0}` is unmapped")]
    Unmapped(String),
    #[error("`{0}` is not a pattern node")]
    UnknownPatternNode(String),
    #[error("`{0}` is not a scene object")]
    UnknownObject(String),
    #[error("object `{0}` is the image of more than one pattern node")]
    NotInjective(String),
    #[error("ego pattern node maps to `{0}`, not the scene ego")]
    EgoNotAnchored(String),
    #[error("`{pattern}` ({pattern_class}) mapped to `{object}` ({object_class})")]
    ClassMismatch {
        pattern: String,
        pattern_class: String,
        object: String,
        object_class: String,
    },
    #[error("pattern edge ({0}, {1}, {2}) has no image")]
    MissingEdge(String, String, String),
    #[error("scene edge ({0}, {1}, {2}) between matched objects is not in the pattern")]
    ExtraEdge(String, String, String),
}

/// Up to `limit` embeddings in deterministic search order. A `limit` of zero
/// is treated as one.
pub fn find_embeddings(
    om: &ObjectModel,
    asg: &AbstractSceneGraph,
    csg: &ConcreteSceneGraph,
    limit: usize,
) -> Vec<Embedding> {
    find_embeddings_with(om, asg, csg, limit, MatchMode::Monomorphism)
}

pub fn find_embeddings_with(
    om: &ObjectModel,
    asg: &AbstractSceneGraph,
    csg: &ConcreteSceneGraph,
    limit: usize,
    mode: MatchMode,
) -> Vec<Embedding> {
    let limit = limit.max(1);
    let mut out = Vec::new();
    for_each_embedding(om, asg, csg, mode, |e| {
        out.push(e);
        if out.len() >= limit {
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    });
    out
}

/// Streams embeddings to `visit` in search order until it breaks.
pub fn for_each_embedding<F>(
    om: &ObjectModel,
    asg: &AbstractSceneGraph,
    csg: &ConcreteSceneGraph,
    mode: MatchMode,
    mut visit: F,
) where
    F: FnMut(Embedding) -> ControlFlow<()>,
{
    let Some(plan) = Plan::new(om, asg, csg, mode) else {
        return;
    };
    let mut state = SearchState {
        mapping: vec![NONE; plan.order.len()],
        used: vec![false; plan.scene.ids.len()],
    };
    let _ = plan.extend(&mut state, 0, &mut visit);
}

const NONE: u32 = u32::MAX;

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum Dir {
    Out,
    In,
}

/// Integer-indexed view of a scene. Node indices follow lexicographic id order.
struct SceneIndex<'a> {
    ids: Vec<&'a str>,
    classes: Vec<&'a str>,
    /// Per node, `(rel, neighbour)` sorted, for outgoing and incoming edges.
    out: Vec<Vec<(u32, u32)>>,
    inc: Vec<Vec<(u32, u32)>>,
    edges: HashSet<(u32, u32, u32)>,
}

impl SceneIndex<'_> {
    fn adj(&self, u: u32, dir: Dir) -> &[(u32, u32)] {
        match dir {
            Dir::Out => &self.out[u as usize],
            Dir::In => &self.inc[u as usize],
        }
    }

    /// Neighbours of `u` via `rel` in direction `dir`, ascending.
    fn neighbours(&self, u: u32, dir: Dir, rel: u32) -> impl Iterator<Item = u32> + '_ {
        let adj = self.adj(u, dir);
        let start = adj.partition_point(|&(r, _)| r < rel);
        adj[start..]
            .iter()
            .take_while(move |&&(r, _)| r == rel)
            .map(|&(_, v)| v)
    }

    fn has_edge(&self, src: u32, rel: u32, dst: u32) -> bool {
        self.edges.contains(&(src, rel, dst))
    }
}

struct Step {
    pattern: usize,
    /// Earlier step whose image's neighbourhood supplies candidates.
    anchor: Option<(usize, Dir, u32)>,
    /// Edges to earlier steps: (earlier step, direction seen from this node, rel).
    back_edges: Vec<(usize, Dir, u32)>,
    /// Relations of pattern self-loops on this node.
    self_loops: Vec<u32>,
    /// Edge counts to later steps, per (direction, rel).
    lookahead: Vec<(Dir, u32, usize)>,
}

struct Plan<'a> {
    scene: SceneIndex<'a>,
    pattern_ids: Vec<&'a str>,
    order: Vec<Step>,
    /// `compatible[p][u]`: scene node `u` may host pattern node `p`.
    compatible: Vec<Vec<bool>>,
    ego_image: u32,
    mode: MatchMode,
    /// Pattern edges as (step, rel, step), for the induced check.
    pattern_edges: HashSet<(usize, u32, usize)>,
}

struct SearchState {
    /// Indexed by step.
    mapping: Vec<u32>,
    used: Vec<bool>,
}

impl<'a> Plan<'a> {
    fn new(
        om: &ObjectModel,
        asg: &'a AbstractSceneGraph,
        csg: &'a ConcreteSceneGraph,
        mode: MatchMode,
    ) -> Option<Self> {
        let mut rels: HashMap<&'a str, u32> = HashMap::new();
        let mut intern = |name: &'a str| {
            let next = rels.len() as u32;
            *rels.entry(name).or_insert(next)
        };

        let ids: Vec<&str> = csg.nodes().keys().map(String::as_str).collect();
        let classes: Vec<&str> = csg.nodes().values().map(|o| o.class.as_str()).collect();
        let index_of: HashMap<&str, u32> = ids
            .iter()
            .enumerate()
            .map(|(i, id)| (*id, i as u32))
            .collect();
        let mut out = vec![Vec::new(); ids.len()];
        let mut inc = vec![Vec::new(); ids.len()];
        let mut edges = HashSet::new();
        for e in csg.edges() {
            let (s, d, r) = (
                index_of[e.src.as_str()],
                index_of[e.dst.as_str()],
                intern(&e.rel),
            );
            out[s as usize].push((r, d));
            inc[d as usize].push((r, s));
            edges.insert((s, r, d));
        }
        out.iter_mut().for_each(|a| a.sort_unstable());
        inc.iter_mut().for_each(|a| a.sort_unstable());
        let scene = SceneIndex {
            ids,
            classes,
            out,
            inc,
            edges,
        };
        let ego_image = index_of[csg.ego()];

        let pattern_ids: Vec<&str> = asg.nodes().keys().map(String::as_str).collect();
        let p_index: HashMap<&str, usize> = pattern_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (*id, i))
            .collect();
        let k = pattern_ids.len();
        let mut p_adj: Vec<Vec<(Dir, u32, usize)>> = vec![Vec::new(); k];
        for e in asg.edges() {
            let (s, d, r) = (
                p_index[e.src.as_str()],
                p_index[e.dst.as_str()],
                intern(&e.rel),
            );
            p_adj[s].push((Dir::Out, r, d));
            p_adj[d].push((Dir::In, r, s));
        }

        // Class compatibility, memoised per class pair.
        let mut memo: HashMap<(&str, &str), bool> = HashMap::new();
        let mut compatible: Vec<Vec<bool>> = Vec::with_capacity(k);
        for class in asg.nodes().values() {
            let row: Vec<bool> = scene
                .classes
                .iter()
                .map(|c| {
                    *memo
                        .entry((c, class.as_str()))
                        .or_insert_with(|| om.is_subclass(c, class))
                })
                .collect();
            compatible.push(row);
        }

        // Per-label degree filter: a host needs at least as many distinct
        // neighbours per (direction, rel) as the pattern node.
        for (p, row) in compatible.iter_mut().enumerate() {
            let mut need: BTreeMap<(Dir, u32), usize> = BTreeMap::new();
            for &(dir, r, _) in &p_adj[p] {
                *need.entry((dir, r)).or_default() += 1;
            }
            for (u, ok) in row.iter_mut().enumerate() {
                if *ok {
                    *ok = need
                        .iter()
                        .all(|(&(dir, r), &n)| scene.neighbours(u as u32, dir, r).count() >= n);
                }
            }
        }

        let ego_p = p_index[asg.ego()];
        if !compatible[ego_p][ego_image as usize] {
            return None;
        }
        let counts: Vec<usize> = compatible
            .iter()
            .map(|row| row.iter().filter(|&&b| b).count())
            .collect();
        if counts.contains(&0) {
            return None;
        }

        // BFS distance from the ego, then fewest candidates first.
        let mut dist = vec![usize::MAX; k];
        dist[ego_p] = 0;
        let mut queue = VecDeque::from([ego_p]);
        while let Some(p) = queue.pop_front() {
            for &(_, _, q) in &p_adj[p] {
                if dist[q] == usize::MAX {
                    dist[q] = dist[p] + 1;
                    queue.push_back(q);
                }
            }
        }
        if dist.contains(&usize::MAX) {
            // Patterns are connected by construction; be strict anyway.
            return None;
        }
        let mut seq: Vec<usize> = (0..k).collect();
        seq.sort_by_key(|&p| (dist[p], p != ego_p, counts[p], p));
        let mut step_of = vec![0usize; k];
        for (i, &p) in seq.iter().enumerate() {
            step_of[p] = i;
        }

        let mut order = Vec::with_capacity(k);
        for (i, &p) in seq.iter().enumerate() {
            let mut back_edges: Vec<(usize, Dir, u32)> = p_adj[p]
                .iter()
                .filter(|&&(_, _, q)| step_of[q] < i)
                .map(|&(dir, r, q)| (step_of[q], dir, r))
                .collect();
            back_edges.sort_unstable();
            back_edges.dedup();
            // Anchor candidates on the back-edge with the fewest neighbours
            // on average; the first back-edge is a good proxy.
            let anchor = back_edges.first().map(|&(s, dir, r)| {
                let flipped = match dir {
                    Dir::Out => Dir::In,
                    Dir::In => Dir::Out,
                };
                (s, flipped, r)
            });
            let mut ahead: BTreeMap<(Dir, u32), usize> = BTreeMap::new();
            for &(dir, r, q) in &p_adj[p] {
                if step_of[q] > i {
                    *ahead.entry((dir, r)).or_default() += 1;
                }
            }
            let mut self_loops: Vec<u32> = p_adj[p]
                .iter()
                .filter(|&&(dir, _, q)| q == p && dir == Dir::Out)
                .map(|&(_, r, _)| r)
                .collect();
            self_loops.sort_unstable();
            order.push(Step {
                pattern: p,
                anchor,
                back_edges,
                self_loops,
                lookahead: ahead.into_iter().map(|((d, r), n)| (d, r, n)).collect(),
            });
        }

        let pattern_edges = asg
            .edges()
            .iter()
            .map(|e| {
                (
                    step_of[p_index[e.src.as_str()]],
                    rels[e.rel.as_str()],
                    step_of[p_index[e.dst.as_str()]],
                )
            })
            .collect();

        Some(Plan {
            scene,
            pattern_ids,
            order,
            compatible,
            ego_image,
            mode,
            pattern_edges,
        })
    }

    fn feasible(&self, state: &SearchState, i: usize, u: u32) -> bool {
        let step = &self.order[i];
        if state.used[u as usize] || !self.compatible[step.pattern][u as usize] {
            return false;
        }
        if !step
            .self_loops
            .iter()
            .all(|&r| self.scene.has_edge(u, r, u))
        {
            return false;
        }
        for &(j, dir, r) in &step.back_edges {
            let v = state.mapping[j];
            let present = match dir {
                Dir::Out => self.scene.has_edge(u, r, v),
                Dir::In => self.scene.has_edge(v, r, u),
            };
            if !present {
                return false;
            }
        }
        if self.mode == MatchMode::Induced {
            for dir in [Dir::Out, Dir::In] {
                for &(r, v) in self.scene.adj(u, dir) {
                    if v == u {
                        if !self.pattern_edges.contains(&(i, r, i)) {
                            return false;
                        }
                        continue;
                    }
                    if let Some(j) = (0..i).find(|&j| state.mapping[j] == v) {
                        let key = match dir {
                            Dir::Out => (i, r, j),
                            Dir::In => (j, r, i),
                        };
                        if !self.pattern_edges.contains(&key) {
                            return false;
                        }
                    }
                }
            }
        }
        step.lookahead.iter().all(|&(dir, r, need)| {
            self.scene
                .neighbours(u, dir, r)
                .filter(|&v| !state.used[v as usize] && v != u)
                .count()
                >= need
        })
    }

    fn extend<F>(&self, state: &mut SearchState, i: usize, visit: &mut F) -> ControlFlow<()>
    where
        F: FnMut(Embedding) -> ControlFlow<()>,
    {
        if i == self.order.len() {
            let emb = self
                .order
                .iter()
                .zip(&state.mapping)
                .map(|(step, &u)| (self.pattern_ids[step.pattern], self.scene.ids[u as usize]))
                .collect();
            return visit(emb);
        }
        let candidates: Vec<u32> = match self.order[i].anchor {
            None => vec![self.ego_image],
            Some((j, dir, r)) => self.scene.neighbours(state.mapping[j], dir, r).collect(),
        };
        for u in candidates {
            if self.feasible(state, i, u) {
                state.mapping[i] = u;
                state.used[u as usize] = true;
                let flow = self.extend(state, i + 1, visit);
                state.used[u as usize] = false;
                state.mapping[i] = NONE;
                flow?;
            }
        }
        ControlFlow::Continue(())
    }
}

/// All embeddings by exhaustive enumeration, sorted.
pub fn brute_force_embeddings(
    om: &ObjectModel,
    asg: &AbstractSceneGraph,
    csg: &ConcreteSceneGraph,
) -> Result<Vec<Embedding>, OracleBoundExceeded> {
    brute_force_embeddings_with(om, asg, csg, ORACLE_NODE_BOUND, MatchMode::Monomorphism)
}

pub fn brute_force_embeddings_with(
    om: &ObjectModel,
    asg: &AbstractSceneGraph,
    csg: &ConcreteSceneGraph,
    bound: usize,
    mode: MatchMode,
) -> Result<Vec<Embedding>, OracleBoundExceeded> {
    if csg.node_count() > bound {
        return Err(OracleBoundExceeded {
            nodes: csg.node_count(),
            bound,
        });
    }
    let pattern: Vec<&str> = asg.nodes().keys().map(String::as_str).collect();
    let objects: Vec<&str> = csg.nodes().keys().map(String::as_str).collect();
    let mut found = BTreeSet::new();
    let mut current: Vec<&str> = Vec::with_capacity(pattern.len());
    enumerate(
        &pattern,
        &objects,
        &mut current,
        &mut |assignment: &[&str]| {
            let emb: Embedding = pattern
                .iter()
                .copied()
                .zip(assignment.iter().copied())
                .collect();
            if verify_embedding(om, asg, csg, &emb, mode).is_ok() {
                found.insert(emb);
            }
        },
    );
    Ok(found.into_iter().collect())
}

fn enumerate<'a>(
    pattern: &[&str],
    objects: &[&'a str],
    current: &mut Vec<&'a str>,
    emit: &mut dyn FnMut(&[&'a str]),
) {
    if current.len() == pattern.len() {
        emit(current);
        return;
    }
    for &o in objects {
        if !current.contains(&o) {
            current.push(o);
            enumerate(pattern, objects, current, emit);
            current.pop();
        }
    }
}

/// Re-checks every embedding invariant directly against the graphs.
pub fn verify_embedding(
    om: &ObjectModel,
    asg: &AbstractSceneGraph,
    csg: &ConcreteSceneGraph,
    emb: &Embedding,
    mode: MatchMode,
) -> Result<(), EmbeddingDefect> {
    for (p, _) in emb.iter() {
        if asg.class_of(p).is_none() {
            return Err(EmbeddingDefect::UnknownPatternNode(p.to_string()));
        }
    }
    let mut images = HashSet::new();
    for (p, class) in asg.nodes() {
        let o = emb
            .get(p)
            .ok_or_else(|| EmbeddingDefect::Unmapped(p.clone()))?;
        let obj = csg
            .node(o)
            .ok_or_else(|| EmbeddingDefect::UnknownObject(o.to_string()))?;
        if !images.insert(o) {
            return Err(EmbeddingDefect::NotInjective(o.to_string()));
        }
        if !om.is_subclass(&obj.class, class) {
            return Err(EmbeddingDefect::ClassMismatch {
                pattern: p.clone(),
                pattern_class: class.clone(),
                object: o.to_string(),
                object_class: obj.class.clone(),
            });
        }
    }
    let ego_image = emb.get(asg.ego()).unwrap_or_default();
    if ego_image != csg.ego() {
        return Err(EmbeddingDefect::EgoNotAnchored(ego_image.to_string()));
    }
    for e in asg.edges() {
        let (s, d) = (emb.get(&e.src).unwrap(), emb.get(&e.dst).unwrap());
        if !csg.has_edge(s, &e.rel, d) {
            return Err(EmbeddingDefect::MissingEdge(
                s.to_string(),
                e.rel.clone(),
                d.to_string(),
            ));
        }
    }
    if mode == MatchMode::Induced {
        let preimage: HashMap<&str, &str> = emb.iter().map(|(p, o)| (o, p)).collect();
        for e in csg.edges() {
            if let (Some(ps), Some(pd)) =
                (preimage.get(e.src.as_str()), preimage.get(e.dst.as_str()))
            {
                let listed = asg
                    .edges()
                    .iter()
                    .any(|pe| pe.src == *ps && pe.dst == *pd && pe.rel == e.rel);
                if !listed {
                    return Err(EmbeddingDefect::ExtraEdge(
                        e.src.clone(),
                        e.rel.clone(),
                        e.dst.clone(),
                    ));
                }
            }
        }
    }
    Ok(())
}
