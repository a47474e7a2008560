//! Seeded random scenes and patterns over the bundled object model, for
//! property tests and benchmarking.
//!
//! Patterns are sampled from the scene they will be matched against (a
//! connected walk from the ego, optionally with generalised classes and an
//! extra edge), so that matches exist often but not always. Positions lie on
//! a small integer grid so that distances frequently hit thresholds exactly.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::asg_dsl::{AsgBuilder, Interval, Predicate, Term};
use crate::matcher::find_embeddings;
use crate::object_model::{CmpOp, ObjectModel};
use crate::scene_graph::{AbstractSceneGraph, ConcreteSceneGraph, Value, IN_FRONT_OF};

const CONCRETE: [&str; 5] = ["Vehicle", "Static", "Lane", "Road", "ParkingSpot"];
const PARTICIPANT: &str = "TrafficParticipant";
const LITERALS: [f64; 6] = [0.0, 1.0, 2.0, 3.0, 5.0, 2.5];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneParams {
    pub nodes: usize,
    /// Expected number of outgoing edges per node and relation.
    pub mean_degree: f64,
    /// Chance that a participant lacks an attribute.
    pub missing_attribute: f64,
    /// Chance of a self-loop per node and allowed relation.
    pub self_loop: f64,
    /// Side of the integer position grid.
    pub grid: i32,
}

impl SceneParams {
    /// Small scenes for oracle comparisons.
    pub fn oracle(nodes: usize) -> Self {
        SceneParams {
            nodes,
            mean_degree: 0.6,
            missing_attribute: 0.05,
            self_loop: 0.05,
            grid: 5,
        }
    }

    /// Larger, sparser scenes for timing.
    pub fn bench(nodes: usize) -> Self {
        SceneParams {
            nodes,
            mean_degree: 1.0,
            missing_attribute: 0.0,
            self_loop: 0.0,
            grid: 100,
        }
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn is_participant(om: &ObjectModel, class: &str) -> bool {
    om.is_subclass(class, PARTICIPANT)
}

/// Random valid scene with `params.nodes` objects (at least one: the ego).
pub fn random_scene<R: Rng>(
    rng: &mut R,
    om: &ObjectModel,
    params: &SceneParams,
) -> ConcreteSceneGraph {
    let n = params.nodes.max(1);
    // Ids are shuffled so the ego is not always lexicographically first.
    let mut ids: Vec<String> = (0..n).map(|i| format!("o{i:03}")).collect();
    ids.shuffle(rng);
    let classes: Vec<&str> = (0..n)
        .map(|i| {
            if i == 0 {
                "Vehicle"
            } else {
                CONCRETE[rng.gen_range(0..CONCRETE.len())]
            }
        })
        .collect();

    let mut b = ConcreteSceneGraph::builder(0.0, ids[0].clone());
    for (id, class) in ids.iter().zip(&classes) {
        b.node(id.clone(), *class);
        if is_participant(om, class) {
            if !rng.gen_bool(params.missing_attribute) {
                b.attr(id, "velocity", Value::Real(rng.gen_range(0..3) as f64));
            }
            if !rng.gen_bool(params.missing_attribute) {
                let x = rng.gen_range(0..params.grid) as f64;
                let y = rng.gen_range(0..params.grid) as f64;
                b.attr(id, "position", Value::Vec2([x, y]));
            }
        }
    }
    let p = (params.mean_degree / n as f64).min(1.0);
    let rels: Vec<String> = {
        let mut r: Vec<String> = om.relationships().iter().map(|r| r.name.clone()).collect();
        r.dedup();
        r
    };
    for (i, src) in ids.iter().enumerate() {
        for (j, dst) in ids.iter().enumerate() {
            for rel in &rels {
                if !om
                    .is_relationship_allowed(rel, classes[i], classes[j])
                    .unwrap_or(false)
                {
                    continue;
                }
                let chance = if i == j {
                    if rel == IN_FRONT_OF {
                        continue;
                    }
                    params.self_loop
                } else {
                    p
                };
                if rng.gen_bool(chance) {
                    b.edge(src.clone(), rel.clone(), dst.clone());
                }
            }
        }
    }
    b.build(om)
        .expect("generated scenes respect the object model")
}

/// Random connected pattern of at most `max_nodes` nodes, sampled around the
/// ego of `csg`.
pub fn random_pattern<R: Rng>(
    rng: &mut R,
    om: &ObjectModel,
    csg: &ConcreteSceneGraph,
    max_nodes: usize,
) -> AbstractSceneGraph {
    let target = rng.gen_range(1..=max_nodes.max(1));
    sample_pattern(rng, om, csg, target)
}

/// Pattern of up to `target` nodes; fewer only when the ego's component of
/// the scene is smaller.
pub fn sample_pattern<R: Rng>(
    rng: &mut R,
    om: &ObjectModel,
    csg: &ConcreteSceneGraph,
    target: usize,
) -> AbstractSceneGraph {
    let ego = csg.ego().to_string();

    // Random connected walk over the undirected scene graph.
    let mut chosen: Vec<String> = vec![ego.clone()];
    let mut tree: Vec<(String, String, String)> = Vec::new();
    let edges: Vec<_> = csg.edges().iter().filter(|e| e.src != e.dst).collect();
    while chosen.len() < target {
        let frontier: Vec<_> = edges
            .iter()
            .filter(|e| chosen.contains(&e.src) != chosen.contains(&e.dst))
            .collect();
        let Some(e) = frontier.choose(rng) else { break };
        let new = if chosen.contains(&e.src) {
            &e.dst
        } else {
            &e.src
        };
        chosen.push(new.clone());
        tree.push((e.src.clone(), e.rel.clone(), e.dst.clone()));
    }

    let pid = |o: &str| -> String {
        if o == ego {
            "ego".to_string()
        } else {
            format!("p{}", chosen.iter().position(|c| c == o).unwrap())
        }
    };
    let mut pattern_edges: Vec<(String, String, String)> = tree.clone();
    for e in csg.edges() {
        let key = (e.src.clone(), e.rel.clone(), e.dst.clone());
        if chosen.contains(&e.src)
            && chosen.contains(&e.dst)
            && !pattern_edges.contains(&key)
            && rng.gen_bool(0.4)
        {
            pattern_edges.push(key);
        }
    }
    // Sometimes require an edge the scene may not have.
    if chosen.len() >= 2 && rng.gen_bool(0.2) {
        let a = chosen.choose(rng).unwrap().clone();
        let b = chosen.choose(rng).unwrap().clone();
        let rel = om.relationships().choose(rng).unwrap().name.clone();
        let (ca, cb) = (&csg.node(&a).unwrap().class, &csg.node(&b).unwrap().class);
        let key = (a.clone(), rel.clone(), b.clone());
        if (a != b || rel != IN_FRONT_OF)
            && om.is_relationship_allowed(&rel, ca, cb).unwrap_or(false)
            && !pattern_edges.contains(&key)
        {
            pattern_edges.push(key);
        }
    }

    // Generalise classes where every incident pattern edge still type-checks.
    let mut classes: Vec<String> = chosen
        .iter()
        .map(|o| csg.node(o).unwrap().class.clone())
        .collect();
    for i in 1..chosen.len() {
        if !rng.gen_bool(0.3) {
            continue;
        }
        let ancestors: Vec<String> = om.ancestors(&classes[i]).map(String::from).collect();
        let Some(candidate) = ancestors.choose(rng).cloned() else {
            continue;
        };
        let class_of = |o: &str, classes: &[String], cand: Option<&str>| -> String {
            let k = chosen.iter().position(|c| c == o).unwrap();
            match cand {
                Some(c) if k == i => c.to_string(),
                _ => classes[k].clone(),
            }
        };
        let ok = pattern_edges.iter().all(|(s, r, d)| {
            om.is_relationship_allowed(
                r,
                &class_of(s, &classes, Some(&candidate)),
                &class_of(d, &classes, Some(&candidate)),
            )
            .unwrap_or(false)
        });
        if ok {
            classes[i] = candidate;
        }
    }

    let mut builder = AsgBuilder::new("synthetic");
    for (o, class) in chosen.iter().zip(&classes) {
        builder = builder.node(pid(o), class.clone());
    }
    for (s, r, d) in &pattern_edges {
        builder = builder.edge(pid(s), r.clone(), pid(d));
    }
    builder = builder.ego("ego");

    let participants: Vec<String> = chosen
        .iter()
        .zip(&classes)
        .filter(|(_, c)| is_participant(om, c))
        .map(|(o, _)| pid(o))
        .collect();
    for _ in 0..rng.gen_range(0..=3) {
        if let Some(p) = random_predicate(rng, &participants) {
            builder = builder.assert(p);
        }
    }
    builder
        .build(om)
        .expect("sampled patterns are connected and well typed")
}

fn random_predicate<R: Rng>(rng: &mut R, participants: &[String]) -> Option<Predicate> {
    let a = participants.choose(rng)?.clone();
    let b = participants.choose(rng)?.clone();
    let op = *CmpOp::ALL.choose(rng).unwrap();
    let dist = Term::Call {
        func: "dist".into(),
        args: vec![Term::Node(a.clone()), Term::Node(b)],
    };
    Some(match rng.gen_range(0..4) {
        0 => Predicate::Compare {
            lhs: Term::Attr {
                node: a,
                attr: "velocity".into(),
            },
            op,
            rhs: Term::Number(*LITERALS.choose(rng).unwrap()),
        },
        1 => Predicate::Compare {
            lhs: dist,
            op,
            rhs: Term::Number(*LITERALS.choose(rng).unwrap()),
        },
        2 => {
            let mut bounds = [
                *LITERALS.choose(rng).unwrap(),
                *LITERALS.choose(rng).unwrap(),
            ];
            bounds.sort_by(f64::total_cmp);
            Predicate::Within {
                value: dist,
                interval: Interval {
                    lo: Term::Number(bounds[0]),
                    hi: Term::Number(bounds[1]),
                    lo_closed: rng.gen(),
                    hi_closed: rng.gen(),
                },
            }
        }
        _ => Predicate::Compare {
            lhs: Term::Attr {
                node: a,
                attr: "velocity".into(),
            },
            op,
            rhs: Term::Attr {
                node: participants.choose(rng)?.clone(),
                attr: "velocity".into(),
            },
        },
    })
}

/// One oracle-sized instance from `seed`: a scene of at most `max_scene`
/// nodes and a pattern of at most `max_pattern` nodes.
pub fn random_instance(
    seed: u64,
    om: &ObjectModel,
    max_scene: usize,
    max_pattern: usize,
) -> (ConcreteSceneGraph, AbstractSceneGraph) {
    let mut r = rng(seed);
    let n = r.gen_range(1..=max_scene.max(1));
    let csg = random_scene(&mut r, om, &SceneParams::oracle(n));
    let asg = random_pattern(&mut r, om, &csg, max_pattern);
    (csg, asg)
}

/// A `nodes`-object scene and a `pattern`-node property that embeds in it,
/// for timing.
pub fn bench_instance(
    seed: u64,
    om: &ObjectModel,
    nodes: usize,
    pattern: usize,
) -> (ConcreteSceneGraph, AbstractSceneGraph) {
    let mut r = rng(seed);
    loop {
        let csg = random_scene(&mut r, om, &SceneParams::bench(nodes));
        let asg = sample_pattern(&mut r, om, &csg, pattern);
        if asg.nodes().len() == pattern && !find_embeddings(om, &asg, &csg, 1).is_empty() {
            return (csg, asg);
        }
    }
}
