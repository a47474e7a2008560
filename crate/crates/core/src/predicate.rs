//! Evaluation of an ASG's predicate list against the attributes bound by an
//! embedding.
//!
//! Comparisons are exact unless a tolerance `epsilon > 0` is supplied, in
//! which case every comparison is relaxed by `epsilon` in the permissive
//! direction (equality becomes `|a - b| <= epsilon`, `a < b` becomes
//! `a < b + epsilon`, and so on).

use std::cmp::Ordering;
use std::collections::BTreeMap;

use thiserror::Error;

use crate::asg_dsl::{Interval, Predicate, Term};
use crate::matcher::Embedding;
use crate::object_model::CmpOp;
use crate::scene_graph::{ConcreteSceneGraph, Value};

/// Attribute that `dist` reads on both arguments.
pub const POSITION: &str = "position";

/// Objects bound to one pattern node.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundObject {
    pub object_id: String,
    /// Snapshot of the object's attributes at the scene's timestamp.
    pub attributes: BTreeMap<String, Value>,
}

/// Pattern node id to bound object, derived from an embedding.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Binding(BTreeMap<String, BoundObject>);

impl Binding {
    /// Copies the attributes of every embedded object out of `csg`.
    /// Pattern nodes whose image is not in `csg` are left unbound.
    pub fn from_embedding(embedding: &Embedding, csg: &ConcreteSceneGraph) -> Self {
        let bound = embedding
            .iter()
            .filter_map(|(p, o)| {
                let obj = csg.node(o)?;
                Some((
                    p.to_string(),
                    BoundObject {
                        object_id: o.to_string(),
                        attributes: obj.attributes.clone(),
                    },
                ))
            })
            .collect();
        Binding(bound)
    }

    pub fn insert(&mut self, pattern_id: impl Into<String>, object: BoundObject) {
        self.0.insert(pattern_id.into(), object);
    }

    pub fn get(&self, pattern_id: &str) -> Option<&BoundObject> {
        self.0.get(pattern_id)
    }

    pub fn pattern_ids(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    fn attribute(&self, node: &str, attr: &str) -> Result<&Value, EvalError> {
        let obj = self
            .0
            .get(node)
            .ok_or_else(|| EvalError::Unbound(node.to_string()))?;
        obj.attributes
            .get(attr)
            .ok_or_else(|| EvalError::MissingAttribute {
                pattern_id: node.to_string(),
                attribute: attr.to_string(),
            })
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EvalError {
    /// The scene omits an attribute the predicates read. Distinct from a
    /// predicate being false.
    #[error("missing attribute `{pattern_id}.{attribute}`")]
    MissingAttribute {
        pattern_id: String,
        attribute: String,
    },
    #[error("pattern node `{0}` is not bound")]
    Unbound(String),
    #[error("type error: {0}")]
    Type(String),
}

impl EvalError {
    /// `node.attribute` for missing attributes, the bare message otherwise.
    pub fn subject(&self) -> String {
        match self {
            EvalError::MissingAttribute {
                pattern_id,
                attribute,
            } => format!("{pattern_id}.{attribute}"),
            EvalError::Unbound(id) => id.clone(),
            EvalError::Type(m) => m.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Evaluation {
    pub satisfied: bool,
    /// Index into the predicate list of the first predicate that is false.
    pub first_failure: Option<usize>,
}

impl Evaluation {
    pub const SATISFIED: Evaluation = Evaluation {
        satisfied: true,
        first_failure: None,
    };
}

/// Evaluates `predicates` in declared order, stopping at the first false one.
///
/// An error in a predicate before the first false one is returned as an
/// error; predicates after the first false one are not evaluated.
pub fn evaluate(
    predicates: &[Predicate],
    binding: &Binding,
    epsilon: f64,
) -> Result<Evaluation, EvalError> {
    for (i, p) in predicates.iter().enumerate() {
        if !evaluate_one(p, binding, epsilon)? {
            return Ok(Evaluation {
                satisfied: false,
                first_failure: Some(i),
            });
        }
    }
    Ok(Evaluation::SATISFIED)
}

pub fn evaluate_one(p: &Predicate, binding: &Binding, epsilon: f64) -> Result<bool, EvalError> {
    match p {
        Predicate::Compare { lhs, op, rhs } => {
            let l = term(lhs, binding)?;
            let r = term(rhs, binding)?;
            compare(&l, *op, &r, epsilon)
        }
        Predicate::Within { value, interval } => within(value, interval, binding, epsilon),
        Predicate::Holds(t) => match term(t, binding)? {
            Value::Bool(b) => Ok(b),
            other => Err(EvalError::Type(format!("`{t}` is {other}, expected Bool"))),
        },
        Predicate::And(ps) => {
            for p in ps {
                if !evaluate_one(p, binding, epsilon)? {
                    return Ok(false);
                }
            }
            Ok(true)
        }
    }
}

/// Euclidean distance between two positions.
pub fn euclidean(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn position(binding: &Binding, node: &str) -> Result<[f64; 2], EvalError> {
    match binding.attribute(node, POSITION)? {
        Value::Vec2(p) => Ok(*p),
        other => Err(EvalError::Type(format!(
            "`{node}.{POSITION}` is {other}, expected Vec2"
        ))),
    }
}

fn term(t: &Term, binding: &Binding) -> Result<Value, EvalError> {
    match t {
        Term::Number(v) => Ok(Value::Real(*v)),
        Term::Bool(b) => Ok(Value::Bool(*b)),
        Term::Str(s) => Ok(Value::Str(s.clone())),
        Term::Attr { node, attr } => binding.attribute(node, attr).cloned(),
        Term::Node(n) => Err(EvalError::Type(format!("node `{n}` used as a value"))),
        Term::Call { func, args } => match (func.as_str(), args.as_slice()) {
            ("dist", [Term::Node(a), Term::Node(b)]) => Ok(Value::Real(euclidean(
                position(binding, a)?,
                position(binding, b)?,
            ))),
            _ => Err(EvalError::Type(format!("cannot evaluate `{t}`"))),
        },
    }
}

fn numeric(v: &Value) -> Result<f64, EvalError> {
    v.as_f64()
        .ok_or_else(|| EvalError::Type(format!("{v} is not a number")))
}

/// `a op b`, relaxed by `eps`.
fn compare(a: &Value, op: CmpOp, b: &Value, eps: f64) -> Result<bool, EvalError> {
    match (a, b) {
        (Value::Int(x), Value::Int(y)) if eps == 0.0 => Ok(holds(x.cmp(y), op)),
        (Value::Bool(x), Value::Bool(y)) => equality(x == y, op),
        (Value::Str(x), Value::Str(y)) => Ok(holds(x.cmp(y), op)),
        (Value::Vec2(x), Value::Vec2(y)) => {
            let eq = x.iter().zip(y).all(|(p, q)| (p - q).abs() <= eps);
            equality(eq, op)
        }
        _ => Ok(compare_f64(numeric(a)?, op, numeric(b)?, eps)),
    }
}

fn equality(eq: bool, op: CmpOp) -> Result<bool, EvalError> {
    match op {
        CmpOp::Eq => Ok(eq),
        CmpOp::Ne => Ok(!eq),
        _ => Err(EvalError::Type(format!("`{op}` needs ordered operands"))),
    }
}

fn holds(ord: Ordering, op: CmpOp) -> bool {
    match op {
        CmpOp::Eq => ord == Ordering::Equal,
        CmpOp::Ne => ord != Ordering::Equal,
        CmpOp::Lt => ord == Ordering::Less,
        CmpOp::Le => ord != Ordering::Greater,
        CmpOp::Gt => ord == Ordering::Greater,
        CmpOp::Ge => ord != Ordering::Less,
    }
}

fn compare_f64(a: f64, op: CmpOp, b: f64, eps: f64) -> bool {
    match op {
        CmpOp::Eq => (a - b).abs() <= eps,
        CmpOp::Ne => (a - b).abs() > eps,
        CmpOp::Lt => a < b + eps,
        CmpOp::Le => a <= b + eps,
        CmpOp::Gt => a > b - eps,
        CmpOp::Ge => a >= b - eps,
    }
}

fn within(value: &Term, iv: &Interval, binding: &Binding, eps: f64) -> Result<bool, EvalError> {
    let x = numeric(&term(value, binding)?)?;
    let lo = numeric(&term(&iv.lo, binding)?)?;
    let hi = numeric(&term(&iv.hi, binding)?)?;
    let lo_op = if iv.lo_closed { CmpOp::Ge } else { CmpOp::Gt };
    let hi_op = if iv.hi_closed { CmpOp::Le } else { CmpOp::Lt };
    Ok(compare_f64(x, lo_op, lo, eps) && compare_f64(x, hi_op, hi, eps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asg_dsl::parse_asg;
    use crate::object_model::ObjectModel;
    use proptest::prelude::*;

    const OBSTACLE_AHEAD: &str = r#"asg "ObstacleAhead" {
        node ego: Vehicle; node obstacle: Static; node lane: Lane;
        edge ego isIn lane; edge obstacle isIn lane; edge obstacle inFrontOf ego;
        ego ego;
        assert obstacle.velocity == 0;
        assert dist(ego, obstacle) in (0, 20];
    }"#;

    fn obstacle_predicates() -> Vec<Predicate> {
        parse_asg(OBSTACLE_AHEAD, ObjectModel::bundled())
            .unwrap()
            .predicates()
            .to_vec()
    }

    fn object(id: &str, attrs: &[(&str, Value)]) -> BoundObject {
        BoundObject {
            object_id: id.to_string(),
            attributes: attrs
                .iter()
                .map(|(k, v)| (k.to_string(), v.clone()))
                .collect(),
        }
    }

    fn obstacle_binding(obstacle_velocity: f64, gap: f64) -> Binding {
        let mut b = Binding::default();
        b.insert(
            "ego",
            object(
                "ego",
                &[
                    ("velocity", Value::Real(5.0)),
                    ("position", Value::Vec2([0.0, 0.0])),
                ],
            ),
        );
        b.insert(
            "obstacle",
            object(
                "obs",
                &[
                    ("velocity", Value::Real(obstacle_velocity)),
                    ("position", Value::Vec2([gap, 0.0])),
                ],
            ),
        );
        b.insert("lane", object("l1", &[]));
        b
    }

    fn pred(src: &str) -> Predicate {
        let text = format!(
            r#"asg "p" {{ node ego: Vehicle; node o: Static; edge o inFrontOf ego; ego ego; assert {src}; }}"#
        );
        parse_asg(&text, ObjectModel::bundled())
            .unwrap()
            .predicates()[0]
            .clone()
    }

    fn pair(gap: f64) -> Binding {
        let mut b = Binding::default();
        b.insert(
            "ego",
            object(
                "ego",
                &[
                    ("velocity", Value::Real(0.0)),
                    ("position", Value::Vec2([0.0, 0.0])),
                ],
            ),
        );
        b.insert(
            "o",
            object(
                "o",
                &[
                    ("velocity", Value::Real(0.0)),
                    ("position", Value::Vec2([0.0, gap])),
                ],
            ),
        );
        b
    }

    #[test]
    fn obstacle_predicates_hold_at_ten_metres() {
        let eval = evaluate(&obstacle_predicates(), &obstacle_binding(0.0, 10.0), 0.0).unwrap();
        assert_eq!(eval, Evaluation::SATISFIED);
    }

    #[test]
    fn obstacle_ahead_distance_fails_at_twenty_five_metres() {
        let eval = evaluate(&obstacle_predicates(), &obstacle_binding(0.0, 25.0), 0.0).unwrap();
        assert_eq!(eval.first_failure, Some(1));
        assert!(!eval.satisfied);
    }

    #[test]
    fn moving_obstacle_fails_first_predicate() {
        let eval = evaluate(&obstacle_predicates(), &obstacle_binding(1.0, 10.0), 0.0).unwrap();
        assert_eq!(eval.first_failure, Some(0));
    }

    #[test]
    fn empty_conjunction_holds() {
        assert_eq!(
            evaluate(&[], &Binding::default(), 0.0).unwrap(),
            Evaluation::SATISFIED
        );
    }

    #[test]
    fn interval_bounds_are_exact() {
        let half_open = pred("dist(ego, o) in (0, 20]");
        assert!(!evaluate_one(&half_open, &pair(0.0), 0.0).unwrap());
        assert!(evaluate_one(&half_open, &pair(20.0), 0.0).unwrap());
        assert!(!evaluate_one(&half_open, &pair(20.000000000000004), 0.0).unwrap());
        assert!(evaluate_one(&half_open, &pair(f64::MIN_POSITIVE), 0.0).unwrap());

        let closed_lo = pred("dist(ego, o) in [0, 20)");
        assert!(evaluate_one(&closed_lo, &pair(0.0), 0.0).unwrap());
        assert!(!evaluate_one(&closed_lo, &pair(20.0), 0.0).unwrap());
    }

    #[test]
    fn at_least_threshold_is_inclusive() {
        for threshold in [2.0, 5.0, 15.0, 20.0, 30.0] {
            let p = pred(&format!("dist(ego, o) >= {threshold}"));
            assert!(evaluate_one(&p, &pair(threshold), 0.0).unwrap());
            let below = f64::from_bits(threshold.to_bits() - 1);
            assert!(!evaluate_one(&p, &pair(below), 0.0).unwrap());
        }
    }

    #[test]
    fn epsilon_relaxes_comparisons() {
        let p = pred("dist(ego, o) >= 15");
        assert!(!evaluate_one(&p, &pair(14.95), 0.0).unwrap());
        assert!(evaluate_one(&p, &pair(14.95), 0.1).unwrap());
        let eq = pred("o.velocity == 0.05");
        assert!(!evaluate_one(&eq, &pair(1.0), 0.0).unwrap());
        assert!(evaluate_one(&eq, &pair(1.0), 0.05).unwrap());
        let ne = pred("o.velocity != 0.05");
        assert!(!evaluate_one(&ne, &pair(1.0), 0.05).unwrap());
    }

    #[test]
    fn missing_attribute_is_an_error() {
        let mut b = pair(3.0);
        b.insert("o", object("o", &[("velocity", Value::Real(0.0))]));
        let err = evaluate(&[pred("dist(ego, o) >= 1")], &b, 0.0).unwrap_err();
        assert_eq!(
            err,
            EvalError::MissingAttribute {
                pattern_id: "o".into(),
                attribute: "position".into()
            }
        );
        assert_eq!(err.subject(), "o.position");
    }

    #[test]
    fn evaluation_stops_at_first_failure() {
        // The second predicate would error, but the first is already false.
        let mut b = pair(3.0);
        b.insert("o", object("o", &[("velocity", Value::Real(1.0))]));
        let d = vec![pred("o.velocity == 0"), pred("dist(ego, o) >= 1")];
        assert_eq!(evaluate(&d, &b, 0.0).unwrap().first_failure, Some(0));
    }

    #[test]
    fn binding_copies_embedded_objects() {
        let om = ObjectModel::bundled();
        let mut sb = ConcreteSceneGraph::builder(1.5, "ego");
        sb.node("ego", "Vehicle")
            .attr("ego", "velocity", Value::Real(2.0))
            .node("l1", "Lane")
            .edge("ego", "isIn", "l1");
        let csg = sb.build(om).unwrap();
        let emb: Embedding = [("me", "ego"), ("lane", "l1")].into_iter().collect();
        let b = Binding::from_embedding(&emb, &csg);
        assert_eq!(b.pattern_ids().collect::<Vec<_>>(), ["lane", "me"]);
        assert_eq!(b.get("me").unwrap().object_id, "ego");
        assert_eq!(
            b.get("me").unwrap().attributes["velocity"],
            Value::Real(2.0)
        );
    }

    fn point() -> impl Strategy<Value = [f64; 2]> {
        [-1e3..1e3f64, -1e3..1e3f64]
    }

    proptest! {
        #[test]
        fn dist_is_symmetric(a in point(), b in point()) {
            let mut bind = Binding::default();
            bind.insert("x", object("x", &[("position", Value::Vec2(a))]));
            bind.insert("y", object("y", &[("position", Value::Vec2(b))]));
            let d = |p: &str, q: &str| term(
                &Term::Call { func: "dist".into(), args: vec![Term::Node(p.into()), Term::Node(q.into())] },
                &bind,
            ).unwrap();
            prop_assert_eq!(d("x", "y"), d("y", "x"));
            prop_assert_eq!(d("x", "x"), Value::Real(0.0));
        }

        #[test]
        fn conjunction_ignores_order(
            gap in 0.0..40.0f64,
            vel in prop::sample::select(vec![0.0, 0.5, 1.0]),
            perm in Just(()).prop_perturb(|_, mut rng| {
                let mut v = vec![0usize, 1, 2, 3];
                for i in (1..v.len()).rev() {
                    v.swap(i, (rng.next_u32() as usize) % (i + 1));
                }
                v
            }),
        ) {
            let d = vec![
                pred("o.velocity == 0"),
                pred("dist(ego, o) in (0, 20]"),
                pred("dist(ego, o) >= 5"),
                pred("ego.velocity <= o.velocity"),
            ];
            let mut b = pair(gap);
            b.insert("o", object("o", &[
                ("velocity", Value::Real(vel)),
                ("position", Value::Vec2([0.0, gap])),
            ]));
            let shuffled: Vec<Predicate> = perm.iter().map(|&i| d[i].clone()).collect();
            let fold = d.iter().all(|p| evaluate_one(p, &b, 0.0).unwrap());
            prop_assert_eq!(evaluate(&d, &b, 0.0).unwrap().satisfied, fold);
            prop_assert_eq!(evaluate(&shuffled, &b, 0.0).unwrap().satisfied, fold);
        }
    }
}
