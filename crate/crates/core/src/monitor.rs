//! Per-scene verdicts and stream-level phase tracking.
//!
//! A scene satisfies a property when *some* embedding of the pattern binds
//! values that satisfy every predicate. Embeddings are tried in matcher
//! order and the first satisfying one is reported as the witness.

use std::collections::{BTreeMap, BTreeSet};
use std::ops::ControlFlow;

use serde::Serialize;
use thiserror::Error;

use crate::matcher::{
    brute_force_embeddings_with, for_each_embedding, Embedding, MatchMode, OracleBoundExceeded,
    ORACLE_NODE_BOUND,
};
use crate::object_model::ObjectModel;
use crate::predicate::{evaluate, Binding, EvalError};
use crate::scene_graph::{AbstractSceneGraph, ConcreteSceneGraph};

/// Why a property does not hold, or could not be decided.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Cause {
    NoEmbedding,
    /// Index of the first false predicate for the first embedding.
    PredicateFailed(usize),
    /// `pattern_id.attribute` absent from the scene.
    MissingAttribute(String),
    /// Any other evaluation failure. Unreachable for type-checked properties.
    Evaluation(String),
}

impl From<&EvalError> for Cause {
    fn from(e: &EvalError) -> Self {
        match e {
            EvalError::MissingAttribute { .. } => Cause::MissingAttribute(e.subject()),
            other => Cause::Evaluation(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Satisfied(Embedding),
    Violated(Cause),
    Error(Cause),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum VerdictKind {
    Satisfied,
    Violated,
    Error,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub t: f64,
    pub property: String,
    pub outcome: Outcome,
}

impl Verdict {
    pub fn kind(&self) -> VerdictKind {
        match self.outcome {
            Outcome::Satisfied(_) => VerdictKind::Satisfied,
            Outcome::Violated(_) => VerdictKind::Violated,
            Outcome::Error(_) => VerdictKind::Error,
        }
    }

    pub fn is_satisfied(&self) -> bool {
        matches!(self.outcome, Outcome::Satisfied(_))
    }

    pub fn witness(&self) -> Option<&Embedding> {
        match &self.outcome {
            Outcome::Satisfied(w) => Some(w),
            _ => None,
        }
    }

    pub fn cause(&self) -> Option<&Cause> {
        match &self.outcome {
            Outcome::Satisfied(_) => None,
            Outcome::Violated(c) | Outcome::Error(c) => Some(c),
        }
    }

    /// One JSON line: `{t, property, result, witness?, cause?, phase_index?}`.
    pub fn to_json(&self, phase_index: Option<usize>) -> String {
        #[derive(Serialize)]
        struct CauseRecord<'a> {
            kind: &'static str,
            #[serde(skip_serializing_if = "Option::is_none")]
            index: Option<usize>,
            #[serde(skip_serializing_if = "Option::is_none")]
            name: Option<&'a str>,
        }
        #[derive(Serialize)]
        struct Record<'a> {
            t: f64,
            property: &'a str,
            result: VerdictKind,
            #[serde(skip_serializing_if = "Option::is_none")]
            witness: Option<&'a Embedding>,
            #[serde(skip_serializing_if = "Option::is_none")]
            cause: Option<CauseRecord<'a>>,
            #[serde(skip_serializing_if = "Option::is_none")]
            phase_index: Option<usize>,
        }
        let cause = self.cause().map(|c| match c {
            Cause::NoEmbedding => CauseRecord {
                kind: "NoEmbedding",
                index: None,
                name: None,
            },
            Cause::PredicateFailed(i) => CauseRecord {
                kind: "PredicateFailed",
                index: Some(*i),
                name: None,
            },
            Cause::MissingAttribute(n) => CauseRecord {
                kind: "MissingAttribute",
                index: None,
                name: Some(n),
            },
            Cause::Evaluation(m) => CauseRecord {
                kind: "Evaluation",
                index: None,
                name: Some(m),
            },
        });
        let record = Record {
            t: self.t,
            property: &self.property,
            result: self.kind(),
            witness: self.witness(),
            cause,
            phase_index,
        };
        serde_json::to_string(&record).expect("verdict records always serialize")
    }
}

/// Knobs shared by every comparison of a monitor.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Options {
    /// Comparison tolerance; zero means exact.
    pub epsilon: f64,
    pub mode: MatchMode,
}

/// Decides `csg ⊨ asg` with exact comparisons and monomorphic matching.
pub fn sg_comparison(
    om: &ObjectModel,
    asg: &AbstractSceneGraph,
    csg: &ConcreteSceneGraph,
) -> Verdict {
    sg_comparison_with(om, asg, csg, Options::default())
}

pub fn sg_comparison_with(
    om: &ObjectModel,
    asg: &AbstractSceneGraph,
    csg: &ConcreteSceneGraph,
    options: Options,
) -> Verdict {
    let mut witness = None;
    let mut first_failure = None;
    let mut first_error = None;
    for_each_embedding(om, asg, csg, options.mode, |emb| {
        let binding = Binding::from_embedding(&emb, csg);
        match evaluate(asg.predicates(), &binding, options.epsilon) {
            Ok(eval) if eval.satisfied => {
                witness = Some(emb);
                return ControlFlow::Break(());
            }
            Ok(eval) => {
                first_failure = first_failure.or(eval.first_failure);
            }
            Err(e) => {
                first_error.get_or_insert_with(|| Cause::from(&e));
            }
        }
        ControlFlow::Continue(())
    });
    let outcome = match (witness, first_error, first_failure) {
        (Some(w), _, _) => Outcome::Satisfied(w),
        (None, Some(cause), _) => Outcome::Error(cause),
        (None, None, Some(i)) => Outcome::Violated(Cause::PredicateFailed(i)),
        (None, None, None) => Outcome::Violated(Cause::NoEmbedding),
    };
    Verdict {
        t: csg.timestamp(),
        property: asg.name().to_string(),
        outcome,
    }
}

/// Everything the brute-force reference knows about one comparison: the set
/// of acceptable witnesses and causes, independent of search order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reference {
    pub kind: VerdictKind,
    pub embeddings: usize,
    pub witnesses: BTreeSet<Embedding>,
    pub failures: BTreeSet<usize>,
    pub errors: BTreeSet<Cause>,
}

impl Reference {
    /// Whether `verdict` is one the reference semantics allows.
    pub fn admits(&self, verdict: &Verdict) -> bool {
        if verdict.kind() != self.kind {
            return false;
        }
        match &verdict.outcome {
            Outcome::Satisfied(w) => self.witnesses.contains(w),
            Outcome::Violated(Cause::NoEmbedding) => self.embeddings == 0,
            Outcome::Violated(Cause::PredicateFailed(i)) => self.failures.contains(i),
            Outcome::Violated(_) => false,
            Outcome::Error(c) => self.errors.contains(c),
        }
    }
}

/// Reference decision built from [`brute_force_embeddings_with`] and
/// [`evaluate`], sharing no search code with [`sg_comparison`].
pub fn reference_comparison(
    om: &ObjectModel,
    asg: &AbstractSceneGraph,
    csg: &ConcreteSceneGraph,
    options: Options,
) -> Result<Reference, OracleBoundExceeded> {
    let all = brute_force_embeddings_with(om, asg, csg, ORACLE_NODE_BOUND, options.mode)?;
    let mut reference = Reference {
        kind: VerdictKind::Violated,
        embeddings: all.len(),
        witnesses: BTreeSet::new(),
        failures: BTreeSet::new(),
        errors: BTreeSet::new(),
    };
    for emb in all {
        let binding = Binding::from_embedding(&emb, csg);
        match evaluate(asg.predicates(), &binding, options.epsilon) {
            Ok(eval) if eval.satisfied => {
                reference.witnesses.insert(emb);
            }
            Ok(eval) => reference.failures.extend(eval.first_failure),
            Err(e) => {
                reference.errors.insert(Cause::from(&e));
            }
        }
    }
    reference.kind = if !reference.witnesses.is_empty() {
        VerdictKind::Satisfied
    } else if !reference.errors.is_empty() {
        VerdictKind::Error
    } else {
        VerdictKind::Violated
    };
    Ok(reference)
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StreamError {
    #[error("scene at t={t} arrived after t={previous}")]
    OutOfOrder { previous: f64, t: f64 },
}

/// Online monitor: each pushed scene is fully evaluated before `push`
/// returns.
#[derive(Debug, Clone)]
pub struct StreamMonitor<'a> {
    om: &'a ObjectModel,
    asgs: Vec<AbstractSceneGraph>,
    options: Options,
    last_t: Option<f64>,
}

impl<'a> StreamMonitor<'a> {
    pub fn new(om: &'a ObjectModel, asgs: Vec<AbstractSceneGraph>, options: Options) -> Self {
        StreamMonitor {
            om,
            asgs,
            options,
            last_t: None,
        }
    }

    pub fn properties(&self) -> &[AbstractSceneGraph] {
        &self.asgs
    }

    /// One verdict per property, in declaration order.
    pub fn push(&mut self, csg: &ConcreteSceneGraph) -> Result<Vec<Verdict>, StreamError> {
        let t = csg.timestamp();
        if let Some(previous) = self.last_t {
            if t < previous {
                return Err(StreamError::OutOfOrder { previous, t });
            }
        }
        self.last_t = Some(t);
        Ok(self
            .asgs
            .iter()
            .map(|asg| sg_comparison_with(self.om, asg, csg, self.options))
            .collect())
    }
}

/// Monitors a whole stream; verdicts are ordered by scene, then property.
pub fn monitor_stream<'s>(
    om: &ObjectModel,
    asgs: &[AbstractSceneGraph],
    scenes: impl IntoIterator<Item = &'s ConcreteSceneGraph>,
    options: Options,
) -> Result<Vec<Verdict>, StreamError> {
    let mut monitor = StreamMonitor::new(om, asgs.to_vec(), options);
    let mut out = Vec::new();
    for csg in scenes {
        out.extend(monitor.push(csg)?);
    }
    Ok(out)
}

/// What one scene did to a [`PhaseAutomaton`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transition {
    Advanced,
    Stayed,
    /// Neither the current nor the next phase holds.
    Flagged,
}

/// Tracks progress through an ordered list of phase properties.
///
/// The automaton advances by exactly one phase when the next phase holds,
/// stays when only the current one holds, and otherwise records a violation
/// without moving. Phases are never skipped.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseAutomaton {
    phases: Vec<String>,
    current: usize,
    dwell: Vec<usize>,
    complete: bool,
    /// Timestamps of flagged scenes.
    violations: Vec<f64>,
}

impl PhaseAutomaton {
    pub fn new(phases: Vec<String>) -> Self {
        let dwell = vec![0; phases.len()];
        PhaseAutomaton {
            phases,
            current: 0,
            dwell,
            complete: false,
            violations: Vec::new(),
        }
    }

    pub fn phases(&self) -> &[String] {
        &self.phases
    }

    pub fn current(&self) -> usize {
        self.current
    }

    pub fn current_phase(&self) -> Option<&str> {
        self.phases.get(self.current).map(String::as_str)
    }

    /// Scenes spent in each phase.
    pub fn dwell(&self) -> &[usize] {
        &self.dwell
    }

    pub fn is_complete(&self) -> bool {
        self.complete
    }

    pub fn violations(&self) -> &[f64] {
        &self.violations
    }

    /// Completed with no flagged scene.
    pub fn accepted(&self) -> bool {
        self.complete && self.violations.is_empty()
    }

    /// Consumes the verdicts of one scene, keyed by property name. A phase
    /// without a verdict counts as not satisfied.
    pub fn step(&mut self, verdicts: &BTreeMap<&str, &Verdict>) -> Transition {
        if self.phases.is_empty() {
            return Transition::Stayed;
        }
        let holds = |i: usize| {
            self.phases
                .get(i)
                .and_then(|name| verdicts.get(name.as_str()))
                .is_some_and(|v| v.is_satisfied())
        };
        let transition = if holds(self.current + 1) {
            self.current += 1;
            Transition::Advanced
        } else if holds(self.current) {
            Transition::Stayed
        } else {
            let t = verdicts.values().next().map_or(f64::NAN, |v| v.t);
            self.violations.push(t);
            Transition::Flagged
        };
        self.dwell[self.current] += 1;
        if self.current + 1 == self.phases.len() && holds(self.current) {
            self.complete = true;
        }
        transition
    }

    /// Convenience for a slice of one scene's verdicts.
    pub fn step_verdicts(&mut self, verdicts: &[Verdict]) -> Transition {
        let map = verdicts.iter().map(|v| (v.property.as_str(), v)).collect();
        self.step(&map)
    }
}
