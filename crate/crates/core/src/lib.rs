//! Runtime monitoring of traffic scene graphs.
//!
//! A scene is a [`ConcreteSceneGraph`]; a property is an
//! [`AbstractSceneGraph`] (a typed pattern plus predicates). A scene satisfies
//! a property when some ego-anchored embedding of the pattern binds attribute
//! values that make every predicate true.

mod lexer;

pub mod asg_dsl;
pub mod dot;
pub mod matcher;
pub mod monitor;
pub mod object_model;
pub mod predicate;
pub mod scenario_lib;
pub mod scene_graph;
pub mod synthetic;

pub use asg_dsl::{
    parse_asg, serialize_asg, AsgBuilder, DslError, DslErrorKind, Interval, Predicate, Term,
};
pub use lexer::Span;
pub use matcher::{
    brute_force_embeddings, find_embeddings, find_embeddings_with, verify_embedding, Embedding,
    MatchMode,
};
pub use monitor::{
    monitor_stream, sg_comparison, sg_comparison_with, Cause, Options, Outcome, PhaseAutomaton,
    StreamMonitor, Verdict, VerdictKind,
};
pub use object_model::{BaseType, CmpOp, ModelError, ObjectModel};
pub use predicate::{evaluate, Binding, EvalError, Evaluation};
pub use scene_graph::{AbstractSceneGraph, ConcreteSceneGraph, SceneError, Value};
