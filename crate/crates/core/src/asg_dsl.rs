//! Textual language for abstract scene graphs.
//!
//! ```text
//! asg "ObstacleAhead" {
//!     node ego: Vehicle;
//!     node obstacle: Static;
//!     node lane: Lane;
//!     edge ego isIn lane;
//!     edge obstacle isIn lane;
//!     edge obstacle inFrontOf ego;
//!     ego ego;
//!     assert obstacle.velocity == 0;
//!     assert dist(ego, obstacle) in (0, 20];
//! }
//! ```
//!
//! The grammar is in `docs/asg.ebnf`. Predicates are conjunctive: each
//! `assert` adds one element to the predicate list, and `&&` joins clauses
//! inside a single assert.

use std::collections::{BTreeSet, HashSet, VecDeque};
use std::fmt;

use indexmap::IndexMap;
use thiserror::Error;

use crate::lexer::{quote, tokenize, LexError, Span, TokenKind, TokenStream};
use crate::object_model::{BaseType, CmpOp, ObjectModel, ParamKind, EGO_CLASS};
use crate::scene_graph::{AbstractSceneGraph, PatternEdge, IN_FRONT_OF};

const RESERVED: [&str; 8] = [
    "asg", "node", "edge", "ego", "assert", "in", "true", "false",
];
const MAX_NESTING: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub enum Term {
    Number(f64),
    Bool(bool),
    Str(String),
    /// `node.attribute`
    Attr {
        node: String,
        attr: String,
    },
    /// Bare pattern node, only meaningful as a `node` argument of a function.
    Node(String),
    Call {
        func: String,
        args: Vec<Term>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Interval {
    pub lo: Term,
    pub hi: Term,
    pub lo_closed: bool,
    pub hi_closed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Predicate {
    Compare {
        lhs: Term,
        op: CmpOp,
        rhs: Term,
    },
    /// `value in (lo, hi]` and the other three bracket combinations.
    Within {
        value: Term,
        interval: Interval,
    },
    /// A Bool-typed term used as a clause.
    Holds(Term),
    And(Vec<Predicate>),
}

impl Term {
    fn collect_nodes<'a>(&'a self, out: &mut BTreeSet<&'a str>) {
        match self {
            Term::Attr { node, .. } | Term::Node(node) => {
                out.insert(node);
            }
            Term::Call { args, .. } => args.iter().for_each(|a| a.collect_nodes(out)),
            Term::Number(_) | Term::Bool(_) | Term::Str(_) => {}
        }
    }
}

impl Predicate {
    /// Pattern node ids the predicate mentions.
    pub fn nodes(&self) -> BTreeSet<&str> {
        let mut out = BTreeSet::new();
        self.collect_nodes(&mut out);
        out
    }

    fn collect_nodes<'a>(&'a self, out: &mut BTreeSet<&'a str>) {
        match self {
            Predicate::Compare { lhs, rhs, .. } => {
                lhs.collect_nodes(out);
                rhs.collect_nodes(out);
            }
            Predicate::Within { value, interval } => {
                value.collect_nodes(out);
                interval.lo.collect_nodes(out);
                interval.hi.collect_nodes(out);
            }
            Predicate::Holds(t) => t.collect_nodes(out),
            Predicate::And(ps) => ps.iter().for_each(|p| p.collect_nodes(out)),
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Number(v) => write!(f, "{v}"),
            Term::Bool(v) => write!(f, "{v}"),
            Term::Str(s) => f.write_str(&quote(s)),
            Term::Attr { node, attr } => write!(f, "{node}.{attr}"),
            Term::Node(n) => f.write_str(n),
            Term::Call { func, args } => {
                write!(f, "{func}(")?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
        }
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}{}, {}{}",
            if self.lo_closed { '[' } else { '(' },
            self.lo,
            self.hi,
            if self.hi_closed { ']' } else { ')' }
        )
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Predicate::Compare { lhs, op, rhs } => write!(f, "{lhs} {op} {rhs}"),
            Predicate::Within { value, interval } => write!(f, "{value} in {interval}"),
            Predicate::Holds(t) => write!(f, "{t}"),
            Predicate::And(ps) => {
                for (i, p) in ps.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" && ")?;
                    }
                    write!(f, "{p}")?;
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DslErrorKind {
    Syntax,
    Type,
    Unknown,
    MissingEgo,
    Structure,
}

impl fmt::Display for DslErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DslErrorKind::Syntax => "syntax error",
            DslErrorKind::Type => "type error",
            DslErrorKind::Unknown => "unknown name",
            DslErrorKind::MissingEgo => "missing ego",
            DslErrorKind::Structure => "invalid pattern",
        })
    }
}

/// Error from parsing or checking an ASG. Errors raised while parsing text
/// always carry a span; [`AsgBuilder`] errors have none.
#[derive(Debug, Clone, PartialEq, Error)]
pub struct DslError {
    pub kind: DslErrorKind,
    pub span: Option<Span>,
    pub message: String,
}

impl fmt::Display for DslError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.span {
            Some(span) => write!(f, "{span}: {}: {}", self.kind, self.message),
            None => write!(f, "{}: {}", self.kind, self.message),
        }
    }
}

impl From<LexError> for DslError {
    fn from(e: LexError) -> Self {
        DslError {
            kind: DslErrorKind::Syntax,
            span: Some(e.span),
            message: e.message,
        }
    }
}

fn err(kind: DslErrorKind, span: Option<Span>, message: impl Into<String>) -> DslError {
    DslError {
        kind,
        span,
        message: message.into(),
    }
}

/// Parses exactly one `asg "NAME" { ... }` block and checks it against `om`.
pub fn parse_asg(text: &str, om: &ObjectModel) -> Result<AbstractSceneGraph, DslError> {
    let mut ts = TokenStream::new(tokenize(text)?);
    let raw = parse_block(&mut ts)?;
    if !ts.at_eof() {
        let tok = ts.peek();
        return Err(err(
            DslErrorKind::Syntax,
            Some(tok.span),
            format!(
                "expected end of input after the asg block, found {}",
                tok.kind
            ),
        ));
    }
    check(raw, om)
}

/// Canonical text form; [`parse_asg`] reads it back to an equal value.
pub fn serialize_asg(asg: &AbstractSceneGraph) -> String {
    let mut out = format!("asg {} {{\n", quote(asg.name()));
    for (id, class) in asg.nodes() {
        out.push_str(&format!("    node {id}: {class};\n"));
    }
    for e in asg.edges() {
        out.push_str(&format!("    edge {} {} {};\n", e.src, e.rel, e.dst));
    }
    out.push_str(&format!("    ego {};\n", asg.ego()));
    for p in asg.predicates() {
        out.push_str(&format!("    assert {p};\n"));
    }
    out.push_str("}\n");
    out
}

/// Programmatic construction, validated by the same checks as the parser.
#[derive(Debug, Clone, Default)]
pub struct AsgBuilder {
    raw: RawAsg,
}

impl AsgBuilder {
    pub fn new(name: impl Into<String>) -> Self {
        AsgBuilder {
            raw: RawAsg {
                name: name.into(),
                ..RawAsg::default()
            },
        }
    }

    pub fn node(mut self, id: impl Into<String>, class: impl Into<String>) -> Self {
        self.raw.nodes.push((id.into(), class.into(), None));
        self
    }

    pub fn edge(
        mut self,
        src: impl Into<String>,
        rel: impl Into<String>,
        dst: impl Into<String>,
    ) -> Self {
        self.raw.edges.push((
            PatternEdge {
                src: src.into(),
                rel: rel.into(),
                dst: dst.into(),
            },
            None,
        ));
        self
    }

    pub fn ego(mut self, id: impl Into<String>) -> Self {
        self.raw.egos.push((id.into(), None));
        self
    }

    pub fn assert(mut self, predicate: Predicate) -> Self {
        self.raw.asserts.push((predicate, None));
        self
    }

    pub fn build(self, om: &ObjectModel) -> Result<AbstractSceneGraph, DslError> {
        check(self.raw, om)
    }
}

#[derive(Debug, Clone, Default)]
struct RawAsg {
    name: String,
    header: Option<Span>,
    close: Option<Span>,
    nodes: Vec<(String, String, Option<Span>)>,
    edges: Vec<(PatternEdge, Option<Span>)>,
    egos: Vec<(String, Option<Span>)>,
    asserts: Vec<(Predicate, Option<Span>)>,
}

fn parse_block(ts: &mut TokenStream) -> Result<RawAsg, DslError> {
    let header = ts.expect_keyword("asg")?;
    let name_tok = ts.next();
    let TokenKind::Str(name) = name_tok.kind else {
        return Err(err(
            DslErrorKind::Syntax,
            Some(name_tok.span),
            format!("expected a quoted property name, found {}", name_tok.kind),
        ));
    };
    ts.expect(&TokenKind::LBrace)?;
    let mut raw = RawAsg {
        name,
        header: Some(header),
        ..RawAsg::default()
    };
    loop {
        let tok = ts.peek().clone();
        let span = Some(tok.span);
        match &tok.kind {
            TokenKind::RBrace => {
                ts.next();
                raw.close = span;
                break;
            }
            TokenKind::Ident(kw) if kw == "node" => {
                ts.next();
                let id = node_id(ts)?;
                ts.expect(&TokenKind::Colon)?;
                let (class, _) = ts.expect_ident("a class name")?;
                ts.expect(&TokenKind::Semi)?;
                raw.nodes.push((id, class, span));
            }
            TokenKind::Ident(kw) if kw == "edge" => {
                ts.next();
                let src = node_id(ts)?;
                let (rel, _) = ts.expect_ident("a relationship name")?;
                let dst = node_id(ts)?;
                ts.expect(&TokenKind::Semi)?;
                raw.edges.push((PatternEdge { src, rel, dst }, span));
            }
            TokenKind::Ident(kw) if kw == "ego" => {
                ts.next();
                let id = node_id(ts)?;
                ts.expect(&TokenKind::Semi)?;
                raw.egos.push((id, span));
            }
            TokenKind::Ident(kw) if kw == "assert" => {
                ts.next();
                let p = parse_predicate(ts)?;
                ts.expect(&TokenKind::Semi)?;
                raw.asserts.push((p, span));
            }
            other => {
                return Err(err(
                    DslErrorKind::Syntax,
                    span,
                    format!("expected `node`, `edge`, `ego`, `assert` or `}}`, found {other}"),
                ))
            }
        }
    }
    Ok(raw)
}

fn node_id(ts: &mut TokenStream) -> Result<String, DslError> {
    let (id, span) = ts.expect_ident("a node id")?;
    if RESERVED.contains(&id.as_str()) && id != "ego" {
        return Err(err(
            DslErrorKind::Syntax,
            Some(span),
            format!("`{id}` is a reserved word and cannot name a node"),
        ));
    }
    Ok(id)
}

fn parse_predicate(ts: &mut TokenStream) -> Result<Predicate, DslError> {
    let mut clauses = vec![parse_clause(ts)?];
    while ts.eat(&TokenKind::AndAnd) {
        clauses.push(parse_clause(ts)?);
    }
    Ok(if clauses.len() == 1 {
        clauses.pop().unwrap()
    } else {
        Predicate::And(clauses)
    })
}

fn cmp_op(kind: &TokenKind) -> Option<CmpOp> {
    Some(match kind {
        TokenKind::EqEq => CmpOp::Eq,
        TokenKind::NotEq => CmpOp::Ne,
        TokenKind::Lt => CmpOp::Lt,
        TokenKind::Le => CmpOp::Le,
        TokenKind::Gt => CmpOp::Gt,
        TokenKind::Ge => CmpOp::Ge,
        _ => return None,
    })
}

fn parse_clause(ts: &mut TokenStream) -> Result<Predicate, DslError> {
    let lhs = parse_term(ts, 0)?;
    if let Some(op) = cmp_op(&ts.peek().kind) {
        ts.next();
        let rhs = parse_term(ts, 0)?;
        return Ok(Predicate::Compare { lhs, op, rhs });
    }
    if ts.is_keyword("in") {
        ts.next();
        let open = ts.next();
        let lo_closed = match open.kind {
            TokenKind::LParen => false,
            TokenKind::LBracket => true,
            other => {
                return Err(err(
                    DslErrorKind::Syntax,
                    Some(open.span),
                    format!("expected `(` or `[` to open an interval, found {other}"),
                ))
            }
        };
        let lo = parse_term(ts, 0)?;
        ts.expect(&TokenKind::Comma)?;
        let hi = parse_term(ts, 0)?;
        let close = ts.next();
        let hi_closed = match close.kind {
            TokenKind::RParen => false,
            TokenKind::RBracket => true,
            other => {
                return Err(err(
                    DslErrorKind::Syntax,
                    Some(close.span),
                    format!("expected `)` or `]` to close an interval, found {other}"),
                ))
            }
        };
        return Ok(Predicate::Within {
            value: lhs,
            interval: Interval {
                lo,
                hi,
                lo_closed,
                hi_closed,
            },
        });
    }
    Ok(Predicate::Holds(lhs))
}

fn parse_term(ts: &mut TokenStream, depth: usize) -> Result<Term, DslError> {
    let tok = ts.next();
    if depth > MAX_NESTING {
        return Err(err(
            DslErrorKind::Syntax,
            Some(tok.span),
            "expression nested too deeply",
        ));
    }
    match tok.kind {
        TokenKind::Number(v) => Ok(Term::Number(v)),
        TokenKind::Minus => {
            let num = ts.next();
            match num.kind {
                TokenKind::Number(v) => Ok(Term::Number(-v)),
                other => Err(err(
                    DslErrorKind::Syntax,
                    Some(num.span),
                    format!("expected a number after `-`, found {other}"),
                )),
            }
        }
        TokenKind::Str(s) => Ok(Term::Str(s)),
        TokenKind::Ident(name) => {
            if ts.eat(&TokenKind::Dot) {
                let (attr, _) = ts.expect_ident("an attribute name")?;
                return Ok(Term::Attr { node: name, attr });
            }
            if ts.eat(&TokenKind::LParen) {
                let mut args = Vec::new();
                if !ts.eat(&TokenKind::RParen) {
                    loop {
                        args.push(parse_term(ts, depth + 1)?);
                        if ts.eat(&TokenKind::RParen) {
                            break;
                        }
                        ts.expect(&TokenKind::Comma)?;
                    }
                }
                return Ok(Term::Call { func: name, args });
            }
            match name.as_str() {
                "true" => Ok(Term::Bool(true)),
                "false" => Ok(Term::Bool(false)),
                _ => Ok(Term::Node(name)),
            }
        }
        other => Err(err(
            DslErrorKind::Syntax,
            Some(tok.span),
            format!("expected a value, attribute reference or function call, found {other}"),
        )),
    }
}

/// Static type of a term during checking.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Ty {
    Value(BaseType),
    /// Numeric literal, compatible with Real and (when integral) Int.
    Literal {
        integral: bool,
    },
    Node,
}

impl fmt::Display for Ty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ty::Value(t) => write!(f, "{t}"),
            Ty::Literal { .. } => f.write_str("number"),
            Ty::Node => f.write_str("node"),
        }
    }
}

impl Ty {
    fn is_numeric(self) -> bool {
        match self {
            Ty::Value(t) => t.is_numeric(),
            Ty::Literal { .. } => true,
            Ty::Node => false,
        }
    }

    fn is_ordered(self) -> bool {
        match self {
            Ty::Value(t) => t.is_ordered(),
            Ty::Literal { .. } => true,
            Ty::Node => false,
        }
    }

    fn compatible(self, other: Ty) -> bool {
        match (self, other) {
            (Ty::Node, _) | (_, Ty::Node) => false,
            (Ty::Value(a), Ty::Value(b)) => a == b,
            (Ty::Literal { .. }, Ty::Literal { .. }) => true,
            (Ty::Literal { integral }, Ty::Value(t)) | (Ty::Value(t), Ty::Literal { integral }) => {
                t == BaseType::Real || (t == BaseType::Int && integral)
            }
        }
    }
}

struct Checker<'a> {
    om: &'a ObjectModel,
    nodes: &'a IndexMap<String, String>,
    span: Option<Span>,
    index: usize,
}

impl Checker<'_> {
    fn fail(&self, kind: DslErrorKind, message: impl Into<String>) -> DslError {
        err(
            kind,
            self.span,
            format!("assert #{}: {}", self.index, message.into()),
        )
    }

    fn term(&self, t: &Term) -> Result<Ty, DslError> {
        match t {
            Term::Number(v) => Ok(Ty::Literal {
                integral: v.fract() == 0.0,
            }),
            Term::Bool(_) => Ok(Ty::Value(BaseType::Bool)),
            Term::Str(_) => Ok(Ty::Value(BaseType::String)),
            Term::Node(n) => {
                if self.nodes.contains_key(n) {
                    Ok(Ty::Node)
                } else {
                    Err(self.fail(DslErrorKind::Unknown, format!("undeclared node `{n}`")))
                }
            }
            Term::Attr { node, attr } => {
                let class = self.nodes.get(node).ok_or_else(|| {
                    self.fail(DslErrorKind::Unknown, format!("undeclared node `{node}`"))
                })?;
                self.om
                    .attribute_type(class, attr)
                    .map(Ty::Value)
                    .ok_or_else(|| {
                        self.fail(
                            DslErrorKind::Type,
                            format!("class `{class}` of `{node}` has no attribute `{attr}`"),
                        )
                    })
            }
            Term::Call { func, args } => {
                let sym = self.om.function(func).ok_or_else(|| {
                    self.fail(
                        DslErrorKind::Unknown,
                        format!("undeclared function `{func}`"),
                    )
                })?;
                if sym.params.len() != args.len() {
                    return Err(self.fail(
                        DslErrorKind::Type,
                        format!(
                            "`{func}` takes {} argument(s), {} given",
                            sym.params.len(),
                            args.len()
                        ),
                    ));
                }
                for (i, (param, arg)) in sym.params.iter().zip(args).enumerate() {
                    let ty = self.term(arg)?;
                    let ok = match param {
                        ParamKind::Node => ty == Ty::Node,
                        ParamKind::Value(t) => ty.compatible(Ty::Value(*t)),
                    };
                    if !ok {
                        return Err(self.fail(
                            DslErrorKind::Type,
                            format!("argument {} of `{func}` must be {param}, found {ty}", i + 1),
                        ));
                    }
                }
                Ok(Ty::Value(sym.returns))
            }
        }
    }

    fn value_term(&self, t: &Term) -> Result<Ty, DslError> {
        let ty = self.term(t)?;
        if ty == Ty::Node {
            return Err(self.fail(
                DslErrorKind::Type,
                format!("node `{t}` used as a value; reference one of its attributes instead"),
            ));
        }
        Ok(ty)
    }

    fn predicate(&self, p: &Predicate) -> Result<(), DslError> {
        match p {
            Predicate::Compare { lhs, op, rhs } => {
                let (l, r) = (self.value_term(lhs)?, self.value_term(rhs)?);
                if !l.compatible(r) {
                    return Err(self.fail(
                        DslErrorKind::Type,
                        format!("cannot compare {l} with {r} in `{p}`"),
                    ));
                }
                if op.is_ordering() && !(l.is_ordered() && r.is_ordered()) {
                    return Err(
                        self.fail(DslErrorKind::Type, format!("`{op}` is not defined on {l}"))
                    );
                }
                Ok(())
            }
            Predicate::Within { value, interval } => {
                for t in [value, &interval.lo, &interval.hi] {
                    let ty = self.value_term(t)?;
                    if !ty.is_numeric() {
                        return Err(self.fail(
                            DslErrorKind::Type,
                            format!("interval membership needs numbers, `{t}` is {ty}"),
                        ));
                    }
                }
                let v = self.value_term(value)?;
                for bound in [&interval.lo, &interval.hi] {
                    let b = self.value_term(bound)?;
                    if let (Ty::Value(vt), Ty::Value(bt)) = (v, b) {
                        if vt != bt {
                            return Err(self.fail(
                                DslErrorKind::Type,
                                format!("bound `{bound}` ({b}) does not match `{value}` ({v})"),
                            ));
                        }
                    }
                }
                Ok(())
            }
            Predicate::Holds(t) => match self.value_term(t)? {
                Ty::Value(BaseType::Bool) => Ok(()),
                other => Err(self.fail(
                    DslErrorKind::Type,
                    format!("clause `{t}` is {other}, expected Bool"),
                )),
            },
            Predicate::And(ps) => ps.iter().try_for_each(|p| self.predicate(p)),
        }
    }
}

fn check(raw: RawAsg, om: &ObjectModel) -> Result<AbstractSceneGraph, DslError> {
    let mut nodes: IndexMap<String, String> = IndexMap::new();
    for (id, class, span) in &raw.nodes {
        if !om.has_class(class) {
            return Err(err(
                DslErrorKind::Unknown,
                *span,
                format!("unknown class `{class}` for node `{id}`"),
            ));
        }
        if nodes.insert(id.clone(), class.clone()).is_some() {
            return Err(err(
                DslErrorKind::Structure,
                *span,
                format!("node `{id}` declared twice"),
            ));
        }
    }

    let ego = match raw.egos.as_slice() {
        [] => {
            return Err(err(
                DslErrorKind::MissingEgo,
                raw.close.or(raw.header),
                format!("property \"{}\" has no `ego` declaration", raw.name),
            ))
        }
        [(id, span)] => {
            let class = nodes.get(id).ok_or_else(|| {
                err(
                    DslErrorKind::Unknown,
                    *span,
                    format!("ego `{id}` is not a declared node"),
                )
            })?;
            if !om.is_subclass(class, EGO_CLASS) {
                return Err(err(
                    DslErrorKind::Type,
                    *span,
                    format!("ego `{id}` has class `{class}`, which is not a {EGO_CLASS}"),
                ));
            }
            id.clone()
        }
        [_, (_, span), ..] => {
            return Err(err(
                DslErrorKind::Structure,
                *span,
                "more than one `ego` declaration",
            ))
        }
    };

    let mut edges = Vec::new();
    let mut seen = HashSet::new();
    for (e, span) in raw.edges {
        let class_of = |id: &str| {
            nodes.get(id).ok_or_else(|| {
                err(
                    DslErrorKind::Unknown,
                    span,
                    format!("edge endpoint `{id}` is not a declared node"),
                )
            })
        };
        let (sc, dc) = (class_of(&e.src)?, class_of(&e.dst)?);
        if !om.has_relationship(&e.rel) {
            return Err(err(
                DslErrorKind::Unknown,
                span,
                format!("unknown relationship `{}`", e.rel),
            ));
        }
        if !om.is_relationship_allowed(&e.rel, sc, dc).unwrap_or(false) {
            return Err(err(
                DslErrorKind::Type,
                span,
                format!("`{}` is not allowed from {sc} to {dc}", e.rel),
            ));
        }
        if e.rel == IN_FRONT_OF && e.src == e.dst {
            return Err(err(
                DslErrorKind::Structure,
                span,
                format!("`{}` cannot be in front of itself", e.src),
            ));
        }
        if !seen.insert(e.clone()) {
            return Err(err(
                DslErrorKind::Structure,
                span,
                format!("edge {} {} {} declared twice", e.src, e.rel, e.dst),
            ));
        }
        edges.push(e);
    }

    if let Some(lonely) = disconnected_node(&nodes, &edges, &ego) {
        return Err(err(
            DslErrorKind::Structure,
            raw.header,
            format!("pattern is disconnected: `{lonely}` is not reachable from the ego"),
        ));
    }

    let mut predicates = Vec::with_capacity(raw.asserts.len());
    for (index, (p, span)) in raw.asserts.into_iter().enumerate() {
        Checker {
            om,
            nodes: &nodes,
            span,
            index,
        }
        .predicate(&p)?;
        predicates.push(p);
    }

    Ok(AbstractSceneGraph {
        name: raw.name,
        nodes,
        edges,
        ego,
        predicates,
    })
}

/// First node (in declaration order) not reachable from `ego` when edge
/// directions are ignored.
fn disconnected_node<'a>(
    nodes: &'a IndexMap<String, String>,
    edges: &[PatternEdge],
    ego: &str,
) -> Option<&'a str> {
    let mut reached: HashSet<&str> = HashSet::from([ego]);
    let mut queue = VecDeque::from([ego]);
    while let Some(cur) = queue.pop_front() {
        for e in edges {
            let next = if e.src == cur {
                e.dst.as_str()
            } else if e.dst == cur {
                e.src.as_str()
            } else {
                continue;
            };
            if reached.insert(next) {
                queue.push_back(next);
            }
        }
    }
    nodes
        .keys()
        .map(String::as_str)
        .find(|n| !reached.contains(n))
}

#[cfg(test)]
mod tests {
    use super::*;

    const OBSTACLE_AHEAD: &str = r#"
        // ego-vehicle starts braking once it is at most 20 m behind a static obstacle
        asg "ObstacleAhead" {
            node ego: Vehicle;
            node obstacle: Static;
            node lane: Lane;
            edge ego isIn lane;
            edge obstacle isIn lane;
            edge obstacle inFrontOf ego;
            ego ego;
            assert obstacle.velocity == 0;
            assert dist(ego, obstacle) in (0, 20];
        }
    "#;

    fn om() -> &'static ObjectModel {
        ObjectModel::bundled()
    }

    fn parse(text: &str) -> Result<AbstractSceneGraph, DslError> {
        parse_asg(text, om())
    }

    #[test]
    fn obstacle_ahead_structure() {
        let asg = parse(OBSTACLE_AHEAD).unwrap();
        assert_eq!(asg.name(), "ObstacleAhead");
        assert_eq!(asg.ego(), "ego");
        assert_eq!(asg.class_of("obstacle"), Some("Static"));
        assert_eq!(asg.edges().len(), 3);
        assert_eq!(
            asg.predicates()[0],
            Predicate::Compare {
                lhs: Term::Attr {
                    node: "obstacle".into(),
                    attr: "velocity".into()
                },
                op: CmpOp::Eq,
                rhs: Term::Number(0.0),
            }
        );
        assert_eq!(
            asg.predicates()[1],
            Predicate::Within {
                value: Term::Call {
                    func: "dist".into(),
                    args: vec![Term::Node("ego".into()), Term::Node("obstacle".into())],
                },
                interval: Interval {
                    lo: Term::Number(0.0),
                    hi: Term::Number(20.0),
                    lo_closed: false,
                    hi_closed: true,
                },
            }
        );
    }

    #[test]
    fn builder_matches_parser() {
        let built = AsgBuilder::new("ObstacleAhead")
            .node("ego", "Vehicle")
            .node("obstacle", "Static")
            .node("lane", "Lane")
            .edge("ego", "isIn", "lane")
            .edge("obstacle", "isIn", "lane")
            .edge("obstacle", "inFrontOf", "ego")
            .ego("ego")
            .assert(parse_predicate_text("obstacle.velocity == 0"))
            .assert(parse_predicate_text("dist(ego, obstacle) in (0, 20]"))
            .build(om())
            .unwrap();
        assert_eq!(built, parse(OBSTACLE_AHEAD).unwrap());
    }

    fn parse_predicate_text(s: &str) -> Predicate {
        let mut ts = TokenStream::new(tokenize(s).unwrap());
        parse_predicate(&mut ts).unwrap()
    }

    #[test]
    fn minimal_property() {
        let asg = parse(r#"asg "min" { node ego: Vehicle; ego ego; }"#).unwrap();
        assert_eq!(asg.nodes().len(), 1);
        assert!(asg.predicates().is_empty());
        let text = serialize_asg(&asg);
        assert!(!text.contains("assert"));
        assert_eq!(parse(&text).unwrap(), asg);
    }

    #[test]
    fn unknown_attribute_is_type_error() {
        let e = parse(
            r#"asg "x" { node ego: Vehicle; node lane: Lane; edge ego isIn lane; ego ego;
               assert lane.velocity == 0; }"#,
        )
        .unwrap_err();
        assert_eq!(e.kind, DslErrorKind::Type);
        assert!(e.message.contains("assert #0"), "{e}");
        assert_eq!(e.span.unwrap().line, 2);
    }

    #[test]
    fn round_trip_obstacle_ahead() {
        let asg = parse(OBSTACLE_AHEAD).unwrap();
        let text = serialize_asg(&asg);
        assert!(
            text.contains("assert dist(ego, obstacle) in (0, 20];"),
            "{text}"
        );
        assert_eq!(parse(&text).unwrap(), asg);
    }

    #[test]
    fn conjunction_and_literals_round_trip() {
        let asg = parse(
            r#"asg "c" { node ego: Vehicle; ego ego;
               assert ego.velocity > -2.5 && ego.velocity <= 1e2 && ego.velocity in [0.125, 13.9);
               assert ego.velocity != 3; }"#,
        )
        .unwrap();
        assert!(matches!(&asg.predicates()[0], Predicate::And(cs) if cs.len() == 3));
        assert_eq!(parse(&serialize_asg(&asg)).unwrap(), asg);
    }

    #[test]
    fn missing_ego() {
        let e = parse(r#"asg "x" { node ego: Vehicle; }"#).unwrap_err();
        assert_eq!(e.kind, DslErrorKind::MissingEgo);
        assert_eq!(e.span, Some(Span::new(1, 30)));
    }

    #[test]
    fn rejected_inputs() {
        let cases: &[(&str, DslErrorKind)] = &[
            (
                r#"asg "x" { node ego: Static; ego ego; }"#,
                DslErrorKind::Type,
            ),
            (
                r#"asg "x" { node ego: Boat; ego ego; }"#,
                DslErrorKind::Unknown,
            ),
            (
                r#"asg "x" { node ego: Vehicle; ego car; }"#,
                DslErrorKind::Unknown,
            ),
            (
                r#"asg "x" { node ego: Vehicle; ego ego; ego ego; }"#,
                DslErrorKind::Structure,
            ),
            (
                r#"asg "x" { node ego: Vehicle; node ego: Vehicle; ego ego; }"#,
                DslErrorKind::Structure,
            ),
            (
                r#"asg "x" { node ego: Vehicle; node l: Lane; ego ego; }"#,
                DslErrorKind::Structure,
            ),
            (
                r#"asg "x" { node ego: Vehicle; node l: Lane; edge l isIn ego; ego ego; }"#,
                DslErrorKind::Type,
            ),
            (
                r#"asg "x" { node ego: Vehicle; node l: Lane; edge ego near l; ego ego; }"#,
                DslErrorKind::Unknown,
            ),
            (
                r#"asg "x" { node ego: Vehicle; edge ego inFrontOf ego; ego ego; }"#,
                DslErrorKind::Structure,
            ),
            (
                r#"asg "x" { node ego: Vehicle; node l: Lane; edge ego isIn l; edge ego isIn l; ego ego; }"#,
                DslErrorKind::Structure,
            ),
            (
                r#"asg "x" { node ego: Vehicle; ego ego; assert ego == 0; }"#,
                DslErrorKind::Type,
            ),
            (
                r#"asg "x" { node ego: Vehicle; ego ego; assert ego.velocity; }"#,
                DslErrorKind::Type,
            ),
            (
                r#"asg "x" { node ego: Vehicle; ego ego; assert ego.velocity == true; }"#,
                DslErrorKind::Type,
            ),
            (
                r#"asg "x" { node ego: Vehicle; ego ego; assert ego.position < 3; }"#,
                DslErrorKind::Type,
            ),
            (
                r#"asg "x" { node ego: Vehicle; ego ego; assert dist(ego) > 3; }"#,
                DslErrorKind::Type,
            ),
            (
                r#"asg "x" { node ego: Vehicle; ego ego; assert dist(ego, 3) > 3; }"#,
                DslErrorKind::Type,
            ),
            (
                r#"asg "x" { node ego: Vehicle; ego ego; assert dist(ego, other) > 3; }"#,
                DslErrorKind::Unknown,
            ),
            (
                r#"asg "x" { node ego: Vehicle; ego ego; assert speed(ego) > 3; }"#,
                DslErrorKind::Unknown,
            ),
            (
                r#"asg "x" { node ego: Vehicle; ego ego; assert ego.position in (0, 1); }"#,
                DslErrorKind::Type,
            ),
            (
                r#"asg "x" { node ego: Vehicle; node true: Lane; ego ego; }"#,
                DslErrorKind::Syntax,
            ),
            (r#"asg x { }"#, DslErrorKind::Syntax),
            (
                r#"asg "x" { node ego: Vehicle; ego ego; } trailing"#,
                DslErrorKind::Syntax,
            ),
            (
                r#"asg "x" { node ego: Vehicle; ego ego; assert ego.velocity in {0, 1}; }"#,
                DslErrorKind::Syntax,
            ),
            (
                r#"asg "x" { node ego: Vehicle; ego ego; assert ego.velocity = 0; }"#,
                DslErrorKind::Syntax,
            ),
        ];
        for (text, kind) in cases {
            let e = parse(text).unwrap_err();
            assert_eq!(e.kind, *kind, "{text}: {e}");
            assert!(e.span.is_some(), "{text}");
        }
    }

    #[test]
    fn deep_nesting_is_an_error_not_a_crash() {
        let mut s = String::from(r#"asg "x" { node ego: Vehicle; ego ego; assert "#);
        for _ in 0..10_000 {
            s.push_str("f(");
        }
        let e = parse(&s).unwrap_err();
        assert_eq!(e.kind, DslErrorKind::Syntax);
    }

    #[test]
    fn predicate_nodes() {
        let asg = parse(OBSTACLE_AHEAD).unwrap();
        assert_eq!(asg.predicates()[0].nodes(), BTreeSet::from(["obstacle"]));
        assert_eq!(
            asg.predicates()[1].nodes(),
            BTreeSet::from(["ego", "obstacle"])
        );
    }
}
