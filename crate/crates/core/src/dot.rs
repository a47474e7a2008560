//! Graphviz DOT export.
//!
//! Objects and pattern nodes are boxes labelled `id: Class`, the ego is drawn
//! bold, and relations are labelled edges. Predicates are drawn in grey:
//! a predicate over one node becomes a note attached to it (`velocity = 0`),
//! a predicate over two nodes a dashed edge between them, anything else a
//! note linked to every node it mentions.

use std::fmt::Write;

use crate::asg_dsl::{Interval, Predicate, Term};
use crate::object_model::CmpOp;
use crate::scene_graph::{AbstractSceneGraph, ConcreteSceneGraph};

const GREY: &str = "grey50";

/// Quotes `s` as a DOT string.
pub fn quote_id(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

/// Minimal DOT writer: a digraph of statements with quoted attributes.
#[derive(Debug, Clone, Default)]
pub struct DotGraph {
    stmts: Vec<String>,
}

impl DotGraph {
    pub fn new() -> Self {
        DotGraph::default()
    }

    fn attrs(attrs: &[(&str, &str)]) -> String {
        if attrs.is_empty() {
            return String::new();
        }
        let body: Vec<String> = attrs
            .iter()
            .map(|(k, v)| format!("{k}={}", quote_id(v)))
            .collect();
        format!(" [{}]", body.join(", "))
    }

    pub fn node(&mut self, id: &str, attrs: &[(&str, &str)]) -> &mut Self {
        self.stmts
            .push(format!("{}{};", quote_id(id), Self::attrs(attrs)));
        self
    }

    pub fn edge(&mut self, src: &str, dst: &str, attrs: &[(&str, &str)]) -> &mut Self {
        self.stmts.push(format!(
            "{} -> {}{};",
            quote_id(src),
            quote_id(dst),
            Self::attrs(attrs)
        ));
        self
    }

    /// Default attributes for every node.
    pub fn node_defaults(&mut self, attrs: &[(&str, &str)]) -> &mut Self {
        self.stmts.push(format!("node{};", Self::attrs(attrs)));
        self
    }

    pub fn render(&self) -> String {
        let mut out = String::from("digraph G {\n");
        for s in &self.stmts {
            let _ = writeln!(out, "  {s}");
        }
        out.push_str("}\n");
        out
    }
}

pub fn csg_to_dot(csg: &ConcreteSceneGraph) -> String {
    let mut g = DotGraph::new();
    g.node_defaults(&[("shape", "box")]);
    for (id, obj) in csg.nodes() {
        let mut label = format!("{id}: {}", obj.class);
        for (name, value) in &obj.attributes {
            let _ = write!(label, "\n{name} = {value}");
        }
        if id == csg.ego() {
            g.node(id, &[("label", &label), ("style", "bold")]);
        } else {
            g.node(id, &[("label", &label)]);
        }
    }
    for e in csg.edges() {
        g.edge(&e.src, &e.dst, &[("label", &e.rel)]);
    }
    g.render()
}

pub fn asg_to_dot(asg: &AbstractSceneGraph) -> String {
    let mut g = DotGraph::new();
    g.node_defaults(&[("shape", "box")]);
    for (id, class) in asg.nodes() {
        let label = format!("{id}: {class}");
        if id == asg.ego() {
            g.node(id, &[("label", &label), ("style", "bold")]);
        } else {
            g.node(id, &[("label", &label)]);
        }
    }
    for e in asg.edges() {
        g.edge(&e.src, &e.dst, &[("label", &e.rel)]);
    }
    for (i, p) in asg.predicates().iter().enumerate() {
        let nodes: Vec<&str> = p.nodes().into_iter().collect();
        match nodes.as_slice() {
            [a, b] => {
                let label = annotation(p, None);
                g.edge(
                    a,
                    b,
                    &[
                        ("label", &label),
                        ("style", "dashed"),
                        ("color", GREY),
                        ("fontcolor", GREY),
                        ("dir", "none"),
                    ],
                );
            }
            _ => {
                let note = format!("{}#{i}", asg.name());
                let strip = match nodes.as_slice() {
                    [only] => Some(*only),
                    _ => None,
                };
                g.node(
                    &note,
                    &[
                        ("label", &annotation(p, strip)),
                        ("shape", "note"),
                        ("color", GREY),
                        ("fontcolor", GREY),
                    ],
                );
                for n in &nodes {
                    g.edge(
                        &note,
                        n,
                        &[("style", "dashed"), ("color", GREY), ("arrowhead", "none")],
                    );
                }
            }
        }
    }
    g.render()
}

/// Display text of a predicate in diagram style: `=` for equality, and
/// attributes of `strip` written without the node prefix.
fn annotation(p: &Predicate, strip: Option<&str>) -> String {
    let mut out = String::new();
    write_predicate(&mut out, p, strip);
    out
}

fn write_predicate(out: &mut String, p: &Predicate, strip: Option<&str>) {
    match p {
        Predicate::Compare { lhs, op, rhs } => {
            write_term(out, lhs, strip);
            let sym = match op {
                CmpOp::Eq => "=",
                other => other.symbol(),
            };
            let _ = write!(out, " {sym} ");
            write_term(out, rhs, strip);
        }
        Predicate::Within {
            value,
            interval:
                Interval {
                    lo,
                    hi,
                    lo_closed,
                    hi_closed,
                },
        } => {
            write_term(out, value, strip);
            out.push_str(" in ");
            out.push(if *lo_closed { '[' } else { '(' });
            write_term(out, lo, strip);
            out.push_str(", ");
            write_term(out, hi, strip);
            out.push(if *hi_closed { ']' } else { ')' });
        }
        Predicate::Holds(t) => write_term(out, t, strip),
        Predicate::And(ps) => {
            for (i, q) in ps.iter().enumerate() {
                if i > 0 {
                    out.push_str(" && ");
                }
                write_predicate(out, q, strip);
            }
        }
    }
}

fn write_term(out: &mut String, t: &Term, strip: Option<&str>) {
    match t {
        Term::Attr { node, attr } if strip == Some(node.as_str()) => out.push_str(attr),
        Term::Call { func, args } => {
            let _ = write!(out, "{func}(");
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_term(out, a, None);
            }
            out.push(')');
        }
        other => {
            let _ = write!(out, "{other}");
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario_lib::obstacle_ahead_asg;

    #[test]
    fn empty_graph() {
        assert_eq!(DotGraph::new().render(), "digraph G {\n}\n");
    }

    #[test]
    fn obstacle_ahead_annotations() {
        let dot = asg_to_dot(&obstacle_ahead_asg());
        assert!(
            dot.contains(r#""obstacle" -> "ego" [label="inFrontOf"];"#),
            "{dot}"
        );
        assert!(dot.contains(r#"label="velocity = 0""#), "{dot}");
        assert!(
            dot.contains(r#"label="dist(ego, obstacle) in (0, 20]""#),
            "{dot}"
        );
        assert!(dot.contains(r#""ego" [label="ego: Vehicle", style="bold"];"#));
    }

    #[test]
    fn quoting() {
        assert_eq!(quote_id("a\"b\\c\nd"), r#""a\"b\\c\nd""#);
    }
}
