//! Typed schema for scene graphs: object classes with attributes, a single
//! inheritance hierarchy, allowed relationship types and function symbols.

use std::fmt;
use std::sync::OnceLock;

use indexmap::IndexMap;
use thiserror::Error;

use crate::lexer::{tokenize, LexError, Span, TokenKind, TokenStream};

/// Class every ego node must belong to (directly or via a subclass).
pub const EGO_CLASS: &str = "Vehicle";

const DEFAULT_SCHEMA: &str = include_str!("../assets/default.om");

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("{span}: {message}")]
    Parse { span: Span, message: String },
    #[error("{span}: schema error in `{subject}`: {message}")]
    Schema {
        span: Span,
        subject: String,
        message: String,
    },
    #[error("unknown {kind} `{name}`")]
    UnknownName { kind: &'static str, name: String },
}

impl From<LexError> for ModelError {
    fn from(e: LexError) -> Self {
        ModelError::Parse {
            span: e.span,
            message: e.message,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BaseType {
    Real,
    Int,
    Bool,
    String,
    /// Planar vector `(Real, Real)`, used for positions.
    Vec2,
}

impl BaseType {
    pub const ALL: [BaseType; 5] = [
        BaseType::Real,
        BaseType::Int,
        BaseType::Bool,
        BaseType::String,
        BaseType::Vec2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BaseType::Real => "Real",
            BaseType::Int => "Int",
            BaseType::Bool => "Bool",
            BaseType::String => "String",
            BaseType::Vec2 => "Vec2",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        BaseType::ALL.into_iter().find(|t| t.name() == name)
    }

    pub fn is_numeric(self) -> bool {
        matches!(self, BaseType::Real | BaseType::Int)
    }

    /// Types on which `<`, `<=`, `>` and `>=` are defined.
    pub fn is_ordered(self) -> bool {
        matches!(self, BaseType::Real | BaseType::Int | BaseType::String)
    }
}

impl fmt::Display for BaseType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Comparison operators, the predicate symbols available to properties.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub const ALL: [CmpOp; 6] = [
        CmpOp::Eq,
        CmpOp::Ne,
        CmpOp::Lt,
        CmpOp::Le,
        CmpOp::Gt,
        CmpOp::Ge,
    ];

    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }

    pub fn is_ordering(self) -> bool {
        !matches!(self, CmpOp::Eq | CmpOp::Ne)
    }
}

impl fmt::Display for CmpOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Attribute {
    pub name: String,
    pub ty: BaseType,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassDef {
    pub name: String,
    pub parent: Option<String>,
    /// Attributes declared on this class, excluding inherited ones.
    pub attributes: Vec<Attribute>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationshipType {
    pub name: String,
    pub source: String,
    pub target: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Node,
    Value(BaseType),
}

impl fmt::Display for ParamKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamKind::Node => f.write_str("node"),
            ParamKind::Value(t) => write!(f, "{t}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FunctionSymbol {
    pub name: String,
    pub params: Vec<ParamKind>,
    pub returns: BaseType,
}

/// Function symbols the evaluator knows how to compute. A schema may only
/// declare these, with exactly these signatures.
fn builtin_signature(name: &str) -> Option<(Vec<ParamKind>, BaseType)> {
    match name {
        "dist" => Some((vec![ParamKind::Node, ParamKind::Node], BaseType::Real)),
        _ => None,
    }
}

/// Validated object model. Immutable once built.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ObjectModel {
    classes: IndexMap<String, ClassDef>,
    relationships: Vec<RelationshipType>,
    functions: IndexMap<String, FunctionSymbol>,
}

impl ObjectModel {
    /// The bundled traffic-scene schema.
    pub fn bundled() -> &'static ObjectModel {
        static MODEL: OnceLock<ObjectModel> = OnceLock::new();
        MODEL.get_or_init(|| ObjectModel::parse(DEFAULT_SCHEMA).expect("bundled schema is valid"))
    }

    pub fn bundled_text() -> &'static str {
        DEFAULT_SCHEMA
    }

    pub fn parse(text: &str) -> Result<Self, ModelError> {
        let mut ts = TokenStream::new(tokenize(text)?);
        let mut builder = Builder::default();
        while !ts.at_eof() {
            let tok = ts.peek().clone();
            match &tok.kind {
                TokenKind::Ident(kw) if kw == "class" => builder.class(&mut ts)?,
                TokenKind::Ident(kw) if kw == "rel" => builder.rel(&mut ts)?,
                TokenKind::Ident(kw) if kw == "fn" => builder.function(&mut ts)?,
                other => {
                    return Err(ModelError::Parse {
                        span: tok.span,
                        message: format!("expected `class`, `rel` or `fn`, found {other}"),
                    })
                }
            }
        }
        builder.finish()
    }

    /// Renders the model in the schema file format accepted by [`ObjectModel::parse`].
    pub fn to_schema_text(&self) -> String {
        let mut out = String::new();
        for class in self.classes.values() {
            out.push_str("class ");
            out.push_str(&class.name);
            if let Some(parent) = &class.parent {
                out.push_str(" extends ");
                out.push_str(parent);
            }
            if class.attributes.is_empty() {
                out.push_str(";\n");
            } else {
                out.push_str(" {\n");
                for attr in &class.attributes {
                    out.push_str(&format!("    {}: {};\n", attr.name, attr.ty));
                }
                out.push_str("}\n");
            }
        }
        for rel in &self.relationships {
            out.push_str(&format!(
                "rel {}: {} -> {};\n",
                rel.name, rel.source, rel.target
            ));
        }
        for f in self.functions.values() {
            let params: Vec<String> = f.params.iter().map(ToString::to_string).collect();
            out.push_str(&format!(
                "fn {}({}) -> {};\n",
                f.name,
                params.join(", "),
                f.returns
            ));
        }
        out
    }

    pub fn classes(&self) -> impl Iterator<Item = &ClassDef> {
        self.classes.values()
    }

    pub fn class(&self, name: &str) -> Option<&ClassDef> {
        self.classes.get(name)
    }

    pub fn has_class(&self, name: &str) -> bool {
        self.classes.contains_key(name)
    }

    pub fn relationships(&self) -> &[RelationshipType] {
        &self.relationships
    }

    pub fn has_relationship(&self, name: &str) -> bool {
        self.relationships.iter().any(|r| r.name == name)
    }

    pub fn functions(&self) -> impl Iterator<Item = &FunctionSymbol> {
        self.functions.values()
    }

    pub fn function(&self, name: &str) -> Option<&FunctionSymbol> {
        self.functions.get(name)
    }

    pub fn base_types(&self) -> &'static [BaseType] {
        &BaseType::ALL
    }

    pub fn predicate_symbols(&self) -> &'static [CmpOp] {
        &CmpOp::ALL
    }

    /// `name` followed by its superclasses, nearest first.
    pub fn ancestors<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        let mut next = self.classes.get(name).map(|c| c.name.as_str());
        std::iter::from_fn(move || {
            let cur = next?;
            next = self.classes.get(cur).and_then(|c| c.parent.as_deref());
            Some(cur)
        })
    }

    /// Reflexive subclass test. Unknown names are never subclasses.
    pub fn is_subclass(&self, sub: &str, sup: &str) -> bool {
        self.ancestors(sub).any(|c| c == sup)
    }

    /// Type of `attr` on `class`, including inherited attributes.
    pub fn attribute_type(&self, class: &str, attr: &str) -> Option<BaseType> {
        self.ancestors(class)
            .filter_map(|c| self.classes.get(c))
            .flat_map(|c| c.attributes.iter())
            .find(|a| a.name == attr)
            .map(|a| a.ty)
    }

    /// All attributes of `class`, inherited ones first.
    pub fn attributes_of(&self, class: &str) -> Vec<&Attribute> {
        let chain: Vec<&str> = self.ancestors(class).collect();
        chain
            .iter()
            .rev()
            .filter_map(|c| self.classes.get(*c))
            .flat_map(|c| c.attributes.iter())
            .collect()
    }

    /// True iff some declared `(rel, S, T)` has `src_class ⊑ S` and `dst_class ⊑ T`.
    pub fn is_relationship_allowed(
        &self,
        rel: &str,
        src_class: &str,
        dst_class: &str,
    ) -> Result<bool, ModelError> {
        if !self.has_relationship(rel) {
            return Err(ModelError::UnknownName {
                kind: "relationship",
                name: rel.to_string(),
            });
        }
        for class in [src_class, dst_class] {
            if !self.has_class(class) {
                return Err(ModelError::UnknownName {
                    kind: "class",
                    name: class.to_string(),
                });
            }
        }
        Ok(self.relationships.iter().any(|r| {
            r.name == rel
                && self.is_subclass(src_class, &r.source)
                && self.is_subclass(dst_class, &r.target)
        }))
    }
}

#[derive(Default)]
struct Builder {
    classes: IndexMap<String, (ClassDef, Span)>,
    relationships: Vec<(RelationshipType, Span)>,
    functions: IndexMap<String, FunctionSymbol>,
}

fn schema_err(span: Span, subject: &str, message: impl Into<String>) -> ModelError {
    ModelError::Schema {
        span,
        subject: subject.to_string(),
        message: message.into(),
    }
}

fn parse_type(ts: &mut TokenStream) -> Result<BaseType, ModelError> {
    let (name, span) = ts.expect_ident("a type name")?;
    BaseType::from_name(&name).ok_or_else(|| ModelError::Parse {
        span,
        message: format!("unknown base type `{name}` (expected Real, Int, Bool, String or Vec2)"),
    })
}

impl Builder {
    fn class(&mut self, ts: &mut TokenStream) -> Result<(), ModelError> {
        ts.expect_keyword("class")?;
        let (name, span) = ts.expect_ident("a class name")?;
        let parent = if ts.is_keyword("extends") {
            ts.next();
            Some(ts.expect_ident("a superclass name")?.0)
        } else {
            None
        };
        let mut attributes: Vec<Attribute> = Vec::new();
        if ts.eat(&TokenKind::LBrace) {
            while !ts.eat(&TokenKind::RBrace) {
                let (attr, attr_span) = ts.expect_ident("an attribute name or `}`")?;
                ts.expect(&TokenKind::Colon)?;
                let ty = parse_type(ts)?;
                ts.expect(&TokenKind::Semi)?;
                if attributes.iter().any(|a| a.name == attr) {
                    return Err(schema_err(
                        attr_span,
                        &name,
                        format!("attribute `{attr}` declared twice"),
                    ));
                }
                attributes.push(Attribute { name: attr, ty });
            }
            ts.eat(&TokenKind::Semi);
        } else {
            ts.expect(&TokenKind::Semi)?;
        }
        if self.classes.contains_key(&name) {
            return Err(schema_err(span, &name, "class declared twice"));
        }
        self.classes.insert(
            name.clone(),
            (
                ClassDef {
                    name,
                    parent,
                    attributes,
                },
                span,
            ),
        );
        Ok(())
    }

    fn rel(&mut self, ts: &mut TokenStream) -> Result<(), ModelError> {
        ts.expect_keyword("rel")?;
        let (name, span) = ts.expect_ident("a relationship name")?;
        ts.expect(&TokenKind::Colon)?;
        let (source, _) = ts.expect_ident("a source class")?;
        ts.expect(&TokenKind::Arrow)?;
        let (target, _) = ts.expect_ident("a target class")?;
        ts.expect(&TokenKind::Semi)?;
        let rel = RelationshipType {
            name,
            source,
            target,
        };
        if self.relationships.iter().any(|(r, _)| *r == rel) {
            return Err(schema_err(
                span,
                &rel.name,
                format!(
                    "relationship {} -> {} declared twice",
                    rel.source, rel.target
                ),
            ));
        }
        self.relationships.push((rel, span));
        Ok(())
    }

    fn function(&mut self, ts: &mut TokenStream) -> Result<(), ModelError> {
        ts.expect_keyword("fn")?;
        let (name, span) = ts.expect_ident("a function name")?;
        ts.expect(&TokenKind::LParen)?;
        let mut params = Vec::new();
        if !ts.eat(&TokenKind::RParen) {
            loop {
                if ts.is_keyword("node") {
                    ts.next();
                    params.push(ParamKind::Node);
                } else {
                    params.push(ParamKind::Value(parse_type(ts)?));
                }
                if ts.eat(&TokenKind::RParen) {
                    break;
                }
                ts.expect(&TokenKind::Comma)?;
            }
        }
        ts.expect(&TokenKind::Arrow)?;
        let returns = parse_type(ts)?;
        ts.expect(&TokenKind::Semi)?;

        match builtin_signature(&name) {
            None => {
                return Err(schema_err(
                    span,
                    &name,
                    "no built-in implementation exists for this function",
                ))
            }
            Some((p, r)) if p != params || r != returns => {
                return Err(schema_err(
                    span,
                    &name,
                    "signature differs from the built-in implementation",
                ))
            }
            Some(_) => {}
        }
        if self.functions.contains_key(&name) {
            return Err(schema_err(span, &name, "function declared twice"));
        }
        self.functions.insert(
            name.clone(),
            FunctionSymbol {
                name,
                params,
                returns,
            },
        );
        Ok(())
    }

    fn finish(self) -> Result<ObjectModel, ModelError> {
        for (class, span) in self.classes.values() {
            if let Some(parent) = &class.parent {
                if !self.classes.contains_key(parent) {
                    return Err(schema_err(
                        *span,
                        &class.name,
                        format!("superclass `{parent}` is not declared"),
                    ));
                }
            }
            // Walk up; a chain longer than the class count means a cycle.
            let mut cur = class.parent.as_deref();
            let mut steps = 0;
            let mut seen_attrs: Vec<&str> =
                class.attributes.iter().map(|a| a.name.as_str()).collect();
            while let Some(p) = cur {
                steps += 1;
                if p == class.name || steps > self.classes.len() {
                    return Err(schema_err(*span, &class.name, "cyclic class hierarchy"));
                }
                let (pdef, _) = &self.classes[p];
                for a in &pdef.attributes {
                    if seen_attrs.contains(&a.name.as_str()) {
                        return Err(schema_err(
                            *span,
                            &class.name,
                            format!("attribute `{}` clashes with an inherited attribute", a.name),
                        ));
                    }
                    seen_attrs.push(&a.name);
                }
                cur = pdef.parent.as_deref();
            }
        }
        for (rel, span) in &self.relationships {
            for end in [&rel.source, &rel.target] {
                if !self.classes.contains_key(end) {
                    return Err(schema_err(
                        *span,
                        &rel.name,
                        format!("endpoint class `{end}` is not declared"),
                    ));
                }
            }
        }
        Ok(ObjectModel {
            classes: self.classes.into_iter().map(|(k, (c, _))| (k, c)).collect(),
            relationships: self.relationships.into_iter().map(|(r, _)| r).collect(),
            functions: self.functions,
        })
    }
}
