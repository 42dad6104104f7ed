//! Pointcut expression language: AST, parser, canonical printer and
//! condition flattening.

mod inline;
mod parse;
mod print;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use inline::{flatten_conditions, inline, CondTree, Condition, Leaf, NoScope, PointcutScope};
pub use parse::{parse_pointcut, parse_type_pattern};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PointcutError {
    #[error("syntax error at position {position}: expected {}", expected.join(" or "))]
    Syntax { position: usize, expected: Vec<String> },
    #[error("unresolved named pointcut `{0}`")]
    UnresolvedNamedPointcut(String),
    #[error("named pointcut `{0}` refers to itself")]
    Recursive(String),
    #[error("pointcut `{name}` takes {expected} argument(s), {found} given")]
    ArgCount {
        name: String,
        expected: usize,
        found: usize,
    },
}

/// A formal parameter of a named pointcut or an advice.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Param {
    pub type_name: String,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NameChunk {
    Lit(String),
    Star,
}

/// Literal chunks interleaved with `*` wildcards; never empty.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NamePattern {
    pub chunks: Vec<NameChunk>,
}

impl NamePattern {
    pub fn parse(text: &str) -> Option<NamePattern> {
        if text.is_empty() {
            return None;
        }
        let mut chunks = Vec::new();
        let mut lit = String::new();
        for c in text.chars() {
            if c == '*' {
                if !lit.is_empty() {
                    chunks.push(NameChunk::Lit(std::mem::take(&mut lit)));
                }
                chunks.push(NameChunk::Star);
            } else if crate::lex::is_ident_char(c) {
                lit.push(c);
            } else {
                return None;
            }
        }
        if !lit.is_empty() {
            chunks.push(NameChunk::Lit(lit));
        }
        Some(NamePattern { chunks })
    }

    pub fn star() -> NamePattern {
        NamePattern {
            chunks: vec![NameChunk::Star],
        }
    }

    pub fn literal(text: &str) -> NamePattern {
        NamePattern {
            chunks: vec![NameChunk::Lit(text.to_string())],
        }
    }

    pub fn star_count(&self) -> usize {
        self.chunks.iter().filter(|c| **c == NameChunk::Star).count()
    }

    pub fn is_literal(&self) -> bool {
        self.star_count() == 0
    }

    pub fn text(&self) -> String {
        self.chunks
            .iter()
            .map(|c| match c {
                NameChunk::Lit(s) => s.as_str(),
                NameChunk::Star => "*",
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TypeSegment {
    Name(NamePattern),
    /// `..`: any run of package segments, possibly empty.
    AnyPackage,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TypePattern {
    pub segments: Vec<TypeSegment>,
    /// Trailing `+`.
    pub subtypes: bool,
}

impl TypePattern {
    pub fn any() -> TypePattern {
        TypePattern {
            segments: vec![TypeSegment::Name(NamePattern::star())],
            subtypes: false,
        }
    }

    pub fn literal(name: &str) -> TypePattern {
        TypePattern {
            segments: name
                .split('.')
                .map(|s| TypeSegment::Name(NamePattern::literal(s)))
                .collect(),
            subtypes: false,
        }
    }

    pub fn star_count(&self) -> usize {
        self.segments
            .iter()
            .map(|s| match s {
                TypeSegment::Name(n) => n.star_count(),
                TypeSegment::AnyPackage => 0,
            })
            .sum()
    }

    /// Literal dotted name when the pattern has no wildcards at all.
    pub fn as_literal(&self) -> Option<String> {
        let mut parts = Vec::new();
        for s in &self.segments {
            match s {
                TypeSegment::Name(n) if n.is_literal() => parts.push(n.text()),
                _ => return None,
            }
        }
        Some(parts.join("."))
    }

    /// Checks the structural invariants: at least one name segment and no
    /// adjacent `..` markers.
    pub fn is_well_formed(&self) -> bool {
        let named = self
            .segments
            .iter()
            .any(|s| matches!(s, TypeSegment::Name(_)));
        let doubled = self
            .segments
            .windows(2)
            .any(|w| w[0] == TypeSegment::AnyPackage && w[1] == TypeSegment::AnyPackage);
        named && !doubled
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ParamPattern {
    /// `(..)`
    Any,
    /// `()`
    Empty,
    Arity(usize),
}

impl ParamPattern {
    pub fn accepts(self, arity: usize) -> bool {
        match self {
            ParamPattern::Any => true,
            ParamPattern::Empty => arity == 0,
            ParamPattern::Arity(n) => arity == n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MethodPattern {
    pub return_type: TypePattern,
    pub declaring_type: TypePattern,
    pub name: NamePattern,
    pub params: ParamPattern,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BindArg {
    /// Binding form: names a parameter of the enclosing pointcut or advice.
    Var(String),
    Type(TypePattern),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Primitive {
    Call(MethodPattern),
    Execution(MethodPattern),
    Within(TypePattern),
    Withincode(MethodPattern),
    This(BindArg),
    Target(BindArg),
    Cflow(Box<PointcutExpr>),
}

impl Primitive {
    pub fn keyword(&self) -> &'static str {
        match self {
            Primitive::Call(_) => "call",
            Primitive::Execution(_) => "execution",
            Primitive::Within(_) => "within",
            Primitive::Withincode(_) => "withincode",
            Primitive::This(_) => "this",
            Primitive::Target(_) => "target",
            Primitive::Cflow(_) => "cflow",
        }
    }

    /// Conditions that depend on runtime context rather than the shadow.
    pub fn is_dynamic(&self) -> bool {
        matches!(self, Primitive::This(_) | Primitive::Target(_) | Primitive::Cflow(_))
    }

    /// Type patterns of this primitive in print order (return type before
    /// declaring type), excluding a cflow's inner expression.
    pub fn type_patterns(&self) -> Vec<&TypePattern> {
        match self {
            Primitive::Call(m) | Primitive::Execution(m) | Primitive::Withincode(m) => {
                vec![&m.return_type, &m.declaring_type]
            }
            Primitive::Within(t) | Primitive::This(BindArg::Type(t)) | Primitive::Target(BindArg::Type(t)) => {
                vec![t]
            }
            _ => Vec::new(),
        }
    }

    pub fn type_patterns_mut(&mut self) -> Vec<&mut TypePattern> {
        match self {
            Primitive::Call(m) | Primitive::Execution(m) | Primitive::Withincode(m) => {
                vec![&mut m.return_type, &mut m.declaring_type]
            }
            Primitive::Within(t)
            | Primitive::This(BindArg::Type(t))
            | Primitive::Target(BindArg::Type(t)) => vec![t],
            _ => Vec::new(),
        }
    }

    /// Number of `*` wildcards in this primitive's own patterns, in print
    /// order: return type, declaring type, method name.
    pub fn star_count(&self) -> usize {
        let names = match self {
            Primitive::Call(m) | Primitive::Execution(m) | Primitive::Withincode(m) => m.name.star_count(),
            _ => 0,
        };
        self.type_patterns().iter().map(|t| t.star_count()).sum::<usize>() + names
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PointcutExpr {
    And(Box<PointcutExpr>, Box<PointcutExpr>),
    Or(Box<PointcutExpr>, Box<PointcutExpr>),
    Not(Box<PointcutExpr>),
    Named { name: String, args: Vec<String> },
    Prim(Primitive),
}

impl PointcutExpr {
    pub fn and(l: PointcutExpr, r: PointcutExpr) -> PointcutExpr {
        PointcutExpr::And(Box::new(l), Box::new(r))
    }

    pub fn or(l: PointcutExpr, r: PointcutExpr) -> PointcutExpr {
        PointcutExpr::Or(Box::new(l), Box::new(r))
    }

    pub fn not(e: PointcutExpr) -> PointcutExpr {
        PointcutExpr::Not(Box::new(e))
    }

    /// Primitive nodes in pre-order, descending into cflow bodies after the
    /// cflow node itself. This ordering defines primitive indices.
    pub fn primitives(&self) -> Vec<&Primitive> {
        fn go<'a>(e: &'a PointcutExpr, out: &mut Vec<&'a Primitive>) {
            match e {
                PointcutExpr::And(l, r) | PointcutExpr::Or(l, r) => {
                    go(l, out);
                    go(r, out);
                }
                PointcutExpr::Not(i) => go(i, out),
                PointcutExpr::Named { .. } => {}
                PointcutExpr::Prim(p) => {
                    out.push(p);
                    if let Primitive::Cflow(inner) = p {
                        go(inner, out);
                    }
                }
            }
        }
        let mut out = Vec::new();
        go(self, &mut out);
        out
    }

    /// Names of pointcuts referenced anywhere in the expression.
    pub fn named_refs(&self) -> Vec<&str> {
        fn go<'a>(e: &'a PointcutExpr, out: &mut Vec<&'a str>) {
            match e {
                PointcutExpr::And(l, r) | PointcutExpr::Or(l, r) => {
                    go(l, out);
                    go(r, out);
                }
                PointcutExpr::Not(i) => go(i, out),
                PointcutExpr::Named { name, .. } => out.push(name),
                PointcutExpr::Prim(Primitive::Cflow(inner)) => go(inner, out),
                PointcutExpr::Prim(_) => {}
            }
        }
        let mut out = Vec::new();
        go(self, &mut out);
        out
    }

    /// Variables used in `this(v)` / `target(v)` binding forms.
    pub fn bound_vars(&self) -> Vec<&str> {
        fn go<'a>(e: &'a PointcutExpr, out: &mut Vec<&'a str>) {
            match e {
                PointcutExpr::And(l, r) | PointcutExpr::Or(l, r) => {
                    go(l, out);
                    go(r, out);
                }
                PointcutExpr::Not(i) => go(i, out),
                PointcutExpr::Named { args, .. } => out.extend(args.iter().map(String::as_str)),
                PointcutExpr::Prim(Primitive::This(BindArg::Var(v)))
                | PointcutExpr::Prim(Primitive::Target(BindArg::Var(v))) => out.push(v),
                PointcutExpr::Prim(Primitive::Cflow(inner)) => go(inner, out),
                PointcutExpr::Prim(_) => {}
            }
        }
        let mut out = Vec::new();
        go(self, &mut out);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn name_pattern_chunks() {
        let p = NamePattern::parse("m*x*").unwrap();
        assert_eq!(p.star_count(), 2);
        assert_eq!(p.text(), "m*x*");
        assert!(NamePattern::parse("").is_none());
        assert!(NamePattern::parse("a.b").is_none());
    }

    #[test]
    fn primitive_star_counts() {
        let e = parse_pointcut("execution(* A.m*())").unwrap();
        let prims = e.primitives();
        assert_eq!(prims[0].star_count(), 2);
        let e = parse_pointcut("within(*..DrawApplication.*)").unwrap();
        assert_eq!(e.primitives()[0].star_count(), 2);
    }
}
