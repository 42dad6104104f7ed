//! Canonical text form with minimal parentheses.

use std::fmt;

use super::{BindArg, MethodPattern, NamePattern, ParamPattern, PointcutExpr, Primitive, TypePattern, TypeSegment};

impl fmt::Display for NamePattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text())
    }
}

fn write_segments(f: &mut fmt::Formatter<'_>, segments: &[TypeSegment]) -> fmt::Result {
    let mut after_dots = true;
    for seg in segments {
        match seg {
            TypeSegment::AnyPackage => {
                f.write_str("..")?;
                after_dots = true;
            }
            TypeSegment::Name(n) => {
                if !after_dots {
                    f.write_str(".")?;
                }
                write!(f, "{}", n)?;
                after_dots = false;
            }
        }
    }
    Ok(())
}

impl fmt::Display for TypePattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_segments(f, &self.segments)?;
        if self.subtypes {
            f.write_str("+")?;
        }
        Ok(())
    }
}

impl fmt::Display for MethodPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}.{}(", self.return_type, self.declaring_type, self.name)?;
        match self.params {
            ParamPattern::Any => f.write_str("..")?,
            ParamPattern::Empty => {}
            ParamPattern::Arity(n) => f.write_str(&vec!["*"; n].join(", "))?,
        }
        f.write_str(")")
    }
}

impl fmt::Display for BindArg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BindArg::Var(v) => f.write_str(v),
            BindArg::Type(t) => t.fmt(f),
        }
    }
}

impl fmt::Display for Primitive {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Primitive::Call(m) | Primitive::Execution(m) | Primitive::Withincode(m) => {
                write!(f, "{}({})", self.keyword(), m)
            }
            Primitive::Within(t) => write!(f, "within({})", t),
            Primitive::This(a) => write!(f, "this({})", a),
            Primitive::Target(a) => write!(f, "target({})", a),
            Primitive::Cflow(inner) => write!(f, "cflow({})", inner),
        }
    }
}

fn precedence(e: &PointcutExpr) -> u8 {
    match e {
        PointcutExpr::Or(..) => 1,
        PointcutExpr::And(..) => 2,
        PointcutExpr::Not(_) => 3,
        PointcutExpr::Named { .. } | PointcutExpr::Prim(_) => 4,
    }
}

fn write_child(f: &mut fmt::Formatter<'_>, e: &PointcutExpr, min: u8) -> fmt::Result {
    if precedence(e) < min {
        write!(f, "({})", e)
    } else {
        write!(f, "{}", e)
    }
}

impl fmt::Display for PointcutExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            // left operands may share the operator; right operands must bind tighter
            PointcutExpr::And(l, r) => {
                write_child(f, l, 2)?;
                f.write_str(" && ")?;
                write_child(f, r, 3)
            }
            PointcutExpr::Or(l, r) => {
                write_child(f, l, 1)?;
                f.write_str(" || ")?;
                write_child(f, r, 2)
            }
            PointcutExpr::Not(inner) => {
                f.write_str("!")?;
                write_child(f, inner, 3)
            }
            PointcutExpr::Named { name, args } => write!(f, "{}({})", name, args.join(", ")),
            PointcutExpr::Prim(p) => p.fmt(f),
        }
    }
}
