//! Aspect definitions: named pointcuts, advice, inter-type declarations and
//! precedence.

mod load;
mod print;
mod weave;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{MethodDecl, ModelError, Stmt};
use crate::pointcut::{inline, CondTree, NamePattern, Param, PointcutError, PointcutExpr, PointcutScope, Primitive, TypePattern};
use crate::trace::AdviceKind;

pub use load::{load_aspects, parse_aspects, AspectFile};
pub use weave::{weave_static, Woven};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AspectError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("aspect {aspect}: pointcut `{name}` is declared twice")]
    DuplicatePointcutName { aspect: String, name: String },
    #[error("aspect {aspect}: introduction of {target}.{method} collides with an existing method")]
    IntroductionCollision {
        aspect: String,
        target: String,
        method: String,
    },
    #[error("aspect {aspect}: {location}: {message}")]
    UnsupportedNesting {
        aspect: String,
        location: String,
        message: String,
    },
    #[error("aspect {aspect}: {location}: {source}")]
    Pointcut {
        aspect: String,
        location: String,
        source: PointcutError,
    },
    #[error("aspect {aspect}: {location}: {message}")]
    Invalid {
        aspect: String,
        location: String,
        message: String,
    },
    #[error("aspect {aspect}: unknown type `{name}` in {location}")]
    Resolution {
        aspect: String,
        name: String,
        location: String,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DeclareParents {
    pub pattern: TypePattern,
    pub interface: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Introduction {
    pub target: String,
    /// Origin is set to the introducing aspect when woven.
    pub method: MethodDecl,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NamedPointcut {
    pub name: String,
    pub params: Vec<Param>,
    pub expr: PointcutExpr,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AdviceDef {
    pub kind: AdviceKind,
    pub params: Vec<Param>,
    pub pointcut: PointcutExpr,
    pub body: Vec<Stmt>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AspectDef {
    pub name: String,
    pub privileged: bool,
    /// Abstract aspects are obligation sources only; they never run.
    pub is_abstract: bool,
    pub declare_parents: Vec<DeclareParents>,
    pub introductions: Vec<Introduction>,
    pub pointcuts: Vec<NamedPointcut>,
    pub advice: Vec<AdviceDef>,
    pub precedence: Option<Vec<NamePattern>>,
}

impl PointcutScope for AspectDef {
    fn named_pointcut(&self, name: &str) -> Option<(&[Param], &PointcutExpr)> {
        self.pointcuts
            .iter()
            .find(|p| p.name == name)
            .map(|p| (p.params.as_slice(), &p.expr))
    }

    fn owner_label(&self, name: &str) -> String {
        self.pointcut_owner(name)
    }
}

impl AspectDef {
    pub fn new(name: &str) -> AspectDef {
        AspectDef {
            name: name.to_string(),
            privileged: false,
            is_abstract: false,
            declare_parents: Vec::new(),
            introductions: Vec::new(),
            pointcuts: Vec::new(),
            advice: Vec::new(),
            precedence: None,
        }
    }

    /// Owner label used for an advice's own pointcut text.
    pub fn advice_owner(&self, index: usize) -> String {
        format!("{}#{}", self.name, index)
    }

    /// Owner label used for a named pointcut's text.
    pub fn pointcut_owner(&self, name: &str) -> String {
        format!("{}.{}", self.name, name)
    }

    fn pc_err(&self, location: String) -> impl Fn(PointcutError) -> AspectError + '_ {
        move |source| AspectError::Pointcut {
            aspect: self.name.clone(),
            location: location.clone(),
            source,
        }
    }

    /// Inlined condition tree of a named pointcut.
    pub fn pointcut_tree(&self, name: &str) -> Result<CondTree, AspectError> {
        let pc = self
            .pointcuts
            .iter()
            .find(|p| p.name == name)
            .ok_or_else(|| self.pc_err(format!("pointcut {}", name))(PointcutError::UnresolvedNamedPointcut(name.to_string())))?;
        inline(&pc.expr, &self.pointcut_owner(name), &pc.params, &OwnedScope(self))
            .map_err(self.pc_err(format!("pointcut {}", name)))
    }

    /// Inlined condition tree of an advice's pointcut.
    pub fn advice_tree(&self, index: usize) -> Result<CondTree, AspectError> {
        let adv = &self.advice[index];
        inline(&adv.pointcut, &self.advice_owner(index), &adv.params, &OwnedScope(self))
            .map_err(self.pc_err(format!("advice {}", index)))
    }

    /// Checks everything that does not need a program model.
    pub fn validate(&self) -> Result<(), AspectError> {
        let invalid = |location: String, message: String| AspectError::Invalid {
            aspect: self.name.clone(),
            location,
            message,
        };
        let mut seen = BTreeSet::new();
        let mut param_names = BTreeSet::new();
        for pc in &self.pointcuts {
            if !seen.insert(pc.name.as_str()) {
                return Err(AspectError::DuplicatePointcutName {
                    aspect: self.name.clone(),
                    name: pc.name.clone(),
                });
            }
            for p in &pc.params {
                if !param_names.insert(p.name.as_str()) {
                    return Err(invalid(
                        format!("pointcut {}", pc.name),
                        format!("parameter name `{}` is already used by another pointcut", p.name),
                    ));
                }
            }
        }
        for pc in &self.pointcuts {
            let location = format!("pointcut {}", pc.name);
            check_binding(&pc.params, &pc.expr).map_err(|m| invalid(location.clone(), m))?;
            let tree = self.pointcut_tree(&pc.name)?;
            check_nesting(&tree).map_err(|message| AspectError::UnsupportedNesting {
                aspect: self.name.clone(),
                location,
                message,
            })?;
        }
        for (i, adv) in self.advice.iter().enumerate() {
            let location = format!("advice {} ({})", i, adv.kind.keyword());
            check_binding(&adv.params, &adv.pointcut).map_err(|m| invalid(location.clone(), m))?;
            let tree = self.advice_tree(i)?;
            check_nesting(&tree).map_err(|message| AspectError::UnsupportedNesting {
                aspect: self.name.clone(),
                location: location.clone(),
                message,
            })?;
            let proceeds = Stmt::count_proceeds(&adv.body);
            let allowed = if adv.kind == AdviceKind::Around { 1 } else { 0 };
            if proceeds > allowed {
                return Err(invalid(
                    location,
                    format!("{} advice may contain at most {} `proceed`", adv.kind.keyword(), allowed),
                ));
            }
            let mut bad = None;
            Stmt::walk(&adv.body, &mut |_, s| match s {
                Stmt::SuperCall { .. } if bad.is_none() => {
                    bad = Some("super methods cannot be accessed when advising a method; `supercall` is not allowed in advice".to_string())
                }
                Stmt::Call {
                    receiver: crate::model::Receiver::This,
                    ..
                } if bad.is_none() => bad = Some("advice bodies have no `this` receiver; bind the object through a parameter".to_string()),
                _ => {}
            });
            if let Some(message) = bad {
                return Err(invalid(location, message));
            }
        }
        for intro in &self.introductions {
            if Stmt::count_proceeds(&intro.method.body) > 0 {
                return Err(invalid(
                    format!("introduction {}.{}", intro.target, intro.method.name),
                    "`proceed` is only allowed in around advice".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Scope wrapper so the trait object lives as long as the borrow.
struct OwnedScope<'a>(&'a AspectDef);

impl PointcutScope for OwnedScope<'_> {
    fn named_pointcut(&self, name: &str) -> Option<(&[Param], &PointcutExpr)> {
        self.0.named_pointcut(name)
    }

    fn owner_label(&self, name: &str) -> String {
        self.0.pointcut_owner(name)
    }
}

/// Every parameter must be bound somewhere in the expression, and every
/// binding variable must be a parameter.
fn check_binding(params: &[Param], expr: &PointcutExpr) -> Result<(), String> {
    let bound: BTreeSet<&str> = expr.bound_vars().into_iter().collect();
    for p in params {
        if !bound.contains(p.name.as_str()) {
            return Err(format!("parameter `{}` is not bound by this/target", p.name));
        }
    }
    let declared: BTreeSet<&str> = params.iter().map(|p| p.name.as_str()).collect();
    for v in &bound {
        if !declared.contains(v) {
            return Err(format!("`{}` is not a declared parameter", v));
        }
    }
    let mut names = BTreeSet::new();
    for p in params {
        if !names.insert(p.name.as_str()) {
            return Err(format!("duplicate parameter `{}`", p.name));
        }
    }
    Ok(())
}

/// Rejects dynamic conditions inside cflow bodies.
fn check_nesting(tree: &CondTree) -> Result<(), String> {
    fn inside(t: &CondTree) -> Result<(), String> {
        match t {
            CondTree::And(l, r) | CondTree::Or(l, r) => {
                inside(l)?;
                inside(r)
            }
            CondTree::Not(i) => inside(i),
            CondTree::Leaf(l) if l.primitive.is_dynamic() => Err(format!(
                "`{}` inside cflow is not supported",
                l.primitive.keyword()
            )),
            CondTree::Leaf(_) => Ok(()),
        }
    }
    match tree {
        CondTree::And(l, r) | CondTree::Or(l, r) => {
            check_nesting(l)?;
            check_nesting(r)
        }
        CondTree::Not(i) => check_nesting(i),
        CondTree::Leaf(l) => match (&l.primitive, &l.cflow) {
            (Primitive::Cflow(_), Some(inner)) => inside(inner),
            _ => Ok(()),
        },
    }
}
