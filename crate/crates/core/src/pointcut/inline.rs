//! Named-pointcut inlining and condition flattening.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{BindArg, Param, PointcutError, PointcutExpr, Primitive};

/// Lookup of named pointcuts visible to an expression (its owning aspect).
pub trait PointcutScope {
    fn named_pointcut(&self, name: &str) -> Option<(&[Param], &PointcutExpr)>;

    /// Provenance label for primitives written inside a named pointcut.
    fn owner_label(&self, name: &str) -> String {
        name.to_string()
    }
}

/// Scope for free-standing expressions: no named pointcuts.
pub struct NoScope;

impl PointcutScope for NoScope {
    fn named_pointcut(&self, _: &str) -> Option<(&[Param], &PointcutExpr)> {
        None
    }
}

/// A primitive occurrence after inlining, remembering where it was written.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Leaf {
    /// Binding variables renamed into the root expression's namespace.
    pub primitive: Primitive,
    /// Pointcut (or advice) whose source text contains this primitive.
    pub owner: String,
    /// Index among the owner's own primitives (see `PointcutExpr::primitives`).
    pub index: usize,
    /// Declared type of a `this(v)` / `target(v)` variable.
    pub bind_type: Option<String>,
    /// Inlined body of a cflow primitive.
    pub cflow: Option<Box<CondTree>>,
}

/// A pointcut expression with every named reference expanded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum CondTree {
    And(Box<CondTree>, Box<CondTree>),
    Or(Box<CondTree>, Box<CondTree>),
    Not(Box<CondTree>),
    Leaf(Leaf),
}

/// One flattened condition: a primitive plus the parity of the negations
/// enclosing it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Condition {
    pub leaf: Leaf,
    pub negated: bool,
}

impl CondTree {
    /// Top-level leaves in left-to-right order; cflow bodies are not entered.
    pub fn conditions(&self) -> Vec<Condition> {
        fn go(t: &CondTree, neg: bool, out: &mut Vec<Condition>) {
            match t {
                CondTree::And(l, r) | CondTree::Or(l, r) => {
                    go(l, neg, out);
                    go(r, neg, out);
                }
                CondTree::Not(i) => go(i, !neg, out),
                CondTree::Leaf(leaf) => out.push(Condition {
                    leaf: leaf.clone(),
                    negated: neg,
                }),
            }
        }
        let mut out = Vec::new();
        go(self, false, &mut out);
        out
    }

    /// Evaluates the boolean skeleton given raw leaf truth values in
    /// condition order.
    pub fn eval_raw(&self, raw: &[bool]) -> bool {
        fn go(t: &CondTree, raw: &[bool], next: &mut usize) -> bool {
            match t {
                CondTree::And(l, r) => {
                    let a = go(l, raw, next);
                    let b = go(r, raw, next);
                    a && b
                }
                CondTree::Or(l, r) => {
                    let a = go(l, raw, next);
                    let b = go(r, raw, next);
                    a || b
                }
                CondTree::Not(i) => !go(i, raw, next),
                CondTree::Leaf(_) => {
                    let v = raw[*next];
                    *next += 1;
                    v
                }
            }
        }
        go(self, raw, &mut 0)
    }

    /// Evaluates over a condition vector whose entries already include each
    /// leaf's negation parity.
    pub fn eval_conditions(&self, vector: &[bool]) -> bool {
        let raw: Vec<bool> = self
            .conditions()
            .iter()
            .zip(vector)
            .map(|(c, &v)| v != c.negated)
            .collect();
        self.eval_raw(&raw)
    }
}

struct Inliner<'a> {
    scope: &'a dyn PointcutScope,
    active: Vec<String>,
}

impl Inliner<'_> {
    fn expand(
        &mut self,
        expr: &PointcutExpr,
        owner: &str,
        types: &BTreeMap<String, String>,
        rename: &BTreeMap<String, String>,
        counter: &mut usize,
    ) -> Result<CondTree, PointcutError> {
        Ok(match expr {
            PointcutExpr::And(l, r) => CondTree::And(
                Box::new(self.expand(l, owner, types, rename, counter)?),
                Box::new(self.expand(r, owner, types, rename, counter)?),
            ),
            PointcutExpr::Or(l, r) => CondTree::Or(
                Box::new(self.expand(l, owner, types, rename, counter)?),
                Box::new(self.expand(r, owner, types, rename, counter)?),
            ),
            PointcutExpr::Not(i) => CondTree::Not(Box::new(self.expand(i, owner, types, rename, counter)?)),
            PointcutExpr::Named { name, args } => {
                let (params, body) = self
                    .scope
                    .named_pointcut(name)
                    .ok_or_else(|| PointcutError::UnresolvedNamedPointcut(name.clone()))?;
                if params.len() != args.len() {
                    return Err(PointcutError::ArgCount {
                        name: name.clone(),
                        expected: params.len(),
                        found: args.len(),
                    });
                }
                if self.active.contains(name) {
                    return Err(PointcutError::Recursive(name.clone()));
                }
                let inner_types = params
                    .iter()
                    .map(|p| (p.name.clone(), p.type_name.clone()))
                    .collect();
                let inner_rename = params
                    .iter()
                    .zip(args)
                    .map(|(p, a)| (p.name.clone(), rename.get(a).cloned().unwrap_or_else(|| a.clone())))
                    .collect();
                self.active.push(name.clone());
                let label = self.scope.owner_label(name);
                let tree = self.expand(body, &label, &inner_types, &inner_rename, &mut 0)?;
                self.active.pop();
                tree
            }
            PointcutExpr::Prim(p) => {
                let index = *counter;
                *counter += 1;
                let mut bind_type = None;
                let rename_arg = |arg: &BindArg, bind_type: &mut Option<String>| match arg {
                    BindArg::Var(v) => {
                        *bind_type = types.get(v).cloned();
                        BindArg::Var(rename.get(v).cloned().unwrap_or_else(|| v.clone()))
                    }
                    other => other.clone(),
                };
                let (primitive, cflow) = match p {
                    Primitive::This(a) => (Primitive::This(rename_arg(a, &mut bind_type)), None),
                    Primitive::Target(a) => (Primitive::Target(rename_arg(a, &mut bind_type)), None),
                    Primitive::Cflow(inner) => {
                        let tree = self.expand(inner, owner, types, rename, counter)?;
                        (p.clone(), Some(Box::new(tree)))
                    }
                    other => (other.clone(), None),
                };
                CondTree::Leaf(Leaf {
                    primitive,
                    owner: owner.to_string(),
                    index,
                    bind_type,
                    cflow,
                })
            }
        })
    }
}

/// Expands every named reference in `expr`. `owner` names the root for
/// provenance; `params` declares the root's binding variables.
pub fn inline(
    expr: &PointcutExpr,
    owner: &str,
    params: &[Param],
    scope: &dyn PointcutScope,
) -> Result<CondTree, PointcutError> {
    let types = params
        .iter()
        .map(|p| (p.name.clone(), p.type_name.clone()))
        .collect();
    let active = owner.rsplit('.').next().unwrap_or(owner).to_string();
    let mut inliner = Inliner {
        scope,
        active: vec![active],
    };
    inliner.expand(expr, owner, &types, &BTreeMap::new(), &mut 0)
}

/// Left-to-right primitive conditions after inlining named references; a
/// cflow counts as one condition.
pub fn flatten_conditions(
    expr: &PointcutExpr,
    scope: &dyn PointcutScope,
) -> Result<Vec<Primitive>, PointcutError> {
    Ok(inline(expr, "", &[], scope)?
        .conditions()
        .into_iter()
        .map(|c| c.leaf.primitive)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::super::parse_pointcut;
    use super::*;

    struct Table(Vec<(String, Vec<Param>, PointcutExpr)>);

    impl PointcutScope for Table {
        fn named_pointcut(&self, name: &str) -> Option<(&[Param], &PointcutExpr)> {
            self.0
                .iter()
                .find(|(n, _, _)| n == name)
                .map(|(_, p, e)| (p.as_slice(), e))
        }
    }

    fn table(defs: &[(&str, &str)]) -> Table {
        Table(
            defs.iter()
                .map(|(n, src)| (n.to_string(), Vec::new(), parse_pointcut(src).unwrap()))
                .collect(),
        )
    }

    #[test]
    fn command_execute_has_three_conditions() {
        let e = parse_pointcut(
            "this(aCommand) && execution(void AbstractCommand.execute()) && !within(*..DrawApplication.*)",
        )
        .unwrap();
        let conds = flatten_conditions(&e, &NoScope).unwrap();
        let kinds: Vec<_> = conds.iter().map(|p| p.keyword()).collect();
        assert_eq!(kinds, vec!["this", "execution", "within"]);
    }

    #[test]
    fn separated_form_inlines_to_same_conditions() {
        let scope = Table(vec![
            (
                "commandExecute".into(),
                vec![Param {
                    type_name: "AbstractCommand".into(),
                    name: "aCommand".into(),
                }],
                parse_pointcut("this(aCommand) && inExecuteMethod() && !inAbstractClass()").unwrap(),
            ),
            (
                "inAbstractClass".into(),
                vec![],
                parse_pointcut("within(*..DrawApplication.*)").unwrap(),
            ),
            (
                "inExecuteMethod".into(),
                vec![],
                parse_pointcut("execution(void AbstractCommand.execute())").unwrap(),
            ),
        ]);
        let root = parse_pointcut("commandExecute(c)").unwrap();
        let tree = inline(&root, "advice#0", &[], &scope).unwrap();
        let conds = tree.conditions();
        assert_eq!(conds.len(), 3);
        assert_eq!(conds[0].leaf.primitive, Primitive::This(BindArg::Var("c".into())));
        assert_eq!(conds[0].leaf.bind_type.as_deref(), Some("AbstractCommand"));
        assert_eq!((conds[1].leaf.owner.as_str(), conds[1].leaf.index), ("inExecuteMethod", 0));
        assert!(conds[2].negated);
        assert_eq!(conds[2].leaf.owner, "inAbstractClass");
    }

    #[test]
    fn cflow_counts_once() {
        let scope = table(&[
            ("a", "call(* A.a())"),
            ("b", "call(* B.b())"),
            ("c", "call(* C.c())"),
        ]);
        let e = parse_pointcut("a() && cflow(b() || c())").unwrap();
        assert_eq!(flatten_conditions(&e, &scope).unwrap().len(), 2);
        assert_eq!(flatten_conditions(&parse_pointcut("a()").unwrap(), &scope).unwrap().len(), 1);
    }

    #[test]
    fn resolution_errors() {
        let scope = table(&[("p", "q()"), ("q", "p()")]);
        assert!(matches!(
            flatten_conditions(&parse_pointcut("p()").unwrap(), &scope),
            Err(PointcutError::Recursive(_))
        ));
        assert!(matches!(
            flatten_conditions(&parse_pointcut("zz()").unwrap(), &scope),
            Err(PointcutError::UnresolvedNamedPointcut(n)) if n == "zz"
        ));
    }

    #[test]
    fn literal_vector_matches_raw_semantics() {
        let e = parse_pointcut("!(a() || !b()) && c()").unwrap();
        let scope = table(&[("a", "call(* A.a())"), ("b", "call(* B.b())"), ("c", "call(* C.c())")]);
        let tree = inline(&e, "x", &[], &scope).unwrap();
        let conds = tree.conditions();
        for bits in 0..8u8 {
            let raw: Vec<bool> = (0..3).map(|i| bits >> i & 1 == 1).collect();
            let lits: Vec<bool> = raw.iter().zip(&conds).map(|(r, c)| *r != c.negated).collect();
            let expected = !(raw[0] || !raw[1]) && raw[2];
            assert_eq!(tree.eval_raw(&raw), expected);
            assert_eq!(tree.eval_conditions(&lits), expected);
        }
    }
}
