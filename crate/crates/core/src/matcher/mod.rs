//! Shadow computation and pointcut evaluation.
//!
//! Static evaluation answers "could this shadow ever match" using Kleene
//! logic over dynamic conditions. Dynamic evaluation produces a full
//! condition vector plus wildcard witnesses and hierarchy probes for the
//! adequacy checker.

mod pattern;
mod shadow;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::model::{ProgramModel, OBJECT};
use crate::pointcut::{inline, BindArg, CondTree, Condition, Leaf, MethodPattern, PointcutError, PointcutExpr, PointcutScope, Primitive, TypePattern, TypeSegment};
use crate::trace::{ObjectRef, ShadowId};

pub use pattern::{match_name, match_segments, name_segments, Witness};
pub use shadow::{Shadow, ShadowKind, ShadowTable, Signature};

/// Three-valued truth for static approximation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tri {
    False,
    Maybe,
    True,
}

impl Tri {
    fn from_bool(b: bool) -> Tri {
        if b {
            Tri::True
        } else {
            Tri::False
        }
    }

    fn not(self) -> Tri {
        match self {
            Tri::False => Tri::True,
            Tri::True => Tri::False,
            Tri::Maybe => Tri::Maybe,
        }
    }

    fn and(self, other: Tri) -> Tri {
        match (self, other) {
            (Tri::False, _) | (_, Tri::False) => Tri::False,
            (Tri::True, Tri::True) => Tri::True,
            _ => Tri::Maybe,
        }
    }

    fn or(self, other: Tri) -> Tri {
        match (self, other) {
            (Tri::True, _) | (_, Tri::True) => Tri::True,
            (Tri::False, Tri::False) => Tri::False,
            _ => Tri::Maybe,
        }
    }
}

/// A runtime join point as seen by the matcher.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JoinPoint {
    pub shadow: ShadowId,
    pub this: Option<ObjectRef>,
    pub target: Option<ObjectRef>,
    /// Shadows currently entered, outermost first, including this one.
    pub stack: Vec<ShadowId>,
}

/// Location of one `*` inside pointcut source text.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct WildcardSite {
    pub owner: String,
    pub primitive: usize,
    pub star: usize,
}

/// A `+` pattern evaluated against one concrete type.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct HierarchyProbe {
    pub owner: String,
    pub primitive: usize,
    /// Index into `Primitive::type_patterns`.
    pub pattern: usize,
    pub presented: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchOutcome {
    pub matched: bool,
    /// One entry per top-level condition, already adjusted for the
    /// negations above it.
    pub vector: Vec<bool>,
    pub witnesses: Vec<(WildcardSite, Witness)>,
    pub probes: Vec<HierarchyProbe>,
    pub bindings: BTreeMap<String, ObjectRef>,
}

/// An inlined pointcut ready for repeated evaluation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompiledPointcut {
    pub tree: CondTree,
    pub conditions: Vec<Condition>,
}

impl CompiledPointcut {
    pub fn new(tree: CondTree) -> CompiledPointcut {
        let conditions = tree.conditions();
        CompiledPointcut { tree, conditions }
    }

    pub fn compile(
        expr: &PointcutExpr,
        owner: &str,
        params: &[crate::pointcut::Param],
        scope: &dyn PointcutScope,
    ) -> Result<CompiledPointcut, PointcutError> {
        Ok(CompiledPointcut::new(inline(expr, owner, params, scope)?))
    }
}

/// Matching context over one (usually woven) model.
pub struct Matcher<'m> {
    model: &'m ProgramModel,
    supers: HashMap<String, Vec<String>>,
    table: ShadowTable,
}

impl<'m> Matcher<'m> {
    pub fn new(model: &'m ProgramModel) -> Matcher<'m> {
        let supers = model
            .types
            .keys()
            .map(|t| (t.clone(), model.supertypes_closure(t).into_iter().collect()))
            .collect();
        Matcher {
            model,
            supers,
            table: ShadowTable::build(model),
        }
    }

    pub fn model(&self) -> &'m ProgramModel {
        self.model
    }

    pub fn table(&self) -> &ShadowTable {
        &self.table
    }

    pub fn shadows(&self) -> &[Shadow] {
        &self.table.shadows
    }

    pub fn shadow(&self, id: ShadowId) -> &Shadow {
        self.table.get(id)
    }

    /// The type itself followed by its proper supertypes in name order.
    fn candidates(&self, name: &str) -> Vec<String> {
        let mut out = vec![name.to_string()];
        match self.supers.get(name) {
            Some(s) => out.extend(s.iter().cloned()),
            None => out.extend(self.model.supertypes_closure(name)),
        }
        out
    }

    pub fn is_subtype(&self, sub: &str, sup: &str) -> bool {
        sub == sup
            || sup == OBJECT
            || self
                .supers
                .get(sub)
                .map_or_else(|| self.model.is_subtype(sub, sup), |s| s.iter().any(|t| t == sup))
    }

    /// Matches a type pattern, honouring `+` through the supertype closure.
    pub fn match_type(&self, pattern: &TypePattern, name: &str) -> (bool, Vec<Witness>) {
        let hit = if pattern.subtypes {
            self.candidates(name)
                .iter()
                .find_map(|c| match_segments(pattern, c))
        } else {
            match_segments(pattern, name)
        };
        match hit {
            Some(w) => (true, w),
            None => (false, vec![Witness::NoMatch; pattern.star_count()]),
        }
    }

    /// `within` additionally accepts `P.*` when some enclosing type of an
    /// anonymous class matches `P`.
    fn match_within(&self, pattern: &TypePattern, name: &str) -> (bool, Vec<Witness>) {
        let direct = self.match_type(pattern, name);
        if direct.0 {
            return direct;
        }
        let n = pattern.segments.len();
        let member_star = n >= 2
            && matches!(&pattern.segments[n - 1], TypeSegment::Name(np) if np.text() == "*")
            && matches!(pattern.segments[n - 2], TypeSegment::Name(_));
        if member_star {
            let base = TypePattern {
                segments: pattern.segments[..n - 1].to_vec(),
                subtypes: false,
            };
            let types = if pattern.subtypes {
                self.candidates(name)
            } else {
                vec![name.to_string()]
            };
            for t in types {
                for enc in self.model.enclosing_chain(&t) {
                    if let Some(mut w) = match_segments(&base, &enc) {
                        w.push(Witness::NonEmpty);
                        return (true, w);
                    }
                }
            }
        }
        direct
    }

    /// Signature match with witnesses in print order (return, declaring
    /// type, name). The declaring-type pattern may match the shadow's type
    /// or any supertype that also declares the method.
    pub fn match_signature(&self, mp: &MethodPattern, sig: &Signature) -> Option<Vec<Witness>> {
        if !mp.params.accepts(sig.arity) {
            return None;
        }
        let mut out = match &sig.return_type {
            Some(r) => {
                let (ok, w) = self.match_type(&mp.return_type, r);
                if !ok {
                    return None;
                }
                w
            }
            None if mp.return_type == TypePattern::any() => vec![Witness::NonEmpty],
            None => return None,
        };
        let declaring = self
            .candidates(&sig.declaring_type)
            .into_iter()
            .enumerate()
            .filter(|(i, s)| {
                *i == 0
                    || self
                        .model
                        .get(s)
                        .is_some_and(|d| d.method(&sig.method, Some(sig.arity)).is_some())
            })
            .find_map(|(_, s)| {
                let (ok, w) = self.match_type(&mp.declaring_type, &s);
                ok.then_some(w)
            })?;
        out.extend(declaring);
        let spans = match_name(&mp.name, &sig.method)?;
        out.extend(spans.iter().map(|&n| if n == 0 { Witness::Empty } else { Witness::NonEmpty }));
        Some(out)
    }

    /// Exact value of a static primitive at a shadow; `None` for dynamic
    /// primitives.
    pub fn static_primitive(&self, p: &Primitive, shadow: &Shadow) -> Option<(bool, Vec<Witness>)> {
        let misses = |p: &Primitive| vec![Witness::NoMatch; p.star_count()];
        Some(match p {
            Primitive::Call(mp) | Primitive::Execution(mp) => {
                let kind = if matches!(p, Primitive::Call(_)) {
                    ShadowKind::Call
                } else {
                    ShadowKind::Execution
                };
                match (shadow.kind == kind).then(|| self.match_signature(mp, &shadow.signature)).flatten() {
                    Some(w) => (true, w),
                    None => (false, misses(p)),
                }
            }
            Primitive::Withincode(mp) => match self.match_signature(mp, &shadow.enclosing_method) {
                Some(w) => (true, w),
                None => (false, misses(p)),
            },
            Primitive::Within(tp) => self.match_within(tp, &shadow.enclosing_type),
            Primitive::This(_) | Primitive::Target(_) | Primitive::Cflow(_) => return None,
        })
    }

    /// Kleene evaluation with dynamic conditions unknown.
    pub fn static_tri(&self, tree: &CondTree, shadow: &Shadow) -> Tri {
        match tree {
            CondTree::And(l, r) => self.static_tri(l, shadow).and(self.static_tri(r, shadow)),
            CondTree::Or(l, r) => self.static_tri(l, shadow).or(self.static_tri(r, shadow)),
            CondTree::Not(i) => self.static_tri(i, shadow).not(),
            CondTree::Leaf(leaf) => match self.static_primitive(&leaf.primitive, shadow) {
                Some((b, _)) => Tri::from_bool(b),
                None => Tri::Maybe,
            },
        }
    }

    /// Shadows where the pointcut could match in some dynamic context.
    pub fn static_shadows(&self, tree: &CondTree) -> BTreeSet<ShadowId> {
        self.table
            .shadows
            .iter()
            .filter(|s| self.static_tri(tree, s) != Tri::False)
            .map(|s| s.id)
            .collect()
    }

    /// Plain boolean evaluation of a cflow body at one stack entry;
    /// dynamic leaves count as false.
    fn static_bool(&self, tree: &CondTree, shadow: &Shadow) -> bool {
        match tree {
            CondTree::And(l, r) => {
                let a = self.static_bool(l, shadow);
                let b = self.static_bool(r, shadow);
                a && b
            }
            CondTree::Or(l, r) => {
                let a = self.static_bool(l, shadow);
                let b = self.static_bool(r, shadow);
                a || b
            }
            CondTree::Not(i) => !self.static_bool(i, shadow),
            CondTree::Leaf(leaf) => self
                .static_primitive(&leaf.primitive, shadow)
                .is_some_and(|(b, _)| b),
        }
    }

    fn record(&self, leaf: &Leaf, witnesses: Vec<Witness>, out: &mut MatchOutcome) {
        for (star, w) in witnesses.into_iter().enumerate() {
            out.witnesses.push((
                WildcardSite {
                    owner: leaf.owner.clone(),
                    primitive: leaf.index,
                    star,
                },
                w,
            ));
        }
    }

    fn probe(&self, leaf: &Leaf, pattern: usize, presented: &str, out: &mut MatchOutcome) {
        out.probes.push(HierarchyProbe {
            owner: leaf.owner.clone(),
            primitive: leaf.index,
            pattern,
            presented: presented.to_string(),
        });
    }

    fn probes_for(&self, leaf: &Leaf, shadow: &Shadow, jp: &JoinPoint, out: &mut MatchOutcome) {
        let patterns = leaf.primitive.type_patterns();
        if !patterns.iter().any(|p| p.subtypes) {
            return;
        }
        let sig_types = |sig: &Signature| [sig.return_type.clone(), Some(sig.declaring_type.clone())];
        let presented: Vec<Option<String>> = match &leaf.primitive {
            Primitive::Call(_) if shadow.kind == ShadowKind::Call => sig_types(&shadow.signature).to_vec(),
            Primitive::Execution(_) if shadow.kind == ShadowKind::Execution => sig_types(&shadow.signature).to_vec(),
            Primitive::Withincode(_) => sig_types(&shadow.enclosing_method).to_vec(),
            Primitive::Within(_) => vec![Some(shadow.enclosing_type.clone())],
            Primitive::This(_) => vec![jp.this.as_ref().map(|o| o.class.clone())],
            Primitive::Target(_) => vec![jp.target.as_ref().map(|o| o.class.clone())],
            _ => Vec::new(),
        };
        for (i, (p, t)) in patterns.iter().zip(presented).enumerate() {
            if let (true, Some(t)) = (p.subtypes, t) {
                self.probe(leaf, i, &t, out);
            }
        }
    }

    fn eval_leaf(&self, leaf: &Leaf, jp: &JoinPoint, out: &mut MatchOutcome) -> bool {
        let shadow = self.table.get(jp.shadow);
        self.probes_for(leaf, shadow, jp, out);
        let object_test = |arg: &BindArg, obj: Option<&ObjectRef>, out: &mut MatchOutcome| -> bool {
            match (arg, obj) {
                (_, None) => {
                    if let BindArg::Type(t) = arg {
                        self.record(leaf, vec![Witness::NoMatch; t.star_count()], out);
                    }
                    false
                }
                (BindArg::Var(v), Some(o)) => {
                    let ok = leaf.bind_type.as_deref().is_none_or(|t| self.is_subtype(&o.class, t));
                    if ok {
                        out.bindings.entry(v.clone()).or_insert_with(|| o.clone());
                    }
                    ok
                }
                (BindArg::Type(t), Some(o)) => {
                    let (ok, w) = self.match_type(t, &o.class);
                    self.record(leaf, w, out);
                    ok
                }
            }
        };
        match &leaf.primitive {
            Primitive::This(arg) => object_test(arg, jp.this.as_ref(), out),
            Primitive::Target(arg) => object_test(arg, jp.target.as_ref(), out),
            Primitive::Cflow(_) => {
                let inner = leaf.cflow.as_deref().expect("cflow leaf carries its body");
                let hit = jp
                    .stack
                    .iter()
                    .map(|id| self.table.get(*id))
                    .find(|s| self.static_bool(inner, s));
                let inner_leaves = leaves(inner);
                for l in inner_leaves {
                    let w = match hit.and_then(|s| self.static_primitive(&l.primitive, s)) {
                        Some((true, w)) => w,
                        _ => vec![Witness::NoMatch; l.primitive.star_count()],
                    };
                    self.record(l, w, out);
                }
                hit.is_some()
            }
            p => {
                let (ok, w) = self.static_primitive(p, shadow).expect("static primitive");
                self.record(leaf, w, out);
                ok
            }
        }
    }

    /// Evaluates every condition (no short-circuit) at a join point.
    pub fn evaluate(&self, pc: &CompiledPointcut, jp: &JoinPoint) -> MatchOutcome {
        let mut out = MatchOutcome {
            matched: false,
            vector: Vec::with_capacity(pc.conditions.len()),
            witnesses: Vec::new(),
            probes: Vec::new(),
            bindings: BTreeMap::new(),
        };
        let mut raw = Vec::with_capacity(pc.conditions.len());
        for c in &pc.conditions {
            let v = self.eval_leaf(&c.leaf, jp, &mut out);
            raw.push(v);
            out.vector.push(v != c.negated);
        }
        out.matched = pc.tree.eval_raw(&raw);
        if !out.matched {
            out.bindings.clear();
        }
        out
    }
}

fn leaves(tree: &CondTree) -> Vec<&Leaf> {
    fn go<'a>(t: &'a CondTree, out: &mut Vec<&'a Leaf>) {
        match t {
            CondTree::And(l, r) | CondTree::Or(l, r) => {
                go(l, out);
                go(r, out);
            }
            CondTree::Not(i) => go(i, out),
            CondTree::Leaf(l) => {
                out.push(l);
                if let Some(inner) = &l.cflow {
                    go(inner, out);
                }
            }
        }
    }
    let mut out = Vec::new();
    go(tree, &mut out);
    out
}

/// Matches one type pattern against a type name of `model`.
pub fn match_type_pattern(pattern: &TypePattern, type_name: &str, model: &ProgramModel) -> (bool, Vec<Witness>) {
    Matcher::new(model).match_type(pattern, type_name)
}

/// Shadow ids of `model` at which `expr` could match.
pub fn static_shadows(
    model: &ProgramModel,
    expr: &PointcutExpr,
    scope: &dyn PointcutScope,
) -> Result<BTreeSet<ShadowId>, PointcutError> {
    let tree = inline(expr, "", &[], scope)?;
    Ok(Matcher::new(model).static_shadows(&tree))
}

/// One-off dynamic evaluation of `expr` at a join point.
pub fn eval_pointcut(
    expr: &PointcutExpr,
    jp: &JoinPoint,
    model: &ProgramModel,
    scope: &dyn PointcutScope,
) -> Result<MatchOutcome, PointcutError> {
    let pc = CompiledPointcut::compile(expr, "", &[], scope)?;
    Ok(Matcher::new(model).evaluate(&pc, jp))
}
