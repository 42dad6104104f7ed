//! Mutation operators over aspect definitions and trace-based mutation
//! analysis.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aspect::{load_aspects, AspectDef, AspectError, Woven};
use crate::interp::Runtime;
use crate::matcher::Matcher;
use crate::model::{ProgramModel, Stmt, TypeKind};
use crate::pointcut::{NamePattern, Param, PointcutExpr, Primitive, TypeSegment};
use crate::scenario::Scenario;
use crate::trace::{compare_traces, AdviceKind, Comparison, ShadowId, TracePattern};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Operator {
    ItdMn,
    ItdCt,
    ItdPd,
    ItdOr,
    ItdOp,
    PcPp,
    PcLo,
    PcPt,
    AdvKs,
    AdvPr,
    AdvPc,
    AdvSt,
}

impl Operator {
    pub const ALL: [Operator; 12] = [
        Operator::ItdMn,
        Operator::ItdCt,
        Operator::ItdPd,
        Operator::ItdOr,
        Operator::ItdOp,
        Operator::PcPp,
        Operator::PcLo,
        Operator::PcPt,
        Operator::AdvKs,
        Operator::AdvPr,
        Operator::AdvPc,
        Operator::AdvSt,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Operator::ItdMn => "ITD-MN",
            Operator::ItdCt => "ITD-CT",
            Operator::ItdPd => "ITD-PD",
            Operator::ItdOr => "ITD-OR",
            Operator::ItdOp => "ITD-OP",
            Operator::PcPp => "PC-PP",
            Operator::PcLo => "PC-LO",
            Operator::PcPt => "PC-PT",
            Operator::AdvKs => "ADV-KS",
            Operator::AdvPr => "ADV-PR",
            Operator::AdvPc => "ADV-PC",
            Operator::AdvSt => "ADV-ST",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Operator::ItdMn => "append `_m` to an introduced method name",
            Operator::ItdCt => "retarget an introduction to a sibling of its target class",
            Operator::ItdPd => "replace the interface of a parent declaration",
            Operator::ItdOr => "swap the bodies of same-named introductions on sibling classes",
            Operator::ItdOp => "delete a parent declaration",
            Operator::PcPp => "swap call and execution",
            Operator::PcLo => "swap && and ||, or toggle a negation and drop negated conjuncts",
            Operator::PcPt => "widen a literal pattern segment to `*`, toggle `+`, or drop a `..`",
            Operator::AdvKs => "rotate advice kind before, after, after-returning",
            Operator::AdvPr => "delete or duplicate `proceed` in around advice",
            Operator::AdvPc => "reverse or delete `declare precedence`",
            Operator::AdvSt => "delete one advice body statement",
        }
    }

    /// The fault-model bullet this operator realizes.
    pub fn fault(self) -> &'static str {
        match self {
            Operator::ItdMn => "Wrong method name in introduction",
            Operator::ItdCt => "Wrong class name in a member-introduction",
            Operator::ItdPd => "Inconsistent parent declaration",
            Operator::ItdOr => "Inconsistent overridden method introduction",
            Operator::ItdOp => "Omitted parent interface",
            Operator::PcPp => "Wrong primitive pointcut",
            Operator::PcLo => "Errors in the conditional logic",
            Operator::PcPt => "Wrong type, method, field, or constructor pattern in pointcut",
            Operator::AdvKs => "Wrong advice specification",
            Operator::AdvPr => "Wrong or missing proceed in around advice",
            Operator::AdvPc => "Wrong or missing advice precedence",
            Operator::AdvSt => "Advice code causing a method to break its class invariant or to fail to meet its postcondition",
        }
    }

    /// How faithfully the operator covers its bullet.
    pub fn note(self) -> &'static str {
        match self {
            Operator::ItdPd => "structural half only; behavioral subtyping is judged by trace oracles",
            Operator::ItdOr => "behavioral subtyping judged by trace oracles",
            Operator::PcPt => "type and method patterns only; fields and constructors are not modeled",
            Operator::AdvSt => "surrogate: invariants and postconditions are not modeled, so statements are removed instead",
            _ => "direct",
        }
    }
}

impl fmt::Display for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Operator {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Operator::ALL
            .into_iter()
            .find(|o| o.id().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown mutation operator `{}`", s))
    }
}

/// Markdown traceability table: operator, fault-model bullet, coverage note.
pub fn traceability_table() -> String {
    let mut out = String::from("| Operator | Fault | Realization |\n|---|---|---|\n");
    for op in Operator::ALL {
        out.push_str(&format!("| {} | {} | {} |\n", op.id(), op.fault(), op.note()));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum MutantStatus {
    Pending,
    Stillborn(String),
    Survived,
    Killed { scenario: String, index: usize },
    FlaggedEquivalent,
}

impl MutantStatus {
    pub fn label(&self) -> &'static str {
        match self {
            MutantStatus::Pending => "pending",
            MutantStatus::Stillborn(_) => "stillborn",
            MutantStatus::Survived => "survived",
            MutantStatus::Killed { .. } => "killed",
            MutantStatus::FlaggedEquivalent => "flagged-equivalent",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mutant {
    pub id: String,
    pub operator: Operator,
    pub location: String,
    pub delta: String,
    pub aspects: Vec<AspectDef>,
    pub status: MutantStatus,
}

impl Mutant {
    /// `id  operator  location  delta  status  killer` as one TSV row.
    pub fn tsv_row(&self) -> String {
        let killer = match &self.status {
            MutantStatus::Killed { scenario, index } => format!("{}@{}", scenario, index),
            _ => "-".into(),
        };
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}",
            self.id,
            self.operator,
            self.location,
            self.delta,
            self.status.label(),
            killer
        )
    }
}

pub const TSV_HEADER: &str = "id\toperator\tlocation\tdelta\tstatus\tkiller";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MutationScore {
    pub killed: usize,
    pub survived: usize,
    pub stillborn: usize,
    pub flagged: usize,
}

impl MutationScore {
    pub fn of(mutants: &[Mutant]) -> MutationScore {
        let mut s = MutationScore::default();
        for m in mutants {
            match m.status {
                MutantStatus::Killed { .. } => s.killed += 1,
                MutantStatus::Survived | MutantStatus::Pending => s.survived += 1,
                MutantStatus::Stillborn(_) => s.stillborn += 1,
                MutantStatus::FlaggedEquivalent => s.flagged += 1,
            }
        }
        s
    }

    /// `None` when no mutant was killed or survived.
    pub fn score(&self) -> Option<f64> {
        let d = self.killed + self.survived;
        (d > 0).then(|| self.killed as f64 / d as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MutationError {
    #[error(transparent)]
    Aspect(#[from] AspectError),
    #[error("scenario {0}")]
    Scenario(String),
    #[error("baseline fails scenario `{scenario}` at event {index}")]
    BaselineFails { scenario: String, index: usize },
    #[error("baseline was computed for model {found}, current model is {expected}")]
    StaleBaseline { expected: String, found: String },
}

/// Mutation settings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MutationConfig {
    pub operators: Vec<Operator>,
    /// Cap on ITD-CT siblings and ITD-PD replacement interfaces.
    pub sibling_cap: usize,
}

impl Default for MutationConfig {
    fn default() -> Self {
        MutationConfig {
            operators: Operator::ALL.to_vec(),
            sibling_cap: 3,
        }
    }
}

/// Identifies one pointcut text inside an aspect.
#[derive(Debug, Clone, Copy)]
enum PcRef {
    Named(usize),
    Advice(usize),
}

fn pc_texts(a: &AspectDef) -> Vec<(PcRef, String, &PointcutExpr)> {
    let mut out: Vec<(PcRef, String, &PointcutExpr)> = a
        .pointcuts
        .iter()
        .enumerate()
        .map(|(i, p)| (PcRef::Named(i), format!("pointcut {}", p.name), &p.expr))
        .collect();
    out.extend(
        a.advice
            .iter()
            .enumerate()
            .map(|(i, adv)| (PcRef::Advice(i), format!("advice {}", i), &adv.pointcut)),
    );
    out
}

fn pc_mut(a: &mut AspectDef, r: PcRef) -> &mut PointcutExpr {
    match r {
        PcRef::Named(i) => &mut a.pointcuts[i].expr,
        PcRef::Advice(i) => &mut a.advice[i].pointcut,
    }
}

/// Applies `f` to the primitive at pre-order `index` (see
/// `PointcutExpr::primitives`).
fn edit_primitive(expr: &mut PointcutExpr, index: usize, f: &mut dyn FnMut(&mut Primitive)) {
    fn go(e: &mut PointcutExpr, index: usize, next: &mut usize, f: &mut dyn FnMut(&mut Primitive)) {
        match e {
            PointcutExpr::And(l, r) | PointcutExpr::Or(l, r) => {
                go(l, index, next, f);
                go(r, index, next, f);
            }
            PointcutExpr::Not(i) => go(i, index, next, f),
            PointcutExpr::Named { .. } => {}
            PointcutExpr::Prim(p) => {
                if *next == index {
                    f(p);
                }
                *next += 1;
                if let Primitive::Cflow(inner) = p {
                    go(inner, index, next, f);
                }
            }
        }
    }
    go(expr, index, &mut 0, f)
}

/// Toggles the negation directly around the primitive at `index`; returns
/// whether a negation was removed.
fn toggle_not(expr: &mut PointcutExpr, index: usize) -> bool {
    fn go(e: &mut PointcutExpr, index: usize, next: &mut usize, removed: &mut Option<bool>) {
        if removed.is_some() {
            return;
        }
        if let PointcutExpr::Not(inner) = e {
            if let PointcutExpr::Prim(p) = inner.as_mut() {
                if *next == index {
                    let p = p.clone();
                    *e = PointcutExpr::Prim(p);
                    *removed = Some(true);
                    return;
                }
            }
        }
        match e {
            PointcutExpr::And(l, r) | PointcutExpr::Or(l, r) => {
                go(l, index, next, removed);
                go(r, index, next, removed);
            }
            PointcutExpr::Not(i) => go(i, index, next, removed),
            PointcutExpr::Named { .. } => {}
            PointcutExpr::Prim(p) => {
                if *next == index {
                    let wrapped = PointcutExpr::not(PointcutExpr::Prim(p.clone()));
                    *e = wrapped;
                    *removed = Some(false);
                    return;
                }
                *next += 1;
                if let Primitive::Cflow(inner) = p {
                    go(inner, index, next, removed);
                }
            }
        }
    }
    let mut removed = None;
    go(expr, index, &mut 0, &mut removed);
    removed.unwrap_or(false)
}

/// Removes the conjunct `!p` where `p` is the primitive at `index`, keeping
/// the other side of the `&&`; returns the removed conjunct's text.
fn drop_negated_conjunct(expr: &mut PointcutExpr, index: usize) -> Option<String> {
    fn negated_index(e: &PointcutExpr, next: usize) -> Option<usize> {
        match e {
            PointcutExpr::Not(i) => matches!(i.as_ref(), PointcutExpr::Prim(_)).then_some(next),
            _ => None,
        }
    }
    fn count(e: &PointcutExpr) -> usize {
        e.primitives().len()
    }
    fn go(e: &mut PointcutExpr, index: usize, next: &mut usize) -> Option<String> {
        if let PointcutExpr::And(l, r) = e {
            let left = *next;
            let right = left + count(l);
            if negated_index(r, right) == Some(index) {
                let text = r.to_string();
                *e = (**l).clone();
                return Some(text);
            }
            if negated_index(l, left) == Some(index) {
                let text = l.to_string();
                *e = (**r).clone();
                return Some(text);
            }
        }
        match e {
            PointcutExpr::And(l, r) | PointcutExpr::Or(l, r) => {
                if let Some(t) = go(l, index, next) {
                    return Some(t);
                }
                go(r, index, next)
            }
            PointcutExpr::Not(i) => go(i, index, next),
            PointcutExpr::Named { .. } => None,
            PointcutExpr::Prim(p) => {
                *next += 1;
                match p {
                    Primitive::Cflow(inner) => go(inner, index, next),
                    _ => None,
                }
            }
        }
    }
    go(expr, index, &mut 0)
}

fn binary_count(expr: &PointcutExpr) -> usize {
    match expr {
        PointcutExpr::And(l, r) | PointcutExpr::Or(l, r) => 1 + binary_count(l) + binary_count(r),
        PointcutExpr::Not(i) => binary_count(i),
        PointcutExpr::Prim(Primitive::Cflow(i)) => binary_count(i),
        _ => 0,
    }
}

/// Swaps `&&`/`||` at the binary node with pre-order `index`; returns the
/// new operator.
fn swap_binary(expr: &mut PointcutExpr, index: usize) -> &'static str {
    fn go(e: &mut PointcutExpr, index: usize, next: &mut usize, out: &mut &'static str) {
        match e {
            PointcutExpr::And(l, r) | PointcutExpr::Or(l, r) => {
                if *next == index {
                    let (l, r) = (l.clone(), r.clone());
                    *e = match e {
                        PointcutExpr::And(..) => {
                            *out = "&& -> ||";
                            PointcutExpr::Or(l, r)
                        }
                        _ => {
                            *out = "|| -> &&";
                            PointcutExpr::And(l, r)
                        }
                    };
                    *next += 1;
                    return;
                }
                *next += 1;
                go(l, index, next, out);
                go(r, index, next, out);
            }
            PointcutExpr::Not(i) => go(i, index, next, out),
            PointcutExpr::Prim(Primitive::Cflow(i)) => go(i, index, next, out),
            _ => {}
        }
    }
    let mut out = "";
    go(expr, index, &mut 0, &mut out);
    out
}

/// Pattern edits of one primitive: (pattern label, edit description, new
/// primitive).
fn pattern_edits(p: &Primitive) -> Vec<(String, String, Primitive)> {
    let mut out = Vec::new();
    let labels: &[&str] = match p {
        Primitive::Call(_) | Primitive::Execution(_) | Primitive::Withincode(_) => &["return", "declaring"],
        _ => &["type"],
    };
    let count = p.type_patterns().len();
    for ti in 0..count {
        let pattern = p.type_patterns()[ti].clone();
        let label = labels[ti];
        for (si, seg) in pattern.segments.iter().enumerate() {
            if let TypeSegment::Name(n) = seg {
                if n.is_literal() {
                    let mut q = p.clone();
                    q.type_patterns_mut()[ti].segments[si] = TypeSegment::Name(NamePattern::star());
                    out.push((label.to_string(), format!("{} -> *", n.text()), q));
                }
            }
        }
        if label != "return" {
            let mut q = p.clone();
            let t = &mut q.type_patterns_mut()[ti];
            t.subtypes = !t.subtypes;
            let delta = if t.subtypes { "add +" } else { "drop +" };
            out.push((label.to_string(), delta.to_string(), q));
        }
        for (si, seg) in pattern.segments.iter().enumerate() {
            if *seg == TypeSegment::AnyPackage {
                let mut q = p.clone();
                q.type_patterns_mut()[ti].segments.remove(si);
                out.push((label.to_string(), format!("drop .. at {}", si), q));
            }
        }
    }
    if let Primitive::Call(m) | Primitive::Execution(m) | Primitive::Withincode(m) = p {
        if m.name.is_literal() {
            let mut q = p.clone();
            if let Primitive::Call(m) | Primitive::Execution(m) | Primitive::Withincode(m) = &mut q {
                m.name = NamePattern::star();
            }
            out.push(("name".to_string(), format!("{} -> *", m.name.text()), q));
        }
    }
    out
}

fn stmt_paths(body: &[Stmt]) -> Vec<(String, Stmt)> {
    let mut out = Vec::new();
    Stmt::walk(body, &mut |path, s| out.push((path.to_string(), s.clone())));
    out
}

/// Edits the statement list containing `path`, calling `f` with the list and
/// the final index.
fn edit_at(body: &mut Vec<Stmt>, path: &str, f: &mut dyn FnMut(&mut Vec<Stmt>, usize)) {
    let parts: Vec<&str> = path.split('.').collect();
    let mut list = body;
    let mut i = 0;
    while i + 1 < parts.len() {
        let idx: usize = parts[i].parse().expect("path index");
        let arm = parts[i + 1];
        list = match &mut list[idx] {
            Stmt::IfType {
                then_body, else_body, ..
            } => {
                if arm == "then" {
                    then_body
                } else {
                    else_body
                }
            }
            _ => unreachable!("paths only descend through if statements"),
        };
        i += 2;
    }
    let idx: usize = parts[i].parse().expect("path index");
    f(list, idx);
}

fn short(stmt: &Stmt) -> String {
    let text = crate::model::stmt::inline_body(std::slice::from_ref(stmt));
    if text.chars().count() > 40 {
        format!("{}...", text.chars().take(37).collect::<String>())
    } else {
        text
    }
}

/// Siblings of a class: other classes with the same superclass, by name.
fn siblings(model: &ProgramModel, target: &str) -> Vec<String> {
    let Some(name) = model.resolve_type(target) else {
        return Vec::new();
    };
    let Some(decl) = model.get(&name) else {
        return Vec::new();
    };
    model
        .types
        .values()
        .filter(|d| d.is_class() && d.name != name && d.extends == decl.extends)
        .map(|d| d.name.clone())
        .collect()
}

struct Draft {
    operator: Operator,
    location: String,
    delta: String,
    aspects: Vec<AspectDef>,
}

/// Enumerates mutants in a fixed order: operator, aspect, element. Mutants
/// whose aspects no longer load or weave are stillborn.
pub fn generate_mutants(aspects: &[AspectDef], model: &ProgramModel, config: &MutationConfig) -> Vec<Mutant> {
    let mut drafts = Vec::new();
    for &op in &config.operators {
        for (ai, a) in aspects.iter().enumerate() {
            let mut push = |location: String, delta: String, mutated: AspectDef| {
                let mut set = aspects.to_vec();
                set[ai] = mutated;
                drafts.push(Draft {
                    operator: op,
                    location: format!("{}/{}", a.name, location),
                    delta,
                    aspects: set,
                });
            };
            mutate_aspect(op, a, model, config, &mut push);
        }
    }
    drafts
        .into_iter()
        .enumerate()
        .map(|(i, d)| {
            let status = match viability(&d.aspects, model) {
                Ok(()) => MutantStatus::Pending,
                Err(e) => MutantStatus::Stillborn(e),
            };
            Mutant {
                id: format!("M{:04}", i + 1),
                operator: d.operator,
                location: d.location,
                delta: d.delta,
                aspects: d.aspects,
                status,
            }
        })
        .collect()
}

/// A mutant must survive printing and reloading and must weave.
fn viability(aspects: &[AspectDef], model: &ProgramModel) -> Result<(), String> {
    let text: String = aspects.iter().map(|a| a.to_string()).collect();
    let reloaded = load_aspects(&text).map_err(|e| e.to_string())?;
    if reloaded != aspects {
        return Err("mutant does not print back to itself".into());
    }
    Woven::new(model, aspects).map(|_| ()).map_err(|e| e.to_string())
}

fn mutate_aspect(
    op: Operator,
    a: &AspectDef,
    model: &ProgramModel,
    config: &MutationConfig,
    push: &mut dyn FnMut(String, String, AspectDef),
) {
    match op {
        Operator::ItdMn => {
            for (i, intro) in a.introductions.iter().enumerate() {
                let mut m = a.clone();
                m.introductions[i].method.name.push_str("_m");
                push(
                    format!("introduce {}.{}", intro.target, intro.method.name),
                    format!("{} -> {}_m", intro.method.name, intro.method.name),
                    m,
                );
            }
        }
        Operator::ItdCt => {
            for (i, intro) in a.introductions.iter().enumerate() {
                for s in siblings(model, &intro.target).into_iter().take(config.sibling_cap) {
                    let mut m = a.clone();
                    m.introductions[i].target = s.clone();
                    push(
                        format!("introduce {}.{}", intro.target, intro.method.name),
                        format!("{} -> {}", intro.target, s),
                        m,
                    );
                }
            }
        }
        Operator::ItdPd => {
            let current = |name: &str| model.resolve_type(name).unwrap_or_else(|| name.to_string());
            for (i, dp) in a.declare_parents.iter().enumerate() {
                let own = current(&dp.interface);
                let others = model
                    .types
                    .values()
                    .filter(|d| d.kind == TypeKind::Interface && d.name != own)
                    .take(config.sibling_cap);
                for other in others {
                    let mut m = a.clone();
                    m.declare_parents[i].interface = other.name.clone();
                    push(
                        format!("declare parents {}", i),
                        format!("{} -> {}", dp.interface, other.name),
                        m,
                    );
                }
            }
        }
        Operator::ItdOr => {
            let n = a.introductions.len();
            for i in 0..n {
                for j in i + 1..n {
                    let (x, y) = (&a.introductions[i], &a.introductions[j]);
                    if x.method.name != y.method.name || x.method.arity() != y.method.arity() {
                        continue;
                    }
                    if !siblings(model, &x.target).contains(&model.resolve_type(&y.target).unwrap_or_default()) {
                        continue;
                    }
                    let mut m = a.clone();
                    let body = m.introductions[i].method.body.clone();
                    m.introductions[i].method.body = m.introductions[j].method.body.clone();
                    m.introductions[j].method.body = body;
                    push(
                        format!("introduce {}", x.method.name),
                        format!("swap bodies {} <-> {}", x.target, y.target),
                        m,
                    );
                }
            }
        }
        Operator::ItdOp => {
            for (i, dp) in a.declare_parents.iter().enumerate() {
                let mut m = a.clone();
                m.declare_parents.remove(i);
                push(
                    format!("declare parents {}", i),
                    format!("delete {} implements {}", dp.pattern, dp.interface),
                    m,
                );
            }
        }
        Operator::PcPp => {
            for (r, label, expr) in pc_texts(a) {
                for (pi, p) in expr.primitives().into_iter().enumerate() {
                    let (from, to) = match p {
                        Primitive::Call(_) => ("call", "execution"),
                        Primitive::Execution(_) => ("execution", "call"),
                        _ => continue,
                    };
                    let mut m = a.clone();
                    edit_primitive(pc_mut(&mut m, r), pi, &mut |p| {
                        *p = match p.clone() {
                            Primitive::Call(mp) => Primitive::Execution(mp),
                            Primitive::Execution(mp) => Primitive::Call(mp),
                            other => other,
                        }
                    });
                    push(format!("{}/prim {}", label, pi), format!("{} -> {}", from, to), m);
                }
            }
        }
        Operator::PcLo => {
            for (r, label, expr) in pc_texts(a) {
                for ni in 0..binary_count(expr) {
                    let mut m = a.clone();
                    let delta = swap_binary(pc_mut(&mut m, r), ni);
                    push(format!("{}/node {}", label, ni), delta.to_string(), m);
                }
                for pi in 0..expr.primitives().len() {
                    let mut m = a.clone();
                    let removed = toggle_not(pc_mut(&mut m, r), pi);
                    let delta = if removed { "drop !" } else { "add !" };
                    push(format!("{}/prim {}", label, pi), delta.to_string(), m);
                }
                for pi in 0..expr.primitives().len() {
                    let mut m = a.clone();
                    if let Some(text) = drop_negated_conjunct(pc_mut(&mut m, r), pi) {
                        push(format!("{}/prim {}/clause", label, pi), format!("drop && {}", text), m);
                    }
                }
            }
        }
        Operator::PcPt => {
            for (r, label, expr) in pc_texts(a) {
                for (pi, p) in expr.primitives().into_iter().enumerate() {
                    for (which, delta, q) in pattern_edits(p) {
                        let mut m = a.clone();
                        edit_primitive(pc_mut(&mut m, r), pi, &mut |slot| *slot = q.clone());
                        push(format!("{}/prim {}/{}", label, pi, which), delta, m);
                    }
                }
            }
        }
        Operator::AdvKs => {
            for (i, adv) in a.advice.iter().enumerate() {
                let next = match adv.kind {
                    AdviceKind::Before => AdviceKind::After,
                    AdviceKind::After => AdviceKind::AfterReturning,
                    AdviceKind::AfterReturning => AdviceKind::Before,
                    AdviceKind::Around => continue,
                };
                let mut m = a.clone();
                m.advice[i].kind = next;
                push(
                    format!("advice {}", i),
                    format!("{} -> {}", adv.kind.keyword(), next.keyword()),
                    m,
                );
            }
        }
        Operator::AdvPr => {
            for (i, adv) in a.advice.iter().enumerate() {
                if adv.kind != AdviceKind::Around {
                    continue;
                }
                for (path, s) in stmt_paths(&adv.body) {
                    if s != Stmt::Proceed {
                        continue;
                    }
                    let mut m = a.clone();
                    edit_at(&mut m.advice[i].body, &path, &mut |list, k| {
                        list.remove(k);
                    });
                    push(format!("advice {}/stmt {}", i, path), "delete proceed".into(), m);
                    let mut m = a.clone();
                    edit_at(&mut m.advice[i].body, &path, &mut |list, k| list.insert(k, Stmt::Proceed));
                    push(format!("advice {}/stmt {}", i, path), "duplicate proceed".into(), m);
                }
            }
        }
        Operator::AdvPc => {
            if let Some(list) = &a.precedence {
                if list.len() > 1 {
                    let mut m = a.clone();
                    if let Some(l) = &mut m.precedence {
                        l.reverse();
                    }
                    push("declare precedence".into(), "reverse".into(), m);
                }
                let mut m = a.clone();
                m.precedence = None;
                push("declare precedence".into(), "delete".into(), m);
            }
        }
        Operator::AdvSt => {
            for (i, adv) in a.advice.iter().enumerate() {
                for (path, s) in stmt_paths(&adv.body) {
                    if s == Stmt::Proceed {
                        continue;
                    }
                    let mut m = a.clone();
                    edit_at(&mut m.advice[i].body, &path, &mut |list, k| {
                        list.remove(k);
                    });
                    push(format!("advice {}/stmt {}", i, path), format!("delete `{}`", short(&s)), m);
                }
            }
        }
    }
}

/// Expected behavior of the unmutated program: one oracle per scenario.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Baseline {
    pub model_hash: String,
    pub oracles: Vec<(String, Vec<TracePattern>)>,
}

/// Runs the unmutated aspects. A scenario with an expected trace must pass
/// it; one without gets the observed trace as its oracle.
pub fn compute_baseline(model: &ProgramModel, aspects: &[AspectDef], scenarios: &[Scenario]) -> Result<Baseline, MutationError> {
    let woven = Woven::new(model, aspects)?;
    let rt = Runtime::new(&woven)?;
    let mut oracles = Vec::new();
    for s in scenarios {
        let s = s.resolve(&woven.model).map_err(MutationError::Scenario)?;
        let run = rt.run(&s, false);
        if run.error.is_some() {
            return Err(MutationError::BaselineFails {
                scenario: s.name.clone(),
                index: run.trace.events.len(),
            });
        }
        let oracle = match &s.expected {
            Some(exp) => {
                if let Comparison::Diverged { index } = compare_traces(&run.trace.events, exp) {
                    return Err(MutationError::BaselineFails {
                        scenario: s.name.clone(),
                        index,
                    });
                }
                exp.clone()
            }
            None => run.trace.events.iter().cloned().map(TracePattern::Event).collect(),
        };
        oracles.push((s.name.clone(), oracle));
    }
    Ok(Baseline {
        model_hash: woven.model.fingerprint(),
        oracles,
    })
}

/// Everything the equivalence heuristic compares.
#[derive(Debug, PartialEq, Eq)]
struct StaticShape {
    model: ProgramModel,
    named: BTreeMap<String, BTreeSet<ShadowId>>,
    advice: BTreeMap<ShadowId, Vec<(String, AdviceKind, Vec<Param>, Vec<Stmt>)>>,
}

fn static_shape(woven: &Woven) -> Result<StaticShape, AspectError> {
    let m = Matcher::new(&woven.model);
    let mut named = BTreeMap::new();
    let mut entries = Vec::new();
    for a in woven.aspects.iter().filter(|a| !a.is_abstract) {
        for pc in &a.pointcuts {
            named.insert(a.pointcut_owner(&pc.name), m.static_shadows(&a.pointcut_tree(&pc.name)?));
        }
        for (i, adv) in a.advice.iter().enumerate() {
            let rank = crate::interp::precedence_rank(&woven.aspects, &a.name);
            let kind = match adv.kind {
                AdviceKind::AfterReturning => AdviceKind::After,
                k => k,
            };
            for s in m.static_shadows(&a.advice_tree(i)?) {
                entries.push(((rank, a.name.clone(), i), s, (a.name.clone(), kind, adv.params.clone(), adv.body.clone())));
            }
        }
    }
    entries.sort_by(|x, y| x.0.cmp(&y.0));
    let mut advice: BTreeMap<ShadowId, Vec<_>> = BTreeMap::new();
    for (_, s, sig) in entries {
        advice.entry(s).or_default().push(sig);
    }
    Ok(StaticShape {
        model: woven.model.clone(),
        named,
        advice,
    })
}

fn judge(mutant: &Mutant, model: &ProgramModel, scenarios: &[Scenario], baseline: &Baseline, shape: &StaticShape) -> MutantStatus {
    let woven = match Woven::new(model, &mutant.aspects) {
        Ok(w) => w,
        Err(e) => return MutantStatus::Stillborn(e.to_string()),
    };
    let rt = match Runtime::new(&woven) {
        Ok(rt) => rt,
        Err(e) => return MutantStatus::Stillborn(e.to_string()),
    };
    for (s, (name, oracle)) in scenarios.iter().zip(&baseline.oracles) {
        let s = match s.resolve(&woven.model) {
            Ok(s) => s,
            Err(e) => return MutantStatus::Stillborn(e),
        };
        let run = rt.run(&s, false);
        let verdict = compare_traces(&run.trace.events, oracle);
        match (verdict, &run.error) {
            (Comparison::Diverged { index }, _) => {
                return MutantStatus::Killed {
                    scenario: name.clone(),
                    index,
                }
            }
            (Comparison::Pass, Some(_)) => {
                return MutantStatus::Killed {
                    scenario: name.clone(),
                    index: run.trace.events.len(),
                }
            }
            (Comparison::Pass, None) => {}
        }
    }
    match static_shape(&woven) {
        Ok(mine) if &mine == shape => MutantStatus::FlaggedEquivalent,
        _ => MutantStatus::Survived,
    }
}

/// Runs every pending mutant against the baseline oracles, in parallel,
/// keeping mutant order.
pub fn run_mutation_analysis(
    model: &ProgramModel,
    aspects: &[AspectDef],
    scenarios: &[Scenario],
    baseline: &Baseline,
    mutants: &mut [Mutant],
) -> Result<MutationScore, MutationError> {
    let woven = Woven::new(model, aspects)?;
    let hash = woven.model.fingerprint();
    if baseline.model_hash != hash {
        return Err(MutationError::StaleBaseline {
            expected: hash,
            found: baseline.model_hash.clone(),
        });
    }
    if baseline.oracles.len() != scenarios.len()
        || baseline.oracles.iter().zip(scenarios).any(|((n, _), s)| n != &s.name)
    {
        return Err(MutationError::Scenario("baseline scenarios differ from the suite".into()));
    }
    let shape = static_shape(&woven)?;
    let statuses: Vec<Option<MutantStatus>> = mutants
        .par_iter()
        .map(|m| match m.status {
            MutantStatus::Stillborn(_) => None,
            _ => Some(judge(m, model, scenarios, baseline, &shape)),
        })
        .collect();
    for (m, s) in mutants.iter_mut().zip(statuses) {
        if let Some(s) = s {
            m.status = s;
        }
    }
    Ok(MutationScore::of(mutants))
}
