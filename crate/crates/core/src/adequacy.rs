//! Test obligations derived from a woven program and its aspects, and
//! coverage checking against recorded runs.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aspect::{AspectDef, AspectError, Woven};
use crate::interp::{BodyOwner, Execution, PointcutSource};
use crate::matcher::{Matcher, ShadowKind, WildcardSite, Witness};
use crate::model::{ProgramModel, Stmt};
use crate::pointcut::{CondTree, PointcutExpr};
use crate::trace::{ShadowId, TraceEvent};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ConditionMode {
    #[default]
    EachCondition,
    Exhaustive,
}

impl ConditionMode {
    pub fn parse(text: &str) -> Option<ConditionMode> {
        match text {
            "each-condition" | "each" => Some(ConditionMode::EachCondition),
            "exhaustive" | "all" => Some(ConditionMode::Exhaustive),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdequacyConfig {
    pub mode: ConditionMode,
    /// Ties condition vectors to individual shadows.
    pub per_shadow: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AdequacyError {
    #[error("{owner}: unknown type `{name}` in a `+` pattern")]
    UnknownType { owner: String, name: String },
    #[error("run log for scenario `{scenario}` was recorded against model {found}, current model is {expected}")]
    StaleLog {
        scenario: String,
        expected: String,
        found: String,
    },
    #[error("scenario `{0}` was run without recording a match log")]
    MissingLog(String),
    #[error(transparent)]
    Aspect(#[from] AspectError),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ObligationKind {
    ConditionCombo {
        source: PointcutSource,
        shadow: Option<ShadowId>,
        vector: Vec<bool>,
        /// Keyword of each condition, for hints.
        labels: Vec<String>,
    },
    WildcardBoundary {
        site: WildcardSite,
        required: Witness,
    },
    HierarchyBoundary {
        owner: String,
        primitive: usize,
        pattern: usize,
        type_name: String,
        expect_match: bool,
    },
    JoinPointCoverage {
        aspect: String,
        advice: usize,
        shadow: ShadowId,
    },
    AllReceiverClasses {
        shadow: ShadowId,
        class: String,
    },
    AllTargetMethods {
        shadow: ShadowId,
        declaring_type: String,
        method: String,
        arity: usize,
    },
    AdviceBranch {
        owner: BodyOwner,
        branch: String,
    },
}

pub const KIND_NAMES: [&str; 7] = [
    "ConditionCombo",
    "WildcardBoundary",
    "HierarchyBoundary",
    "JoinPointCoverage",
    "AllReceiverClasses",
    "AllTargetMethods",
    "AdviceBranch",
];

impl ObligationKind {
    pub fn name(&self) -> &'static str {
        KIND_NAMES[self.ordinal()]
    }

    fn ordinal(&self) -> usize {
        match self {
            ObligationKind::ConditionCombo { .. } => 0,
            ObligationKind::WildcardBoundary { .. } => 1,
            ObligationKind::HierarchyBoundary { .. } => 2,
            ObligationKind::JoinPointCoverage { .. } => 3,
            ObligationKind::AllReceiverClasses { .. } => 4,
            ObligationKind::AllTargetMethods { .. } => 5,
            ObligationKind::AdviceBranch { .. } => 6,
        }
    }

    fn prefix(&self) -> &'static str {
        ["CC", "WB", "HB", "JP", "RC", "TM", "AB"][self.ordinal()]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Status {
    Unmet,
    Met { scenario: String, event: usize },
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Status::Unmet => f.write_str("unmet"),
            Status::Met { scenario, event } => write!(f, "met:{}@{}", scenario, event),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Obligation {
    pub id: String,
    pub kind: ObligationKind,
    pub detail: String,
    pub status: Status,
}

impl fmt::Display for Obligation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}\t{}\t{}\t{}", self.id, self.kind.name(), self.detail, self.status)
    }
}

/// Obligations plus generation-time diagnostics.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ObligationSet {
    pub obligations: Vec<Obligation>,
    pub warnings: Vec<String>,
}

fn source_label(source: &PointcutSource) -> String {
    match source {
        PointcutSource::Named { aspect, name } => format!("{}.{}", aspect, name),
        PointcutSource::Advice { aspect, index } => format!("{}#{}", aspect, index),
    }
}

fn vector_text(v: &[bool]) -> String {
    let cells: Vec<&str> = v.iter().map(|b| if *b { "T" } else { "F" }).collect();
    format!("[{}]", cells.join(","))
}

fn owner_text(owner: &BodyOwner) -> String {
    match owner {
        BodyOwner::Advice { aspect, index } => format!("{}#{}", aspect, index),
        BodyOwner::Introduction { aspect, target, method } => format!("{}:{}.{}", aspect, target, method),
    }
}

fn shadow_text(m: &Matcher, id: ShadowId) -> String {
    let s = m.shadow(id);
    format!(
        "{}:{} {}.{}/{}",
        id.0,
        s.kind.keyword(),
        s.signature.declaring_type,
        s.signature.method,
        s.signature.arity
    )
}

/// Truth vectors required for `n` flattened conditions.
pub fn condition_vectors(n: usize, mode: ConditionMode) -> Vec<Vec<bool>> {
    match mode {
        ConditionMode::Exhaustive => (0..1usize << n)
            .map(|bits| (0..n).map(|i| bits >> (n - 1 - i) & 1 == 0).collect())
            .collect(),
        ConditionMode::EachCondition => {
            let mut out: Vec<Vec<bool>> = (0..n).map(|i| (0..n).map(|j| i == j).collect()).collect();
            let all = vec![true; n];
            if !out.contains(&all) {
                out.push(all);
            }
            out
        }
    }
}

/// Pointcuts whose conditions are tracked: every named pointcut and every
/// advice not written as a bare named reference.
fn condition_sources(aspects: &[AspectDef]) -> Result<Vec<(PointcutSource, CondTree)>, AspectError> {
    let mut out = Vec::new();
    for a in aspects {
        for pc in &a.pointcuts {
            out.push((
                PointcutSource::Named {
                    aspect: a.name.clone(),
                    name: pc.name.clone(),
                },
                a.pointcut_tree(&pc.name)?,
            ));
        }
        for (i, adv) in a.advice.iter().enumerate() {
            if matches!(adv.pointcut, PointcutExpr::Named { .. }) {
                continue;
            }
            out.push((
                PointcutSource::Advice {
                    aspect: a.name.clone(),
                    index: i,
                },
                a.advice_tree(i)?,
            ));
        }
    }
    Ok(out)
}

pub fn gen_condition_obligations(
    aspects: &[AspectDef],
    matcher: &Matcher,
    config: AdequacyConfig,
) -> Result<Vec<(ObligationKind, String)>, AspectError> {
    let mut out = Vec::new();
    for (source, tree) in condition_sources(aspects)? {
        let labels: Vec<String> = tree
            .conditions()
            .iter()
            .map(|c| format!("{}{}", if c.negated { "!" } else { "" }, c.leaf.primitive.keyword()))
            .collect();
        let vectors = condition_vectors(labels.len(), config.mode);
        let shadows: Vec<Option<ShadowId>> = if config.per_shadow {
            matcher.static_shadows(&tree).into_iter().map(Some).collect()
        } else {
            vec![None]
        };
        for shadow in shadows {
            for v in &vectors {
                let mut detail = format!("{} {}", source_label(&source), vector_text(v));
                if let Some(s) = shadow {
                    detail.push_str(&format!(" @{}", shadow_text(matcher, s)));
                }
                out.push((
                    ObligationKind::ConditionCombo {
                        source: source.clone(),
                        shadow,
                        vector: v.clone(),
                        labels: labels.clone(),
                    },
                    detail,
                ));
            }
        }
    }
    Ok(out)
}

/// Every pointcut text of an aspect with its owner label.
fn pointcut_texts(a: &AspectDef) -> Vec<(String, &PointcutExpr)> {
    let mut out: Vec<(String, &PointcutExpr)> = a.pointcuts.iter().map(|p| (a.pointcut_owner(&p.name), &p.expr)).collect();
    out.extend(a.advice.iter().enumerate().map(|(i, adv)| (a.advice_owner(i), &adv.pointcut)));
    out
}

pub fn gen_wildcard_obligations(aspects: &[AspectDef]) -> Vec<(ObligationKind, String)> {
    let mut out = Vec::new();
    for a in aspects {
        for (owner, expr) in pointcut_texts(a) {
            for (pi, prim) in expr.primitives().into_iter().enumerate() {
                for star in 0..prim.star_count() {
                    for required in [Witness::Empty, Witness::NonEmpty] {
                        let detail = format!(
                            "{} {} #{} star {} {}",
                            owner,
                            prim.keyword(),
                            pi,
                            star,
                            if required == Witness::Empty { "empty" } else { "nonempty" }
                        );
                        out.push((
                            ObligationKind::WildcardBoundary {
                                site: WildcardSite {
                                    owner: owner.clone(),
                                    primitive: pi,
                                    star,
                                },
                                required,
                            },
                            detail,
                        ));
                    }
                }
            }
        }
    }
    out
}

pub fn gen_hierarchy_obligations(
    aspects: &[AspectDef],
    model: &ProgramModel,
) -> Result<(Vec<(ObligationKind, String)>, Vec<String>), AdequacyError> {
    let mut out = Vec::new();
    let mut warnings = Vec::new();
    for a in aspects {
        for (owner, expr) in pointcut_texts(a) {
            for (pi, prim) in expr.primitives().into_iter().enumerate() {
                for (ti, pattern) in prim.type_patterns().into_iter().enumerate() {
                    if !pattern.subtypes {
                        continue;
                    }
                    let Some(literal) = pattern.as_literal() else {
                        warnings.push(format!("{}: `{}` has wildcards; no hierarchy obligations", owner, pattern));
                        continue;
                    };
                    let name = model.resolve_type(&literal).ok_or_else(|| AdequacyError::UnknownType {
                        owner: owner.clone(),
                        name: literal.clone(),
                    })?;
                    let supers = model.immediate_supertypes(&name).map_err(AspectError::from)?;
                    let cases = std::iter::once((name.clone(), true)).chain(supers.into_iter().map(|s| (s, false)));
                    for (type_name, expect_match) in cases {
                        let detail = format!(
                            "{} {} #{} {}+ {} {}",
                            owner,
                            prim.keyword(),
                            pi,
                            literal,
                            type_name,
                            if expect_match { "match" } else { "no-match" }
                        );
                        out.push((
                            ObligationKind::HierarchyBoundary {
                                owner: owner.clone(),
                                primitive: pi,
                                pattern: ti,
                                type_name,
                                expect_match,
                            },
                            detail,
                        ));
                    }
                }
            }
        }
    }
    Ok((out, warnings))
}

pub fn gen_joinpoint_obligations(
    aspects: &[AspectDef],
    matcher: &Matcher,
) -> Result<(Vec<(ObligationKind, String)>, Vec<String>), AspectError> {
    let mut out = Vec::new();
    let mut warnings = Vec::new();
    for a in aspects {
        for i in 0..a.advice.len() {
            let shadows = matcher.static_shadows(&a.advice_tree(i)?);
            if shadows.is_empty() {
                warnings.push(format!("dead pointcut: advice {} matches no shadow", a.advice_owner(i)));
            }
            for s in shadows {
                out.push((
                    ObligationKind::JoinPointCoverage {
                        aspect: a.name.clone(),
                        advice: i,
                        shadow: s,
                    },
                    format!("{} @{}", a.advice_owner(i), shadow_text(matcher, s)),
                ));
            }
        }
    }
    Ok(out)
        .map(|o| (o, warnings))
}

/// Concrete (receiver class, dispatched declaring type, method) bindings of
/// a call shadow over all subtypes of its static receiver type.
pub fn dispatch_targets(model: &ProgramModel, static_type: &str, method: &str, arity: usize) -> Vec<(String, String, bool)> {
    let Ok(subs) = model.subtypes_transitive(static_type) else {
        return Vec::new();
    };
    subs.iter()
        .filter(|c| model.get(c).is_some_and(|d| d.is_class()) && !model.is_abstract_class(c))
        .filter_map(|c| {
            model
                .resolve_dispatch(c, method, Some(arity))
                .ok()
                .map(|(decl, m)| (c.clone(), decl, m.is_introduced()))
        })
        .collect()
}

pub fn gen_polymorphic_obligations(matcher: &Matcher) -> Vec<(ObligationKind, String)> {
    let model = matcher.model();
    let mut receivers = Vec::new();
    let mut targets = Vec::new();
    for s in matcher.shadows() {
        if s.kind != ShadowKind::Call || s.is_super {
            continue;
        }
        let sig = &s.signature;
        let bindings = dispatch_targets(model, &sig.declaring_type, &sig.method, sig.arity);
        if !bindings.iter().any(|(_, _, introduced)| *introduced) {
            continue;
        }
        let site = shadow_text(matcher, s.id);
        let mut seen = BTreeSet::new();
        for (class, decl, _) in &bindings {
            receivers.push((
                ObligationKind::AllReceiverClasses {
                    shadow: s.id,
                    class: class.clone(),
                },
                format!("{} receiver {}", site, class),
            ));
            if seen.insert(decl.clone()) {
                targets.push((
                    ObligationKind::AllTargetMethods {
                        shadow: s.id,
                        declaring_type: decl.clone(),
                        method: sig.method.clone(),
                        arity: sig.arity,
                    },
                    format!("{} target {}.{}/{}", site, decl, sig.method, sig.arity),
                ));
            }
        }
    }
    receivers.extend(targets);
    receivers
}

fn branch_paths(body: &[Stmt]) -> Vec<String> {
    let mut out = Vec::new();
    Stmt::walk(body, &mut |path, s| {
        if matches!(s, Stmt::IfType { .. }) {
            out.push(format!("{}.then", path));
            out.push(format!("{}.else", path));
        }
    });
    out
}

pub fn gen_advice_branch_obligations(aspects: &[AspectDef]) -> Vec<(ObligationKind, String)> {
    let mut out = Vec::new();
    let mut push = |owner: BodyOwner, branch: String| {
        let detail = format!("{} {}", owner_text(&owner), branch);
        out.push((ObligationKind::AdviceBranch { owner, branch }, detail));
    };
    for a in aspects {
        for (i, adv) in a.advice.iter().enumerate() {
            for b in branch_paths(&adv.body) {
                push(
                    BodyOwner::Advice {
                        aspect: a.name.clone(),
                        index: i,
                    },
                    b,
                );
            }
        }
        for intro in &a.introductions {
            let owner = BodyOwner::Introduction {
                aspect: a.name.clone(),
                target: intro.target.clone(),
                method: intro.method.name.clone(),
            };
            push(owner.clone(), "body".to_string());
            for b in branch_paths(&intro.method.body) {
                push(owner.clone(), b);
            }
        }
    }
    out
}

/// All obligations of the non-abstract aspects of a woven program, with
/// stable ids.
pub fn generate_obligations(woven: &Woven, config: AdequacyConfig) -> Result<ObligationSet, AdequacyError> {
    let aspects: Vec<AspectDef> = woven.aspects.iter().filter(|a| !a.is_abstract).cloned().collect();
    let matcher = Matcher::new(&woven.model);
    let mut kinds = gen_condition_obligations(&aspects, &matcher, config)?;
    kinds.extend(gen_wildcard_obligations(&aspects));
    let (hier, mut warnings) = gen_hierarchy_obligations(&aspects, &woven.model)?;
    kinds.extend(hier);
    let (jp, w) = gen_joinpoint_obligations(&aspects, &matcher)?;
    warnings.extend(w);
    kinds.extend(jp);
    kinds.extend(gen_polymorphic_obligations(&matcher));
    kinds.extend(gen_advice_branch_obligations(&aspects));
    let mut counters: BTreeMap<&str, usize> = BTreeMap::new();
    let obligations = kinds
        .into_iter()
        .map(|(kind, detail)| {
            let n = counters.entry(kind.prefix()).or_insert(0);
            *n += 1;
            Obligation {
                id: format!("{}{:03}", kind.prefix(), n),
                kind,
                detail,
                status: Status::Unmet,
            }
        })
        .collect();
    Ok(ObligationSet { obligations, warnings })
}

/// Literal type names in an abstract aspect's pointcuts that `model` cannot
/// resolve; non-empty means a stub model is required.
pub fn stub_requirements(aspect: &AspectDef, model: &ProgramModel) -> Vec<String> {
    let mut out = BTreeSet::new();
    for (_, expr) in pointcut_texts(aspect) {
        for prim in expr.primitives() {
            for t in prim.type_patterns() {
                if let Some(lit) = t.as_literal() {
                    if model.resolve_type(&lit).is_none() {
                        out.insert(lit);
                    }
                }
            }
        }
    }
    for p in aspect.pointcuts.iter().flat_map(|p| &p.params).chain(aspect.advice.iter().flat_map(|a| &a.params)) {
        if model.resolve_type(&p.type_name).is_none() {
            out.insert(p.type_name.clone());
        }
    }
    out.into_iter().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KindTally {
    pub kind: String,
    pub met: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub per_kind: Vec<KindTally>,
    pub overall: f64,
    pub unmet: Vec<(String, String)>,
    pub warnings: Vec<String>,
}

impl CoverageReport {
    pub fn tally(&self, kind: &str) -> (usize, usize) {
        self.per_kind
            .iter()
            .find(|t| t.kind == kind)
            .map_or((0, 0), |t| (t.met, t.total))
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for t in &self.per_kind {
            out.push_str(&format!("{}\t{}/{}\n", t.kind, t.met, t.total));
        }
        out.push_str(&format!("overall\t{:.4}\n", self.overall));
        for (id, hint) in &self.unmet {
            out.push_str(&format!("unmet\t{}\t{}\n", id, hint));
        }
        for w in &self.warnings {
            out.push_str(&format!("warning\t{}\n", w));
        }
        out
    }
}

/// Marks obligations met from recorded runs, in scenario order, and tallies
/// the result.
pub fn check_coverage(
    obligations: &mut [Obligation],
    executions: &[Execution],
    model_hash: &str,
) -> Result<CoverageReport, AdequacyError> {
    for e in executions {
        let log = e.log.as_ref().ok_or_else(|| AdequacyError::MissingLog(e.scenario.clone()))?;
        if log.model_hash != model_hash {
            return Err(AdequacyError::StaleLog {
                scenario: e.scenario.clone(),
                expected: model_hash.to_string(),
                found: log.model_hash.clone(),
            });
        }
    }
    for ob in obligations.iter_mut() {
        ob.status = Status::Unmet;
        for e in executions {
            if let Some(event) = first_witness(&ob.kind, e) {
                ob.status = Status::Met {
                    scenario: e.scenario.clone(),
                    event,
                };
                break;
            }
        }
    }
    let mut per_kind: Vec<KindTally> = KIND_NAMES
        .iter()
        .map(|k| KindTally {
            kind: k.to_string(),
            met: 0,
            total: 0,
        })
        .collect();
    let mut unmet = Vec::new();
    for ob in obligations.iter() {
        let t = &mut per_kind[ob.kind.ordinal()];
        t.total += 1;
        if ob.status == Status::Unmet {
            unmet.push((ob.id.clone(), hint(&ob.kind, &ob.detail, executions)));
        } else {
            t.met += 1;
        }
    }
    let mut warnings: Vec<String> = per_kind
        .iter()
        .filter(|t| t.total == 0)
        .map(|t| format!("{}: no obligations (0/0 counted as met)", t.kind))
        .collect();
    let met: usize = per_kind.iter().map(|t| t.met).sum();
    let total: usize = per_kind.iter().map(|t| t.total).sum();
    let overall = if total == 0 {
        warnings.push("no obligations at all; coverage is vacuously 100%".into());
        1.0
    } else {
        met as f64 / total as f64
    };
    Ok(CoverageReport {
        per_kind,
        overall,
        unmet,
        warnings,
    })
}

fn first_witness(kind: &ObligationKind, e: &Execution) -> Option<usize> {
    let log = e.log.as_ref()?;
    match kind {
        ObligationKind::ConditionCombo {
            source, shadow, vector, ..
        } => log
            .evaluations
            .iter()
            .find(|r| &r.source == source && shadow.is_none_or(|s| s == r.shadow) && &r.outcome.vector == vector)
            .map(|r| r.event),
        ObligationKind::WildcardBoundary { site, required } => log
            .evaluations
            .iter()
            .find(|r| r.outcome.witnesses.iter().any(|(s, w)| s == site && w == required))
            .map(|r| r.event),
        ObligationKind::HierarchyBoundary {
            owner,
            primitive,
            pattern,
            type_name,
            expect_match,
        } => log
            .evaluations
            .iter()
            .find(|r| {
                r.outcome.matched == *expect_match
                    && r.outcome.probes.iter().any(|p| {
                        &p.owner == owner && p.primitive == *primitive && p.pattern == *pattern && &p.presented == type_name
                    })
            })
            .map(|r| r.event),
        ObligationKind::JoinPointCoverage { aspect, advice, shadow } => e.trace.events.iter().position(|ev| {
            matches!(ev, TraceEvent::AdviceFired { aspect: a, index, shadow: s, .. } if a == aspect && index == advice && s == shadow)
        }),
        ObligationKind::AllReceiverClasses { shadow, class } => log
            .dispatches
            .iter()
            .find(|d| d.shadow == *shadow && &d.receiver == class)
            .map(|d| d.event),
        ObligationKind::AllTargetMethods {
            shadow,
            declaring_type,
            method,
            arity,
        } => log
            .dispatches
            .iter()
            .find(|d| d.shadow == *shadow && &d.declaring_type == declaring_type && &d.method == method && d.arity == *arity)
            .map(|d| d.event),
        ObligationKind::AdviceBranch { owner, branch } => log
            .branches
            .iter()
            .find(|b| &b.owner == owner && &b.branch == branch)
            .map(|b| b.event),
    }
}

fn hint(kind: &ObligationKind, detail: &str, executions: &[Execution]) -> String {
    match kind {
        ObligationKind::ConditionCombo {
            source, vector, labels, ..
        } => {
            let seen: Vec<&Vec<bool>> = executions
                .iter()
                .filter_map(|e| e.log.as_ref())
                .flat_map(|l| &l.evaluations)
                .filter(|r| &r.source == source)
                .map(|r| &r.outcome.vector)
                .collect();
            let missing: Vec<String> = vector
                .iter()
                .enumerate()
                .filter(|(i, want)| !seen.iter().any(|v| v[*i] == **want))
                .map(|(i, want)| {
                    let clause = labels[i].trim_start_matches('!');
                    format!("{}-clause never {}", clause, if *want { "satisfied" } else { "falsified" })
                })
                .collect();
            if seen.is_empty() {
                format!("{}: pointcut never evaluated", detail)
            } else if missing.is_empty() {
                format!("{}: combination never observed", detail)
            } else {
                format!("{}: {}", detail, missing.join("; "))
            }
        }
        ObligationKind::WildcardBoundary { .. } => format!("{}: no evaluation produced this wildcard width", detail),
        ObligationKind::HierarchyBoundary { .. } => format!("{}: no join point presented this type with this outcome", detail),
        ObligationKind::JoinPointCoverage { .. } => format!("{}: advice never fired here", detail),
        ObligationKind::AllReceiverClasses { .. } => format!("{}: call site never dispatched on this class", detail),
        ObligationKind::AllTargetMethods { .. } => format!("{}: call site never reached this method", detail),
        ObligationKind::AdviceBranch { .. } => format!("{}: branch never taken", detail),
    }
}
