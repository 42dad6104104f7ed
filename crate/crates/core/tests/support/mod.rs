//! Fixtures and independent oracles shared by integration and acceptance
//! tests.

#![allow(dead_code)]

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::PathBuf;

use aspectlab::aspect::{load_aspects, AspectDef, Woven};
use aspectlab::interp::Execution;
use aspectlab::matcher::{Matcher, Shadow, ShadowKind, Signature};
use aspectlab::model::{load_model, ProgramModel, Stmt, TypeKind};
use aspectlab::pointcut::{MethodPattern, ParamPattern, PointcutExpr, Primitive, TypePattern};
use aspectlab::scenario::{parse_scenarios, Scenario, Step};
use aspectlab::trace::{AdviceKind, ShadowId, TraceEvent};
use rand::seq::SliceRandom;
use rand::Rng;
use regex::Regex;

pub const FIXTURES: [&str; 3] = ["contract", "persistence", "undo"];

pub fn fixtures_dir() -> PathBuf {
    let here = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let own = here.join("fixtures");
    if own.join("contract.apm").exists() {
        own
    } else {
        here.join("../core/fixtures")
    }
}

pub fn read(name: &str) -> String {
    let path = fixtures_dir().join(name);
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {}", path.display(), e))
}

pub fn scenario_files(fixture: &str) -> Vec<&'static str> {
    match fixture {
        "contract" => vec!["contract_named.scn", "contract_extra.scn"],
        "persistence" => vec!["persistence.scn"],
        "undo" => vec!["undo.scn"],
        other => panic!("unknown fixture {}", other),
    }
}

pub struct Fixture {
    pub name: String,
    pub model: ProgramModel,
    pub aspects: Vec<AspectDef>,
    pub scenarios: Vec<Scenario>,
}

impl Fixture {
    pub fn load(name: &str) -> Fixture {
        let model = load_model(&read(&format!("{}.apm", name))).expect("model loads");
        let aspects = load_aspects(&read(&format!("{}.apa", name))).expect("aspects load");
        let mut scenarios = Vec::new();
        for f in scenario_files(name) {
            for s in parse_scenarios(&read(f)).expect("scenarios parse") {
                scenarios.push(s.resolve(&model).expect("scenario resolves"));
            }
        }
        Fixture {
            name: name.to_string(),
            model,
            aspects,
            scenarios,
        }
    }

    pub fn woven(&self) -> Woven {
        Woven::new(&self.model, &self.aspects).expect("fixture weaves")
    }

    pub fn scenarios_named(&self, names: &[&str]) -> Vec<Scenario> {
        self.scenarios
            .iter()
            .filter(|s| names.contains(&s.name.as_str()))
            .cloned()
            .collect()
    }
}

/// Pointcut corpus lines, comments dropped.
pub fn corpus() -> Vec<String> {
    read("pointcuts.txt")
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(String::from)
        .collect()
}

// ---------------------------------------------------------------------------
// Brute-force matcher oracle. Type patterns become regular expressions over
// dotted names in which `$k` suffixes are their own segment.

thread_local! {
    static REGEXES: RefCell<HashMap<String, Regex>> = RefCell::new(HashMap::new());
}

fn cached(source: &str) -> Regex {
    REGEXES.with(|c| {
        c.borrow_mut()
            .entry(source.to_string())
            .or_insert_with(|| Regex::new(source).unwrap())
            .clone()
    })
}

fn normalize(name: &str) -> String {
    format!("{}.", cached(r"([^.])\$").replace_all(name, "$1.$$"))
}

fn piece_regex(piece: &str) -> String {
    piece.split('*').map(regex::escape).collect::<Vec<_>>().join("[^.]*")
}

/// Regex for a type pattern printed without its `+`.
pub fn type_regex(text: &str) -> Regex {
    let dotted = text.contains('.');
    let mut re = String::from("^");
    if !dotted {
        re.push_str(r"(?:[^.]+\.)*");
    }
    for (i, part) in text.split("..").enumerate() {
        if i > 0 {
            re.push_str(r"(?:[^.]+\.)*");
        }
        for seg in part.split('.').filter(|s| !s.is_empty()) {
            let seg = cached(r"([^$])\$").replace_all(seg, "$1.$$").to_string();
            for piece in seg.split('.') {
                re.push_str(&piece_regex(piece));
                re.push_str(r"\.");
            }
        }
    }
    re.push('$');
    cached(&re)
}

fn builtin(name: &str) -> bool {
    ["void", "Object", "boolean", "String"].contains(&name)
}

/// Proper supertypes by walking declarations directly.
pub fn supertypes(model: &ProgramModel, name: &str) -> BTreeSet<String> {
    fn immediate(model: &ProgramModel, name: &str) -> Vec<String> {
        if builtin(name) {
            return if name == "Object" || name == "void" {
                vec![]
            } else {
                vec!["Object".into()]
            };
        }
        let Some(d) = model.types.get(name) else {
            return vec![];
        };
        let mut out = Vec::new();
        match (&d.extends, d.kind) {
            (Some(p), _) => out.push(p.clone()),
            (None, TypeKind::Class) => out.push("Object".into()),
            _ => {}
        }
        out.extend(d.implements.iter().cloned());
        out
    }
    let mut seen = BTreeSet::new();
    let mut todo = immediate(model, name);
    while let Some(t) = todo.pop() {
        if t != name && seen.insert(t.clone()) {
            todo.extend(immediate(model, &t));
        }
    }
    seen
}

fn pattern_text(tp: &TypePattern) -> String {
    let s = tp.to_string();
    s.strip_suffix('+').map(String::from).unwrap_or(s)
}

pub fn oracle_type(model: &ProgramModel, tp: &TypePattern, name: &str) -> bool {
    let re = type_regex(&pattern_text(tp));
    if re.is_match(&normalize(name)) {
        return true;
    }
    tp.subtypes && supertypes(model, name).iter().any(|s| re.is_match(&normalize(s)))
}

fn oracle_within(model: &ProgramModel, tp: &TypePattern, name: &str) -> bool {
    if oracle_type(model, tp, name) {
        return true;
    }
    let text = pattern_text(tp);
    let Some(base) = text.strip_suffix(".*").filter(|b| !b.ends_with('.')) else {
        return false;
    };
    let base_re = type_regex(base);
    let mut types = vec![name.to_string()];
    if tp.subtypes {
        types.extend(supertypes(model, name));
    }
    types.iter().any(|t| {
        let mut cursor = model.types.get(t).and_then(|d| d.enclosing.clone());
        let mut guard = 0;
        while let Some(enc) = cursor {
            if base_re.is_match(&normalize(&enc)) {
                return true;
            }
            guard += 1;
            if guard > 64 {
                break;
            }
            cursor = model.types.get(&enc).and_then(|d| d.enclosing.clone());
        }
        false
    })
}

fn name_matches(pattern: &str, text: &str) -> bool {
    cached(&format!("^{}$", piece_regex(pattern))).is_match(text)
}

pub fn oracle_signature(model: &ProgramModel, mp: &MethodPattern, sig: &Signature) -> bool {
    let arity_ok = match mp.params {
        ParamPattern::Any => true,
        ParamPattern::Empty => sig.arity == 0,
        ParamPattern::Arity(n) => sig.arity == n,
    };
    if !arity_ok || !name_matches(&mp.name.to_string(), &sig.method) {
        return false;
    }
    let ret_ok = match &sig.return_type {
        Some(r) => oracle_type(model, &mp.return_type, r),
        None => mp.return_type.to_string() == "*",
    };
    if !ret_ok {
        return false;
    }
    let declares = |t: &str| {
        model
            .types
            .get(t)
            .is_some_and(|d| d.methods.iter().any(|m| m.name == sig.method && m.param_types.len() == sig.arity))
    };
    let mut candidates = vec![sig.declaring_type.clone()];
    candidates.extend(supertypes(model, &sig.declaring_type).into_iter().filter(|t| declares(t)));
    // `+` already widens through supertypes inside oracle_type.
    candidates.iter().any(|c| oracle_type(model, &mp.declaring_type, c))
}

/// Static truth of a non-dynamic primitive; `None` for this/target/cflow.
pub fn oracle_static(model: &ProgramModel, p: &Primitive, shadow: &Shadow) -> Option<bool> {
    Some(match p {
        Primitive::Call(mp) => shadow.kind == ShadowKind::Call && oracle_signature(model, mp, &shadow.signature),
        Primitive::Execution(mp) => {
            shadow.kind == ShadowKind::Execution && oracle_signature(model, mp, &shadow.signature)
        }
        Primitive::Within(tp) => oracle_within(model, tp, &shadow.enclosing_type),
        Primitive::Withincode(mp) => oracle_signature(model, mp, &shadow.enclosing_method),
        Primitive::This(_) | Primitive::Target(_) | Primitive::Cflow(_) => return None,
    })
}

fn eval_with(model: &ProgramModel, e: &PointcutExpr, shadow: &Shadow, bits: u64, next: &mut u32) -> bool {
    match e {
        PointcutExpr::And(l, r) => {
            let a = eval_with(model, l, shadow, bits, next);
            let b = eval_with(model, r, shadow, bits, next);
            a && b
        }
        PointcutExpr::Or(l, r) => {
            let a = eval_with(model, l, shadow, bits, next);
            let b = eval_with(model, r, shadow, bits, next);
            a || b
        }
        PointcutExpr::Not(i) => !eval_with(model, i, shadow, bits, next),
        PointcutExpr::Named { .. } => panic!("oracle works on inlined expressions"),
        PointcutExpr::Prim(p) => match oracle_static(model, p, shadow) {
            Some(b) => b,
            None => {
                let v = bits >> *next & 1 == 1;
                *next += 1;
                v
            }
        },
    }
}

fn dynamic_count(e: &PointcutExpr) -> u32 {
    match e {
        PointcutExpr::And(l, r) | PointcutExpr::Or(l, r) => dynamic_count(l) + dynamic_count(r),
        PointcutExpr::Not(i) => dynamic_count(i),
        PointcutExpr::Named { .. } => 0,
        PointcutExpr::Prim(p) => matches!(p, Primitive::This(_) | Primitive::Target(_) | Primitive::Cflow(_)) as u32,
    }
}

/// A shadow is selected when some assignment of the dynamic conditions
/// makes the expression true.
pub fn oracle_shadow_matches(model: &ProgramModel, expr: &PointcutExpr, shadow: &Shadow) -> bool {
    let k = dynamic_count(expr);
    assert!(k < 20, "too many dynamic conditions");
    (0..1u64 << k).any(|bits| eval_with(model, expr, shadow, bits, &mut 0))
}

pub fn oracle_static_shadows(model: &ProgramModel, expr: &PointcutExpr) -> BTreeSet<ShadowId> {
    Matcher::new(model)
        .shadows()
        .iter()
        .filter(|s| oracle_shadow_matches(model, expr, s))
        .map(|s| s.id)
        .collect()
}

/// Static evaluation of a cflow body at one frame, dynamic leaves false.
pub fn oracle_frame_matches(model: &ProgramModel, expr: &PointcutExpr, shadow: &Shadow) -> bool {
    eval_with(model, expr, shadow, 0, &mut 0)
}

// ---------------------------------------------------------------------------
// Dispatch oracle.

fn is_sub(model: &ProgramModel, sub: &str, sup: &str) -> bool {
    sub == sup || supertypes(model, sub).contains(sup)
}

fn concrete_impl(model: &ProgramModel, class: &str, method: &str, arity: usize) -> Option<String> {
    let mut cursor = Some(class.to_string());
    while let Some(c) = cursor {
        let d = model.types.get(&c)?;
        if d.methods.iter().any(|m| m.name == method && m.param_types.len() == arity && !m.is_abstract) {
            return Some(c);
        }
        cursor = d.extends.clone();
    }
    None
}

fn instantiable(model: &ProgramModel, class: &str) -> bool {
    let Some(d) = model.types.get(class) else {
        return false;
    };
    if d.kind != TypeKind::Class {
        return false;
    }
    let mut cursor = Some(class.to_string());
    while let Some(c) = cursor {
        let decl = &model.types[&c];
        for m in decl.methods.iter().filter(|m| m.is_abstract) {
            if concrete_impl(model, class, &m.name, m.param_types.len()).is_none() {
                return false;
            }
        }
        cursor = decl.extends.clone();
    }
    true
}

/// Every (receiver class, declaring type of the dispatched body) for a
/// call with the given static type.
pub fn oracle_dispatch(model: &ProgramModel, static_type: &str, method: &str, arity: usize) -> BTreeSet<(String, String)> {
    model
        .types
        .keys()
        .filter(|c| instantiable(model, c) && is_sub(model, c, static_type))
        .filter_map(|c| concrete_impl(model, c, method, arity).map(|d| (c.clone(), d)))
        .collect()
}

// ---------------------------------------------------------------------------
// Randomized scenarios and probe aspects.

fn invocable(model: &ProgramModel) -> Vec<(String, Vec<String>)> {
    model
        .types
        .keys()
        .filter(|c| instantiable(model, c))
        .map(|c| {
            let mut methods: BTreeSet<String> = BTreeSet::new();
            let mut cursor = Some(c.clone());
            while let Some(t) = cursor {
                let d = &model.types[&t];
                for m in d.methods.iter().filter(|m| m.param_types.is_empty()) {
                    if concrete_impl(model, c, &m.name, 0).is_some() {
                        methods.insert(m.name.clone());
                    }
                }
                cursor = d.extends.clone();
            }
            (c.clone(), methods.into_iter().collect())
        })
        .filter(|(_, m): &(String, Vec<String>)| !m.is_empty())
        .collect()
}

pub fn random_scenario<R: Rng>(model: &ProgramModel, rng: &mut R, index: usize) -> Scenario {
    let pool = invocable(model);
    let mut steps = Vec::new();
    let mut vars: Vec<(String, usize)> = Vec::new();
    for v in 0..rng.gen_range(1..=3) {
        let k = rng.gen_range(0..pool.len());
        let var = format!("o{}", v);
        steps.push(Step::New {
            var: var.clone(),
            class: pool[k].0.clone(),
        });
        vars.push((var, k));
    }
    for _ in 0..rng.gen_range(1..=4) {
        let (var, k) = vars.choose(rng).unwrap();
        let method = pool[*k].1.choose(rng).unwrap().clone();
        steps.push(Step::Invoke {
            var: var.clone(),
            method,
        });
    }
    Scenario {
        name: format!("random-{}", index),
        steps,
        expected: None,
    }
}

fn shadow_pointcut(s: &Shadow) -> String {
    format!(
        "{}(* {}.{}(..))",
        s.kind.keyword(),
        s.signature.declaring_type,
        s.signature.method
    )
}

/// Aspect source with a few random advice on shadows of `model`.
pub fn random_probe_aspect<R: Rng>(model: &ProgramModel, rng: &mut R) -> String {
    let matcher = Matcher::new(model);
    let shadows = matcher.shadows();
    let execs: Vec<&Shadow> = shadows.iter().filter(|s| s.kind == ShadowKind::Execution).collect();
    let mut out = String::from("aspect Probe\n");
    for i in 0..rng.gen_range(1..=3) {
        let kind = ["before", "after", "after-returning", "around"].choose(rng).unwrap();
        let target = shadows.choose(rng).unwrap();
        let mut pc = shadow_pointcut(target);
        if rng.gen_bool(0.3) {
            pc = format!("cflow({}) && {}", shadow_pointcut(execs.choose(rng).unwrap()), pc);
        }
        let body = if *kind == "around" && rng.gen_bool(0.5) {
            format!("emit probe-{}; proceed", i)
        } else {
            format!("emit probe-{}", i)
        };
        out.push_str(&format!("  {}(): {} {{ {} }}\n", kind, pc, body));
    }
    out
}

// ---------------------------------------------------------------------------
// Weaving-order property checker.

fn flatten(e: &PointcutExpr, aspect: &AspectDef, out: &mut Vec<PointcutExpr>) {
    match e {
        PointcutExpr::And(l, r) => {
            flatten(l, aspect, out);
            flatten(r, aspect, out);
        }
        PointcutExpr::Named { name, .. } => {
            let pc = aspect.pointcuts.iter().find(|p| &p.name == name).expect("named pointcut");
            flatten(&pc.expr, aspect, out);
        }
        PointcutExpr::Prim(Primitive::Cflow(inner)) => out.push((**inner).clone()),
        _ => {}
    }
}

/// Cflow bodies that must hold for the advice to fire.
fn required_cflows(aspect: &AspectDef, index: usize) -> Vec<PointcutExpr> {
    let mut out = Vec::new();
    flatten(&aspect.advice[index].pointcut, aspect, &mut out);
    out
}

fn top_level_proceeds(body: &[Stmt]) -> Option<usize> {
    let all = Stmt::count_proceeds(body);
    let top = body.iter().filter(|s| matches!(s, Stmt::Proceed)).count();
    (all == top).then_some(top)
}

/// Returns a description of every weaving-order violation in `exec`.
pub fn weaving_violations(woven: &Woven, exec: &Execution) -> Vec<String> {
    let mut out = Vec::new();
    let model = &woven.model;
    let matcher = Matcher::new(model);
    let events = &exec.trace.events;
    let aspect = |name: &str| woven.aspects.iter().find(|a| a.name == name).expect("aspect");

    // Enter/Exit balance.
    let mut open: Vec<ShadowId> = Vec::new();
    for (i, e) in events.iter().enumerate() {
        match e {
            TraceEvent::Enter { shadow, .. } => open.push(*shadow),
            TraceEvent::Exit { shadow } => {
                if open.pop() != Some(*shadow) {
                    out.push(format!("{}: unbalanced exit {}", i, shadow));
                }
            }
            TraceEvent::AdviceFired { aspect: an, index, kind, shadow } => {
                for cf in required_cflows(aspect(an), *index) {
                    let frames = open.iter().chain(std::iter::once(shadow));
                    if !frames.into_iter().any(|f| oracle_frame_matches(model, &cf, matcher.shadow(*f))) {
                        out.push(format!("{}: {}#{} fired without a matching cflow frame", i, an, index));
                    }
                }
                let ok = match kind {
                    AdviceKind::Before => enters_later(events, i, *shadow, exec.error.is_some()),
                    AdviceKind::After | AdviceKind::AfterReturning => exited_before(events, i, *shadow),
                    AdviceKind::Around => true,
                };
                if !ok {
                    out.push(format!("{}: {} advice {}#{} out of order at {}", i, kind, an, index, shadow));
                }
            }
            _ => {}
        }
    }
    if exec.error.is_none() && !open.is_empty() {
        out.push(format!("{} enter events never exited", open.len()));
    }

    // Around advice without proceed suppresses the join point.
    if let (None, Some(log)) = (&exec.error, &exec.log) {
        let live: Vec<&AspectDef> = woven.aspects.iter().filter(|a| !a.is_abstract).collect();
        let named: usize = live.iter().map(|a| a.pointcuts.len()).sum();
        let advice: Vec<(&AspectDef, usize)> = live
            .iter()
            .flat_map(|a| (0..a.advice.len()).map(move |i| (*a, i)))
            .collect();
        let block = named + advice.len();
        if block > 0 {
            let mut expected: BTreeMap<ShadowId, usize> = BTreeMap::new();
            let mut checkable: BTreeMap<ShadowId, bool> = BTreeMap::new();
            for chunk in log.evaluations.chunks(block) {
                let shadow = chunk[0].shadow;
                let mut suppressed = false;
                let mut simple = true;
                for (rec, (a, i)) in chunk[named..].iter().zip(&advice) {
                    let adv = &a.advice[*i];
                    if rec.outcome.matched && adv.kind == AdviceKind::Around {
                        match top_level_proceeds(&adv.body) {
                            Some(0) => suppressed = true,
                            Some(1) => {}
                            _ => simple = false,
                        }
                    }
                }
                *expected.entry(shadow).or_default() += usize::from(!suppressed);
                *checkable.entry(shadow).or_insert(true) &= simple;
            }
            let mut actual: BTreeMap<ShadowId, usize> = BTreeMap::new();
            for e in events {
                if let TraceEvent::Enter { shadow, .. } = e {
                    *actual.entry(*shadow).or_default() += 1;
                }
            }
            for (shadow, n) in expected {
                if checkable[&shadow] && actual.get(&shadow).copied().unwrap_or(0) != n {
                    out.push(format!("shadow {}: expected {} enters, saw {}", shadow, n, actual.get(&shadow).copied().unwrap_or(0)));
                }
            }
        }
    }
    out
}

fn enters_later(events: &[TraceEvent], from: usize, shadow: ShadowId, errored: bool) -> bool {
    let mut depth = 0usize;
    for e in &events[from + 1..] {
        match e {
            TraceEvent::Enter { shadow: s, .. } => {
                if depth == 0 && *s == shadow {
                    return true;
                }
                depth += 1;
            }
            TraceEvent::Exit { .. } => {
                if depth == 0 {
                    return false;
                }
                depth -= 1;
            }
            _ => {}
        }
    }
    errored
}

fn exited_before(events: &[TraceEvent], at: usize, shadow: ShadowId) -> bool {
    let mut depth = 0usize;
    for e in events[..at].iter().rev() {
        match e {
            TraceEvent::Exit { shadow: s } => {
                if depth == 0 && *s == shadow {
                    return true;
                }
                depth += 1;
            }
            TraceEvent::Enter { .. } => {
                if depth == 0 {
                    return false;
                }
                depth -= 1;
            }
            _ => {}
        }
    }
    false
}
