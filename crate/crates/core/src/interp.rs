//! Scenario interpreter with advice dispatch.
//!
//! At every join point the interpreter evaluates all named pointcuts and all
//! advice pointcuts, emits `pointcut` events for matching named pointcuts,
//! then runs matching advice: arounds outermost-first, befores, the join
//! point itself, afters in reverse precedence order.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aspect::{AspectDef, AspectError, Woven};
use crate::matcher::{CompiledPointcut, JoinPoint, MatchOutcome, Matcher};
use crate::model::{ProgramModel, Receiver, Stmt};
use crate::scenario::{Scenario, Step};
use crate::trace::{AdviceKind, ObjectRef, ShadowId, Trace, TraceEvent};

/// Maximum nesting of method executions.
pub const STACK_LIMIT: usize = 10_000;

const THREAD_STACK: usize = 1 << 30;

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
pub enum RuntimeError {
    #[error("variable `{0}` is not bound")]
    UnboundVariable(String),
    #[error("no concrete method {method} on {class}")]
    NoSuchMethod { class: String, method: String },
    #[error("recursion deeper than {STACK_LIMIT} frames")]
    StackLimit,
}

/// Which pointcut an evaluation belongs to.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PointcutSource {
    Named { aspect: String, name: String },
    Advice { aspect: String, index: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalRecord {
    /// Trace length when the evaluation happened.
    pub event: usize,
    pub source: PointcutSource,
    pub shadow: ShadowId,
    pub outcome: MatchOutcome,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DispatchRecord {
    pub event: usize,
    pub shadow: ShadowId,
    pub receiver: String,
    pub declaring_type: String,
    pub method: String,
    pub arity: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BodyOwner {
    Advice { aspect: String, index: usize },
    Introduction { aspect: String, target: String, method: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BranchRecord {
    pub event: usize,
    pub owner: BodyOwner,
    /// `body` for entering the body, else `<path>.then` / `<path>.else`.
    pub branch: String,
}

/// Everything the adequacy checker needs from one scenario run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunLog {
    pub model_hash: String,
    pub scenario: String,
    pub evaluations: Vec<EvalRecord>,
    pub dispatches: Vec<DispatchRecord>,
    pub branches: Vec<BranchRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Execution {
    pub scenario: String,
    pub trace: Trace,
    pub error: Option<RuntimeError>,
    pub log: Option<RunLog>,
}

struct NamedSlot {
    aspect: String,
    name: String,
    pc: CompiledPointcut,
}

struct AdviceSlot {
    aspect: usize,
    index: usize,
    kind: AdviceKind,
    pc: CompiledPointcut,
}

/// A woven program ready to run scenarios. Immutable and shareable.
pub struct Runtime<'w> {
    woven: &'w Woven,
    matcher: Matcher<'w>,
    named: Vec<NamedSlot>,
    /// Sorted by precedence.
    advice: Vec<AdviceSlot>,
    introduced_owner: BTreeMap<(String, String, usize), String>,
    hash: String,
}

/// Ranks aspects by the concatenated `declare precedence` lists; aspects
/// not mentioned rank last.
pub fn precedence_rank(aspects: &[AspectDef], name: &str) -> usize {
    aspects
        .iter()
        .filter_map(|a| a.precedence.as_ref())
        .flatten()
        .position(|p| crate::matcher::match_name(p, name).is_some())
        .unwrap_or(usize::MAX)
}

impl<'w> Runtime<'w> {
    pub fn new(woven: &'w Woven) -> Result<Runtime<'w>, AspectError> {
        let mut named = Vec::new();
        let mut advice = Vec::new();
        for (ai, a) in woven.aspects.iter().enumerate() {
            if a.is_abstract {
                continue;
            }
            for pc in &a.pointcuts {
                named.push(NamedSlot {
                    aspect: a.name.clone(),
                    name: pc.name.clone(),
                    pc: CompiledPointcut::new(a.pointcut_tree(&pc.name)?),
                });
            }
            for (i, adv) in a.advice.iter().enumerate() {
                advice.push(AdviceSlot {
                    aspect: ai,
                    index: i,
                    kind: adv.kind,
                    pc: CompiledPointcut::new(a.advice_tree(i)?),
                });
            }
        }
        let aspects = &woven.aspects;
        advice.sort_by_key(|s| {
            let name = &aspects[s.aspect].name;
            (precedence_rank(aspects, name), name.clone(), s.index)
        });
        let mut introduced_owner = BTreeMap::new();
        for a in aspects {
            for intro in &a.introductions {
                introduced_owner.insert(
                    (intro.target.clone(), intro.method.name.clone(), intro.method.arity()),
                    a.name.clone(),
                );
            }
        }
        Ok(Runtime {
            woven,
            matcher: Matcher::new(&woven.model),
            named,
            advice,
            introduced_owner,
            hash: woven.model.fingerprint(),
        })
    }

    pub fn matcher(&self) -> &Matcher<'w> {
        &self.matcher
    }

    pub fn model(&self) -> &'w ProgramModel {
        &self.woven.model
    }

    pub fn woven(&self) -> &'w Woven {
        self.woven
    }

    /// Runs one scenario on a thread with a deep stack.
    pub fn run(&self, scenario: &Scenario, record: bool) -> Execution {
        std::thread::scope(|s| {
            std::thread::Builder::new()
                .stack_size(THREAD_STACK)
                .spawn_scoped(s, || self.run_here(scenario, record))
                .expect("spawn interpreter thread")
                .join()
                .expect("interpreter thread panicked")
        })
    }

    fn run_here(&self, scenario: &Scenario, record: bool) -> Execution {
        let mut it = Interp {
            rt: self,
            trace: Vec::new(),
            log: record.then(|| RunLog {
                model_hash: self.hash.clone(),
                scenario: scenario.name.clone(),
                ..RunLog::default()
            }),
            serial: 0,
            globals: BTreeMap::new(),
            stack: Vec::new(),
            depth: 0,
        };
        let mut error = None;
        for step in &scenario.steps {
            let result = match step {
                Step::New { var, class } => {
                    let obj = it.fresh(class);
                    it.globals.insert(var.clone(), obj);
                    Ok(())
                }
                Step::Invoke { var, method } => match it.globals.get(var).cloned() {
                    None => Err(RuntimeError::UnboundVariable(var.clone())),
                    Some(obj) => it.invoke(&obj, &obj.class.clone(), method, 0).map(|_| ()),
                },
            };
            if let Err(e) = result {
                error = Some(e);
                break;
            }
        }
        Execution {
            scenario: scenario.name.clone(),
            trace: Trace { events: it.trace },
            error,
            log: it.log,
        }
    }
}

/// Where `proceed` continues.
struct Cont<'a> {
    jp: &'a JoinPoint,
    plan: &'a Plan,
    next_around: usize,
    core: &'a Core,
}

enum Core {
    Execution { obj: ObjectRef, type_name: String, method: usize },
    Call { obj: ObjectRef, from: String, method: String, arity: usize },
}

struct Matched {
    slot: usize,
    bindings: BTreeMap<String, ObjectRef>,
}

struct Plan {
    arounds: Vec<Matched>,
    befores: Vec<Matched>,
    afters: Vec<Matched>,
}

enum Ctx<'a> {
    Method { type_name: &'a str, method: usize, owner: Option<BodyOwner> },
    Advice { slot: usize, bindings: &'a BTreeMap<String, ObjectRef> },
}

struct Env<'a> {
    this: Option<ObjectRef>,
    locals: Vec<(String, ObjectRef)>,
    ctx: Ctx<'a>,
}

struct Interp<'r, 'w> {
    rt: &'r Runtime<'w>,
    trace: Vec<TraceEvent>,
    log: Option<RunLog>,
    serial: usize,
    globals: BTreeMap<String, ObjectRef>,
    stack: Vec<ShadowId>,
    depth: usize,
}

type RResult = Result<(), RuntimeError>;

impl<'r, 'w> Interp<'r, 'w> {
    fn fresh(&mut self, class: &str) -> ObjectRef {
        self.serial += 1;
        ObjectRef {
            class: class.to_string(),
            serial: self.serial,
        }
    }

    /// Dispatches `method` starting at `from` and runs its execution join
    /// point on `obj`.
    fn invoke(&mut self, obj: &ObjectRef, from: &str, method: &str, arity: usize) -> Result<(String, usize), RuntimeError> {
        let model = self.rt.model();
        let (declaring, decl) = model
            .resolve_dispatch(from, method, Some(arity))
            .map_err(|_| RuntimeError::NoSuchMethod {
                class: from.to_string(),
                method: format!("{}/{}", method, arity),
            })?;
        let index = model.types[&declaring]
            .methods
            .iter()
            .position(|m| std::ptr::eq(m, decl))
            .expect("dispatched method belongs to its type");
        self.execute_method(obj, &declaring, index)?;
        Ok((declaring, index))
    }

    fn execute_method(&mut self, obj: &ObjectRef, type_name: &str, method: usize) -> RResult {
        let shadow = self
            .rt
            .matcher
            .table()
            .execution_of(type_name, method)
            .expect("concrete methods have execution shadows");
        self.depth += 1;
        if self.depth > STACK_LIMIT {
            return Err(RuntimeError::StackLimit);
        }
        let core = Core::Execution {
            obj: obj.clone(),
            type_name: type_name.to_string(),
            method,
        };
        let r = self.join_point(shadow, Some(obj.clone()), Some(obj.clone()), core);
        self.depth -= 1;
        r
    }

    fn join_point(&mut self, shadow: ShadowId, this: Option<ObjectRef>, target: Option<ObjectRef>, core: Core) -> RResult {
        self.stack.push(shadow);
        let jp = JoinPoint {
            shadow,
            this,
            target,
            stack: self.stack.clone(),
        };
        let rt = self.rt;
        for slot in &rt.named {
            let outcome = rt.matcher.evaluate(&slot.pc, &jp);
            if outcome.matched {
                self.trace.push(TraceEvent::PointcutFired {
                    aspect: slot.aspect.clone(),
                    pointcut: slot.name.clone(),
                    shadow,
                });
            }
            self.note_eval(
                PointcutSource::Named {
                    aspect: slot.aspect.clone(),
                    name: slot.name.clone(),
                },
                shadow,
                outcome,
            );
        }
        let mut plan = Plan {
            arounds: Vec::new(),
            befores: Vec::new(),
            afters: Vec::new(),
        };
        for (i, slot) in rt.advice.iter().enumerate() {
            let outcome = rt.matcher.evaluate(&slot.pc, &jp);
            if outcome.matched {
                let m = Matched {
                    slot: i,
                    bindings: outcome.bindings.clone(),
                };
                match slot.kind {
                    AdviceKind::Around => plan.arounds.push(m),
                    AdviceKind::Before => plan.befores.push(m),
                    AdviceKind::After | AdviceKind::AfterReturning => plan.afters.push(m),
                }
            }
            self.note_eval(
                PointcutSource::Advice {
                    aspect: rt.woven.aspects[slot.aspect].name.clone(),
                    index: slot.index,
                },
                shadow,
                outcome,
            );
        }
        plan.afters.reverse();
        let r = self.proceed(&Cont {
            jp: &jp,
            plan: &plan,
            next_around: 0,
            core: &core,
        });
        self.stack.pop();
        r
    }

    fn note_eval(&mut self, source: PointcutSource, shadow: ShadowId, outcome: MatchOutcome) {
        let event = self.trace.len();
        if let Some(log) = &mut self.log {
            log.evaluations.push(EvalRecord {
                event,
                source,
                shadow,
                outcome,
            });
        }
    }

    fn fire(&mut self, m: &Matched, shadow: ShadowId) {
        let slot = &self.rt.advice[m.slot];
        self.trace.push(TraceEvent::AdviceFired {
            aspect: self.rt.woven.aspects[slot.aspect].name.clone(),
            index: slot.index,
            kind: slot.kind,
            shadow,
        });
    }

    fn run_advice(&mut self, m: &Matched, cont: Option<&Cont>) -> RResult {
        let rt = self.rt;
        let slot = &rt.advice[m.slot];
        let body = &rt.woven.aspects[slot.aspect].advice[slot.index].body;
        let mut env = Env {
            this: None,
            locals: Vec::new(),
            ctx: Ctx::Advice {
                slot: m.slot,
                bindings: &m.bindings,
            },
        };
        self.exec_body(body, "", &mut env, cont)
    }

    fn proceed(&mut self, cont: &Cont) -> RResult {
        let shadow = cont.jp.shadow;
        if let Some(m) = cont.plan.arounds.get(cont.next_around) {
            self.fire(m, shadow);
            let inner = Cont {
                next_around: cont.next_around + 1,
                ..*cont
            };
            return self.run_advice(m, Some(&inner));
        }
        for m in &cont.plan.befores {
            self.fire(m, shadow);
            self.run_advice(m, None)?;
        }
        let shown = cont
            .jp
            .this
            .clone()
            .or_else(|| cont.jp.target.clone())
            .expect("join points carry an object");
        self.trace.push(TraceEvent::Enter { shadow, this: shown });
        match cont.core {
            Core::Execution { obj, type_name, method } => {
                let rt = self.rt;
                let decl = &rt.model().types[type_name.as_str()];
                let m = &decl.methods[*method];
                let owner = self.introduced_owner(type_name, &m.name, m.arity()).map(|aspect| BodyOwner::Introduction {
                    aspect,
                    target: type_name.clone(),
                    method: m.name.clone(),
                });
                if let Some(o) = &owner {
                    self.branch(o.clone(), "body".to_string());
                }
                let mut env = Env {
                    this: Some(obj.clone()),
                    locals: Vec::new(),
                    ctx: Ctx::Method {
                        type_name: type_name.as_str(),
                        method: *method,
                        owner,
                    },
                };
                self.exec_body(&m.body, "", &mut env, None)?;
            }
            Core::Call { obj, from, method, arity } => {
                let (declaring, _) = self.invoke(obj, from, method, *arity)?;
                let event = self.trace.len();
                if let Some(log) = &mut self.log {
                    log.dispatches.push(DispatchRecord {
                        event,
                        shadow,
                        receiver: obj.class.clone(),
                        declaring_type: declaring,
                        method: method.clone(),
                        arity: *arity,
                    });
                }
            }
        }
        self.trace.push(TraceEvent::Exit { shadow });
        for m in &cont.plan.afters {
            self.fire(m, shadow);
            self.run_advice(m, None)?;
        }
        Ok(())
    }

    fn introduced_owner(&self, type_name: &str, method: &str, arity: usize) -> Option<String> {
        let decl = &self.rt.model().types[type_name];
        let m = decl.method(method, Some(arity))?;
        if !m.is_introduced() {
            return None;
        }
        self.rt
            .introduced_owner
            .get(&(type_name.to_string(), method.to_string(), arity))
            .cloned()
    }

    fn branch(&mut self, owner: BodyOwner, branch: String) {
        let event = self.trace.len();
        if let Some(log) = &mut self.log {
            log.branches.push(BranchRecord { event, owner, branch });
        }
    }

    fn lookup(&self, env: &Env, var: &str) -> Result<ObjectRef, RuntimeError> {
        if let Some((_, o)) = env.locals.iter().rev().find(|(v, _)| v == var) {
            return Ok(o.clone());
        }
        if let Ctx::Advice { bindings, .. } = &env.ctx {
            if let Some(o) = bindings.get(var) {
                return Ok(o.clone());
            }
        }
        self.globals
            .get(var)
            .cloned()
            .ok_or_else(|| RuntimeError::UnboundVariable(var.to_string()))
    }

    fn body_owner(&self, env: &Env) -> Option<BodyOwner> {
        match &env.ctx {
            Ctx::Method { owner, .. } => owner.clone(),
            Ctx::Advice { slot, .. } => {
                let s = &self.rt.advice[*slot];
                Some(BodyOwner::Advice {
                    aspect: self.rt.woven.aspects[s.aspect].name.clone(),
                    index: s.index,
                })
            }
        }
    }

    fn exec_body(&mut self, body: &[Stmt], prefix: &str, env: &mut Env, cont: Option<&Cont>) -> RResult {
        let depth = env.locals.len();
        for (i, stmt) in body.iter().enumerate() {
            let path = if prefix.is_empty() {
                i.to_string()
            } else {
                format!("{}.{}", prefix, i)
            };
            match stmt {
                Stmt::Emit(label) => self.trace.push(TraceEvent::Emit { label: label.clone() }),
                Stmt::New { var, class } => {
                    let obj = self.fresh(class);
                    env.locals.push((var.clone(), obj));
                }
                Stmt::Call {
                    receiver,
                    method,
                    arg_count,
                } => {
                    let obj = match receiver {
                        Receiver::This => env
                            .this
                            .clone()
                            .ok_or_else(|| RuntimeError::UnboundVariable("this".into()))?,
                        Receiver::Var(v) => self.lookup(env, v)?,
                        Receiver::New(c) => self.fresh(c),
                    };
                    self.call(env, &path, obj.clone(), obj.class.clone(), method, *arg_count)?;
                }
                Stmt::SuperCall { method } => {
                    let this = env
                        .this
                        .clone()
                        .ok_or_else(|| RuntimeError::UnboundVariable("this".into()))?;
                    let from = match &env.ctx {
                        Ctx::Method { type_name, .. } => self.rt.model().types[*type_name].extends.clone(),
                        Ctx::Advice { .. } => None,
                    }
                    .ok_or_else(|| RuntimeError::NoSuchMethod {
                        class: this.class.clone(),
                        method: format!("super.{}", method),
                    })?;
                    self.call(env, &path, this, from, method, 0)?;
                }
                Stmt::IfType {
                    var,
                    type_name,
                    then_body,
                    else_body,
                } => {
                    let obj = self.lookup(env, var)?;
                    let taken = self.rt.matcher.is_subtype(&obj.class, type_name);
                    let arm = if taken { "then" } else { "else" };
                    if let Some(owner) = self.body_owner(env) {
                        self.branch(owner, format!("{}.{}", path, arm));
                    }
                    let inner = if taken { then_body } else { else_body };
                    self.exec_body(inner, &format!("{}.{}", path, arm), env, cont)?;
                }
                Stmt::Proceed => {
                    if let Some(c) = cont {
                        self.proceed(c)?;
                    }
                }
            }
        }
        env.locals.truncate(depth);
        Ok(())
    }

    /// A call from a method body goes through its call join point; a call
    /// from advice dispatches directly.
    fn call(&mut self, env: &Env, path: &str, obj: ObjectRef, from: String, method: &str, arity: usize) -> RResult {
        match &env.ctx {
            Ctx::Method { type_name, method: mi, .. } => {
                let shadow = self
                    .rt
                    .matcher
                    .table()
                    .call_at(type_name, *mi, path)
                    .expect("call statements have call shadows");
                let core = Core::Call {
                    obj: obj.clone(),
                    from,
                    method: method.to_string(),
                    arity,
                };
                self.join_point(shadow, env.this.clone(), Some(obj), core)
            }
            Ctx::Advice { .. } => self.invoke(&obj, &from, method, arity).map(|_| ()),
        }
    }
}

/// Weaves and runs one scenario without logging.
pub fn execute(model: &ProgramModel, aspects: &[AspectDef], scenario: &Scenario) -> Result<Execution, AspectError> {
    let woven = Woven::new(model, aspects)?;
    let rt = Runtime::new(&woven)?;
    let scenario = scenario.resolve(&woven.model).map_err(|message| AspectError::Invalid {
        aspect: String::new(),
        location: format!("scenario {}", scenario.name),
        message,
    })?;
    Ok(rt.run(&scenario, false))
}
