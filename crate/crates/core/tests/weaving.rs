mod support;

use aspectlab::aspect::{load_aspects, Woven};
use aspectlab::interp::{Runtime, RuntimeError};
use aspectlab::model::load_model;
use aspectlab::scenario::parse_scenarios;
use aspectlab::trace::{compare_traces, AdviceKind, TraceEvent};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use support::{random_probe_aspect, random_scenario, weaving_violations, Fixture, FIXTURES};

const SMALL: &str = "\
package p

class Box
  method void open()
    emit opened
  method void shut()
    call this.open(0)
    emit shut
";

fn run_small(aspects: &str, steps: &str) -> Vec<String> {
    let model = load_model(SMALL).unwrap();
    let aspects = load_aspects(aspects).unwrap();
    let woven = Woven::new(&model, &aspects).unwrap();
    let rt = Runtime::new(&woven).unwrap();
    let s = parse_scenarios(&format!("scenario s\n  new b Box\n{}", steps)).unwrap().remove(0);
    let run = rt.run(&s.resolve(&woven.model).unwrap(), true);
    assert!(weaving_violations(&woven, &run).is_empty());
    run.trace.events.iter().map(|e| e.to_string().split('\t').take(2).collect::<Vec<_>>().join(" ")).collect()
}

#[test]
fn before_and_after_bracket_the_join_point() {
    let t = run_small(
        "aspect A\n  before(): execution(* Box.open()) { emit b }\n  after(): execution(* Box.open()) { emit a }\n",
        "  invoke b.open()\n",
    );
    assert_eq!(t, ["advice A", "emit b", "enter 0", "emit opened", "exit 0", "advice A", "emit a"]);
}

#[test]
fn around_without_proceed_suppresses_the_body() {
    let t = run_small("aspect A\n  around(): execution(* Box.open()) { emit skipped }\n", "  invoke b.open()\n");
    assert_eq!(t, ["advice A", "emit skipped"]);
}

#[test]
fn around_with_proceed_wraps_the_body() {
    let t = run_small("aspect A\n  around(): execution(* Box.open()) { emit in; proceed; emit out }\n", "  invoke b.open()\n");
    assert_eq!(t, ["advice A", "emit in", "enter 0", "emit opened", "exit 0", "emit out"]);
}

#[test]
fn cflow_limits_firing_to_nested_join_points() {
    let t = run_small(
        "aspect A\n  before(): cflow(execution(* Box.shut())) && execution(* Box.open()) { emit nested }\n",
        "  invoke b.open()\n  invoke b.shut()\n",
    );
    let nested = t.iter().filter(|e| *e == "emit nested").count();
    assert_eq!(nested, 1);
    let pos = t.iter().position(|e| e == "emit nested").unwrap();
    assert!(t[..pos].contains(&"emit opened".to_string()));
}

#[test]
fn precedence_orders_before_and_reverses_after() {
    let aspects = "\
aspect First
  before(): execution(* Box.open()) { emit first-before }
  after(): execution(* Box.open()) { emit first-after }
  declare precedence: First, Second

aspect Second
  before(): execution(* Box.open()) { emit second-before }
  after(): execution(* Box.open()) { emit second-after }
";
    let t = run_small(aspects, "  invoke b.open()\n");
    let emits: Vec<&str> = t.iter().filter(|e| e.starts_with("emit")).map(|e| &e[5..]).collect();
    assert_eq!(emits, ["first-before", "second-before", "opened", "second-after", "first-after"]);
}

#[test]
fn runaway_recursion_is_reported() {
    let model = load_model("package p\n\nclass Loop\n  method void go()\n    call this.go(0)\n").unwrap();
    let woven = Woven::new(&model, &[]).unwrap();
    let rt = Runtime::new(&woven).unwrap();
    let s = parse_scenarios("scenario s\n  new l Loop\n  invoke l.go()\n").unwrap().remove(0);
    let run = rt.run(&s.resolve(&model).unwrap(), false);
    assert_eq!(run.error, Some(RuntimeError::StackLimit));
}

#[test]
fn fixture_suites_pass_their_expectations() {
    for name in FIXTURES {
        let fx = Fixture::load(name);
        let woven = fx.woven();
        let rt = Runtime::new(&woven).unwrap();
        for s in &fx.scenarios {
            let run = rt.run(s, true);
            assert!(run.error.is_none(), "{}/{}", name, s.name);
            if let Some(exp) = &s.expected {
                assert!(compare_traces(&run.trace.events, exp).passed(), "{}/{}", name, s.name);
            }
            assert!(weaving_violations(&woven, &run).is_empty(), "{}/{}", name, s.name);
        }
    }
}

#[test]
fn undo_after_advice_runs_in_reverse_precedence() {
    let fx = Fixture::load("undo");
    let woven = fx.woven();
    let rt = Runtime::new(&woven).unwrap();
    let s = fx.scenarios.iter().find(|s| s.name == "paste").unwrap();
    let run = rt.run(s, false);
    let afters: Vec<&str> = run
        .trace
        .events
        .iter()
        .filter_map(|e| match e {
            TraceEvent::AdviceFired { aspect, kind, .. } if kind.runs_after() => Some(aspect.as_str()),
            _ => None,
        })
        .collect();
    assert_eq!(afters, ["UndoSupport", "ViewRefresh"]);
}

#[test]
fn random_scenarios_respect_weaving_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut kinds = std::collections::BTreeMap::new();
    let mut suppressed = 0;
    for name in FIXTURES {
        let fx = Fixture::load(name);
        for i in 0..150 {
            let probe = random_probe_aspect(&fx.woven().model, &mut rng);
            let mut aspects = fx.aspects.clone();
            aspects.extend(load_aspects(&probe).unwrap());
            let woven = Woven::new(&fx.model, &aspects).unwrap();
            let rt = Runtime::new(&woven).unwrap();
            let s = random_scenario(&woven.model, &mut rng, i);
            let run = rt.run(&s, true);
            let v = weaving_violations(&woven, &run);
            assert!(v.is_empty(), "{}\n{}\n{:?}", probe, s.render(), v);
            for e in &run.trace.events {
                if let TraceEvent::AdviceFired { kind, .. } = e {
                    *kinds.entry(*kind).or_insert(0) += 1;
                }
            }
            let arounds = run.trace.events.iter().filter(|e| matches!(e, TraceEvent::AdviceFired { kind: AdviceKind::Around, .. })).count();
            let proceeding = probe.lines().filter(|l| l.contains("around") && l.contains("proceed")).count();
            suppressed += usize::from(arounds > 0 && proceeding == 0 && probe.contains("around"));
        }
    }
    assert_eq!(kinds.len(), 4, "{:?}", kinds);
    assert!(suppressed > 0);
}

#[test]
fn checker_detects_tampered_traces() {
    let model = load_model(SMALL).unwrap();
    let aspects = load_aspects("aspect A\n  before(): execution(* Box.open()) { emit b }\n  after(): execution(* Box.open()) { emit a }\n").unwrap();
    let woven = Woven::new(&model, &aspects).unwrap();
    let rt = Runtime::new(&woven).unwrap();
    let s = parse_scenarios("scenario s\n  new b Box\n  invoke b.open()\n").unwrap().remove(0);
    let run = rt.run(&s.resolve(&model).unwrap(), true);
    assert!(weaving_violations(&woven, &run).is_empty());

    let mut swapped = run.clone();
    swapped.trace.events.swap(0, 2);
    assert!(!weaving_violations(&woven, &swapped).is_empty());

    let mut unbalanced = run.clone();
    unbalanced.trace.events.retain(|e| !matches!(e, TraceEvent::Exit { .. }));
    assert!(!weaving_violations(&woven, &unbalanced).is_empty());

    let mut early_after = run.clone();
    let after = early_after.trace.events.remove(5);
    early_after.trace.events.insert(0, after);
    assert!(!weaving_violations(&woven, &early_after).is_empty());

    let around = load_aspects("aspect A\n  around(): execution(* Box.open()) { emit x }\n").unwrap();
    let woven2 = Woven::new(&model, &around).unwrap();
    let mut leaked = Runtime::new(&woven2).unwrap().run(&s.resolve(&model).unwrap(), true);
    let shadow = leaked.trace.events[0].shadow().unwrap();
    let this = aspectlab::trace::ObjectRef { class: "p.Box".into(), serial: 1 };
    leaked.trace.events.push(TraceEvent::Enter { shadow, this });
    leaked.trace.events.push(TraceEvent::Exit { shadow });
    assert!(!weaving_violations(&woven2, &leaked).is_empty());

    let cflow = load_aspects("aspect A\n  before(): cflow(execution(* Box.shut())) && execution(* Box.open()) { emit n }\n").unwrap();
    let woven3 = Woven::new(&model, &cflow).unwrap();
    let mut stray = Runtime::new(&woven3).unwrap().run(&s.resolve(&model).unwrap(), true);
    stray.trace.events.insert(0, TraceEvent::AdviceFired { aspect: "A".into(), index: 0, kind: AdviceKind::Before, shadow });
    assert!(!weaving_violations(&woven3, &stray).is_empty());
}

#[test]
fn advice_kind_keywords_round_trip() {
    for k in [AdviceKind::Before, AdviceKind::After, AdviceKind::AfterReturning, AdviceKind::Around] {
        assert_eq!(k.keyword().parse::<AdviceKind>().unwrap(), k);
    }
}
