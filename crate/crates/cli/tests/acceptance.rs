//! Acceptance suite: one PASS/FAIL line per criterion.

#[path = "../../core/tests/support/mod.rs"]
mod support;

use std::collections::BTreeSet;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use aspectlab::adequacy::{check_coverage, gen_hierarchy_obligations, gen_polymorphic_obligations, generate_obligations, AdequacyConfig, ConditionMode, ObligationKind, Status};
use aspectlab::aspect::{load_aspects, Woven};
use aspectlab::interp::{Execution, Runtime};
use aspectlab::matcher::{Matcher, ShadowKind};
use aspectlab::mutation::{compute_baseline, generate_mutants, run_mutation_analysis, traceability_table, Mutant, MutantStatus, MutationConfig, Operator, TSV_HEADER};
use aspectlab::pointcut::{inline, parse_pointcut, NoScope};
use aspectlab::scenario::Scenario;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use support::*;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

const COMMAND_EXECUTE: &str = "this(aCommand) && execution(void AbstractCommand.execute()) && !within(*..DrawApplication.*)";

fn runs(woven: &Woven, scenarios: &[Scenario]) -> Vec<Execution> {
    let rt = Runtime::new(woven).unwrap();
    scenarios.iter().map(|s| rt.run(s, true)).collect()
}

fn named_suite(fx: &Fixture) -> Vec<Scenario> {
    fx.scenarios.iter().filter(|s| !s.name.contains('-')).cloned().collect()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let fx = Fixture::load("contract");
    let woven = fx.woven();
    let tree = woven.aspects[0].pointcut_tree("commandExecute").map_err(|e| e.to_string())?;
    let matcher = Matcher::new(&woven.model);
    let shadows = matcher.static_shadows(&tree);
    let elapsed = start.elapsed().as_secs_f64();
    ensure(shadows.len() == 17, format!("{} shadows", shadows.len()))?;
    ensure(
        shadows.iter().all(|s| matcher.shadow(*s).kind == ShadowKind::Execution),
        "non-execution shadow selected",
    )?;
    ensure(elapsed < 1.0, format!("{:.3}s", elapsed))?;
    Ok(format!("17 execution shadows in {:.3}s", elapsed))
}

fn criterion_2() -> Outcome {
    let fx = Fixture::load("contract");
    let woven = fx.woven();
    let cc = |mode| -> Result<usize, String> {
        let set = generate_obligations(&woven, AdequacyConfig { mode, per_shadow: false }).map_err(|e| e.to_string())?;
        Ok(set.obligations.iter().filter(|o| matches!(o.kind, ObligationKind::ConditionCombo { .. })).count())
    };
    let (each, all) = (cc(ConditionMode::EachCondition)?, cc(ConditionMode::Exhaustive)?);
    ensure(each == 3 + 1 && all == 1 << 3, format!("each-condition {} exhaustive {}", each, all))?;

    let set = generate_obligations(&woven, AdequacyConfig::default()).map_err(|e| e.to_string())?;
    let wb = set
        .obligations
        .iter()
        .filter(|o| matches!(&o.kind, ObligationKind::WildcardBoundary { site, .. } if site.owner == "CommandContracting.commandExecute" && site.primitive == 2))
        .count();
    let stars = "*..DrawApplication.*".matches('*').count();
    ensure(wb == 2 * stars, format!("wildcard obligations {}", wb))?;

    let probe = load_aspects("aspect H\n  before(): call(* Command+.*(..)) { emit h }\n").map_err(|e| e.to_string())?;
    let hw = Woven::new(&fx.model, &probe).map_err(|e| e.to_string())?;
    let (hb, _) = gen_hierarchy_obligations(&hw.aspects, &hw.model).map_err(|e| e.to_string())?;
    let hb = hb.iter().filter(|(k, _)| matches!(k, ObligationKind::HierarchyBoundary { pattern: 1, .. })).count();
    let command = hw.model.types.keys().find(|k| k.ends_with(".Command")).ok_or("no Command")?;
    let decl = &hw.model.types[command];
    let supers = decl.extends.iter().count() + decl.implements.len();
    ensure(hb == 1 + supers, format!("hierarchy obligations {} for {} supertypes", hb, supers))?;
    Ok(format!("ConditionCombo {}/{}, WildcardBoundary {}, HierarchyBoundary(Command+) {}", each, all, wb, hb))
}

fn mutate(fx: &Fixture, scenarios: &[Scenario]) -> Result<Vec<Mutant>, String> {
    let mut mutants = generate_mutants(&fx.aspects, &fx.model, &MutationConfig::default());
    let baseline = compute_baseline(&fx.model, &fx.aspects, scenarios).map_err(|e| e.to_string())?;
    run_mutation_analysis(&fx.model, &fx.aspects, scenarios, &baseline, &mut mutants).map_err(|e| e.to_string())?;
    Ok(mutants)
}

fn criterion_3() -> Outcome {
    let fx = Fixture::load("contract");
    let woven = fx.woven();
    let named = named_suite(&fx);
    ensure(named.len() == 17, format!("{} named scenarios", named.len()))?;
    let mut set = generate_obligations(&woven, AdequacyConfig { mode: ConditionMode::Exhaustive, per_shadow: false }).map_err(|e| e.to_string())?;
    let report = check_coverage(&mut set.obligations, &runs(&woven, &named), &woven.model.fingerprint()).map_err(|e| e.to_string())?;
    ensure(report.tally("JoinPointCoverage") == (17, 17), format!("join points {:?}", report.tally("JoinPointCoverage")))?;
    let ttf = set
        .obligations
        .iter()
        .find(|o| matches!(&o.kind, ObligationKind::ConditionCombo { vector, .. } if vector == &vec![true, true, false]))
        .ok_or("no [T,T,F] obligation")?;
    ensure(ttf.status == Status::Unmet, "[T,T,F] met without the anonymous scenario")?;
    let hint = report.unmet.iter().find(|(id, _)| id == &ttf.id).map(|(_, h)| h.as_str()).unwrap_or("");
    ensure(hint.contains("within-clause never falsified"), format!("hint `{}`", hint))?;

    let dropped = |mutants: &[Mutant]| {
        mutants
            .iter()
            .find(|m| m.operator == Operator::PcLo && m.delta == "drop && !within(*..DrawApplication.*)")
            .map(|m| m.status.clone())
    };
    let reduced = dropped(&mutate(&fx, &named)?).ok_or("no within-dropping mutant")?;
    ensure(reduced == MutantStatus::Survived, format!("reduced suite: {}", reduced.label()))?;
    let mut full = named.clone();
    full.extend(fx.scenarios.iter().filter(|s| s.name == "anonymous-open").cloned());
    let killed = dropped(&mutate(&fx, &full)?).ok_or("no within-dropping mutant")?;
    ensure(
        matches!(&killed, MutantStatus::Killed { scenario, .. } if scenario == "anonymous-open"),
        format!("with anonymous scenario: {}", killed.label()),
    )?;
    Ok("[T,T,F] unmet, within-dropping PC-LO mutant survives, anonymous-open kills it".into())
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let exprs: Vec<_> = corpus()
        .iter()
        .map(|t| parse_pointcut(t).unwrap())
        .filter(|e| e.named_refs().is_empty())
        .collect();
    ensure(exprs.len() >= 30, format!("{} standalone corpus expressions", exprs.len()))?;
    let mut checks = 0;
    for name in FIXTURES {
        let fx = Fixture::load(name);
        let woven = fx.woven();
        let matcher = Matcher::new(&woven.model);
        ensure(woven.model.types.len() <= 50 && matcher.shadows().len() <= 200, format!("{} too large", name))?;
        for e in &exprs {
            let tree = inline(e, "", &[], &NoScope).map_err(|err| err.to_string())?;
            let fast = matcher.static_shadows(&tree);
            let slow = oracle_static_shadows(&woven.model, e);
            ensure(fast == slow, format!("{} on {}: {:?} vs {:?}", e, name, fast, slow))?;
            checks += 1;
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    ensure(elapsed < 5.0, format!("{:.2}s", elapsed))?;
    Ok(format!("{} fixture x pointcut pairs agree in {:.2}s", checks, elapsed))
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut total = 0;
    for name in FIXTURES {
        let fx = Fixture::load(name);
        let plain = fx.woven();
        let plain_rt = Runtime::new(&plain).map_err(|e| e.to_string())?;
        for i in 0..1000 {
            let s = random_scenario(&plain.model, &mut rng, i);
            let run = plain_rt.run(&s, true);
            let v = weaving_violations(&plain, &run);
            ensure(v.is_empty(), format!("{} {}: {:?}", name, s.name, v))?;

            let probe = random_probe_aspect(&plain.model, &mut rng);
            let mut aspects = fx.aspects.clone();
            aspects.extend(load_aspects(&probe).map_err(|e| e.to_string())?);
            let woven = Woven::new(&fx.model, &aspects).map_err(|e| e.to_string())?;
            let rt = Runtime::new(&woven).map_err(|e| e.to_string())?;
            let run = rt.run(&s, true);
            let v = weaving_violations(&woven, &run);
            ensure(v.is_empty(), format!("{} {} with probe\n{}: {:?}", name, s.name, probe, v))?;
            total += 1;
        }
    }
    Ok(format!("{} randomized scenarios, each with and without a probe aspect, zero violations", total))
}

const FAULTS: [&str; 12] = [
    "Wrong method name in introduction",
    "Wrong class name in a member-introduction",
    "Inconsistent parent declaration",
    "Inconsistent overridden method introduction",
    "Omitted parent interface",
    "Wrong primitive pointcut",
    "Errors in the conditional logic",
    "Wrong type, method, field, or constructor pattern in pointcut",
    "Wrong advice specification",
    "Wrong or missing proceed in around advice",
    "Wrong or missing advice precedence",
    "Advice code causing a method to break its class invariant or to fail to meet its postcondition",
];

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let mut operators = BTreeSet::new();
    let mut tallies = Vec::new();
    for name in FIXTURES {
        let fx = Fixture::load(name);
        let mutants = mutate(&fx, &fx.scenarios)?;
        let manifest = read(&format!("{}.mutants.tsv", name));
        let mut lines = manifest.lines();
        ensure(lines.next() == Some(TSV_HEADER), format!("{} manifest header", name))?;
        let expected: Vec<&str> = lines.collect();
        let actual: Vec<String> = mutants.iter().map(|m| m.tsv_row()).collect();
        ensure(actual == expected, format!("{} differs from its manifest", name))?;
        let killed = mutants.iter().filter(|m| matches!(m.status, MutantStatus::Killed { .. })).count();
        let counted = mutants
            .iter()
            .filter(|m| !matches!(m.status, MutantStatus::Stillborn(_) | MutantStatus::FlaggedEquivalent))
            .count();
        ensure(killed == counted, format!("{}: {}/{} killed", name, killed, counted))?;
        tallies.push(format!("{} {}/{}", name, killed, counted));
        operators.extend(mutants.iter().map(|m| m.operator));
    }
    ensure(operators.len() == Operator::ALL.len(), format!("{} operators produced mutants", operators.len()))?;
    let table = traceability_table();
    for f in FAULTS {
        ensure(table.contains(f), format!("traceability lacks `{}`", f))?;
    }
    let elapsed = start.elapsed().as_secs_f64();
    ensure(elapsed < 30.0, format!("{:.2}s", elapsed))?;
    Ok(format!("score 1.0 ({}), 12/12 operators, 12/12 faults traced, {:.2}s", tallies.join(", "), elapsed))
}

fn criterion_7() -> Outcome {
    let c = corpus();
    ensure(c.len() >= 50, format!("{} expressions", c.len()))?;
    for quoted in [
        COMMAND_EXECUTE,
        "within(*..DrawApplication.*)",
        "execution(void AbstractCommand.execute())",
        "call(Object Clipboard.getContents()) && withincode(void PasteCommand.execute())",
        "this(cmd) && execution(void PasteCommand.execute())",
        "this(aCommand) && inExecuteMethod() && !inAbstractClass()",
    ] {
        ensure(c.iter().any(|t| t == quoted), format!("corpus lacks `{}`", quoted))?;
    }
    for text in &c {
        let first = parse_pointcut(text).map_err(|e| format!("{}: {}", text, e))?;
        let second = parse_pointcut(&first.to_string()).map_err(|e| format!("{}: {}", first, e))?;
        ensure(first == second, format!("`{}` does not round-trip", text))?;
    }
    Ok(format!("{}/{} expressions round-trip", c.len(), c.len()))
}

fn criterion_8() -> Outcome {
    let fx = Fixture::load("persistence");
    let woven = fx.woven();
    let matcher = Matcher::new(&woven.model);
    let mut rc = BTreeSet::new();
    let mut tm = BTreeSet::new();
    for (k, _) in gen_polymorphic_obligations(&matcher) {
        match k {
            ObligationKind::AllReceiverClasses { class, .. } => {
                rc.insert(class);
            }
            ObligationKind::AllTargetMethods { declaring_type, .. } => {
                tm.insert(declaring_type);
            }
            _ => {}
        }
    }
    let site = matcher
        .shadows()
        .iter()
        .find(|s| s.kind == ShadowKind::Call && s.signature.method == "write")
        .ok_or("no polymorphic call site")?;
    let oracle = oracle_dispatch(&woven.model, &site.signature.declaring_type, "write", 1);
    let brute_tm: BTreeSet<String> = oracle.iter().map(|(_, d)| d.clone()).collect();
    ensure(rc.len() == 3, format!("AllReceiverClasses {}", rc.len()))?;
    ensure(tm == brute_tm, format!("AllTargetMethods {:?} vs {:?}", tm, brute_tm))?;
    Ok(format!("AllReceiverClasses {}, AllTargetMethods {} = brute force", rc.len(), tm.len()))
}

fn cli(args: &[&str], out: &Path) -> Result<(Option<i32>, Vec<u8>), String> {
    let mut full: Vec<String> = args.iter().map(|s| s.to_string()).collect();
    if matches!(args[0], "mutate") {
        full.push("--out".into());
        full.push(out.display().to_string());
    }
    let o = Command::new(env!("CARGO_BIN_EXE_aspectlab"))
        .args(&full)
        .current_dir(fixtures_dir())
        .output()
        .map_err(|e| e.to_string())?;
    Ok((o.status.code(), o.stdout))
}

fn criterion_9() -> Outcome {
    let inputs: Vec<Vec<&str>> = vec![
        vec!["--model", "contract.apm", "--aspects", "contract.apa", "--scenarios", "contract_named.scn", "contract_extra.scn"],
        vec!["--model", "persistence.apm", "--aspects", "persistence.apa", "--scenarios", "persistence.scn"],
        vec!["--model", "undo.apm", "--aspects", "undo.apa", "--scenarios", "undo.scn"],
    ];
    let mut compared = 0;
    for input in &inputs {
        for sub in ["check", "shadows", "obligations", "coverage", "mutate"] {
            let dirs = [tempfile::tempdir().map_err(|e| e.to_string())?, tempfile::tempdir().map_err(|e| e.to_string())?];
            let mut outputs = Vec::new();
            for d in &dirs {
                let mut args = vec![sub];
                args.extend(input.iter().copied());
                let (code, stdout) = cli(&args, d.path())?;
                ensure(code.is_some_and(|c| c < 2), format!("{} {} exited {:?}", sub, input[1], code))?;
                let mut files = Vec::new();
                if sub == "mutate" {
                    files.push(std::fs::read(d.path().join("mutants.tsv")).map_err(|e| e.to_string())?);
                }
                outputs.push((code, stdout, files));
            }
            ensure(outputs[0] == outputs[1], format!("{} on {} differs between runs", sub, input[1]))?;
            compared += 1;
        }
    }
    Ok(format!("{} subcommand runs byte-identical", compared))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("contract shadows", criterion_1),
        ("obligation counts", criterion_2),
        ("coverage gap", criterion_3),
        ("matcher oracle", criterion_4),
        ("weaving order", criterion_5),
        ("mutation suite", criterion_6),
        ("parser round-trip", criterion_7),
        ("polymorphic obligations", criterion_8),
        ("determinism", criterion_9),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("criterion {} PASS {}: {}", i + 1, name, detail),
            Err(detail) => {
                failed += 1;
                println!("criterion {} FAIL {}: {}", i + 1, name, detail);
            }
        }
    }
    if failed > 0 {
        eprintln!("{} acceptance criteria failed", failed);
        std::process::exit(1);
    }
}
