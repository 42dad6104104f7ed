use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use aspectlab::adequacy::{check_coverage, generate_obligations, stub_requirements, AdequacyConfig, ConditionMode, Obligation};
use aspectlab::aspect::{parse_aspects, AspectDef, Woven};
use aspectlab::interp::{Execution, Runtime};
use aspectlab::matcher::Matcher;
use aspectlab::model::{load_model, ProgramModel};
use aspectlab::mutation::{compute_baseline, generate_mutants, run_mutation_analysis, MutationConfig, MutationError, Operator, TSV_HEADER};
use aspectlab::pointcut::parse_pointcut;
use aspectlab::scenario::{parse_scenarios, Scenario};
use aspectlab::trace::{compare_traces, Comparison};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "aspectlab", version, about = "Weave, run, cover and mutate aspect-oriented program models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load and cross-check all inputs.
    Check(Inputs),
    /// List join point shadows of the woven model.
    Shadows {
        #[command(flatten)]
        inputs: Inputs,
        /// Only shadows where this pointcut could match.
        #[arg(long)]
        pointcut: Option<String>,
        /// Only shadows of a named pointcut, as `Aspect.name`.
        #[arg(long)]
        named: Option<String>,
    },
    /// Execute scenarios and compare with expected traces.
    Run {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long, default_value = "aspectlab-out")]
        out: PathBuf,
    },
    /// List adequacy obligations.
    Obligations {
        #[command(flatten)]
        inputs: Inputs,
        #[command(flatten)]
        adequacy: AdequacyArgs,
    },
    /// Check obligations against scenario runs.
    Coverage {
        #[command(flatten)]
        inputs: Inputs,
        #[command(flatten)]
        adequacy: AdequacyArgs,
        #[arg(long, default_value_t = 1.0)]
        min_coverage: f64,
        /// Run log written by `run`; scenarios are executed inline otherwise.
        #[arg(long)]
        runlog: Option<PathBuf>,
    },
    /// Generate mutants and score the scenario suite.
    Mutate {
        #[command(flatten)]
        inputs: Inputs,
        /// Comma-separated operator ids.
        #[arg(long, value_delimiter = ',')]
        operators: Vec<String>,
        #[arg(long, default_value = "aspectlab-out")]
        out: PathBuf,
        /// JSON-lines log, one record per mutant.
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long, default_value_t = 0.0)]
        min_score: f64,
        #[arg(long, default_value_t = 3)]
        sibling_cap: usize,
    },
}

#[derive(Args, Clone)]
struct Inputs {
    /// Program model (`.apm`).
    #[arg(long)]
    model: PathBuf,
    /// Aspect files (`.apa`).
    #[arg(long = "aspects", num_args = 1..)]
    aspects: Vec<PathBuf>,
    /// Scenario files (`.scn`).
    #[arg(long = "scenarios", num_args = 1..)]
    scenarios: Vec<PathBuf>,
    /// Worker threads for scenario and mutant execution.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args, Clone)]
struct AdequacyArgs {
    /// `each-condition` or `exhaustive`.
    #[arg(long, default_value = "each-condition", value_parser = parse_mode)]
    mode: ConditionMode,
    #[arg(long)]
    per_shadow: bool,
    /// Model used for abstract aspects' obligations.
    #[arg(long)]
    stub_model: Option<PathBuf>,
}

fn parse_mode(s: &str) -> Result<ConditionMode, String> {
    ConditionMode::parse(s).ok_or_else(|| format!("unknown condition mode `{}`", s))
}

enum Failure {
    Input(String),
    Analysis(String),
}

type Outcome = Result<(), Failure>;

fn input<E: std::fmt::Display>(path: &Path) -> impl Fn(E) -> Failure + '_ {
    move |e| Failure::Input(format!("{}: {}", path.display(), e))
}

fn color() -> bool {
    std::env::var("ASPECTLAB_COLOR").is_ok_and(|v| v == "1")
}

fn diag(level: &str, message: &str) {
    if color() {
        let code = if level == "error" { 31 } else { 33 };
        eprintln!("\x1b[{}m{}\x1b[0m: {}", code, level, message);
    } else {
        eprintln!("{}: {}", level, message);
    }
}

struct Loaded {
    model: ProgramModel,
    aspects: Vec<AspectDef>,
    scenarios: Vec<Scenario>,
    woven: Woven,
    warnings: Vec<String>,
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(input(path))
}

fn load_stub(path: &Path) -> Result<ProgramModel, Failure> {
    load_model(&read(path)?).map_err(input(path))
}

fn load(inputs: &Inputs) -> Result<Loaded, Failure> {
    if let Some(n) = inputs.jobs {
        // Ignored when a pool already exists.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    let model = load_model(&read(&inputs.model)?).map_err(input(&inputs.model))?;
    let mut aspects = Vec::new();
    let mut warnings = Vec::new();
    for p in &inputs.aspects {
        let file = parse_aspects(&read(p)?).map_err(input(p))?;
        warnings.extend(file.warnings.into_iter().map(|w| format!("{}: {}", p.display(), w)));
        aspects.extend(file.aspects);
    }
    let mut scenarios = model.scenarios.clone();
    for p in &inputs.scenarios {
        scenarios.extend(parse_scenarios(&read(p)?).map_err(input(p))?);
    }
    let woven = Woven::new(&model, &aspects).map_err(|e| Failure::Input(e.to_string()))?;
    let scenarios = scenarios
        .iter()
        .map(|s| s.resolve(&woven.model))
        .collect::<Result<Vec<_>, _>>()
        .map_err(Failure::Input)?;
    for a in aspects.iter().filter(|a| a.is_abstract) {
        let missing = stub_requirements(a, &model);
        if !missing.is_empty() {
            warnings.push(format!(
                "StubRequired: abstract aspect {} names types absent from the model: {}",
                a.name,
                missing.join(", ")
            ));
        }
    }
    Ok(Loaded {
        model,
        aspects,
        scenarios,
        woven,
        warnings,
    })
}

fn print_warnings(l: &Loaded) {
    for w in &l.warnings {
        diag("warning", w);
    }
}

fn run_all(l: &Loaded, record: bool) -> Result<Vec<Execution>, Failure> {
    let rt = Runtime::new(&l.woven).map_err(|e| Failure::Input(e.to_string()))?;
    Ok(l.scenarios.iter().map(|s| rt.run(s, record)).collect())
}

fn cmd_check(inputs: &Inputs) -> Outcome {
    let l = load(inputs)?;
    print_warnings(&l);
    println!(
        "ok\t{} types\t{} aspects\t{} scenarios\t{} shadows",
        l.woven.model.types.len(),
        l.aspects.len(),
        l.scenarios.len(),
        Matcher::new(&l.woven.model).shadows().len()
    );
    Ok(())
}

fn cmd_shadows(inputs: &Inputs, pointcut: Option<&str>, named: Option<&str>) -> Outcome {
    let l = load(inputs)?;
    let m = Matcher::new(&l.woven.model);
    let filter = match (pointcut, named) {
        (Some(text), _) => {
            let expr = parse_pointcut(text).map_err(|e| Failure::Input(format!("--pointcut: {}", e)))?;
            let scope = l.woven.aspects.first();
            let set = match scope {
                Some(a) => aspectlab::matcher::static_shadows(&l.woven.model, &expr, a),
                None => aspectlab::matcher::static_shadows(&l.woven.model, &expr, &aspectlab::pointcut::NoScope),
            }
            .map_err(|e| Failure::Input(format!("--pointcut: {}", e)))?;
            Some(set)
        }
        (None, Some(label)) => {
            let (aspect, name) = label
                .split_once('.')
                .ok_or_else(|| Failure::Input("--named expects `Aspect.pointcut`".into()))?;
            let a = l
                .woven
                .aspects
                .iter()
                .find(|a| a.name == aspect)
                .ok_or_else(|| Failure::Input(format!("no aspect `{}`", aspect)))?;
            let tree = a.pointcut_tree(name).map_err(|e| Failure::Input(e.to_string()))?;
            Some(m.static_shadows(&tree))
        }
        (None, None) => None,
    };
    let mut out = String::new();
    for s in m.shadows() {
        if filter.as_ref().is_none_or(|f| f.contains(&s.id)) {
            out.push_str(&format!("{}\n", s));
        }
    }
    print!("{}", out);
    Ok(())
}

fn write_file(path: &Path, text: &str) -> Outcome {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(input(dir))?;
    }
    fs::write(path, text).map_err(input(path))
}

fn write_metadata(out: &Path, command: &str) -> Outcome {
    let secs = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let meta = serde_json::json!({
        "command": command,
        "finished_unix_seconds": secs,
        "version": env!("CARGO_PKG_VERSION"),
    });
    write_file(&out.join("run-meta.json"), &format!("{}\n", meta))
}

fn cmd_run(inputs: &Inputs, out: &Path) -> Outcome {
    let l = load(inputs)?;
    print_warnings(&l);
    if l.scenarios.is_empty() {
        diag("warning", "no scenarios to run");
    }
    let runs = run_all(&l, true)?;
    let mut failed = 0;
    for (s, r) in l.scenarios.iter().zip(&runs) {
        write_file(&out.join("traces").join(format!("{}.trace", s.name)), &r.trace.render())?;
        let verdict = match (&r.error, &s.expected) {
            (Some(e), _) => {
                failed += 1;
                format!("FAIL\terror at event {}: {}", r.trace.events.len(), e)
            }
            (None, Some(exp)) => match compare_traces(&r.trace.events, exp) {
                Comparison::Pass => "pass".to_string(),
                Comparison::Diverged { index } => {
                    failed += 1;
                    format!("FAIL\tdiverged at event {}", index)
                }
            },
            (None, None) => "ran\tno expected trace".to_string(),
        };
        println!("{}\t{}", s.name, verdict);
    }
    let log = serde_json::to_string(&runs).map_err(|e| Failure::Input(e.to_string()))?;
    write_file(&out.join("runlog.json"), &format!("{}\n", log))?;
    write_metadata(out, "run")?;
    if failed > 0 {
        return Err(Failure::Analysis(format!("{} of {} scenarios failed", failed, runs.len())));
    }
    Ok(())
}

fn obligations(l: &Loaded, args: &AdequacyArgs) -> Result<(Vec<Obligation>, Vec<String>), Failure> {
    let config = AdequacyConfig {
        mode: args.mode,
        per_shadow: args.per_shadow,
    };
    let set = generate_obligations(&l.woven, config).map_err(|e| Failure::Input(e.to_string()))?;
    let mut obs = set.obligations;
    let mut warnings = set.warnings;
    let abstracts: Vec<AspectDef> = l
        .aspects
        .iter()
        .filter(|a| a.is_abstract)
        .map(|a| AspectDef {
            is_abstract: false,
            ..a.clone()
        })
        .collect();
    if !abstracts.is_empty() {
        match &args.stub_model {
            Some(path) => {
                let stub = load_stub(path)?;
                let woven = Woven::new(&stub, &abstracts).map_err(input(path))?;
                let extra = generate_obligations(&woven, config).map_err(input(path))?;
                warnings.extend(extra.warnings);
                obs.extend(extra.obligations.into_iter().map(|mut o| {
                    o.id = format!("S-{}", o.id);
                    o
                }));
            }
            None => warnings.push("abstract aspects produce no obligations without --stub-model".into()),
        }
    }
    Ok((obs, warnings))
}

fn cmd_obligations(inputs: &Inputs, args: &AdequacyArgs) -> Outcome {
    let l = load(inputs)?;
    print_warnings(&l);
    let (obs, warnings) = obligations(&l, args)?;
    for w in &warnings {
        diag("warning", w);
    }
    let mut out = String::new();
    for o in &obs {
        out.push_str(&format!("{}\n", o));
    }
    print!("{}", out);
    Ok(())
}

fn cmd_coverage(inputs: &Inputs, args: &AdequacyArgs, min: f64, runlog: Option<&Path>) -> Outcome {
    let l = load(inputs)?;
    print_warnings(&l);
    let (mut obs, warnings) = obligations(&l, args)?;
    for w in &warnings {
        diag("warning", w);
    }
    let runs: Vec<Execution> = match runlog {
        Some(p) => serde_json::from_str(&read(p)?).map_err(input(p))?,
        None => run_all(&l, true)?,
    };
    let report = check_coverage(&mut obs, &runs, &l.woven.model.fingerprint()).map_err(|e| Failure::Input(e.to_string()))?;
    let mut out = String::new();
    for o in &obs {
        out.push_str(&format!("{}\n", o));
    }
    out.push_str(&report.render());
    print!("{}", out);
    if report.overall + 1e-12 < min {
        return Err(Failure::Analysis(format!(
            "coverage {:.4} is below the required {:.4}",
            report.overall, min
        )));
    }
    Ok(())
}

fn cmd_mutate(inputs: &Inputs, ops: &[String], out: &Path, log: Option<&Path>, min_score: f64, cap: usize) -> Outcome {
    let l = load(inputs)?;
    print_warnings(&l);
    let operators = if ops.is_empty() {
        Operator::ALL.to_vec()
    } else {
        ops.iter()
            .map(|s| s.trim().parse::<Operator>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(Failure::Input)?
    };
    let config = MutationConfig {
        operators,
        sibling_cap: cap,
    };
    let baseline = compute_baseline(&l.model, &l.aspects, &l.scenarios).map_err(|e| match e {
        MutationError::StaleBaseline { .. } | MutationError::Aspect(_) | MutationError::Scenario(_) => {
            Failure::Input(e.to_string())
        }
        MutationError::BaselineFails { .. } => Failure::Analysis(e.to_string()),
    })?;
    let mut mutants = generate_mutants(&l.aspects, &l.model, &config);
    let score = run_mutation_analysis(&l.model, &l.aspects, &l.scenarios, &baseline, &mut mutants)
        .map_err(|e| Failure::Input(e.to_string()))?;
    let mut tsv = format!("{}\n", TSV_HEADER);
    for m in &mutants {
        tsv.push_str(&m.tsv_row());
        tsv.push('\n');
    }
    write_file(&out.join("mutants.tsv"), &tsv)?;
    if let Some(p) = log {
        let mut lines = String::new();
        for m in &mutants {
            let rec = serde_json::json!({
                "id": m.id,
                "operator": m.operator.id(),
                "location": m.location,
                "delta": m.delta,
                "status": m.status,
            });
            lines.push_str(&format!("{}\n", rec));
        }
        write_file(p, &lines)?;
    }
    write_metadata(out, "mutate")?;
    let value = score.score();
    let summary = format!(
        "{}killed\t{}\nsurvived\t{}\nstillborn\t{}\nflagged-equivalent\t{}\nscore\t{}\n",
        tsv,
        score.killed,
        score.survived,
        score.stillborn,
        score.flagged,
        value.map_or("undefined".to_string(), |v| format!("{:.4}", v))
    );
    let mut stdout = std::io::stdout().lock();
    let _ = stdout.write_all(summary.as_bytes());
    if value.unwrap_or(1.0) + 1e-12 < min_score {
        return Err(Failure::Analysis(format!("mutation score below {}", min_score)));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Check(inputs) => cmd_check(inputs),
        Command::Shadows { inputs, pointcut, named } => cmd_shadows(inputs, pointcut.as_deref(), named.as_deref()),
        Command::Run { inputs, out } => cmd_run(inputs, out),
        Command::Obligations { inputs, adequacy } => cmd_obligations(inputs, adequacy),
        Command::Coverage {
            inputs,
            adequacy,
            min_coverage,
            runlog,
        } => cmd_coverage(inputs, adequacy, *min_coverage, runlog.as_deref()),
        Command::Mutate {
            inputs,
            operators,
            out,
            log,
            min_score,
            sibling_cap,
        } => cmd_mutate(inputs, operators, out, log.as_deref(), *min_score, *sibling_cap),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Analysis(m)) => {
            diag("error", &m);
            ExitCode::from(1)
        }
        Err(Failure::Input(m)) => {
            diag("error", &m);
            ExitCode::from(2)
        }
    }
}
