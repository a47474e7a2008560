//! `asgmon`: check scenes against abstract scene graph properties.
//!
//! Exit codes: 0 all verdicts satisfied (or a non-monitoring command
//! succeeded), 1 at least one violation, 2 usage or input error, 3 error
//! verdicts present, 4 the brute-force oracle disagreed with the matcher.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use asg_core::dot::{asg_to_dot, csg_to_dot};
use asg_core::matcher::{brute_force_embeddings_with, find_embeddings_with, ORACLE_NODE_BOUND};
use asg_core::monitor::{reference_comparison, StreamMonitor};
use asg_core::scenario_lib::{
    builtin_asg, builtin_asgs, generate_trace, ScenarioId, ScenarioScript,
};
use asg_core::synthetic::bench_instance;
use asg_core::{
    parse_asg, sg_comparison_with, AbstractSceneGraph, ConcreteSceneGraph, MatchMode, ObjectModel,
    Options, PhaseAutomaton, Verdict, VerdictKind,
};

const EXIT_VIOLATED: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_ERROR_VERDICT: u8 = 3;
const EXIT_ORACLE: u8 = 4;

#[derive(Parser, Debug)]
#[command(
    name = "asgmon",
    version,
    about = "Runtime monitor for traffic scene graphs"
)]
struct Cli {
    /// Object model schema file, or `default` for the bundled one.
    #[arg(long, global = true, env = "ASGMON_OM", default_value = "default")]
    om: String,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Copy)]
struct MatchArgs {
    /// Comparison tolerance for noisy attributes.
    #[arg(long, default_value_t = 0.0)]
    epsilon: f64,
    /// Require matched subgraphs to be induced.
    #[arg(long)]
    induced: bool,
    /// Also run the brute-force reference and fail on any disagreement.
    #[arg(long)]
    oracle: bool,
}

impl MatchArgs {
    fn options(&self) -> Result<Options, Failure> {
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Failure::usage(format!(
                "--epsilon must be a non-negative number, got {}",
                self.epsilon
            )));
        }
        Ok(Options {
            epsilon: self.epsilon,
            mode: if self.induced {
                MatchMode::Induced
            } else {
                MatchMode::Monomorphism
            },
        })
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check one scene against one property.
    Check {
        /// Property file (`builtin:NAME` for a bundled one).
        #[arg(long)]
        asg: String,
        /// Scene record (JSON, one object).
        #[arg(long)]
        csg: PathBuf,
        #[command(flatten)]
        matching: MatchArgs,
    },
    /// Monitor a JSONL scene stream against a set of properties.
    Monitor {
        /// Directory of `.asg` files, or a single file. Defaults to the
        /// bundled phase properties when --phases is given.
        #[arg(long)]
        props: Option<PathBuf>,
        /// Scene stream; `-` for standard input.
        #[arg(long = "in")]
        input: PathBuf,
        /// Verdict stream; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Track the phase sequence of a bundled scenario.
        #[arg(long)]
        phases: Option<String>,
        #[command(flatten)]
        matching: MatchArgs,
    },
    /// Generate a scenario trace.
    Gen {
        /// Bundled scenario: `P1` or `P2`.
        #[arg(long, conflicts_with = "script", required_unless_present = "script")]
        scenario: Option<String>,
        /// Scenario script (JSON) instead of a bundled scenario.
        #[arg(long)]
        script: Option<PathBuf>,
        /// Gap perturbation `key=offset`, e.g. `oncoming_gap=-20`.
        #[arg(long, value_parser = parse_perturbation)]
        perturb: Vec<(String, f64)>,
        /// Scene stream (JSONL); standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the effective script as JSON instead of the trace.
        #[arg(long)]
        emit_script: bool,
    },
    /// Time sg_comparison on synthetic scenes.
    Bench {
        #[arg(long, default_value_t = 100)]
        nodes: usize,
        #[arg(long, default_value_t = 6)]
        pattern: usize,
        #[arg(long, default_value_t = 200)]
        frames: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Write a property or scene as Graphviz DOT.
    Export {
        /// Property file, or `builtin:NAME`.
        #[arg(long, conflicts_with = "csg", required_unless_present = "csg")]
        asg: Option<String>,
        /// Scene stream (JSONL).
        #[arg(long)]
        csg: Option<PathBuf>,
        /// Line of the scene stream to export.
        #[arg(long, default_value_t = 0)]
        frame: usize,
        /// DOT output; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    fn oracle(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_ORACLE,
            message: message.into(),
        }
    }
}

fn parse_perturbation(s: &str) -> Result<(String, f64), String> {
    let (key, value) = s
        .split_once('=')
        .ok_or_else(|| format!("expected key=offset, got `{s}`"))?;
    let offset: f64 = value
        .parse()
        .map_err(|_| format!("offset `{value}` is not a number"))?;
    if !offset.is_finite() {
        return Err(format!("offset `{value}` is not finite"));
    }
    Ok((key.to_string(), offset))
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

fn load_om(spec: &str) -> Result<ObjectModel, Failure> {
    if spec == "default" {
        return Ok(ObjectModel::bundled().clone());
    }
    let path = Path::new(spec);
    ObjectModel::parse(&read(path)?).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

fn load_asg(spec: &str, om: &ObjectModel) -> Result<AbstractSceneGraph, Failure> {
    if let Some(name) = spec.strip_prefix("builtin:") {
        if om != ObjectModel::bundled() {
            return Err(Failure::usage(
                "builtin properties need the default object model",
            ));
        }
        return builtin_asg(name)
            .ok_or_else(|| Failure::usage(format!("no bundled property `{name}`")));
    }
    let path = Path::new(spec);
    parse_asg(&read(path)?, om).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

fn load_props(path: &Path, om: &ObjectModel) -> Result<Vec<AbstractSceneGraph>, Failure> {
    let files: Vec<PathBuf> = if path.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(path)
            .map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "asg"))
            .collect();
        files.sort();
        files
    } else {
        vec![path.to_path_buf()]
    };
    if files.is_empty() {
        return Err(Failure::usage(format!(
            "no .asg files in {}",
            path.display()
        )));
    }
    let mut seen = BTreeSet::new();
    let mut asgs = Vec::new();
    for file in files {
        let asg = load_asg(&file.to_string_lossy(), om)?;
        if !seen.insert(asg.name().to_string()) {
            return Err(Failure::usage(format!(
                "{}: duplicate property name `{}`",
                file.display(),
                asg.name()
            )));
        }
        asgs.push(asg);
    }
    Ok(asgs)
}

fn parse_scene(line: &str, om: &ObjectModel, origin: &str) -> Result<ConcreteSceneGraph, Failure> {
    ConcreteSceneGraph::from_json(line, om).map_err(|e| Failure::usage(format!("{origin}: {e}")))
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            fs::File::create(p).map_err(|e| Failure::usage(format!("{}: {e}", p.display())))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn io_failure(e: io::Error) -> Failure {
    // A reader that went away (`| head`) is not worth a message.
    if e.kind() == io::ErrorKind::BrokenPipe {
        return Failure::usage("");
    }
    Failure::usage(format!("write failed: {e}"))
}

/// Cross-checks one comparison against the brute-force reference.
fn oracle_check(
    om: &ObjectModel,
    asg: &AbstractSceneGraph,
    csg: &ConcreteSceneGraph,
    options: Options,
    verdict: &Verdict,
) -> Result<(), Failure> {
    if csg.node_count() > ORACLE_NODE_BOUND {
        return Err(Failure::usage(format!(
            "--oracle handles scenes of at most {ORACLE_NODE_BOUND} objects, t={} has {}",
            csg.timestamp(),
            csg.node_count()
        )));
    }
    let fast: BTreeSet<_> = find_embeddings_with(om, asg, csg, usize::MAX, options.mode)
        .into_iter()
        .collect();
    let slow: BTreeSet<_> =
        brute_force_embeddings_with(om, asg, csg, ORACLE_NODE_BOUND, options.mode)
            .expect("size checked")
            .into_iter()
            .collect();
    if fast != slow {
        return Err(Failure::oracle(format!(
            "oracle divergence on `{}` at t={}: matcher found {} embeddings, brute force {}",
            asg.name(),
            csg.timestamp(),
            fast.len(),
            slow.len()
        )));
    }
    let reference = reference_comparison(om, asg, csg, options).expect("size checked");
    if !reference.admits(verdict) {
        return Err(Failure::oracle(format!(
            "oracle divergence on `{}` at t={}: verdict {} not admitted by the reference ({:?})",
            asg.name(),
            csg.timestamp(),
            verdict.to_json(None),
            reference.kind
        )));
    }
    Ok(())
}

fn exit_for(kinds: impl IntoIterator<Item = VerdictKind>) -> u8 {
    kinds.into_iter().fold(0, |code, k| {
        code.max(match k {
            VerdictKind::Satisfied => 0,
            VerdictKind::Violated => EXIT_VIOLATED,
            VerdictKind::Error => EXIT_ERROR_VERDICT,
        })
    })
}

fn check(om: &ObjectModel, asg: &str, csg: &Path, matching: MatchArgs) -> Result<u8, Failure> {
    let options = matching.options()?;
    let asg = load_asg(asg, om)?;
    let text = read(csg)?;
    let csg = parse_scene(text.trim(), om, &csg.display().to_string())?;
    let verdict = sg_comparison_with(om, &asg, &csg, options);
    if matching.oracle {
        oracle_check(om, &asg, &csg, options, &verdict)?;
    }
    println!("{}", verdict.to_json(None));
    Ok(exit_for([verdict.kind()]))
}

fn monitor(
    om: &ObjectModel,
    props: Option<&Path>,
    input: &Path,
    out: Option<&Path>,
    phases: Option<&str>,
    matching: MatchArgs,
) -> Result<u8, Failure> {
    let options = matching.options()?;
    let scenario = phases
        .map(|p| {
            p.parse::<ScenarioId>()
                .map_err(|e| Failure::usage(e.to_string()))
        })
        .transpose()?;
    let asgs = match (props, scenario) {
        (Some(p), _) => load_props(p, om)?,
        (None, Some(s)) => {
            if om != ObjectModel::bundled() {
                return Err(Failure::usage(
                    "bundled phase properties need the default object model; pass --props",
                ));
            }
            builtin_asgs(s)
        }
        (None, None) => return Err(Failure::usage("--props is required without --phases")),
    };
    let mut automaton = match scenario {
        Some(s) => {
            let names: Vec<String> = s.phase_names().iter().map(|n| n.to_string()).collect();
            if let Some(missing) = names
                .iter()
                .find(|n| !asgs.iter().any(|a| a.name() == n.as_str()))
            {
                return Err(Failure::usage(format!(
                    "no property named `{missing}` for --phases {s}"
                )));
            }
            Some(PhaseAutomaton::new(names))
        }
        None => None,
    };

    let reader: Box<dyn BufRead> = if input == Path::new("-") {
        Box::new(BufReader::new(io::stdin().lock()))
    } else {
        let file = fs::File::open(input)
            .map_err(|e| Failure::usage(format!("{}: {e}", input.display())))?;
        Box::new(BufReader::new(file))
    };
    let mut out = output(out)?;
    let mut monitor = StreamMonitor::new(om, asgs.clone(), options);
    let mut kinds = Vec::new();
    let mut phase_errors = false;
    let mut scenes = 0usize;

    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Failure::usage(format!("{}: {e}", input.display())))?;
        if line.trim().is_empty() {
            continue;
        }
        let origin = format!("{}:{}", input.display(), n + 1);
        let csg = parse_scene(&line, om, &origin)?;
        let verdicts = monitor
            .push(&csg)
            .map_err(|e| Failure::usage(format!("{origin}: {e}")))?;
        if matching.oracle {
            for (asg, v) in asgs.iter().zip(&verdicts) {
                oracle_check(om, asg, &csg, options, v)?;
            }
        }
        let phase_index = automaton.as_mut().map(|pa| {
            let consulted: Vec<&str> = pa.phases()[pa.current()..]
                .iter()
                .take(2)
                .map(String::as_str)
                .collect();
            phase_errors |= verdicts.iter().any(|v| {
                v.kind() == VerdictKind::Error && consulted.contains(&v.property.as_str())
            });
            pa.step_verdicts(&verdicts);
            pa.current()
        });
        for v in &verdicts {
            writeln!(out, "{}", v.to_json(phase_index)).map_err(io_failure)?;
            kinds.push(v.kind());
        }
        scenes += 1;
    }
    out.flush().map_err(io_failure)?;

    match automaton {
        Some(pa) => {
            let flagged = pa.violations().len();
            let phase = pa.current_phase().unwrap_or("-");
            eprintln!(
                "phases: {} at {phase} (index {}), complete={}, flagged scenes={flagged}",
                if pa.accepted() {
                    "accepted"
                } else {
                    "not accepted"
                },
                pa.current(),
                pa.is_complete(),
            );
            Ok(if phase_errors {
                EXIT_ERROR_VERDICT
            } else if pa.accepted() {
                0
            } else {
                EXIT_VIOLATED
            })
        }
        None => {
            let mut counts = BTreeMap::new();
            for k in &kinds {
                *counts.entry(format!("{k:?}")).or_insert(0usize) += 1;
            }
            eprintln!("monitored {scenes} scenes: {counts:?}");
            Ok(exit_for(kinds))
        }
    }
}

fn gen(
    om: &ObjectModel,
    scenario: Option<&str>,
    script: Option<&Path>,
    perturb: &[(String, f64)],
    out: Option<&Path>,
    emit_script: bool,
) -> Result<u8, Failure> {
    let mut script =
        match (scenario, script) {
            (_, Some(path)) => serde_json::from_str::<ScenarioScript>(&read(path)?)
                .map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?,
            (Some(s), None) => ScenarioScript::nominal(s.parse().map_err(
                |e: asg_core::scenario_lib::ScenarioError| Failure::usage(e.to_string()),
            )?),
            (None, None) => return Err(Failure::usage("--scenario or --script is required")),
        };
    for (key, offset) in perturb {
        script = script
            .perturbed(key, *offset)
            .map_err(|e| Failure::usage(e.to_string()))?;
    }
    let mut out = output(out)?;
    if emit_script {
        let json = serde_json::to_string_pretty(&script).expect("scripts serialize");
        writeln!(out, "{json}").map_err(io_failure)?;
    } else {
        let trace = generate_trace(&script, om).map_err(|e| Failure::usage(e.to_string()))?;
        for csg in &trace {
            writeln!(out, "{}", csg.to_json()).map_err(io_failure)?;
        }
        eprintln!("generated {} scenes for {}", trace.len(), script.scenario);
    }
    out.flush().map_err(io_failure)?;
    Ok(0)
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

fn bench(
    om: &ObjectModel,
    nodes: usize,
    pattern: usize,
    frames: usize,
    seed: u64,
) -> Result<u8, Failure> {
    if nodes == 0 || pattern == 0 || pattern > nodes || frames == 0 {
        return Err(Failure::usage("need 0 < pattern <= nodes and frames > 0"));
    }
    if om != ObjectModel::bundled() {
        return Err(Failure::usage("bench uses the default object model"));
    }
    let instances: Vec<_> = (0..frames as u64)
        .map(|i| bench_instance(seed.wrapping_add(i), om, nodes, pattern))
        .collect();
    let mut latencies = Vec::with_capacity(frames);
    let mut satisfied = 0usize;
    for (csg, asg) in &instances {
        let start = Instant::now();
        let verdict = sg_comparison_with(om, asg, csg, Options::default());
        latencies.push(start.elapsed().as_secs_f64() * 1e3);
        satisfied += verdict.is_satisfied() as usize;
    }
    latencies.sort_by(f64::total_cmp);
    let report = serde_json::json!({
        "nodes": nodes,
        "pattern_nodes": pattern,
        "frames": frames,
        "seed": seed,
        "p50_ms": percentile(&latencies, 0.5),
        "p99_ms": percentile(&latencies, 0.99),
        "max_ms": latencies.last(),
        "satisfied": satisfied,
    });
    println!("{report}");
    Ok(0)
}

fn export(
    om: &ObjectModel,
    asg: Option<&str>,
    csg: Option<&Path>,
    frame: usize,
    out: Option<&Path>,
) -> Result<u8, Failure> {
    let dot = match (asg, csg) {
        (Some(a), _) => asg_to_dot(&load_asg(a, om)?),
        (None, Some(path)) => {
            let text = read(path)?;
            let line = text
                .lines()
                .filter(|l| !l.trim().is_empty())
                .nth(frame)
                .ok_or_else(|| {
                    Failure::usage(format!("{} has no frame {frame}", path.display()))
                })?;
            csg_to_dot(&parse_scene(line, om, &path.display().to_string())?)
        }
        (None, None) => return Err(Failure::usage("--asg or --csg is required")),
    };
    let mut out = output(out)?;
    out.write_all(dot.as_bytes()).map_err(io_failure)?;
    out.flush().map_err(io_failure)?;
    Ok(0)
}

fn run(cli: Cli) -> Result<u8, Failure> {
    let om = load_om(&cli.om)?;
    match cli.command {
        Command::Check { asg, csg, matching } => check(&om, &asg, &csg, matching),
        Command::Monitor {
            props,
            input,
            out,
            phases,
            matching,
        } => monitor(
            &om,
            props.as_deref(),
            &input,
            out.as_deref(),
            phases.as_deref(),
            matching,
        ),
        Command::Gen {
            scenario,
            script,
            perturb,
            out,
            emit_script,
        } => gen(
            &om,
            scenario.as_deref(),
            script.as_deref(),
            &perturb,
            out.as_deref(),
            emit_script,
        ),
        Command::Bench {
            nodes,
            pattern,
            frames,
            seed,
        } => bench(&om, nodes, pattern, frames, seed),
        Command::Export {
            asg,
            csg,
            frame,
            out,
        } => export(&om, asg.as_deref(), csg.as_deref(), frame, out.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            if !f.message.is_empty() {
                eprintln!("asgmon: {}", f.message);
            }
            ExitCode::from(f.code)
        }
    }
}
