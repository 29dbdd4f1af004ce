//! `dissiped`: analyse, simulate and validate observer-based output feedback for
//! dissipative state-affine systems.
//!
//! Exit codes: 0 success, 1 validation failure or runtime error, 2 bad arguments or input
//! files, 3 an assumption check failed, 4 the simulation blew up.

mod csv_io;
mod svg;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};
use dissiped_core::analysis::{analyze, sampling_seed, AnalysisOptions, AnalysisReport};
use dissiped_core::observer::ClosedLoopSystem;
use dissiped_core::scenarios::{alpha0_setup_from, OutputTransform, ScenarioBundle, ScenarioError, ScenarioFile, ScenarioName};
use dissiped_core::sim::{integrate_around, SimError};
use dissiped_core::validate::{run_all, run_suite, suite_names, ValidateOptions};
use dissiped_core::{Equilibrium, FeedbackLaw, GainPolicy, InputAffineSystem, LyapunovSpec, SimConfig, Trajectory};

#[derive(Parser)]
#[command(name = "dissiped", version, about = "Observer-based output feedback for dissipative state-affine systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Clone)]
struct SimArgs {
    /// Horizon in seconds (defaults to the scenario's)
    #[arg(long)]
    t_final: Option<f64>,
    /// RK4 step in seconds
    #[arg(long)]
    step: Option<f64>,
    /// Keep every N-th step
    #[arg(long)]
    record_every: Option<usize>,
    /// CSV output path ("-" for stdout)
    #[arg(long)]
    out: Option<PathBuf>,
    /// SVG plot path
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Check dissipativity, detectability and observability; estimate alpha0
    Analyze {
        /// Scenario name (harmonic-oscillator, cuk, heat-exchanger) or JSON file
        target: String,
        /// Level-set samples for the alpha0 estimate
        #[arg(long, default_value_t = 2000)]
        samples: usize,
        /// Grid points for the singular-input scan
        #[arg(long, default_value_t = 200)]
        grid: usize,
        /// Print only the JSON report
        #[arg(long)]
        json: bool,
    },
    /// Simulate plant and observer for one gain
    Simulate {
        target: String,
        /// Constant observer gain
        #[arg(long, conflicts_with = "adaptive")]
        alpha: Option<f64>,
        /// Use the output-dependent gain built from the scenario's Lyapunov function
        #[arg(long)]
        adaptive: bool,
        #[command(flatten)]
        sim: SimArgs,
    },
    /// Simulate several constant gains concurrently
    Sweep {
        target: String,
        /// Comma-separated gains (defaults to the scenario's list)
        #[arg(long, value_delimiter = ',')]
        alphas: Option<Vec<f64>>,
        #[command(flatten)]
        sim: SimArgs,
    },
    /// Run the acceptance suites
    Validate {
        /// Run a single suite
        #[arg(long)]
        only: Option<String>,
        /// Reverse the observer correction sign (mutation check)
        #[arg(long, hide = true)]
        inject_sign_flip: bool,
    },
    /// Write a built-in scenario as JSON
    ExportScenario {
        scenario: String,
        #[arg(long, conflicts_with = "adaptive")]
        alpha: Option<f64>,
        #[arg(long)]
        adaptive: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

enum Failure {
    Runtime(anyhow::Error),
    Validation(String),
    Usage(anyhow::Error),
    Assumptions,
    Blowup { time: f64 },
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Runtime(_) | Failure::Validation(_) => 1,
            Failure::Usage(_) => 2,
            Failure::Assumptions => 3,
            Failure::Blowup { .. } => 4,
        }
    }
}

fn usage(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Usage(e.into())
}

fn sim_failure(e: ScenarioError) -> Failure {
    match e {
        ScenarioError::Sim(SimError::NonFiniteState { time, .. }) => Failure::Blowup { time },
        ScenarioError::Sim(e @ SimError::InvalidConfig(_)) => usage(e),
        other => Failure::Runtime(other.into()),
    }
}

/// Everything needed to simulate, from a built-in scenario or a JSON file.
struct Setup {
    name: String,
    system: InputAffineSystem,
    law: FeedbackLaw,
    equilibrium: Equilibrium,
    z0: dissiped_core::ColVec,
    sim: SimConfig,
    alphas: Vec<f64>,
    file_gain: Option<GainPolicy>,
    lyapunov: Option<LyapunovSpec>,
    transform: Option<OutputTransform>,
    notes: Vec<String>,
}

impl Setup {
    fn from_bundle(b: ScenarioBundle) -> Self {
        Self {
            name: b.name.to_string(),
            system: b.shifted,
            law: b.law,
            equilibrium: b.equilibrium,
            z0: b.z0,
            sim: b.default_simconfig,
            alphas: b.default_alphas,
            file_gain: None,
            lyapunov: Some(b.lyapunov),
            transform: Some(b.output_transform),
            notes: b.notes,
        }
    }

    fn from_file(f: ScenarioFile, path: &Path) -> Self {
        let alphas = match &f.gain {
            GainPolicy::Constant { alpha } => vec![*alpha],
            GainPolicy::Adaptive { .. } => Vec::new(),
        };
        Self {
            name: f.name.clone().unwrap_or_else(|| path.display().to_string()),
            equilibrium: f.operating_point(),
            system: f.system,
            law: f.feedback,
            z0: f.initial,
            sim: f.sim,
            alphas,
            file_gain: Some(f.gain),
            lyapunov: f.lyapunov,
            transform: None,
            notes: Vec::new(),
        }
    }

    fn gain(&self, alpha: Option<f64>, adaptive: bool) -> Result<GainPolicy, Failure> {
        if adaptive {
            let w = self.lyapunov.clone().ok_or_else(|| usage(anyhow!("--adaptive needs a Lyapunov specification")))?;
            return Ok(GainPolicy::Adaptive { w });
        }
        match (alpha, &self.file_gain, self.alphas.first()) {
            (Some(a), _, _) => GainPolicy::constant(a).map_err(usage),
            (None, Some(g), _) => Ok(g.clone()),
            (None, None, Some(&a)) => GainPolicy::constant(a).map_err(usage),
            (None, None, None) => Err(usage(anyhow!("specify --alpha or --adaptive"))),
        }
    }

    fn config(&self, args: &SimArgs) -> Result<SimConfig, Failure> {
        SimConfig::new(
            args.t_final.unwrap_or(self.sim.t_final),
            args.step.unwrap_or(self.sim.h),
            args.record_every.unwrap_or(self.sim.record_every),
        )
        .map_err(usage)
    }

    fn simulate(&self, gain: GainPolicy, cfg: &SimConfig) -> Result<Trajectory, Failure> {
        let cls = ClosedLoopSystem::new(self.system.clone(), self.law.clone(), gain)
            .map_err(|e| usage(anyhow::Error::from(e).context("invalid closed loop")))?;
        integrate_around(&cls, &self.equilibrium, &self.z0, cfg).map_err(|e| sim_failure(ScenarioError::Sim(e)))
    }

    fn plotted(&self, traj: &Trajectory) -> (String, Vec<f64>, Option<f64>) {
        match &self.transform {
            Some(t) => (t.label.clone(), t.series(traj), Some(t.target)),
            None => ("y_1".to_string(), traj.outputs.iter().map(|y| y[0]).collect(), None),
        }
    }
}

#[allow(clippy::large_enum_variant)]
enum Loaded {
    Scenario(Setup),
    BareSystem(InputAffineSystem),
}

fn load(target: &str) -> Result<Loaded, Failure> {
    if let Ok(name) = target.parse::<ScenarioName>() {
        return Ok(Loaded::Scenario(Setup::from_bundle(name.build().map_err(|e| Failure::Runtime(e.into()))?)));
    }
    let path = Path::new(target);
    if !path.is_file() {
        return Err(usage(ScenarioError::UnknownScenario(target.to_string())));
    }
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {target}")).map_err(usage)?;
    match serde_json::from_str::<ScenarioFile>(&text) {
        Ok(f) => Ok(Loaded::Scenario(Setup::from_file(f, path))),
        Err(scenario_err) => serde_json::from_str::<InputAffineSystem>(&text).map(Loaded::BareSystem).map_err(|_| {
            usage(anyhow!("{target} is neither a scenario file nor a system description: {scenario_err}"))
        }),
    }
}

fn load_setup(target: &str) -> Result<Setup, Failure> {
    match load(target)? {
        Loaded::Scenario(s) => Ok(s),
        Loaded::BareSystem(_) => Err(usage(anyhow!("{target} describes a system only; simulation needs a scenario file"))),
    }
}

fn write_output(path: &Path, text: &str) -> Result<(), Failure> {
    if path == Path::new("-") {
        print!("{text}");
        return Ok(());
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display())).map_err(Failure::Runtime)
}

fn fmt_vec(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.6e}")).collect::<Vec<_>>().join(", ")
}

fn report_table(name: &str, r: &AnalysisReport, u_star: Option<f64>) -> String {
    let pf = |b: bool| if b { "PASS" } else { "FAIL" };
    let mut s = String::new();
    let _ = writeln!(s, "{:<22}{name}", "system");
    let d = &r.dissipativity;
    let _ = writeln!(
        s,
        "{:<22}{}  worst eig {:.4e} at u = [{}] (vertex worst {:.4e}, scale {:.3e}, {} grid points)",
        "dissipativity",
        pf(d.pass),
        d.worst_eig,
        fmt_vec(d.worst_input.as_slice()),
        d.vertex_worst_eig,
        d.scale,
        d.grid_points
    );
    let det = &r.detectability;
    let eig: Vec<String> = det.eigenvalues.iter().map(|e| e.to_string()).collect();
    let _ = writeln!(s, "{:<22}{}  eig A(0): {}", "detectability", pf(det.pass), eig.join(", "));
    if let Some(off) = det.offending_eigenvalue {
        let _ = writeln!(s, "{:<22}{off}", "  offending eigenvalue");
    }
    let o = &r.observability;
    let _ = writeln!(
        s,
        "{:<22}{}{}",
        "observability rank",
        o.rank,
        o.det.map(|d| format!("  det {d:.6e}")).unwrap_or_default()
    );
    if let Some(scan) = &o.scan {
        if scan.candidates.is_empty() {
            let _ = writeln!(s, "{:<22}none on the input box", "singular inputs");
        }
        for c in &scan.candidates {
            let phys = u_star.map(|us| format!(" (physical u = {:.12})", c.u + us)).unwrap_or_default();
            let _ = writeln!(s, "{:<22}u = {:.12e}{phys}, value {:.3e}", "singular input", c.u, c.value);
        }
    }
    match &r.alpha0_detail {
        Some(a) => {
            let _ = writeln!(
                s,
                "{:<22}{:.6e}  (R {:.3e}, rho {:.3e}, M1 {:.3e}, M2 {:.3e}, {} level-set points)",
                "alpha0 (estimate)", a.alpha0, a.r, a.rho, a.m1, a.m2, a.level_set_points
            );
        }
        None => {
            let _ = writeln!(s, "{:<22}not available", "alpha0 (estimate)");
        }
    }
    for n in &r.notes {
        let _ = writeln!(s, "{:<22}{n}", "note");
    }
    s
}

fn cmd_analyze(target: &str, samples: usize, grid: usize, json_only: bool) -> Result<(), Failure> {
    let opts = AnalysisOptions { scan_grid: grid, seed: sampling_seed(), ..AnalysisOptions::default() };
    let (name, system, setup_notes, alpha0, u_star) = match load(target)? {
        Loaded::Scenario(s) => {
            let a0 = s.lyapunov.as_ref().map(|w| alpha0_setup_from(&s.law, w, &s.z0, samples));
            let us = (s.equilibrium.u_star.dim() == 1).then(|| s.equilibrium.u_star[0]);
            (s.name, s.system, s.notes, a0, us)
        }
        Loaded::BareSystem(sys) => (target.to_string(), sys, Vec::new(), None, None),
    };
    let mut report = analyze(&system, alpha0.as_ref(), &opts).map_err(|e| Failure::Runtime(e.into()))?;
    report.notes.extend(setup_notes);
    report.notes.push("the adaptive gain uses the positive magnitude of its defining formula".into());
    let json = serde_json::json!({ "system": name, "report": report });
    if !json_only {
        print!("{}", report_table(&name, &report, u_star));
        println!();
    }
    println!("{}", serde_json::to_string_pretty(&json).map_err(|e| Failure::Runtime(e.into()))?);
    if report.assumptions_hold() {
        Ok(())
    } else {
        Err(Failure::Assumptions)
    }
}

fn plot(setup: &Setup, runs: &[(String, &Trajectory)]) -> String {
    let mut out_series = Vec::new();
    let mut err_series = Vec::new();
    let mut label = String::new();
    let mut target = None;
    for (name, traj) in runs {
        let (l, ys, t) = setup.plotted(traj);
        label = l;
        target = t;
        out_series.push(svg::Series { label: name.clone(), xs: traj.times.clone(), ys, dashed: false });
        err_series.push(svg::Series { label: name.clone(), xs: traj.times.clone(), ys: traj.error_norms(), dashed: false });
    }
    if let (Some(t), Some((_, first))) = (target, runs.first()) {
        let xs = vec![first.times[0], *first.times.last().expect("nonempty")];
        out_series.push(svg::Series { label: "target".into(), xs, ys: vec![t, t], dashed: true });
    }
    svg::render(&[
        svg::Panel { title: format!("{}: {label}", setup.name), log_y: false, series: out_series },
        svg::Panel { title: "observer error |x̂ − x|".into(), log_y: true, series: err_series },
    ])
}

fn cmd_simulate(target: &str, alpha: Option<f64>, adaptive: bool, args: &SimArgs) -> Result<(), Failure> {
    let setup = load_setup(target)?;
    let gain = setup.gain(alpha, adaptive)?;
    let cfg = setup.config(args)?;
    let traj = setup.simulate(gain.clone(), &cfg)?;
    let to_stdout = args.out.as_deref() == Some(Path::new("-"));
    if let Some(path) = &args.out {
        write_output(path, &csv_io::to_csv(&traj))?;
    }
    if let Some(path) = &args.svg {
        write_output(path, &plot(&setup, &[(gain.label(), &traj)]))?;
    }
    if !to_stdout {
        let err = traj.error_norms();
        let last = traj.len() - 1;
        let (label, ys, target) = setup.plotted(&traj);
        println!("{} {}: {} samples to t = {}", setup.name, gain.label(), traj.len(), traj.times[last]);
        println!("err_norm: initial {:.6e}, final {:.6e} (ratio {:.3e})", err[0], err[last], err[last] / err[0]);
        println!(
            "{label}: final {:.6}{}",
            ys[last],
            target.map(|t| format!(" (target {t:.6})")).unwrap_or_default()
        );
    }
    Ok(())
}

fn cmd_sweep(target: &str, alphas: Option<Vec<f64>>, args: &SimArgs) -> Result<(), Failure> {
    let setup = load_setup(target)?;
    let alphas = alphas.unwrap_or_else(|| setup.alphas.clone());
    if alphas.is_empty() {
        return Err(usage(anyhow!("no gains to sweep")));
    }
    let gains = alphas.iter().map(|&a| GainPolicy::constant(a).map_err(usage)).collect::<Result<Vec<_>, _>>()?;
    let cfg = setup.config(args)?;
    let results: Vec<Result<Trajectory, Failure>> = std::thread::scope(|s| {
        let handles: Vec<_> = gains.iter().map(|g| s.spawn(|| setup.simulate(g.clone(), &cfg))).collect();
        handles.into_iter().map(|h| h.join().expect("simulation thread panicked")).collect()
    });
    let trajs = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    if let Some(path) = &args.out {
        write_output(path, &csv_io::to_combined_csv(&trajs.iter().collect::<Vec<_>>()))?;
    }
    if let Some(path) = &args.svg {
        let runs: Vec<(String, &Trajectory)> = gains.iter().map(|g| g.label()).zip(trajs.iter()).collect();
        write_output(path, &plot(&setup, &runs))?;
    }
    if args.out.as_deref() != Some(Path::new("-")) {
        let t_end = *trajs[0].times.last().expect("nonempty");
        let quartiles: Vec<f64> = (0..=4).map(|k| k as f64 * t_end / 4.0).collect();
        println!("{} err_norm at quartile times", setup.name);
        print!("{:>12}", "alpha");
        for t in &quartiles {
            print!("{:>16}", format!("t={t:.4}"));
        }
        println!();
        let mut mids = Vec::new();
        for (a, traj) in alphas.iter().zip(&trajs) {
            let e = traj.error_norms();
            print!("{a:>12}");
            for t in &quartiles {
                print!("{:>16.6e}", e[traj.index_at(*t)]);
            }
            println!();
            mids.push(e[traj.index_at(t_end / 2.0)]);
        }
        let decreasing = mids.windows(2).all(|w| w[1] < w[0]);
        println!("mid-horizon err_norm strictly decreasing in alpha: {}", if decreasing { "yes" } else { "no" });
    }
    Ok(())
}

fn cmd_validate(only: Option<&str>, flip: bool) -> Result<(), Failure> {
    let opts = ValidateOptions { flip_correction: flip, seed: sampling_seed() };
    let outcomes = match only {
        Some(name) => vec![run_suite(name, &opts)
            .ok_or_else(|| usage(anyhow!("unknown suite '{name}'; known: {}", suite_names().join(", "))))?],
        None => run_all(&opts),
    };
    for o in &outcomes {
        println!("{o}");
    }
    match outcomes.iter().find(|o| !o.pass) {
        Some(o) => Err(Failure::Validation(o.suite.to_string())),
        None => Ok(()),
    }
}

fn cmd_export(scenario: &str, alpha: Option<f64>, adaptive: bool, out: Option<&Path>) -> Result<(), Failure> {
    let name: ScenarioName = scenario.parse().map_err(usage)?;
    let bundle = name.build().map_err(|e| Failure::Runtime(e.into()))?;
    let gain = Setup::from_bundle(bundle.clone()).gain(alpha, adaptive)?;
    let text = serde_json::to_string_pretty(&bundle.to_file(gain)).map_err(|e| Failure::Runtime(e.into()))? + "\n";
    match out {
        Some(p) => write_output(p, &text),
        None => write_output(Path::new("-"), &text),
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Analyze { target, samples, grid, json } => cmd_analyze(&target, samples, grid, json),
        Command::Simulate { target, alpha, adaptive, sim } => cmd_simulate(&target, alpha, adaptive, &sim),
        Command::Sweep { target, alphas, sim } => cmd_sweep(&target, alphas, &sim),
        Command::Validate { only, inject_sign_flip } => cmd_validate(only.as_deref(), inject_sign_flip),
        Command::ExportScenario { scenario, alpha, adaptive, out } => cmd_export(&scenario, alpha, adaptive, out.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Runtime(e) => eprintln!("error: {e:#}"),
                Failure::Usage(e) => eprintln!("error: {e:#}"),
                Failure::Validation(suite) => eprintln!("validation failed: {suite}"),
                Failure::Assumptions => eprintln!("assumption check failed (see report)"),
                Failure::Blowup { time } => eprintln!("simulation blew up at t = {time}"),
            }
            ExitCode::from(f.code())
        }
    }
}
