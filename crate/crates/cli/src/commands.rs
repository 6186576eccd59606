//! Argument parsing and the four subcommands.
//!
//! Every command prints a JSON [`RunReport`] on stdout and exits 0 iff all of
//! its checks pass, 1 otherwise. Bad arguments and unreadable scenes are
//! usage errors (exit 2) with a message on stderr.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use graze::continuation::{self, certify, ContinuationConfig, ContinuationTrace, TraceStep};
use graze::geometry::{BilliardTable, Vec2};
use graze::orbits::{
    check_admissibility, enumerate_orbits, solve_periodic, OrbitFilters, PeriodicOrbit, CLOSURE_TOL,
};
use graze::perturbation::{normalize_frame, propagate, respond, valley_scan, ALPHA0_LIMIT};
use graze::scene::{parse_scene, SceneFile};
use graze::{Error, SymbolSequence};

use crate::report::{Check, RunReport};
use crate::suites::{self, response_errors, SAMPLES_PER_SEGMENT};
use crate::svg::{color, Plot};

/// Most per-step frames written by `continue`; longer traces are subsampled.
pub const MAX_FRAMES: usize = 200;

#[derive(Debug, Parser)]
#[command(
    name = "graze",
    version,
    about = "Collision-map calculus and grazing continuation for unit-disk billiards"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the seeded oracle suites, plus per-orbit checks on a scene.
    Verify(VerifyArgs),
    /// Enumerate periodic orbits of a scene.
    Orbits(OrbitsArgs),
    /// First-order response of an orbit to moving scatterer 0.
    Perturb(PerturbArgs),
    /// Push scatterer 0 toward an orbit segment until the orbit grazes.
    Continue(ContinueArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Svg,
    JsonReport,
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Directory for file outputs; nothing is written without it.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(
        long,
        value_enum,
        value_delimiter = ',',
        default_value = "csv,svg,json-report"
    )]
    pub format: Vec<Format>,
}

impl OutputArgs {
    fn wants(&self, f: Format) -> bool {
        self.out.is_some() && self.format.contains(&f)
    }
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Scene whose orbits are checked in addition to the synthetic suites.
    #[arg(long)]
    pub scene: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Random steps, contexts and orbits per suite.
    #[arg(long, default_value_t = 200)]
    pub trials: usize,
    /// Longest period enumerated on the scene.
    #[arg(long, default_value_t = 4)]
    pub max_period: usize,
    /// Scale the analytic ∂B/∂u by 1 + 1e-3 (exercises failure reporting).
    #[arg(long, hide = true)]
    pub corrupt_jacobian: bool,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct OrbitsArgs {
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub max_period: usize,
    /// Keep orbits with a segment passing some scatterer at clearance in (1, 1 + δ).
    #[arg(long)]
    pub near_delta: Option<f64>,
    /// Restrict the near-approach test to this scatterer.
    #[arg(long, requires = "near_delta")]
    pub near_scatterer: Option<usize>,
    /// Keep orbits hitting scatterer 0 exactly once per period.
    #[arg(long)]
    pub single_hit_0: bool,
    /// Keep orbits whose collision with scatterer 0 has |α| below this.
    #[arg(long)]
    pub alpha0_max: Option<f64>,
    #[command(flatten)]
    pub output: OutputArgs,
}

/// Direction of motion of scatterer 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Theta {
    /// Toward the foot point on segment `k*`.
    Auto,
    /// A fixed angle in the scene frame.
    Angle(f64),
}

impl FromStr for Theta {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "auto" {
            return Ok(Theta::Auto);
        }
        s.parse::<f64>()
            .ok()
            .filter(|t| t.is_finite())
            .map(Theta::Angle)
            .ok_or_else(|| format!("expected `auto` or an angle in radians, got {s:?}"))
    }
}

#[derive(Debug, Args)]
pub struct OrbitArgs {
    #[arg(long)]
    pub scene: PathBuf,
    /// Symbol sequence, e.g. `0-2-3-1`.
    #[arg(long)]
    pub orbit: SymbolSequence,
    /// Segment to track (collision index in the given sequence); defaults to
    /// the nearest interior approach to scatterer 0.
    #[arg(long)]
    pub k_star: Option<usize>,
    /// Require the tracked clearance to lie below 1 + δ.
    #[arg(long)]
    pub delta: Option<f64>,
}

#[derive(Debug, Args)]
pub struct PerturbArgs {
    #[command(flatten)]
    pub orbit: OrbitArgs,
    /// `auto` (toward the foot point) or an angle in radians.
    #[arg(long, default_value = "auto")]
    pub theta: Theta,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct ContinueArgs {
    #[command(flatten)]
    pub orbit: OrbitArgs,
    /// Largest allowed displacement of scatterer 0.
    #[arg(long, default_value_t = 0.1)]
    pub epsilon: f64,
    /// Initial step in γ.
    #[arg(long, default_value_t = 5e-3)]
    pub step: f64,
    #[arg(long, default_value_t = 1e-8)]
    pub min_step: f64,
    #[arg(long, default_value_t = 2e-2)]
    pub max_step: f64,
    #[arg(long, default_value_t = 10_000)]
    pub max_steps: usize,
    #[command(flatten)]
    pub output: OutputArgs,
}

/// Exit status and captured streams of one invocation.
#[derive(Debug, Clone)]
pub struct Invocation {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

#[derive(Debug)]
struct UsageError(String);

type CmdResult = Result<RunReport, UsageError>;

/// Parse `args` (including the program name) and run the command.
pub fn run_cli<I, T>(args: I) -> Invocation
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                Invocation {
                    code: 2,
                    stdout: String::new(),
                    stderr: text,
                }
            } else {
                Invocation {
                    code: 0,
                    stdout: text,
                    stderr: String::new(),
                }
            };
        }
    };
    match execute(&cli.command) {
        Ok(report) => Invocation {
            code: if report.passed { 0 } else { 1 },
            stdout: report.to_json() + "\n",
            stderr: report
                .failures()
                .map(|c| {
                    format!(
                        "check failed: {} ({:e} vs {:e})\n",
                        c.name, c.value, c.tolerance
                    )
                })
                .collect(),
        },
        Err(UsageError(m)) => Invocation {
            code: 2,
            stdout: String::new(),
            stderr: format!("error: {m}\n"),
        },
    }
}

fn execute(cmd: &Command) -> CmdResult {
    match cmd {
        Command::Verify(a) => cmd_verify(a),
        Command::Orbits(a) => cmd_orbits(a),
        Command::Perturb(a) => cmd_perturb(a),
        Command::Continue(a) => cmd_continue(a),
    }
}

fn load(path: &Path) -> Result<BilliardTable, UsageError> {
    let text = fs::read_to_string(path)
        .map_err(|e| UsageError(format!("cannot read scene {}: {e}", path.display())))?;
    parse_scene(&text).map_err(|e| match e {
        Error::SceneParse {
            line,
            column,
            message,
        } => UsageError(format!(
            "{}:{line}:{column}: scene parse error: {message}",
            path.display()
        )),
        e => UsageError(format!("invalid scene {}: {e}", path.display())),
    })
}

fn scene_json(table: &BilliardTable) -> serde_json::Value {
    serde_json::to_value(SceneFile::from_table(table)).expect("scene serializes")
}

/// Check the sequence against the table and solve it.
fn solve(
    table: &BilliardTable,
    seq: &SymbolSequence,
) -> Result<graze::Result<PeriodicOrbit>, UsageError> {
    let seq = SymbolSequence::new(seq.indices().to_vec(), table.len())
        .map_err(|e| UsageError(format!("--orbit: {e}")))?;
    Ok(solve_periodic(table, &seq))
}

/// Write the requested files and close the report.
struct Writer<'a> {
    output: &'a OutputArgs,
    files: Vec<(String, Vec<u8>)>,
}

impl<'a> Writer<'a> {
    fn new(output: &'a OutputArgs) -> Self {
        Self {
            output,
            files: Vec::new(),
        }
    }

    fn add(&mut self, format: Format, name: impl Into<String>, bytes: impl FnOnce() -> Vec<u8>) {
        if self.output.wants(format) {
            self.files.push((name.into(), bytes()));
        }
    }

    /// Paths in the report are relative to `--out`, so the digest does not
    /// depend on where the files go.
    fn finish(self, mut report: RunReport) -> CmdResult {
        let Some(dir) = &self.output.out else {
            return Ok(report.finish());
        };
        let io = |e: std::io::Error| UsageError(format!("cannot write to {}: {e}", dir.display()));
        report.outputs = self.files.iter().map(|(n, _)| n.clone()).collect();
        if self.output.format.contains(&Format::JsonReport) {
            report.outputs.push("report.json".into());
        }
        let report = report.finish();
        for (name, bytes) in &self.files {
            let path = dir.join(name);
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent).map_err(io)?;
            }
            fs::write(path, bytes).map_err(io)?;
        }
        if self.output.format.contains(&Format::JsonReport) {
            fs::create_dir_all(dir).map_err(io)?;
            fs::write(dir.join("report.json"), report.to_json() + "\n").map_err(io)?;
        }
        Ok(report)
    }
}

fn cmd_verify(a: &VerifyArgs) -> CmdResult {
    let table = a.scene.as_deref().map(load).transpose()?;
    let inputs = json!({
        "scene": table.as_ref().map(scene_json),
        "seed": a.seed,
        "trials": a.trials,
        "max_period": a.max_period,
        "corrupt_jacobian": a.corrupt_jacobian,
    });
    let mut report = RunReport::new("verify", Some(a.seed), &inputs);
    let start = Instant::now();
    report.extend(suites::jacobian_suite(a.seed, a.trials, a.corrupt_jacobian));
    report.extend(suites::gcalc_suite(a.seed.wrapping_add(1), a.trials));
    report.extend(suites::inequality_suite(a.seed.wrapping_add(2), a.trials));
    report.extend(suites::product_suite(
        a.seed.wrapping_add(3),
        a.trials.min(50),
    ));

    let mut data = json!({});
    let mut writer = Writer::new(&a.output);
    if let Some(table) = &table {
        let enumeration = enumerate_orbits(table, a.max_period.max(2), &OrbitFilters::default())
            .map_err(|e| UsageError(format!("--max-period: {e}")))?;
        let (mut prod, mut det, mut fd, mut step_det) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
        let mut failures = 0;
        let mut checked = Vec::new();
        for o in enumeration.orbits.iter().filter(|o| !o.is_singular()) {
            let (p, d) = suites::product_checks(table, o);
            prod = prod.max(p);
            det = det.max(d);
            match suites::orbit_step_errors(table, o) {
                Ok((f, sd)) => {
                    fd = fd.max(f);
                    step_det = step_det.max(sd);
                }
                Err(e) => {
                    log::warn!("orbit {}: {e}", o.sequence);
                    failures += 1;
                }
            }
            checked.push(o.sequence.to_string());
        }
        let n = format!("{} orbits up to period {}", checked.len(), a.max_period);
        report.push(Check::below("scene.jacobian_fd", fd, suites::FD_TOL).with_note(n.clone()));
        report.push(Check::below("scene.det_law", step_det, suites::DET_TOL));
        report.push(Check::below(
            "scene.product_equivalence",
            prod,
            suites::PRODUCT_TOL,
        ));
        report.push(Check::below(
            "scene.multi_step_det",
            det,
            suites::PRODUCT_TOL,
        ));
        report.push(Check::none("scene.failures", failures));
        if checked.is_empty() {
            report
                .notes
                .push("scene has no non-singular orbits up to the period limit".into());
        }
        data = json!({ "orbits": checked });
        let orbits: Vec<&PeriodicOrbit> = enumeration.orbits.iter().collect();
        writer.add(Format::Svg, "scene.svg", || {
            scene_svg(table, &orbits).into_bytes()
        });
    }
    log::info!("verify finished in {:.2?}", start.elapsed());
    report.data = data;
    writer.add(Format::Csv, "checks.csv", || checks_csv(&report));
    writer.finish(report)
}

fn checks_csv(report: &RunReport) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["name", "value", "tolerance", "passed"])
        .expect("in-memory write");
    for c in &report.checks {
        w.write_record([
            c.name.clone(),
            c.value.to_string(),
            c.tolerance.to_string(),
            c.passed.to_string(),
        ])
        .expect("in-memory write");
    }
    w.into_inner().expect("in-memory write")
}

fn scene_svg(table: &BilliardTable, orbits: &[&PeriodicOrbit]) -> String {
    let mut plot = Plot::new(table, &[]);
    plot.disks(table, Some(0));
    for (i, o) in orbits.iter().enumerate() {
        plot.polyline(&o.points(table), true, color(i), false);
    }
    plot.finish()
}

fn cmd_orbits(a: &OrbitsArgs) -> CmdResult {
    let table = load(&a.scene)?;
    if let Some(s) = a.near_scatterer {
        if s >= table.len() {
            return Err(UsageError(format!(
                "--near-scatterer {s} is not a scatterer of a {}-disk scene",
                table.len()
            )));
        }
    }
    let inputs = json!({
        "scene": scene_json(&table),
        "max_period": a.max_period,
        "near_delta": a.near_delta,
        "near_scatterer": a.near_scatterer,
        "single_hit_0": a.single_hit_0,
        "alpha0_max": a.alpha0_max,
    });
    let filters = OrbitFilters {
        near_delta: a.near_delta,
        near_scatterer: a.near_scatterer,
        single_hit_0: a.single_hit_0,
        alpha0_max: a.alpha0_max,
    };
    let found = enumerate_orbits(&table, a.max_period, &filters)
        .map_err(|e| UsageError(format!("--max-period: {e}")))?;
    let mut report = RunReport::new("orbits", None, &inputs);

    let inadmissible = found
        .orbits
        .iter()
        .filter(|o| !check_admissibility(&table, o).is_admissible())
        .count();
    let closure = found
        .orbits
        .iter()
        .filter(|o| !o.is_singular())
        .map(|o| o.closure_residual)
        .fold(0.0, f64::max);
    report.push(
        Check::none("orbits.admissible", inadmissible).with_note(format!(
            "{} orbits kept, {} rejected",
            found.orbits.len(),
            found.failures.len()
        )),
    );
    report.push(Check::below("orbits.closure", closure, CLOSURE_TOL));
    if found.orbits.is_empty() {
        report
            .notes
            .push("no orbit up to the period limit passes the filters".into());
    }
    report.data = json!({
        "orbits": found.orbits.iter().map(|o| orbit_summary(&table, o)).collect::<Vec<_>>(),
        "rejected": found.failures.iter().map(|(s, why)| json!({"sequence": s.to_string(), "reason": why})).collect::<Vec<_>>(),
    });

    let mut writer = Writer::new(&a.output);
    writer.add(Format::Csv, "orbits.csv", || orbits_csv(&found.orbits));
    let orbits: Vec<&PeriodicOrbit> = found.orbits.iter().collect();
    writer.add(Format::Svg, "orbits.svg", || {
        scene_svg(&table, &orbits).into_bytes()
    });
    writer.finish(report)
}

fn orbit_summary(table: &BilliardTable, o: &PeriodicOrbit) -> serde_json::Value {
    let nearest = o
        .nearest_approach(table)
        .map(|(k, c)| json!({"segment": k, "scatterer": c.scatterer, "clearance": c.distance}));
    json!({
        "sequence": o.sequence.to_string(),
        "period": o.period(),
        "length": o.s.iter().sum::<f64>(),
        "alphas": o.alphas(),
        "angle_margin": o.angle_margin(),
        "singular": o.is_singular(),
        "closure": o.closure_residual,
        "nearest_approach": nearest,
    })
}

fn orbits_csv(orbits: &[PeriodicOrbit]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "orbit",
        "sequence",
        "k",
        "scatterer",
        "phi",
        "alpha",
        "omega",
        "s",
    ])
    .expect("in-memory write");
    for (i, o) in orbits.iter().enumerate() {
        for (k, st) in o.states.iter().enumerate() {
            w.write_record([
                i.to_string(),
                o.sequence.to_string(),
                k.to_string(),
                st.scatterer.to_string(),
                st.phi.to_string(),
                st.alpha.to_string(),
                o.omega[k].to_string(),
                o.s[k].to_string(),
            ])
            .expect("in-memory write");
        }
    }
    w.into_inner().expect("in-memory write")
}

fn orbit_inputs(a: &OrbitArgs, table: &BilliardTable) -> serde_json::Value {
    json!({
        "scene": scene_json(table),
        "orbit": a.orbit.to_string(),
        "k_star": a.k_star,
        "delta": a.delta,
    })
}

fn cmd_perturb(a: &PerturbArgs) -> CmdResult {
    let table = load(&a.orbit.scene)?;
    let mut inputs = orbit_inputs(&a.orbit, &table);
    inputs["theta"] = match a.theta {
        Theta::Auto => json!("auto"),
        Theta::Angle(t) => json!(t),
    };
    let mut report = RunReport::new("perturb", None, &inputs);
    let mut writer = Writer::new(&a.output);

    let setup = solve(&table, &a.orbit.orbit)?.and_then(|orbit| {
        let s = normalize_frame(&table, &orbit, a.orbit.k_star, a.orbit.delta)?;
        Ok((orbit, s))
    });
    let (orbit, mut setup) = match setup {
        Ok(x) => x,
        Err(e) => {
            report.push(Check::holds("perturb.setup", false).with_note(e.to_string()));
            return writer.finish(report);
        }
    };
    if let Theta::Angle(t) = a.theta {
        setup = setup.with_theta(setup.frame.apply_angle(t));
    }
    let result = respond(&setup).and_then(|r| {
        let e = response_errors(&setup, &r, true)?;
        let wave = propagate(&setup, &setup.context()?)?;
        Ok((r, e, valley_scan(&wave, SAMPLES_PER_SEGMENT)))
    });
    let (r, e, valley) = match result {
        Ok(x) => x,
        Err(e) => {
            report.push(Check::holds("perturb.response", false).with_note(e.to_string()));
            return writer.finish(report);
        }
    };

    report.push(
        Check::below("perturb.alpha0_hypothesis", r.alpha0.abs(), ALPHA0_LIMIT)
            .with_note("|alpha0| < pi/6"),
    );
    report.push(Check::below(
        "perturb.linear_system",
        e.linear_system,
        suites::LINEAR_SYSTEM_TOL,
    ));
    report.push(Check::below(
        "perturb.decomposition",
        e.decomposition,
        suites::DECOMPOSITION_TOL,
    ));
    let fd = format!("central re-solve, step {:e}", suites::RESOLVE_STEP);
    report.push(Check::below("perturb.u0_prime_fd", e.u0_prime, suites::FD_TOL).with_note(fd));
    report.push(Check::below(
        "perturb.alpha0_prime_fd",
        e.alpha0_prime,
        suites::FD_TOL,
    ));
    report.push(Check::below("perturb.ell0_fd", e.ell0, suites::FD_TOL));
    report.push(
        Check::below("perturb.ell_at_fd", e.ell_at, suites::FD_TOL)
            .with_note("relative to max |l| over the period"),
    );
    report.push(Check::below(
        "perturb.h_prime_fd",
        e.h_prime,
        suites::FD_TOL,
    ));
    report.push(
        Check::below(
            "perturb.ell0_bound",
            r.ell0_plus.abs().max(r.ell0_minus.abs()),
            r.bound_ell,
        )
        .with_note("max(|l0+|, |l0-|) against its bound"),
    );
    report.push(Check::below(
        "perturb.alpha0_prime_bound",
        r.alpha0_prime.abs(),
        r.bound_alpha,
    ));
    report.push(Check::holds("perturb.single_valley", valley.holds()));
    match a.theta {
        Theta::Auto => report.push(
            Check::below("perturb.h_prime_ceiling", r.h_prime, r.h_prime_ceiling)
                .with_note("h' < -min(1 - l0+, 1 - l0-)"),
        ),
        Theta::Angle(_) => report.notes.push(
            "the ceiling on h' assumes motion toward the foot point; not checked for a fixed theta"
                .into(),
        ),
    }
    let k_star = (setup.k_star + setup.shift) % orbit.period();
    report.data = json!({
        "response": r,
        "k_star": k_star,
        "frame": setup.frame,
        "oracle": {
            "linear_system": e.linear_system,
            "decomposition": e.decomposition,
            "u0_prime": e.u0_prime,
            "alpha0_prime": e.alpha0_prime,
            "ell0": e.ell0,
            "ell_at": e.ell_at,
            "h_prime": e.h_prime,
        },
        "valley": valley,
    });

    writer.add(Format::Csv, "response.csv", || {
        response_csv(&report.data["response"])
    });
    let z = setup.frame.inverse_apply(setup.z);
    writer.add(Format::Svg, "perturb.svg", || {
        let mut plot = Plot::new(&table, &[z]);
        plot.disks(&table, Some(0))
            .polyline(&orbit.points(&table), true, color(0), false)
            .polyline(&[table.center(0), z], false, color(1), true)
            .marker(z, "Z", color(1))
            .caption(&format!(
                "{}  h = {:.6}  h' = {:.6}",
                orbit.sequence, r.h, r.h_prime
            ));
        plot.finish().into_bytes()
    });
    writer.finish(report)
}

fn response_csv(response: &serde_json::Value) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["quantity", "value"])
        .expect("in-memory write");
    if let Some(map) = response.as_object() {
        for (k, v) in map {
            match v {
                serde_json::Value::Array(xs) => {
                    for (i, x) in xs.iter().enumerate() {
                        w.write_record([format!("{k}[{i}]"), x.to_string()])
                            .expect("in-memory write");
                    }
                }
                v => w
                    .write_record([k.clone(), v.to_string()])
                    .expect("in-memory write"),
            }
        }
    }
    w.into_inner().expect("in-memory write")
}

fn cmd_continue(a: &ContinueArgs) -> CmdResult {
    let table = load(&a.orbit.scene)?;
    let config = ContinuationConfig {
        epsilon: a.epsilon,
        gamma_step: a.step,
        min_step: a.min_step,
        max_step: a.max_step,
        max_steps: a.max_steps,
        delta: a.orbit.delta,
        k_star: a.orbit.k_star,
        ..Default::default()
    };
    config.validate().map_err(|e| UsageError(e.to_string()))?;
    let mut inputs = orbit_inputs(&a.orbit, &table);
    inputs["config"] = serde_json::to_value(&config).expect("config serializes");
    let mut report = RunReport::new("continue", None, &inputs);
    let mut writer = Writer::new(&a.output);

    let trace =
        solve(&table, &a.orbit.orbit)?.and_then(|orbit| continuation::run(&table, &orbit, &config));
    let trace = match trace {
        Ok(t) => t,
        Err(e) => {
            report.push(Check::holds("continue.run", false).with_note(e.to_string()));
            return writer.finish(report);
        }
    };

    report.push(
        Check::holds("continue.grazing", trace.outcome.is_grazing())
            .with_note(format!("outcome {}", trace.outcome)),
    );
    if let Some(n) = &trace.note {
        report.notes.push(n.clone());
    }
    let certificate = certify(&trace);
    report.push(match &certificate {
        Ok(c) => Check::below(
            "continue.certificate",
            c.grazing_distance.abs(),
            continuation::LANDING_TOL,
        )
        .with_note("re-solved end state: distance to the grazing singularity"),
        Err(e) => Check::holds("continue.certificate", false).with_note(e.to_string()),
    });
    report.push(
        Check::at_most("continue.displacement", trace.displacement(), trace.epsilon)
            .with_note("|C0(end) - C0(0)| <= epsilon"),
    );
    report.push(Check::holds("continue.h_decreasing", trace.h_decreasing()));
    report.push(
        Check::holds("continue.alpha0_limit", trace.alpha0_within_limit())
            .with_note("|alpha0| < pi/6 at every step"),
    );
    report.push(
        Check::holds("continue.closing_rate", trace.rate_holds())
            .with_note("every secant dh/dgamma < -L(gamma)"),
    );
    report.push(Check::holds(
        "continue.alpha0_drift",
        trace.alpha0_drift_holds(),
    ));

    let first = &trace.steps[0];
    let last = trace.steps.last().expect("trace has its initial step");
    report.data = json!({
        "outcome": trace.outcome,
        "site": trace.site,
        "k_star": trace.k_star,
        "steps": trace.steps.len(),
        "gamma": trace.gamma(),
        "displacement": trace.displacement(),
        "epsilon": trace.epsilon,
        "delta": trace.delta(),
        "rate_bound": trace.rate_bound(0.0),
        "m0": trace.m0,
        "big_m0": trace.big_m0,
        "initial": first,
        "final": last,
        "certificate": certificate.as_ref().ok(),
    });

    writer.add(Format::Csv, "trace.csv", || {
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).expect("in-memory write");
        buf
    });
    if let Ok(c) = &certificate {
        writer.add(Format::JsonReport, "certificate.json", || {
            (serde_json::to_string_pretty(c).expect("certificate serializes") + "\n").into_bytes()
        });
    }
    for (i, step) in frame_indices(trace.steps.len())
        .into_iter()
        .map(|i| (i, &trace.steps[i]))
    {
        writer.add(Format::Svg, format!("frames/step_{i:05}.svg"), || {
            frame_svg(&trace, step, i).into_bytes()
        });
    }
    writer.finish(report)
}

/// Indices of the frames to draw: all steps, or an even subsample with the
/// last step included.
fn frame_indices(n: usize) -> Vec<usize> {
    if n <= MAX_FRAMES {
        return (0..n).collect();
    }
    let mut idx: Vec<usize> = (0..MAX_FRAMES - 1)
        .map(|i| i * (n - 1) / (MAX_FRAMES - 1))
        .collect();
    idx.push(n - 1);
    idx.dedup();
    idx
}

fn frame_svg(trace: &ContinuationTrace, step: &TraceStep, i: usize) -> String {
    let table = trace
        .initial_table
        .with_center(0, step.c0)
        .unwrap_or_else(|_| trace.initial_table.clone());
    let seq = trace.final_orbit.sequence.indices();
    let pts: Vec<Vec2> = seq
        .iter()
        .zip(&step.phis)
        .map(|(&s, &phi)| table.center(s) + Vec2::from_angle(phi))
        .collect();
    let path: Vec<Vec2> = trace.steps[..=i].iter().map(|s| s.c0).collect();
    let mut plot = Plot::new(&table, &[step.z]);
    plot.disks(&table, Some(0))
        .polyline(&pts, true, color(0), false)
        .polyline(&[step.c0, step.z], false, color(1), true)
        .polyline(&path, false, color(2), false)
        .marker(step.z, "Z", color(1))
        .caption(&format!(
            "step {i}  gamma = {:.6}  h = {:.8}  alpha0 = {:.5}",
            step.gamma, step.h, step.alpha0
        ));
    plot.finish()
}

#[cfg(test)]
mod tests;
