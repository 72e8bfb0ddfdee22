//! Command-line front end: `train`, `regen`, `join` and `eval`.
//!
//! Exit codes are 0 on success, 1 on a runtime failure (I/O, numerics, or
//! failed benchmark gates) and 2 on a usage or validation error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::error::{MpError, Result};
use crate::evalbench::{
    lane_change_corpus, run_benchmark, sharp_turn_corpus, synth_demos, BenchConfig, SynthKind,
    SynthSpec,
};
use crate::format::{
    parse_conditions, read_library, read_trajectory_csv, trajectory_to_csv, write_atomic,
    write_library,
};
use crate::learning::{train_type, TrainOptions};
use crate::rollout::{regenerate_with_steps, sweep, Axis, Variation};
use crate::sequencer::{generate_sequence, simple_join, SequenceOptions, SwitchReport};
use crate::types::{validate_library, AdjustmentSet, DynamicsParams, MpLibrary, Trajectory, Vec2};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "mpjoin",
    version,
    about = "Learn, regenerate and join planar motion primitives"
)]
struct Cli {
    #[command(flatten)]
    dynamics: DynamicsArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct DynamicsArgs {
    /// Spring constant of the transformation system (1/s); damping is critical.
    #[arg(long, global = true, display_order = 900, default_value_t = 25.0)]
    alpha_m: f64,
    /// Steepness of the logistic phase.
    #[arg(long, global = true, display_order = 901, default_value_t = 8.0)]
    alpha_z: f64,
}

impl DynamicsArgs {
    fn params(&self) -> Result<DynamicsParams> {
        let p = DynamicsParams::critically_damped(self.alpha_m, self.alpha_z);
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Learn one primitive type and add it to a library file.
    Train(TrainArgs),
    /// Regenerate a primitive, optionally sweeping one parameter.
    Regen(RegenArgs),
    /// Join primitives listed in an initial-conditions file.
    Join(JoinArgs),
    /// Run the benchmark and write its report.
    Eval(EvalArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum SynthChoice {
    LaneChange,
    SharpTurn,
    Straight,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("input").required(true).args(["synth", "synth_config", "demos"])))]
struct TrainArgs {
    /// Built-in synthetic corpus.
    #[arg(long, value_enum)]
    synth: Option<SynthChoice>,
    /// JSON synthetic corpus recipe.
    #[arg(long)]
    synth_config: Option<PathBuf>,
    /// Directory of demonstration CSV files (`t,x,y`), read in name order.
    #[arg(long)]
    demos: Option<PathBuf>,
    /// Number of synthetic demonstrations.
    #[arg(long, default_value_t = 10)]
    q: usize,
    /// Kernels per basis row.
    #[arg(long, default_value_t = 20)]
    n: usize,
    /// Number of basis rows kept.
    #[arg(long, default_value_t = 5)]
    j: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Samples per resampled demonstration.
    #[arg(long, default_value_t = 100)]
    samples: usize,
    /// Primitive id; defaults to the corpus kind or the directory name.
    #[arg(long)]
    id: Option<String>,
    /// Library file to create or update.
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AxisChoice {
    X,
    Y,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("sweep").multiple(false).args(["sweep_goal", "sweep_duration", "sweep_values"])))]
struct RegenArgs {
    #[arg(short, long)]
    library: PathBuf,
    #[arg(long)]
    id: String,
    /// Start position `x,y`.
    #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
    start: Option<Vec2>,
    /// Goal position `x,y`; defaults to the demonstrations' mean goal.
    #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
    goal: Option<Vec2>,
    /// Duration in seconds; defaults to the mean demonstration duration.
    #[arg(long, allow_hyphen_values = true)]
    duration: Option<f64>,
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    tau: f64,
    /// Comma-separated fine-tuning coefficients for x.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    s_x: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    s_y: Option<Vec<f64>>,
    /// One goal per occurrence.
    #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
    sweep_goal: Vec<Vec2>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    sweep_duration: Vec<f64>,
    /// Values for one fine-tuning coefficient, chosen by `--sweep-axis` and
    /// `--sweep-index`.
    #[arg(
        long,
        value_delimiter = ',',
        allow_hyphen_values = true,
        requires = "sweep_index"
    )]
    sweep_values: Vec<f64>,
    #[arg(long, value_enum, default_value = "x")]
    sweep_axis: AxisChoice,
    #[arg(long)]
    sweep_index: Option<usize>,
    /// Integration steps over the horizon.
    #[arg(long, default_value_t = 100)]
    steps: usize,
    #[arg(short, long)]
    out_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    Proposed,
    Simple,
    Both,
}

#[derive(Debug, Args)]
struct JoinArgs {
    #[arg(short, long)]
    library: PathBuf,
    /// CSV with header `id,T,x_init,y_init,x_g,y_g`.
    #[arg(short, long)]
    conditions: PathBuf,
    #[arg(long, value_enum, default_value = "both")]
    method: Method,
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    tau: f64,
    /// Reject segments that start more than 1 cm from the previous goal.
    #[arg(long)]
    strict: bool,
    #[arg(short, long)]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// JSON benchmark config; the built-in standard config when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Report path; printed to stdout when omitted.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Directory for demonstration and joined-trajectory CSVs.
    #[arg(long)]
    artifacts: Option<PathBuf>,
}

fn parse_point(s: &str) -> std::result::Result<Vec2, String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 2 {
        return Err(format!("expected `x,y`, got `{s}`"));
    }
    let mut v = [0.0; 2];
    for (slot, p) in v.iter_mut().zip(&parts) {
        *slot = p
            .parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .ok_or_else(|| format!("`{p}` is not a finite number"))?;
    }
    Ok(Vec2::new(v[0], v[1]))
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                EXIT_USAGE
            } else {
                EXIT_FAILURE
            }
        }
    }
}

fn dispatch(cli: Cli) -> Result<i32> {
    let params = cli.dynamics.params()?;
    match cli.command {
        Command::Train(a) => cmd_train(&a, &params),
        Command::Regen(a) => cmd_regen(&a, &params),
        Command::Join(a) => cmd_join(&a, &params),
        Command::Eval(a) => cmd_eval(&a, &params),
    }
}

fn read_demo_dir(dir: &Path) -> Result<Vec<Trajectory>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(MpError::invalid(format!(
            "no .csv demonstrations in {}",
            dir.display()
        )));
    }
    files.iter().map(|f| read_trajectory_csv(f)).collect()
}

fn cmd_train(a: &TrainArgs, params: &DynamicsParams) -> Result<i32> {
    let (default_id, demos) = if let Some(kind) = a.synth {
        let spec = match kind {
            SynthChoice::LaneChange => lane_change_corpus(a.q, a.seed),
            SynthChoice::SharpTurn => sharp_turn_corpus(a.q, a.seed),
            SynthChoice::Straight => SynthSpec {
                seed: a.seed,
                ..SynthSpec::new(SynthKind::Straight, a.q)
            },
        };
        let name = match kind {
            SynthChoice::LaneChange => "lane_change",
            SynthChoice::SharpTurn => "sharp_turn",
            SynthChoice::Straight => "straight",
        };
        (name.to_string(), synth_demos(&spec)?)
    } else if let Some(path) = &a.synth_config {
        let text = std::fs::read(path)?;
        let spec: SynthSpec = serde_json::from_slice(&text)
            .map_err(|e| MpError::Parse(format!("{}: {e}", path.display())))?;
        let name = serde_json::to_value(spec.kind)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_else(|| "custom".into());
        (name, synth_demos(&spec)?)
    } else {
        let dir = a.demos.as_deref().expect("clap requires one input");
        let name = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "demos".into());
        (name, read_demo_dir(dir)?)
    };
    let id = a.id.clone().unwrap_or(default_id);
    let options = TrainOptions {
        kernels: a.n,
        rank: a.j,
        samples: a.samples,
        ..TrainOptions::default()
    };
    let report = train_type(&id, &demos, &options, params)?;

    let mut lib = if a.output.exists() {
        read_library(&a.output)?
    } else {
        MpLibrary::new()
    };
    let replaced = lib.insert(report.mp.clone()).is_some();
    let violations = validate_library(&lib);
    if !violations.is_empty() {
        let text: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
        return Err(MpError::Numerical(format!(
            "trained library is inconsistent: {}",
            text.join("; ")
        )));
    }
    write_library(&a.output, &lib)?;

    let mp = &report.mp;
    println!(
        "{} `{id}` from {} demonstrations (N = {}, J = {}) into {}",
        if replaced { "replaced" } else { "trained" },
        demos.len(),
        a.n,
        a.j,
        a.output.display()
    );
    println!("spectrum x: {}", join_floats(&mp.x.singular_values));
    println!("spectrum y: {}", join_floats(&mp.y.singular_values));
    println!("fit residual rms x: {}", join_floats(&report.residuals_x));
    println!("fit residual rms y: {}", join_floats(&report.residuals_y));
    if report.rank_deficient {
        println!("warning: at least one kernel fit was rank deficient");
    }
    Ok(EXIT_OK)
}

fn join_floats(v: &[f64]) -> String {
    v.iter()
        .map(|x| format!("{x:.6}"))
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Serialize)]
struct ManifestEntry {
    file: String,
    parameter: &'static str,
    value: serde_json::Value,
    start: [f64; 2],
    goal: [f64; 2],
    duration: f64,
    tau: f64,
    s_x: Vec<f64>,
    s_y: Vec<f64>,
}

#[derive(Serialize)]
struct Manifest {
    id: String,
    entries: Vec<ManifestEntry>,
}

fn cmd_regen(a: &RegenArgs, params: &DynamicsParams) -> Result<i32> {
    let lib = read_library(&a.library)?;
    let mp = lib.get(&a.id)?;
    let mut base = AdjustmentSet::defaults_for(mp);
    if let Some(s) = a.start {
        base.start = s;
    }
    if let Some(g) = a.goal {
        base.goal = g;
    }
    if let Some(d) = a.duration {
        base.duration = d;
    }
    base.tau = a.tau;
    if let Some(s) = &a.s_x {
        base.s_x = s.clone();
    }
    if let Some(s) = &a.s_y {
        base.s_y = s.clone();
    }
    base.check_against(mp)?;
    let variation = if !a.sweep_goal.is_empty() {
        Some(Variation::Goal(a.sweep_goal.clone()))
    } else if !a.sweep_duration.is_empty() {
        Some(Variation::Duration(a.sweep_duration.clone()))
    } else if !a.sweep_values.is_empty() {
        let axis = match a.sweep_axis {
            AxisChoice::X => Axis::X,
            AxisChoice::Y => Axis::Y,
        };
        Some(Variation::Coefficient {
            axis,
            index: a.sweep_index.unwrap_or(0),
            values: a.sweep_values.clone(),
        })
    } else {
        None
    };
    std::fs::create_dir_all(&a.out_dir)?;

    let Some(variation) = variation else {
        let traj = regenerate_with_steps(mp, &base, params, a.steps)?;
        let path = a.out_dir.join(format!("{}.csv", a.id));
        write_atomic(&path, &trajectory_to_csv(&traj))?;
        println!("wrote {}", path.display());
        return Ok(EXIT_OK);
    };

    let adjustments: Vec<AdjustmentSet> = (0..variation.len())
        .map(|k| variation.apply(&base, k))
        .collect();
    let trajs = if a.steps == params.samples {
        sweep(mp, &base, &variation, params)?
    } else {
        adjustments
            .iter()
            .map(|adj| regenerate_with_steps(mp, adj, params, a.steps))
            .collect::<Result<Vec<_>>>()?
    };
    let mut entries = Vec::with_capacity(trajs.len());
    for (k, (traj, adj)) in trajs.iter().zip(&adjustments).enumerate() {
        let file = format!("{}_{k:03}.csv", a.id);
        write_atomic(&a.out_dir.join(&file), &trajectory_to_csv(traj))?;
        let (parameter, value) = match &variation {
            Variation::Goal(v) => ("goal", serde_json::json!([v[k].x, v[k].y])),
            Variation::Duration(v) => ("duration", serde_json::json!(v[k])),
            Variation::Coefficient {
                axis,
                index,
                values,
            } => (
                match axis {
                    Axis::X => "s_x",
                    Axis::Y => "s_y",
                },
                serde_json::json!({ "index": index, "value": values[k] }),
            ),
        };
        entries.push(ManifestEntry {
            file,
            parameter,
            value,
            start: [adj.start.x, adj.start.y],
            goal: [adj.goal.x, adj.goal.y],
            duration: adj.duration,
            tau: adj.tau,
            s_x: adj.s_x.clone(),
            s_y: adj.s_y.clone(),
        });
    }
    let manifest = Manifest {
        id: a.id.clone(),
        entries,
    };
    let mut bytes =
        serde_json::to_vec_pretty(&manifest).map_err(|e| MpError::Numerical(e.to_string()))?;
    bytes.push(b'\n');
    let path = a.out_dir.join("manifest.json");
    write_atomic(&path, &bytes)?;
    println!("wrote {} trajectories and {}", trajs.len(), path.display());
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct MethodOutput {
    file: String,
    a_max: f64,
    a_max_global: f64,
    misses: Vec<f64>,
    velocity_jumps: Vec<f64>,
    switch_times: Vec<f64>,
    switch_angles: Vec<f64>,
}

impl MethodOutput {
    fn new(file: &str, r: &SwitchReport) -> Self {
        MethodOutput {
            file: file.to_string(),
            a_max: r.a_max,
            a_max_global: r.a_max_global,
            misses: r.misses.clone(),
            velocity_jumps: r.velocity_jumps.clone(),
            switch_times: r.switch_times.clone(),
            switch_angles: r.switch_angles.clone(),
        }
    }
}

#[derive(Serialize)]
struct JoinReport {
    segments: usize,
    proposed: Option<MethodOutput>,
    simple: Option<MethodOutput>,
    accel_ratio: Option<f64>,
}

fn cmd_join(a: &JoinArgs, params: &DynamicsParams) -> Result<i32> {
    let lib = read_library(&a.library)?;
    let file = std::fs::File::open(&a.conditions)?;
    let conditions = parse_conditions(file).map_err(|e| match e {
        MpError::Parse(m) => MpError::Parse(format!("{}: {m}", a.conditions.display())),
        other => other,
    })?;
    let options = SequenceOptions {
        tau: a.tau,
        strict: a.strict,
        ..SequenceOptions::default()
    };
    std::fs::create_dir_all(&a.out_dir)?;
    let mut report = JoinReport {
        segments: conditions.len(),
        proposed: None,
        simple: None,
        accel_ratio: None,
    };
    if matches!(a.method, Method::Proposed | Method::Both) {
        let (traj, r) = generate_sequence(&lib, &conditions, params, &options)?;
        write_atomic(&a.out_dir.join("proposed.csv"), &trajectory_to_csv(&traj))?;
        report.proposed = Some(MethodOutput::new("proposed.csv", &r));
    }
    if matches!(a.method, Method::Simple | Method::Both) {
        let (traj, r) = simple_join(&lib, &conditions, params, &options)?;
        write_atomic(&a.out_dir.join("simple.csv"), &trajectory_to_csv(&traj))?;
        report.simple = Some(MethodOutput::new("simple.csv", &r));
    }
    if let (Some(p), Some(s)) = (&report.proposed, &report.simple) {
        if s.a_max > 0.0 {
            report.accel_ratio = Some(p.a_max / s.a_max);
        }
    }
    let mut bytes =
        serde_json::to_vec_pretty(&report).map_err(|e| MpError::Numerical(e.to_string()))?;
    bytes.push(b'\n');
    write_atomic(&a.out_dir.join("report.json"), &bytes)?;
    for (name, m) in [("proposed", &report.proposed), ("simple", &report.simple)] {
        if let Some(m) = m {
            println!(
                "{name}: a_max {:.4} m/s^2, misses [{}] m, velocity jumps [{}] m/s",
                m.a_max,
                join_floats(&m.misses),
                join_floats(&m.velocity_jumps)
            );
        }
    }
    if let Some(r) = report.accel_ratio {
        println!("acceleration ratio {r:.4}");
    }
    Ok(EXIT_OK)
}

fn cmd_eval(a: &EvalArgs, params: &DynamicsParams) -> Result<i32> {
    let mut config = match &a.config {
        Some(path) => {
            let text = std::fs::read(path)?;
            serde_json::from_slice::<BenchConfig>(&text)
                .map_err(|e| MpError::Parse(format!("{}: {e}", path.display())))?
        }
        None => BenchConfig::standard(),
    };
    if let Some(seed) = a.seed {
        config.seed = seed;
    }
    let out = run_benchmark(&config, params)?;
    let json = out.report.to_json()?;
    match &a.output {
        Some(path) => write_atomic(path, json.as_bytes())?,
        None => print!("{json}"),
    }
    if let Some(dir) = &a.artifacts {
        std::fs::create_dir_all(dir)?;
        for (name, demos) in &out.demos {
            for (q, d) in demos.iter().enumerate() {
                write_atomic(
                    &dir.join(format!("{name}_demo_{q:03}.csv")),
                    &trajectory_to_csv(d),
                )?;
            }
        }
        for (name, proposed, simple) in &out.joins {
            write_atomic(
                &dir.join(format!("{name}_proposed.csv")),
                &trajectory_to_csv(proposed),
            )?;
            write_atomic(
                &dir.join(format!("{name}_simple.csv")),
                &trajectory_to_csv(simple),
            )?;
        }
    }
    for g in &out.report.gates {
        eprintln!(
            "[{}] {}: {}",
            if g.passed { "pass" } else { "FAIL" },
            g.name,
            g.detail
        );
    }
    Ok(if out.report.passed {
        EXIT_OK
    } else {
        EXIT_FAILURE
    })
}
