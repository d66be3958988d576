//! Command line front end. [`run`] is the whole program; the binary only
//! sets up logging and forwards the exit code.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 invalid input, 3 a solver or
//! sampler that did not converge (outputs are still written).

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::parser::ValueSource;
use clap::{ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{load_config, parse_param};
use crate::error::{Error, Result};
use crate::figures::{figure, FigureOptions, FIGURES};
use crate::hamiltonian::DiffusionHamiltonian;
use crate::io::{read_path_csv, write_csv, write_json, write_path_csv, RunManifest};
use crate::model::catalog::MODEL_NAMES;
use crate::model::{builtin_model, param_schema, DiffusionModel, Domain, Equilibrium, JumpModel, Model, Params, Stability};
use crate::path::{
    finite_time_action_sweep, gmam, gmam_multistart, iamm, mam_relax, quasipotential, ActionReport, FinalCondition,
    GmamOptions, IammOptions, MamOptions, PhasePoint,
};
use crate::sampling::{is_exit_probability, soliton_position_tail, BiasSchedule, ExitMode, ISEstimate, SampleConfig};
use crate::sde::{dynkin_solve_1d, escape_time_quadrature, euler_maruyama, kramers_mte, mean_exit_time_mc, Boundary, SimConfig};
use crate::ssa::{extinction_time_ensemble, gillespie, single_step_mte, EnsembleConfig};
use crate::wkb::{self, build_hamiltonian, lambda_opt_single_step};

/// `println!` that ignores a closed stdout (e.g. piped into `head`).
macro_rules! say {
    ($($t:tt)*) => {{
        use std::io::Write;
        let _ = writeln!(std::io::stdout(), $($t)*);
    }};
}

#[derive(Debug, Parser)]
#[command(name = "rarepath", version, about = "Rare-event statistics: simulation, asymptotics and optimal paths")]
struct Cli {
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Worker threads for ensembles; results do not depend on it.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
    /// Output directory.
    #[arg(long, global = true, env = "RAREPATH_OUT", default_value = "rarepath-out")]
    out: PathBuf,
    /// TOML file with option values and a [params] table.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Model parameter `key=value`; builtin keys may also be given as `--key value`.
    #[arg(long = "param", global = true, value_name = "KEY=VALUE")]
    params: Vec<String>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// One Euler–Maruyama trajectory.
    Simulate(SimulateArgs),
    /// Monte Carlo mean first exit time.
    MteMc(MteMcArgs),
    /// Mean exit time from the 1D generator boundary value problem.
    Dynkin(DynkinArgs),
    /// Kramers formula and the escape-time quadrature for a potential.
    Kramers(KramersArgs),
    /// One Gillespie trajectory of a jump model.
    Ssa(SsaArgs),
    /// Mean extinction time over Gillespie runs.
    MteSsa(MteSsaArgs),
    /// WKB action, prefactor and mean extinction time.
    Wkb(WkbArgs),
    /// Optimal paths and actions.
    #[command(subcommand)]
    Path(PathCmd),
    /// Importance-sampled exit probability.
    IsSample(IsSampleArgs),
    /// Data behind one figure.
    Figure(FigureArgs),
}

#[derive(Debug, Subcommand)]
enum PathCmd {
    /// Finite-time action minimizer.
    Mam(MamArgs),
    /// Geometric (arclength) minimum action method.
    Gmam(GmamArgs),
    /// Newton solver for Hamilton's equations on a long time window.
    Iamm(IammArgs),
    /// Minimum action over all travel times.
    Quasipotential(QpArgs),
    /// Finite-time action against the horizon.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
struct ModelArg {
    /// Builtin model name.
    #[arg(long, default_value = "cubic_well")]
    model: String,
}

#[derive(Debug, Args)]
struct JumpModelArg {
    /// Builtin jump model name.
    #[arg(long, default_value = "sis")]
    model: String,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    m: ModelArg,
    /// Start: equilibrium label or comma list (default: first stable state).
    #[arg(long)]
    x0: Option<String>,
    #[arg(long, default_value_t = 1e-3)]
    dt: f64,
    #[arg(long, default_value_t = 10.0)]
    t_max: f64,
    /// Write every n-th state.
    #[arg(long, default_value_t = 1)]
    stride: usize,
}

#[derive(Debug, Args)]
struct DomainArgs {
    /// Lower corner of the box, comma list (default -inf).
    #[arg(long, allow_hyphen_values = true)]
    lo: Option<String>,
    /// Upper corner of the box, comma list. Potential models default to
    /// half a well width past the barrier top.
    #[arg(long, allow_hyphen_values = true)]
    hi: Option<String>,
}

#[derive(Debug, Args)]
struct MteMcArgs {
    #[command(flatten)]
    m: ModelArg,
    #[arg(long)]
    x0: Option<String>,
    #[arg(long, default_value_t = 1e-3)]
    dt: f64,
    #[arg(long, default_value_t = 1e6)]
    t_max: f64,
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    #[command(flatten)]
    domain: DomainArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Kind {
    Absorbing,
    Reflecting,
}

#[derive(Debug, Args)]
struct DynkinArgs {
    #[command(flatten)]
    m: ModelArg,
    #[arg(long, allow_hyphen_values = true)]
    left: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    right: Option<f64>,
    #[arg(long, value_enum, default_value = "reflecting")]
    left_kind: Kind,
    #[arg(long, value_enum, default_value = "absorbing")]
    right_kind: Kind,
    #[arg(long, default_value_t = 1000)]
    grid_n: usize,
    #[arg(long, allow_hyphen_values = true)]
    x0: Option<f64>,
}

#[derive(Debug, Args)]
struct KramersArgs {
    #[command(flatten)]
    m: ModelArg,
    /// Quadrature limits x1 < x_min < x2 < x_max < a.
    #[arg(long, allow_hyphen_values = true)]
    x1: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    x2: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    a: Option<f64>,
}

#[derive(Debug, Args)]
struct SsaArgs {
    #[command(flatten)]
    m: JumpModelArg,
    /// Initial population, comma list (default: K times the stable state).
    #[arg(long)]
    x0: Option<String>,
    #[arg(long, default_value_t = 100.0)]
    t_max: f64,
}

#[derive(Debug, Args)]
struct MteSsaArgs {
    #[command(flatten)]
    m: JumpModelArg,
    #[arg(long)]
    x0: Option<String>,
    #[arg(long, default_value_t = 200)]
    samples: usize,
    /// Censoring time (default: none).
    #[arg(long)]
    t_max: Option<f64>,
}

#[derive(Debug, Args)]
struct WkbArgs {
    #[command(flatten)]
    m: JumpModelArg,
    /// Points in the written λ_opt table.
    #[arg(long, default_value_t = 401)]
    points: usize,
}

#[derive(Debug, Args)]
struct Endpoints {
    /// Start: equilibrium label or comma list.
    #[arg(long, allow_hyphen_values = true)]
    from: Option<String>,
    /// End: equilibrium label or comma list.
    #[arg(long, allow_hyphen_values = true)]
    to: Option<String>,
}

#[derive(Debug, Args)]
struct MamArgs {
    #[command(flatten)]
    m: ModelArg,
    #[command(flatten)]
    ends: Endpoints,
    #[arg(long, default_value_t = 4.0)]
    t_f: f64,
    #[arg(long, default_value_t = 400)]
    grid_n: usize,
    /// Coordinates (0-based, comma list) left free at the final time.
    #[arg(long)]
    free: Option<String>,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
}

#[derive(Debug, Args)]
struct GmamArgs {
    #[command(flatten)]
    m: ModelArg,
    #[command(flatten)]
    ends: Endpoints,
    #[arg(long, default_value_t = 400)]
    grid_n: usize,
    /// Independent starts; the lowest action wins.
    #[arg(long, default_value_t = 1)]
    starts: usize,
}

#[derive(Debug, Args)]
struct IammArgs {
    /// Builtin model; jump models use their WKB Hamiltonian.
    #[arg(long, default_value = "cubic_well")]
    model: String,
    #[command(flatten)]
    ends: Endpoints,
    #[arg(long, allow_hyphen_values = true)]
    from_lambda: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    to_lambda: Option<String>,
    #[arg(long, default_value_t = 4000)]
    grid_n: usize,
    /// Half window length (default from the slowest linear rate).
    #[arg(long)]
    t_eps: Option<f64>,
}

#[derive(Debug, Args)]
struct QpArgs {
    #[command(flatten)]
    m: ModelArg,
    #[command(flatten)]
    ends: Endpoints,
    #[arg(long, default_value_t = 400)]
    grid_n: usize,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    m: ModelArg,
    #[command(flatten)]
    ends: Endpoints,
    /// Horizons, comma list.
    #[arg(long, default_value = "0.5,1,2,4,8")]
    t_f: String,
    #[arg(long, default_value_t = 400)]
    grid_n: usize,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    Terminal,
    FirstPassage,
}

#[derive(Debug, Args)]
struct IsSampleArgs {
    #[command(flatten)]
    m: ModelArg,
    #[arg(long)]
    x0: Option<String>,
    #[arg(long, default_value_t = 4.0)]
    t_f: f64,
    #[arg(long, default_value_t = 1e-3)]
    dt: f64,
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    #[command(flatten)]
    domain: DomainArgs,
    #[arg(long, value_enum, default_value = "terminal")]
    mode: Mode,
    /// Path CSV with momenta (e.g. from `path mam`); the control is σᵀλ.
    #[arg(long)]
    bias_path: Option<PathBuf>,
    /// Soliton position targets, comma list: writes the tail table instead.
    #[arg(long, allow_hyphen_values = true)]
    tail: Option<String>,
    /// Grid of the per-target bias paths in tail mode.
    #[arg(long, default_value_t = 200)]
    grid_n: usize,
}

#[derive(Debug, Args)]
struct FigureArgs {
    /// One of fig4, fig5d, fig6a, fig8, fig9, fig10, fig11, fig14.
    name: String,
    /// Swept parameter where the figure offers a choice.
    #[arg(long)]
    vary: Option<String>,
    /// Swept values, comma list.
    #[arg(long, allow_hyphen_values = true)]
    values: Option<String>,
    /// Sample count, or one per swept value.
    #[arg(long)]
    samples: Option<String>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    grid_n: Option<usize>,
    #[arg(long)]
    t_f: Option<f64>,
}

/// Runs the program on `argv` (including the program name) and returns the
/// process exit code. Errors are reported on stderr.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    match parse(argv) {
        Ok(Parsed::Exit(code)) => code,
        Ok(Parsed::Run(cli, settings)) => match execute(cli, settings) {
            Ok(code) => code,
            Err(e) => {
                eprintln!("error: {e}");
                e.exit_code()
            }
        },
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

enum Parsed {
    Exit(i32),
    Run(Box<Cli>, Settings),
}

/// Values resolved outside clap: merged model parameters and what went into them.
struct Settings {
    params: Params,
    options: BTreeMap<String, Value>,
    command: String,
}

fn command() -> clap::Command {
    Cli::command().args_override_self(true)
}

fn all_param_keys() -> Vec<&'static str> {
    let mut keys: Vec<&str> = MODEL_NAMES
        .iter()
        .flat_map(|m| param_schema(m).unwrap().iter().map(|s| s.key))
        .collect();
    keys.sort_unstable();
    keys.dedup();
    keys
}

fn long_flags(cmd: &clap::Command) -> Vec<String> {
    let mut out: Vec<String> = cmd.get_arguments().filter_map(|a| a.get_long().map(String::from)).collect();
    for sub in cmd.get_subcommands() {
        out.extend(long_flags(sub));
    }
    out
}

/// `--r0 1.5` and `--r0=1.5` become `--param r0=1.5` for model keys that
/// are not flags of their own.
fn rewrite_param_flags(argv: Vec<OsString>, flags: &[String]) -> Vec<OsString> {
    let keys = all_param_keys();
    let mut out = Vec::with_capacity(argv.len());
    let mut it = argv.into_iter().peekable();
    if let Some(bin) = it.next() {
        out.push(bin);
    }
    while let Some(a) = it.next() {
        let s = a.to_string_lossy().into_owned();
        if let Some(body) = s.strip_prefix("--") {
            let (name, inline) = match body.split_once('=') {
                Some((n, v)) => (n.to_string(), Some(v.to_string())),
                None => (body.to_string(), None),
            };
            let key = name.replace('-', "_");
            if !flags.iter().any(|f| *f == name) && keys.contains(&key.as_str()) {
                let value = match inline {
                    Some(v) => Some(v),
                    None => it.next().map(|v| v.to_string_lossy().into_owned()),
                };
                if let Some(v) = value {
                    out.push("--param".into());
                    out.push(format!("{key}={v}").into());
                    continue;
                }
            }
        }
        out.push(a);
    }
    out
}

/// Chain of subcommand names and the leaf matches.
fn leaf(m: &ArgMatches) -> (Vec<String>, &ArgMatches) {
    let mut names = Vec::new();
    let mut cur = m;
    while let Some((name, sub)) = cur.subcommand() {
        names.push(name.to_string());
        cur = sub;
    }
    (names, cur)
}

fn find_sub<'a>(cmd: &'a clap::Command, names: &[String]) -> &'a clap::Command {
    let mut cur = cmd;
    for n in names {
        cur = cur.find_subcommand(n).expect("parsed subcommand exists");
    }
    cur
}

fn from_user(m: &ArgMatches, id: &str) -> bool {
    matches!(m.try_contains_id(id), Ok(true))
        && matches!(m.value_source(id), Some(ValueSource::CommandLine | ValueSource::EnvVariable))
}

fn parse(argv: Vec<OsString>) -> Result<Parsed> {
    let cmd = command();
    let argv = rewrite_param_flags(argv, &long_flags(&cmd));
    let matches = match cmd.clone().try_get_matches_from(&argv) {
        Ok(m) => m,
        Err(e) => return Ok(Parsed::Exit(clap_exit(e))),
    };
    let (names, leaf_m) = leaf(&matches);
    let mut argv = argv;
    let mut params = Params::new();
    let config_path: Option<PathBuf> = matches.get_one::<PathBuf>("config").cloned();
    if let Some(path) = &config_path {
        let file = load_config(path)?;
        params.extend(file.params);
        let sub = find_sub(&cmd, &names);
        let mut extra: Vec<OsString> = Vec::new();
        for (key, value) in &file.options {
            let arg = sub
                .get_arguments()
                .chain(cmd.get_arguments())
                .find(|a| a.get_long() == Some(key.as_str()) && !a.is_positional())
                .ok_or_else(|| Error::Config(format!("{}: `{key}` is not an option of `{}`", path.display(), names.join(" "))))?;
            if ["config", "param"].contains(&key.as_str()) {
                return Err(Error::Config(format!("{}: `{key}` cannot be set from a file", path.display())));
            }
            let id = arg.get_id().as_str();
            if from_user(leaf_m, id) || from_user(&matches, id) {
                continue;
            }
            if arg.get_action().takes_values() {
                extra.push(format!("--{key}").into());
                extra.push(value.into());
            } else if value == "true" {
                extra.push(format!("--{key}").into());
            }
        }
        // file options go right after the innermost subcommand name
        let mut pos = 1;
        for n in &names {
            pos += argv[pos..].iter().position(|a| a.to_string_lossy() == *n).expect("subcommand token") + 1;
        }
        argv.splice(pos..pos, extra);
    }
    let matches = match cmd.clone().try_get_matches_from(&argv) {
        Ok(m) => m,
        Err(e) => return Ok(Parsed::Exit(clap_exit(e))),
    };
    let cli = Cli::from_arg_matches(&matches).map_err(|e| Error::Config(e.to_string()))?;
    for kv in &cli.params {
        let (k, v) = parse_param(kv)?;
        params.insert(k, v);
    }
    let (names, leaf_m) = leaf(&matches);
    let leaf_cmd = find_sub(&cmd, &names);
    let mut options = BTreeMap::new();
    for arg in leaf_cmd.get_arguments() {
        let id = arg.get_id().as_str();
        if ["out", "seed", "workers", "config", "params"].contains(&id) {
            continue;
        }
        if let Ok(Some(raw)) = leaf_m.try_get_raw(id) {
            let vals: Vec<String> = raw.map(|v| v.to_string_lossy().into_owned()).collect();
            options.insert(id.to_string(), json!(vals.join(",")));
        }
    }
    Ok(Parsed::Run(
        Box::new(cli),
        Settings {
            params,
            options,
            command: names.join(" "),
        },
    ))
}

fn clap_exit(e: clap::Error) -> i32 {
    let _ = e.print();
    match e.kind() {
        clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
        _ => 2,
    }
}

/// Output bookkeeping for one command.
struct Run {
    dir: PathBuf,
    files: Vec<PathBuf>,
    manifest: RunManifest,
    started: Instant,
}

impl Run {
    fn new(dir: &Path, s: &Settings, seed: u64, workers: usize) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        let mut manifest = RunManifest::new(&s.command, seed, workers);
        for (k, v) in &s.options {
            manifest.params.insert(k.clone(), v.clone());
        }
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
            manifest,
            started: Instant::now(),
        })
    }

    fn model_params(&mut self, name: &str, p: &Params) {
        self.manifest.params.insert("model".into(), json!(name));
        for (k, v) in p {
            self.manifest.params.insert(format!("params.{k}"), json!(v));
        }
    }

    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        self.files.push(p.clone());
        p
    }

    fn csv(&mut self, name: &str, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
        let p = self.path(name);
        write_csv(p, header, rows)
    }

    fn json<T: Serialize + ?Sized>(&mut self, name: &str, v: &T) -> Result<()> {
        let p = self.path(name);
        write_json(p, v)
    }

    fn finish(mut self) -> Result<()> {
        self.manifest.wall_time_s = self.started.elapsed().as_secs_f64();
        let files = std::mem::take(&mut self.files);
        self.manifest.record_outputs(&self.dir, &files)?;
        write_json(self.dir.join("manifest.json"), &self.manifest)?;
        for f in &files {
            say!("{}", f.display());
        }
        Ok(())
    }
}

fn list(s: &str, field: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| {
            let t = t.trim();
            match t {
                "inf" | "+inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                _ => t.parse::<f64>().map_err(|_| Error::invalid(field, format!("`{t}` is not a number"))),
            }
        })
        .collect()
}

/// Equilibrium label or comma list of coordinates.
fn point(spec: &str, eqs: &[Equilibrium], dim: usize, field: &str) -> Result<Vec<f64>> {
    if let Some(e) = eqs.iter().find(|e| e.label == spec) {
        return Ok(e.state.clone());
    }
    let v = list(spec, field).map_err(|_| {
        let labels: Vec<&str> = eqs.iter().map(|e| e.label.as_str()).collect();
        Error::invalid(field, format!("`{spec}` is neither a number list nor one of {labels:?}"))
    })?;
    if v.len() != dim {
        return Err(Error::invalid(field, format!("expected {dim} components, got {}", v.len())));
    }
    Ok(v)
}

fn diffusion(name: &str, params: &Params) -> Result<(DiffusionModel, Params)> {
    let m = builtin_model(name, params)?.into_diffusion()?;
    let p = m.params.clone();
    Ok((m, p))
}

fn jump(name: &str, params: &Params) -> Result<(JumpModel, Params)> {
    let m = builtin_model(name, params)?.into_jump()?;
    let p = m.params.clone();
    Ok((m, p))
}

fn stable_state(m: &DiffusionModel) -> Result<Vec<f64>> {
    m.first_with(Stability::Stable)
        .map(|e| e.state.clone())
        .ok_or_else(|| Error::invalid("x0", "model has no stable state; give --x0"))
}

fn start(m: &DiffusionModel, x0: &Option<String>) -> Result<Vec<f64>> {
    match x0 {
        Some(s) => point(s, &m.equilibria, m.dim, "x0"),
        None => stable_state(m),
    }
}

/// Half a well width past the barrier top, for 1D potentials.
fn default_exit(m: &DiffusionModel) -> Option<f64> {
    let p = m.potential.as_ref()?;
    p.x_max.is_finite().then(|| p.x_max + 0.5 * (p.x_max - p.x_min))
}

fn domain(m: &DiffusionModel, d: &DomainArgs, default_hi: Option<f64>) -> Result<Domain> {
    let lo = match &d.lo {
        Some(s) => list(s, "lo")?,
        None => vec![f64::NEG_INFINITY; m.dim],
    };
    let hi = match (&d.hi, default_hi) {
        (Some(s), _) => list(s, "hi")?,
        (None, Some(h)) if m.dim == 1 => vec![h],
        (None, _) if d.lo.is_some() => vec![f64::INFINITY; m.dim],
        _ => return Err(Error::invalid("hi", "no default exit boundary for this model; give --lo and/or --hi")),
    };
    if lo.len() != m.dim || hi.len() != m.dim {
        return Err(Error::invalid("lo/hi", format!("expected {} components", m.dim)));
    }
    Ok(Domain::Box { lo, hi })
}

/// `round(K x)` at the stable interior state (`ceil` when an Allee threshold sits below it).
fn default_population(m: &JumpModel) -> Result<Vec<i64>> {
    let e = m
        .equilibria
        .iter()
        .filter(|e| e.stability == Stability::Stable && e.state.iter().any(|v| *v > 0.0))
        .last()
        .ok_or_else(|| Error::invalid("x0", "no stable interior state; give --x0"))?;
    let threshold = m.equilibria.iter().any(|e| e.stability == Stability::Unstable && e.state.iter().all(|v| *v > 0.0));
    Ok(e.state
        .iter()
        .map(|v| {
            let n = m.system_size * v;
            (if threshold { n.ceil() } else { n.round() }) as i64
        })
        .collect())
}

fn population(m: &JumpModel, x0: &Option<String>) -> Result<Vec<i64>> {
    match x0 {
        None => default_population(m),
        Some(s) => {
            let v = list(s, "x0")?;
            if v.len() != m.dim || v.iter().any(|x| x.fract() != 0.0 || *x < 0.0) {
                return Err(Error::invalid("x0", format!("expected {} nonnegative integers", m.dim)));
            }
            Ok(v.iter().map(|x| *x as i64).collect())
        }
    }
}

/// Topology (b) when an unstable interior state separates extinction from
/// the stable state.
fn mte_report(m: &JumpModel) -> Result<wkb::MteReport> {
    let allee = m.equilibria.iter().any(|e| e.stability == Stability::Unstable && e.state.iter().all(|v| *v > 0.0));
    if allee {
        wkb::mte_topology_b(m)
    } else {
        wkb::mte_topology_a(m)
    }
}

#[derive(Serialize)]
struct PathReport<'a> {
    action: f64,
    residual: f64,
    iterations: usize,
    converged: bool,
    max_abs_hamiltonian: Option<f64>,
    transit_time: Option<f64>,
    from: &'a [f64],
    to: &'a [f64],
    #[serde(skip_serializing_if = "Option::is_none")]
    start_actions: Option<Vec<f64>>,
}

fn write_path_report(run: &mut Run, r: &ActionReport, from: &[f64], to: &[f64], starts: Option<Vec<f64>>) -> Result<i32> {
    let p = run.path("path.csv");
    write_path_csv(p, &r.path)?;
    let report = PathReport {
        action: r.action,
        residual: r.residual,
        iterations: r.iterations,
        converged: r.converged,
        max_abs_hamiltonian: r.max_abs_hamiltonian,
        transit_time: r.transit_time(),
        from,
        to,
        start_actions: starts,
    };
    say!("{}", serde_json::to_string(&report)?);
    run.json("report.json", &report)?;
    Ok(not_converged(r.converged, "path solver"))
}

fn not_converged(ok: bool, what: &str) -> i32 {
    if ok {
        0
    } else {
        eprintln!("error: {what} did not converge; outputs were written");
        3
    }
}

fn endpoints(m: &DiffusionModel, e: &Endpoints) -> Result<(Vec<f64>, Vec<f64>)> {
    let from = match &e.from {
        Some(s) => point(s, &m.equilibria, m.dim, "from")?,
        None => stable_state(m)?,
    };
    let to = match &e.to {
        Some(s) => point(s, &m.equilibria, m.dim, "to")?,
        None => m
            .first_with(Stability::Saddle)
            .map(|e| e.state.clone())
            .ok_or_else(|| Error::invalid("to", "model has no saddle; give --to"))?,
    };
    Ok((from, to))
}

fn execute(cli: Box<Cli>, s: Settings) -> Result<i32> {
    let Cli { seed, workers, out, cmd, .. } = *cli;
    let mut run = Run::new(&out, &s, seed, workers)?;
    let code = match cmd {
        Cmd::Simulate(a) => {
            let (m, p) = diffusion(&a.m.model, &s.params)?;
            run.model_params(&a.m.model, &p);
            let x0 = start(&m, &a.x0)?;
            if a.stride == 0 {
                return Err(Error::invalid("stride", "must be at least 1"));
            }
            let traj = euler_maruyama(&m, &x0, &SimConfig::new(a.dt, a.t_max, seed, 1))?;
            let mut header = vec!["t".to_string()];
            header.extend((1..=m.dim).map(|i| format!("x{i}")));
            let rows: Vec<Vec<f64>> = (0..traj.len())
                .filter(|k| k % a.stride == 0 || *k + 1 == traj.len())
                .map(|k| {
                    let mut r = vec![traj.times[k]];
                    r.extend(traj.state(k));
                    r
                })
                .collect();
            let h: Vec<&str> = header.iter().map(String::as_str).collect();
            run.csv("trajectory.csv", &h, &rows)?;
            let last = traj.len() - 1;
            let summary = json!({
                "model": a.m.model,
                "dim": m.dim,
                "steps": last,
                "t_end": traj.times[last],
                "final_state": traj.state(last),
            });
            say!("{summary}");
            run.json("summary.json", &summary)?;
            0
        }
        Cmd::MteMc(a) => {
            let (m, p) = diffusion(&a.m.model, &s.params)?;
            run.model_params(&a.m.model, &p);
            let x0 = start(&m, &a.x0)?;
            let dom = domain(&m, &a.domain, default_exit(&m))?;
            let cfg = SimConfig {
                workers,
                ..SimConfig::new(a.dt, a.t_max, seed, a.samples)
            };
            let e = mean_exit_time_mc(&m, &x0, &dom, &cfg)?;
            let mut v = serde_json::to_value(&e)?;
            if let Some(pot) = &m.potential {
                if let Ok(k) = kramers_mte(pot, m.noise_intensity) {
                    v["ln_tau_kramers"] = json!(k.ln());
                }
            }
            say!("{v}");
            run.json("summary.json", &v)?;
            0
        }
        Cmd::Dynkin(a) => {
            let (m, p) = diffusion(&a.m.model, &s.params)?;
            run.model_params(&a.m.model, &p);
            let pot = m.potential.as_ref();
            let width = pot.map(|p| p.x_max - p.x_min);
            let left = a
                .left
                .or_else(|| pot.zip(width).map(|(p, w)| p.x_min - 1.5 * w))
                .ok_or_else(|| Error::invalid("left", "required for this model"))?;
            let right = a
                .right
                .or_else(|| default_exit(&m))
                .ok_or_else(|| Error::invalid("right", "required for this model"))?;
            let b = |x, k| match k {
                Kind::Absorbing => Boundary::absorbing(x),
                Kind::Reflecting => Boundary::reflecting(x),
            };
            let sol = dynkin_solve_1d(&m, b(left, a.left_kind), b(right, a.right_kind), a.grid_n)?;
            let x0 = a.x0.or(pot.map(|p| p.x_min)).unwrap_or(0.5 * (left + right));
            let rows: Vec<Vec<f64>> = sol.grid.iter().zip(&sol.tau).map(|(x, t)| vec![*x, *t]).collect();
            run.csv("tau.csv", &["x", "tau"], &rows)?;
            let summary = json!({ "x0": x0, "tau_at_x0": sol.at(x0), "left": left, "right": right, "grid_n": a.grid_n });
            say!("{summary}");
            run.json("summary.json", &summary)?;
            0
        }
        Cmd::Kramers(a) => {
            let (m, p) = diffusion(&a.m.model, &s.params)?;
            run.model_params(&a.m.model, &p);
            let pot = m
                .potential
                .clone()
                .ok_or_else(|| Error::invalid("model", format!("`{}` has no potential", a.m.model)))?;
            let d = m.noise_intensity;
            let w = pot.x_max - pot.x_min;
            let x1 = a.x1.unwrap_or(pot.x_min - 1.5 * w);
            let x2 = a.x2.unwrap_or(pot.x_min + 0.95 * w);
            let big_a = a.a.unwrap_or(pot.x_max + 0.5 * w);
            let k = kramers_mte(&pot, d)?;
            let q = escape_time_quadrature(&pot, d, x1, x2, big_a)?;
            let summary = json!({
                "d": d,
                "barrier": pot.barrier(),
                "tau_kramers": k,
                "ln_tau_kramers": k.ln(),
                "tau_quadrature": q,
                "ln_tau_quadrature": q.ln(),
                "x1": x1, "x2": x2, "a": big_a,
            });
            say!("{summary}");
            run.json("summary.json", &summary)?;
            0
        }
        Cmd::Ssa(a) => {
            let (m, p) = jump(&a.m.model, &s.params)?;
            run.model_params(&a.m.model, &p);
            let x0 = population(&m, &a.x0)?;
            let traj = gillespie(&m, &x0, a.t_max, seed)?;
            let mut header = vec!["t".to_string()];
            header.extend((1..=m.dim).map(|i| format!("X{i}")));
            let rows: Vec<Vec<f64>> = (0..traj.len())
                .map(|k| {
                    let mut r = vec![traj.times[k]];
                    r.extend(traj.state(k).iter().map(|v| *v as f64));
                    r
                })
                .collect();
            let h: Vec<&str> = header.iter().map(String::as_str).collect();
            run.csv("trajectory.csv", &h, &rows)?;
            let summary = json!({
                "model": a.m.model,
                "x0": x0,
                "events": traj.fired.len(),
                "terminal": traj.terminal,
                "end_time": traj.end_time,
                "final_state": traj.state(traj.len() - 1),
            });
            say!("{summary}");
            run.json("summary.json", &summary)?;
            0
        }
        Cmd::MteSsa(a) => {
            let (m, p) = jump(&a.m.model, &s.params)?;
            run.model_params(&a.m.model, &p);
            let x0 = population(&m, &a.x0)?;
            let cfg = EnsembleConfig {
                workers,
                t_max: a.t_max.unwrap_or(f64::INFINITY),
                ..EnsembleConfig::new(a.samples, seed)
            };
            let e = extinction_time_ensemble(&m, &x0, &cfg)?;
            let mut v = serde_json::to_value(&e)?;
            v["x0"] = json!(x0);
            if m.dim == 1 {
                if let Ok(t) = single_step_mte(&m, x0[0]) {
                    v["ln_tau_exact"] = json!(t.ln());
                }
            }
            if let Ok(r) = mte_report(&m) {
                v["ln_tau_wkb"] = json!(r.ln_tau);
            }
            say!("{v}");
            run.json("summary.json", &v)?;
            0
        }
        Cmd::Wkb(a) => {
            let (m, p) = jump(&a.m.model, &s.params)?;
            run.model_params(&a.m.model, &p);
            let r = mte_report(&m)?;
            let path = lambda_opt_single_step(&m)?;
            let (lo, hi) = path.domain;
            let top = m
                .equilibria
                .iter()
                .filter(|e| e.stability == Stability::Stable)
                .map(|e| e.state[0])
                .fold(0.0, f64::max);
            let (a_, b_) = (lo.max(0.0), hi.min(top));
            let n = a.points.max(2);
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|k| {
                    let x = (a_ + (b_ - a_) * k as f64 / (n - 1) as f64).clamp(lo + 1e-12, hi - 1e-12);
                    vec![x, (path.lambda)(x)]
                })
                .collect();
            run.csv("lambda_path.csv", &["x", "lambda_opt"], &rows)?;
            let summary = json!({
                "s_opt": r.s_opt,
                "prefactor": r.prefactor,
                "tau": r.tau,
                "ln_tau": r.ln_tau,
                "system_size": r.system_size,
                "lambda_path_csv": "lambda_path.csv",
            });
            say!("{summary}");
            run.json("summary.json", &summary)?;
            0
        }
        Cmd::Path(pc) => path_command(pc, &s, seed, &mut run)?,
        Cmd::IsSample(a) => {
            let (m, p) = diffusion(&a.m.model, &s.params)?;
            run.model_params(&a.m.model, &p);
            let cfg = SampleConfig {
                workers,
                mode: match a.mode {
                    Mode::Terminal => ExitMode::Terminal,
                    Mode::FirstPassage => ExitMode::FirstPassage,
                },
                ..SampleConfig::new(a.t_f, a.dt, a.samples, seed)
            };
            if let Some(t) = &a.tail {
                let targets = list(t, "tail")?;
                let mam = MamOptions {
                    grid_n: a.grid_n,
                    ..Default::default()
                };
                let tail = soliton_position_tail(&m, &targets, &cfg, &mam)?;
                let rows: Vec<Vec<f64>> = tail.iter().map(|p| vec![p.xi_f, p.p_hat, p.se]).collect();
                run.csv("tail.csv", &["xi_f", "p_hat", "se"], &rows)?;
                run.json("tail.json", &tail)?;
                say!("{}", serde_json::to_string(&tail)?);
                0
            } else {
                let x0 = start(&m, &a.x0)?;
                let hi = m.potential.as_ref().map(|p| p.x_max);
                let dom = domain(&m, &a.domain, hi)?;
                let bias = match &a.bias_path {
                    Some(f) => BiasSchedule::from_path(&read_path_csv(f)?, &m)?,
                    None => BiasSchedule::zero(m.noise_dim),
                };
                let e = is_exit_probability(&m, &x0, &dom, &bias, &cfg)?;
                let v = estimate_json(&e);
                say!("{v}");
                run.json("estimate.json", &v)?;
                0
            }
        }
        Cmd::Figure(a) => {
            if !FIGURES.contains(&a.name.as_str()) {
                return Err(Error::invalid("figure", format!("unknown figure `{}`; one of {}", a.name, FIGURES.join(", "))));
            }
            let opts = FigureOptions {
                seed,
                workers,
                params: s.params.clone(),
                vary: a.vary.clone(),
                values: a.values.as_deref().map(|v| list(v, "values")).transpose()?,
                samples: a
                    .samples
                    .as_deref()
                    .map(|v| {
                        v.split(',')
                            .map(|t| t.trim().parse::<usize>().map_err(|_| Error::invalid("samples", format!("`{t}` is not a count"))))
                            .collect::<Result<Vec<usize>>>()
                    })
                    .transpose()?,
                dt: a.dt,
                grid_n: a.grid_n,
                t_f: a.t_f,
            };
            for (k, v) in &s.params {
                run.manifest.params.insert(format!("params.{k}"), json!(v));
            }
            let f = figure(&a.name, &opts)?;
            for (stem, t) in &f.tables {
                let h: Vec<&str> = t.header.iter().map(String::as_str).collect();
                run.csv(&format!("{stem}.csv"), &h, &t.rows)?;
            }
            let summary = Value::Object(f.summary.clone());
            say!("{summary}");
            run.json(&format!("{}.json", f.name), &summary)?;
            0
        }
    };
    run.finish()?;
    Ok(code)
}

fn estimate_json(e: &ISEstimate) -> Value {
    let mut v = serde_json::to_value(e).expect("plain struct");
    v["log10_p_hat"] = json!(e.log10_p_hat());
    v
}

fn path_command(pc: PathCmd, s: &Settings, seed: u64, run: &mut Run) -> Result<i32> {
    match pc {
        PathCmd::Mam(a) => {
            let (m, p) = diffusion(&a.m.model, &s.params)?;
            run.model_params(&a.m.model, &p);
            let (from, to) = endpoints(&m, &a.ends)?;
            let fc = match &a.free {
                None => FinalCondition::Fixed,
                Some(f) => {
                    let mut free = vec![false; m.dim];
                    for t in f.split(',') {
                        let i: usize = t
                            .trim()
                            .parse()
                            .ok()
                            .filter(|i| *i < m.dim)
                            .ok_or_else(|| Error::invalid("free", format!("`{t}` is not a coordinate index below {}", m.dim)))?;
                        free[i] = true;
                    }
                    FinalCondition::Free(free)
                }
            };
            let opts = MamOptions {
                grid_n: a.grid_n,
                tol: a.tol,
                ..Default::default()
            };
            let r = mam_relax(&m, &from, &to, &fc, a.t_f, &opts)?;
            write_path_report(run, &r, &from, &to, None)
        }
        PathCmd::Gmam(a) => {
            let (m, p) = diffusion(&a.m.model, &s.params)?;
            run.model_params(&a.m.model, &p);
            let (from, to) = endpoints(&m, &a.ends)?;
            let opts = GmamOptions {
                grid_n: a.grid_n,
                ..Default::default()
            };
            if a.starts > 1 {
                let (r, all) = gmam_multistart(&m, &from, &to, &opts, a.starts, seed)?;
                write_path_report(run, &r, &from, &to, Some(all))
            } else {
                let r = gmam(&m, &from, &to, &opts)?;
                write_path_report(run, &r, &from, &to, None)
            }
        }
        PathCmd::Quasipotential(a) => {
            let (m, p) = diffusion(&a.m.model, &s.params)?;
            run.model_params(&a.m.model, &p);
            let (from, to) = endpoints(&m, &a.ends)?;
            let r = quasipotential(&m, &from, &to, a.grid_n)?;
            write_path_report(run, &r, &from, &to, None)
        }
        PathCmd::Sweep(a) => {
            let (m, p) = diffusion(&a.m.model, &s.params)?;
            run.model_params(&a.m.model, &p);
            let (from, to) = endpoints(&m, &a.ends)?;
            let t_fs = list(&a.t_f, "t_f")?;
            let opts = MamOptions {
                grid_n: a.grid_n,
                ..Default::default()
            };
            let r = finite_time_action_sweep(&m, &from, &to, &t_fs, &opts)?;
            let rows: Vec<Vec<f64>> = r.points.iter().map(|q| vec![q.t_f, q.action, q.converged as u8 as f64]).collect();
            run.csv("sweep.csv", &["t_f", "action", "converged"], &rows)?;
            say!("{}", serde_json::to_string(&r)?);
            run.json("report.json", &r)?;
            Ok(not_converged(r.all_converged, "sweep"))
        }
        PathCmd::Iamm(a) => {
            let model = builtin_model(&a.model, &s.params)?;
            let opts = IammOptions {
                grid_n: a.grid_n,
                t_eps: a.t_eps,
                ..Default::default()
            };
            let lam = |spec: &Option<String>, d: usize, field: &str| -> Result<Option<Vec<f64>>> {
                spec.as_deref()
                    .map(|s| {
                        let v = list(s, field)?;
                        if v.len() != d {
                            return Err(Error::invalid(field, format!("expected {d} components")));
                        }
                        Ok(v)
                    })
                    .transpose()
            };
            match model {
                Model::Diffusion(m) => {
                    run.model_params(&a.model, &m.params.clone());
                    let (from, to) = endpoints(&m, &a.ends)?;
                    let lf = lam(&a.from_lambda, m.dim, "from_lambda")?.unwrap_or(vec![0.0; m.dim]);
                    let lt = lam(&a.to_lambda, m.dim, "to_lambda")?.unwrap_or(vec![0.0; m.dim]);
                    let ham = DiffusionHamiltonian::new(&m);
                    let r = iamm(&ham, &PhasePoint::new(from.clone(), lf), &PhasePoint::new(to.clone(), lt), &opts)?;
                    write_path_report(run, &r, &from, &to, None)
                }
                Model::Jump(m) => {
                    run.model_params(&a.model, &m.params.clone());
                    let (a_pt, b_pt) = jump_endpoints(&m, &a.ends)?;
                    let lf = lam(&a.from_lambda, m.dim, "from_lambda")?.unwrap_or(a_pt.lambda.clone());
                    let lt = lam(&a.to_lambda, m.dim, "to_lambda")?.unwrap_or(b_pt.lambda.clone());
                    let ham = build_hamiltonian(&m);
                    let from = PhasePoint::new(a_pt.x, lf);
                    let to = PhasePoint::new(b_pt.x, lt);
                    let r = iamm(&ham, &from, &to, &opts)?;
                    write_path_report(run, &r, &from.x, &to.x, None)
                }
            }
        }
    }
}

/// Stable interior state to the threshold when there is one, otherwise to
/// the fluctuational extinct state `(0, λ_opt(0))`.
fn jump_endpoints(m: &JumpModel, e: &Endpoints) -> Result<(PhasePoint, PhasePoint)> {
    let pick = |spec: &Option<String>, field: &str| -> Result<Option<Vec<f64>>> {
        spec.as_deref().map(|s| point(s, &m.equilibria, m.dim, field)).transpose()
    };
    let from = match pick(&e.from, "from")? {
        Some(x) => x,
        None => default_population(m)?.iter().map(|n| *n as f64 / m.system_size).collect::<Vec<f64>>(),
    };
    // use the exact equilibrium rather than the rounded population
    let from = m
        .equilibria
        .iter()
        .map(|q| &q.state)
        .find(|s| s.iter().zip(&from).all(|(a, b)| (a - b).abs() * m.system_size <= 1.0))
        .cloned()
        .unwrap_or(from);
    let threshold = m
        .equilibria
        .iter()
        .find(|q| q.stability == Stability::Unstable && q.state.iter().all(|v| *v > 0.0))
        .map(|q| q.state.clone());
    let to = match (pick(&e.to, "to")?, threshold) {
        (Some(x), _) => PhasePoint::rest(x),
        (None, Some(t)) => PhasePoint::rest(t),
        (None, None) => {
            let l = lambda_opt_single_step(m)?;
            PhasePoint::new(vec![0.0], vec![(l.lambda)(0.0)])
        }
    };
    Ok((PhasePoint::rest(from), to))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn argv(s: &str) -> Vec<OsString> {
        std::iter::once("rarepath").chain(s.split_whitespace()).map(OsString::from).collect()
    }

    #[test]
    fn model_flags_become_params() {
        let flags = long_flags(&command());
        let out = rewrite_param_flags(argv("wkb --model sis --r0 1.5 --k=100 --seed 3"), &flags);
        let s: Vec<String> = out.iter().map(|a| a.to_string_lossy().into_owned()).collect();
        assert_eq!(s, ["rarepath", "wkb", "--model", "sis", "--param", "r0=1.5", "--param", "k=100", "--seed", "3"]);
    }

    #[test]
    fn points_by_label_or_list() {
        let eqs = vec![Equilibrium::new("stable", vec![-0.5], Stability::Stable)];
        assert_eq!(point("stable", &eqs, 1, "x0").unwrap(), vec![-0.5]);
        assert_eq!(point("-0.25", &eqs, 1, "x0").unwrap(), vec![-0.25]);
        assert!(point("1,2", &eqs, 1, "x0").is_err());
        assert!(point("nowhere", &eqs, 1, "x0").unwrap_err().to_string().contains("stable"));
    }

    #[test]
    fn lists_accept_infinities() {
        assert_eq!(list("-inf, 1", "hi").unwrap(), vec![f64::NEG_INFINITY, 1.0]);
        assert!(list("1,x", "hi").unwrap_err().to_string().contains("`hi`"));
    }

    #[test]
    fn help_exits_zero_and_bad_flags_two() {
        assert_eq!(run(argv("--help")), 0);
        assert_eq!(run(argv("kramers --no-such-flag")), 2);
        assert_eq!(run(argv("bogus")), 2);
    }

    #[test]
    fn missing_required_parameter_exits_two() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().to_string_lossy().into_owned();
        assert_eq!(run(argv(&format!("wkb --model sis --k 100 --out {out}"))), 2);
        let e = builtin_model("sis", &[("k".to_string(), 100.0)].into()).unwrap_err();
        assert!(e.to_string().contains("`r0`"));
    }
}
