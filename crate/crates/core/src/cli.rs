//! Command-line front end: argument parsing, subcommand dispatch and the
//! CSV/JSON writers behind them.
//!
//! Every subcommand writes into the output directory and finishes with a
//! `manifest.json` holding the resolved configuration. Numbers in CSV files
//! carry 12 significant digits (`tensor.csv` carries 17 so it reads back
//! exactly), which keeps repeated runs byte-identical.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::array::transmit_steering;
use crate::config::{parse_real_list, parse_snr_list, Overrides, RunConfig};
use crate::doa::{angle_grid, DoaEstimate};
use crate::error::{Error, Result};
use crate::experiments::{
    decompose_and_estimate, draw_trial, dump_single_shot, run_resolution_sweep, run_rmse_sweep,
    trial_rng, AlsSummary, TargetRecord, TrialFailure, PATTERN_STEP_DEG,
};
use crate::tensor::Tensor3;
use crate::Complex64;

#[derive(Debug, Parser)]
#[command(
    name = "tbdoa",
    version,
    about = "Search-free DOA estimation for transmit-beamspace MIMO radar"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub opts: CommonArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Simulate one CPI and write it to tensor.csv.
    Simulate,
    /// Decompose a tensor file and estimate its target angles.
    Estimate,
    /// RMSE versus SNR over the configured grid.
    RmseSweep,
    /// Probability of resolving two targets versus SNR.
    ResolutionSweep,
    /// One trial: all polynomial roots, blocking beampatterns and estimates.
    SingleShot,
    /// Transmit beampattern of the beamspace matrix.
    Beampattern,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Estimate => "estimate",
            Command::RmseSweep => "rmse-sweep",
            Command::ResolutionSweep => "resolution-sweep",
            Command::SingleShot => "single-shot",
            Command::Beampattern => "beampattern",
        }
    }
}

/// Comma-separated list taken as one argument value.
type List = Vec<f64>;

fn snr_arg(s: &str) -> std::result::Result<f64, String> {
    match parse_snr_list(s) {
        Ok(v) if v.len() == 1 => Ok(v[0]),
        _ => Err(format!("expected one SNR in dB or inf, got {s:?}")),
    }
}

fn snr_list_arg(s: &str) -> std::result::Result<List, String> {
    parse_snr_list(s).map_err(|e| e.to_string())
}

fn real_list_arg(s: &str) -> std::result::Result<List, String> {
    parse_real_list(s).map_err(|e| e.to_string())
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Config file (key = value with [section] headers).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Master seed of the Monte-Carlo streams.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// SNR in dB of single-CPI subcommands (`inf` for noiseless).
    #[arg(long, global = true, value_name = "DB", allow_hyphen_values = true, value_parser = snr_arg)]
    pub snr: Option<f64>,
    /// Comma-separated SNR grid of the sweeps.
    #[arg(long, global = true, value_name = "DB,..", allow_hyphen_values = true, value_parser = snr_list_arg)]
    pub snr_grid: Option<List>,
    /// Monte-Carlo trials per SNR.
    #[arg(long, global = true, value_name = "N")]
    pub trials: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Number of transmit beams K.
    #[arg(long, global = true, value_name = "N")]
    pub k: Option<usize>,
    /// Comma-separated target angles in degrees.
    #[arg(long, global = true, value_name = "θ1,θ2", allow_hyphen_values = true, value_parser = real_list_arg)]
    pub targets: Option<List>,
    /// Comma-separated normalized Doppler shifts, one per target.
    #[arg(long, global = true, value_name = "f1,f2", allow_hyphen_values = true, value_parser = real_list_arg)]
    pub dopplers: Option<List>,
    /// Tensor file read by `estimate`.
    #[arg(long, global = true, value_name = "PATH")]
    pub tensor: Option<PathBuf>,
    /// Print the resolved configuration and exit.
    #[arg(long, global = true)]
    pub print_config: bool,
}

impl CommonArgs {
    pub fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            snr_db: self.snr,
            snr_grid_db: self.snr_grid.clone(),
            trials: self.trials,
            out_dir: self.out.clone(),
            beams: self.k,
            targets: self.targets.clone(),
            dopplers: self.dopplers.clone(),
            tensor_path: self.tensor.clone(),
        }
    }
}

/// Fixed-precision text with 12 significant digits.
pub fn fmt_num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.11e}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// Lossless text for tensor entries.
fn fmt_exact(x: f64) -> String {
    format!("{x:.16e}")
}

/// Files a subcommand wrote plus the lines it prints.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub stdout: Vec<String>,
}

struct Writer<'a> {
    dir: &'a Path,
    outcome: Outcome,
}

impl<'a> Writer<'a> {
    fn new(dir: &'a Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
        Ok(Self {
            dir,
            outcome: Outcome::default(),
        })
    }

    fn write(&mut self, name: &str, text: &str) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        self.outcome.files.push(path);
        Ok(())
    }

    fn csv(
        &mut self,
        name: &str,
        header: &str,
        rows: impl IntoIterator<Item = String>,
    ) -> Result<()> {
        let mut text = String::from(header);
        text.push('\n');
        for row in rows {
            text.push_str(&row);
            text.push('\n');
        }
        self.write(name, &text)
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text =
            serde_json::to_string_pretty(value).map_err(|e| Error::Io(format!("{name}: {e}")))?;
        text.push('\n');
        self.write(name, &text)
    }

    fn print(&mut self, line: String) {
        self.outcome.stdout.push(line);
    }
}

#[derive(Serialize)]
struct Seeds {
    master_seed: u64,
    geometry_seed: u64,
    /// How per-trial streams derive from the master seed.
    trial_streams: &'static str,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    config: &'a RunConfig,
    seeds: Seeds,
    outputs: Vec<String>,
}

fn manifest(w: &mut Writer<'_>, cmd: Command, cfg: &RunConfig) -> Result<()> {
    let mut outputs: Vec<String> = w
        .outcome
        .files
        .iter()
        .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .collect();
    outputs.push("manifest.json".into());
    let m = Manifest {
        tool: "tbdoa",
        version: env!("CARGO_PKG_VERSION"),
        command: cmd.name(),
        config: cfg,
        seeds: Seeds {
            master_seed: cfg.seed,
            geometry_seed: cfg.system.geometry_seed,
            trial_streams: "ChaCha8(seed = master_seed, stream = snr_index << 32 | trial_index)",
        },
        outputs,
    };
    w.json("manifest.json", &m)
}

#[derive(Serialize)]
struct EstimatesFile {
    #[serde(with = "crate::config::snr_value")]
    snr_db: f64,
    truth_deg: Vec<f64>,
    als: AlsSummary,
    estimates: Vec<TargetRecord>,
}

#[derive(Serialize)]
struct SceneTarget {
    theta_deg: f64,
    coefficient_re: f64,
    coefficient_im: f64,
    doppler: f64,
}

#[derive(Serialize)]
struct SceneFile {
    #[serde(with = "crate::config::snr_value")]
    snr_db: f64,
    dims: [usize; 3],
    targets: Vec<SceneTarget>,
}

fn roots_rows(records: &[TargetRecord]) -> Vec<String> {
    records
        .iter()
        .flat_map(|t| {
            t.roots.iter().map(move |r| {
                format!(
                    "{},{},{},{},{}",
                    t.target,
                    fmt_num(r.re),
                    fmt_num(r.im),
                    fmt_num(r.abs),
                    u8::from(r.selected)
                )
            })
        })
        .collect()
}

/// Writes a tensor as `k,n,q,re,im` rows, first index fastest.
pub fn write_tensor_csv(t: &Tensor3) -> String {
    let (kd, nd, qd) = t.dims();
    let mut text = String::from("k,n,q,re,im\n");
    for q in 0..qd {
        for n in 0..nd {
            for k in 0..kd {
                let z = t.get(k, n, q);
                text.push_str(&format!(
                    "{k},{n},{q},{},{}\n",
                    fmt_exact(z.re),
                    fmt_exact(z.im)
                ));
            }
        }
    }
    text
}

/// Parses the `k,n,q,re,im` format; every index triple must appear exactly once.
pub fn read_tensor_csv(text: &str) -> Result<Tensor3> {
    let err = |line: usize, msg: &str| Error::Tensor(format!("tensor file line {line}: {msg}"));
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.trim() == "k,n,q,re,im" => {}
        _ => return Err(err(1, "expected header k,n,q,re,im")),
    }
    let mut entries = Vec::new();
    let mut dims = (0usize, 0usize, 0usize);
    for (i, line) in lines {
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 5 {
            return Err(err(i + 1, "expected 5 fields"));
        }
        let idx = |s: &str| s.parse::<usize>().map_err(|_| err(i + 1, "bad index"));
        let val = |s: &str| s.parse::<f64>().map_err(|_| err(i + 1, "bad number"));
        let (k, n, q) = (idx(f[0])?, idx(f[1])?, idx(f[2])?);
        dims = (dims.0.max(k + 1), dims.1.max(n + 1), dims.2.max(q + 1));
        entries.push((k, n, q, Complex64::new(val(f[3])?, val(f[4])?)));
    }
    let total = dims.0 * dims.1 * dims.2;
    if total == 0 || entries.len() != total {
        return Err(Error::Tensor(format!(
            "tensor file has {} entries for dimensions {:?}",
            entries.len(),
            dims
        )));
    }
    let mut data = vec![Complex64::new(0.0, 0.0); total];
    let mut seen = vec![false; total];
    for (k, n, q, z) in entries {
        let at = k + dims.0 * (n + dims.1 * q);
        if std::mem::replace(&mut seen[at], true) {
            return Err(Error::Tensor(format!("duplicate entry ({k},{n},{q})")));
        }
        data[at] = z;
    }
    Tensor3::from_vec(dims, data)
}

fn estimate_lines(w: &mut Writer<'_>, est: &[DoaEstimate]) {
    for (l, e) in est.iter().enumerate() {
        w.print(format!("target {l}: theta_deg = {}", fmt_num(e.theta_deg)));
    }
}

fn simulate(cfg: &RunConfig, w: &mut Writer<'_>) -> Result<()> {
    let system = cfg.system.build()?;
    let draw = draw_trial(
        &system,
        &cfg.scene,
        cfg.snr_db,
        &mut trial_rng(cfg.seed, 0, 0),
    )?;
    w.write("tensor.csv", &write_tensor_csv(&draw.tensor))?;
    let (k, n, q) = draw.tensor.dims();
    w.json(
        "scene.json",
        &SceneFile {
            snr_db: cfg.snr_db,
            dims: [k, n, q],
            targets: draw
                .scene
                .targets()
                .iter()
                .map(|t| SceneTarget {
                    theta_deg: t.theta_deg,
                    coefficient_re: t.coefficient.re,
                    coefficient_im: t.coefficient.im,
                    doppler: t.doppler,
                })
                .collect(),
        },
    )?;
    w.print(format!("wrote {k}x{n}x{q} tensor"));
    Ok(())
}

fn estimate(cfg: &RunConfig, w: &mut Writer<'_>) -> Result<()> {
    let path = cfg.tensor_path.as_ref().ok_or_else(|| {
        Error::Config("estimate needs a tensor file (--tensor or [output] tensor)".into())
    })?;
    let text =
        fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let tensor = read_tensor_csv(&text)?;
    let system = cfg.system.build()?;
    let (k, n, q) = tensor.dims();
    if k != system.beamspace.beams() {
        return Err(Error::Config(format!(
            "tensor has {k} beams but the configuration has K = {}",
            system.beamspace.beams()
        )));
    }
    if n != cfg.system.rx_elements {
        return Err(Error::Config(format!(
            "tensor has {n} receive channels but the configuration has N = {}",
            cfg.system.rx_elements
        )));
    }
    let mut system = system;
    system.pulses = q;
    let (cp, est) = decompose_and_estimate(
        &system,
        &tensor,
        cfg.scene.len(),
        &cfg.als,
        &cfg.doa(),
        cfg.seed,
    )?;
    let est = match est {
        Ok(e) => e,
        Err(TrialFailure::AlsNotConverged) => {
            return Err(Error::Cp(format!(
                "ALS did not converge in {} iterations",
                cfg.als.max_iter
            )))
        }
        Err(TrialFailure::Estimation(e)) => return Err(e),
    };
    let records: Vec<TargetRecord> = est
        .iter()
        .enumerate()
        .map(|(l, e)| TargetRecord::from_estimate(l, e))
        .collect();
    w.csv(
        "roots.csv",
        "target,re,im,abs,selected",
        roots_rows(&records),
    )?;
    w.json(
        "estimates.json",
        &EstimatesFile {
            snr_db: cfg.snr_db,
            truth_deg: cfg.scene.angles_deg.clone(),
            als: AlsSummary::from(&cp),
            estimates: records,
        },
    )?;
    estimate_lines(w, &est);
    Ok(())
}

fn rmse_sweep(cfg: &RunConfig, w: &mut Writer<'_>) -> Result<()> {
    let report = run_rmse_sweep(&cfg.mc())?;
    let rows = report.rows.iter().map(|r| {
        format!(
            "{},{},{},{}",
            fmt_num(r.snr_db),
            fmt_num(r.rmse_deg),
            r.trials,
            r.failures
        )
    });
    w.csv("rmse.csv", "snr_db,rmse_deg,trials,failures", rows)?;
    for r in &report.rows {
        w.print(format!(
            "snr {} dB: rmse {} deg ({} failures)",
            r.snr_db,
            fmt_num(r.rmse_deg),
            r.failures
        ));
    }
    Ok(())
}

fn resolution_sweep(cfg: &RunConfig, w: &mut Writer<'_>) -> Result<()> {
    let report = run_resolution_sweep(&cfg.mc())?;
    let rows = report.rows.iter().map(|r| {
        format!(
            "{},{},{},{}",
            fmt_num(r.snr_db),
            fmt_num(r.prob_resolution),
            r.trials,
            r.failures
        )
    });
    w.csv(
        "resolution.csv",
        "snr_db,prob_resolution,trials,failures",
        rows,
    )?;
    for r in &report.rows {
        w.print(format!(
            "snr {} dB: P(resolved) {} ({} failures)",
            r.snr_db,
            fmt_num(r.prob_resolution),
            r.failures
        ));
    }
    Ok(())
}

fn single_shot(cfg: &RunConfig, w: &mut Writer<'_>) -> Result<()> {
    let rec = dump_single_shot(&cfg.mc(), cfg.snr_db)?;
    w.csv(
        "roots.csv",
        "target,re,im,abs,selected",
        roots_rows(&rec.estimates),
    )?;
    let rows = rec.patterns_db.iter().enumerate().flat_map(|(l, pat)| {
        rec.pattern_grid_deg
            .iter()
            .zip(pat)
            .map(move |(&t, &p)| format!("{l},{},{}", fmt_num(t), fmt_num(p)))
    });
    w.csv("pattern.csv", "target,theta_deg,power_db", rows)?;
    for e in &rec.estimates {
        w.print(format!(
            "target {}: theta_deg = {}",
            e.target,
            fmt_num(e.theta_deg)
        ));
    }
    w.json(
        "estimates.json",
        &EstimatesFile {
            snr_db: rec.snr_db,
            truth_deg: rec.truth_deg,
            als: rec.als,
            estimates: rec.estimates,
        },
    )
}

fn beampattern(cfg: &RunConfig, w: &mut Writer<'_>) -> Result<()> {
    let system = cfg.system.build()?;
    let grid = angle_grid(PATTERN_STEP_DEG);
    let wm = system.beamspace.matrix();
    let power = grid
        .iter()
        .map(|&t| Ok((wm.adjoint() * transmit_steering(&system.geometry, t)?).norm_squared()))
        .collect::<Result<Vec<f64>>>()?;
    let peak = power.iter().cloned().fold(0.0, f64::max);
    let rows = grid.iter().zip(&power).map(|(&t, &p)| {
        format!(
            "{},{}",
            fmt_num(t),
            fmt_num(10.0 * (p / peak).max(1e-30).log10())
        )
    });
    w.csv("beampattern.csv", "theta_deg,power_db", rows)?;
    w.print(format!("{} grid points", grid.len()));
    Ok(())
}

/// Runs one subcommand against a resolved configuration.
pub fn run_subcommand(cmd: Command, cfg: &RunConfig) -> Result<Outcome> {
    cfg.validate()?;
    let mut w = Writer::new(&cfg.out_dir)?;
    match cmd {
        Command::Simulate => simulate(cfg, &mut w)?,
        Command::Estimate => estimate(cfg, &mut w)?,
        Command::RmseSweep => rmse_sweep(cfg, &mut w)?,
        Command::ResolutionSweep => resolution_sweep(cfg, &mut w)?,
        Command::SingleShot => single_shot(cfg, &mut w)?,
        Command::Beampattern => beampattern(cfg, &mut w)?,
    }
    manifest(&mut w, cmd, cfg)?;
    Ok(w.outcome)
}

/// Machine-readable failure report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorRecord {
    pub status: &'static str,
    pub command: &'static str,
    pub module: &'static str,
    pub message: String,
}

impl ErrorRecord {
    pub fn new(cmd: Command, e: &Error) -> Self {
        Self {
            status: "error",
            command: cmd.name(),
            module: e.module(),
            message: e.to_string(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self)
            .unwrap_or_else(|_| format!("{{\"status\":\"error\",\"message\":{:?}}}", self.message))
    }
}

/// Process exit code for an error: 2 for configuration problems, 1 otherwise.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => 2,
        _ => 1,
    }
}

/// Full CLI run: resolves the configuration, dispatches, and on failure
/// writes `error.json` into the output directory when it can.
pub fn run(cli: &Cli) -> std::result::Result<(Option<String>, Outcome), (ErrorRecord, i32)> {
    let fail = |e: Error, out: Option<&Path>| {
        let rec = ErrorRecord::new(cli.command, &e);
        if let Some(dir) = out {
            if fs::create_dir_all(dir).is_ok() {
                let _ = fs::write(dir.join("error.json"), rec.to_json() + "\n");
            }
        }
        (rec, exit_code(&e))
    };
    let cfg = RunConfig::load(cli.opts.config.as_deref(), &cli.opts.overrides())
        .map_err(|e| fail(e, cli.opts.out.as_deref()))?;
    if cli.opts.print_config {
        return Ok((Some(cfg.to_ini_string()), Outcome::default()));
    }
    let outcome = run_subcommand(cli.command, &cfg).map_err(|e| fail(e, Some(&cfg.out_dir)))?;
    Ok((None, outcome))
}
