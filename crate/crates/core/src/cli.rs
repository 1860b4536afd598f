//! Command-line front end: `simulate`, `verify`, `decompose`, `oracle-check`.
//!
//! Every run resolves a JSON-serializable config, writes it back as
//! `config.json`, and prefixes each output file with the tool version, the
//! SHA-256 of the resolved config and the master seed. Output contains no
//! timestamps, so reruns with the same config are byte-identical.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analytic::{
    cox_laplace_closed_form, exp_weighted_invariance_lhs, expected_one_minus_exp, flat_invariance_lhs, gaussian_tail,
    weighted_integral, QuadratureSpec, TestFunction, Transform,
};
use crate::decomposition::{asymptotic_split_check, HybridOptions, HybridSampler, DEFAULT_ALPHA};
use crate::dynamics::{default_epsilon, null_as_infinity, observed_evolution, padding_leak, Scheme, SimulationPlan};
use crate::error::Error;
use crate::pointproc::{intensity_mass, IntensityModel, WindowSpec};
use crate::randomness::SeedSpec;
use crate::verify::{
    concentration_check, default_p_lists, default_test_functions, invariance_suite, tightness_diagnostic, Control,
    InvarianceOptions, TestOutcome, TightnessRow,
};
use crate::fmt_real;

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "COX_INVARIANCE_OUTPUT_DIR";
const DEFAULT_OUTPUT_DIR: &str = "cox-invariance-out";
const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Parser)]
#[command(name = "cox-invariance", version, about = "Invariant Cox processes for drifted Brownian particles")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON config; replaces every other run parameter.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (default: $COX_INVARIANCE_OUTPUT_DIR, else ./cox-invariance-out).
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample and evolve configurations on an observation window.
    Simulate(SimulateArgs),
    /// Run invariance tests, controls and diagnostics.
    Verify(VerifyArgs),
    /// Decompose the evolved Laplace exponent over a t-grid.
    Decompose(DecomposeArgs),
    /// Check the analytic identities against stored oracle values.
    OracleCheck,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    #[arg(long = "Z", default_value_t = 1.0)]
    pub z: f64,
    #[arg(long = "Y", default_value_t = 1.0)]
    pub y: f64,
    /// Drift; also the exponent of the intensity `Z e^{−2λx} + Y`.
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub lambda: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub t: f64,
    #[arg(long, num_args = 2, allow_negative_numbers = true, default_values_t = [-3.0, 3.0])]
    pub window: Vec<f64>,
    #[arg(long, default_value_t = 100)]
    pub replicates: u64,
    #[arg(long, default_value_t = 1e-6)]
    pub epsilon: f64,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Times to test (repeatable).
    #[arg(long = "t", num_args = 1.., default_values_t = [0.5, 1.0, 2.0])]
    pub t_grid: Vec<f64>,
    #[arg(long, num_args = 2, allow_negative_numbers = true, default_values_t = [-3.0, 3.0])]
    pub window: Vec<f64>,
    #[arg(long, default_value_t = 10_000)]
    pub replicates: u64,
    #[arg(long, default_value_t = 0.01)]
    pub significance: f64,
    /// Non-invariant control input (repeatable): wrong-exponent, quarter-exponent.
    #[arg(long = "control", value_parser = parse_control)]
    pub controls: Vec<Control>,
    /// Also run the Bernoulli concentration check with this many trials.
    #[arg(long)]
    pub concentration_trials: Option<u64>,
    /// Also tabulate tightness of Z_t and Y_t.
    #[arg(long)]
    pub tightness: bool,
}

#[derive(Debug, Clone, Args)]
pub struct DecomposeArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long = "t", num_args = 1.., default_values_t = [100.0, 1_000.0, 10_000.0])]
    pub t_grid: Vec<f64>,
    #[arg(long, default_value_t = 1_000)]
    pub replicates: u64,
    /// Points at which to tabulate the M_t density.
    #[arg(long = "mt-point", num_args = 1.., allow_negative_numbers = true)]
    pub mt_points: Vec<f64>,
}

fn parse_control(s: &str) -> Result<Control, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|_| {
        format!("unknown control {s:?} (expected wrong-exponent or quarter-exponent)")
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub model: IntensityModel,
    /// Drift; defaults to the model exponent.
    #[serde(default)]
    pub drift: Option<f64>,
    pub t: f64,
    pub window: [f64; 2],
    pub replicates: u64,
    #[serde(default = "default_epsilon", deserialize_with = "null_as_infinity")]
    pub epsilon: f64,
    pub seed: u64,
    #[serde(default)]
    pub scheme: Scheme,
    /// Derived by the run when absent.
    #[serde(default)]
    pub padded_window: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConcentrationConfig {
    pub trials: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TightnessConfig {
    pub t_grid: Vec<f64>,
    pub k_grid: Vec<f64>,
    pub replicates: u64,
}

impl Default for TightnessConfig {
    fn default() -> Self {
        TightnessConfig {
            t_grid: vec![100.0, 1_000.0, 10_000.0],
            k_grid: vec![5.0, 10.0, 20.0, 40.0, 80.0],
            replicates: 1_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    pub model: IntensityModel,
    #[serde(default)]
    pub drift: Option<f64>,
    pub window: [f64; 2],
    pub t_grid: Vec<f64>,
    pub replicates: u64,
    pub significance: f64,
    #[serde(default = "default_bins")]
    pub bins: usize,
    #[serde(default = "default_epsilon", deserialize_with = "null_as_infinity")]
    pub epsilon: f64,
    pub seed: u64,
    #[serde(default = "default_test_functions")]
    pub test_functions: Vec<TestFunction>,
    #[serde(default)]
    pub controls: Vec<Control>,
    #[serde(default)]
    pub concentration: Option<ConcentrationConfig>,
    #[serde(default)]
    pub tightness: Option<TightnessConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

fn default_bins() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecomposeConfig {
    pub model: IntensityModel,
    #[serde(default)]
    pub drift: Option<f64>,
    pub t_grid: Vec<f64>,
    pub replicates: u64,
    pub seed: u64,
    #[serde(default = "default_decompose_function")]
    pub test_function: TestFunction,
    #[serde(default)]
    pub mt_points: Vec<f64>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

fn default_decompose_function() -> TestFunction {
    TestFunction::Step {
        lo: 0.0,
        hi: 1.0,
        height: std::f64::consts::LN_2,
    }
}

fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}

fn model_from(a: &ModelArgs) -> IntensityModel {
    IntensityModel {
        z: a.z,
        y: a.y,
        lambda: a.lambda,
        mixing: None,
    }
}

fn pair(v: &[f64]) -> [f64; 2] {
    [v[0], v[1]]
}

impl From<SimulateArgs> for SimulateConfig {
    fn from(a: SimulateArgs) -> Self {
        SimulateConfig {
            model: model_from(&a.model),
            drift: None,
            t: a.t,
            window: pair(&a.window),
            replicates: a.replicates,
            epsilon: a.epsilon,
            seed: a.model.seed,
            scheme: Scheme::Arrivals,
            padded_window: None,
            output_dir: None,
        }
    }
}

impl From<VerifyArgs> for VerifyConfig {
    fn from(a: VerifyArgs) -> Self {
        VerifyConfig {
            model: model_from(&a.model),
            drift: None,
            window: pair(&a.window),
            t_grid: a.t_grid,
            replicates: a.replicates,
            significance: a.significance,
            bins: default_bins(),
            epsilon: default_epsilon(),
            seed: a.model.seed,
            test_functions: default_test_functions(),
            controls: a.controls,
            concentration: a.concentration_trials.map(|trials| ConcentrationConfig { trials }),
            tightness: a.tightness.then(TightnessConfig::default),
            output_dir: None,
        }
    }
}

impl From<DecomposeArgs> for DecomposeConfig {
    fn from(a: DecomposeArgs) -> Self {
        DecomposeConfig {
            model: model_from(&a.model),
            drift: None,
            t_grid: a.t_grid,
            replicates: a.replicates,
            seed: a.model.seed,
            test_function: default_decompose_function(),
            mt_points: a.mt_points,
            alpha: DEFAULT_ALPHA,
            output_dir: None,
        }
    }
}

/// Failure of a command, mapped to its exit code.
#[derive(Debug)]
pub enum CliError {
    /// Exit 2.
    Config(String),
    /// Exit 3.
    Padding(String),
    /// Exit 1.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Padding(_) => 3,
            CliError::Runtime(_) => 1,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Padding(m) | CliError::Runtime(m) => m,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Padding { .. } => CliError::Padding(e.to_string()),
            Error::InvalidParameter(_)
            | Error::ZeroDrift
            | Error::NegativeDrift(_)
            | Error::DegenerateRegions { .. }
            | Error::WindowNotContained { .. }
            | Error::SupportViolation { .. }
            | Error::Parse(_) => CliError::Config(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

/// Reads a JSON config; syntax and schema errors report line and column.
pub fn load_config<C: for<'de> Deserialize<'de>>(path: &Path) -> Result<C, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    parse_config(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub fn parse_config<C: for<'de> Deserialize<'de>>(text: &str) -> Result<C, String> {
    serde_json::from_str(text).map_err(|e| e.to_string())
}

/// Hex SHA-256 of the compact JSON of `config` without its output directory.
pub fn config_hash<C: Serialize>(config: &C) -> String {
    let mut v = serde_json::to_value(config).expect("config serializes");
    if let Some(map) = v.as_object_mut() {
        map.remove("output_dir");
    }
    let digest = Sha256::digest(v.to_string().as_bytes());
    digest.iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Where a run writes its files.
struct Output {
    dir: PathBuf,
    header: String,
}

impl Output {
    fn new<C: Serialize>(dir: PathBuf, config: &C, seed: u64) -> Result<Self, CliError> {
        fs::create_dir_all(&dir).map_err(|e| io_error(&dir, e))?;
        let header = format!(
            "# cox-invariance {VERSION}\n# config_sha256 {}\n# seed {seed}\n",
            config_hash(config)
        );
        Ok(Output { dir, header })
    }

    fn write(&self, name: &str, body: &str) -> Result<PathBuf, CliError> {
        let path = self.dir.join(name);
        fs::write(&path, format!("{}{body}", self.header)).map_err(|e| io_error(&path, e))?;
        Ok(path)
    }

    fn write_config<C: Serialize>(&self, config: &C, seed: u64) -> Result<PathBuf, CliError> {
        let mut v = serde_json::to_value(config).expect("config serializes");
        if let Some(map) = v.as_object_mut() {
            map.remove("output_dir");
        }
        let doc = serde_json::json!({
            "tool": "cox-invariance",
            "version": VERSION,
            "config_sha256": config_hash(config),
            "seed": seed,
            "config": v,
        });
        let path = self.dir.join("config.json");
        let text = serde_json::to_string_pretty(&doc).expect("config serializes") + "\n";
        fs::write(&path, text).map_err(|e| io_error(&path, e))?;
        Ok(path)
    }
}

/// Accepts either a bare config or the `config.json` a run writes.
fn unwrap_echo(text: &str) -> String {
    match serde_json::from_str::<serde_json::Value>(text) {
        Ok(serde_json::Value::Object(map)) if map.contains_key("config_sha256") && map.contains_key("config") => {
            map["config"].to_string()
        }
        _ => text.to_string(),
    }
}

fn read_config<C: for<'de> Deserialize<'de>>(path: &Path) -> Result<C, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    parse_config(&unwrap_echo(&text)).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn output_dir(flag: Option<PathBuf>, config: Option<PathBuf>) -> PathBuf {
    config
        .or(flag)
        .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR))
}

fn window(w: [f64; 2]) -> Result<WindowSpec, CliError> {
    Ok(WindowSpec::new(w[0], w[1])?)
}

/// Resolves the padded window and returns the plan it certifies.
pub fn resolve_simulation(config: &mut SimulateConfig) -> Result<SimulationPlan, CliError> {
    config.model.validate()?;
    if config.replicates == 0 {
        return Err(CliError::Config("replicates must be ≥ 1".into()));
    }
    let drift = config.drift.unwrap_or(config.model.lambda);
    let mut plan = SimulationPlan::new(window(config.window)?, config.t, drift, config.epsilon, config.seed)?
        .with_scheme(config.scheme);
    plan = match config.padded_window {
        Some(p) => {
            let pad = window(p)?;
            plan.padded_window = Some(pad);
            plan.validate()?;
            if plan.t > 0.0 {
                let envelope = config.model.upper_envelope();
                let leak = padding_leak(&envelope, &plan.observation_window, &pad, plan.t, drift)?;
                if leak > plan.epsilon {
                    return Err(Error::Padding {
                        leak,
                        epsilon: plan.epsilon,
                        radius: 0.5 * pad.width(),
                    }
                    .into());
                }
            }
            plan
        }
        None => plan.with_padding(&config.model)?,
    };
    let pad = plan.padded_window.expect("padding resolved");
    config.padded_window = Some([pad.lo, pad.hi]);
    Ok(plan)
}

pub fn cmd_simulate(mut config: SimulateConfig, dir: PathBuf) -> Result<String, CliError> {
    let plan = resolve_simulation(&mut config)?;
    let model = &config.model;
    let runs = (0..config.replicates)
        .into_par_iter()
        .map(|i| observed_evolution(model, &plan, plan.seed_spec().with_stream(i)))
        .collect::<crate::Result<Vec<_>>>()?;

    let out = Output::new(dir, &config, config.seed)?;
    out.write_config(&config, config.seed)?;
    let mut atoms = String::from("replicate,stage,x\n");
    let mut summary = String::new();
    let zero = model.z == 0.0 && model.y == 0.0 && model.mixing.is_none();
    if zero {
        summary.push_str("# note zero intensity: every configuration is empty\n");
    }
    summary.push_str("replicate,Z,Y,initial_count,evolved_count,expected_count,padded_lo,padded_hi\n");
    let (mut n0, mut n1) = (0u64, 0u64);
    for (i, r) in runs.iter().enumerate() {
        for (stage, c) in [("initial", &r.initial), ("evolved", &r.evolved)] {
            for x in c.atoms() {
                let _ = writeln!(atoms, "{i},{stage},{}", fmt_real(*x));
            }
        }
        let expected = intensity_mass(&model.resolved(r.mixing.0, r.mixing.1), &plan.observation_window);
        n0 += r.initial.len() as u64;
        n1 += r.evolved.len() as u64;
        let _ = writeln!(
            summary,
            "{i},{},{},{},{},{},{},{}",
            fmt_real(r.mixing.0),
            fmt_real(r.mixing.1),
            r.initial.len(),
            r.evolved.len(),
            fmt_real(expected),
            fmt_real(r.padded_window.lo),
            fmt_real(r.padded_window.hi)
        );
    }
    out.write("atoms.csv", &atoms)?;
    out.write("summary.csv", &summary)?;
    let n = config.replicates as f64;
    Ok(format!(
        "simulate: {} replicates on [{}, {}], padded [{}, {}]; mean count {:.4} initial, {:.4} evolved{}; output in {}",
        config.replicates,
        plan.observation_window.lo,
        plan.observation_window.hi,
        plan.padded_window.unwrap().lo,
        plan.padded_window.unwrap().hi,
        n0 as f64 / n,
        n1 as f64 / n,
        if zero { " (zero intensity)" } else { "" },
        out.dir.display()
    ))
}

/// Outcomes of a verify run and whether every non-control test passed.
pub struct VerifyReport {
    pub outcomes: Vec<TestOutcome>,
    pub tightness: Vec<TightnessRow>,
    pub all_pass: bool,
}

pub fn run_verify(config: &VerifyConfig) -> Result<VerifyReport, CliError> {
    config.model.validate()?;
    if config.t_grid.is_empty() {
        return Err(CliError::Config("t_grid must not be empty".into()));
    }
    if !(config.significance > 0.0 && config.significance < 1.0) {
        return Err(CliError::Config(format!("significance {} not in (0, 1)", config.significance)));
    }
    let drift = config.drift.unwrap_or(config.model.lambda);
    if drift != config.model.lambda {
        return Err(CliError::Config(format!(
            "verify tests the fixed point: drift {drift} must equal the model exponent {}",
            config.model.lambda
        )));
    }
    let seed = SeedSpec::new(config.seed, 0);
    let options = InvarianceOptions {
        replicates: config.replicates,
        significance: config.significance,
        bins: config.bins,
        control: false,
    };
    let mut outcomes = invariance_suite(
        &config.model,
        window(config.window)?,
        &config.t_grid,
        &config.test_functions,
        options,
        &config.controls,
        config.epsilon,
        seed,
    )?;
    if let Some(c) = &config.concentration {
        for (i, p) in default_p_lists().iter().enumerate() {
            outcomes.push(concentration_check(p, c.trials, seed.derive(300 + i as u64))?);
        }
    }
    let tightness = match &config.tightness {
        Some(tc) => tightness_diagnostic(&config.model, drift, &tc.t_grid, tc.replicates, &tc.k_grid, seed.derive(400))?,
        None => Vec::new(),
    };
    let all_pass = outcomes.iter().all(|o| o.control || o.pass);
    Ok(VerifyReport {
        outcomes,
        tightness,
        all_pass,
    })
}

pub fn cmd_verify(config: VerifyConfig, dir: PathBuf) -> Result<(String, bool), CliError> {
    let report = run_verify(&config)?;
    let out = Output::new(dir, &config, config.seed)?;
    out.write_config(&config, config.seed)?;
    let mut csv = format!("{}\n", TestOutcome::csv_header());
    for o in &report.outcomes {
        csv.push_str(&o.csv_row());
        csv.push('\n');
    }
    out.write("outcomes.csv", &csv)?;
    if !report.tightness.is_empty() {
        let mut t = String::from("t,K,P_Z_ge_K,P_Y_ge_K,bound,replicates\n");
        for r in &report.tightness {
            let _ = writeln!(
                t,
                "{},{},{},{},{},{}",
                fmt_real(r.t),
                fmt_real(r.k),
                fmt_real(r.p_z),
                fmt_real(r.p_y),
                fmt_real(r.bound),
                r.replicates
            );
        }
        out.write("tightness.csv", &t)?;
    }
    let mut text = String::new();
    for o in &report.outcomes {
        let _ = writeln!(
            text,
            "{:<5} {:<40} {:<13} stat {:>12.5e}  p {:>10.4e}  level {:.3e}{}",
            if o.pass { "PASS" } else { "FAIL" },
            o.name,
            o.kind.label(),
            o.statistic,
            o.p_value,
            o.significance,
            if o.control { "  (control)" } else { "" }
        );
    }
    for r in &report.tightness {
        let _ = writeln!(
            text,
            "tightness t={} K={}: P(Z_t>=K) {:.4}, P(Y_t>=K) {:.4}, bound {:.4}",
            r.t, r.k, r.p_z, r.p_y, r.bound
        );
    }
    let failed = report.outcomes.iter().filter(|o| !o.control && !o.pass).count();
    let _ = writeln!(
        text,
        "{} tests, {failed} non-control failures: {}",
        report.outcomes.len(),
        if report.all_pass { "PASS" } else { "FAIL" }
    );
    out.write("summary.txt", &text)?;
    Ok((text, report.all_pass))
}

/// Per-`t` aggregates of a decompose run.
#[derive(Debug, Clone, PartialEq)]
pub struct DecomposeSummary {
    pub t: f64,
    pub median_ratio_z: f64,
    pub median_ratio_y: f64,
    pub mean_e_part: f64,
    pub mean_lcr: f64,
    pub max_additivity: f64,
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn cmd_decompose(config: DecomposeConfig, dir: PathBuf) -> Result<(String, Vec<DecomposeSummary>), CliError> {
    config.model.validate()?;
    if config.replicates < 2 {
        return Err(CliError::Config("replicates must be ≥ 2".into()));
    }
    let drift = config.drift.unwrap_or(config.model.lambda);
    let q = QuadratureSpec::default();
    let options = HybridOptions {
        alpha: config.alpha,
        ..HybridOptions::default()
    };
    let seed = SeedSpec::new(config.seed, 0);
    let mut long = String::from("replicate,t,field,value\n");
    let mut mt_csv = String::from("t,y,mean,std_error\n");
    let mut summary_csv =
        String::from("t,median_ratio_z,median_ratio_y,mean_E_part,mean_LCR_plus,max_additivity,dense_sd_bound\n");
    let mut summaries = Vec::new();
    for (ti, &t) in config.t_grid.iter().enumerate() {
        let sampler = HybridSampler::new(&config.model, t, drift, &config.test_function, &config.mt_points, options)?;
        let arm = seed.derive(ti as u64);
        let samples = (0..config.replicates)
            .into_par_iter()
            .map(|i| sampler.sample(arm.with_stream(i)))
            .collect::<crate::Result<Vec<_>>>()?;
        let (mut rz, mut ry) = (Vec::new(), Vec::new());
        let (mut e_sum, mut lcr_sum, mut worst) = (0.0, 0.0, 0.0f64);
        for (i, s) in samples.iter().enumerate() {
            let r = &s.report;
            let (z, y) = asymptotic_split_check(r, &config.test_function, drift, &q)?;
            for (name, v) in crate::decomposition::DecompositionReport::CSV_FIELDS.iter().zip(r.values()) {
                let _ = writeln!(long, "{i},{},{name},{}", fmt_real(t), fmt_real(v));
            }
            let _ = writeln!(long, "{i},{},additivity,{}", fmt_real(t), fmt_real(r.additivity_residual()));
            if let Some(z) = z {
                let _ = writeln!(long, "{i},{},ratio_z,{}", fmt_real(t), fmt_real(z));
                rz.push(z);
            }
            if let Some(y) = y {
                let _ = writeln!(long, "{i},{},ratio_y,{}", fmt_real(t), fmt_real(y));
                ry.push(y);
            }
            e_sum += r.e_part;
            lcr_sum += r.lcr_total();
            worst = worst.max(r.additivity_residual());
        }
        let n = samples.len() as f64;
        for (k, &y) in config.mt_points.iter().enumerate() {
            let v: Vec<f64> = samples.iter().map(|s| s.mt[k]).collect();
            let mean = v.iter().sum::<f64>() / n;
            let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
            let _ = writeln!(mt_csv, "{},{},{},{}", fmt_real(t), fmt_real(y), fmt_real(mean), fmt_real((var / n).sqrt()));
        }
        let s = DecomposeSummary {
            t,
            median_ratio_z: median(rz),
            median_ratio_y: median(ry),
            mean_e_part: e_sum / n,
            mean_lcr: lcr_sum / n,
            max_additivity: worst,
        };
        let _ = writeln!(
            summary_csv,
            "{},{},{},{},{},{},{}",
            fmt_real(t),
            fmt_real(s.median_ratio_z),
            fmt_real(s.median_ratio_y),
            fmt_real(s.mean_e_part),
            fmt_real(s.mean_lcr),
            fmt_real(s.max_additivity),
            fmt_real(sampler.dense_sd_bound())
        );
        summaries.push(s);
    }
    let out = Output::new(dir, &config, config.seed)?;
    out.write_config(&config, config.seed)?;
    out.write("decomposition.csv", &long)?;
    out.write("decomposition_summary.csv", &summary_csv)?;
    if !config.mt_points.is_empty() {
        out.write("mt_density.csv", &mt_csv)?;
    }
    let mut text = String::new();
    for s in &summaries {
        let _ = writeln!(
            text,
            "t={}: median ratio_z {:.6}, median ratio_y {:.6}, mean E {:.4e}, mean L+C+R {:.4e}, max additivity {:.2e}",
            s.t, s.median_ratio_z, s.median_ratio_y, s.mean_e_part, s.mean_lcr, s.max_additivity
        );
    }
    Ok((text, summaries))
}

/// One row of the oracle table.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleRow {
    pub name: String,
    pub computed: f64,
    pub expected: f64,
    pub tolerance: f64,
}

impl OracleRow {
    pub fn pass(&self) -> bool {
        (self.computed - self.expected).abs() <= self.tolerance
    }
}

/// Analytic identities and closed forms against independent values
/// (mpmath at 30 digits).
pub fn oracle_rows() -> crate::Result<Vec<OracleRow>> {
    let q = QuadratureSpec::new(1e-13, 1e-13)?;
    let mut rows = Vec::new();
    let hs = [
        ("step[-1,0]", TestFunction::step(-1.0, 0.0, 1.0)?),
        ("bump(0,1,1)", TestFunction::smooth_bump(0.0, 1.0, 1.0)?),
    ];
    for (label, h) in &hs {
        for &lambda in &[0.5, 1.0, 2.0] {
            let exp_rhs = weighted_integral(h, 2.0 * lambda, Transform::Identity, &q)?;
            let flat_rhs = weighted_integral(h, 0.0, Transform::Identity, &q)?;
            for &t in &[0.5, 1.0, 2.0, 5.0] {
                rows.push(OracleRow {
                    name: format!("exp_identity {label} lambda={lambda} t={t}"),
                    computed: exp_weighted_invariance_lhs(h, t, lambda, &q)?,
                    expected: exp_rhs,
                    tolerance: 1e-8,
                });
                rows.push(OracleRow {
                    name: format!("flat_identity {label} lambda={lambda} t={t}"),
                    computed: flat_invariance_lhs(h, t, lambda, &q)?,
                    expected: flat_rhs,
                    tolerance: 1e-8,
                });
            }
        }
    }
    let ln2 = TestFunction::step(0.0, 1.0, std::f64::consts::LN_2)?;
    let unit = |a: f64, b: f64| WindowSpec::new(a, b);
    let fixed = IntensityModel::new(1.0, 1.0, 1.0)?;
    rows.extend([
        OracleRow {
            name: "cox_laplace step(ln2,[0,1]) Z=1 Y=0 lambda=0.5".into(),
            computed: cox_laplace_closed_form(&ln2, 1.0, 0.0, 0.5, &q)?,
            expected: 0.729_015_504_215_524_7,
            tolerance: 1e-12,
        },
        OracleRow {
            name: "expected_one_minus_exp x=0 t=1 lambda=0 step(ln2,[0,1])".into(),
            computed: expected_one_minus_exp(0.0, 1.0, 0.0, &ln2, &q)?,
            expected: 0.170_672_373_034_271_47,
            tolerance: 1e-12,
        },
        OracleRow {
            name: "gaussian_tail(5)".into(),
            computed: gaussian_tail(5.0),
            expected: 2.866_515_718_791_939e-7,
            tolerance: 1e-20,
        },
        OracleRow {
            name: "gaussian_tail(10) relative".into(),
            computed: gaussian_tail(10.0) / 7.619_853_024_160_526e-24,
            expected: 1.0,
            tolerance: 1e-13,
        },
        OracleRow {
            name: "mass [0,1] Z=Y=lambda=1".into(),
            computed: intensity_mass(&fixed, &unit(0.0, 1.0)?),
            expected: 1.432_332_358_381_693_7,
            tolerance: 1e-13,
        },
        OracleRow {
            name: "mass [-1,0] Z=Y=lambda=1".into(),
            computed: intensity_mass(&fixed, &unit(-1.0, 0.0)?),
            expected: 4.194_528_049_465_325,
            tolerance: 1e-13,
        },
        OracleRow {
            name: "mass [-3,3] Z=Y=lambda=1".into(),
            computed: intensity_mass(&fixed, &unit(-3.0, 3.0)?),
            expected: 207.713_157_370_279_23,
            tolerance: 1e-10,
        },
    ]);
    Ok(rows)
}

pub fn cmd_oracle_check(dir: PathBuf) -> Result<(String, bool), CliError> {
    let rows = oracle_rows()?;
    let out = Output::new(dir, &serde_json::json!({ "command": "oracle-check" }), 0)?;
    let mut csv = String::from("name,computed,expected,abs_error,tolerance,result\n");
    let mut failed = 0;
    for r in &rows {
        failed += usize::from(!r.pass());
        let _ = writeln!(
            csv,
            "\"{}\",{},{},{},{},{}",
            r.name,
            fmt_real(r.computed),
            fmt_real(r.expected),
            fmt_real((r.computed - r.expected).abs()),
            fmt_real(r.tolerance),
            if r.pass() { "PASS" } else { "FAIL" }
        );
    }
    out.write("oracle.csv", &csv)?;
    Ok((format!("oracle-check: {} checks, {failed} failed", rows.len()), failed == 0))
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("warning: thread pool already initialized: {e}");
        }
    }
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli) -> Result<i32, CliError> {
    let flag_dir = cli.output_dir.clone();
    match cli.command {
        Command::Simulate(a) => {
            let config: SimulateConfig = match &cli.config {
                Some(p) => read_config(p)?,
                None => a.into(),
            };
            let dir = output_dir(flag_dir, config.output_dir.clone());
            println!("{}", cmd_simulate(config, dir)?);
            Ok(0)
        }
        Command::Verify(a) => {
            let config: VerifyConfig = match &cli.config {
                Some(p) => read_config(p)?,
                None => a.into(),
            };
            let dir = output_dir(flag_dir, config.output_dir.clone());
            let (text, pass) = cmd_verify(config, dir)?;
            print!("{text}");
            Ok(if pass { 0 } else { 1 })
        }
        Command::Decompose(a) => {
            let config: DecomposeConfig = match &cli.config {
                Some(p) => read_config(p)?,
                None => a.into(),
            };
            let dir = output_dir(flag_dir, config.output_dir.clone());
            print!("{}", cmd_decompose(config, dir)?.0);
            Ok(0)
        }
        Command::OracleCheck => {
            let (text, pass) = cmd_oracle_check(output_dir(flag_dir, None))?;
            println!("{text}");
            Ok(if pass { 0 } else { 1 })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trip() {
        let v: VerifyConfig = VerifyArgs {
            model: ModelArgs { z: 1.0, y: 1.0, lambda: 1.0, seed: 3 },
            t_grid: vec![1.0],
            window: vec![-3.0, 3.0],
            replicates: 10,
            significance: 0.01,
            controls: vec![Control::WrongExponent],
            concentration_trials: Some(100),
            tightness: true,
        }
        .into();
        let text = serde_json::to_string(&v).unwrap();
        assert_eq!(parse_config::<VerifyConfig>(&text).unwrap(), v);
        let mut s: SimulateConfig = SimulateArgs {
            model: ModelArgs { z: 1.0, y: 0.0, lambda: 1.0, seed: 3 },
            t: 1.0,
            window: vec![-1.0, 1.0],
            replicates: 2,
            epsilon: f64::INFINITY,
        }
        .into();
        s.padded_window = Some([-2.0, 2.0]);
        let back: SimulateConfig = parse_config(&serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn malformed_config_reports_position() {
        let e = parse_config::<VerifyConfig>("{\n  \"model\": 5\n}").unwrap_err();
        assert!(e.contains("line 2"), "{e}");
    }

    #[test]
    fn hash_ignores_output_dir() {
        let a = DecomposeConfig::from(DecomposeArgs {
            model: ModelArgs { z: 1.0, y: 1.0, lambda: 1.0, seed: 1 },
            t_grid: vec![100.0],
            replicates: 2,
            mt_points: vec![],
        });
        let mut b = a.clone();
        b.output_dir = Some(PathBuf::from("/elsewhere"));
        assert_eq!(config_hash(&a), config_hash(&b));
        assert_eq!(config_hash(&a).len(), 64);
    }

    #[test]
    fn oracle_table_passes() {
        assert!(oracle_rows().unwrap().iter().all(OracleRow::pass));
    }

    #[test]
    fn error_codes() {
        assert_eq!(CliError::from(Error::ZeroDrift).exit_code(), 2);
        let p = Error::Padding { leak: 1.0, epsilon: 0.1, radius: 2.0 };
        assert_eq!(CliError::from(p).exit_code(), 3);
        assert_eq!(CliError::Runtime(String::new()).exit_code(), 1);
    }
}
