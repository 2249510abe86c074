//! Monte-Carlo sweeps over scenario parameters.
//!
//! Every realization draws user positions and channel gains from its own
//! seed, runs each configured macro method, then each small-cell solver on
//! top, and records per-realization metrics. Summaries (mean and standard
//! error) are computed from the realization rows, which are kept as well.
//!
//! Seeds depend only on the base seed and the realization index, so all sweep
//! points of a realization share the same random draws where the sweep
//! variable does not change how many draws are made.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributed::{run_algorithm2, DistributedOptions};
use crate::error::{Error, Result};
use crate::macrocell::{bisect_ith, solve_proposed, MacroAllocation};
use crate::model::{realize_gains, ChannelGains, Scenario, ScenarioConfig};
use crate::smallcell::{solve_convex_relaxation, solve_minlp_exact, SmallCellAllocation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    NumMues,
    RateMue,
    RateSue,
    PSmallMax,
    WallLossDb,
}

impl SweepVariable {
    pub fn name(self) -> &'static str {
        match self {
            SweepVariable::NumMues => "num_mues",
            SweepVariable::RateMue => "rate_mue",
            SweepVariable::RateSue => "rate_sue",
            SweepVariable::PSmallMax => "p_small_max",
            SweepVariable::WallLossDb => "wall_loss_db",
        }
    }

    /// Writes `value` into the matching field of `config`.
    pub fn apply(self, config: &mut ScenarioConfig, value: f64) -> Result<()> {
        match self {
            SweepVariable::NumMues => {
                if value < 0.0 || value.fract() != 0.0 {
                    return Err(Error::Config(format!("num_mues must be a whole number, got {value}")));
                }
                config.num_mues = value as usize;
                config.mue_positions = None;
            }
            SweepVariable::RateMue => config.rate_mue = value,
            SweepVariable::RateSue => config.rate_sue = value,
            SweepVariable::PSmallMax => config.p_small_max = value,
            SweepVariable::WallLossDb => config.wall_loss_db = value,
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MacroMethod {
    /// Maximum-gain assignment at equal power.
    Proposed,
    /// Min-sum-power water-filling with a uniform threshold set by bisection.
    Traditional,
}

impl MacroMethod {
    pub fn name(self) -> &'static str {
        match self {
            MacroMethod::Proposed => "proposed",
            MacroMethod::Traditional => "traditional",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    Exact,
    Convex,
    Distributed,
}

impl SolverKind {
    pub fn name(self) -> &'static str {
        match self {
            SolverKind::Exact => "exact",
            SolverKind::Convex => "convex",
            SolverKind::Distributed => "distributed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub variable: SweepVariable,
    pub values: Vec<f64>,
}

fn default_realizations() -> usize {
    50
}

fn default_macro_methods() -> Vec<MacroMethod> {
    vec![MacroMethod::Proposed]
}

fn default_solvers() -> Vec<SolverKind> {
    vec![SolverKind::Convex]
}

fn default_l_max() -> usize {
    200
}

fn default_gap_tol() -> f64 {
    1e-2
}

fn default_bisection_tol() -> f64 {
    1e-3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub sweep: Sweep,
    #[serde(default = "default_realizations")]
    pub realizations: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_macro_methods")]
    pub macro_methods: Vec<MacroMethod>,
    #[serde(default = "default_solvers")]
    pub solvers: Vec<SolverKind>,
    /// Iteration cap of the distributed solver.
    #[serde(default = "default_l_max")]
    pub l_max: usize,
    /// Relative duality gap at which the distributed solver stops.
    #[serde(default = "default_gap_tol")]
    pub gap_tol: f64,
    /// Power tolerance (W) of the baseline's threshold bisection.
    #[serde(default = "default_bisection_tol")]
    pub bisection_tol: f64,
    #[serde(default)]
    pub scenario: ScenarioConfig,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_toml_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.macro_methods.is_empty() || self.solvers.is_empty() {
            return Err(Error::Config("need at least one macro method and one solver".into()));
        }
        if self.sweep.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("sweep values must be finite".into()));
        }
        Ok(())
    }

    /// Labels of the macro/small-cell combinations, in run order.
    pub fn solver_labels(&self) -> Vec<String> {
        self.macro_methods
            .iter()
            .flat_map(|m| self.solvers.iter().map(move |s| format!("{}/{}", m.name(), s.name())))
            .collect()
    }
}

/// Seed of realization `r`.
pub fn realization_seed(base_seed: u64, r: usize) -> u64 {
    splitmix64(base_seed ^ splitmix64(r as u64))
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Positions and gains of one realization.
pub fn realization(config: &ScenarioConfig, seed: u64) -> Result<(Scenario, ChannelGains)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scenario = config.build_with(&mut rng)?;
    scenario.rng_seed = seed;
    let gains = realize_gains(&scenario, &mut rng);
    Ok((scenario, gains))
}

/// Percentage of SUEs admitted, counting fractional admissions fractionally.
pub fn metric_admitted(alloc: &SmallCellAllocation, scenario: &Scenario) -> f64 {
    let f = scenario.num_sues();
    if f == 0 {
        return 0.0;
    }
    alloc.admitted_sum() / f as f64 * 100.0
}

/// Percentage of SUEs whose admission is at least 0.999.
pub fn metric_admitted_rounded(alloc: &SmallCellAllocation, scenario: &Scenario) -> f64 {
    let f = scenario.num_sues();
    if f == 0 {
        return 0.0;
    }
    let full = alloc.admit.iter().flatten().filter(|&&y| y >= 0.999).count();
    full as f64 / f as f64 * 100.0
}

/// Summed sub-channel shares over `S * N`, in percent.
pub fn metric_channel_usage(alloc: &SmallCellAllocation, scenario: &Scenario) -> f64 {
    let slots = scenario.num_cells() * scenario.num_channels;
    if slots == 0 {
        return 0.0;
    }
    alloc.channel_sum() / slots as f64 * 100.0
}

pub const METRICS: [&str; 4] = ["admitted_pct", "admitted_pct_rounded", "channel_usage_pct", "objective"];

/// Metric name used for the failure count in the summary.
pub const FAILURES: &str = "failures";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRow {
    pub sweep_value: f64,
    pub realization: usize,
    pub seed: u64,
    pub solver: String,
    pub metric: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub sweep_value: f64,
    pub solver: String,
    pub metric: String,
    pub mean: f64,
    pub stderr: f64,
    pub n_realizations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub sweep_value: f64,
    pub realization: usize,
    pub solver: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub name: String,
    pub sweep_variable: SweepVariable,
    pub sweep_values: Vec<f64>,
    pub realizations: usize,
    pub seeds: Vec<u64>,
    pub summary: Vec<SummaryRow>,
    pub raw: Vec<RawRow>,
    pub failures: Vec<Failure>,
}

impl ExperimentResult {
    /// Mean of `metric` for `solver` at each sweep point, in sweep order.
    pub fn means(&self, solver: &str, metric: &str) -> Vec<f64> {
        self.sweep_values
            .iter()
            .map(|&v| {
                self.summary
                    .iter()
                    .find(|r| r.sweep_value == v && r.solver == solver && r.metric == metric)
                    .map_or(f64::NAN, |r| r.mean)
            })
            .collect()
    }
}

fn run_macro(method: MacroMethod, gains: &ChannelGains, scenario: &Scenario, tol: f64) -> Result<MacroAllocation> {
    match method {
        MacroMethod::Proposed => solve_proposed(gains, scenario),
        MacroMethod::Traditional => Ok(bisect_ith(gains, scenario, 0.0, 1e-9, tol)?.allocation),
    }
}

fn run_smallcell(
    kind: SolverKind,
    macro_alloc: &MacroAllocation,
    gains: &ChannelGains,
    scenario: &Scenario,
    config: &ExperimentConfig,
) -> Result<(SmallCellAllocation, f64)> {
    let eps = scenario.epsilon;
    match kind {
        SolverKind::Exact => {
            let a = solve_minlp_exact(macro_alloc, gains, scenario)?;
            let obj = crate::smallcell::objective_value(&a, eps);
            Ok((a, obj))
        }
        SolverKind::Convex => {
            let sol = solve_convex_relaxation(macro_alloc, gains, scenario)?;
            Ok((sol.allocation, sol.objective))
        }
        SolverKind::Distributed => {
            let options = DistributedOptions {
                l_max: config.l_max,
                gap_tol: config.gap_tol,
                ..Default::default()
            };
            let sol = run_algorithm2(macro_alloc, gains, scenario, &options)?;
            Ok((sol.allocation, sol.objective))
        }
    }
}

type Outcome = std::result::Result<[f64; 4], String>;

/// Runs every solver chain on one realization at one sweep point.
fn run_point(config: &ExperimentConfig, value: f64, seed: u64) -> Vec<(String, Outcome)> {
    let labels = config.solver_labels();
    let mut scenario_config = config.scenario.clone();
    let drawn = config
        .sweep
        .variable
        .apply(&mut scenario_config, value)
        .and_then(|_| realization(&scenario_config, seed));
    let (scenario, gains) = match drawn {
        Ok(x) => x,
        Err(e) => return labels.into_iter().map(|l| (l, Err(e.to_string()))).collect(),
    };
    let mut out = Vec::new();
    for &method in &config.macro_methods {
        let macro_alloc = run_macro(method, &gains, &scenario, config.bisection_tol);
        for &kind in &config.solvers {
            let label = format!("{}/{}", method.name(), kind.name());
            let outcome = match &macro_alloc {
                Err(e) => Err(format!("macro: {e}")),
                Ok(m) => run_smallcell(kind, m, &gains, &scenario, config)
                    .map(|(a, obj)| {
                        [
                            metric_admitted(&a, &scenario),
                            metric_admitted_rounded(&a, &scenario),
                            metric_channel_usage(&a, &scenario),
                            obj,
                        ]
                    })
                    .map_err(|e| e.to_string()),
            };
            out.push((label, outcome));
        }
    }
    out
}

/// Mean and standard error (sample standard deviation over `sqrt(n)`).
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let seeds: Vec<u64> = (0..config.realizations)
        .map(|r| realization_seed(config.base_seed, r))
        .collect();
    let tasks: Vec<(usize, usize)> = (0..config.sweep.values.len())
        .flat_map(|p| (0..config.realizations).map(move |r| (p, r)))
        .collect();
    // Collected in task order, so the result does not depend on scheduling.
    let outcomes: Vec<Vec<(String, Outcome)>> = tasks
        .par_iter()
        .map(|&(p, r)| run_point(config, config.sweep.values[p], seeds[r]))
        .collect();

    let labels = config.solver_labels();
    let mut raw = Vec::new();
    let mut failures = Vec::new();
    for (&(p, r), runs) in tasks.iter().zip(&outcomes) {
        let value = config.sweep.values[p];
        for (label, outcome) in runs {
            match outcome {
                Ok(metrics) => {
                    for (name, &v) in METRICS.iter().zip(metrics) {
                        raw.push(RawRow {
                            sweep_value: value,
                            realization: r,
                            seed: seeds[r],
                            solver: label.clone(),
                            metric: (*name).to_string(),
                            value: v,
                        });
                    }
                }
                Err(message) => failures.push(Failure {
                    sweep_value: value,
                    realization: r,
                    solver: label.clone(),
                    message: message.clone(),
                }),
            }
        }
    }

    let mut summary = Vec::new();
    for (p, &value) in config.sweep.values.iter().enumerate() {
        for label in &labels {
            let rows_here = |metric: &str| -> Vec<f64> {
                tasks
                    .iter()
                    .zip(&outcomes)
                    .filter(|((tp, _), _)| *tp == p)
                    .filter_map(|(_, runs)| {
                        let (_, outcome) = runs.iter().find(|(l, _)| l == label)?;
                        let metrics = outcome.as_ref().ok()?;
                        let i = METRICS.iter().position(|m| *m == metric)?;
                        Some(metrics[i])
                    })
                    .collect()
            };
            for metric in METRICS {
                let values = rows_here(metric);
                let (mean, stderr) = mean_stderr(&values);
                summary.push(SummaryRow {
                    sweep_value: value,
                    solver: label.clone(),
                    metric: metric.to_string(),
                    mean,
                    stderr,
                    n_realizations: values.len(),
                });
            }
            let failed = failures
                .iter()
                .filter(|f| f.sweep_value == value && &f.solver == label)
                .count();
            summary.push(SummaryRow {
                sweep_value: value,
                solver: label.clone(),
                metric: FAILURES.to_string(),
                mean: failed as f64,
                stderr: 0.0,
                n_realizations: config.realizations,
            });
        }
    }

    Ok(ExperimentResult {
        name: config.name.clone(),
        sweep_variable: config.sweep.variable,
        sweep_values: config.sweep.values.clone(),
        realizations: config.realizations,
        seeds,
        summary,
        raw,
        failures,
    })
}

/// Companion path for realization-level rows: `<stem>_raw.csv`.
pub fn raw_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}_raw.csv"))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_rows<T: Serialize>(path: &Path, header: &[&str], rows: &[T]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(create(path)?);
    w.write_record(header)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes the summary to `path` and realization rows next to it.
pub fn write_csv(result: &ExperimentResult, path: &Path) -> Result<()> {
    write_rows(
        path,
        &["sweep_value", "solver", "metric", "mean", "stderr", "n_realizations"],
        &result.summary,
    )?;
    write_rows(
        &raw_path(path),
        &["sweep_value", "realization", "seed", "solver", "metric", "value"],
        &result.raw,
    )
}

pub fn read_summary_csv(path: &Path) -> Result<Vec<SummaryRow>> {
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = csv::Reader::from_reader(file);
    reader.deserialize().map(|r| r.map_err(Error::from)).collect()
}

pub fn read_raw_csv(path: &Path) -> Result<Vec<RawRow>> {
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = csv::Reader::from_reader(file);
    reader.deserialize().map(|r| r.map_err(Error::from)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smallcell::AllocationMode;

    fn three_sues() -> Scenario {
        ScenarioConfig {
            small_cell_positions: vec![[0.0, -100.0]],
            sues_per_cell: 3,
            num_channels: 3,
            ..Default::default()
        }
        .build()
        .unwrap()
    }

    #[test]
    fn admitted_examples() {
        let sc = three_sues();
        let mut a = SmallCellAllocation::zeros(&sc, AllocationMode::Relaxed);
        assert_eq!(metric_admitted(&a, &sc), 0.0);
        a.admit[0] = vec![1.0, 0.5, 0.0];
        assert!((metric_admitted(&a, &sc) - 50.0).abs() < 1e-12);
        assert!((metric_admitted_rounded(&a, &sc) - 100.0 / 3.0).abs() < 1e-12);
        a.admit[0] = vec![1.0; 3];
        assert_eq!(metric_admitted(&a, &sc), 100.0);
    }

    #[test]
    fn channel_usage_examples() {
        let sc = ScenarioConfig {
            num_channels: 3,
            ..Default::default()
        }
        .build()
        .unwrap();
        let mut a = SmallCellAllocation::zeros(&sc, AllocationMode::Exact);
        assert_eq!(metric_channel_usage(&a, &sc), 0.0);
        a.gamma[0][0][1] = 1.0;
        assert!((metric_channel_usage(&a, &sc) - 100.0 / 6.0).abs() < 1e-12);
        for cell in a.gamma.iter_mut() {
            for n in 0..3 {
                cell[0][n] = 1.0;
            }
        }
        assert_eq!(metric_channel_usage(&a, &sc), 100.0);
    }

    #[test]
    fn stderr_formula() {
        let (m, se) = mean_stderr(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        // sample variance 5/3
        assert!((se - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_stderr(&[7.0]), (7.0, 0.0));
    }

    #[test]
    fn raw_path_suffix() {
        assert_eq!(raw_path(Path::new("/tmp/fig5.csv")), PathBuf::from("/tmp/fig5_raw.csv"));
    }

    #[test]
    fn seeds_differ() {
        let a = realization_seed(1, 0);
        assert_ne!(a, realization_seed(1, 1));
        assert_ne!(a, realization_seed(2, 0));
        assert_eq!(a, realization_seed(1, 0));
    }

    #[test]
    fn config_parses() {
        let text = r#"
            name = "t"
            realizations = 3
            base_seed = 9
            macro_methods = ["proposed", "traditional"]
            solvers = ["convex"]
            [sweep]
            variable = "rate_mue"
            values = [1.0, 2.0]
            [scenario]
            num_mues = 2
            num_channels = 3
        "#;
        let c = ExperimentConfig::from_toml_str(text).unwrap();
        assert_eq!(c.sweep.variable, SweepVariable::RateMue);
        assert_eq!(c.solver_labels(), vec!["proposed/convex", "traditional/convex"]);
        assert_eq!(c.scenario.num_channels, 3);
        assert!(ExperimentConfig::from_toml_str("name = \"x\"\nbogus = 1\n").is_err());
    }
}
