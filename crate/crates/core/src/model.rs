//! Scenario description, channel realization and the SINR primitives.
//!
//! Powers are in watts, distances in metres and rate requirements in bps/Hz.
//! Rates are therefore compared as `sum log2(1 + sinr)` against the spectral
//! efficiency directly; the sub-channel bandwidth is carried for reporting only.

use std::f64::consts::PI;
use std::path::Path;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::smallcell::SmallCellAllocation;

pub type Point = [f64; 2];

/// Inner and outer radius of the annulus SUEs are dropped in around their cell.
pub const SUE_ANNULUS: (f64, f64) = (3.0, 10.0);

/// Distances are clamped to this value before entering a path-loss formula.
pub const MIN_DISTANCE: f64 = 1.0;

/// Shadowing standard deviations in dB.
pub const SHADOW_SMALL_TO_SUE_DB: f64 = 4.0;
pub const SHADOW_SMALL_MUE_DB: f64 = 8.0;
pub const SHADOW_MACRO_DB: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub macro_position: Point,
    pub macro_radius: f64,
    pub hotspot_center: Point,
    pub small_cell_positions: Vec<Point>,
    pub mue_positions: Vec<Point>,
    /// One list of SUE positions per small cell.
    pub sue_positions: Vec<Vec<Point>>,
    pub num_channels: usize,
    /// Sub-channel bandwidth in Hz.
    pub delta_f: f64,
    pub p_macro_max: f64,
    pub p_small_max: f64,
    pub noise: f64,
    /// Wall penetration loss in dB.
    pub wall_loss_db: f64,
    /// MUE rate requirement in bps/Hz.
    pub rate_mue: f64,
    /// SUE rate requirement in bps/Hz.
    pub rate_sue: f64,
    /// Tolerable-interference sentinel for sub-channels the macrocell leaves free.
    pub i_max: f64,
    pub epsilon: f64,
    pub rng_seed: u64,
}

impl Scenario {
    pub fn num_cells(&self) -> usize {
        self.small_cell_positions.len()
    }

    pub fn num_mues(&self) -> usize {
        self.mue_positions.len()
    }

    pub fn num_sues(&self) -> usize {
        self.sue_positions.iter().map(Vec::len).sum()
    }

    pub fn sues_in(&self, cell: usize) -> usize {
        self.sue_positions[cell].len()
    }

    /// Weight that keeps admission strictly ahead of channel savings.
    pub fn default_epsilon(num_cells: usize, num_channels: usize) -> f64 {
        0.9 / (1.0 + (num_cells * num_channels) as f64)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidScenario(msg));
        let positive = [
            ("macro_radius", self.macro_radius),
            ("delta_f", self.delta_f),
            ("p_macro_max", self.p_macro_max),
            ("p_small_max", self.p_small_max),
            ("noise", self.noise),
            ("rate_mue", self.rate_mue),
            ("rate_sue", self.rate_sue),
            ("i_max", self.i_max),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return bad(format!("{name} must be finite and positive, got {value}"));
            }
        }
        if !self.wall_loss_db.is_finite() {
            return bad("wall_loss_db must be finite".into());
        }
        if self.num_channels == 0 {
            return bad("at least one sub-channel is required".into());
        }
        if self.sue_positions.len() != self.small_cell_positions.len() {
            return bad(format!(
                "{} SUE lists for {} small cells",
                self.sue_positions.len(),
                self.small_cell_positions.len()
            ));
        }
        let bound = 1.0 / (1.0 + (self.num_cells() * self.num_channels) as f64);
        if !(self.epsilon > 0.0 && self.epsilon < bound) {
            return bad(format!(
                "epsilon must lie in (0, 1/(1+SN)) = (0, {bound}), got {}",
                self.epsilon
            ));
        }
        Ok(())
    }

    /// Loads a scenario from a TOML file; see [`ScenarioConfig`].
    pub fn from_toml_file(path: impl AsRef<Path>) -> Result<Self> {
        ScenarioConfig::from_toml_file(path)?.build()
    }
}

/// User-facing scenario description.
///
/// Positions may be given explicitly; any that are missing are drawn by the
/// built-in hotspot generator from `rng_seed`. `epsilon` defaults to
/// `0.9 / (1 + S N)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub macro_position: Point,
    pub macro_radius: f64,
    pub hotspot_center: Point,
    /// Half side of the square hotspot MUEs are dropped in.
    pub hotspot_half_width: f64,
    pub small_cell_positions: Vec<Point>,
    pub mue_positions: Option<Vec<Point>>,
    pub num_mues: usize,
    pub sue_positions: Option<Vec<Vec<Point>>>,
    pub sues_per_cell: usize,
    pub num_channels: usize,
    pub delta_f: f64,
    pub p_macro_max: f64,
    pub p_small_max: f64,
    pub noise: f64,
    pub wall_loss_db: f64,
    pub rate_mue: f64,
    pub rate_sue: f64,
    pub i_max: f64,
    pub epsilon: Option<f64>,
    pub rng_seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            macro_position: [0.0, 0.0],
            macro_radius: 300.0,
            hotspot_center: [0.0, -100.0],
            hotspot_half_width: 10.0,
            small_cell_positions: vec![[-10.0, -100.0], [10.0, -100.0]],
            mue_positions: None,
            num_mues: 3,
            sue_positions: None,
            sues_per_cell: 2,
            num_channels: 10,
            delta_f: 180e3,
            p_macro_max: 20.0,
            p_small_max: 0.03,
            noise: 1e-13,
            wall_loss_db: 1.0,
            rate_mue: 5.0,
            rate_sue: 5.0,
            i_max: 1e3,
            epsilon: None,
            rng_seed: 1,
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_toml_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    /// Builds a scenario, drawing missing positions from `rng_seed`.
    pub fn build(&self) -> Result<Scenario> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.rng_seed);
        self.build_with(&mut rng)
    }

    /// Builds a scenario, drawing missing positions from `rng`.
    pub fn build_with<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Scenario> {
        let mue_positions = match &self.mue_positions {
            Some(p) => p.clone(),
            None => (0..self.num_mues)
                .map(|_| {
                    let h = self.hotspot_half_width;
                    [
                        self.hotspot_center[0] + rng.random_range(-h..=h),
                        self.hotspot_center[1] + rng.random_range(-h..=h),
                    ]
                })
                .collect(),
        };
        let sue_positions = match &self.sue_positions {
            Some(p) => p.clone(),
            None => self
                .small_cell_positions
                .iter()
                .map(|&c| {
                    (0..self.sues_per_cell)
                        .map(|_| sample_annulus(rng, c, SUE_ANNULUS.0, SUE_ANNULUS.1))
                        .collect()
                })
                .collect(),
        };
        let epsilon = self.epsilon.unwrap_or_else(|| {
            Scenario::default_epsilon(self.small_cell_positions.len(), self.num_channels)
        });
        let scenario = Scenario {
            macro_position: self.macro_position,
            macro_radius: self.macro_radius,
            hotspot_center: self.hotspot_center,
            small_cell_positions: self.small_cell_positions.clone(),
            mue_positions,
            sue_positions,
            num_channels: self.num_channels,
            delta_f: self.delta_f,
            p_macro_max: self.p_macro_max,
            p_small_max: self.p_small_max,
            noise: self.noise,
            wall_loss_db: self.wall_loss_db,
            rate_mue: self.rate_mue,
            rate_sue: self.rate_sue,
            i_max: self.i_max,
            epsilon,
            rng_seed: self.rng_seed,
        };
        scenario.validate()?;
        Ok(scenario)
    }
}

/// Uniform-by-area point in the annulus `[inner, outer]` around `center`.
pub fn sample_annulus<R: Rng + ?Sized>(rng: &mut R, center: Point, inner: f64, outer: f64) -> Point {
    let r = rng.random_range(inner * inner..=outer * outer).sqrt();
    let theta = rng.random_range(0.0..2.0 * PI);
    [center[0] + r * theta.cos(), center[1] + r * theta.sin()]
}

pub fn distance(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkKind {
    SmallToSue,
    SmallToMue,
    MacroToSue,
    MacroToMue,
}

impl LinkKind {
    pub fn shadowing_db(self) -> f64 {
        match self {
            LinkKind::SmallToSue => SHADOW_SMALL_TO_SUE_DB,
            LinkKind::SmallToMue => SHADOW_SMALL_MUE_DB,
            LinkKind::MacroToSue | LinkKind::MacroToMue => SHADOW_MACRO_DB,
        }
    }
}

/// Path loss in dB for a link of the given kind. Distances below 1 m are clamped.
pub fn path_loss_db(kind: LinkKind, distance: f64, wall_loss_db: f64) -> f64 {
    let r = distance.max(MIN_DISTANCE);
    let indoor = 38.46 + 20.0 * r.log10();
    let outdoor = 15.3 + 37.6 * r.log10();
    match kind {
        LinkKind::SmallToSue => indoor,
        LinkKind::SmallToMue => indoor.max(outdoor) + wall_loss_db,
        LinkKind::MacroToSue => outdoor + wall_loss_db,
        LinkKind::MacroToMue => outdoor,
    }
}

/// Linear power gains for every link and sub-channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelGains {
    /// `[m][n]`: macro BS to MUE m.
    pub macro_mue: Vec<Vec<f64>>,
    /// `[s][f][n]`: macro BS to SUE f of cell s.
    pub macro_sue: Vec<Vec<Vec<f64>>>,
    /// `[s][f][n]`: small cell s to its own SUE f.
    pub small_sue: Vec<Vec<Vec<f64>>>,
    /// `[s][m][n]`: small cell s to MUE m.
    pub small_mue: Vec<Vec<Vec<f64>>>,
}

/// Which random components enter a realization. Both on for simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FadingModel {
    pub shadowing: bool,
    pub rayleigh: bool,
}

impl Default for FadingModel {
    fn default() -> Self {
        Self {
            shadowing: true,
            rayleigh: true,
        }
    }
}

impl FadingModel {
    /// Path loss only; every gain is `10^(-PL/10)`.
    pub const PATH_LOSS_ONLY: FadingModel = FadingModel {
        shadowing: false,
        rayleigh: false,
    };
}

struct LinkSampler<'a, R: Rng + ?Sized> {
    rng: &'a mut R,
    model: FadingModel,
    fading: Exp<f64>,
    wall_loss_db: f64,
    num_channels: usize,
}

impl<R: Rng + ?Sized> LinkSampler<'_, R> {
    fn link(&mut self, kind: LinkKind, from: Point, to: Point) -> Vec<f64> {
        let pl = path_loss_db(kind, distance(from, to), self.wall_loss_db);
        let shadow = Normal::new(0.0, kind.shadowing_db()).expect("positive deviation");
        (0..self.num_channels)
            .map(|_| {
                let x = if self.model.shadowing {
                    shadow.sample(self.rng)
                } else {
                    0.0
                };
                let h = if self.model.rayleigh {
                    self.fading.sample(self.rng)
                } else {
                    1.0
                };
                10f64.powf(-(pl + x) / 10.0) * h
            })
            .collect()
    }
}

/// Draws a full channel realization with shadowing and Rayleigh fading.
pub fn realize_gains<R: Rng + ?Sized>(scenario: &Scenario, rng: &mut R) -> ChannelGains {
    realize_gains_with(scenario, rng, FadingModel::default())
}

/// Draws gains link by link, each sub-channel independently, in a fixed order:
/// macro-MUE, macro-SUE, small-SUE, small-MUE.
pub fn realize_gains_with<R: Rng + ?Sized>(
    scenario: &Scenario,
    rng: &mut R,
    model: FadingModel,
) -> ChannelGains {
    let mut sampler = LinkSampler {
        rng,
        model,
        fading: Exp::new(1.0).expect("unit rate"),
        wall_loss_db: scenario.wall_loss_db,
        num_channels: scenario.num_channels,
    };
    let bs = scenario.macro_position;
    let macro_mue = scenario
        .mue_positions
        .iter()
        .map(|&u| sampler.link(LinkKind::MacroToMue, bs, u))
        .collect();
    let macro_sue = scenario
        .sue_positions
        .iter()
        .map(|cell| {
            cell.iter()
                .map(|&u| sampler.link(LinkKind::MacroToSue, bs, u))
                .collect()
        })
        .collect();
    let small_sue = scenario
        .small_cell_positions
        .iter()
        .zip(&scenario.sue_positions)
        .map(|(&c, sues)| {
            sues.iter()
                .map(|&u| sampler.link(LinkKind::SmallToSue, c, u))
                .collect()
        })
        .collect();
    let small_mue = scenario
        .small_cell_positions
        .iter()
        .map(|&c| {
            scenario
                .mue_positions
                .iter()
                .map(|&u| sampler.link(LinkKind::SmallToMue, c, u))
                .collect()
        })
        .collect();
    ChannelGains {
        macro_mue,
        macro_sue,
        small_sue,
        small_mue,
    }
}

impl ChannelGains {
    /// Checks shapes against the scenario and that every gain is finite and positive.
    pub fn validate(&self, scenario: &Scenario) -> Result<()> {
        let n = scenario.num_channels;
        let dim = |msg: String| Err(Error::Dimension(msg));
        let rows_ok = |rows: &[Vec<f64>]| rows.iter().all(|r| r.len() == n);
        if self.macro_mue.len() != scenario.num_mues() || !rows_ok(&self.macro_mue) {
            return dim("macro-MUE gains must be M x N".into());
        }
        let s = scenario.num_cells();
        if self.macro_sue.len() != s || self.small_sue.len() != s || self.small_mue.len() != s {
            return dim("per-cell gain lists must have one entry per small cell".into());
        }
        for cell in 0..s {
            let f = scenario.sues_in(cell);
            if self.macro_sue[cell].len() != f
                || self.small_sue[cell].len() != f
                || !rows_ok(&self.macro_sue[cell])
                || !rows_ok(&self.small_sue[cell])
            {
                return dim(format!("cell {cell}: SUE gains must be F_s x N"));
            }
            if self.small_mue[cell].len() != scenario.num_mues() || !rows_ok(&self.small_mue[cell]) {
                return dim(format!("cell {cell}: small-MUE gains must be M x N"));
            }
        }
        let all = self
            .macro_mue
            .iter()
            .chain(self.macro_sue.iter().flatten())
            .chain(self.small_sue.iter().flatten())
            .chain(self.small_mue.iter().flatten())
            .flatten();
        for &g in all {
            if !(g.is_finite() && g > 0.0) {
                return Err(Error::InvalidScenario(format!("non-positive gain {g}")));
            }
        }
        Ok(())
    }
}

/// SINR of an MUE: `P g / (I + N_o)`.
pub fn sinr_macro(power: f64, gain: f64, interference: f64, noise: f64) -> f64 {
    power * gain / (interference + noise)
}

/// SINR of an SUE under cross-tier interference from the macrocell.
pub fn sinr_sue(power: f64, gain_own: f64, macro_interference: f64, noise: f64) -> f64 {
    power * gain_own / (macro_interference + noise)
}

/// Interference power all small cells put on the MUE owning sub-channel `n`.
///
/// `owner` is the MUE holding `n` in the macro allocation; free sub-channels
/// (`None`) carry no cross-tier constraint and report zero.
pub fn cross_tier_interference(
    alloc: &SmallCellAllocation,
    gains: &ChannelGains,
    owner: Option<usize>,
    n: usize,
) -> f64 {
    let Some(m) = owner else { return 0.0 };
    alloc
        .power
        .iter()
        .enumerate()
        .map(|(s, cell)| {
            let g = gains.small_mue[s][m][n];
            cell.iter().map(|row| row[n] * g).sum::<f64>()
        })
        .sum()
}
