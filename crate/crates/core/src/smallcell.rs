//! Small-cell tier: joint admission control and sub-channel/power allocation.
//!
//! The objective `(1 - eps) sum y - eps sum Gamma` favours admitting SUEs at
//! their target rate and, among equal admissions, using fewer sub-channels.
//! Every small cell must keep its summed power within `P_s,max`, and the
//! aggregate interference on a sub-channel held by an MUE must stay below that
//! MUE's tolerable level.
//!
//! Two centralized solvers are provided: [`solve_minlp_exact`] enumerates the
//! binary sub-channel patterns at desk scale, and [`solve_convex_relaxation`]
//! solves the time-sharing relaxation, which bounds the exact optimum from
//! above.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::barrier::{self, BarrierOptions, Constraint, PerspectiveTerm, Program};
use crate::error::{Error, Result};
use crate::macrocell::MacroAllocation;
use crate::model::{cross_tier_interference, ChannelGains, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AllocationMode {
    /// Binary sub-channel indicators and admissions.
    Exact,
    /// Time shares and fractional admissions.
    Relaxed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmallCellAllocation {
    /// `[s][f][n]`: sub-channel indicator or time share.
    pub gamma: Vec<Vec<Vec<f64>>>,
    /// `[s][f][n]`: actual transmit power in W.
    pub power: Vec<Vec<Vec<f64>>>,
    /// `[s][f]`: admission indicator or achieved rate fraction.
    pub admit: Vec<Vec<f64>>,
    pub mode: AllocationMode,
}

impl SmallCellAllocation {
    /// The trivial all-off allocation.
    pub fn zeros(scenario: &Scenario, mode: AllocationMode) -> Self {
        let n = scenario.num_channels;
        let per_cell = |s: usize| vec![vec![0.0; n]; scenario.sues_in(s)];
        Self {
            gamma: (0..scenario.num_cells()).map(per_cell).collect(),
            power: (0..scenario.num_cells()).map(per_cell).collect(),
            admit: (0..scenario.num_cells()).map(|s| vec![0.0; scenario.sues_in(s)]).collect(),
            mode,
        }
    }

    pub fn admitted_sum(&self) -> f64 {
        self.admit.iter().flatten().sum()
    }

    pub fn channel_sum(&self) -> f64 {
        self.gamma.iter().flatten().flatten().sum()
    }

    pub fn cell_power(&self, s: usize) -> f64 {
        self.power[s].iter().flatten().sum()
    }

    /// Rate of SUE `f` in cell `s` in bps/Hz under the given macro allocation.
    pub fn rate(&self, s: usize, f: usize, macro_alloc: &MacroAllocation, gains: &ChannelGains, noise: f64) -> f64 {
        (0..self.gamma[s][f].len())
            .map(|n| {
                let interference = macro_alloc.interference_at_sue(gains, s, f, n);
                barrier::perspective_log2(
                    self.gamma[s][f][n],
                    self.power[s][f][n],
                    gains.small_sue[s][f][n] / (interference + noise),
                )
            })
            .sum()
    }

    /// Writes `s,f,n,gamma,power_W,admit` rows: one per slot, then one admit
    /// row per SUE with `n`, `gamma` and `power_W` left empty.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for (s, cell) in self.gamma.iter().enumerate() {
            for (f, row) in cell.iter().enumerate() {
                for (n, &g) in row.iter().enumerate() {
                    w.serialize(SmallRow {
                        s,
                        f,
                        n: Some(n),
                        gamma: Some(g),
                        power_w: Some(self.power[s][f][n]),
                        admit: None,
                    })?;
                }
            }
        }
        for (s, cell) in self.admit.iter().enumerate() {
            for (f, &y) in cell.iter().enumerate() {
                w.serialize(SmallRow {
                    s,
                    f,
                    n: None,
                    gamma: None,
                    power_w: None,
                    admit: Some(y),
                })?;
            }
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct SmallRow {
    s: usize,
    f: usize,
    n: Option<usize>,
    gamma: Option<f64>,
    #[serde(rename = "power_W")]
    power_w: Option<f64>,
    admit: Option<f64>,
}

/// `(1 - eps) sum y - eps sum Gamma`.
pub fn objective_value(alloc: &SmallCellAllocation, epsilon: f64) -> f64 {
    (1.0 - epsilon) * alloc.admitted_sum() - epsilon * alloc.channel_sum()
}

/// `Gamma log2(1 + (P~ g / Gamma) / (I + N_o))`, extended by zero at `Gamma = 0`.
pub fn perspective_rate(gamma: f64, power: f64, gain: f64, macro_interference: f64, noise: f64) -> Result<f64> {
    if gamma == 0.0 && power > 0.0 {
        return Err(Error::InvalidPerspective { power });
    }
    Ok(barrier::perspective_log2(gamma, power, gain / (macro_interference + noise)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintKind {
    /// SUE rate at least `y R_f`.
    Rate,
    /// Per-cell power budget.
    PowerBudget,
    /// Cross-tier interference on an MUE's sub-channel.
    CrossTier,
    /// Power only where a sub-channel (share) is held.
    PowerGating,
    /// Sub-channel shares within a cell sum to at most one.
    ChannelShare,
    /// Variable domains (non-negativity, unit bounds, integrality).
    Domain,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub kind: ConstraintKind,
    pub location: String,
    /// Amount by which the constraint is exceeded (positive).
    pub excess: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeasibilityReport {
    pub violations: Vec<Violation>,
}

impl FeasibilityReport {
    pub fn is_feasible(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn count(&self, kind: ConstraintKind) -> usize {
        self.violations.iter().filter(|v| v.kind == kind).count()
    }
}

/// Relative tolerance on power and interference budgets.
pub const BUDGET_TOL: f64 = 1e-9;
/// Relative tolerance (w.r.t. `R_f`) on the rate constraints.
pub const RATE_TOL: f64 = 1e-7;

/// Evaluates every constraint of the small-cell problem on `alloc`.
pub fn check_feasible(
    alloc: &SmallCellAllocation,
    macro_alloc: &MacroAllocation,
    gains: &ChannelGains,
    scenario: &Scenario,
) -> FeasibilityReport {
    let mut report = FeasibilityReport::default();
    let mut flag = |kind, location: String, excess: f64| {
        report.violations.push(Violation { kind, location, excess });
    };
    let n_ch = scenario.num_channels;
    for s in 0..scenario.num_cells() {
        for f in 0..scenario.sues_in(s) {
            let y = alloc.admit[s][f];
            let rate = alloc.rate(s, f, macro_alloc, gains, scenario.noise);
            let need = y * scenario.rate_sue;
            if need - rate > RATE_TOL * scenario.rate_sue {
                flag(ConstraintKind::Rate, format!("s={s} f={f}"), need - rate);
            }
            if !(0.0..=1.0).contains(&y) || (alloc.mode == AllocationMode::Exact && y != 0.0 && y != 1.0) {
                flag(ConstraintKind::Domain, format!("admit s={s} f={f}"), y);
            }
            for n in 0..n_ch {
                let g = alloc.gamma[s][f][n];
                let p = alloc.power[s][f][n];
                if p < 0.0 {
                    flag(ConstraintKind::Domain, format!("power s={s} f={f} n={n}"), -p);
                }
                if !(0.0..=1.0).contains(&g) || (alloc.mode == AllocationMode::Exact && g != 0.0 && g != 1.0) {
                    flag(ConstraintKind::Domain, format!("gamma s={s} f={f} n={n}"), g);
                }
                if p > 0.0 && (g == 0.0 || (alloc.mode == AllocationMode::Exact && g != 1.0)) {
                    flag(ConstraintKind::PowerGating, format!("s={s} f={f} n={n}"), p);
                }
            }
        }
        let total = alloc.cell_power(s);
        if total > scenario.p_small_max * (1.0 + BUDGET_TOL) {
            flag(ConstraintKind::PowerBudget, format!("s={s}"), total - scenario.p_small_max);
        }
        for n in 0..n_ch {
            let shares: f64 = alloc.gamma[s].iter().map(|row| row[n]).sum();
            if shares > 1.0 + BUDGET_TOL {
                flag(ConstraintKind::ChannelShare, format!("s={s} n={n}"), shares - 1.0);
            }
        }
    }
    for n in 0..n_ch {
        let owner = macro_alloc.owner(n);
        if let Some(m) = owner {
            let limit = macro_alloc.tolerable[m][n];
            let got = cross_tier_interference(alloc, gains, owner, n);
            if got > limit * (1.0 + BUDGET_TOL) {
                flag(ConstraintKind::CrossTier, format!("n={n} m={m}"), got - limit);
            }
        }
    }
    report
}

/// Result of the relaxed solver.
#[derive(Debug, Clone)]
pub struct RelaxedSolution {
    pub allocation: SmallCellAllocation,
    pub objective: f64,
    /// Upper bound on how far `objective` is below the optimum.
    pub gap_bound: f64,
    pub converged: bool,
}

/// How the cross-tier constraint enters a relaxed program.
#[derive(Debug, Clone)]
pub(crate) enum CrossTier<'a> {
    /// Shared constraint per MUE sub-channel across all modelled cells.
    Enforce,
    /// Per-cell interference budgets in W, `[s][n]`; `None` = unconstrained.
    Budgets(&'a [Vec<Option<f64>>]),
    /// Dropped; a price per W of interference on each sub-channel enters the
    /// objective. Slots on held sub-channels with zero tolerable level are
    /// still removed, as that constraint is local to each cell.
    Priced(&'a [f64]),
}

#[derive(Debug, Clone)]
pub(crate) struct Slot {
    pub s: usize,
    pub f: usize,
    pub n: usize,
    pub share: usize,
    pub power: usize,
}

/// Variable layout of a relaxed program over a subset of cells.
#[derive(Debug, Clone)]
pub(crate) struct Layout {
    pub slots: Vec<Slot>,
    /// `[s][f]` variable for the admission fraction, if the SUE can get any rate.
    pub admit: Vec<Vec<Option<usize>>>,
    pub start: Vec<f64>,
}

impl Layout {
    /// Writes the solution of the cells in this layout into `alloc`.
    pub fn write_into(&self, x: &[f64], scenario: &Scenario, alloc: &mut SmallCellAllocation, cells: &[usize]) {
        for &s in cells {
            for f in 0..scenario.sues_in(s) {
                alloc.admit[s][f] = 0.0;
                alloc.gamma[s][f].iter_mut().for_each(|g| *g = 0.0);
                alloc.power[s][f].iter_mut().for_each(|p| *p = 0.0);
            }
        }
        for slot in &self.slots {
            alloc.gamma[slot.s][slot.f][slot.n] = x[slot.share].clamp(0.0, 1.0);
            alloc.power[slot.s][slot.f][slot.n] = x[slot.power].max(0.0) * scenario.p_small_max;
        }
        for &s in cells {
            for f in 0..scenario.sues_in(s) {
                if let Some(v) = self.admit[s][f] {
                    alloc.admit[s][f] = x[v].clamp(0.0, 1.0);
                }
            }
        }
    }
}

/// SINR per unit of normalized power (`p = P~ / P_s,max`) for each slot.
fn slot_gain(s: usize, f: usize, n: usize, macro_alloc: &MacroAllocation, gains: &ChannelGains, scenario: &Scenario) -> f64 {
    let interference = macro_alloc.interference_at_sue(gains, s, f, n);
    scenario.p_small_max * gains.small_sue[s][f][n] / (interference + scenario.noise)
}

/// Builds the time-sharing relaxation over `cells`. Powers are normalized by
/// `P_s,max`; cross-tier rows are normalized by their tolerable level.
pub(crate) fn build_relaxation(
    cells: &[usize],
    macro_alloc: &MacroAllocation,
    gains: &ChannelGains,
    scenario: &Scenario,
    cross: CrossTier<'_>,
) -> (Program, Layout) {
    let n_ch = scenario.num_channels;
    let eps = scenario.epsilon;
    let owners = macro_alloc.owners();

    // Normalized interference coefficient and limit of a slot, if the
    // cross-tier constraint applies to it.
    let capacity = |s: usize, n: usize| -> Option<f64> {
        match &cross {
            CrossTier::Enforce | CrossTier::Priced(_) => owners[n].map(|m| macro_alloc.tolerable[m][n]),
            CrossTier::Budgets(b) => b[s][n],
        }
    };

    let mut num_vars = 0;
    let mut var = || {
        num_vars += 1;
        num_vars - 1
    };
    let mut slots = Vec::new();
    let mut admit = vec![Vec::new(); scenario.num_cells()];
    for &s in cells {
        for f in 0..scenario.sues_in(s) {
            let mut any = false;
            for n in 0..n_ch {
                if capacity(s, n).is_some_and(|c| c <= 0.0) {
                    continue;
                }
                any = true;
                slots.push(Slot {
                    s,
                    f,
                    n,
                    share: var(),
                    power: var(),
                });
            }
            admit[s].push(any.then(&mut var));
        }
    }

    let mut program = Program::new(num_vars);
    let mut start = vec![0.0; num_vars];

    for slot in &slots {
        program.objective[slot.share] = -eps;
        if let CrossTier::Priced(prices) = &cross {
            if let Some(m) = owners[slot.n] {
                program.objective[slot.power] =
                    -prices[slot.n] * gains.small_mue[slot.s][m][slot.n] * scenario.p_small_max;
            }
        }
        program.constraints.push(Constraint::nonneg(slot.share));
        program.constraints.push(Constraint::nonneg(slot.power));
        start[slot.share] = 1.0 / (scenario.sues_in(slot.s) + 1) as f64;
    }

    // Power budget per cell.
    for &s in cells {
        let own: Vec<&Slot> = slots.iter().filter(|sl| sl.s == s).collect();
        if own.is_empty() {
            continue;
        }
        for sl in &own {
            start[sl.power] = 0.5 / own.len() as f64;
        }
        program.constraints.push(Constraint::Linear {
            coeffs: own.iter().map(|sl| (sl.power, 1.0)).collect(),
            rhs: 1.0,
        });
    }

    // Sub-channel shares per cell.
    for &s in cells {
        for n in 0..n_ch {
            let coeffs: Vec<(usize, f64)> = slots
                .iter()
                .filter(|sl| sl.s == s && sl.n == n)
                .map(|sl| (sl.share, 1.0))
                .collect();
            if !coeffs.is_empty() {
                program.constraints.push(Constraint::Linear { coeffs, rhs: 1.0 });
            }
        }
    }

    // Cross-tier rows, with the start scaled to use at most half of each.
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    match &cross {
        CrossTier::Enforce => {
            for n in 0..n_ch {
                let Some(m) = owners[n] else { continue };
                let limit = macro_alloc.tolerable[m][n];
                let coeffs: Vec<(usize, f64)> = slots
                    .iter()
                    .filter(|sl| sl.n == n)
                    .map(|sl| (sl.power, scenario.p_small_max * gains.small_mue[sl.s][m][n] / limit))
                    .collect();
                if !coeffs.is_empty() {
                    rows.push(coeffs);
                }
            }
        }
        CrossTier::Budgets(budgets) => {
            for &s in cells {
                for n in 0..n_ch {
                    let (Some(m), Some(limit)) = (owners[n], budgets[s][n]) else { continue };
                    let coeffs: Vec<(usize, f64)> = slots
                        .iter()
                        .filter(|sl| sl.s == s && sl.n == n)
                        .map(|sl| (sl.power, scenario.p_small_max * gains.small_mue[s][m][n] / limit))
                        .collect();
                    if !coeffs.is_empty() {
                        rows.push(coeffs);
                    }
                }
            }
        }
        CrossTier::Priced(_) => {}
    }
    for coeffs in rows {
        let used: f64 = coeffs.iter().map(|&(i, c)| c * start[i]).sum();
        if used >= 0.5 {
            for &(i, _) in &coeffs {
                start[i] *= 0.5 / used;
            }
        }
        program.constraints.push(Constraint::Linear { coeffs, rhs: 1.0 });
    }

    // Rate rows and admission bounds.
    for &s in cells {
        for f in 0..scenario.sues_in(s) {
            let Some(y) = admit[s][f] else { continue };
            let terms: Vec<PerspectiveTerm> = slots
                .iter()
                .filter(|sl| sl.s == s && sl.f == f)
                .map(|sl| PerspectiveTerm {
                    share: Some(sl.share),
                    power: sl.power,
                    gain: slot_gain(s, f, sl.n, macro_alloc, gains, scenario),
                })
                .collect();
            let rate: f64 = terms.iter().map(|t| t.value(&start)).sum();
            start[y] = 0.5 * (rate / scenario.rate_sue).min(1.0);
            program.objective[y] = 1.0 - eps;
            program.constraints.push(Constraint::Rate {
                demand: vec![(y, scenario.rate_sue)],
                demand_const: 0.0,
                terms,
            });
            program.constraints.push(Constraint::nonneg(y));
            program.constraints.push(Constraint::upper(y, 1.0));
        }
    }

    let layout = Layout { slots, admit, start };
    (program, layout)
}

/// Barrier settings used by the relaxed solvers.
pub fn relaxed_options() -> BarrierOptions {
    BarrierOptions {
        gap_tol: 1e-9,
        ..Default::default()
    }
}

/// Solves the time-sharing relaxation over all cells centrally.
pub fn solve_convex_relaxation(
    macro_alloc: &MacroAllocation,
    gains: &ChannelGains,
    scenario: &Scenario,
) -> Result<RelaxedSolution> {
    gains.validate(scenario)?;
    let cells: Vec<usize> = (0..scenario.num_cells()).collect();
    solve_relaxed_cells(&cells, macro_alloc, gains, scenario, CrossTier::Enforce)
}

pub(crate) fn solve_relaxed_cells(
    cells: &[usize],
    macro_alloc: &MacroAllocation,
    gains: &ChannelGains,
    scenario: &Scenario,
    cross: CrossTier<'_>,
) -> Result<RelaxedSolution> {
    let (program, layout) = build_relaxation(cells, macro_alloc, gains, scenario, cross);
    let solution = barrier::maximize(&program, layout.start.clone(), relaxed_options())?;
    let mut allocation = SmallCellAllocation::zeros(scenario, AllocationMode::Relaxed);
    layout.write_into(&solution.x, scenario, &mut allocation, cells);
    let objective = objective_value(&allocation, scenario.epsilon);
    Ok(RelaxedSolution {
        allocation,
        objective,
        gap_bound: solution.gap_bound,
        converged: solution.converged,
    })
}

/// Largest instance the exact solver accepts, as `S * F * N`.
pub const EXACT_GUARD: usize = 24;

/// Binary sub-channel pattern: `[s][n]` holds the SUE of cell `s` using `n`.
pub type Pattern = Vec<Vec<Option<usize>>>;

/// Whether an SUE may use sub-channel `n` at all: a held sub-channel with a
/// zero tolerable level admits no small-cell power.
fn usable(macro_alloc: &MacroAllocation, n: usize) -> bool {
    macro_alloc.threshold(n).is_none_or(|t| t > 0.0)
}

/// Every binary pattern over usable sub-channels, in a fixed order.
pub fn enumerate_patterns(macro_alloc: &MacroAllocation, scenario: &Scenario) -> Vec<Pattern> {
    let n_ch = scenario.num_channels;
    let mut slots: Vec<(usize, usize)> = Vec::new();
    for s in 0..scenario.num_cells() {
        for n in 0..n_ch {
            if usable(macro_alloc, n) {
                slots.push((s, n));
            }
        }
    }
    let mut out = Vec::new();
    let mut pattern: Pattern = vec![vec![None; n_ch]; scenario.num_cells()];
    fn rec(k: usize, slots: &[(usize, usize)], scenario: &Scenario, pattern: &mut Pattern, out: &mut Vec<Pattern>) {
        if k == slots.len() {
            out.push(pattern.clone());
            return;
        }
        let (s, n) = slots[k];
        pattern[s][n] = None;
        rec(k + 1, slots, scenario, pattern, out);
        for f in 0..scenario.sues_in(s) {
            pattern[s][n] = Some(f);
            rec(k + 1, slots, scenario, pattern, out);
        }
        pattern[s][n] = None;
    }
    rec(0, &slots, scenario, &mut pattern, &mut out);
    out
}

/// Admission count and number of held sub-channels of a pattern.
pub fn pattern_counts(pattern: &Pattern, scenario: &Scenario) -> (usize, usize) {
    let mut admitted = 0;
    let mut channels = 0;
    for (s, row) in pattern.iter().enumerate() {
        channels += row.iter().flatten().count();
        admitted += (0..scenario.sues_in(s)).filter(|f| row.contains(&Some(*f))).count();
    }
    (admitted, channels)
}

/// Minimum-power allocation that serves every SUE holding a sub-channel in
/// `pattern` at `R_f`, or `None` if no power allocation does.
///
/// First maximizes the common rate fraction `tau`; the pattern is feasible
/// iff `tau > 1`, in which case a second program minimizes the total power
/// starting from the `tau` solution.
pub fn pattern_min_power(
    pattern: &Pattern,
    macro_alloc: &MacroAllocation,
    gains: &ChannelGains,
    scenario: &Scenario,
) -> Result<Option<SmallCellAllocation>> {
    let mut alloc = SmallCellAllocation::zeros(scenario, AllocationMode::Exact);
    // (s, f, n) per power variable.
    let mut vars: Vec<(usize, usize, usize)> = Vec::new();
    for (s, row) in pattern.iter().enumerate() {
        for (n, holder) in row.iter().enumerate() {
            if let Some(f) = holder {
                vars.push((s, *f, n));
            }
        }
    }
    if vars.is_empty() {
        return Ok(Some(alloc));
    }
    let tau = vars.len();
    let mut program = Program::new(vars.len() + 1);
    let mut start = vec![0.0; vars.len() + 1];

    let mut linear_rows: Vec<Vec<(usize, f64)>> = Vec::new();
    for s in 0..scenario.num_cells() {
        let own: Vec<usize> = (0..vars.len()).filter(|&i| vars[i].0 == s).collect();
        if own.is_empty() {
            continue;
        }
        for &i in &own {
            start[i] = 0.5 / own.len() as f64;
        }
        linear_rows.push(own.iter().map(|&i| (i, 1.0)).collect());
    }
    let mut cross_rows: Vec<Vec<(usize, f64)>> = Vec::new();
    for n in 0..scenario.num_channels {
        let Some(m) = macro_alloc.owner(n) else { continue };
        let limit = macro_alloc.tolerable[m][n];
        let coeffs: Vec<(usize, f64)> = (0..vars.len())
            .filter(|&i| vars[i].2 == n)
            .map(|i| (i, scenario.p_small_max * gains.small_mue[vars[i].0][m][n] / limit))
            .collect();
        if coeffs.is_empty() {
            continue;
        }
        let used: f64 = coeffs.iter().map(|&(i, c)| c * start[i]).sum();
        if used >= 0.5 {
            for &(i, _) in &coeffs {
                start[i] *= 0.5 / used;
            }
        }
        cross_rows.push(coeffs);
    }
    for coeffs in linear_rows.into_iter().chain(cross_rows) {
        program.constraints.push(Constraint::Linear { coeffs, rhs: 1.0 });
    }
    for i in 0..vars.len() {
        program.constraints.push(Constraint::nonneg(i));
    }

    let mut rate_terms: Vec<(Vec<PerspectiveTerm>, f64)> = Vec::new();
    for s in 0..scenario.num_cells() {
        for f in 0..scenario.sues_in(s) {
            let terms: Vec<PerspectiveTerm> = (0..vars.len())
                .filter(|&i| vars[i].0 == s && vars[i].1 == f)
                .map(|i| PerspectiveTerm {
                    share: None,
                    power: i,
                    gain: slot_gain(s, f, vars[i].2, macro_alloc, gains, scenario),
                })
                .collect();
            if terms.is_empty() {
                continue;
            }
            let rate: f64 = terms.iter().map(|t| t.value(&start)).sum();
            rate_terms.push((terms, rate));
        }
    }
    let min_fraction = rate_terms
        .iter()
        .map(|(_, r)| r / scenario.rate_sue)
        .fold(f64::INFINITY, f64::min);
    start[tau] = 0.5 * min_fraction.min(1.0);
    program.objective[tau] = 1.0;
    program.constraints.push(Constraint::upper(tau, 2.0));
    let base = program.constraints.clone();
    for (terms, _) in &rate_terms {
        program.constraints.push(Constraint::Rate {
            demand: vec![(tau, scenario.rate_sue)],
            demand_const: 0.0,
            terms: terms.clone(),
        });
    }
    let options = BarrierOptions {
        gap_tol: 1e-10,
        ..Default::default()
    };
    let phase1 = barrier::maximize(&program, start, options)?;
    if phase1.x[tau] <= 1.0 + 1e-9 {
        return Ok(None);
    }

    // Minimize total power at the required rates.
    let mut power_program = Program::new(vars.len() + 1);
    power_program.constraints = base;
    for i in 0..vars.len() {
        power_program.objective[i] = -1.0;
    }
    for (terms, _) in &rate_terms {
        power_program.constraints.push(Constraint::Rate {
            demand: vec![],
            demand_const: scenario.rate_sue,
            terms: terms.clone(),
        });
    }
    let mut start = phase1.x.clone();
    start[tau] = 1.0;
    let phase2 = barrier::maximize(&power_program, start, options)?;
    for (i, &(s, f, n)) in vars.iter().enumerate() {
        alloc.gamma[s][f][n] = 1.0;
        alloc.power[s][f][n] = phase2.x[i].max(0.0) * scenario.p_small_max;
    }
    for (s, row) in pattern.iter().enumerate() {
        for f in 0..scenario.sues_in(s) {
            if row.contains(&Some(f)) {
                alloc.admit[s][f] = 1.0;
            }
        }
    }
    Ok(Some(alloc))
}

/// Exact solution of the binary problem at desk scale.
///
/// Patterns are ranked by objective; within the best-ranked group that has a
/// feasible member, the one with the lowest total power wins.
pub fn solve_minlp_exact(
    macro_alloc: &MacroAllocation,
    gains: &ChannelGains,
    scenario: &Scenario,
) -> Result<SmallCellAllocation> {
    gains.validate(scenario)?;
    let size = scenario.num_cells() * scenario.num_sues() * scenario.num_channels;
    if size > EXACT_GUARD {
        return Err(Error::SizeLimit(format!("S*F*N = {size} exceeds {EXACT_GUARD}")));
    }
    let eps = scenario.epsilon;
    let mut ranked: Vec<(f64, Pattern)> = enumerate_patterns(macro_alloc, scenario)
        .into_iter()
        .map(|p| {
            let (k, c) = pattern_counts(&p, scenario);
            ((1.0 - eps) * k as f64 - eps * c as f64, p)
        })
        .collect();
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0));

    let mut i = 0;
    while i < ranked.len() {
        let value = ranked[i].0;
        let mut j = i;
        let mut best: Option<(f64, SmallCellAllocation)> = None;
        while j < ranked.len() && ranked[j].0 == value {
            if let Some(alloc) = pattern_min_power(&ranked[j].1, macro_alloc, gains, scenario)? {
                let power: f64 = (0..scenario.num_cells()).map(|s| alloc.cell_power(s)).sum();
                if best.as_ref().is_none_or(|(bp, _)| power < *bp) {
                    best = Some((power, alloc));
                }
            }
            j += 1;
        }
        if let Some((_, alloc)) = best {
            return Ok(alloc);
        }
        i = j;
    }
    // The all-off pattern is always feasible, so this is unreachable.
    Ok(SmallCellAllocation::zeros(scenario, AllocationMode::Exact))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ScenarioConfig;

    fn one_cell(num_channels: usize) -> Scenario {
        ScenarioConfig {
            small_cell_positions: vec![[0.0, -100.0]],
            sues_per_cell: 1,
            num_mues: 1,
            num_channels,
            ..Default::default()
        }
        .build()
        .unwrap()
    }

    fn flat_gains(sc: &Scenario, sue: f64, cross: f64, macro_sue: f64) -> ChannelGains {
        let n = sc.num_channels;
        ChannelGains {
            macro_mue: vec![vec![1e-9; n]; sc.num_mues()],
            macro_sue: (0..sc.num_cells()).map(|s| vec![vec![macro_sue; n]; sc.sues_in(s)]).collect(),
            small_sue: (0..sc.num_cells()).map(|s| vec![vec![sue; n]; sc.sues_in(s)]).collect(),
            small_mue: (0..sc.num_cells()).map(|_| vec![vec![cross; n]; sc.num_mues()]).collect(),
        }
    }

    #[test]
    fn objective_examples() {
        let sc = one_cell(1);
        let mut a = SmallCellAllocation::zeros(&sc, AllocationMode::Exact);
        assert_eq!(objective_value(&a, 0.1), 0.0);
        a.admit[0][0] = 1.0;
        a.gamma[0][0][0] = 1.0;
        assert!((objective_value(&a, 0.1) - 0.8).abs() < 1e-15);
        assert!((Scenario::default_epsilon(2, 10) - 0.042857).abs() < 1e-6);
    }

    #[test]
    fn perspective_rate_cases() {
        let plain = (1.0f64 + 2.0 * 3.0 / (0.5 + 0.5)).log2();
        assert!((perspective_rate(1.0, 2.0, 3.0, 0.5, 0.5).unwrap() - plain).abs() < 1e-15);
        assert_eq!(perspective_rate(0.0, 0.0, 3.0, 0.5, 0.5).unwrap(), 0.0);
        assert!(matches!(perspective_rate(0.0, 1.0, 3.0, 0.5, 0.5), Err(Error::InvalidPerspective { .. })));
    }

    #[test]
    fn all_off_is_feasible() {
        let sc = one_cell(2);
        let g = flat_gains(&sc, 1e-6, 1e-7, 1e-10);
        let macro_alloc = crate::macrocell::solve_proposed(&g, &sc).unwrap();
        let a = SmallCellAllocation::zeros(&sc, AllocationMode::Exact);
        assert!(check_feasible(&a, &macro_alloc, &g, &sc).is_feasible());
    }

    #[test]
    fn power_budget_violation_flagged() {
        let sc = one_cell(2);
        let g = flat_gains(&sc, 1e-6, 1e-7, 1e-10);
        let macro_alloc = MacroAllocation::empty(1, 2, sc.i_max);
        let mut a = SmallCellAllocation::zeros(&sc, AllocationMode::Exact);
        a.gamma[0][0][1] = 1.0;
        a.power[0][0][1] = sc.p_small_max + 1e-6;
        let report = check_feasible(&a, &macro_alloc, &g, &sc);
        assert_eq!(report.count(ConstraintKind::PowerBudget), 1);
        assert_eq!(report.violations.len(), 1);
    }

    #[test]
    fn exact_no_sues() {
        let sc = ScenarioConfig {
            sues_per_cell: 0,
            num_channels: 3,
            ..Default::default()
        }
        .build()
        .unwrap();
        let g = flat_gains(&sc, 1e-6, 1e-7, 1e-10);
        let macro_alloc = crate::macrocell::solve_proposed(&g, &sc).unwrap();
        let a = solve_minlp_exact(&macro_alloc, &g, &sc).unwrap();
        assert_eq!(objective_value(&a, sc.epsilon), 0.0);
    }

    #[test]
    fn exact_forced_single_slot() {
        // One cell, one SUE, one free sub-channel with ample power.
        let mut sc = one_cell(1);
        sc.mue_positions.clear();
        let mut g = flat_gains(&sc, 1e-6, 1e-7, 1e-10);
        g.macro_mue.clear();
        g.small_mue = vec![vec![]];
        let macro_alloc = MacroAllocation::empty(0, 1, sc.i_max);
        let a = solve_minlp_exact(&macro_alloc, &g, &sc).unwrap();
        assert_eq!(a.admit[0][0], 1.0);
        assert_eq!(a.gamma[0][0][0], 1.0);
        let obj = objective_value(&a, sc.epsilon);
        assert!((obj - ((1.0 - sc.epsilon) - sc.epsilon)).abs() < 1e-15);
        // Minimum power meets the rate with equality.
        let need = (sc.rate_sue.exp2() - 1.0) * sc.noise / 1e-6;
        assert!((a.power[0][0][0] - need).abs() < 1e-6 * need, "{} vs {need}", a.power[0][0][0]);
        assert!(check_feasible(&a, &macro_alloc, &g, &sc).is_feasible());
    }

    #[test]
    fn exact_guard() {
        let sc = ScenarioConfig {
            sues_per_cell: 3,
            num_channels: 3,
            ..Default::default()
        }
        .build()
        .unwrap();
        let g = flat_gains(&sc, 1e-6, 1e-7, 1e-10);
        let macro_alloc = crate::macrocell::solve_proposed(&g, &sc).unwrap();
        assert!(matches!(solve_minlp_exact(&macro_alloc, &g, &sc), Err(Error::SizeLimit(_))));
    }

    #[test]
    fn relaxation_blocked_spectrum() {
        // Every sub-channel is held with zero tolerable level: nothing can be sent.
        let mut sc = one_cell(1);
        sc.rate_sue = 5.0;
        let g = flat_gains(&sc, 1e-6, 1e-7, 1e-10);
        let mut macro_alloc = crate::macrocell::solve_proposed(&g, &sc).unwrap();
        macro_alloc.tolerable[0][0] = 0.0;
        let sol = solve_convex_relaxation(&macro_alloc, &g, &sc).unwrap();
        assert!(sol.allocation.admitted_sum() < 1e-9);
        assert!(sol.objective.abs() < 1e-9);
    }

    #[test]
    fn relaxation_generous_admits_everyone() {
        let sc = ScenarioConfig {
            num_channels: 4,
            num_mues: 1,
            rate_sue: 2.0,
            ..Default::default()
        }
        .build()
        .unwrap();
        let g = flat_gains(&sc, 1e-6, 1e-12, 1e-12);
        let macro_alloc = crate::macrocell::solve_proposed(&g, &sc).unwrap();
        let sol = solve_convex_relaxation(&macro_alloc, &g, &sc).unwrap();
        assert!(sol.converged);
        for y in sol.allocation.admit.iter().flatten() {
            assert!(*y > 1.0 - 1e-6, "y = {y}");
        }
        // Shares shrink to what the rate needs at full power: well under one channel.
        assert!(sol.allocation.channel_sum() < 2.0);
        assert!(check_feasible(&sol.allocation, &macro_alloc, &g, &sc).is_feasible());
    }

    #[test]
    fn csv_layout() {
        let sc = one_cell(2);
        let mut a = SmallCellAllocation::zeros(&sc, AllocationMode::Relaxed);
        a.admit[0][0] = 0.5;
        let mut buf = Vec::new();
        a.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "s,f,n,gamma,power_W,admit");
        assert_eq!(lines.len(), 1 + 2 + 1);
        assert_eq!(lines[3], "0,0,,,,0.5");
    }
}
