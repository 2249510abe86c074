//! Dual decomposition of the relaxed small-cell problem.
//!
//! The cross-tier constraints are the only ones coupling the small cells.
//! Pricing them splits the relaxation into one subproblem per cell; a
//! coordinator updates the prices with the ellipsoid method using the
//! subgradient `1 - load`, where `load^n` is the received interference on
//! sub-channel `n` divided by its tolerable level.
//!
//! Prices are kept in these normalized units (value per unit of load), which
//! keeps the dual well scaled regardless of the absolute interference levels.
//! A price of `mu` on sub-channel `n` corresponds to `mu / I^n` per W.

use std::io::Write;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::Serialize;

use crate::barrier;
use crate::error::{Error, Result};
use crate::macrocell::MacroAllocation;
use crate::model::{cross_tier_interference, ChannelGains, Scenario};
use crate::smallcell::{
    self, build_relaxation, objective_value, relaxed_options, AllocationMode, CrossTier, SmallCellAllocation,
};

/// Shape condition number beyond which the ellipsoid is declared degenerate.
pub const MAX_CONDITION: f64 = 1e12;

/// The priced problem for one realization.
#[derive(Debug, Clone)]
pub struct DualProblem<'a> {
    pub macro_alloc: &'a MacroAllocation,
    pub gains: &'a ChannelGains,
    pub scenario: &'a Scenario,
    /// Sub-channels carrying a price: held by an MUE with a positive tolerable level.
    pub priced: Vec<usize>,
}

/// Per-cell subproblem result.
#[derive(Debug, Clone)]
pub struct CellSolution {
    pub cell: usize,
    pub gamma: Vec<Vec<f64>>,
    pub power: Vec<Vec<f64>>,
    pub admit: Vec<f64>,
    /// Priced objective at the returned point.
    pub value: f64,
    /// Bound on how far `value` is below the subproblem optimum.
    pub gap_bound: f64,
}

/// Dual function value and the data needed for a cut.
#[derive(Debug, Clone)]
pub struct DualEvaluation {
    /// Full-length price vector (zero off the priced sub-channels).
    pub prices: Vec<f64>,
    /// `sum_s value_s + sum_n mu^n`.
    pub value: f64,
    /// `value` plus the subproblem gap bounds: a certified upper bound.
    pub upper: f64,
    /// `1 - load^n` on the priced sub-channels, in `priced` order.
    pub subgradient: Vec<f64>,
    /// Subproblem solutions assembled into one allocation.
    pub allocation: SmallCellAllocation,
}

impl<'a> DualProblem<'a> {
    pub fn new(macro_alloc: &'a MacroAllocation, gains: &'a ChannelGains, scenario: &'a Scenario) -> Result<Self> {
        gains.validate(scenario)?;
        let priced = (0..scenario.num_channels)
            .filter(|&n| macro_alloc.threshold(n).is_some_and(|t| t > 0.0))
            .collect();
        Ok(Self {
            macro_alloc,
            gains,
            scenario,
            priced,
        })
    }

    pub fn dim(&self) -> usize {
        self.priced.len()
    }

    /// Expands prices given on the priced sub-channels to all sub-channels.
    pub fn expand(&self, reduced: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.scenario.num_channels];
        for (&n, &mu) in self.priced.iter().zip(reduced) {
            full[n] = mu;
        }
        full
    }

    /// Cross-tier load per sub-channel (zero on unpriced ones).
    pub fn load(&self, alloc: &SmallCellAllocation) -> Vec<f64> {
        let mut load = vec![0.0; self.scenario.num_channels];
        for &n in &self.priced {
            let owner = self.macro_alloc.owner(n);
            let limit = self.macro_alloc.threshold(n).unwrap_or(f64::INFINITY);
            load[n] = cross_tier_interference(alloc, self.gains, owner, n) / limit;
        }
        load
    }

    /// `L(x, mu) = objective(x) + sum_n mu^n (1 - load^n(x))`.
    pub fn lagrangian_value(&self, alloc: &SmallCellAllocation, prices: &[f64]) -> f64 {
        let load = self.load(alloc);
        objective_value(alloc, self.scenario.epsilon)
            + self.priced.iter().map(|&n| prices[n] * (1.0 - load[n])).sum::<f64>()
    }

    /// Maximizes cell `s`'s share of the Lagrangian at `prices`.
    pub fn solve_subproblem(&self, s: usize, prices: &[f64]) -> Result<CellSolution> {
        let per_watt: Vec<f64> = (0..self.scenario.num_channels)
            .map(|n| match self.macro_alloc.threshold(n) {
                Some(t) if t > 0.0 => prices[n] / t,
                _ => 0.0,
            })
            .collect();
        let cells = [s];
        let (program, layout) =
            build_relaxation(&cells, self.macro_alloc, self.gains, self.scenario, CrossTier::Priced(&per_watt));
        let sol = barrier::maximize(&program, layout.start.clone(), relaxed_options())?;
        let mut alloc = SmallCellAllocation::zeros(self.scenario, AllocationMode::Relaxed);
        layout.write_into(&sol.x, self.scenario, &mut alloc, &cells);
        Ok(CellSolution {
            cell: s,
            gamma: alloc.gamma.swap_remove(s),
            power: alloc.power.swap_remove(s),
            admit: alloc.admit.swap_remove(s),
            value: sol.objective,
            gap_bound: sol.gap_bound,
        })
    }

    /// Evaluates the dual function at `prices` (full length, non-negative).
    pub fn dual_function(&self, prices: &[f64]) -> Result<DualEvaluation> {
        if prices.iter().any(|&p| p < 0.0 || !p.is_finite()) {
            return Err(Error::Dimension("prices must be finite and non-negative".into()));
        }
        let cells: Vec<CellSolution> = (0..self.scenario.num_cells())
            .into_par_iter()
            .map(|s| self.solve_subproblem(s, prices))
            .collect::<Result<_>>()?;
        let mut allocation = SmallCellAllocation::zeros(self.scenario, AllocationMode::Relaxed);
        let mut value = 0.0;
        let mut gap = 0.0;
        for c in cells {
            value += c.value;
            gap += c.gap_bound;
            allocation.gamma[c.cell] = c.gamma;
            allocation.power[c.cell] = c.power;
            allocation.admit[c.cell] = c.admit;
        }
        value += self.priced.iter().map(|&n| prices[n]).sum::<f64>();
        let subgradient = self.subgradient(&allocation);
        Ok(DualEvaluation {
            prices: prices.to_vec(),
            value,
            upper: value + gap,
            subgradient,
            allocation,
        })
    }

    /// `1 - load^n(x)` on the priced sub-channels.
    pub fn subgradient(&self, alloc: &SmallCellAllocation) -> Vec<f64> {
        let load = self.load(alloc);
        self.priced.iter().map(|&n| 1.0 - load[n]).collect()
    }
}

/// Ellipsoid `{x : (x - c)' A^{-1} (x - c) <= 1}`.
#[derive(Debug, Clone)]
pub struct Ellipsoid {
    pub center: DVector<f64>,
    pub shape: DMatrix<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    /// The ellipsoid was cut and replaced by the minimal one containing the kept half.
    Cut,
    /// The cut direction vanished: the center is optimal.
    Optimal,
}

impl Ellipsoid {
    pub fn ball(center: DVector<f64>, radius: f64) -> Self {
        let k = center.len();
        Self {
            center,
            shape: DMatrix::identity(k, k) * (radius * radius),
        }
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    /// Central cut keeping `{x : d'(x - c) <= 0}`.
    pub fn step(&mut self, d: &DVector<f64>) -> Result<StepOutcome> {
        let k = self.dim();
        if k == 0 || d.amax() == 0.0 {
            return Ok(StepOutcome::Optimal);
        }
        let ad = &self.shape * d;
        let dad = d.dot(&ad);
        if dad <= 0.0 || !dad.is_finite() {
            return Err(Error::DegenerateEllipsoid { condition: f64::INFINITY });
        }
        let b = ad / dad.sqrt();
        let kf = k as f64;
        self.center -= &b / (kf + 1.0);
        if k == 1 {
            self.shape /= 4.0;
        } else {
            let scale = kf * kf / (kf * kf - 1.0);
            self.shape = (&self.shape - (&b * b.transpose()) * (2.0 / (kf + 1.0))) * scale;
            self.shape = (&self.shape + self.shape.transpose()) * 0.5;
        }
        let condition = self.condition();
        if !(condition <= MAX_CONDITION) {
            return Err(Error::DegenerateEllipsoid { condition });
        }
        Ok(StepOutcome::Cut)
    }

    pub fn condition(&self) -> f64 {
        let eig = SymmetricEigen::new(self.shape.clone()).eigenvalues;
        let max = eig.max();
        let min = eig.min();
        if min <= 0.0 {
            f64::INFINITY
        } else {
            max / min
        }
    }

    /// `sqrt(A_ii)`: half-width of the ellipsoid along coordinate `i`.
    pub fn half_width(&self, i: usize) -> f64 {
        self.shape[(i, i)].sqrt()
    }
}

/// How a primal feasible point is recovered from subproblem solutions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Recovery {
    /// Scale power down on overloaded sub-channels and re-derive admissions.
    Scale,
    /// Take the better of `Scale` and a per-cell re-solve under interference
    /// budgets split in proportion to each cell's subproblem load.
    Resolve,
    /// Take the best of `Resolve` and the best per-cell convex combination of
    /// past subproblem solutions that meets the cross-tier limits.
    #[default]
    Master,
}

#[derive(Debug, Clone)]
pub struct DistributedOptions {
    pub l_max: usize,
    pub gap_tol: f64,
    pub recovery: Recovery,
}

impl Default for DistributedOptions {
    fn default() -> Self {
        Self {
            l_max: 200,
            gap_tol: 1e-2,
            recovery: Recovery::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow {
    pub iteration: usize,
    /// Certified dual bound at this iteration's prices.
    pub dual_upper: f64,
    /// Objective of this iteration's recovered feasible point.
    pub primal_lower: f64,
    /// Relative gap between the best bounds so far.
    pub gap: f64,
    /// Largest cross-tier load of the raw subproblem solutions.
    pub max_violation_ratio: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Converged,
    IterationLimit,
    Degenerate,
}

#[derive(Debug, Clone)]
pub struct DistributedSolution {
    /// Best recovered feasible allocation.
    pub allocation: SmallCellAllocation,
    pub objective: f64,
    /// Best certified upper bound on the relaxed optimum.
    pub upper_bound: f64,
    /// Prices at which the best upper bound was found.
    pub prices: Vec<f64>,
    pub iterations: usize,
    pub termination: Termination,
    pub trace: Vec<TraceRow>,
}

/// `(upper - lower) / |upper|`, zero when the bounds meet.
pub fn relative_gap(upper: f64, lower: f64) -> f64 {
    let diff = upper - lower;
    if diff <= 1e-12 {
        0.0
    } else {
        diff / upper.abs().max(1e-12)
    }
}

/// Makes the subproblem solutions feasible for the coupled problem.
pub fn recover_feasible(
    problem: &DualProblem<'_>,
    eval: &DualEvaluation,
    recovery: Recovery,
) -> Result<SmallCellAllocation> {
    let scaled = scale_recovery(problem, &eval.allocation);
    if recovery == Recovery::Scale {
        return Ok(scaled);
    }
    let resolved = resolve_recovery(problem, &eval.allocation)?;
    let eps = problem.scenario.epsilon;
    Ok(if objective_value(&resolved, eps) > objective_value(&scaled, eps) {
        resolved
    } else {
        scaled
    })
}

/// Raises each admission to what the allocated rate supports.
fn lift_admissions(problem: &DualProblem<'_>, alloc: &mut SmallCellAllocation) {
    let sc = problem.scenario;
    for s in 0..sc.num_cells() {
        for f in 0..sc.sues_in(s) {
            let rate = alloc.rate(s, f, problem.macro_alloc, problem.gains, sc.noise);
            let supported = (rate / sc.rate_sue).min(1.0) * (1.0 - 1e-12);
            alloc.admit[s][f] = alloc.admit[s][f].max(supported);
        }
    }
}

/// One cell's subproblem solution kept for the master program.
#[derive(Debug, Clone)]
struct Column {
    cell: usize,
    value: f64,
    /// Normalized load on each priced sub-channel.
    load: Vec<f64>,
    gamma: Vec<Vec<f64>>,
    power: Vec<Vec<f64>>,
    admit: Vec<f64>,
    weight: f64,
    age: usize,
}

/// Past subproblem solutions, combined per cell by a small LP.
///
/// Each cell's feasible set is convex and the cross-tier rows are linear in
/// power, so any per-cell convex combination of subproblem solutions that
/// meets those rows is feasible for the coupled problem.
#[derive(Debug, Clone, Default)]
struct ColumnPool {
    columns: Vec<Column>,
    added: usize,
}

/// Columns kept per cell.
const POOL_PER_CELL: usize = 24;

impl ColumnPool {
    fn add(&mut self, problem: &DualProblem<'_>, alloc: &SmallCellAllocation) {
        let sc = problem.scenario;
        let eps = sc.epsilon;
        self.added += 1;
        for s in 0..sc.num_cells() {
            let load = problem
                .priced
                .iter()
                .map(|&n| {
                    let m = problem.macro_alloc.owner(n).expect("priced sub-channels are held");
                    let limit = problem.macro_alloc.tolerable[m][n];
                    alloc.power[s].iter().map(|row| row[n]).sum::<f64>() * problem.gains.small_mue[s][m][n] / limit
                })
                .collect();
            let value = (1.0 - eps) * alloc.admit[s].iter().sum::<f64>()
                - eps * alloc.gamma[s].iter().flatten().sum::<f64>();
            self.columns.push(Column {
                cell: s,
                value,
                load,
                gamma: alloc.gamma[s].clone(),
                power: alloc.power[s].clone(),
                admit: alloc.admit[s].clone(),
                weight: 0.0,
                age: self.added,
            });
            // Drop the oldest unused column of this cell once over capacity.
            let mine: Vec<usize> = (0..self.columns.len()).filter(|&i| self.columns[i].cell == s).collect();
            if mine.len() > POOL_PER_CELL {
                let victim = mine
                    .iter()
                    .copied()
                    .filter(|&i| self.columns[i].weight < 1e-9)
                    .min_by_key(|&i| self.columns[i].age)
                    .unwrap_or(mine[0]);
                self.columns.remove(victim);
            }
        }
    }

    /// Best combination under the cross-tier rows (weights per cell sum to
    /// at most one; the remainder goes to the all-off point).
    fn combine(&mut self, problem: &DualProblem<'_>) -> Result<SmallCellAllocation> {
        let sc = problem.scenario;
        let cols = self.columns.len();
        let k = problem.dim();
        let mut program = barrier::Program::new(cols);
        let mut start = vec![0.0; cols];
        for (i, c) in self.columns.iter().enumerate() {
            program.objective[i] = c.value;
            program.constraints.push(barrier::Constraint::nonneg(i));
        }
        for s in 0..sc.num_cells() {
            let mine: Vec<usize> = (0..cols).filter(|&i| self.columns[i].cell == s).collect();
            for &i in &mine {
                start[i] = 0.5 / mine.len() as f64;
            }
            if !mine.is_empty() {
                program.constraints.push(barrier::Constraint::Linear {
                    coeffs: mine.iter().map(|&i| (i, 1.0)).collect(),
                    rhs: 1.0,
                });
            }
        }
        let mut rows = Vec::with_capacity(k);
        for j in 0..k {
            let coeffs: Vec<(usize, f64)> = (0..cols)
                .filter(|&i| self.columns[i].load[j] > 0.0)
                .map(|i| (i, self.columns[i].load[j]))
                .collect();
            if !coeffs.is_empty() {
                rows.push(coeffs);
            }
        }
        let used = rows
            .iter()
            .map(|r| r.iter().map(|&(i, a)| a * start[i]).sum::<f64>())
            .fold(0.0, f64::max);
        if used >= 0.5 {
            start.iter_mut().for_each(|w| *w *= 0.5 / used);
        }
        for coeffs in rows {
            program.constraints.push(barrier::Constraint::Linear { coeffs, rhs: 1.0 });
        }
        // Any feasible combination will do, so a loose tolerance suffices.
        let options = barrier::BarrierOptions {
            gap_tol: 1e-6,
            ..Default::default()
        };
        let sol = barrier::maximize(&program, start, options)?;

        let mut alloc = SmallCellAllocation::zeros(sc, AllocationMode::Relaxed);
        for (c, &w) in self.columns.iter_mut().zip(&sol.x) {
            let w = w.max(0.0);
            c.weight = w;
            let s = c.cell;
            for (f, row) in c.gamma.iter().enumerate() {
                for (n, &g) in row.iter().enumerate() {
                    alloc.gamma[s][f][n] += w * g;
                    alloc.power[s][f][n] += w * c.power[f][n];
                }
                alloc.admit[s][f] += w * c.admit[f];
            }
        }
        for cell in alloc.gamma.iter_mut() {
            cell.iter_mut().flatten().for_each(|g| *g = g.min(1.0));
        }
        for cell in alloc.admit.iter_mut() {
            cell.iter_mut().for_each(|y| *y = y.min(1.0));
        }
        lift_admissions(problem, &mut alloc);
        Ok(alloc)
    }
}

fn scale_recovery(problem: &DualProblem<'_>, raw: &SmallCellAllocation) -> SmallCellAllocation {
    let sc = problem.scenario;
    let mut alloc = raw.clone();
    let load = problem.load(raw);
    for &n in &problem.priced {
        if load[n] > 1.0 {
            // Slightly below 1/load so rounding cannot leave an overload.
            let alpha = (1.0 - 1e-12) / load[n];
            for cell in alloc.power.iter_mut() {
                for row in cell.iter_mut() {
                    row[n] *= alpha;
                }
            }
        }
    }
    for s in 0..sc.num_cells() {
        for f in 0..sc.sues_in(s) {
            let rate = alloc.rate(s, f, problem.macro_alloc, problem.gains, sc.noise);
            alloc.admit[s][f] = (rate / sc.rate_sue).min(1.0) * (1.0 - 1e-12);
        }
    }
    alloc
}

fn resolve_recovery(problem: &DualProblem<'_>, raw: &SmallCellAllocation) -> Result<SmallCellAllocation> {
    let sc = problem.scenario;
    let cells = sc.num_cells();
    let mut budgets = vec![vec![None; sc.num_channels]; cells];
    for &n in &problem.priced {
        let Some(m) = problem.macro_alloc.owner(n) else { continue };
        let limit = problem.macro_alloc.tolerable[m][n];
        let used: Vec<f64> = (0..cells)
            .map(|s| raw.power[s].iter().map(|row| row[n]).sum::<f64>() * problem.gains.small_mue[s][m][n])
            .collect();
        let total: f64 = used.iter().sum();
        for s in 0..cells {
            let share = if total > 0.0 { used[s] / total } else { 1.0 / cells as f64 };
            budgets[s][n] = Some(limit * share * (1.0 - 1e-9));
        }
    }
    let solved: Vec<SmallCellAllocation> = (0..cells)
        .into_par_iter()
        .map(|s| {
            smallcell::solve_relaxed_cells(
                &[s],
                problem.macro_alloc,
                problem.gains,
                sc,
                CrossTier::Budgets(&budgets),
            )
            .map(|r| r.allocation)
        })
        .collect::<Result<_>>()?;
    let mut alloc = SmallCellAllocation::zeros(sc, AllocationMode::Relaxed);
    for (s, mut part) in solved.into_iter().enumerate() {
        alloc.gamma[s] = std::mem::take(&mut part.gamma[s]);
        alloc.power[s] = std::mem::take(&mut part.power[s]);
        alloc.admit[s] = std::mem::take(&mut part.admit[s]);
    }
    Ok(alloc)
}

/// Upper bound on every optimal price. Scaling all small-cell power on one
/// sub-channel down by `1 / (1 + t)` makes a load of `1 + t` feasible at
/// limit one and costs each cell at most `log2(1 + t)` bps/Hz there (its
/// shares on a sub-channel sum to at most one), so the value of the extra
/// load is at most `(1 - eps) S log2(1 + t) / R_f`.
pub fn price_bound(scenario: &Scenario) -> f64 {
    let cells = scenario.num_cells().max(1) as f64;
    (1.0 - scenario.epsilon) * cells / (scenario.rate_sue * std::f64::consts::LN_2)
}

/// Coordinated dual decomposition with ellipsoid price updates.
pub fn run_algorithm2(
    macro_alloc: &MacroAllocation,
    gains: &ChannelGains,
    scenario: &Scenario,
    options: &DistributedOptions,
) -> Result<DistributedSolution> {
    let problem = DualProblem::new(macro_alloc, gains, scenario)?;
    let k = problem.dim();
    // Ball around the box [0, B]^K, with a little room for roundoff.
    let half = 0.55 * price_bound(scenario);
    let mut ellipsoid = Ellipsoid::ball(DVector::from_element(k, half), half * (k.max(1) as f64).sqrt());

    let mut best: Option<(f64, SmallCellAllocation)> = None;
    let mut best_upper = f64::INFINITY;
    let mut best_prices = vec![0.0; scenario.num_channels];
    let mut trace = Vec::new();
    let mut pool = ColumnPool::default();
    let mut termination = Termination::IterationLimit;

    for iteration in 1..=options.l_max.max(1) {
        let reduced: Vec<f64> = ellipsoid.center.iter().map(|&c| c.max(0.0)).collect();
        let prices = problem.expand(&reduced);
        let eval = problem.dual_function(&prices)?;
        let load = problem.load(&eval.allocation);
        let max_violation_ratio = load.iter().copied().fold(0.0, f64::max);

        let mut recovered = recover_feasible(&problem, &eval, options.recovery)?;
        let mut lower = objective_value(&recovered, scenario.epsilon);
        if options.recovery == Recovery::Master {
            pool.add(&problem, &eval.allocation);
            let combined = pool.combine(&problem)?;
            let value = objective_value(&combined, scenario.epsilon);
            if value > lower {
                lower = value;
                recovered = combined;
            }
        }
        if best.as_ref().is_none_or(|(b, _)| lower > *b) {
            best = Some((lower, recovered));
        }
        if eval.upper < best_upper {
            best_upper = eval.upper;
            best_prices = prices.clone();
        }
        let best_lower = best.as_ref().map_or(f64::NEG_INFINITY, |(b, _)| *b);
        let gap = relative_gap(best_upper, best_lower);
        trace.push(TraceRow {
            iteration,
            dual_upper: eval.upper,
            primal_lower: lower,
            gap,
            max_violation_ratio,
        });
        if gap <= options.gap_tol {
            termination = Termination::Converged;
            break;
        }

        // Feasibility cut on the most negative price, otherwise the objective cut.
        let negative = (0..k)
            .filter(|&i| ellipsoid.center[i] < 0.0)
            .min_by(|&a, &b| ellipsoid.center[a].total_cmp(&ellipsoid.center[b]));
        let direction = match negative {
            Some(i) => {
                let mut d = DVector::zeros(k);
                d[i] = -1.0;
                d
            }
            None => DVector::from_vec(eval.subgradient.clone()),
        };
        match ellipsoid.step(&direction) {
            Ok(StepOutcome::Cut) => {}
            Ok(StepOutcome::Optimal) => {
                termination = Termination::Converged;
                break;
            }
            Err(Error::DegenerateEllipsoid { .. }) => {
                termination = Termination::Degenerate;
                break;
            }
            Err(e) => return Err(e),
        }
    }

    let (objective, allocation) = best.expect("at least one iteration runs");
    Ok(DistributedSolution {
        allocation,
        objective,
        upper_bound: best_upper,
        prices: best_prices,
        iterations: trace.len(),
        termination,
        trace,
    })
}

/// Writes the iteration trace as CSV.
pub fn write_trace_csv<W: Write>(trace: &[TraceRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for row in trace {
        w.serialize(row)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_dimensional_step_halves() {
        let mut e = Ellipsoid::ball(DVector::from_vec(vec![1.0]), 1.0);
        assert_eq!(e.step(&DVector::from_vec(vec![2.0])).unwrap(), StepOutcome::Cut);
        assert!((e.center[0] - 0.5).abs() < 1e-15);
        assert!((e.half_width(0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn step_keeps_the_right_half() {
        // Minimize (x-0.3)^2 + (y+0.2)^2 over a ball by central cuts.
        let mut e = Ellipsoid::ball(DVector::from_vec(vec![0.0, 0.0]), 4.0);
        for _ in 0..120 {
            let d = DVector::from_vec(vec![2.0 * (e.center[0] - 0.3), 2.0 * (e.center[1] + 0.2)]);
            if e.step(&d).is_err() {
                break;
            }
        }
        assert!((e.center[0] - 0.3).abs() < 1e-4, "{}", e.center);
        assert!((e.center[1] + 0.2).abs() < 1e-4, "{}", e.center);
    }

    #[test]
    fn zero_direction_is_optimal() {
        let mut e = Ellipsoid::ball(DVector::from_vec(vec![1.0, 1.0]), 1.0);
        assert_eq!(e.step(&DVector::zeros(2)).unwrap(), StepOutcome::Optimal);
    }

    #[test]
    fn volume_shrinks() {
        let mut e = Ellipsoid::ball(DVector::from_vec(vec![0.0, 0.0, 0.0]), 1.0);
        let before = e.shape.determinant();
        e.step(&DVector::from_vec(vec![1.0, -2.0, 0.5])).unwrap();
        let ratio = (e.shape.determinant() / before).sqrt();
        assert!(ratio < (-1.0f64 / 8.0).exp(), "{ratio}");
    }

    #[test]
    fn degenerate_detected() {
        let mut e = Ellipsoid {
            center: DVector::zeros(2),
            shape: DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1e-13])),
        };
        assert!(matches!(
            e.step(&DVector::from_vec(vec![1.0, 0.0])),
            Err(Error::DegenerateEllipsoid { .. })
        ));
    }

    #[test]
    fn gap_definition() {
        assert_eq!(relative_gap(1.0, 1.0), 0.0);
        assert!((relative_gap(2.0, 1.0) - 0.5).abs() < 1e-15);
        assert_eq!(relative_gap(0.0, 0.0), 0.0);
    }
}
