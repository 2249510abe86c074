//! Log-barrier interior-point method for the small dense convex programs that
//! show up in the small-cell tier.
//!
//! Programs maximize a linear objective over constraints `f_i(x) <= 0` that
//! are either linear or "rate" constraints of the form
//!
//! ```text
//! demand(x) - sum_k share_k * log2(1 + gain_k * power_k / share_k) <= 0
//! ```
//!
//! where `demand` is affine and each term is the perspective of `log2(1 + a p)`
//! (jointly concave in share and power). A term may also use a fixed unit
//! share, which gives the plain `log2(1 + a p)`.
//!
//! The caller supplies a strictly feasible start. Each centering step runs
//! damped Newton on `-t c'x - sum log(-f_i(x))`; `t` grows geometrically until
//! the barrier gap `m / t` falls below the tolerance. On return, `objective +
//! gap_bound` is an upper bound on the true optimum.

use std::f64::consts::LN_2;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerspectiveTerm {
    /// Variable holding the time share, or `None` for a fixed share of one.
    pub share: Option<usize>,
    pub power: usize,
    /// SINR per unit power.
    pub gain: f64,
}

impl PerspectiveTerm {
    /// Contribution in bits (log base 2) at `x`.
    pub fn value(&self, x: &[f64]) -> f64 {
        let p = x[self.power];
        match self.share {
            Some(s) => perspective_log2(x[s], p, self.gain),
            None => (self.gain * p).ln_1p() / LN_2,
        }
    }
}

/// `share * log2(1 + gain * power / share)`, zero when the share is zero.
pub fn perspective_log2(share: f64, power: f64, gain: f64) -> f64 {
    if share <= 0.0 {
        return 0.0;
    }
    share * (gain * power / share).ln_1p() / LN_2
}

#[derive(Debug, Clone, PartialEq)]
pub enum Constraint {
    /// `sum coeff * x <= rhs`.
    Linear { coeffs: Vec<(usize, f64)>, rhs: f64 },
    /// `sum demand * x + demand_const <= sum terms`.
    Rate {
        demand: Vec<(usize, f64)>,
        demand_const: f64,
        terms: Vec<PerspectiveTerm>,
    },
}

impl Constraint {
    pub fn nonneg(var: usize) -> Self {
        Constraint::Linear {
            coeffs: vec![(var, -1.0)],
            rhs: 0.0,
        }
    }

    pub fn upper(var: usize, bound: f64) -> Self {
        Constraint::Linear {
            coeffs: vec![(var, 1.0)],
            rhs: bound,
        }
    }

    /// `f(x)`; feasible iff non-positive.
    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            Constraint::Linear { coeffs, rhs } => coeffs.iter().map(|&(i, c)| c * x[i]).sum::<f64>() - rhs,
            Constraint::Rate {
                demand,
                demand_const,
                terms,
            } => {
                demand.iter().map(|&(i, c)| c * x[i]).sum::<f64>() + demand_const
                    - terms.iter().map(|t| t.value(x)).sum::<f64>()
            }
        }
    }

    /// Adds `w1 * grad f grad f' + w2 * hess f` into `hess` and `w2 * grad f`
    /// into `grad`, where `w1 = 1/f^2` and `w2 = -1/f` for the log barrier.
    fn accumulate(&self, x: &[f64], f: f64, grad: &mut DVector<f64>, hess: &mut DMatrix<f64>) {
        let inv = -1.0 / f;
        let mut sparse: Vec<(usize, f64)> = Vec::new();
        match self {
            Constraint::Linear { coeffs, .. } => sparse.extend_from_slice(coeffs),
            Constraint::Rate { demand, terms, .. } => {
                sparse.extend_from_slice(demand);
                for t in terms {
                    let a = t.gain;
                    let p = x[t.power];
                    match t.share {
                        Some(s) => {
                            let share = x[s];
                            let u = a * p / share;
                            let dp = a / (1.0 + u) / LN_2;
                            let ds = (u.ln_1p() - u / (1.0 + u)) / LN_2;
                            sparse.push((t.power, -dp));
                            sparse.push((s, -ds));
                            // hess f = (1 / (ln2 share (1+u)^2)) v v', v = (a, -u)
                            let w = inv / (LN_2 * share * (1.0 + u) * (1.0 + u));
                            hess[(t.power, t.power)] += w * a * a;
                            hess[(t.power, s)] -= w * a * u;
                            hess[(s, t.power)] -= w * a * u;
                            hess[(s, s)] += w * u * u;
                        }
                        None => {
                            let z = 1.0 + a * p;
                            sparse.push((t.power, -a / z / LN_2));
                            hess[(t.power, t.power)] += inv * a * a / (z * z * LN_2);
                        }
                    }
                }
            }
        }
        for &(i, gi) in &sparse {
            grad[i] += inv * gi;
        }
        let w = inv * inv;
        for &(i, gi) in &sparse {
            for &(j, gj) in &sparse {
                hess[(i, j)] += w * gi * gj;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Program {
    pub num_vars: usize,
    /// Maximized.
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
}

impl Program {
    pub fn new(num_vars: usize) -> Self {
        Self {
            num_vars,
            objective: vec![0.0; num_vars],
            constraints: Vec::new(),
        }
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, x)| c * x).sum()
    }

    /// Largest constraint value; negative means strictly feasible.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        self.constraints
            .iter()
            .map(|c| c.value(x))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BarrierOptions {
    /// Target for the barrier gap `m / t`.
    pub gap_tol: f64,
    pub t0: f64,
    pub mu: f64,
    pub max_newton: usize,
}

impl Default for BarrierOptions {
    fn default() -> Self {
        Self {
            gap_tol: 1e-9,
            t0: 1.0,
            mu: 20.0,
            max_newton: 200,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BarrierSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// Upper bound on `optimum - objective`.
    pub gap_bound: f64,
    pub newton_steps: usize,
    pub converged: bool,
}

/// Maximizes `program` from the strictly feasible point `x0`.
pub fn maximize(program: &Program, x0: Vec<f64>, options: BarrierOptions) -> Result<BarrierSolution> {
    let n = program.num_vars;
    if x0.len() != n {
        return Err(Error::Dimension(format!("start has {} entries for {n} variables", x0.len())));
    }
    let start_violation = program.max_violation(&x0);
    if !(start_violation < 0.0) {
        return Err(Error::SolverFailure {
            residual: start_violation,
            reason: "start point is not strictly feasible".into(),
        });
    }
    let m = program.constraints.len() as f64;
    if program.constraints.is_empty() || n == 0 {
        let objective = program.objective_value(&x0);
        return Ok(BarrierSolution {
            x: x0,
            objective,
            gap_bound: 0.0,
            newton_steps: 0,
            converged: true,
        });
    }

    let c = DVector::from_column_slice(&program.objective);
    let mut x = DVector::from_vec(x0);
    let mut t = options.t0;
    let mut steps = 0;
    // Only the last centering backs the m/t gap bound.
    let converged = loop {
        let centered = center(program, &c, &mut x, t, options.max_newton, &mut steps);
        if m / t <= options.gap_tol {
            break centered;
        }
        t *= options.mu;
    };
    let x: Vec<f64> = x.iter().copied().collect();
    let objective = program.objective_value(&x);
    Ok(BarrierSolution {
        x,
        objective,
        gap_bound: m / t,
        newton_steps: steps,
        converged,
    })
}

fn barrier_value(program: &Program, c: &DVector<f64>, x: &DVector<f64>, t: f64) -> f64 {
    let xs = x.as_slice();
    let mut v = -t * c.dot(x);
    for con in &program.constraints {
        let f = con.value(xs);
        if !(f < 0.0) {
            return f64::INFINITY;
        }
        v -= (-f).ln();
    }
    v
}

/// Newton decrement below which remaining progress is treated as roundoff.
const ROUNDOFF_DECREMENT: f64 = 1e-5;

/// Damped Newton on the barrier at fixed `t`. Returns whether the Newton
/// decrement reached its tolerance.
fn center(
    program: &Program,
    c: &DVector<f64>,
    x: &mut DVector<f64>,
    t: f64,
    max_newton: usize,
    steps: &mut usize,
) -> bool {
    let n = program.num_vars;
    for _ in 0..max_newton {
        *steps += 1;
        let mut grad = -t * c.clone();
        let mut hess = DMatrix::<f64>::zeros(n, n);
        let xs = x.as_slice().to_vec();
        for con in &program.constraints {
            let f = con.value(&xs);
            con.accumulate(&xs, f, &mut grad, &mut hess);
        }
        let Some(dx) = newton_direction(&hess, &grad) else {
            return false;
        };
        let decrement = -grad.dot(&dx);
        if decrement / 2.0 <= 1e-10 {
            return true;
        }
        let current = barrier_value(program, c, x, t);
        let slope = grad.dot(&dx);
        let mut step = 1.0;
        loop {
            let trial = &*x + step * &dx;
            let value = barrier_value(program, c, &trial, t);
            if value.is_finite() && value <= current + 0.01 * step * slope {
                *x = trial;
                // Near the center a full step is always accepted and gains
                // about decrement/2 in exact arithmetic; anything else there
                // means roundoff dominates.
                let stalled = step < 1.0 || current - value <= 1e-13 * current.abs().max(1.0);
                if stalled && decrement < ROUNDOFF_DECREMENT {
                    return true;
                }
                break;
            }
            step *= 0.5;
            if step < 1e-16 {
                // No progress possible at this precision; treat as centered.
                return decrement < ROUNDOFF_DECREMENT;
            }
        }
    }
    false
}

fn newton_direction(hess: &DMatrix<f64>, grad: &DVector<f64>) -> Option<DVector<f64>> {
    let n = hess.nrows();
    let scale = (0..n).map(|i| hess[(i, i)].abs()).fold(0.0, f64::max).max(1e-300);
    let mut ridge = 0.0;
    for _ in 0..12 {
        let mut h = hess.clone();
        if ridge > 0.0 {
            for i in 0..n {
                h[(i, i)] += ridge;
            }
        }
        if let Some(chol) = h.cholesky() {
            return Some(-chol.solve(grad));
        }
        ridge = if ridge == 0.0 { 1e-14 * scale } else { ridge * 100.0 };
    }
    None
}
