//! Macrocell tier: sub-channel and power allocation for the MUEs.
//!
//! Two schemes are provided:
//!
//! * [`solve_proposed`] maximizes the summed tolerable interference. At the
//!   optimum every MUE meets its rate with equality on exactly one
//!   sub-channel, the one with the best gain it can get, so the search
//!   collapses to a max-gain assignment with equal power `P_B,max / M`.
//! * [`solve_traditional`] minimizes the summed transmit power under a uniform
//!   tolerable level `I_th`, and [`bisect_ith`] tunes `I_th` until the whole
//!   power budget is used.
//!
//! Sub-channels left free by the macrocell carry the `I_max` sentinel.

use std::f64::consts::LN_2;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::assignment::max_weight_assignment;
use crate::error::{Error, Result};
use crate::model::{ChannelGains, Scenario};

#[derive(Debug, Clone, PartialEq)]
pub struct MacroAllocation {
    /// `[m][n]`: sub-channel n is held by MUE m.
    pub gamma: Vec<Vec<bool>>,
    /// `[m][n]`: transmit power in W, zero where `gamma` is false.
    pub power: Vec<Vec<f64>>,
    /// `[m][n]`: tolerable interference in W, `I_max` where `gamma` is false.
    pub tolerable: Vec<Vec<f64>>,
    /// Number of allocated sub-channels.
    pub n_ac: usize,
}

impl MacroAllocation {
    /// Allocation holding no sub-channel at all.
    pub fn empty(num_mues: usize, num_channels: usize, i_max: f64) -> Self {
        Self {
            gamma: vec![vec![false; num_channels]; num_mues],
            power: vec![vec![0.0; num_channels]; num_mues],
            tolerable: vec![vec![i_max; num_channels]; num_mues],
            n_ac: 0,
        }
    }

    pub fn num_mues(&self) -> usize {
        self.gamma.len()
    }

    pub fn num_channels(&self) -> usize {
        self.gamma.first().map_or(0, Vec::len)
    }

    /// MUE holding sub-channel `n`, if any.
    pub fn owner(&self, n: usize) -> Option<usize> {
        self.gamma.iter().position(|row| row[n])
    }

    /// Owner of every sub-channel.
    pub fn owners(&self) -> Vec<Option<usize>> {
        (0..self.num_channels()).map(|n| self.owner(n)).collect()
    }

    pub fn channels_of(&self, m: usize) -> Vec<usize> {
        (0..self.num_channels()).filter(|&n| self.gamma[m][n]).collect()
    }

    /// Tolerable level the small-cell tier must respect on `n`, if constrained.
    pub fn threshold(&self, n: usize) -> Option<f64> {
        self.owner(n).map(|m| self.tolerable[m][n])
    }

    pub fn total_power(&self) -> f64 {
        self.power.iter().flatten().sum()
    }

    /// Sum of the tolerable levels on allocated sub-channels (sentinels excluded).
    pub fn finite_tolerable_sum(&self) -> f64 {
        self.gamma
            .iter()
            .zip(&self.tolerable)
            .flat_map(|(g, t)| g.iter().zip(t))
            .filter(|(&g, _)| g)
            .map(|(_, &t)| t)
            .sum()
    }

    /// Rate of MUE `m` in bps/Hz when every held sub-channel sees exactly its
    /// tolerable interference.
    pub fn achieved_rate(&self, m: usize, gains: &ChannelGains, noise: f64) -> f64 {
        self.channels_of(m)
            .into_iter()
            .map(|n| (1.0 + self.power[m][n] * gains.macro_mue[m][n] / (self.tolerable[m][n] + noise)).log2())
            .sum()
    }

    /// Macro interference received by SUE `f` of cell `s` on sub-channel `n`.
    pub fn interference_at_sue(&self, gains: &ChannelGains, s: usize, f: usize, n: usize) -> f64 {
        match self.owner(n) {
            Some(m) => self.power[m][n] * gains.macro_sue[s][f][n],
            None => 0.0,
        }
    }

    /// Writes `m,n,gamma,power_W,tolerable_W` rows.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for m in 0..self.num_mues() {
            for n in 0..self.num_channels() {
                w.serialize(MacroRow {
                    m,
                    n,
                    gamma: u8::from(self.gamma[m][n]),
                    power_w: self.power[m][n],
                    tolerable_w: self.tolerable[m][n],
                })?;
            }
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rows = Vec::new();
        for row in csv::Reader::from_reader(reader).deserialize() {
            let row: MacroRow = row?;
            rows.push(row);
        }
        let mues = rows.iter().map(|r| r.m + 1).max().unwrap_or(0);
        let channels = rows.iter().map(|r| r.n + 1).max().unwrap_or(0);
        if rows.len() != mues * channels {
            return Err(Error::Dimension(format!(
                "{} rows do not form a {mues} x {channels} allocation",
                rows.len()
            )));
        }
        let mut alloc = MacroAllocation::empty(mues, channels, 0.0);
        for r in rows {
            alloc.gamma[r.m][r.n] = r.gamma != 0;
            alloc.power[r.m][r.n] = r.power_w;
            alloc.tolerable[r.m][r.n] = r.tolerable_w;
        }
        alloc.n_ac = alloc.gamma.iter().flatten().filter(|&&g| g).count();
        Ok(alloc)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct MacroRow {
    m: usize,
    n: usize,
    gamma: u8,
    #[serde(rename = "power_W")]
    power_w: f64,
    #[serde(rename = "tolerable_W")]
    tolerable_w: f64,
}

/// Largest interference at which a single sub-channel still carries `rate`
/// bps/Hz: `P g / (2^R - 1) - N_o`, capped at `i_max`.
///
/// Fails when the rate is out of reach even without interference.
pub fn tolerable_interference(power: f64, gain: f64, rate: f64, noise: f64, i_max: f64) -> Result<f64> {
    let level = power * gain / (rate.exp2() - 1.0) - noise;
    if level < -1e-12 * noise {
        return Err(Error::Infeasible(format!(
            "rate {rate} needs SNR {} but P g / N_o = {}",
            rate.exp2() - 1.0,
            power * gain / noise
        )));
    }
    Ok(level.clamp(0.0, i_max))
}

fn check_dims(gains: &ChannelGains, scenario: &Scenario) -> Result<()> {
    let n = scenario.num_channels;
    if gains.macro_mue.len() != scenario.num_mues() || gains.macro_mue.iter().any(|r| r.len() != n) {
        return Err(Error::Dimension("macro-MUE gains must be M x N".into()));
    }
    Ok(())
}

/// Maximum-tolerable-interference allocation.
pub fn solve_proposed(gains: &ChannelGains, scenario: &Scenario) -> Result<MacroAllocation> {
    check_dims(gains, scenario)?;
    let (mues, channels) = (scenario.num_mues(), scenario.num_channels);
    if mues > channels {
        return Err(Error::Dimension(format!("{mues} MUEs but only {channels} sub-channels")));
    }
    let mut alloc = MacroAllocation::empty(mues, channels, scenario.i_max);
    if mues == 0 {
        return Ok(alloc);
    }
    let chosen = max_weight_assignment(&gains.macro_mue)?;
    let power = scenario.p_macro_max / mues as f64;
    for (m, &n) in chosen.iter().enumerate() {
        let level = tolerable_interference(power, gains.macro_mue[m][n], scenario.rate_mue, scenario.noise, scenario.i_max)
            .map_err(|_| Error::InfeasibleChannel { mue: m, channel: n })?;
        alloc.gamma[m][n] = true;
        alloc.power[m][n] = power;
        alloc.tolerable[m][n] = level;
    }
    alloc.n_ac = mues;
    Ok(alloc)
}

/// Objective of the assignment form: summed gains of the held sub-channels.
pub fn assignment_objective(alloc: &MacroAllocation, gains: &ChannelGains) -> f64 {
    (0..alloc.num_mues())
        .flat_map(|m| alloc.channels_of(m).into_iter().map(move |n| (m, n)))
        .map(|(m, n)| gains.macro_mue[m][n])
        .sum()
}

/// Exhaustive search over sub-channel partitions and per-MUE rate splits for
/// the max-summed-tolerable-interference problem.
///
/// Each MUE holds between one and `max_channels_per_mue` sub-channels with a
/// finite level; all others count as `I_max`. Power is split equally over the
/// allocated sub-channels. Candidates are ranked first by the number of
/// `I_max` terms, then by the finite sum, which is what an `I_max`-dominated
/// objective reduces to. Returns the finite sum and the allocation.
///
/// Only meant as a cross-check; limited to `N <= 8`, `M <= 4`.
pub fn brute_force_max_interference(
    gains: &ChannelGains,
    scenario: &Scenario,
    max_channels_per_mue: usize,
) -> Result<(f64, MacroAllocation)> {
    check_dims(gains, scenario)?;
    let (mues, channels) = (scenario.num_mues(), scenario.num_channels);
    if channels > 8 || mues > 4 {
        return Err(Error::SizeLimit(format!("M = {mues}, N = {channels}; limit is M <= 4, N <= 8")));
    }
    if mues > channels {
        return Err(Error::Dimension(format!("{mues} MUEs but only {channels} sub-channels")));
    }
    if max_channels_per_mue == 0 {
        return Err(Error::Dimension("each MUE needs at least one sub-channel".into()));
    }
    let mut best: Option<(usize, f64, MacroAllocation)> = None;
    let mut holder = vec![None::<usize>; channels];
    enumerate_partitions(0, &mut holder, mues, max_channels_per_mue, &mut |holder| {
        if let Some((free, sum, alloc)) = evaluate_partition(holder, gains, scenario) {
            let better = match &best {
                None => true,
                Some((bf, bs, _)) => free > *bf || (free == *bf && sum > *bs),
            };
            if better {
                best = Some((free, sum, alloc));
            }
        }
    });
    match best {
        Some((_, sum, alloc)) => Ok((sum, alloc)),
        None if mues == 0 => Ok((0.0, MacroAllocation::empty(0, channels, scenario.i_max))),
        None => Err(Error::Infeasible("no partition meets every MUE rate".into())),
    }
}

fn enumerate_partitions(
    n: usize,
    holder: &mut Vec<Option<usize>>,
    mues: usize,
    cap: usize,
    visit: &mut dyn FnMut(&[Option<usize>]),
) {
    if n == holder.len() {
        let mut counts = vec![0usize; mues];
        for m in holder.iter().flatten() {
            counts[*m] += 1;
        }
        if counts.iter().all(|&c| c >= 1) {
            visit(holder);
        }
        return;
    }
    for choice in std::iter::once(None).chain((0..mues).map(Some)) {
        if let Some(m) = choice {
            if holder[..n].iter().filter(|h| **h == Some(m)).count() >= cap {
                continue;
            }
        }
        holder[n] = choice;
        enumerate_partitions(n + 1, holder, mues, cap, visit);
    }
    holder[n] = None;
}

const SPLIT_GRID: usize = 12;

fn evaluate_partition(
    holder: &[Option<usize>],
    gains: &ChannelGains,
    scenario: &Scenario,
) -> Option<(usize, f64, MacroAllocation)> {
    let channels = holder.len();
    let n_ac = holder.iter().flatten().count();
    let power = scenario.p_macro_max / n_ac as f64;
    let mut alloc = MacroAllocation::empty(scenario.num_mues(), channels, scenario.i_max);
    let mut finite_sum = 0.0;
    for m in 0..scenario.num_mues() {
        let set: Vec<usize> = (0..channels).filter(|&n| holder[n] == Some(m)).collect();
        let g: Vec<f64> = set.iter().map(|&n| gains.macro_mue[m][n]).collect();
        let mut best: Option<(f64, Vec<f64>)> = None;
        for split in rate_splits(set.len(), SPLIT_GRID) {
            let levels: Option<Vec<f64>> = split
                .iter()
                .zip(&g)
                .map(|(&w, &gn)| {
                    let r = scenario.rate_mue * w;
                    let level = power * gn / (r.exp2() - 1.0) - scenario.noise;
                    (level >= 0.0 && level < scenario.i_max).then_some(level)
                })
                .collect();
            if let Some(levels) = levels {
                let sum: f64 = levels.iter().sum();
                if best.as_ref().is_none_or(|(b, _)| sum > *b) {
                    best = Some((sum, levels));
                }
            }
        }
        let (sum, levels) = best?;
        finite_sum += sum;
        for (&n, level) in set.iter().zip(levels) {
            alloc.gamma[m][n] = true;
            alloc.power[m][n] = power;
            alloc.tolerable[m][n] = level;
        }
    }
    alloc.n_ac = n_ac;
    Some((channels - n_ac, finite_sum, alloc))
}

/// Strictly positive rate fractions on a grid of step `1/grid`, summing to one.
fn rate_splits(parts: usize, grid: usize) -> Vec<Vec<f64>> {
    fn rec(left: usize, parts: usize, acc: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if parts == 1 {
            acc.push(left);
            out.push(acc.clone());
            acc.pop();
            return;
        }
        for take in 1..=left.saturating_sub(parts - 1) {
            acc.push(take);
            rec(left - take, parts - 1, acc, out);
            acc.pop();
        }
    }
    if parts == 0 {
        return Vec::new();
    }
    let mut out = Vec::new();
    rec(grid.max(parts), parts, &mut Vec::new(), &mut out);
    let total = grid.max(parts) as f64;
    out.into_iter()
        .map(|w| w.into_iter().map(|x| x as f64 / total).collect())
        .collect()
}

/// Power cap per MUE beyond which the baseline declares the rate unreachable,
/// as a multiple of `P_B,max`.
pub const TRADITIONAL_POWER_CAP: f64 = 10.0;

const MAX_SWEEPS: usize = 500;

/// Min-sum-power allocation with uniform tolerable level `i_th`.
///
/// Solved in the dual domain on the normalized problem (interference plus
/// noise scaled to one): each MUE carries a rate price, every sub-channel goes
/// to the MUE with the largest priced water-filling value, and prices are
/// raised MUE by MUE by bisection until every rate is met. The sub-channel
/// sets found this way are then water-filled exactly so each rate holds with
/// equality. Since the normalized problem does not depend on `i_th`, powers
/// scale linearly with `i_th + N_o`.
pub fn solve_traditional(gains: &ChannelGains, scenario: &Scenario, i_th: f64) -> Result<MacroAllocation> {
    check_dims(gains, scenario)?;
    if !(i_th >= 0.0 && i_th.is_finite()) {
        return Err(Error::Infeasible(format!("threshold must be non-negative, got {i_th}")));
    }
    let plan = TraditionalPlan::new(gains, scenario)?;
    plan.allocation(scenario, i_th)
}

/// Channel sets and normalized powers of the baseline, independent of `I_th`.
#[derive(Debug, Clone)]
pub struct TraditionalPlan {
    /// `[m][n]` normalized power; actual power is `q * (I_th + N_o) / scale`.
    q: Vec<Vec<f64>>,
    scale: f64,
}

impl TraditionalPlan {
    pub fn new(gains: &ChannelGains, scenario: &Scenario) -> Result<Self> {
        let (mues, channels) = (scenario.num_mues(), scenario.num_channels);
        if mues > channels {
            return Err(Error::Dimension(format!("{mues} MUEs but only {channels} sub-channels")));
        }
        let scale = gains.macro_mue.iter().flatten().cloned().fold(0.0, f64::max);
        if mues == 0 {
            return Ok(Self { q: Vec::new(), scale: 1.0 });
        }
        let a: Vec<Vec<f64>> = gains
            .macro_mue
            .iter()
            .map(|row| row.iter().map(|g| g / scale).collect())
            .collect();
        let rate = scenario.rate_mue;

        let mut price = vec![0.0; mues];
        for _ in 0..MAX_SWEEPS {
            let mut changed = false;
            for m in 0..mues {
                if priced_rate(&a, &price, m) >= rate {
                    continue;
                }
                let mut lo = price[m];
                let mut hi = lo.max(1.0);
                let mut grow = 0;
                loop {
                    price[m] = hi;
                    if priced_rate(&a, &price, m) >= rate {
                        break;
                    }
                    lo = hi;
                    hi *= 2.0;
                    grow += 1;
                    if grow > 2000 {
                        return Err(Error::Infeasible(format!("MUE {m} cannot reach its rate")));
                    }
                }
                while hi - lo > 1e-12 * hi {
                    let mid = 0.5 * (lo + hi);
                    price[m] = mid;
                    if priced_rate(&a, &price, m) >= rate {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                price[m] = hi;
                changed = true;
            }
            if !changed {
                break;
            }
        }

        let owners = channel_owners(&a, &price);
        let mut sets: Vec<Vec<usize>> = vec![Vec::new(); mues];
        for (n, o) in owners.iter().enumerate() {
            if let Some(m) = o {
                sets[*m].push(n);
            }
        }
        // A price jump can leave an MUE empty-handed; hand it the best free
        // sub-channel, or failing that one from the MUE holding the most.
        for m in 0..mues {
            if !sets[m].is_empty() {
                continue;
            }
            let free: Vec<usize> = (0..channels).filter(|n| sets.iter().all(|s| !s.contains(n))).collect();
            let pick = if let Some(&n) = free.iter().max_by(|&&x, &&y| a[m][x].total_cmp(&a[m][y])) {
                n
            } else {
                let donor = (0..mues).max_by_key(|&k| sets[k].len()).expect("non-empty");
                if sets[donor].len() < 2 {
                    return Err(Error::Infeasible(format!("MUE {m} left without a sub-channel")));
                }
                let pos = (0..sets[donor].len())
                    .max_by(|&x, &y| a[m][sets[donor][x]].total_cmp(&a[m][sets[donor][y]]))
                    .expect("non-empty");
                sets[donor].remove(pos)
            };
            sets[m].push(pick);
        }

        let mut q = vec![vec![0.0; channels]; mues];
        for (m, set) in sets.iter().enumerate() {
            let levels = water_fill(&set.iter().map(|&n| a[m][n]).collect::<Vec<_>>(), rate);
            for (&n, level) in set.iter().zip(levels) {
                q[m][n] = level;
            }
        }

        // Rate out of reach within the cap on the full band, at zero threshold.
        for m in 0..mues {
            let all = water_fill(&a[m], rate).into_iter().sum::<f64>();
            if all * scenario.noise / scale > TRADITIONAL_POWER_CAP * scenario.p_macro_max {
                return Err(Error::Infeasible(format!("MUE {m} exceeds the power cap on the full band")));
            }
        }
        Ok(Self { q, scale })
    }

    /// Total power at threshold `i_th`.
    pub fn total_power(&self, scenario: &Scenario, i_th: f64) -> f64 {
        let level = (i_th + scenario.noise) / self.scale;
        self.q.iter().flatten().map(|q| q * level).sum()
    }

    pub fn allocation(&self, scenario: &Scenario, i_th: f64) -> Result<MacroAllocation> {
        let mues = self.q.len();
        let mut alloc = MacroAllocation::empty(mues, scenario.num_channels, scenario.i_max);
        let level = (i_th + scenario.noise) / self.scale;
        for m in 0..mues {
            let mut own = 0.0;
            for n in 0..scenario.num_channels {
                if self.q[m][n] > 0.0 {
                    alloc.gamma[m][n] = true;
                    alloc.power[m][n] = self.q[m][n] * level;
                    alloc.tolerable[m][n] = i_th.min(scenario.i_max);
                    own += alloc.power[m][n];
                }
            }
            if own > TRADITIONAL_POWER_CAP * scenario.p_macro_max {
                return Err(Error::Infeasible(format!(
                    "MUE {m} needs {own} W at threshold {i_th}, above the cap"
                )));
            }
        }
        alloc.n_ac = alloc.gamma.iter().flatten().filter(|&&g| g).count();
        Ok(alloc)
    }
}

/// Priced water-filling value and power of MUE `m` on a normalized gain `a`.
fn priced_value(price: f64, a: f64) -> (f64, f64) {
    let q = (price / LN_2 - 1.0 / a).max(0.0);
    (price * (1.0 + q * a).log2() - q, q)
}

fn channel_owners(a: &[Vec<f64>], price: &[f64]) -> Vec<Option<usize>> {
    let channels = a[0].len();
    (0..channels)
        .map(|n| {
            let mut best: Option<(usize, f64)> = None;
            for (m, &p) in price.iter().enumerate() {
                let (v, q) = priced_value(p, a[m][n]);
                if q > 0.0 && v > 0.0 && best.is_none_or(|(_, bv)| v > bv) {
                    best = Some((m, v));
                }
            }
            best.map(|(m, _)| m)
        })
        .collect()
}

fn priced_rate(a: &[Vec<f64>], price: &[f64], m: usize) -> f64 {
    channel_owners(a, price)
        .iter()
        .enumerate()
        .filter(|(_, o)| **o == Some(m))
        .map(|(n, _)| {
            let (_, q) = priced_value(price[m], a[m][n]);
            (1.0 + q * a[m][n]).log2()
        })
        .sum()
}

/// Minimum-power levels meeting `sum log2(1 + q_n a_n) = rate` on the given
/// normalized gains. Unused entries come back as zero.
pub fn water_fill(a: &[f64], rate: f64) -> Vec<f64> {
    if a.is_empty() {
        return Vec::new();
    }
    let mut order: Vec<usize> = (0..a.len()).collect();
    order.sort_by(|&x, &y| a[y].total_cmp(&a[x]));
    let mut log_sum = 0.0;
    let mut water = 0.0;
    let mut active = 0;
    for (k, &idx) in order.iter().enumerate() {
        log_sum += a[idx].log2();
        // log2(w) = (rate - sum log2 a) / k
        let w = ((rate - log_sum) / (k + 1) as f64).exp2();
        if w <= 1.0 / a[idx] {
            break;
        }
        water = w;
        active = k + 1;
        let next_ok = order.get(k + 1).is_none_or(|&nx| w <= 1.0 / a[nx]);
        if next_ok {
            break;
        }
    }
    let mut q = vec![0.0; a.len()];
    for &idx in &order[..active] {
        q[idx] = (water - 1.0 / a[idx]).max(0.0);
    }
    q
}

/// Outcome of the threshold bisection.
#[derive(Debug, Clone)]
pub struct Bisection {
    pub i_th: f64,
    pub allocation: MacroAllocation,
    pub iterations: usize,
}

const MAX_BRACKET_DOUBLINGS: usize = 20;
const MAX_BISECTIONS: usize = 500;

/// Finds the uniform threshold at which the baseline spends the full budget.
///
/// Total power grows with the threshold, so the bracket needs the budget
/// exceeded at `hi` and not reached at `lo`; `hi` is doubled up to 20 times
/// to find such a bracket.
pub fn bisect_ith(gains: &ChannelGains, scenario: &Scenario, lo: f64, hi: f64, delta: f64) -> Result<Bisection> {
    check_dims(gains, scenario)?;
    if !(hi > lo && lo >= 0.0 && delta > 0.0) {
        return Err(Error::BracketFailure(format!("need hi > lo >= 0 and delta > 0, got [{lo}, {hi}], {delta}")));
    }
    let plan = TraditionalPlan::new(gains, scenario)?;
    let budget = scenario.p_macro_max;
    let excess = |i_th: f64| plan.total_power(scenario, i_th) - budget;

    let (mut lo, mut hi) = (lo, hi);
    if excess(lo) > delta {
        return Err(Error::BracketFailure(format!("budget already exceeded at I_th = {lo}")));
    }
    let mut doublings = 0;
    while excess(hi) < 0.0 {
        if doublings == MAX_BRACKET_DOUBLINGS {
            return Err(Error::BracketFailure(format!("budget not reached at I_th = {hi}")));
        }
        hi *= 2.0;
        doublings += 1;
    }

    let mut iterations = 0;
    let mut mid = if excess(lo).abs() <= delta { lo } else { 0.5 * (lo + hi) };
    while excess(mid).abs() > delta {
        if iterations == MAX_BISECTIONS {
            return Err(Error::BracketFailure("bisection did not reach the tolerance".into()));
        }
        iterations += 1;
        if excess(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        mid = 0.5 * (lo + hi);
    }
    let allocation = plan.allocation(scenario, mid)?;
    Ok(Bisection {
        i_th: mid,
        allocation,
        iterations,
    })
}
