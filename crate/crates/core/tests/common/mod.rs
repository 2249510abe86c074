//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use rand::Rng;
use tieralloc::model::{realize_gains, ScenarioConfig};
use tieralloc::smallcell::{pattern_min_power, Pattern};
use tieralloc::{ChannelGains, MacroAllocation, Scenario};

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Scenario and gains drawn from one seed.
pub fn draw(config: &ScenarioConfig, seed: u64) -> (Scenario, ChannelGains) {
    let mut r = rng(seed);
    let scenario = config.build_with(&mut r).expect("valid scenario");
    let gains = realize_gains(&scenario, &mut r);
    (scenario, gains)
}

/// Two cells at (+-10, -100) with three sub-channels and two SUEs each.
pub fn desk_config() -> ScenarioConfig {
    ScenarioConfig {
        small_cell_positions: vec![[-10.0, -100.0], [10.0, -100.0]],
        num_mues: 3,
        sues_per_cell: 2,
        num_channels: 3,
        rate_sue: 5.0,
        rate_mue: 5.0,
        ..Default::default()
    }
}

/// Desk-scale instance with randomized rates and MUE count.
pub fn random_desk(seed: u64) -> (Scenario, ChannelGains) {
    let mut r = rng(seed ^ 0xD35C);
    let config = ScenarioConfig {
        num_mues: r.random_range(1..=3),
        rate_mue: r.random_range(1.0..7.0),
        rate_sue: r.random_range(1.0..9.0),
        ..desk_config()
    };
    draw(&config, seed)
}

/// Maximum summed gain over injective MUE-to-channel maps, summing in MUE order.
pub fn brute_force_assignment(gains: &[Vec<f64>]) -> f64 {
    fn rec(m: usize, gains: &[Vec<f64>], used: &mut Vec<bool>, acc: f64, best: &mut f64) {
        if m == gains.len() {
            if acc > *best {
                *best = acc;
            }
            return;
        }
        for n in 0..used.len() {
            if !used[n] {
                used[n] = true;
                rec(m + 1, gains, used, acc + gains[m][n], best);
                used[n] = false;
            }
        }
    }
    if gains.is_empty() {
        return 0.0;
    }
    let mut best = f64::NEG_INFINITY;
    rec(0, gains, &mut vec![false; gains[0].len()], 0.0, &mut best);
    best
}

/// Minimum total power meeting `rate` over sub-channels with SNR-per-W `a`
/// and per-sub-channel power caps, or `None` if the caps make it unreachable.
pub fn capped_min_power(a: &[f64], caps: &[f64], rate: f64) -> Option<f64> {
    let rate_at = |w: f64| -> (f64, f64) {
        let mut r = 0.0;
        let mut p = 0.0;
        for (&ai, &ci) in a.iter().zip(caps) {
            let pi = (w - 1.0 / ai).clamp(0.0, ci);
            r += (1.0 + ai * pi).log2();
            p += pi;
        }
        (r, p)
    };
    let top: f64 = a
        .iter()
        .zip(caps)
        .map(|(&ai, &ci)| if ci.is_finite() { (1.0 + ai * ci).log2() } else { f64::INFINITY })
        .sum();
    if top < rate {
        return None;
    }
    let mut hi = a.iter().map(|&ai| 1.0 / ai).fold(0.0, f64::max).max(1e-30);
    while rate_at(hi).0 < rate {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if rate_at(mid).0 < rate {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(rate_at(hi).1)
}

fn sue_snr_per_watt(gains: &ChannelGains, macro_alloc: &MacroAllocation, sc: &Scenario, s: usize, f: usize, n: usize) -> f64 {
    let interference: f64 = (0..macro_alloc.num_mues())
        .map(|m| macro_alloc.power[m][n] * gains.macro_sue[s][f][n])
        .sum();
    gains.small_sue[s][f][n] / (interference + sc.noise)
}

fn held_by(macro_alloc: &MacroAllocation, n: usize) -> Option<usize> {
    (0..macro_alloc.num_mues()).find(|&m| macro_alloc.gamma[m][n])
}

/// Whether cell `s` serves its pattern SUEs given per-sub-channel
/// interference budgets (W at the MUE) on held sub-channels.
fn cell_feasible(
    pattern: &Pattern,
    s: usize,
    budget: &[f64],
    gains: &ChannelGains,
    macro_alloc: &MacroAllocation,
    sc: &Scenario,
) -> bool {
    let mut total = 0.0;
    for f in 0..sc.sues_in(s) {
        let set: Vec<usize> = (0..sc.num_channels).filter(|&n| pattern[s][n] == Some(f)).collect();
        if set.is_empty() {
            continue;
        }
        let a: Vec<f64> = set.iter().map(|&n| sue_snr_per_watt(gains, macro_alloc, sc, s, f, n)).collect();
        let caps: Vec<f64> = set
            .iter()
            .map(|&n| match held_by(macro_alloc, n) {
                Some(m) => budget[n] / gains.small_mue[s][m][n],
                None => f64::INFINITY,
            })
            .collect();
        match capped_min_power(&a, &caps, sc.rate_sue) {
            Some(p) => total += p,
            None => return false,
        }
    }
    total <= sc.p_small_max * (1.0 + 1e-12)
}

/// Grid search over how each shared held sub-channel's tolerable level is
/// split between two cells, with capped water-filling per SUE.
pub fn grid_feasible(pattern: &Pattern, gains: &ChannelGains, macro_alloc: &MacroAllocation, sc: &Scenario) -> bool {
    assert!(sc.num_cells() <= 2, "grid oracle handles at most two cells");
    let n_ch = sc.num_channels;
    let limit: Vec<f64> = (0..n_ch)
        .map(|n| held_by(macro_alloc, n).map_or(f64::INFINITY, |m| macro_alloc.tolerable[m][n]))
        .collect();
    let shared: Vec<usize> = (0..n_ch)
        .filter(|&n| limit[n].is_finite() && (0..sc.num_cells()).all(|s| pattern[s][n].is_some()) && sc.num_cells() == 2)
        .collect();
    // Screen: each cell alone with every budget.
    for s in 0..sc.num_cells() {
        if !cell_feasible(pattern, s, &limit, gains, macro_alloc, sc) {
            return false;
        }
    }
    if shared.is_empty() || sc.num_cells() == 1 {
        return true;
    }
    let grid = match shared.len() {
        1 => 2000,
        2 => 120,
        _ => 40,
    };
    let combos = (grid + 1usize).pow(shared.len() as u32);
    for idx in 0..combos {
        let mut b0 = limit.clone();
        let mut b1 = limit.clone();
        let mut k = idx;
        for &n in &shared {
            let theta = (k % (grid + 1)) as f64 / grid as f64;
            k /= grid + 1;
            b0[n] = limit[n] * theta;
            b1[n] = limit[n] * (1.0 - theta);
        }
        if cell_feasible(pattern, 0, &b0, gains, macro_alloc, sc) && cell_feasible(pattern, 1, &b1, gains, macro_alloc, sc) {
            return true;
        }
    }
    false
}

/// Sub-channels a small cell may use: free, or held with a positive level.
pub fn usable_channels(macro_alloc: &MacroAllocation, sc: &Scenario) -> Vec<usize> {
    (0..sc.num_channels)
        .filter(|&n| held_by(macro_alloc, n).is_none_or(|m| macro_alloc.tolerable[m][n] > 0.0))
        .collect()
}

/// All patterns over the usable sub-channels, built independently of the library.
pub fn all_patterns(macro_alloc: &MacroAllocation, sc: &Scenario) -> Vec<Pattern> {
    let usable = usable_channels(macro_alloc, sc);
    let slots: Vec<(usize, usize)> = (0..sc.num_cells()).flat_map(|s| usable.iter().map(move |&n| (s, n))).collect();
    let radix: Vec<usize> = slots.iter().map(|&(s, _)| sc.sues_in(s) + 1).collect();
    let total: usize = radix.iter().product();
    (0..total)
        .map(|mut code| {
            let mut p: Pattern = vec![vec![None; sc.num_channels]; sc.num_cells()];
            for (&(s, n), &r) in slots.iter().zip(&radix) {
                let c = code % r;
                code /= r;
                p[s][n] = if c == 0 { None } else { Some(c - 1) };
            }
            p
        })
        .collect()
}

pub fn admitted_and_channels(p: &Pattern, sc: &Scenario) -> (usize, usize) {
    let mut k = 0;
    let mut c = 0;
    for s in 0..sc.num_cells() {
        c += p[s].iter().filter(|x| x.is_some()).count();
        k += (0..sc.sues_in(s)).filter(|&f| p[s].contains(&Some(f))).count();
    }
    (k, c)
}

/// Best binary objective found by the grid oracle.
pub fn grid_exact_objective(gains: &ChannelGains, macro_alloc: &MacroAllocation, sc: &Scenario) -> f64 {
    let eps = sc.epsilon;
    let mut ranked: Vec<(f64, Pattern)> = all_patterns(macro_alloc, sc)
        .into_iter()
        .map(|p| {
            let (k, c) = admitted_and_channels(&p, sc);
            ((1.0 - eps) * k as f64 - eps * c as f64, p)
        })
        .collect();
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0));
    ranked
        .iter()
        .find(|(_, p)| grid_feasible(p, gains, macro_alloc, sc))
        .map_or(0.0, |(v, _)| *v)
}

/// Largest number of SUEs any feasible binary allocation admits. Every
/// admission set is tried with each split of the usable sub-channels among
/// its members (holding more sub-channels never hurts), and counted as
/// feasible if either the grid oracle or the pattern solver accepts it.
pub fn max_feasible_admissions(gains: &ChannelGains, macro_alloc: &MacroAllocation, sc: &Scenario) -> usize {
    let usable = usable_channels(macro_alloc, sc);
    let sues: Vec<(usize, usize)> = (0..sc.num_cells()).flat_map(|s| (0..sc.sues_in(s)).map(move |f| (s, f))).collect();
    let mut best = 0;
    for mask in 0u32..(1 << sues.len()) {
        let chosen: Vec<(usize, usize)> = sues.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, &x)| x).collect();
        if chosen.len() <= best {
            continue;
        }
        // Per cell: every usable sub-channel goes to one chosen SUE of the cell.
        let per_cell: Vec<Vec<usize>> = (0..sc.num_cells())
            .map(|s| chosen.iter().filter(|(cs, _)| *cs == s).map(|&(_, f)| f).collect())
            .collect();
        let mut options: Vec<Vec<Vec<Option<usize>>>> = Vec::new();
        let mut possible = true;
        for members in &per_cell {
            let mut rows = Vec::new();
            if members.is_empty() {
                rows.push(vec![None; sc.num_channels]);
            } else {
                let total = members.len().pow(usable.len() as u32);
                for mut code in 0..total {
                    let mut row = vec![None; sc.num_channels];
                    for &n in &usable {
                        row[n] = Some(members[code % members.len()]);
                        code /= members.len();
                    }
                    if members.iter().all(|f| row.contains(&Some(*f))) {
                        rows.push(row);
                    }
                }
            }
            possible &= !rows.is_empty();
            options.push(rows);
        }
        if !possible {
            continue;
        }
        let mut found = false;
        'outer: for r0 in &options[0] {
            let rest: Vec<&Vec<Option<usize>>> = if options.len() > 1 { options[1].iter().collect() } else { vec![r0] };
            for r1 in rest {
                let pattern: Pattern = if options.len() > 1 { vec![r0.clone(), r1.clone()] } else { vec![r0.clone()] };
                if grid_feasible(&pattern, gains, macro_alloc, sc)
                    || pattern_min_power(&pattern, macro_alloc, gains, sc).ok().flatten().is_some()
                {
                    found = true;
                    break 'outer;
                }
            }
        }
        if found {
            best = chosen.len();
        }
    }
    best
}
