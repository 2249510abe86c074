use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tieralloc::distributed::{run_algorithm2, write_trace_csv, DistributedOptions};
use tieralloc::harness::{self, realization, ExperimentConfig};
use tieralloc::macrocell::{assignment_objective, bisect_ith, brute_force_max_interference, solve_proposed};
use tieralloc::model::ScenarioConfig;
use tieralloc::smallcell::{
    check_feasible, objective_value, solve_convex_relaxation, solve_minlp_exact, EXACT_GUARD,
};
use tieralloc::{ChannelGains, MacroAllocation, Scenario};

#[derive(Parser)]
#[command(name = "tieralloc", version, about = "Two-tier OFDMA sub-channel, power and admission allocation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum MacroChoice {
    Proposed,
    Traditional,
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverChoice {
    Exact,
    Convex,
    Distributed,
}

#[derive(clap::Args)]
struct ScenarioArgs {
    /// Scenario TOML file; built-in defaults if omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed for positions and gains; overrides `rng_seed` in the file.
    #[arg(long)]
    seed: Option<u64>,
    /// Macro allocation method.
    #[arg(long, value_enum, default_value = "proposed")]
    method: MacroChoice,
    /// Bisection power tolerance in W for the traditional method.
    #[arg(long, default_value_t = 1e-3)]
    delta: f64,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the macro tier for one realization and print the allocation.
    Macro {
        #[command(flatten)]
        scenario: ScenarioArgs,
    },
    /// Solve both tiers for one realization and print the small-cell allocation.
    Smallcell {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, value_enum, default_value = "convex")]
        solver: SolverChoice,
        /// Relative duality gap at which the distributed solver stops.
        #[arg(long, default_value_t = 1e-2)]
        gap_tol: f64,
        /// Iteration cap of the distributed solver.
        #[arg(long, default_value_t = 200)]
        l_max: usize,
        /// Write the distributed solver's iteration trace to this CSV file.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Run a Monte-Carlo sweep and write summary and raw CSV files.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the configured base seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the configured number of realizations.
        #[arg(long)]
        realizations: Option<usize>,
        #[arg(long)]
        gap_tol: Option<f64>,
        #[arg(long)]
        l_max: Option<usize>,
    },
    /// Cross-check the solvers against brute force on small random instances.
    Oracle {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        realizations: usize,
    },
}

fn load(args: &ScenarioArgs) -> anyhow::Result<(Scenario, ChannelGains)> {
    let mut config = match &args.config {
        Some(path) => ScenarioConfig::from_toml_file(path)?,
        None => ScenarioConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.rng_seed = seed;
    }
    Ok(realization(&config, config.rng_seed)?)
}

fn macro_solve(args: &ScenarioArgs, scenario: &Scenario, gains: &ChannelGains) -> anyhow::Result<MacroAllocation> {
    Ok(match args.method {
        MacroChoice::Proposed => solve_proposed(gains, scenario)?,
        MacroChoice::Traditional => {
            let b = bisect_ith(gains, scenario, 0.0, 1e-9, args.delta)?;
            eprintln!("threshold {:.6e} W after {} bisections", b.i_th, b.iterations);
            b.allocation
        }
    })
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Macro { scenario: args } => {
            let (scenario, gains) = load(&args)?;
            let alloc = macro_solve(&args, &scenario, &gains)?;
            eprintln!(
                "{} MUEs on {} sub-channels, total power {:.4} W, finite tolerable sum {:.6e} W",
                alloc.num_mues(),
                alloc.num_channels(),
                alloc.total_power(),
                alloc.finite_tolerable_sum()
            );
            alloc.write_csv(io::stdout().lock())?;
        }
        Command::Smallcell {
            scenario: args,
            solver,
            gap_tol,
            l_max,
            trace,
        } => {
            let (scenario, gains) = load(&args)?;
            let macro_alloc = macro_solve(&args, &scenario, &gains)?;
            let alloc = match solver {
                SolverChoice::Exact => solve_minlp_exact(&macro_alloc, &gains, &scenario)?,
                SolverChoice::Convex => {
                    let sol = solve_convex_relaxation(&macro_alloc, &gains, &scenario)?;
                    if !sol.converged {
                        eprintln!("warning: relaxation stopped with gap bound {:.3e}", sol.gap_bound);
                    }
                    sol.allocation
                }
                SolverChoice::Distributed => {
                    let options = DistributedOptions {
                        l_max,
                        gap_tol,
                        ..Default::default()
                    };
                    let sol = run_algorithm2(&macro_alloc, &gains, &scenario, &options)?;
                    eprintln!(
                        "{:?} after {} iterations, upper bound {:.6}",
                        sol.termination, sol.iterations, sol.upper_bound
                    );
                    if let Some(path) = trace {
                        let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
                        write_trace_csv(&sol.trace, BufWriter::new(file))?;
                    }
                    sol.allocation
                }
            };
            let report = check_feasible(&alloc, &macro_alloc, &gains, &scenario);
            eprintln!(
                "objective {:.6}, admitted {:.2}%, channel usage {:.2}%, {} violations",
                objective_value(&alloc, scenario.epsilon),
                harness::metric_admitted(&alloc, &scenario),
                harness::metric_channel_usage(&alloc, &scenario),
                report.violations.len()
            );
            alloc.write_csv(io::stdout().lock())?;
        }
        Command::Experiment {
            config,
            out,
            seed,
            realizations,
            gap_tol,
            l_max,
        } => {
            let mut exp = ExperimentConfig::from_toml_file(&config)?;
            if let Some(s) = seed {
                exp.base_seed = s;
            }
            if let Some(r) = realizations {
                exp.realizations = r;
            }
            if let Some(g) = gap_tol {
                exp.gap_tol = g;
            }
            if let Some(l) = l_max {
                exp.l_max = l;
            }
            std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            let result = harness::run_experiment(&exp)?;
            let path = out.join(format!("{}.csv", exp.name));
            harness::write_csv(&result, &path)?;
            for f in &result.failures {
                eprintln!(
                    "failed: {}={} realization {} {}: {}",
                    exp.sweep.variable.name(),
                    f.sweep_value,
                    f.realization,
                    f.solver,
                    f.message
                );
            }
            println!("{}", path.display());
        }
        Command::Oracle { seed, realizations } => oracle(seed, realizations)?,
    }
    Ok(())
}

/// Brute-force cross-checks on small random instances.
fn oracle(seed: u64, realizations: usize) -> anyhow::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = io::stdout().lock();
    let mut failures = 0;
    for r in 0..realizations {
        let config = ScenarioConfig {
            num_mues: rng.random_range(1..=3),
            num_channels: 3,
            sues_per_cell: 2,
            rate_sue: rng.random_range(1.0..8.0),
            rng_seed: rng.random(),
            ..Default::default()
        };
        let (scenario, gains) = realization(&config, config.rng_seed)?;
        let macro_alloc = solve_proposed(&gains, &scenario)?;
        let assigned = macro_alloc.finite_tolerable_sum();
        let (brute, _) = brute_force_max_interference(&gains, &scenario, scenario.num_channels)?;
        let macro_ok = (assigned - brute).abs() <= 1e-9 * brute.abs().max(f64::MIN_POSITIVE);

        let size = scenario.num_cells() * scenario.num_sues() * scenario.num_channels;
        if size > EXACT_GUARD {
            bail!("oracle instance too large: {size}");
        }
        let exact = solve_minlp_exact(&macro_alloc, &gains, &scenario)?;
        let relaxed = solve_convex_relaxation(&macro_alloc, &gains, &scenario)?;
        let exact_obj = objective_value(&exact, scenario.epsilon);
        let bound_ok = relaxed.objective >= exact_obj - 1e-8;
        let feasible = check_feasible(&exact, &macro_alloc, &gains, &scenario).is_feasible();
        let ok = macro_ok && bound_ok && feasible;
        failures += usize::from(!ok);
        writeln!(
            out,
            "{} instance {r}: macro {:.6e} vs brute {:.6e} (gain sum {:.6e}), exact {:.6} <= relaxed {:.6}{}",
            if ok { "ok  " } else { "FAIL" },
            assigned,
            brute,
            assignment_objective(&macro_alloc, &gains),
            exact_obj,
            relaxed.objective,
            if feasible { "" } else { ", exact solution infeasible" }
        )?;
    }
    if failures > 0 {
        bail!("{failures} of {realizations} instances failed");
    }
    Ok(())
}
