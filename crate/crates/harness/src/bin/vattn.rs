use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use vattention::{read_cache, write_cache, BoundKind, GuaranteeParams, Relaxation};
use vattention_harness::ablation::ABLATION_COLUMNS;
use vattention_harness::report::write_rows;
use vattention_harness::tightness::{SUMMARY_COLUMNS, TIGHTNESS_COLUMNS};
use vattention_harness::{
    budget_ablation, emit_csv, gen_workload, random_walk_mse, run_sweep, tightness_study,
    verify_guarantee, AblationConfig, Dist, HarnessError, LshConfig, Method, Result, SweepConfig,
    TightnessConfig, VerifyConfig, WorkloadSpec,
};

#[derive(Parser)]
#[command(name = "vattn", version, about = "Verified sparse attention workbench")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum DistName {
    Zipf,
    Flat,
    Gauss,
    Outlier,
}

#[derive(Clone, Copy, ValueEnum)]
enum BoundArg {
    Clt,
    Hoeffding,
}

#[derive(Clone, Copy, ValueEnum)]
enum RelaxArg {
    Den,
    Full,
}

#[derive(clap::Args)]
struct Guarantee {
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    #[arg(long, default_value_t = 0.02)]
    fs: f64,
    #[arg(long, default_value_t = 0.02)]
    fl: f64,
    #[arg(long, default_value_t = 0.05)]
    ft: f64,
    #[arg(long, default_value_t = 0.025)]
    fb: f64,
    #[arg(long, value_enum, default_value = "clt")]
    bound: BoundArg,
    #[arg(long, value_enum, default_value = "den")]
    relaxation: RelaxArg,
    /// Merge the base sample into the dynamic sample.
    #[arg(long)]
    reuse_base: bool,
}

impl Guarantee {
    fn params(&self) -> GuaranteeParams {
        GuaranteeParams {
            bound: match self.bound {
                BoundArg::Clt => BoundKind::Clt,
                BoundArg::Hoeffding => BoundKind::Hoeffding,
            },
            relaxation: match self.relaxation {
                RelaxArg::Den => Relaxation::DenominatorOnly,
                RelaxArg::Full => Relaxation::Full,
            },
            reuse_base: self.reuse_base,
            ..GuaranteeParams::new(0.1, self.delta)
                .with_fractions(self.fs, self.fl, self.ft, self.fb)
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic cache and query batch.
    Gen {
        #[arg(long, value_enum)]
        dist: DistName,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        d: usize,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 2.0)]
        s: f64,
        #[arg(long, default_value_t = 0.1)]
        jitter: f64,
        #[arg(long, default_value_t = 8)]
        clusters: usize,
        #[arg(long, default_value_t = 0.01)]
        outlier_frac: f64,
        #[arg(long, default_value_t = 4.0)]
        outlier_gain: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate methods over an eps grid, one row per (method, eps, query).
    Sweep {
        #[arg(long)]
        cache: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        methods: Vec<String>,
        #[arg(long, value_delimiter = ',', required = true)]
        eps: Vec<f64>,
        #[command(flatten)]
        guarantee: Guarantee,
        #[arg(long, default_value_t = 8)]
        lsh_k: usize,
        #[arg(long, default_value_t = 16)]
        lsh_l: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Measure observed failure rates against the requested guarantee.
    Verify {
        #[arg(long)]
        cache: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        eps_grid: Vec<f64>,
        #[command(flatten)]
        guarantee: Guarantee,
        #[arg(long)]
        trials: usize,
        /// Also rerun each trial with exact residual statistics.
        #[arg(long)]
        oracle_stats: bool,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Oracle-top, random-sample and hybrid at fixed budgets.
    Ablate {
        #[arg(long)]
        n: usize,
        #[arg(long, value_delimiter = ',', required = true)]
        budgets: Vec<f64>,
        /// Distributions as name[:param...], e.g. zipf:2,flat:0.1
        #[arg(long, value_delimiter = ',', required = true)]
        dists: Vec<String>,
        #[arg(long, default_value_t = 64)]
        queries: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// CLT against Hoeffding budgets on synthetic populations.
    Tightness {
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        delta: f64,
        #[arg(long)]
        trials: usize,
        #[arg(long, default_value_t = 4096)]
        n_s: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Per-population summary CSV.
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Mean squared displacement of a biased random walk.
    Walk {
        #[arg(long)]
        mu: f64,
        #[arg(long)]
        sigma: f64,
        #[arg(long)]
        steps: usize,
        #[arg(long)]
        trials: usize,
        #[arg(long)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // Usage problems are validation errors; help and version are not.
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Gen {
            dist,
            n,
            d,
            m,
            seed,
            s,
            jitter,
            clusters,
            outlier_frac,
            outlier_gain,
            out,
        } => {
            let dist = match dist {
                DistName::Zipf => Dist::ZipfScores { s },
                DistName::Flat => Dist::FlatScores { jitter },
                DistName::Gauss => Dist::GaussianKeys {
                    cluster_count: clusters,
                },
                DistName::Outlier => Dist::OutlierMix {
                    outlier_frac,
                    outlier_gain,
                },
            };
            let (cache, queries) = gen_workload(&WorkloadSpec {
                dist,
                n,
                d,
                m,
                seed,
            })?;
            write_cache(&out, &cache, &queries)?;
            println!(
                "wrote {} tokens x {} dims, {} queries to {}",
                n,
                d,
                m,
                out.display()
            );
        }
        Cmd::Sweep {
            cache,
            methods,
            eps,
            guarantee,
            lsh_k,
            lsh_l,
            seed,
            out,
        } => {
            let (cache, queries) = read_cache(&cache)?;
            let methods = methods
                .iter()
                .map(|m| m.parse())
                .collect::<Result<Vec<Method>>>()?;
            let cfg = SweepConfig {
                methods,
                eps,
                params: guarantee.params(),
                lsh: LshConfig {
                    k_bits: lsh_k,
                    l_tables: lsh_l,
                },
                seed,
            };
            let rows = run_sweep(&cache, &queries, &cfg)?;
            emit_csv(&rows, &out)?;
            println!("wrote {} records to {}", rows.len(), out.display());
        }
        Cmd::Verify {
            cache,
            eps_grid,
            guarantee,
            trials,
            oracle_stats,
            seed,
            out,
        } => {
            let (cache, queries) = read_cache(&cache)?;
            let cfg = VerifyConfig {
                params: guarantee.params(),
                eps_grid,
                trials,
                seed,
                oracle_stats,
            };
            let (rows, report) = verify_guarantee(&cache, &queries, &cfg)?;
            emit_csv(&rows, &out)?;
            println!(
                "{:>8} {:>11} {:>11} {:>9} {:>9} {:>9}",
                "eps", "mean_err", "p95_err", "fail", "density", "budget"
            );
            for s in &report.per_eps {
                println!(
                    "{:>8.4} {:>11.4e} {:>11.4e} {:>9.4} {:>9.4} {:>9.1}",
                    s.eps, s.mean_err, s.p95_err, s.fail_rate, s.mean_density, s.mean_budget
                );
                if let Some(f) = s.oracle_fail_rate {
                    println!("{:>8} oracle-stats fail rate {f:.4}", "");
                }
            }
            match report.pearson_corr {
                Some(r) => println!("pearson(eps, mean_err) = {r:.4}"),
                None => println!("pearson(eps, mean_err) undefined"),
            }
        }
        Cmd::Ablate {
            n,
            budgets,
            dists,
            queries,
            seed,
            out,
        } => {
            let dists = dists
                .iter()
                .map(|d| d.parse())
                .collect::<Result<Vec<Dist>>>()?;
            let cfg = AblationConfig {
                queries,
                ..AblationConfig::new(n, budgets, dists, seed)
            };
            let rows = budget_ablation(&cfg)?;
            write_rows(&ABLATION_COLUMNS, &rows, create(&out)?)?;
            for r in &rows {
                println!(
                    "{:<16} {:>6.3} {:<14} {:.4e}",
                    r.dist, r.budget_frac, r.method, r.mean_rel_err
                );
            }
        }
        Cmd::Tightness {
            eps,
            delta,
            trials,
            n_s,
            seed,
            out,
            summary,
        } => {
            let cfg = TightnessConfig {
                n_s,
                ..TightnessConfig::new(eps, delta, trials, seed)
            };
            let (rows, summaries) = tightness_study(&cfg)?;
            write_rows(&TIGHTNESS_COLUMNS, &rows, create(&out)?)?;
            if let Some(path) = summary {
                write_rows(&SUMMARY_COLUMNS, &summaries, create(&path)?)?;
            }
            for s in &summaries {
                println!(
                    "{:<10} clt {:>8.1} hoeffding {:>8.1} ratio {:>5.2}  fail clt {:.4} hoeffding {:.4}",
                    s.population, s.clt_mean_budget, s.hoeffding_mean_budget, s.budget_ratio, s.clt_fail_rate, s.hoeffding_fail_rate
                );
            }
        }
        Cmd::Walk {
            mu,
            sigma,
            steps,
            trials,
            seed,
        } => {
            let (emp, ana) = random_walk_mse(mu, sigma, steps, trials, seed)?;
            println!(
                "empirical {emp:.6} analytic {ana:.6} ratio {:.4}",
                emp / ana
            );
        }
    }
    Ok(())
}

fn create(path: &PathBuf) -> Result<std::fs::File> {
    std::fs::File::create(path).map_err(HarnessError::from)
}
