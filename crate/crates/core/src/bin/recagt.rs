use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use recagt::experiments::bench::{decode_scaling, fig6_bench, Fig6Options};
use recagt::experiments::figures::sim_config_comments;
use recagt::experiments::{
    self, config::parse_list, cost, fig4_data, fig5_data, simulation_table, ConfigMap, CostParams,
    CsvTable, ExperimentError, Fig4Grid, Fig5Options,
};
use recagt::gtest::{self, GtError};
use recagt::simnet::{
    self, AdversaryAssignment, AdversaryProfile, SchemeKind, SimConfig, SimError,
};
use recagt::NodeId;

const OUT_DIR_ENV: &str = "RECAGT_OUT_DIR";

#[derive(Parser)]
#[command(
    name = "recagt",
    version,
    about = "Malicious-node identification for committee joins: coded shards, signed proofs, group testing"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// RNG seed.
    #[arg(long)]
    seed: Option<u64>,
    /// CSV output path; defaults to $RECAGT_OUT_DIR/<command>.csv, else stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// key=value file supplying defaults for any flag.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Probability that a random test group has no malicious member.
    Probability {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        f: Option<usize>,
        #[arg(long)]
        m: Option<usize>,
        /// Monte Carlo draws; 0 skips sampling.
        #[arg(long)]
        draws: Option<u64>,
        #[command(flatten)]
        common: Common,
    },
    /// Trial budget, total-trial bound and simulated trial counts.
    Trials {
        /// Row of the committee settings table (1-4).
        #[arg(long)]
        setting: Option<u8>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        m: Option<usize>,
        #[arg(long)]
        f: Option<usize>,
        #[arg(long)]
        rho: Option<f64>,
        #[arg(long)]
        reps: Option<u64>,
        #[command(flatten)]
        common: Common,
    },
    /// Closed-form join communication cost of each scheme.
    Cost {
        #[arg(long)]
        b: Option<u64>,
        #[arg(long)]
        n: Option<u64>,
        #[arg(long)]
        m: Option<u64>,
        #[arg(long)]
        w: Option<u64>,
        #[arg(long)]
        z: Option<u64>,
        #[arg(long)]
        s: Option<u64>,
        #[arg(long)]
        d: Option<u64>,
        #[command(flatten)]
        common: Common,
    },
    /// Decode time against shard size and committee size.
    Bench {
        #[arg(long)]
        m: Option<usize>,
        /// Comma-separated committee sizes.
        #[arg(long)]
        ns: Option<String>,
        /// Comma-separated shard sizes in bytes.
        #[arg(long)]
        sizes: Option<String>,
        #[arg(long)]
        runs: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Simulate a node joining a committee.
    Simulate {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        m: Option<usize>,
        #[arg(long)]
        f: Option<usize>,
        #[arg(long)]
        delta: Option<u64>,
        #[arg(long)]
        rho: Option<f64>,
        #[arg(long)]
        shard_bytes: Option<usize>,
        /// honest, perturb-single, perturb-all, tamper-scalar, bad-signature or silent.
        #[arg(long)]
        profile: Option<String>,
        /// Comma-separated adversary ids; random placement when absent.
        #[arg(long)]
        adversaries: Option<String>,
        /// keyed-hash or ed25519.
        #[arg(long)]
        scheme: Option<String>,
        #[arg(long)]
        max_resends: Option<u32>,
        #[arg(long)]
        reps: Option<u64>,
        /// Event trace path (tab-separated).
        #[arg(long)]
        trace: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Probability grid over (n, f, m).
    Fig4 {
        #[arg(long)]
        draws: Option<u64>,
        /// m, ratio or all.
        #[arg(long)]
        panel: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Trial bounds and simulated trials over malice and committee sweeps.
    Fig5 {
        #[arg(long)]
        reps: Option<u64>,
        #[arg(long)]
        rho: Option<f64>,
        /// Comma-separated setting ids.
        #[arg(long)]
        settings: Option<String>,
        #[arg(long)]
        f_max: Option<usize>,
        #[arg(long)]
        shard_bytes: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Communication cost and verification time per scheme.
    Fig6 {
        #[arg(long)]
        ns: Option<String>,
        #[arg(long)]
        sizes: Option<String>,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        uncoded_work_cap: Option<u64>,
        #[command(flatten)]
        common: Common,
    },
}

enum CliError {
    Config(String),
    Runtime(String),
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Config(_) | ExperimentError::InvalidParams(_) => {
                CliError::Config(e.to_string())
            }
            ExperimentError::Gt(g) => g.into(),
            ExperimentError::Sim(s) => s.into(),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<GtError> for CliError {
    fn from(e: GtError) -> Self {
        match e {
            GtError::InvalidConfig(_) => CliError::Config(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::InvalidConfig(_) => CliError::Config(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

/// Flag value, else config value, else default.
struct Resolver {
    config: ConfigMap,
}

impl Resolver {
    fn new(common: &Common, allowed: &[&str]) -> Result<Self, CliError> {
        let config = match &common.config {
            Some(path) => ConfigMap::load(path)?,
            None => ConfigMap::default(),
        };
        let mut keys = allowed.to_vec();
        keys.push("seed");
        config.check_keys(&keys)?;
        Ok(Self { config })
    }

    fn pick<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Result<T, CliError> {
        Ok(self.opt(flag, key)?.unwrap_or(default))
    }

    fn opt<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, CliError> {
        match flag {
            Some(v) => Ok(Some(v)),
            None => Ok(self.config.get(key)?),
        }
    }

    fn list<T: FromStr>(
        &self,
        flag: Option<String>,
        key: &str,
        default: Vec<T>,
    ) -> Result<Vec<T>, CliError> {
        match self.opt(flag, key)? {
            Some(text) => parse_list(&text)
                .map_err(|_| CliError::Config(format!("bad list for {key}: {text:?}"))),
            None => Ok(default),
        }
    }

    fn seed(&self, common: &Common) -> Result<u64, CliError> {
        self.pick(common.seed, "seed", 0)
    }
}

fn default_out(common: &Common, name: &str) -> Option<PathBuf> {
    common.out.clone().or_else(|| {
        std::env::var_os(OUT_DIR_ENV).map(|d| Path::new(&d).join(format!("{name}.csv")))
    })
}

/// Writes the table to the resolved destination, or stdout when there is
/// none and `stdout_fallback` is set.
fn emit(
    table: &CsvTable,
    common: &Common,
    name: &str,
    stdout_fallback: bool,
) -> Result<(), CliError> {
    match default_out(common, name) {
        Some(path) => {
            table.write_to(&path)?;
            eprintln!("wrote {}", path.display());
        }
        None if stdout_fallback => print!("{}", table.to_csv()?),
        None => {}
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Probability {
            n,
            f,
            m,
            draws,
            common,
        } => {
            let r = Resolver::new(&common, &["n", "f", "m", "draws"])?;
            let (n, f, m) = (r.pick(n, "n", 6)?, r.pick(f, "f", 1)?, r.pick(m, "m", 2)?);
            let draws = r.pick(draws, "draws", 0)?;
            let seed = r.seed(&common)?;
            let p = gtest::prob_no_malicious(n, f, m)?;
            println!("{p}");
            if draws > 0 {
                let (mc, se) = gtest::monte_carlo_no_malicious(n, f, m, draws, seed);
                println!("monte_carlo {mc} stderr {se} draws {draws}");
            }
            let table = fig4_data(&Fig4Grid {
                points: vec![(n, f, m)],
                draws,
                seed,
            })?;
            emit(&table, &common, "probability", false)
        }
        Command::Trials {
            setting,
            n,
            m,
            f,
            rho,
            reps,
            common,
        } => {
            let r = Resolver::new(&common, &["setting", "n", "m", "f", "rho", "reps"])?;
            let base = match r.opt(setting, "setting")? {
                Some(id) => experiments::setting(id)
                    .ok_or_else(|| CliError::Config(format!("unknown setting {id}")))?,
                None => experiments::TABLE2[0],
            };
            let (n, m, f) = (
                r.pick(n, "n", base.n)?,
                r.pick(m, "m", base.m)?,
                r.pick(f, "f", base.f)?,
            );
            let rho = r.pick(rho, "rho", gtest::DEFAULT_RHO)?;
            let reps = r.pick(reps, "reps", 1000)?;
            let seed = r.seed(&common)?;
            let gt = gtest::GtConfig {
                n,
                m,
                f,
                rho,
                seed,
                strict: false,
            };
            gt.validate()?;
            let p0 = gtest::prob_no_malicious(n, f, m)?;
            let budget = gtest::trials_to_first_honest(p0, rho)?;
            let bound = gtest::total_trials_bound(n, m, f, rho)?;
            println!("n={n} m={m} f={f} rho={rho}");
            println!("p_no_malicious {p0}");
            println!("stage_a_budget {budget}");
            println!("total_trials_bound {bound}");
            let opts = Fig5Options {
                settings: vec![experiments::Setting {
                    id: base.id,
                    committees: base.committees,
                    n,
                    m,
                    f,
                }],
                rho,
                replications: reps,
                seed,
                f_max: 0,
                n_values: Vec::new(),
                ..Fig5Options::default()
            };
            let table = fig5_data(&opts)?;
            if reps > 0 {
                let row = &table.rows[0];
                let col = |c: &str| &row[table.column(c).expect("column")];
                println!(
                    "empirical_mean {} stddev {} success_rate {} over {reps} joins",
                    col("t_empirical_mean"),
                    col("t_empirical_stddev"),
                    col("success_rate")
                );
            }
            emit(&table, &common, "trials", false)
        }
        Command::Cost {
            b,
            n,
            m,
            w,
            z,
            s,
            d,
            common,
        } => {
            let r = Resolver::new(&common, &["b", "n", "m", "w", "z", "s", "d"])?;
            let n = r.pick(n, "n", 50)?;
            let defaults = CostParams::new(1 << 20, n, CostParams::default_m(n));
            let cp = CostParams {
                b: r.pick(b, "b", defaults.b)?,
                n,
                m: r.pick(m, "m", defaults.m)?,
                w: r.pick(w, "w", defaults.w)?,
                z: r.pick(z, "z", defaults.z)?,
                s: r.pick(s, "s", defaults.s)?,
                d: r.pick(d, "d", defaults.d)?,
            };
            let mut table = CsvTable::new(&["scheme", "communication_bytes", "complexity_class"]);
            for (k, v) in [
                ("b", cp.b),
                ("n", cp.n),
                ("m", cp.m),
                ("w", cp.w),
                ("z", cp.z),
                ("s", cp.s),
                ("d", cp.d),
            ] {
                table.comment(k, v);
            }
            for c in cost::all_costs(&cp)? {
                println!(
                    "{} {} {}",
                    c.scheme, c.communication_bytes, c.complexity_class
                );
                table.push(vec![
                    c.scheme.into(),
                    c.communication_bytes.to_string(),
                    c.complexity_class.into(),
                ]);
            }
            emit(&table, &common, "cost", false)
        }
        Command::Bench {
            m,
            ns,
            sizes,
            runs,
            common,
        } => {
            let r = Resolver::new(&common, &["m", "ns", "sizes", "runs"])?;
            let m = r.pick(m, "m", 4)?;
            let ns = r.list(ns, "ns", vec![10, 20, 40, 80])?;
            let sizes = r.list(
                sizes,
                "sizes",
                vec![1 << 18, 1 << 19, 1 << 20, 1 << 21, 1 << 22],
            )?;
            let runs = r.pick(runs, "runs", 5)?;
            let table = decode_scaling(m, &ns, &sizes, runs, r.seed(&common)?)?;
            emit(&table, &common, "bench", true)
        }
        Command::Simulate {
            n,
            m,
            f,
            delta,
            rho,
            shard_bytes,
            profile,
            adversaries,
            scheme,
            max_resends,
            reps,
            trace,
            common,
        } => {
            let r = Resolver::new(
                &common,
                &[
                    "n",
                    "m",
                    "f",
                    "delta",
                    "rho",
                    "shard_bytes",
                    "profile",
                    "adversaries",
                    "scheme",
                    "max_resends",
                    "reps",
                    "trace",
                ],
            )?;
            let (n, m, f) = (r.pick(n, "n", 6)?, r.pick(m, "m", 2)?, r.pick(f, "f", 1)?);
            let mut cfg = SimConfig::new(n, m, f).with_seed(r.seed(&common)?);
            cfg.delta = r.pick(delta, "delta", cfg.delta)?;
            cfg.rho = r.pick(rho, "rho", cfg.rho)?;
            cfg.shard_bytes = r.pick(shard_bytes, "shard_bytes", cfg.shard_bytes)?;
            cfg.max_resends = r.pick(max_resends, "max_resends", cfg.max_resends)?;
            let profile_name = r.pick(profile, "profile", "perturb-single".to_string())?;
            let profile = AdversaryProfile::parse(&profile_name)
                .ok_or_else(|| CliError::Config(format!("unknown profile {profile_name}")))?;
            cfg.scheme = match r.pick(scheme, "scheme", "keyed-hash".to_string())?.as_str() {
                "keyed-hash" => SchemeKind::KeyedHash,
                "ed25519" => SchemeKind::Ed25519,
                other => return Err(CliError::Config(format!("unknown scheme {other}"))),
            };
            cfg.adversaries = match r.opt(adversaries, "adversaries")? {
                Some(list) => {
                    let ids: Vec<u32> = parse_list(&list)
                        .map_err(|_| CliError::Config(format!("bad adversary list {list:?}")))?;
                    AdversaryAssignment::Explicit(
                        ids.into_iter().map(|id| (NodeId(id), profile)).collect(),
                    )
                }
                None => AdversaryAssignment::Random(profile),
            };
            let reps = r.pick(reps, "reps", 1)?;
            let trace = r.opt(trace, "trace")?;
            cfg.validate()?;

            let committee = simnet::build_committee(&cfg)?;
            let transcript = simnet::run_join(&cfg, &committee)?;
            let ids = |set: &std::collections::BTreeSet<NodeId>| {
                set.iter()
                    .map(|id| id.to_string())
                    .collect::<Vec<_>>()
                    .join(",")
            };
            let id = &transcript.identification;
            println!("planted [{}]", ids(&transcript.planted));
            println!("identified [{}]", ids(&id.malicious));
            println!("unresponsive [{}]", ids(&id.unresponsive));
            println!("exact {}", transcript.exact());
            println!(
                "trials {} (search {}) timeouts {}",
                id.trials_used, id.search_trials, id.timeouts
            );
            println!("fraud_proofs {}", transcript.fraud_proofs.len());
            println!(
                "bytes {} elapsed {}",
                transcript.total_bytes, transcript.elapsed
            );
            match transcript.recovered_matches {
                Some(ok) => println!("recovered_matches {ok}"),
                None => println!("recovered_matches n/a"),
            }
            let trace_path = trace.or_else(|| {
                std::env::var_os(OUT_DIR_ENV).map(|d| Path::new(&d).join("simulate_trace.tsv"))
            });
            match trace_path {
                Some(path) => {
                    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                        std::fs::create_dir_all(dir)
                            .map_err(|e| CliError::Runtime(e.to_string()))?;
                    }
                    let mut text = String::new();
                    for (k, v) in sim_config_comments(&cfg) {
                        text.push_str(&format!("# {k}={v}\n"));
                    }
                    text.push_str(&transcript.to_trace());
                    std::fs::write(&path, text).map_err(|e| CliError::Runtime(e.to_string()))?;
                    eprintln!("wrote {}", path.display());
                }
                None => print!("{}", transcript.to_trace()),
            }
            let stats = simnet::run_replications(&cfg, reps)?;
            if reps > 1 {
                println!(
                    "replications {} success_rate {} exact {} trials_mean {} trials_stddev {} bytes_mean {}",
                    stats.count, stats.success_rate, stats.exact_identifications, stats.trials_mean, stats.trials_stddev, stats.bytes_mean
                );
            }
            emit(&simulation_table(&cfg, &stats), &common, "simulate", false)
        }
        Command::Fig4 {
            draws,
            panel,
            common,
        } => {
            let r = Resolver::new(&common, &["draws", "panel"])?;
            let draws = r.pick(draws, "draws", 100_000)?;
            let seed = r.seed(&common)?;
            let points = match r.pick(panel, "panel", "all".to_string())?.as_str() {
                "m" => Fig4Grid::changing_m(),
                "ratio" => Fig4Grid::changing_ratio(),
                "all" => Fig4Grid::standard(draws, seed).points,
                other => return Err(CliError::Config(format!("unknown panel {other}"))),
            };
            let table = fig4_data(&Fig4Grid {
                points,
                draws,
                seed,
            })?;
            emit(&table, &common, "fig4", true)
        }
        Command::Fig5 {
            reps,
            rho,
            settings,
            f_max,
            shard_bytes,
            common,
        } => {
            let r = Resolver::new(
                &common,
                &[
                    "reps",
                    "rho",
                    "settings",
                    "f_max",
                    "shard_bytes",
                    "n_values",
                    "delta",
                ],
            )?;
            let d = Fig5Options::default();
            let ids: Vec<u8> = r.list(settings, "settings", vec![1, 2, 3, 4])?;
            let settings = ids
                .iter()
                .map(|&id| {
                    experiments::setting(id)
                        .ok_or_else(|| CliError::Config(format!("unknown setting {id}")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            let opts = Fig5Options {
                settings,
                rho: r.pick(rho, "rho", d.rho)?,
                replications: r.pick(reps, "reps", d.replications)?,
                seed: r.seed(&common)?,
                shard_bytes: r.pick(shard_bytes, "shard_bytes", d.shard_bytes)?,
                delta: r.pick(None, "delta", d.delta)?,
                f_max: r.pick(f_max, "f_max", d.f_max)?,
                n_values: r.list(None, "n_values", d.n_values.clone())?,
            };
            emit(&fig5_data(&opts)?, &common, "fig5", true)
        }
        Command::Fig6 {
            ns,
            sizes,
            runs,
            uncoded_work_cap,
            common,
        } => {
            let r = Resolver::new(&common, &["ns", "sizes", "runs", "uncoded_work_cap"])?;
            let d = Fig6Options::default();
            let opts = Fig6Options {
                ns: r.list(ns, "ns", d.ns.clone())?,
                sizes: r.list(sizes, "sizes", d.sizes.clone())?,
                runs: r.pick(runs, "runs", d.runs)?,
                seed: r.seed(&common)?,
                uncoded_work_cap: r.pick(
                    uncoded_work_cap,
                    "uncoded_work_cap",
                    d.uncoded_work_cap,
                )?,
            };
            emit(&fig6_bench(&opts)?, &common, "fig6", true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
