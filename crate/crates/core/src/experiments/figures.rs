//! Figure data as CSV tables with the resolved configuration embedded as
//! `# key=value` comment lines.
//!
//! Column order is part of the output contract:
//!
//! * probability grid: `n,f,m,f_over_n,m_over_n,p_closed_form,p_monte_carlo,stderr`
//! * trial counts: `setting,sweep,n,m,f,t_bound,t_bound_ceil,t_empirical_mean,t_empirical_stddev,success_rate,exact_rate,replications`
//! * simulation runs: `replication,seed,success,exact,trials,search_trials,timeouts,fraud_proofs,bytes,elapsed,recovered`

use std::fmt::Display;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use super::{ExperimentError, Setting, TABLE2};
use crate::gtest::{self, DEFAULT_RHO};
use crate::simnet::{
    self, AdversaryAssignment, AdversaryProfile, OffsetDistribution, ReplicationStats, SimConfig,
};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvTable {
    pub comments: Vec<(String, String)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            comments: Vec::new(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn comment(&mut self, key: &str, value: impl Display) {
        self.comments.push((key.to_string(), value.to_string()));
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.columns.len(), "row width");
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn to_csv(&self) -> Result<String, ExperimentError> {
        let mut out = Vec::new();
        for (k, v) in &self.comments {
            writeln!(out, "# {k}={v}")?;
        }
        {
            let mut w = csv::Writer::from_writer(&mut out);
            w.write_record(&self.columns)?;
            for row in &self.rows {
                w.write_record(row)?;
            }
            w.flush()?;
        }
        Ok(String::from_utf8(out).expect("csv output is utf-8"))
    }

    pub fn write_to(&self, path: &Path) -> Result<(), ExperimentError> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, self.to_csv()?)?;
        Ok(())
    }
}

pub(crate) fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x}")
    } else {
        String::new()
    }
}

/// Points `(n, f, m)` for the probability grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Fig4Grid {
    pub points: Vec<(usize, usize, usize)>,
    pub draws: u64,
    pub seed: u64,
}

impl Fig4Grid {
    /// Each settings row with `m` from 1 to 20.
    pub fn changing_m() -> Vec<(usize, usize, usize)> {
        TABLE2
            .iter()
            .flat_map(|s| (1..=20).map(move |m| (s.n, s.f, m)))
            .collect()
    }

    /// `n = 100` with several malice ratios and `m/n` up to one half.
    pub fn changing_ratio() -> Vec<(usize, usize, usize)> {
        let ms = std::iter::once(1).chain((5..=50).step_by(5));
        let fs = [1, 5, 10, 20, 30];
        fs.iter()
            .flat_map(|&f| ms.clone().map(move |m| (100, f, m)))
            .collect()
    }

    pub fn standard(draws: u64, seed: u64) -> Self {
        let mut points = Self::changing_m();
        points.extend(Self::changing_ratio());
        Self {
            points,
            draws,
            seed,
        }
    }
}

/// Closed-form and sampled `P(H=0)` over a grid; infeasible points get
/// blank probability columns.
pub fn fig4_data(grid: &Fig4Grid) -> Result<CsvTable, ExperimentError> {
    let mut table = CsvTable::new(&[
        "n",
        "f",
        "m",
        "f_over_n",
        "m_over_n",
        "p_closed_form",
        "p_monte_carlo",
        "stderr",
    ]);
    table.comment("figure", "probability_no_malicious");
    table.comment("draws", grid.draws);
    table.comment("seed", grid.seed);
    table.comment("points", grid.points.len());
    let rows: Vec<Vec<String>> = grid
        .points
        .par_iter()
        .enumerate()
        .map(|(i, &(n, f, m))| {
            let mut row = vec![
                n.to_string(),
                f.to_string(),
                m.to_string(),
                num(f as f64 / n as f64),
                num(m as f64 / n as f64),
            ];
            match gtest::prob_no_malicious(n, f, m) {
                Ok(p) => {
                    row.push(num(p));
                    if grid.draws > 0 {
                        let (mc, se) = gtest::monte_carlo_no_malicious(
                            n,
                            f,
                            m,
                            grid.draws,
                            simnet::replication_seed(grid.seed, i as u64),
                        );
                        row.extend([num(mc), num(se)]);
                    } else {
                        row.extend([String::new(), String::new()]);
                    }
                }
                Err(_) => row.extend([String::new(), String::new(), String::new()]),
            }
            row
        })
        .collect();
    rows.into_iter().for_each(|r| table.push(r));
    Ok(table)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fig5Options {
    pub settings: Vec<Setting>,
    pub rho: f64,
    /// End-to-end joins per row; zero leaves the empirical columns blank.
    pub replications: u64,
    pub seed: u64,
    pub shard_bytes: usize,
    pub delta: u64,
    /// Largest `f` in the malice sweep.
    pub f_max: usize,
    pub n_values: Vec<usize>,
}

impl Default for Fig5Options {
    fn default() -> Self {
        Self {
            settings: TABLE2.to_vec(),
            rho: DEFAULT_RHO,
            replications: 1000,
            seed: 0,
            shard_bytes: 1024,
            delta: 100,
            f_max: 14,
            n_values: vec![6, 8, 10, 12, 16, 20, 24, 32, 40, 50, 64, 72, 80, 100],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Fig5Row {
    pub setting: u8,
    pub sweep: &'static str,
    pub n: usize,
    pub m: usize,
    pub f: usize,
}

/// The rows of both sweeps plus one base row per setting, in output order.
/// The `f` sweep stops at `n - m - 1`; the `n` sweep starts at `m + f + 1`.
pub fn fig5_rows(opts: &Fig5Options) -> Vec<Fig5Row> {
    let mut rows = Vec::new();
    for s in &opts.settings {
        rows.push(Fig5Row {
            setting: s.id,
            sweep: "base",
            n: s.n,
            m: s.m,
            f: s.f,
        });
    }
    for s in &opts.settings {
        let f_hi = opts.f_max.min(s.n.saturating_sub(s.m + 1));
        rows.extend((1..=f_hi).map(|f| Fig5Row {
            setting: s.id,
            sweep: "f",
            n: s.n,
            m: s.m,
            f,
        }));
    }
    for s in &opts.settings {
        rows.extend(
            opts.n_values
                .iter()
                .filter(|&&n| n > s.m + s.f)
                .map(|&n| Fig5Row {
                    setting: s.id,
                    sweep: "n",
                    n,
                    m: s.m,
                    f: s.f,
                }),
        );
    }
    rows
}

pub fn fig5_data(opts: &Fig5Options) -> Result<CsvTable, ExperimentError> {
    let mut table = CsvTable::new(&[
        "setting",
        "sweep",
        "n",
        "m",
        "f",
        "t_bound",
        "t_bound_ceil",
        "t_empirical_mean",
        "t_empirical_stddev",
        "success_rate",
        "exact_rate",
        "replications",
    ]);
    table.comment("figure", "group_testing_trials");
    table.comment("rho", opts.rho);
    table.comment("replications", opts.replications);
    table.comment("seed", opts.seed);
    table.comment("shard_bytes", opts.shard_bytes);
    table.comment("delta", opts.delta);
    table.comment("f_max", opts.f_max);
    table.comment(
        "n_values",
        opts.n_values
            .iter()
            .map(|n| n.to_string())
            .collect::<Vec<_>>()
            .join(","),
    );
    table.comment(
        "settings",
        opts.settings
            .iter()
            .map(|s| s.id.to_string())
            .collect::<Vec<_>>()
            .join(","),
    );
    table.comment(
        "adversary",
        AdversaryProfile::PerturbShard(OffsetDistribution::SingleCoordinate).label(),
    );

    let rows = fig5_rows(opts);
    let computed = rows
        .par_iter()
        .enumerate()
        .map(|(i, r)| -> Result<Vec<String>, ExperimentError> {
            let bound = gtest::total_trials_bound(r.n, r.m, r.f, opts.rho)?;
            let mut out = vec![
                r.setting.to_string(),
                r.sweep.to_string(),
                r.n.to_string(),
                r.m.to_string(),
                r.f.to_string(),
                num(bound),
                num(bound.ceil()),
            ];
            if opts.replications > 0 {
                let mut cfg = SimConfig::new(r.n, r.m, r.f)
                    .with_seed(simnet::replication_seed(opts.seed ^ 0x5eed_f165, i as u64))
                    .with_adversaries(AdversaryAssignment::Random(AdversaryProfile::PerturbShard(
                        OffsetDistribution::SingleCoordinate,
                    )));
                cfg.rho = opts.rho;
                cfg.shard_bytes = opts.shard_bytes;
                cfg.delta = opts.delta;
                let stats = simnet::run_replications(&cfg, opts.replications)?;
                out.extend([
                    num(stats.trials_mean),
                    num(stats.trials_stddev),
                    num(stats.success_rate),
                    num(stats.exact_identifications as f64 / stats.count as f64),
                    stats.count.to_string(),
                ]);
            } else {
                out.extend(
                    std::iter::repeat_n(String::new(), 4).chain(std::iter::once("0".to_string())),
                );
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>, _>>()?;
    computed.into_iter().for_each(|r| table.push(r));
    Ok(table)
}

/// Full resolved simulation config as comment pairs.
pub fn sim_config_comments(cfg: &SimConfig) -> Vec<(String, String)> {
    let adversaries = match &cfg.adversaries {
        AdversaryAssignment::Random(p) => format!("random:{}", p.label()),
        AdversaryAssignment::Explicit(list) => list
            .iter()
            .map(|(id, p)| format!("{}:{}", id.0, p.label()))
            .collect::<Vec<_>>()
            .join(","),
    };
    [
        ("n", cfg.n.to_string()),
        ("m", cfg.m.to_string()),
        ("f", cfg.f.to_string()),
        ("adversaries", adversaries),
        ("delta", cfg.delta.to_string()),
        ("q", cfg.field.modulus().to_string()),
        ("seed", cfg.seed.to_string()),
        ("rho", cfg.rho.to_string()),
        ("shard_bytes", cfg.shard_bytes.to_string()),
        ("scheme", cfg.scheme.label().to_string()),
        ("max_resends", cfg.max_resends.to_string()),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

/// One row per replication, followed in the header by the aggregates.
pub fn simulation_table(cfg: &SimConfig, stats: &ReplicationStats) -> CsvTable {
    let mut table = CsvTable::new(&[
        "replication",
        "seed",
        "success",
        "exact",
        "trials",
        "search_trials",
        "timeouts",
        "fraud_proofs",
        "bytes",
        "elapsed",
        "recovered",
    ]);
    table.comments = sim_config_comments(cfg);
    table.comment("replications", stats.count);
    table.comment("success_rate", num(stats.success_rate));
    table.comment("exact_identifications", stats.exact_identifications);
    table.comment("trials_mean", num(stats.trials_mean));
    table.comment("trials_stddev", num(stats.trials_stddev));
    table.comment("bytes_mean", num(stats.bytes_mean));
    for r in &stats.records {
        table.push(vec![
            r.replication.to_string(),
            r.seed.to_string(),
            r.success.to_string(),
            r.exact.to_string(),
            r.trials.to_string(),
            r.search_trials.to_string(),
            r.timeouts.to_string(),
            r.fraud_proofs.to_string(),
            r.bytes.to_string(),
            r.elapsed.to_string(),
            r.recovered.to_string(),
        ]);
    }
    table
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fig4_small_grid() {
        let grid = Fig4Grid {
            points: vec![(6, 1, 2), (10, 0, 3), (6, 4, 2)],
            draws: 0,
            seed: 1,
        };
        let t = fig4_data(&grid).unwrap();
        let p = t.column("p_closed_form").unwrap();
        assert_eq!(t.rows[0][p], "0.5");
        assert_eq!(t.rows[1][p], "1");
        assert_eq!(t.rows[2][p], "");
        let csv = t.to_csv().unwrap();
        assert!(csv.starts_with("# figure=probability_no_malicious\n"));
        assert!(csv.contains("n,f,m,f_over_n,m_over_n,p_closed_form,p_monte_carlo,stderr\n"));
    }

    #[test]
    fn fig5_f_sweep_stops() {
        let rows = fig5_rows(&Fig5Options::default());
        let s1: Vec<usize> = rows
            .iter()
            .filter(|r| r.setting == 1 && r.sweep == "f")
            .map(|r| r.f)
            .collect();
        assert_eq!(s1, vec![1, 2, 3]);
        assert!(rows
            .iter()
            .filter(|r| r.sweep == "n")
            .all(|r| r.n > r.m + r.f));
        let s4_f = rows
            .iter()
            .filter(|r| r.setting == 4 && r.sweep == "f")
            .count();
        assert_eq!(s4_f, 14);
    }

    #[test]
    fn fig5_analytic_only() {
        let opts = Fig5Options {
            replications: 0,
            n_values: vec![6, 24],
            ..Fig5Options::default()
        };
        let t = fig5_data(&opts).unwrap();
        let col = t.column("t_bound").unwrap();
        let f_sweep: Vec<f64> = t
            .rows
            .iter()
            .filter(|r| r[0] == "2" && r[1] == "f")
            .map(|r| r[col].parse().unwrap())
            .collect();
        assert!(f_sweep.windows(2).all(|w| w[0] <= w[1]));
    }
}
