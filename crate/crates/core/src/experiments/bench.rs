//! Wall-clock benchmarks of what a newcomer computes under each scheme.
//!
//! Timings are medians over repeated runs and depend on the machine; the
//! metadata written alongside them records where they were taken.

use std::hint::black_box;
use std::time::Instant;

use md5::{Digest, Md5};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::cost::{all_costs, CostParams};
use super::figures::{num, CsvTable};
use super::ExperimentError;
use crate::codes::{self, CodedShard, Shard, TestGroup};
use crate::field::{FieldElement, FieldParams};
use crate::NodeId;

pub const MAX_SHARD_BYTES: usize = 64 << 20;

pub fn machine_metadata() -> Vec<(String, String)> {
    let cpus = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1);
    vec![
        ("os".into(), std::env::consts::OS.into()),
        ("arch".into(), std::env::consts::ARCH.into()),
        ("cpus".into(), cpus.to_string()),
        ("optimized".into(), (!cfg!(debug_assertions)).to_string()),
    ]
}

/// Median wall time of `runs` calls, in seconds.
pub fn median_seconds(runs: usize, mut f: impl FnMut()) -> f64 {
    let mut times: Vec<f64> = (0..runs.max(1))
        .map(|_| {
            let start = Instant::now();
            f();
            start.elapsed().as_secs_f64()
        })
        .collect();
    times.sort_by(f64::total_cmp);
    let mid = times.len() / 2;
    if times.len() % 2 == 1 {
        times[mid]
    } else {
        (times[mid - 1] + times[mid]) / 2.0
    }
}

fn random_bytes(len: usize, seed: u64) -> Vec<u8> {
    let mut data = vec![0u8; len];
    ChaCha8Rng::seed_from_u64(seed).fill_bytes(&mut data);
    data
}

/// A committee's coded shards for one original shard.
#[derive(Debug, Clone)]
pub struct DecodeFixture {
    pub field: FieldParams,
    pub bytes: Vec<u8>,
    pub coded: Vec<CodedShard>,
    pub m: usize,
}

impl DecodeFixture {
    /// `n` nodes (at least `m + 1`) with distinct random scalars.
    pub fn new(n: usize, m: usize, b: usize, seed: u64) -> Result<Self, ExperimentError> {
        if m == 0 || b == 0 || b > MAX_SHARD_BYTES {
            return Err(ExperimentError::InvalidParams(format!(
                "need m >= 1 and 1 <= b <= {MAX_SHARD_BYTES}"
            )));
        }
        let field = FieldParams::mersenne61();
        let bytes = random_bytes(b, seed);
        let shard = Shard::from_bytes(&bytes, m, &field)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5ca1a2);
        let mut scalars: Vec<FieldElement> = Vec::new();
        while scalars.len() < n.max(m + 1) {
            let x = field.random_nonzero(&mut rng);
            if !scalars.contains(&x) {
                scalars.push(x);
            }
        }
        let coded = scalars
            .iter()
            .map(|&x| codes::encode(&shard, x, &field))
            .collect();
        Ok(Self {
            field,
            bytes,
            coded,
            m,
        })
    }

    /// One parity test over the first `m + 1` shards, then decode and unpack
    /// from the first `m`.
    pub fn test_and_decode(&self) -> Result<Vec<u8>, ExperimentError> {
        let p = &self.field;
        let members: Vec<_> = self.coded[..=self.m]
            .iter()
            .enumerate()
            .map(|(i, c)| (NodeId(i as u32), c.scalar))
            .collect();
        let group = TestGroup::new(members)?;
        let pv = codes::parity_vector(&group, p)?;
        let outcome = codes::run_test(&group, &self.coded[..=self.m], &pv, p)?;
        black_box(outcome);
        let shard =
            codes::decode(&self.coded[..self.m], p)?.with_byte_length(self.bytes.len(), p)?;
        Ok(codes::decode_to_bytes(&shard, p)?)
    }
}

/// Median test-plus-decode time for each `(n, b)` at fixed `m`.
pub fn decode_scaling(
    m: usize,
    ns: &[usize],
    sizes: &[usize],
    runs: usize,
    seed: u64,
) -> Result<CsvTable, ExperimentError> {
    let mut table = CsvTable::new(&["m", "n", "b", "median_seconds", "runs"]);
    table.comment("bench", "recagt_decode");
    table.comment("m", m);
    table.comment("runs", runs);
    table.comment("seed", seed);
    table.comments.extend(machine_metadata());
    for &n in ns {
        for &b in sizes {
            let fx = DecodeFixture::new(n, m, b, seed)?;
            let recovered = fx.test_and_decode()?;
            if recovered != fx.bytes {
                return Err(ExperimentError::InvalidParams(
                    "decode mismatch in benchmark fixture".into(),
                ));
            }
            let t = median_seconds(runs, || {
                black_box(fx.test_and_decode().expect("fixture decodes"));
            });
            table.push(vec![
                m.to_string(),
                n.to_string(),
                b.to_string(),
                num(t),
                runs.to_string(),
            ]);
        }
    }
    Ok(table)
}

fn md5(data: &[u8]) -> [u8; 16] {
    Md5::digest(data).into()
}

/// Pairwise comparison of `n` full copies by recomputed digests.
pub fn uncoded_verify(copies: &[Vec<u8>]) -> bool {
    let mut consistent = true;
    for i in 0..copies.len() {
        for j in i + 1..copies.len() {
            consistent &= md5(&copies[i]) == md5(&copies[j]);
        }
    }
    consistent
}

/// Digest of the one full copy compared against every received digest,
/// pairwise.
pub fn checksum_verify(original: &[u8], digests: &[[u8; 16]]) -> bool {
    let own = md5(original);
    let all: Vec<&[u8; 16]> = std::iter::once(&own).chain(digests).collect();
    let mut consistent = true;
    for i in 0..all.len() {
        for j in i + 1..all.len() {
            consistent &= all[i] == all[j];
        }
    }
    consistent
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fig6Options {
    pub ns: Vec<usize>,
    pub sizes: Vec<usize>,
    pub runs: usize,
    pub seed: u64,
    /// Uncoded timings are skipped when `n^2 b` exceeds this many bytes.
    pub uncoded_work_cap: u64,
}

impl Default for Fig6Options {
    fn default() -> Self {
        Self {
            ns: vec![1, 50, 100],
            sizes: vec![4 << 10, 16 << 10, 64 << 10, 256 << 10],
            runs: 5,
            seed: 0,
            uncoded_work_cap: 1 << 30,
        }
    }
}

/// Communication bytes and verification/decode time per scheme, `n` and `b`.
///
/// Columns: `kind,scheme,n,m,b,communication_bytes,median_seconds,runs`.
pub fn fig6_bench(opts: &Fig6Options) -> Result<CsvTable, ExperimentError> {
    let mut table = CsvTable::new(&[
        "kind",
        "scheme",
        "n",
        "m",
        "b",
        "communication_bytes",
        "median_seconds",
        "runs",
    ]);
    table.comment("figure", "cost_and_decode_speed");
    table.comment(
        "ns",
        opts.ns
            .iter()
            .map(|n| n.to_string())
            .collect::<Vec<_>>()
            .join(","),
    );
    table.comment(
        "sizes",
        opts.sizes
            .iter()
            .map(|n| n.to_string())
            .collect::<Vec<_>>()
            .join(","),
    );
    table.comment("runs", opts.runs);
    table.comment("seed", opts.seed);
    table.comment("uncoded_work_cap", opts.uncoded_work_cap);
    table.comment("m_rule", "max(1, round(n/10))");
    table.comments.extend(machine_metadata());

    for &n in &opts.ns {
        let m = CostParams::default_m(n as u64) as usize;
        for &b in &opts.sizes {
            if b == 0 || b > MAX_SHARD_BYTES || n == 0 {
                return Err(ExperimentError::InvalidParams(format!(
                    "shard size {b} or n {n} out of range"
                )));
            }
            for cost in all_costs(&CostParams::new(b as u64, n as u64, m as u64))? {
                table.push(vec![
                    "communication".into(),
                    cost.scheme.into(),
                    n.to_string(),
                    m.to_string(),
                    b.to_string(),
                    cost.communication_bytes.to_string(),
                    String::new(),
                    "0".into(),
                ]);
            }

            let original = random_bytes(b, opts.seed ^ b as u64);
            let timing_row = |scheme: &str, t: Option<f64>| {
                vec![
                    "decode".into(),
                    scheme.into(),
                    n.to_string(),
                    m.to_string(),
                    b.to_string(),
                    String::new(),
                    t.map(num).unwrap_or_default(),
                    if t.is_some() {
                        opts.runs.to_string()
                    } else {
                        "0".into()
                    },
                ]
            };

            let work = (n as u64).saturating_mul(n as u64).saturating_mul(b as u64);
            let uncoded = (work <= opts.uncoded_work_cap).then(|| {
                let copies = vec![original.clone(); n];
                median_seconds(opts.runs, || {
                    black_box(uncoded_verify(black_box(&copies)));
                })
            });
            table.push(timing_row("uncoded", uncoded));

            let digests = vec![md5(&original); n.saturating_sub(1)];
            let checksum = median_seconds(opts.runs, || {
                black_box(checksum_verify(black_box(&original), black_box(&digests)));
            });
            table.push(timing_row("checksum", Some(checksum)));

            let fx = DecodeFixture::new(n, m, b, opts.seed)?;
            let recagt = median_seconds(opts.runs, || {
                black_box(fx.test_and_decode().expect("fixture decodes"));
            });
            table.push(timing_row("recagt", Some(recagt)));
        }
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_roundtrip() {
        let fx = DecodeFixture::new(5, 3, 1000, 4).unwrap();
        assert_eq!(fx.coded.len(), 5);
        assert_eq!(fx.test_and_decode().unwrap(), fx.bytes);
        assert!(DecodeFixture::new(5, 0, 10, 0).is_err());
    }

    #[test]
    fn verifiers_detect_mismatch() {
        let a = vec![1u8; 64];
        let mut b = a.clone();
        assert!(uncoded_verify(&[a.clone(), b.clone(), a.clone()]));
        b[3] ^= 1;
        assert!(!uncoded_verify(&[a.clone(), b.clone()]));
        assert!(checksum_verify(&a, &[md5(&a), md5(&a)]));
        assert!(!checksum_verify(&a, &[md5(&a), md5(&b)]));
        assert!(checksum_verify(&a, &[]));
    }

    #[test]
    fn median_of_runs() {
        let mut calls = 0;
        let t = median_seconds(5, || calls += 1);
        assert_eq!(calls, 5);
        assert!(t >= 0.0);
    }

    #[test]
    fn fig6_small() {
        let opts = Fig6Options {
            ns: vec![1, 10],
            sizes: vec![256],
            runs: 1,
            seed: 0,
            uncoded_work_cap: 1 << 20,
        };
        let t = fig6_bench(&opts).unwrap();
        assert_eq!(t.rows.len(), 2 * 6);
        let bytes = t.column("communication_bytes").unwrap();
        assert_eq!(t.rows[0][bytes], "256");
        assert_eq!(t.rows[1][bytes], "256");
    }
}
