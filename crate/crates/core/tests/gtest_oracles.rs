mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use recagt::codes::{self, Shard};
use recagt::gtest::{self, CodeOracle, GtConfig, TestOracle};
use recagt::{FieldParams, NodeId};

#[test]
fn closed_form_matches_rational_product() {
    for n in 2..=40u64 {
        for f in 0..n {
            for m in 0..n {
                if n < m + f + 1 {
                    assert!(gtest::prob_no_malicious(n as usize, f as usize, m as usize).is_err());
                    continue;
                }
                let exact = common::rational_to_f64(&common::prob_rational(n, f, m));
                let got = gtest::prob_no_malicious(n as usize, f as usize, m as usize).unwrap();
                assert!(
                    (got - exact).abs() <= 1e-12 * exact.max(1e-300),
                    "n={n} f={f} m={m}"
                );
            }
        }
    }
}

#[test]
fn trial_budget_matches_iteration() {
    for &(n, f, m) in &[
        (6, 1, 2),
        (24, 3, 3),
        (72, 4, 8),
        (450, 5, 10),
        (10, 2, 3),
        (30, 9, 5),
    ] {
        let p0 = gtest::prob_no_malicious(n, f, m).unwrap();
        for &rho in &[0.1, 0.05, 0.01, 0.001] {
            assert_eq!(
                gtest::trials_to_first_honest(p0, rho).unwrap(),
                common::trials_by_iteration(p0, rho),
                "n={n} f={f} m={m} rho={rho}"
            );
        }
    }
}

#[test]
fn bound_nondecreasing_in_malice() {
    for &(n, m) in &[(6, 2), (24, 3), (72, 8), (450, 10)] {
        let bounds: Vec<f64> = (1..=14.min(n - m - 1))
            .map(|f| gtest::total_trials_bound(n, m, f, 0.01).unwrap())
            .collect();
        assert!(
            bounds.windows(2).all(|w| w[0] <= w[1]),
            "n={n} m={m}: {bounds:?}"
        );
    }
}

#[test]
fn partition_covers_remaining_nodes() {
    for e in 1..60u32 {
        let nodes: Vec<NodeId> = (0..e).map(NodeId).collect();
        for f in 1..8 {
            let pools = gtest::dorfman_partition(&nodes, f).unwrap();
            let flat: Vec<NodeId> = pools.iter().flatten().copied().collect();
            assert_eq!(flat, nodes);
            let sizes: Vec<usize> = pools.iter().map(Vec::len).collect();
            assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            let k = ((e as f64 * f as f64).sqrt().ceil() as usize).min(e as usize);
            assert_eq!(pools.len(), k);
        }
    }
}

fn planted_oracle(n: usize, m: usize, planted: &BTreeSet<usize>, seed: u64) -> CodeOracle {
    let p = FieldParams::mersenne61();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data: Vec<u8> = (0..64).map(|i| (i * 7 + seed as usize) as u8).collect();
    let shard = Shard::from_bytes(&data, m, &p).unwrap();
    let mut xs = Vec::new();
    while xs.len() < n {
        let x = p.random_nonzero(&mut rng);
        if !xs.contains(&x) {
            xs.push(x);
        }
    }
    let coded = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let mut c = codes::encode(&shard, x, &p);
            if planted.contains(&i) {
                // Independent offsets; identical ones across a group would
                // shift the whole codeword and pass the parity check.
                let at = rng.gen_range(0..c.values.len());
                c.values[at] = p.add(c.values[at], p.random_nonzero(&mut rng));
            }
            c
        })
        .collect();
    CodeOracle::new(p, coded)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn identifies_planted_set(seed in any::<u64>(), n in 6usize..40, m in 1usize..4, f in 0usize..4) {
        prop_assume!(n > m + f);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let planted: BTreeSet<usize> = rand::seq::index::sample(&mut rng, n, f).into_iter().collect();
        let mut oracle = TestOracle::new(planted_oracle(n, m, &planted, seed));
        let cfg = GtConfig::new(n, m, f).with_seed(seed);
        match gtest::identify_malicious(&cfg, &mut oracle) {
            Ok(res) => {
                let want: BTreeSet<NodeId> = planted.iter().map(|&i| NodeId(i as u32)).collect();
                prop_assert_eq!(&res.malicious, &want);
                prop_assert_eq!(res.honest.len() + res.malicious.len(), n);
                prop_assert!(res.honest.is_disjoint(&res.malicious));
                prop_assert_eq!(res.trials_used, oracle.trials());
                prop_assert!(!res.f_exceeded);
            }
            Err(gtest::GtError::StageAFailed { .. }) => {}
            Err(e) => prop_assert!(false, "unexpected {e}"),
        }
    }
}

#[test]
fn stage_a_failure_rate_bounded() {
    // Setting 1 has P(H=0) = 1/2; the budget of 7 misses with 1/128.
    let (n, m, f) = (6, 2, 1);
    let planted: BTreeSet<usize> = [4].into();
    let runs = 4000;
    let failures = (0..runs)
        .filter(|&s| {
            let mut oracle = TestOracle::new(planted_oracle(n, m, &planted, 1));
            gtest::identify_malicious(&GtConfig::new(n, m, f).with_seed(s), &mut oracle).is_err()
        })
        .count();
    let rate = failures as f64 / runs as f64;
    let expect = 1.0 / 128.0;
    let sigma = (expect * (1.0 - expect) / runs as f64).sqrt();
    assert!(rate <= expect + 3.0 * sigma, "rate {rate}");
}
