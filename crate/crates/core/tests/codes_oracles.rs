mod common;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use recagt::codes::{self, CodedShard, Shard, TestGroup, Verdict};
use recagt::{FieldElement, FieldParams, NodeId};

fn distinct_scalars(k: usize, p: &FieldParams, rng: &mut ChaCha8Rng) -> Vec<FieldElement> {
    let mut xs = Vec::new();
    while xs.len() < k {
        let x = p.random_nonzero(rng);
        if !xs.contains(&x) {
            xs.push(x);
        }
    }
    xs
}

fn group(xs: &[FieldElement]) -> TestGroup {
    TestGroup::new(
        xs.iter()
            .enumerate()
            .map(|(i, &x)| (NodeId(i as u32), x))
            .collect(),
    )
    .unwrap()
}

#[test]
fn encode_matches_termwise_evaluation() {
    let p = FieldParams::mersenne61();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for m in 1..=6 {
        let subs: Vec<Vec<FieldElement>> = (0..m)
            .map(|_| (0..4).map(|_| p.random(&mut rng)).collect())
            .collect();
        let shard = Shard::new(subs.clone(), 4 * m * 7).unwrap();
        for x in distinct_scalars(5, &p, &mut rng) {
            let coded = codes::encode(&shard, x, &p);
            for pos in 0..4 {
                let coeffs: Vec<u64> = subs.iter().map(|s| s[pos].value()).collect();
                assert_eq!(
                    coded.values[pos].value(),
                    common::poly_eval(&coeffs, x.value(), common::M61)
                );
            }
        }
    }
}

#[test]
fn interpolation_matrix_is_vandermonde_inverse() {
    let p = FieldParams::new(257).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for m in 1..=8 {
        let xs = distinct_scalars(m, &p, &mut rng);
        let raw: Vec<u64> = xs.iter().map(|x| x.value()).collect();
        let inv = common::invert(&common::vandermonde(&raw, 257), 257).unwrap();
        let ours = codes::interpolation_matrix(&xs, &p).unwrap();
        for v in 0..m {
            for j in 0..m {
                assert_eq!(ours[v][j].value(), inv[v][j], "m={m} v={v} j={j}");
            }
        }
    }
}

#[test]
fn parity_vector_is_last_inverse_row_at_large_field() {
    let p = FieldParams::mersenne61();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for m in 1..=8 {
        let xs = distinct_scalars(m + 1, &p, &mut rng);
        let raw: Vec<u64> = xs.iter().map(|x| x.value()).collect();
        let inv = common::invert(&common::vandermonde(&raw, common::M61), common::M61).unwrap();
        let pv = codes::parity_vector(&group(&xs), &p).unwrap();
        let got: Vec<u64> = pv.weights.iter().map(|w| w.value()).collect();
        assert_eq!(got, inv[m]);
    }
}

#[test]
fn every_subset_decodes_small_field() {
    let p = FieldParams::new(257).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let data: Vec<u8> = (0..37u8).collect();
    for m in 1..=4 {
        let shard = Shard::from_bytes(&data, m, &p).unwrap();
        let xs = distinct_scalars(m + 3, &p, &mut rng);
        let coded: Vec<CodedShard> = xs.iter().map(|&x| codes::encode(&shard, x, &p)).collect();
        let mut idx: Vec<usize> = (0..coded.len()).collect();
        for _ in 0..10 {
            idx.shuffle(&mut rng);
            let subset: Vec<CodedShard> = idx[..m].iter().map(|&i| coded[i].clone()).collect();
            let decoded = codes::decode(&subset, &p)
                .unwrap()
                .with_byte_length(data.len(), &p)
                .unwrap();
            assert_eq!(codes::decode_to_bytes(&decoded, &p).unwrap(), data);
        }
    }
}

#[test]
fn single_member_perturbation_always_detected() {
    let p = FieldParams::new(11).unwrap();
    // Width-0 packing is unusable for bytes; build the shard directly.
    let xs: Vec<FieldElement> = (1..=4).map(|v| p.element(v)).collect();
    let shard = Shard::new(
        vec![vec![p.element(3)], vec![p.element(7)], vec![p.element(1)]],
        0,
    )
    .unwrap();
    let g = group(&xs);
    let pv = codes::parity_vector(&g, &p).unwrap();
    let honest: Vec<CodedShard> = xs.iter().map(|&x| codes::encode(&shard, x, &p)).collect();
    assert_eq!(
        codes::run_test(&g, &honest, &pv, &p).unwrap().verdict,
        Verdict::Honest
    );
    for who in 0..4 {
        for offset in 1..11 {
            let mut bad = honest.clone();
            bad[who].values[0] = p.add(bad[who].values[0], p.element(offset));
            assert_eq!(
                codes::run_test(&g, &bad, &pv, &p).unwrap().verdict,
                Verdict::Positive
            );
        }
    }
}

#[test]
fn offsets_inside_the_code_escape_detection() {
    // Shifting every member by the same constant is an honest codeword of a
    // different shard, so colluding members can hide it.
    let p = FieldParams::mersenne61();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let shard = Shard::from_bytes(b"coordinated", 2, &p).unwrap();
    let xs = distinct_scalars(3, &p, &mut rng);
    let g = group(&xs);
    let pv = codes::parity_vector(&g, &p).unwrap();
    let mut coded: Vec<CodedShard> = xs.iter().map(|&x| codes::encode(&shard, x, &p)).collect();
    for c in &mut coded {
        c.values[0] = p.add(c.values[0], p.element(42));
    }
    assert_eq!(
        codes::run_test(&g, &coded, &pv, &p).unwrap().verdict,
        Verdict::Honest
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn honest_groups_test_honest(seed in any::<u64>(), m in 1usize..7, len in 1usize..200) {
        let p = FieldParams::mersenne61();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<u8> = (0..len).map(|i| (i as u64 ^ seed) as u8).collect();
        let shard = Shard::from_bytes(&data, m, &p).unwrap();
        let xs = distinct_scalars(m + 1, &p, &mut rng);
        let coded: Vec<CodedShard> = xs.iter().map(|&x| codes::encode(&shard, x, &p)).collect();
        let g = group(&xs);
        let pv = codes::parity_vector(&g, &p).unwrap();
        let out = codes::run_test(&g, &coded, &pv, &p).unwrap();
        prop_assert_eq!(out.verdict, Verdict::Honest);
        prop_assert!(out.output.iter().all(|o| o.is_zero()));
    }

    #[test]
    fn parity_weights_annihilate_low_powers(seed in any::<u64>(), m in 1usize..9) {
        let p = FieldParams::new(257).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xs = distinct_scalars(m + 1, &p, &mut rng);
        let pv = codes::parity_vector(&group(&xs), &p).unwrap();
        for power in 0..=m as u64 {
            let s = xs.iter().zip(&pv.weights).fold(0u64, |acc, (x, w)| {
                (acc + common::mulmod(w.value(), common::powmod(x.value(), power, 257), 257)) % 257
            });
            prop_assert_eq!(s, u64::from(power == m as u64));
        }
    }
}
