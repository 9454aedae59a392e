//! Shard testable codes.
//!
//! A shard `B` is cut into `m` sub-shards `B_0..B_{m-1}` and node `i`
//! stores the evaluation `sum_v B_v * x_i^v` at its CA-assigned scalar.
//! Any `m + 1` evaluations of an honest codeword are annihilated by the
//! last row of the inverse `(m+1) x (m+1)` Vandermonde matrix, and any `m`
//! of them interpolate back to `B`.

use thiserror::Error;

use crate::field::{FieldElement, FieldError, FieldParams};
use crate::NodeId;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodeError {
    #[error("scalar {0} appears more than once")]
    DuplicateScalar(FieldElement),
    #[error("scalar of node {0} is zero")]
    ZeroScalar(NodeId),
    #[error("test group needs at least two members, got {0}")]
    GroupTooSmall(usize),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("malformed shard: {0}")]
    MalformedShard(String),
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// The committee data split into `m` equal-length sub-shards.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Shard {
    subshards: Vec<Vec<FieldElement>>,
    original_byte_length: usize,
}

impl Shard {
    pub fn new(
        subshards: Vec<Vec<FieldElement>>,
        original_byte_length: usize,
    ) -> Result<Self, CodeError> {
        let len = subshards.first().map(Vec::len).unwrap_or(0);
        if subshards.is_empty() {
            return Err(CodeError::MalformedShard("no sub-shards".into()));
        }
        if len == 0 {
            return Err(CodeError::MalformedShard("empty sub-shards".into()));
        }
        if subshards.iter().any(|s| s.len() != len) {
            return Err(CodeError::MalformedShard(
                "sub-shards of unequal length".into(),
            ));
        }
        Ok(Self {
            subshards,
            original_byte_length,
        })
    }

    /// Packs `data` into field elements and splits them row-wise into `m`
    /// sub-shards, zero-padding the tail. Empty input still yields one
    /// zero coordinate per sub-shard.
    pub fn from_bytes(data: &[u8], m: usize, p: &FieldParams) -> Result<Self, CodeError> {
        if m == 0 {
            return Err(CodeError::MalformedShard("m must be at least 1".into()));
        }
        let packed = p.pack_bytes(data)?;
        let len = packed.elements.len().div_ceil(m).max(1);
        let mut elements = packed.elements;
        elements.resize(m * len, FieldElement::ZERO);
        let subshards = elements.chunks(len).map(<[_]>::to_vec).collect();
        Ok(Self {
            subshards,
            original_byte_length: data.len(),
        })
    }

    pub fn m(&self) -> usize {
        self.subshards.len()
    }

    /// Coordinates per sub-shard.
    pub fn len(&self) -> usize {
        self.subshards[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.original_byte_length == 0
    }

    pub fn subshards(&self) -> &[Vec<FieldElement>] {
        &self.subshards
    }

    pub fn original_byte_length(&self) -> usize {
        self.original_byte_length
    }

    /// Replaces the recorded byte length, e.g. after decoding, when only
    /// the packed capacity is known.
    pub fn with_byte_length(mut self, len: usize, p: &FieldParams) -> Result<Self, CodeError> {
        let capacity = self.m() * self.len() * p.bytes_per_element();
        if len > capacity {
            return Err(FieldError::LengthOverflow {
                stored: len,
                capacity,
            }
            .into());
        }
        self.original_byte_length = len;
        Ok(self)
    }
}

/// One node's evaluation of the shard polynomial.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodedShard {
    pub scalar: FieldElement,
    pub values: Vec<FieldElement>,
}

/// `m + 1` nodes whose coded shards are checked together.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TestGroup {
    members: Vec<(NodeId, FieldElement)>,
}

impl TestGroup {
    pub fn new(members: Vec<(NodeId, FieldElement)>) -> Result<Self, CodeError> {
        if members.len() < 2 {
            return Err(CodeError::GroupTooSmall(members.len()));
        }
        if let Some((id, _)) = members.iter().find(|(_, x)| x.is_zero()) {
            return Err(CodeError::ZeroScalar(*id));
        }
        check_distinct(members.iter().map(|(_, x)| *x))?;
        Ok(Self { members })
    }

    pub fn members(&self) -> &[(NodeId, FieldElement)] {
        &self.members
    }

    pub fn m(&self) -> usize {
        self.members.len() - 1
    }

    pub fn scalars(&self) -> impl Iterator<Item = FieldElement> + '_ {
        self.members.iter().map(|(_, x)| *x)
    }
}

/// Last row of the inverse Vandermonde matrix of a test group, aligned with
/// the group's member order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParityVector {
    pub weights: Vec<FieldElement>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Verdict {
    Honest,
    Positive,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TestOutcome {
    pub output: Vec<FieldElement>,
    pub verdict: Verdict,
}

/// Horner evaluation of the shard polynomial at `x`, coordinate-wise.
pub fn encode(shard: &Shard, x: FieldElement, p: &FieldParams) -> CodedShard {
    let subs = shard.subshards();
    let mut acc = subs[subs.len() - 1].clone();
    for sub in subs[..subs.len() - 1].iter().rev() {
        for (a, &b) in acc.iter_mut().zip(sub) {
            *a = p.add(p.mul(*a, x), b);
        }
    }
    CodedShard {
        scalar: x,
        values: acc,
    }
}

/// `weights[j] = 1 / prod_{k != j} (x_j - x_k)`.
///
/// These are the coefficients of `x^m` in the Lagrange basis polynomials,
/// i.e. the last row of `V^{-1}`. They kill every power `x^p` with `p < m`
/// and send `x^m` to 1.
pub fn parity_vector(group: &TestGroup, p: &FieldParams) -> Result<ParityVector, CodeError> {
    let scalars: Vec<_> = group.scalars().collect();
    let denominators = lagrange_denominators(&scalars, p)?;
    Ok(ParityVector {
        weights: p.batch_inv(&denominators)?,
    })
}

/// Applies the parity row to the group's coded shards, one output per
/// coordinate. The group is honest only if every coordinate vanishes.
pub fn run_test(
    group: &TestGroup,
    coded: &[CodedShard],
    pv: &ParityVector,
    p: &FieldParams,
) -> Result<TestOutcome, CodeError> {
    let size = group.members().len();
    if coded.len() != size || pv.weights.len() != size {
        return Err(CodeError::ShapeMismatch(format!(
            "group of {size}, {} coded shards, {} weights",
            coded.len(),
            pv.weights.len()
        )));
    }
    for ((id, x), c) in group.members().iter().zip(coded) {
        if c.scalar != *x {
            return Err(CodeError::ShapeMismatch(format!(
                "coded shard from {id} carries scalar {}, expected {x}",
                c.scalar
            )));
        }
    }
    let len = coded[0].values.len();
    if coded.iter().any(|c| c.values.len() != len) {
        return Err(CodeError::ShapeMismatch(
            "coded shards of unequal length".into(),
        ));
    }
    let mut output = vec![FieldElement::ZERO; len];
    for (c, &w) in coded.iter().zip(&pv.weights) {
        for (o, &v) in output.iter_mut().zip(&c.values) {
            *o = p.add(*o, p.mul(w, v));
        }
    }
    let verdict = if output.iter().all(|o| o.is_zero()) {
        Verdict::Honest
    } else {
        Verdict::Positive
    };
    Ok(TestOutcome { output, verdict })
}

/// Recovers the shard from exactly `m = subset.len()` coded shards by
/// Lagrange interpolation of each coordinate.
///
/// The returned shard records the full packed capacity as its byte length;
/// call [`Shard::with_byte_length`] with the true length before unpacking.
pub fn decode(subset: &[CodedShard], p: &FieldParams) -> Result<Shard, CodeError> {
    let matrix = interpolation_matrix(&subset.iter().map(|c| c.scalar).collect::<Vec<_>>(), p)?;
    let len = subset[0].values.len();
    if len == 0 || subset.iter().any(|c| c.values.len() != len) {
        return Err(CodeError::ShapeMismatch(
            "coded shards must share a nonzero length".into(),
        ));
    }
    let m = subset.len();
    let mut subshards = vec![vec![FieldElement::ZERO; len]; m];
    for (row, out) in matrix.iter().zip(subshards.iter_mut()) {
        for (&coef, c) in row.iter().zip(subset) {
            for (o, &v) in out.iter_mut().zip(&c.values) {
                *o = p.add(*o, p.mul(coef, v));
            }
        }
    }
    let capacity = m * len * p.bytes_per_element();
    Shard::new(subshards, capacity)
}

/// Concatenates the sub-shards and unpacks the original byte string.
pub fn decode_to_bytes(shard: &Shard, p: &FieldParams) -> Result<Vec<u8>, CodeError> {
    let flat: Vec<_> = shard.subshards().iter().flatten().copied().collect();
    Ok(p.unpack_bytes(&flat, shard.original_byte_length())?)
}

/// The inverse of the `m x m` Vandermonde matrix `G[j][v] = x_j^v`:
/// entry `[v][j]` is the coefficient of `x^v` in the `j`-th Lagrange basis
/// polynomial.
pub fn interpolation_matrix(
    scalars: &[FieldElement],
    p: &FieldParams,
) -> Result<Vec<Vec<FieldElement>>, CodeError> {
    let m = scalars.len();
    if m == 0 {
        return Err(CodeError::ShapeMismatch(
            "need at least one coded shard".into(),
        ));
    }
    check_distinct(scalars.iter().copied())?;

    // Master polynomial prod_k (x - x_k), coefficients low to high.
    let mut master = vec![FieldElement::ZERO; m + 1];
    master[0] = FieldElement::ONE;
    for (deg, &xk) in scalars.iter().enumerate() {
        for i in (0..=deg + 1).rev() {
            let shifted = if i > 0 {
                master[i - 1]
            } else {
                FieldElement::ZERO
            };
            master[i] = p.sub(shifted, p.mul(xk, master[i]));
        }
    }

    let denominators = lagrange_denominators(scalars, p)?;
    let inv_den = p.batch_inv(&denominators)?;
    let mut matrix = vec![vec![FieldElement::ZERO; m]; m];
    for (j, &xj) in scalars.iter().enumerate() {
        // Synthetic division of the master polynomial by (x - x_j).
        let mut carry = master[m];
        for v in (0..m).rev() {
            matrix[v][j] = p.mul(carry, inv_den[j]);
            carry = p.add(master[v], p.mul(xj, carry));
        }
    }
    Ok(matrix)
}

fn lagrange_denominators(
    scalars: &[FieldElement],
    p: &FieldParams,
) -> Result<Vec<FieldElement>, CodeError> {
    check_distinct(scalars.iter().copied())?;
    Ok(scalars
        .iter()
        .enumerate()
        .map(|(j, &xj)| {
            scalars
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != j)
                .fold(FieldElement::ONE, |acc, (_, &xk)| p.mul(acc, p.sub(xj, xk)))
        })
        .collect())
}

fn check_distinct(scalars: impl Iterator<Item = FieldElement>) -> Result<(), CodeError> {
    let mut seen = std::collections::HashSet::new();
    for x in scalars {
        if !seen.insert(x) {
            return Err(CodeError::DuplicateScalar(x));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn f11() -> FieldParams {
        FieldParams::new(11).unwrap()
    }

    fn worked_shard(p: &FieldParams) -> Shard {
        Shard::new(vec![vec![p.element(3)], vec![p.element(5)]], 0).unwrap()
    }

    fn group(p: &FieldParams, xs: &[u64]) -> TestGroup {
        TestGroup::new(
            xs.iter()
                .enumerate()
                .map(|(i, &x)| (NodeId(i as u32), p.element(x)))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn encode_examples() {
        let p = f11();
        let shard = worked_shard(&p);
        assert_eq!(encode(&shard, p.element(1), &p).values, vec![p.element(8)]);
        assert_eq!(encode(&shard, p.element(2), &p).values, vec![p.element(2)]);
        assert_eq!(encode(&shard, p.element(3), &p).values, vec![p.element(7)]);
        assert_eq!(
            encode(&shard, FieldElement::ZERO, &p).values,
            shard.subshards()[0]
        );
    }

    #[test]
    fn parity_examples() {
        let p = f11();
        let g = group(&p, &[1, 2, 3]);
        let pv = parity_vector(&g, &p).unwrap();
        assert_eq!(pv.weights, vec![p.element(6), p.element(10), p.element(6)]);
        let sum = pv
            .weights
            .iter()
            .fold(FieldElement::ZERO, |a, &w| p.add(a, w));
        assert_eq!(sum, FieldElement::ZERO);
    }

    #[test]
    fn run_test_examples() {
        let p = f11();
        let g = group(&p, &[1, 2, 3]);
        let pv = parity_vector(&g, &p).unwrap();
        let coded = |vals: [u64; 3]| -> Vec<CodedShard> {
            vals.iter()
                .zip(1..)
                .map(|(&v, x)| CodedShard {
                    scalar: p.element(x),
                    values: vec![p.element(v)],
                })
                .collect()
        };
        let honest = run_test(&g, &coded([8, 2, 7]), &pv, &p).unwrap();
        assert_eq!(honest.output, vec![FieldElement::ZERO]);
        assert_eq!(honest.verdict, Verdict::Honest);

        let perturbed = run_test(&g, &coded([8, 3, 7]), &pv, &p).unwrap();
        assert_eq!(perturbed.output, vec![p.element(10)]);
        assert_eq!(perturbed.verdict, Verdict::Positive);

        let empty: Vec<_> = (1..=3)
            .map(|x| CodedShard {
                scalar: p.element(x),
                values: vec![],
            })
            .collect();
        let vacuous = run_test(&g, &empty, &pv, &p).unwrap();
        assert!(vacuous.output.is_empty());
        assert_eq!(vacuous.verdict, Verdict::Honest);
    }

    #[test]
    fn run_test_shape_errors() {
        let p = f11();
        let g = group(&p, &[1, 2, 3]);
        let pv = parity_vector(&g, &p).unwrap();
        let mut coded: Vec<_> = (1..=3)
            .map(|x| CodedShard {
                scalar: p.element(x),
                values: vec![p.element(1)],
            })
            .collect();
        assert!(matches!(
            run_test(&g, &coded[..2], &pv, &p),
            Err(CodeError::ShapeMismatch(_))
        ));
        coded[2].values.push(FieldElement::ONE);
        assert!(matches!(
            run_test(&g, &coded, &pv, &p),
            Err(CodeError::ShapeMismatch(_))
        ));
        coded[2].values.pop();
        coded[1].scalar = p.element(9);
        assert!(matches!(
            run_test(&g, &coded, &pv, &p),
            Err(CodeError::ShapeMismatch(_))
        ));
    }

    #[test]
    fn group_validation() {
        let p = f11();
        let dup = TestGroup::new(vec![(NodeId(0), p.element(1)), (NodeId(1), p.element(1))]);
        assert_eq!(dup, Err(CodeError::DuplicateScalar(p.element(1))));
        let zero = TestGroup::new(vec![
            (NodeId(0), p.element(1)),
            (NodeId(1), FieldElement::ZERO),
        ]);
        assert_eq!(zero, Err(CodeError::ZeroScalar(NodeId(1))));
        assert_eq!(
            TestGroup::new(vec![(NodeId(0), p.element(1))]),
            Err(CodeError::GroupTooSmall(1))
        );
    }

    #[test]
    fn decode_examples() {
        let p = f11();
        let coded = vec![
            CodedShard {
                scalar: p.element(1),
                values: vec![p.element(8)],
            },
            CodedShard {
                scalar: p.element(2),
                values: vec![p.element(2)],
            },
        ];
        let shard = decode(&coded, &p).unwrap();
        assert_eq!(shard.subshards(), &[vec![p.element(3)], vec![p.element(5)]]);

        // The 2x2 inverse worked by hand.
        let inv = interpolation_matrix(&[p.element(1), p.element(2)], &p).unwrap();
        assert_eq!(
            inv,
            vec![
                vec![p.element(2), p.element(10)],
                vec![p.element(10), p.element(1)]
            ]
        );

        let single = CodedShard {
            scalar: p.element(4),
            values: vec![p.element(9), p.element(1)],
        };
        assert_eq!(
            decode(std::slice::from_ref(&single), &p)
                .unwrap()
                .subshards(),
            std::slice::from_ref(&single.values)
        );

        let dup = vec![coded[0].clone(), coded[0].clone()];
        assert_eq!(
            decode(&dup, &p),
            Err(CodeError::DuplicateScalar(p.element(1)))
        );
    }

    #[test]
    fn bytes_roundtrip_edges() {
        let p = FieldParams::mersenne61();
        for data in [vec![], vec![1u8, 2, 3]] {
            let shard = Shard::from_bytes(&data, 2, &p).unwrap();
            assert_eq!(shard.len(), 1);
            let coded: Vec<_> = [5u64, 9]
                .iter()
                .map(|&x| encode(&shard, p.element(x), &p))
                .collect();
            let back = decode(&coded, &p)
                .unwrap()
                .with_byte_length(data.len(), &p)
                .unwrap();
            assert_eq!(decode_to_bytes(&back, &p).unwrap(), data);
        }
    }

    #[test]
    fn byte_length_overflow() {
        let p = FieldParams::mersenne61();
        let shard = Shard::from_bytes(&[1, 2, 3], 2, &p).unwrap();
        assert!(matches!(
            shard.with_byte_length(15, &p),
            Err(CodeError::Field(FieldError::LengthOverflow {
                stored: 15,
                capacity: 14
            }))
        ));
    }

    proptest! {
        #[test]
        fn parity_orthogonality(m in 1usize..10, seed in any::<u64>()) {
            use rand::{seq::index::sample, SeedableRng};
            let p = FieldParams::new(257).unwrap();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let xs: Vec<u64> = sample(&mut rng, 256, m + 1).into_iter().map(|v| v as u64 + 1).collect();
            let g = group(&p, &xs);
            let pv = parity_vector(&g, &p).unwrap();
            for power in 0..=m as u64 {
                let sum = g.scalars().zip(&pv.weights)
                    .fold(FieldElement::ZERO, |acc, (x, &w)| p.add(acc, p.mul(w, p.pow(x, power))));
                let expected = if power == m as u64 { FieldElement::ONE } else { FieldElement::ZERO };
                prop_assert_eq!(sum, expected);
            }
        }

        #[test]
        fn decode_inverts_encode(data in proptest::collection::vec(any::<u8>(), 0..300), m in 1usize..7) {
            let p = FieldParams::mersenne61();
            let shard = Shard::from_bytes(&data, m, &p).unwrap();
            let coded: Vec<_> = (0..m as u64).map(|x| encode(&shard, p.element(x * 7 + 3), &p)).collect();
            let back = decode(&coded, &p).unwrap();
            prop_assert_eq!(back.subshards(), shard.subshards());
            let back = back.with_byte_length(data.len(), &p).unwrap();
            prop_assert_eq!(decode_to_bytes(&back, &p).unwrap(), data);
        }
    }
}
