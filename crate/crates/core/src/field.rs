//! Prime-field arithmetic over `F_q` for `q < 2^64`, plus the byte packing
//! that turns shard bytes into residues and back.
//!
//! The modulus is a runtime parameter so the same code paths serve the
//! production Mersenne prime `2^61 - 1` and the small hand-checkable
//! fields (`q = 11`, `q = 257`) used to measure detection failure rates.

use std::fmt;

use rand::Rng;
use thiserror::Error;

/// `2^61 - 1`.
pub const MERSENNE_61: u64 = (1u64 << 61) - 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FieldError {
    #[error("modulus {0} is not prime")]
    NotPrime(u64),
    #[error("{bytes} bytes per element do not fit below modulus {modulus}")]
    PackingTooWide { modulus: u64, bytes: usize },
    #[error("field with modulus {0} is too small to pack whole bytes")]
    PackingUnsupported(u64),
    #[error("inverse of zero")]
    ZeroInverse,
    #[error("stored length {stored} exceeds packed capacity {capacity}")]
    LengthOverflow { stored: usize, capacity: usize },
    #[error("element {0} is not a packed byte chunk")]
    ElementOutOfRange(u64),
}

/// A reduced residue. Only a [`FieldParams`] can produce one from a raw
/// integer, which keeps every value below the modulus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct FieldElement(u64);

impl FieldElement {
    pub const ZERO: FieldElement = FieldElement(0);
    pub const ONE: FieldElement = FieldElement(1);

    #[inline]
    pub fn value(self) -> u64 {
        self.0
    }

    #[inline]
    pub fn is_zero(self) -> bool {
        self.0 == 0
    }
}

impl fmt::Display for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FieldParams {
    modulus: u64,
    bytes_per_element: usize,
}

impl FieldParams {
    /// Field of prime order `modulus`, packing as many whole bytes per
    /// element as fit below the modulus (zero for `q < 256`).
    pub fn new(modulus: u64) -> Result<Self, FieldError> {
        let bytes = max_packable_bytes(modulus);
        Self::with_bytes_per_element(modulus, bytes)
    }

    pub fn with_bytes_per_element(
        modulus: u64,
        bytes_per_element: usize,
    ) -> Result<Self, FieldError> {
        if !is_prime(modulus) {
            return Err(FieldError::NotPrime(modulus));
        }
        if bytes_per_element > max_packable_bytes(modulus) {
            return Err(FieldError::PackingTooWide {
                modulus,
                bytes: bytes_per_element,
            });
        }
        Ok(Self {
            modulus,
            bytes_per_element,
        })
    }

    /// The production field: `q = 2^61 - 1`, 7 payload bytes per element.
    pub fn mersenne61() -> Self {
        Self {
            modulus: MERSENNE_61,
            bytes_per_element: 7,
        }
    }

    #[inline]
    pub fn modulus(&self) -> u64 {
        self.modulus
    }

    #[inline]
    pub fn bytes_per_element(&self) -> usize {
        self.bytes_per_element
    }

    /// Width of a residue on the wire: enough big-endian bytes for `q - 1`.
    pub fn element_width(&self) -> usize {
        let bits = 64 - (self.modulus - 1).leading_zeros() as usize;
        bits.div_ceil(8).max(1)
    }

    #[inline]
    pub fn element(&self, value: u64) -> FieldElement {
        FieldElement(value % self.modulus)
    }

    /// Accepts `value` only if it is already reduced.
    pub fn try_element(&self, value: u64) -> Option<FieldElement> {
        (value < self.modulus).then_some(FieldElement(value))
    }

    #[inline]
    pub fn add(&self, a: FieldElement, b: FieldElement) -> FieldElement {
        // a, b < q < 2^64, so the sum fits in u128 without a branchy carry check.
        let sum = a.0 as u128 + b.0 as u128;
        let q = self.modulus as u128;
        FieldElement(if sum >= q {
            (sum - q) as u64
        } else {
            sum as u64
        })
    }

    #[inline]
    pub fn sub(&self, a: FieldElement, b: FieldElement) -> FieldElement {
        if a.0 >= b.0 {
            FieldElement(a.0 - b.0)
        } else {
            FieldElement(self.modulus - (b.0 - a.0))
        }
    }

    #[inline]
    pub fn neg(&self, a: FieldElement) -> FieldElement {
        if a.0 == 0 {
            a
        } else {
            FieldElement(self.modulus - a.0)
        }
    }

    #[inline]
    pub fn mul(&self, a: FieldElement, b: FieldElement) -> FieldElement {
        let prod = a.0 as u128 * b.0 as u128;
        if self.modulus == MERSENNE_61 {
            FieldElement(reduce_mersenne61(prod))
        } else {
            FieldElement((prod % self.modulus as u128) as u64)
        }
    }

    pub fn pow(&self, base: FieldElement, mut exp: u64) -> FieldElement {
        let mut acc = FieldElement::ONE;
        let mut sq = base;
        while exp > 0 {
            if exp & 1 == 1 {
                acc = self.mul(acc, sq);
            }
            sq = self.mul(sq, sq);
            exp >>= 1;
        }
        acc
    }

    /// Multiplicative inverse by Fermat's little theorem.
    pub fn inv(&self, a: FieldElement) -> Result<FieldElement, FieldError> {
        if a.is_zero() {
            return Err(FieldError::ZeroInverse);
        }
        Ok(self.pow(a, self.modulus - 2))
    }

    /// Inverts every element with one field inversion (Montgomery's trick).
    pub fn batch_inv(&self, values: &[FieldElement]) -> Result<Vec<FieldElement>, FieldError> {
        let mut prefix = Vec::with_capacity(values.len());
        let mut acc = FieldElement::ONE;
        for &v in values {
            if v.is_zero() {
                return Err(FieldError::ZeroInverse);
            }
            prefix.push(acc);
            acc = self.mul(acc, v);
        }
        let mut inv_acc = self.inv(acc)?;
        let mut out = vec![FieldElement::ZERO; values.len()];
        for i in (0..values.len()).rev() {
            out[i] = self.mul(inv_acc, prefix[i]);
            inv_acc = self.mul(inv_acc, values[i]);
        }
        Ok(out)
    }

    pub fn random<R: Rng + ?Sized>(&self, rng: &mut R) -> FieldElement {
        FieldElement(rng.gen_range(0..self.modulus))
    }

    pub fn random_nonzero<R: Rng + ?Sized>(&self, rng: &mut R) -> FieldElement {
        FieldElement(rng.gen_range(1..self.modulus))
    }

    /// Packs bytes into residues, `bytes_per_element` big-endian bytes at a
    /// time. The last chunk is zero-padded on the right; the true length
    /// travels alongside in [`PackedBytes::byte_len`].
    pub fn pack_bytes(&self, data: &[u8]) -> Result<PackedBytes, FieldError> {
        let width = self.bytes_per_element;
        if width == 0 {
            return Err(FieldError::PackingUnsupported(self.modulus));
        }
        let elements = data
            .chunks(width)
            .map(|chunk| {
                let mut v = 0u64;
                for i in 0..width {
                    v = (v << 8) | chunk.get(i).copied().unwrap_or(0) as u64;
                }
                FieldElement(v)
            })
            .collect();
        Ok(PackedBytes {
            elements,
            byte_len: data.len(),
        })
    }

    /// Inverse of [`pack_bytes`](Self::pack_bytes). Extra trailing elements
    /// beyond `byte_len` are ignored.
    pub fn unpack_bytes(
        &self,
        elements: &[FieldElement],
        byte_len: usize,
    ) -> Result<Vec<u8>, FieldError> {
        let width = self.bytes_per_element;
        if width == 0 {
            return Err(FieldError::PackingUnsupported(self.modulus));
        }
        let capacity = elements.len() * width;
        if byte_len > capacity {
            return Err(FieldError::LengthOverflow {
                stored: byte_len,
                capacity,
            });
        }
        let limit = if width >= 8 {
            u64::MAX
        } else {
            (1u64 << (8 * width)) - 1
        };
        let mut out = Vec::with_capacity(byte_len);
        for e in &elements[..byte_len.div_ceil(width)] {
            if e.0 > limit {
                return Err(FieldError::ElementOutOfRange(e.0));
            }
            let bytes = e.0.to_be_bytes();
            out.extend_from_slice(&bytes[8 - width..]);
        }
        out.truncate(byte_len);
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackedBytes {
    pub elements: Vec<FieldElement>,
    pub byte_len: usize,
}

#[inline]
fn reduce_mersenne61(x: u128) -> u64 {
    // x < 2^122: fold the high 61-bit limb onto the low one twice.
    let folded = (x as u64 & MERSENNE_61) as u128 + (x >> 61);
    let folded = (folded as u64 & MERSENNE_61) + (folded >> 61) as u64;
    if folded >= MERSENNE_61 {
        folded - MERSENNE_61
    } else {
        folded
    }
}

/// Largest `k` with `2^(8k) <= q`.
fn max_packable_bytes(modulus: u64) -> usize {
    let mut k = 0;
    while k < 7 && (1u128 << (8 * (k + 1))) <= modulus as u128 {
        k += 1;
    }
    k
}

/// Deterministic Miller-Rabin; the first twelve prime bases are exact for
/// every 64-bit input.
pub fn is_prime(n: u64) -> bool {
    const BASES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    if n < 2 {
        return false;
    }
    for &p in &BASES {
        if n.is_multiple_of(p) {
            return n == p;
        }
    }
    let mulmod = |a: u64, b: u64| ((a as u128 * b as u128) % n as u128) as u64;
    let powmod = |mut b: u64, mut e: u64| {
        let mut acc = 1u64;
        while e > 0 {
            if e & 1 == 1 {
                acc = mulmod(acc, b);
            }
            b = mulmod(b, b);
            e >>= 1;
        }
        acc
    };
    let s = (n - 1).trailing_zeros();
    let d = (n - 1) >> s;
    'bases: for &a in &BASES {
        let mut x = powmod(a, d);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mulmod(x, x);
            if x == n - 1 {
                continue 'bases;
            }
        }
        return false;
    }
    true
}
