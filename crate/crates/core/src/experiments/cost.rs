//! Closed-form communication cost of a join for each scheme, in bytes.

use super::ExperimentError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CostParams {
    /// Shard size in bytes.
    pub b: u64,
    pub n: u64,
    pub m: u64,
    /// Scalar bytes.
    pub w: u64,
    /// Signature bytes.
    pub z: u64,
    /// Secret-key bytes.
    pub s: u64,
    /// Checksum digest bytes.
    pub d: u64,
}

impl CostParams {
    /// Table defaults: d=16 (MD5), s=128, w=1, z=256.
    pub fn new(b: u64, n: u64, m: u64) -> Self {
        Self {
            b,
            n,
            m,
            w: 1,
            z: 256,
            s: 128,
            d: 16,
        }
    }

    /// Coding size `m = 0.1 n`, rounded and at least 1.
    pub fn default_m(n: u64) -> u64 {
        ((n + 5) / 10).max(1)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let fields = [
            ("b", self.b),
            ("n", self.n),
            ("m", self.m),
            ("w", self.w),
            ("z", self.z),
            ("s", self.s),
            ("d", self.d),
        ];
        match fields.iter().find(|(_, v)| *v == 0) {
            Some((name, _)) => Err(ExperimentError::InvalidParams(format!(
                "{name} must be positive"
            ))),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SchemeCost {
    pub scheme: &'static str,
    pub communication_bytes: u64,
    pub complexity_class: &'static str,
}

fn checked(v: Option<u64>) -> Result<u64, ExperimentError> {
    v.ok_or_else(|| ExperimentError::InvalidParams("cost overflows u64".into()))
}

/// Every member sends the full shard.
pub fn cost_uncoded(cp: &CostParams) -> Result<SchemeCost, ExperimentError> {
    cp.validate()?;
    Ok(SchemeCost {
        scheme: "uncoded",
        communication_bytes: checked(cp.n.checked_mul(cp.b))?,
        complexity_class: "O(n^2 b)",
    })
}

/// One member sends the shard, the others send digests.
pub fn cost_checksum(cp: &CostParams) -> Result<SchemeCost, ExperimentError> {
    cp.validate()?;
    let bytes = checked(cp.d.checked_mul(cp.n - 1).and_then(|x| x.checked_add(cp.b)))?;
    Ok(SchemeCost {
        scheme: "checksum",
        communication_bytes: bytes,
        complexity_class: "O(n^2)",
    })
}

/// Credential, then `m+1` coded shards each with scalar and two signatures.
pub fn cost_recagt(cp: &CostParams) -> Result<SchemeCost, ExperimentError> {
    cp.validate()?;
    let credential = cp.w + cp.z + cp.s;
    let group = cp.m + 1;
    let shards = checked(group.checked_mul(cp.b.div_ceil(cp.m)))?;
    let headers = checked(group.checked_mul(cp.w + 2 * cp.z))?;
    Ok(SchemeCost {
        scheme: "recagt",
        communication_bytes: checked(
            credential
                .checked_add(shards)
                .and_then(|x| x.checked_add(headers)),
        )?,
        complexity_class: "O(log^2(m) loglog(m))",
    })
}

pub fn all_costs(cp: &CostParams) -> Result<[SchemeCost; 3], ExperimentError> {
    Ok([cost_uncoded(cp)?, cost_checksum(cp)?, cost_recagt(cp)?])
}
