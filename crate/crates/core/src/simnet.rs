//! Deterministic discrete-event simulation of one committee and one join.
//!
//! Time is an integer tick count. Every request gets its response (if any)
//! after a delay drawn uniformly from `1..=delta`, and a timeout fires at
//! exactly `delta`; equal timestamps are processed in insertion order, so a
//! response landing on the deadline still counts.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap};
use std::fmt;
use std::sync::Arc;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::codes::{self, CodeError, CodedShard, Shard, TestGroup};
use crate::field::{FieldElement, FieldParams};
use crate::gtest::{
    self, GroupTester, GtConfig, GtError, IdentificationResult, OracleOutcome, TestOracle,
};
use crate::identity::{
    self, Adjudication, CertificateAuthority, Ed25519Scheme, IdentityError, KeyedHashScheme,
    Member, ScalarCheck, SignatureScheme, SignedShardMessage, VerificationVerdict, WireFormat,
};
use crate::NodeId;

/// Size of a shard request: newcomer id and target id, 4 bytes each.
pub const REQUEST_BYTES: usize = 8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("join failed after {trials} trials: {source}")]
    JoinFailed { trials: u64, source: GtError },
    #[error(transparent)]
    Identity(#[from] IdentityError),
    #[error(transparent)]
    Code(#[from] CodeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OffsetDistribution {
    /// One uniformly chosen coordinate gets a uniform nonzero offset.
    SingleCoordinate,
    /// Every coordinate gets an independent uniform offset, not all zero.
    EveryCoordinate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdversaryProfile {
    HonestBehavior,
    PerturbShard(OffsetDistribution),
    /// Claims a different scalar while replaying its real CA signature.
    TamperScalar,
    /// Countersigns the wrong bytes on every attempt.
    BadSecondSignature,
    Silent,
}

impl AdversaryProfile {
    pub fn is_adversarial(self) -> bool {
        self != AdversaryProfile::HonestBehavior
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "honest" => Self::HonestBehavior,
            "perturb" | "perturb-single" => {
                Self::PerturbShard(OffsetDistribution::SingleCoordinate)
            }
            "perturb-all" => Self::PerturbShard(OffsetDistribution::EveryCoordinate),
            "tamper-scalar" => Self::TamperScalar,
            "bad-signature" => Self::BadSecondSignature,
            "silent" => Self::Silent,
            _ => return None,
        })
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::HonestBehavior => "honest",
            Self::PerturbShard(OffsetDistribution::SingleCoordinate) => "perturb-single",
            Self::PerturbShard(OffsetDistribution::EveryCoordinate) => "perturb-all",
            Self::TamperScalar => "tamper-scalar",
            Self::BadSecondSignature => "bad-signature",
            Self::Silent => "silent",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AdversaryAssignment {
    /// `f` nodes drawn at random from the committee, all with one profile.
    Random(AdversaryProfile),
    Explicit(Vec<(NodeId, AdversaryProfile)>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemeKind {
    KeyedHash,
    Ed25519,
}

impl SchemeKind {
    pub fn build(self) -> Arc<dyn SignatureScheme> {
        match self {
            SchemeKind::KeyedHash => Arc::new(KeyedHashScheme::new()),
            SchemeKind::Ed25519 => Arc::new(Ed25519Scheme),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            SchemeKind::KeyedHash => "keyed-hash",
            SchemeKind::Ed25519 => "ed25519",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub n: usize,
    pub m: usize,
    /// Malice bound assumed by the identification driver; with random
    /// assignment also the number of adversaries planted.
    pub f: usize,
    pub adversaries: AdversaryAssignment,
    pub delta: u64,
    pub field: FieldParams,
    pub seed: u64,
    pub rho: f64,
    /// Size `b` of the committee shard in bytes.
    pub shard_bytes: usize,
    pub scheme: SchemeKind,
    pub wire: WireFormat,
    /// Resend requests before a sender with bad countersignatures is written
    /// off as uncooperative.
    pub max_resends: u32,
}

impl SimConfig {
    pub fn new(n: usize, m: usize, f: usize) -> Self {
        let field = FieldParams::mersenne61();
        Self {
            n,
            m,
            f,
            adversaries: AdversaryAssignment::Random(AdversaryProfile::PerturbShard(
                OffsetDistribution::SingleCoordinate,
            )),
            delta: 100,
            field,
            seed: 0,
            rho: gtest::DEFAULT_RHO,
            shard_bytes: 1024,
            scheme: SchemeKind::KeyedHash,
            wire: WireFormat::for_field(&field),
            max_resends: 2,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_adversaries(mut self, adversaries: AdversaryAssignment) -> Self {
        self.adversaries = adversaries;
        self
    }

    pub fn gt_config(&self) -> GtConfig {
        GtConfig {
            n: self.n,
            m: self.m,
            f: self.f,
            rho: self.rho,
            seed: self.seed,
            strict: false,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.f >= self.n {
            return Err(SimError::InvalidConfig(format!(
                "f={} must be below n={}",
                self.f, self.n
            )));
        }
        if self.delta == 0 {
            return Err(SimError::InvalidConfig("delta must be positive".into()));
        }
        if self.field.bytes_per_element() == 0 {
            return Err(SimError::InvalidConfig(format!(
                "q={} cannot carry byte shards",
                self.field.modulus()
            )));
        }
        if self.n > u32::MAX as usize - 1 {
            return Err(SimError::InvalidConfig("committee too large".into()));
        }
        self.gt_config()
            .validate()
            .map_err(|e| SimError::InvalidConfig(e.to_string()))?;
        if let AdversaryAssignment::Explicit(list) = &self.adversaries {
            let mut seen = BTreeSet::new();
            for (id, _) in list {
                if id.index() >= self.n || !seen.insert(*id) {
                    return Err(SimError::InvalidConfig(format!("bad adversary id {id}")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Actor {
    Ca,
    Newcomer,
    Member(NodeId),
}

impl fmt::Display for Actor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Actor::Ca => f.write_str("ca"),
            Actor::Newcomer => f.write_str("new"),
            Actor::Member(id) => write!(f, "{id}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    Send,
    Deliver,
    Timeout,
    Test,
    Verdict,
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EventKind::Send => "send",
            EventKind::Deliver => "deliver",
            EventKind::Timeout => "timeout",
            EventKind::Test => "test",
            EventKind::Verdict => "verdict",
        })
    }
}

/// One processed event, as recorded in the transcript.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimEvent {
    pub timestamp: u64,
    pub kind: EventKind,
    pub actor: Actor,
    /// Serialized size for sends, zero otherwise.
    pub bytes: u64,
    pub detail: String,
}

/// A committee member as the simulator sees it.
#[derive(Debug, Clone)]
pub struct MemberNode {
    pub member: Member,
    pub coded: CodedShard,
    pub profile: AdversaryProfile,
    /// What this node actually sends when asked.
    pub outgoing: SignedShardMessage,
}

#[derive(Debug)]
pub struct CommitteeState {
    pub ca: CertificateAuthority,
    pub members: Vec<MemberNode>,
    pub shard: Shard,
    pub ground_truth: Vec<u8>,
    /// Nodes with a non-honest profile.
    pub planted: BTreeSet<NodeId>,
    /// Credential issued to the joining node, id `n`.
    pub newcomer: Member,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MessageVerdict {
    Accept,
    Resend,
    FraudProof,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JoinTranscript {
    pub events: Vec<SimEvent>,
    pub verdicts: Vec<(NodeId, MessageVerdict)>,
    pub fraud_proofs: Vec<(NodeId, Adjudication)>,
    pub identification: IdentificationResult,
    pub planted: BTreeSet<NodeId>,
    pub elapsed: u64,
    pub bytes_sent: BTreeMap<Actor, u64>,
    pub total_bytes: u64,
    /// Whether the shard decoded from honest members matches the original.
    pub recovered_matches: Option<bool>,
}

impl JoinTranscript {
    /// One tab-separated line per event after a header line.
    pub fn to_trace(&self) -> String {
        let mut out = String::from("timestamp\tkind\tactor\tbytes\tdetail\n");
        for e in &self.events {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\n",
                e.timestamp, e.kind, e.actor, e.bytes, e.detail
            ));
        }
        out
    }

    pub fn exact(&self) -> bool {
        self.identification.malicious == self.planted
    }
}

/// Builds CA, members, the random original shard and the adversaries.
pub fn build_committee(cfg: &SimConfig) -> Result<CommitteeState, SimError> {
    cfg.validate()?;
    let p = &cfg.field;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut ground_truth = vec![0u8; cfg.shard_bytes];
    rng.fill_bytes(&mut ground_truth);
    let shard = Shard::from_bytes(&ground_truth, cfg.m, p)?;

    let mut ca = CertificateAuthority::new(cfg.scheme.build(), &mut rng);
    let members = ca.init_committee(cfg.n, p, &mut rng)?;
    for m in &members {
        // The CA is honest, so the resend branch never triggers here.
        debug_assert_eq!(
            identity::member_verify_scalar(ca.scheme(), &m.identity, ca.public_key()),
            ScalarCheck::Accept
        );
    }

    let mut profiles = vec![AdversaryProfile::HonestBehavior; cfg.n];
    match &cfg.adversaries {
        AdversaryAssignment::Random(profile) => {
            for i in rand::seq::index::sample(&mut rng, cfg.n, cfg.f) {
                profiles[i] = *profile;
            }
        }
        AdversaryAssignment::Explicit(list) => {
            for (id, profile) in list {
                profiles[id.index()] = *profile;
            }
        }
    }

    let mut nodes = Vec::with_capacity(cfg.n);
    for (member, profile) in members.into_iter().zip(profiles) {
        let coded = codes::encode(&shard, member.identity.scalar, p);
        let outgoing = craft_message(ca.scheme(), &member, &coded, profile, p, &mut rng)?;
        nodes.push(MemberNode {
            member,
            coded,
            profile,
            outgoing,
        });
    }
    let planted = nodes
        .iter()
        .filter(|n| n.profile.is_adversarial())
        .map(|n| n.member.identity.node_id)
        .collect();
    let newcomer = ca.issue(NodeId(cfg.n as u32), p, &mut rng)?;
    Ok(CommitteeState {
        ca,
        members: nodes,
        shard,
        ground_truth,
        planted,
        newcomer,
    })
}

fn craft_message(
    scheme: &dyn SignatureScheme,
    member: &Member,
    coded: &CodedShard,
    profile: AdversaryProfile,
    p: &FieldParams,
    rng: &mut ChaCha8Rng,
) -> Result<SignedShardMessage, SimError> {
    let mut msg = identity::member_build_message(
        scheme,
        &member.identity,
        &member.keys.secret,
        coded.clone(),
    )?;
    match profile {
        AdversaryProfile::HonestBehavior | AdversaryProfile::Silent => {}
        AdversaryProfile::PerturbShard(dist) => {
            let values = &mut msg.payload.values;
            match dist {
                OffsetDistribution::SingleCoordinate => {
                    let at = rng.gen_range(0..values.len());
                    values[at] = p.add(values[at], p.random_nonzero(rng));
                }
                OffsetDistribution::EveryCoordinate => {
                    let offsets = nonzero_offset_vector(values.len(), p, rng);
                    for (v, o) in values.iter_mut().zip(offsets) {
                        *v = p.add(*v, o);
                    }
                }
            }
        }
        AdversaryProfile::TamperScalar => {
            let forged = loop {
                let x = p.random_nonzero(rng);
                if x != msg.scalar {
                    break x;
                }
            };
            msg.scalar = forged;
            msg.payload.scalar = forged;
        }
        AdversaryProfile::BadSecondSignature => {
            msg.second_sig = scheme.sign(b"not the CA signature", &member.keys.secret)?;
        }
    }
    Ok(msg)
}

/// Uniform offsets over `F_q^len` conditioned on not being all zero.
pub fn nonzero_offset_vector<R: Rng + ?Sized>(
    len: usize,
    p: &FieldParams,
    rng: &mut R,
) -> Vec<FieldElement> {
    loop {
        let v: Vec<_> = (0..len).map(|_| p.random(rng)).collect();
        if v.iter().any(|x| !x.is_zero()) {
            return v;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Pending {
    /// Member response to attempt `attempt` of a request.
    Response {
        from: NodeId,
        attempt: u32,
    },
    Timeout {
        target: NodeId,
        attempt: u32,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Exclusion {
    Silent,
    Fraud,
    Uncooperative,
}

/// Event queue, clock, transport accounting and the newcomer's view.
struct Simulator<'a> {
    cfg: &'a SimConfig,
    committee: &'a CommitteeState,
    rng: ChaCha8Rng,
    now: u64,
    seq: u64,
    queue: BinaryHeap<Reverse<(u64, u64)>>,
    scheduled: HashMap<u64, Pending>,
    /// Request attempts still awaiting an outcome, by node.
    open: BTreeMap<NodeId, u32>,
    accepted: BTreeMap<NodeId, CodedShard>,
    excluded: BTreeMap<NodeId, Exclusion>,
    events: Vec<SimEvent>,
    verdicts: Vec<(NodeId, MessageVerdict)>,
    fraud_proofs: Vec<(NodeId, Adjudication)>,
    bytes_sent: BTreeMap<Actor, u64>,
    total_bytes: u64,
}

impl<'a> Simulator<'a> {
    fn new(cfg: &'a SimConfig, committee: &'a CommitteeState) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(1);
        Self {
            cfg,
            committee,
            rng,
            now: 0,
            seq: 0,
            queue: BinaryHeap::new(),
            scheduled: HashMap::new(),
            open: BTreeMap::new(),
            accepted: BTreeMap::new(),
            excluded: BTreeMap::new(),
            events: Vec::new(),
            verdicts: Vec::new(),
            fraud_proofs: Vec::new(),
            bytes_sent: BTreeMap::new(),
            total_bytes: 0,
        }
    }

    fn log(&mut self, kind: EventKind, actor: Actor, bytes: u64, detail: String) {
        self.events.push(SimEvent {
            timestamp: self.now,
            kind,
            actor,
            bytes,
            detail,
        });
    }

    fn send(&mut self, from: Actor, to: Actor, bytes: usize, what: &str) {
        self.account(from, bytes);
        self.log(
            EventKind::Send,
            from,
            bytes as u64,
            format!("{what} to {to}"),
        );
    }

    fn account(&mut self, from: Actor, bytes: usize) {
        *self.bytes_sent.entry(from).or_default() += bytes as u64;
        self.total_bytes += bytes as u64;
    }

    fn schedule(&mut self, at: u64, what: Pending) {
        self.queue.push(Reverse((at, self.seq)));
        self.scheduled.insert(self.seq, what);
        self.seq += 1;
    }

    fn delay(&mut self) -> u64 {
        self.rng.gen_range(1..=self.cfg.delta)
    }

    /// CA hands the newcomer its scalar, signature and secret key.
    fn admit_newcomer(&mut self) -> Result<(), SimError> {
        let newcomer = &self.committee.newcomer;
        let bytes = self
            .cfg
            .wire
            .encode_credential(&newcomer.identity, &newcomer.keys.secret)?;
        self.send(Actor::Ca, Actor::Newcomer, bytes.len(), "credential");
        self.now += self.delay();
        let ca = &self.committee.ca;
        let check =
            identity::member_verify_scalar(ca.scheme(), &newcomer.identity, ca.public_key());
        self.log(
            EventKind::Deliver,
            Actor::Newcomer,
            0,
            format!("credential scalar check {check:?}"),
        );
        Ok(())
    }

    fn request(&mut self, target: NodeId, attempt: u32) {
        let what = if attempt == 0 {
            "request"
        } else {
            "resend request"
        };
        self.send(Actor::Newcomer, Actor::Member(target), REQUEST_BYTES, what);
        self.open.insert(target, attempt);
        if self.committee.members[target.index()].profile != AdversaryProfile::Silent {
            let at = self.now + self.delay();
            self.schedule(
                at,
                Pending::Response {
                    from: target,
                    attempt,
                },
            );
        }
        let deadline = self.now + self.cfg.delta;
        self.schedule(deadline, Pending::Timeout { target, attempt });
    }

    /// Makes sure every member of the group has either an accepted message
    /// or an exclusion, running the event loop as needed.
    fn collect(&mut self, members: &[NodeId]) {
        for &id in members {
            if !self.accepted.contains_key(&id)
                && !self.excluded.contains_key(&id)
                && !self.open.contains_key(&id)
            {
                self.request(id, 0);
            }
        }
        while members.iter().any(|id| self.open.contains_key(id)) {
            let Some(Reverse((at, seq))) = self.queue.pop() else {
                break;
            };
            let what = self.scheduled.remove(&seq).expect("scheduled event");
            self.now = self.now.max(at);
            match what {
                Pending::Response { from, attempt } if self.open.get(&from) == Some(&attempt) => {
                    self.deliver(from, attempt)
                }
                Pending::Timeout { target, attempt }
                    if self.open.get(&target) == Some(&attempt) =>
                {
                    self.open.remove(&target);
                    self.excluded.insert(target, Exclusion::Silent);
                    self.log(
                        EventKind::Timeout,
                        Actor::Member(target),
                        0,
                        format!("no response within delta={}", self.cfg.delta),
                    );
                }
                // Stale: the attempt was already resolved.
                _ => {}
            }
        }
    }

    fn deliver(&mut self, from: NodeId, attempt: u32) {
        let node = &self.committee.members[from.index()];
        let wire = self.cfg.wire;
        let bytes = wire
            .encode_shard_message(&node.outgoing)
            .expect("wire format fits committee messages");
        self.account(Actor::Member(from), bytes.len());
        self.log(
            EventKind::Deliver,
            Actor::Member(from),
            bytes.len() as u64,
            "shard message to new".into(),
        );
        let msg = wire
            .decode_shard_message(&bytes, &self.cfg.field)
            .expect("wire roundtrip");

        let ca = &self.committee.ca;
        let sender_pk = ca.public_key_of(msg.sender_id).expect("committee member");
        let verdict =
            identity::newcomer_verify_message(ca.scheme(), &msg, sender_pk, ca.public_key());
        self.open.remove(&from);
        match verdict {
            VerificationVerdict::Accept => {
                self.verdicts.push((from, MessageVerdict::Accept));
                self.log(
                    EventKind::Verdict,
                    Actor::Newcomer,
                    0,
                    format!("accept message from {from}"),
                );
                self.accepted.insert(from, msg.payload);
            }
            VerificationVerdict::Resend => {
                self.verdicts.push((from, MessageVerdict::Resend));
                self.log(
                    EventKind::Verdict,
                    Actor::Newcomer,
                    0,
                    format!("resend from {from} (attempt {attempt})"),
                );
                if attempt < self.cfg.max_resends {
                    self.request(from, attempt + 1);
                } else {
                    self.excluded.insert(from, Exclusion::Uncooperative);
                    self.log(
                        EventKind::Verdict,
                        Actor::Newcomer,
                        0,
                        format!("{from} uncooperative after {} resends", attempt),
                    );
                }
            }
            VerificationVerdict::FraudProof(proof) => {
                self.verdicts.push((from, MessageVerdict::FraudProof));
                let proof_bytes = wire
                    .encode_shard_message(&proof)
                    .expect("wire format fits committee messages");
                self.send(
                    Actor::Newcomer,
                    Actor::Ca,
                    proof_bytes.len(),
                    &format!("fraud proof against {from}"),
                );
                let ruling = ca.adjudicate(&proof);
                self.fraud_proofs.push((from, ruling));
                self.log(
                    EventKind::Verdict,
                    Actor::Ca,
                    0,
                    format!("fraud proof against {from}: {ruling:?}"),
                );
                self.excluded.insert(from, Exclusion::Fraud);
            }
        }
    }
}

impl GroupTester for Simulator<'_> {
    fn test_group(&mut self, members: &[NodeId]) -> OracleOutcome {
        self.collect(members);
        let missing: Vec<NodeId> = members
            .iter()
            .copied()
            .filter(|id| self.excluded.contains_key(id))
            .collect();
        let group_label = members
            .iter()
            .map(|id| id.to_string())
            .collect::<Vec<_>>()
            .join(",");
        if !missing.is_empty() {
            let reasons = missing
                .iter()
                .map(|id| format!("{id}:{:?}", self.excluded[id]))
                .collect::<Vec<_>>()
                .join(",");
            self.log(
                EventKind::Test,
                Actor::Newcomer,
                0,
                format!("group [{group_label}] skipped; excluded {reasons}"),
            );
            return OracleOutcome::Unresponsive(missing);
        }
        let p = &self.cfg.field;
        let group = TestGroup::new(
            members
                .iter()
                .map(|id| (*id, self.accepted[id].scalar))
                .collect(),
        )
        .expect("accepted scalars are CA-issued");
        let shards: Vec<CodedShard> = members.iter().map(|id| self.accepted[id].clone()).collect();
        let pv = codes::parity_vector(&group, p).expect("distinct scalars");
        let outcome = codes::run_test(&group, &shards, &pv, p).expect("aligned shards");
        self.log(
            EventKind::Test,
            Actor::Newcomer,
            0,
            format!("group [{group_label}] {:?}", outcome.verdict),
        );
        OracleOutcome::Tested(outcome.verdict)
    }
}

/// Runs the full join: credential, signed shard collection, group testing,
/// fraud handling and shard recovery.
pub fn run_join(cfg: &SimConfig, committee: &CommitteeState) -> Result<JoinTranscript, SimError> {
    cfg.validate()?;
    let mut sim = Simulator::new(cfg, committee);
    sim.admit_newcomer()?;

    let mut oracle = TestOracle::new(sim);
    let identification = match gtest::identify_malicious(&cfg.gt_config(), &mut oracle) {
        Ok(res) => res,
        Err(source) => {
            return Err(SimError::JoinFailed {
                trials: oracle.trials(),
                source,
            })
        }
    };
    let mut sim = oracle.into_inner();
    sim.log(
        EventKind::Verdict,
        Actor::Ca,
        0,
        format!(
            "identified malicious [{}] after {} trials",
            identification
                .malicious
                .iter()
                .map(|id| id.to_string())
                .collect::<Vec<_>>()
                .join(","),
            identification.trials_used
        ),
    );

    let donors: Vec<CodedShard> = identification
        .honest
        .iter()
        .filter_map(|id| sim.accepted.get(id).cloned())
        .take(cfg.m)
        .collect();
    let recovered_matches = if donors.len() == cfg.m {
        let shard = codes::decode(&donors, &cfg.field)?
            .with_byte_length(committee.ground_truth.len(), &cfg.field)?;
        let bytes = codes::decode_to_bytes(&shard, &cfg.field)?;
        let ok = bytes == committee.ground_truth;
        sim.log(
            EventKind::Verdict,
            Actor::Newcomer,
            0,
            format!("decoded shard matches original: {ok}"),
        );
        Some(ok)
    } else {
        None
    };

    Ok(JoinTranscript {
        elapsed: sim.now,
        events: sim.events,
        verdicts: sim.verdicts,
        fraud_proofs: sim.fraud_proofs,
        identification,
        planted: committee.planted.clone(),
        bytes_sent: sim.bytes_sent,
        total_bytes: sim.total_bytes,
        recovered_matches,
    })
}

/// Per-replication outcome, one CSV row each.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationRecord {
    pub replication: u64,
    pub seed: u64,
    pub success: bool,
    pub exact: bool,
    pub trials: u64,
    pub search_trials: u64,
    pub timeouts: u64,
    pub fraud_proofs: u64,
    pub bytes: u64,
    pub elapsed: u64,
    pub recovered: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationStats {
    pub count: u64,
    pub successes: u64,
    pub exact_identifications: u64,
    pub success_rate: f64,
    /// Over successful runs.
    pub trials_mean: f64,
    pub trials_stddev: f64,
    pub bytes_mean: f64,
    pub records: Vec<ReplicationRecord>,
}

/// Seed of replication `i`.
pub fn replication_seed(base: u64, i: u64) -> u64 {
    base.wrapping_add(i.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Runs `count` independent committees and joins in parallel; the result
/// depends only on `cfg`.
pub fn run_replications(cfg: &SimConfig, count: u64) -> Result<ReplicationStats, SimError> {
    cfg.validate()?;
    if count == 0 {
        return Err(SimError::InvalidConfig(
            "replication count must be at least 1".into(),
        ));
    }
    let records = (0..count)
        .into_par_iter()
        .map(|i| {
            let seed = replication_seed(cfg.seed, i);
            let rep_cfg = SimConfig {
                seed,
                ..cfg.clone()
            };
            let committee = build_committee(&rep_cfg)?;
            Ok(match run_join(&rep_cfg, &committee) {
                Ok(t) => ReplicationRecord {
                    replication: i,
                    seed,
                    success: true,
                    exact: t.exact(),
                    trials: t.identification.trials_used,
                    search_trials: t.identification.search_trials,
                    timeouts: t.identification.timeouts,
                    fraud_proofs: t.fraud_proofs.len() as u64,
                    bytes: t.total_bytes,
                    elapsed: t.elapsed,
                    recovered: t.recovered_matches == Some(true),
                },
                Err(SimError::JoinFailed { trials, .. }) => ReplicationRecord {
                    replication: i,
                    seed,
                    success: false,
                    exact: false,
                    trials,
                    search_trials: trials,
                    timeouts: 0,
                    fraud_proofs: 0,
                    bytes: 0,
                    elapsed: 0,
                    recovered: false,
                },
                Err(e) => return Err(e),
            })
        })
        .collect::<Result<Vec<_>, SimError>>()?;
    Ok(aggregate(records))
}

fn aggregate(records: Vec<ReplicationRecord>) -> ReplicationStats {
    let count = records.len() as u64;
    let ok: Vec<&ReplicationRecord> = records.iter().filter(|r| r.success).collect();
    let successes = ok.len() as u64;
    let mean = |xs: &[f64]| {
        if xs.is_empty() {
            f64::NAN
        } else {
            xs.iter().sum::<f64>() / xs.len() as f64
        }
    };
    let trials: Vec<f64> = ok.iter().map(|r| r.trials as f64).collect();
    let trials_mean = mean(&trials);
    let trials_stddev = if trials.len() > 1 {
        (trials
            .iter()
            .map(|t| (t - trials_mean).powi(2))
            .sum::<f64>()
            / (trials.len() - 1) as f64)
            .sqrt()
    } else {
        0.0
    };
    let bytes: Vec<f64> = ok.iter().map(|r| r.bytes as f64).collect();
    ReplicationStats {
        count,
        successes,
        exact_identifications: ok.iter().filter(|r| r.exact).count() as u64,
        success_rate: successes as f64 / count as f64,
        trials_mean,
        trials_stddev,
        bytes_mean: mean(&bytes),
        records,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn setting_one_committee() {
        let cfg = SimConfig::new(6, 2, 1).with_seed(3);
        let c = build_committee(&cfg).unwrap();
        assert_eq!(c.members.len(), 6);
        assert_eq!(c.planted.len(), 1);
        assert_eq!(
            c.members
                .iter()
                .filter(|m| m.profile.is_adversarial())
                .count(),
            1
        );
        let honest = c
            .members
            .iter()
            .find(|m| !m.profile.is_adversarial())
            .unwrap();
        assert_eq!(honest.outgoing.payload, honest.coded);
    }

    #[test]
    fn explicit_and_empty_assignments() {
        let cfg = SimConfig::new(8, 2, 0);
        assert!(build_committee(&cfg).unwrap().planted.is_empty());
        let explicit = AdversaryAssignment::Explicit(vec![
            (NodeId(2), AdversaryProfile::Silent),
            (NodeId(5), AdversaryProfile::TamperScalar),
        ]);
        let cfg = SimConfig::new(8, 2, 2).with_adversaries(explicit);
        let c = build_committee(&cfg).unwrap();
        assert_eq!(c.planted, [NodeId(2), NodeId(5)].into());
        let bad = SimConfig::new(8, 2, 2).with_adversaries(AdversaryAssignment::Explicit(vec![(
            NodeId(8),
            AdversaryProfile::Silent,
        )]));
        assert!(matches!(
            build_committee(&bad),
            Err(SimError::InvalidConfig(_))
        ));
    }

    #[test]
    fn config_validation() {
        let mut cfg = SimConfig::new(6, 2, 1);
        cfg.delta = 0;
        assert!(cfg.validate().is_err());
        assert!(SimConfig::new(3, 2, 3).validate().is_err());
        let mut small = SimConfig::new(6, 2, 1);
        small.field = FieldParams::new(11).unwrap();
        assert!(small.validate().is_err());
    }

    #[test]
    fn perturbations_are_nonzero() {
        let p = FieldParams::new(257).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..2000 {
            assert!(nonzero_offset_vector(1, &p, &mut rng)
                .iter()
                .any(|x| !x.is_zero()));
        }
        let cfg =
            SimConfig::new(6, 2, 6 - 3).with_adversaries(AdversaryAssignment::Explicit(vec![
                (
                    NodeId(0),
                    AdversaryProfile::PerturbShard(OffsetDistribution::SingleCoordinate),
                ),
                (
                    NodeId(1),
                    AdversaryProfile::PerturbShard(OffsetDistribution::EveryCoordinate),
                ),
            ]));
        let c = build_committee(&cfg).unwrap();
        for node in &c.members[..2] {
            assert_ne!(node.outgoing.payload, node.coded);
        }
    }

    #[test]
    fn transcript_trace_format() {
        let cfg = SimConfig::new(6, 2, 1).with_seed(8);
        let c = build_committee(&cfg).unwrap();
        let t = run_join(&cfg, &c).unwrap();
        let trace = t.to_trace();
        let mut lines = trace.lines();
        assert_eq!(lines.next(), Some("timestamp\tkind\tactor\tbytes\tdetail"));
        assert!(lines.all(|l| l.split('\t').count() == 5));
        assert!(t
            .events
            .windows(2)
            .all(|w| w[0].timestamp <= w[1].timestamp));
    }

    #[test]
    fn replication_seeds_differ() {
        let seeds: BTreeSet<_> = (0..100).map(|i| replication_seed(42, i)).collect();
        assert_eq!(seeds.len(), 100);
        assert_eq!(replication_seed(42, 0), 42);
    }
}
