//! Signed identity proofs.
//!
//! The CA signs each member's scalar together with its node id. When a new
//! node joins, every member countersigns the CA signature with its own key
//! and ships it with its coded shard; the newcomer checks both signatures
//! and either accepts the scalar, asks for a resend, or forwards the message
//! to the CA as a fraud proof.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::sync::{Arc, Mutex};

use ed25519_dalek::{Signer, Verifier};
use rand::RngCore;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::codes::CodedShard;
use crate::field::{FieldElement, FieldParams};
use crate::NodeId;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IdentityError {
    #[error("malformed key: {0}")]
    MalformedKey(&'static str),
    #[error("committee of {n} cannot get distinct nonzero scalars in F_{q}")]
    CommitteeTooLarge { n: usize, q: u64 },
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("wire format: {0}")]
    Wire(String),
}

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct SecretKey(pub Vec<u8>);

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PublicKey(pub Vec<u8>);

impl fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SecretKey({} bytes)", self.0.len())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyPair {
    pub secret: SecretKey,
    pub public: PublicKey,
}

/// Signature bytes as carried in a fixed-width wire slot. The scheme's
/// native signature is a prefix; the rest of the slot must be zero.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Signature(pub Vec<u8>);

impl Signature {
    fn native(&self, len: usize) -> Option<&[u8]> {
        if self.0.len() < len || self.0[len..].iter().any(|&b| b != 0) {
            return None;
        }
        Some(&self.0[..len])
    }

    /// The bytes with trailing zeros stripped. A native signature and its
    /// zero-padded wire slot share this form, so it is what countersignatures
    /// cover.
    pub fn canonical(&self) -> &[u8] {
        let end = self.0.iter().rposition(|&b| b != 0).map_or(0, |i| i + 1);
        &self.0[..end]
    }
}

pub type Digest32 = [u8; 32];

/// SHA-256.
pub fn hash(msg: &[u8]) -> Digest32 {
    Sha256::digest(msg).into()
}

pub trait SignatureScheme: Send + Sync {
    fn name(&self) -> &'static str;
    fn keygen(&self, rng: &mut dyn RngCore) -> KeyPair;
    fn sign(&self, msg: &[u8], secret: &SecretKey) -> Result<Signature, IdentityError>;
    fn verify(&self, sig: &Signature, msg: &[u8], public: &PublicKey) -> bool;
}

/// Ed25519 signatures; secret keys are the 32-byte seeds.
#[derive(Debug, Default, Clone, Copy)]
pub struct Ed25519Scheme;

impl SignatureScheme for Ed25519Scheme {
    fn name(&self) -> &'static str {
        "ed25519"
    }

    fn keygen(&self, rng: &mut dyn RngCore) -> KeyPair {
        let mut seed = [0u8; 32];
        rng.fill_bytes(&mut seed);
        let signing = ed25519_dalek::SigningKey::from_bytes(&seed);
        KeyPair {
            secret: SecretKey(seed.to_vec()),
            public: PublicKey(signing.verifying_key().to_bytes().to_vec()),
        }
    }

    fn sign(&self, msg: &[u8], secret: &SecretKey) -> Result<Signature, IdentityError> {
        let seed: [u8; 32] = secret
            .0
            .as_slice()
            .try_into()
            .map_err(|_| IdentityError::MalformedKey("ed25519 seed must be 32 bytes"))?;
        let signing = ed25519_dalek::SigningKey::from_bytes(&seed);
        Ok(Signature(signing.sign(msg).to_bytes().to_vec()))
    }

    fn verify(&self, sig: &Signature, msg: &[u8], public: &PublicKey) -> bool {
        let Ok(pk_bytes) = <[u8; 32]>::try_from(public.0.as_slice()) else {
            return false;
        };
        let Ok(vk) = ed25519_dalek::VerifyingKey::from_bytes(&pk_bytes) else {
            return false;
        };
        let Some(native) = sig.native(ed25519_dalek::SIGNATURE_LENGTH) else {
            return false;
        };
        let Ok(sig) = ed25519_dalek::Signature::from_slice(native) else {
            return false;
        };
        vk.verify(msg, &sig).is_ok()
    }
}

/// Deterministic keyed-hash signatures for reproducible traces.
///
/// `sign` is `SHA-256(secret || msg)`. Verification needs the secret, so
/// the scheme keeps a registry from each public key it issued to the
/// matching secret; keys it never issued verify nothing.
#[derive(Debug, Default)]
pub struct KeyedHashScheme {
    registry: Mutex<HashMap<PublicKey, SecretKey>>,
}

impl KeyedHashScheme {
    pub const SECRET_BYTES: usize = 128;

    pub fn new() -> Self {
        Self::default()
    }

    fn tag(msg: &[u8], secret: &SecretKey) -> Digest32 {
        let mut h = Sha256::new();
        h.update(&secret.0);
        h.update(msg);
        h.finalize().into()
    }
}

impl SignatureScheme for KeyedHashScheme {
    fn name(&self) -> &'static str {
        "keyed-hash"
    }

    fn keygen(&self, rng: &mut dyn RngCore) -> KeyPair {
        let mut secret = vec![0u8; Self::SECRET_BYTES];
        rng.fill_bytes(&mut secret);
        let mut h = Sha256::new();
        h.update(b"keyed-hash public key");
        h.update(&secret);
        let public = PublicKey(h.finalize().to_vec());
        let secret = SecretKey(secret);
        self.registry
            .lock()
            .expect("registry poisoned")
            .insert(public.clone(), secret.clone());
        KeyPair { secret, public }
    }

    fn sign(&self, msg: &[u8], secret: &SecretKey) -> Result<Signature, IdentityError> {
        if secret.0.len() != Self::SECRET_BYTES {
            return Err(IdentityError::MalformedKey(
                "keyed-hash secret must be 128 bytes",
            ));
        }
        Ok(Signature(Self::tag(msg, secret).to_vec()))
    }

    fn verify(&self, sig: &Signature, msg: &[u8], public: &PublicKey) -> bool {
        let registry = self.registry.lock().expect("registry poisoned");
        let Some(secret) = registry.get(public) else {
            return false;
        };
        sig.native(32) == Some(&Self::tag(msg, secret)[..])
    }
}

/// What a member holds after initialization.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeIdentity {
    pub node_id: NodeId,
    pub scalar: FieldElement,
    pub ca_signature: Signature,
}

/// The bytes the CA signs: `scalar (8 B BE) || node_id (4 B BE)`.
pub fn scalar_message(scalar: FieldElement, node_id: NodeId) -> [u8; 12] {
    let mut out = [0u8; 12];
    out[..8].copy_from_slice(&scalar.value().to_be_bytes());
    out[8..].copy_from_slice(&node_id.0.to_be_bytes());
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Member {
    pub identity: NodeIdentity,
    pub keys: KeyPair,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignedShardMessage {
    pub sender_id: NodeId,
    pub scalar: FieldElement,
    pub first_sig: Signature,
    pub second_sig: Signature,
    pub payload: CodedShard,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalarCheck {
    Accept,
    ResendRequest,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum VerificationVerdict {
    Accept,
    Resend,
    FraudProof(Box<SignedShardMessage>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Adjudication {
    Guilty(NodeId),
    Unproven,
}

/// The trusted authority: issues keys, scalars and CA signatures, and keeps
/// the public-key directory.
pub struct CertificateAuthority {
    scheme: Arc<dyn SignatureScheme>,
    keys: KeyPair,
    directory: BTreeMap<NodeId, PublicKey>,
    assigned: HashSet<FieldElement>,
}

impl fmt::Debug for CertificateAuthority {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CertificateAuthority")
            .field("scheme", &self.scheme.name())
            .field("public", &self.keys.public)
            .field("members", &self.directory.len())
            .finish()
    }
}

impl CertificateAuthority {
    pub fn new(scheme: Arc<dyn SignatureScheme>, rng: &mut dyn RngCore) -> Self {
        let keys = scheme.keygen(rng);
        Self {
            scheme,
            keys,
            directory: BTreeMap::new(),
            assigned: HashSet::new(),
        }
    }

    pub fn scheme(&self) -> &dyn SignatureScheme {
        self.scheme.as_ref()
    }

    pub fn scheme_handle(&self) -> Arc<dyn SignatureScheme> {
        Arc::clone(&self.scheme)
    }

    pub fn public_key(&self) -> &PublicKey {
        &self.keys.public
    }

    pub fn public_key_of(&self, node: NodeId) -> Result<&PublicKey, IdentityError> {
        self.directory
            .get(&node)
            .ok_or(IdentityError::UnknownNode(node))
    }

    /// Issues nodes `0..n` distinct nonzero scalars, key pairs and CA
    /// signatures.
    pub fn init_committee(
        &mut self,
        n: usize,
        p: &FieldParams,
        rng: &mut dyn RngCore,
    ) -> Result<Vec<Member>, IdentityError> {
        if n as u128 >= p.modulus() as u128 - self.assigned.len() as u128 {
            return Err(IdentityError::CommitteeTooLarge { n, q: p.modulus() });
        }
        (0..n)
            .map(|i| self.issue(NodeId(i as u32), p, rng))
            .collect()
    }

    /// Issues one identity with a scalar not yet assigned to anyone.
    pub fn issue(
        &mut self,
        node_id: NodeId,
        p: &FieldParams,
        rng: &mut dyn RngCore,
    ) -> Result<Member, IdentityError> {
        if self.assigned.len() as u128 + 1 >= p.modulus() as u128 {
            return Err(IdentityError::CommitteeTooLarge {
                n: self.assigned.len() + 1,
                q: p.modulus(),
            });
        }
        let scalar = loop {
            let x = p.random_nonzero(rng);
            if self.assigned.insert(x) {
                break x;
            }
        };
        let keys = self.scheme.keygen(rng);
        let ca_signature = self
            .scheme
            .sign(&scalar_message(scalar, node_id), &self.keys.secret)?;
        self.directory.insert(node_id, keys.public.clone());
        Ok(Member {
            identity: NodeIdentity {
                node_id,
                scalar,
                ca_signature,
            },
            keys,
        })
    }

    /// Looks up both public keys and runs [`ca_adjudicate_fraud`].
    pub fn adjudicate(&self, proof: &SignedShardMessage) -> Adjudication {
        match self.public_key_of(proof.sender_id) {
            Ok(pk) => ca_adjudicate_fraud(self.scheme(), proof, pk, &self.keys.public),
            Err(_) => Adjudication::Unproven,
        }
    }
}

/// A member's check of its own CA-issued identity.
pub fn member_verify_scalar(
    scheme: &dyn SignatureScheme,
    ident: &NodeIdentity,
    ca_pk: &PublicKey,
) -> ScalarCheck {
    if scheme.verify(
        &ident.ca_signature,
        &scalar_message(ident.scalar, ident.node_id),
        ca_pk,
    ) {
        ScalarCheck::Accept
    } else {
        ScalarCheck::ResendRequest
    }
}

/// Countersigns the CA signature and wraps the coded shard.
pub fn member_build_message(
    scheme: &dyn SignatureScheme,
    ident: &NodeIdentity,
    secret: &SecretKey,
    coded: CodedShard,
) -> Result<SignedShardMessage, IdentityError> {
    let second_sig = scheme.sign(ident.ca_signature.canonical(), secret)?;
    Ok(SignedShardMessage {
        sender_id: ident.node_id,
        scalar: ident.scalar,
        first_sig: ident.ca_signature.clone(),
        second_sig,
        payload: coded,
    })
}

/// The newcomer's decision for one incoming message.
pub fn newcomer_verify_message(
    scheme: &dyn SignatureScheme,
    msg: &SignedShardMessage,
    sender_pk: &PublicKey,
    ca_pk: &PublicKey,
) -> VerificationVerdict {
    let second_ok = scheme.verify(&msg.second_sig, msg.first_sig.canonical(), sender_pk);
    if !second_ok {
        return VerificationVerdict::Resend;
    }
    let first_ok = scheme.verify(
        &msg.first_sig,
        &scalar_message(msg.scalar, msg.sender_id),
        ca_pk,
    );
    if first_ok {
        VerificationVerdict::Accept
    } else {
        VerificationVerdict::FraudProof(Box::new(msg.clone()))
    }
}

/// Guilty only when the sender's countersignature is authentic and the
/// CA signature it vouches for does not match the claimed scalar.
pub fn ca_adjudicate_fraud(
    scheme: &dyn SignatureScheme,
    proof: &SignedShardMessage,
    sender_pk: &PublicKey,
    ca_pk: &PublicKey,
) -> Adjudication {
    let authenticated = scheme.verify(&proof.second_sig, proof.first_sig.canonical(), sender_pk);
    let scalar_ok = scheme.verify(
        &proof.first_sig,
        &scalar_message(proof.scalar, proof.sender_id),
        ca_pk,
    );
    if authenticated && !scalar_ok {
        Adjudication::Guilty(proof.sender_id)
    } else {
        Adjudication::Unproven
    }
}

/// Field widths of the serialized messages.
///
/// Shard message layout:
/// `[sender_id: 4 B BE][scalar: w B BE][first sig: z B][second sig: z B][payload length: 8 B BE][payload]`,
/// where the payload is the coded shard's values, each `element_width`
/// bytes big-endian.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WireFormat {
    pub scalar_bytes: usize,
    pub signature_bytes: usize,
    pub secret_key_bytes: usize,
    pub element_bytes: usize,
}

impl WireFormat {
    pub const DEFAULT_SIGNATURE_BYTES: usize = 256;
    pub const DEFAULT_SECRET_KEY_BYTES: usize = 128;

    /// 256-byte signature slots, 128-byte key slots, and scalars as wide as
    /// a residue of `p`.
    pub fn for_field(p: &FieldParams) -> Self {
        Self {
            scalar_bytes: p.element_width(),
            signature_bytes: Self::DEFAULT_SIGNATURE_BYTES,
            secret_key_bytes: Self::DEFAULT_SECRET_KEY_BYTES,
            element_bytes: p.element_width(),
        }
    }

    pub fn shard_message_len(&self, payload_elements: usize) -> usize {
        4 + self.scalar_bytes + 2 * self.signature_bytes + 8 + payload_elements * self.element_bytes
    }

    pub fn encode_shard_message(&self, msg: &SignedShardMessage) -> Result<Vec<u8>, IdentityError> {
        let mut out = Vec::with_capacity(self.shard_message_len(msg.payload.values.len()));
        out.extend_from_slice(&msg.sender_id.0.to_be_bytes());
        put_uint(&mut out, msg.scalar.value(), self.scalar_bytes)?;
        put_slot(&mut out, &msg.first_sig.0, self.signature_bytes)?;
        put_slot(&mut out, &msg.second_sig.0, self.signature_bytes)?;
        let payload_len = (msg.payload.values.len() * self.element_bytes) as u64;
        out.extend_from_slice(&payload_len.to_be_bytes());
        for v in &msg.payload.values {
            put_uint(&mut out, v.value(), self.element_bytes)?;
        }
        Ok(out)
    }

    pub fn decode_shard_message(
        &self,
        bytes: &[u8],
        p: &FieldParams,
    ) -> Result<SignedShardMessage, IdentityError> {
        let mut r = Reader { bytes, pos: 0 };
        let sender_id = NodeId(u32::from_be_bytes(r.take(4)?.try_into().expect("4 bytes")));
        let scalar = r.element(self.scalar_bytes, p)?;
        let first_sig = Signature(r.take(self.signature_bytes)?.to_vec());
        let second_sig = Signature(r.take(self.signature_bytes)?.to_vec());
        let payload_len = u64::from_be_bytes(r.take(8)?.try_into().expect("8 bytes")) as usize;
        if self.element_bytes == 0 || !payload_len.is_multiple_of(self.element_bytes) {
            return Err(IdentityError::Wire(format!(
                "payload length {payload_len} is not a whole number of elements"
            )));
        }
        let values = (0..payload_len / self.element_bytes)
            .map(|_| r.element(self.element_bytes, p))
            .collect::<Result<Vec<_>, _>>()?;
        if r.pos != bytes.len() {
            return Err(IdentityError::Wire(format!(
                "{} trailing bytes",
                bytes.len() - r.pos
            )));
        }
        Ok(SignedShardMessage {
            sender_id,
            scalar,
            first_sig,
            second_sig,
            payload: CodedShard { scalar, values },
        })
    }

    /// The newcomer's join credential from the CA:
    /// `[scalar: w B][CA sig: z B][secret key: s B]`.
    pub fn encode_credential(
        &self,
        ident: &NodeIdentity,
        secret: &SecretKey,
    ) -> Result<Vec<u8>, IdentityError> {
        let mut out = Vec::with_capacity(self.credential_len());
        put_uint(&mut out, ident.scalar.value(), self.scalar_bytes)?;
        put_slot(&mut out, &ident.ca_signature.0, self.signature_bytes)?;
        put_slot(&mut out, &secret.0, self.secret_key_bytes)?;
        Ok(out)
    }

    pub fn credential_len(&self) -> usize {
        self.scalar_bytes + self.signature_bytes + self.secret_key_bytes
    }
}

fn put_uint(out: &mut Vec<u8>, value: u64, width: usize) -> Result<(), IdentityError> {
    if width < 8 && value >> (8 * width) != 0 {
        return Err(IdentityError::Wire(format!(
            "value {value} does not fit in {width} bytes"
        )));
    }
    let be = value.to_be_bytes();
    if width >= 8 {
        out.resize(out.len() + width - 8, 0);
        out.extend_from_slice(&be);
    } else {
        out.extend_from_slice(&be[8 - width..]);
    }
    Ok(())
}

fn put_slot(out: &mut Vec<u8>, data: &[u8], width: usize) -> Result<(), IdentityError> {
    if data.len() > width {
        return Err(IdentityError::Wire(format!(
            "{} bytes do not fit a {width}-byte slot",
            data.len()
        )));
    }
    out.extend_from_slice(data);
    out.resize(out.len() + width - data.len(), 0);
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], IdentityError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| IdentityError::Wire("truncated message".into()))?;
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn element(&mut self, width: usize, p: &FieldParams) -> Result<FieldElement, IdentityError> {
        let raw = self.take(width)?;
        let (high, low) = raw.split_at(width.saturating_sub(8));
        if high.iter().any(|&b| b != 0) {
            return Err(IdentityError::Wire("element wider than 64 bits".into()));
        }
        let value = low.iter().fold(0u64, |acc, &b| (acc << 8) | b as u64);
        p.try_element(value)
            .ok_or_else(|| IdentityError::Wire(format!("element {value} not reduced")))
    }
}
