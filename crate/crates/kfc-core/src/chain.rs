//! Hash-chained ledger of winning global models and the consensus selectors.
//!
//! Blocks carry a digest of the winning model rather than the parameters
//! themselves; the full vectors live in a side store keyed by that digest.
//! The canonical block encoding hashed by SHA-256 is:
//!
//!   index as u64 LE || prev digest (32 bytes) || payload fields in
//!   declaration order, each prefixed with a u32 LE byte count; integers are
//!   little-endian and floats are IEEE-754 64-bit little-endian.
//!
//! Three selectors decide the per-round winner: a simulated proof-of-work
//! race, a stake-weighted deterministic rotation, and accuracy-based
//! selection over pool models (proof of federated learning).

use std::collections::HashMap;

use sha2::{Digest as Sha2Digest, Sha256};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::mlcore::{evaluate_accuracy, Arch, Model, ParamVector};

/// 256-bit block / model identifier.
pub type Digest = [u8; 32];

/// The `prev` value of the genesis block.
pub const GENESIS_PREV: Digest = [0u8; 32];

/// What a block records about its round.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockPayload {
    pub round: u64,
    pub winner_miner_id: u64,
    pub model_digest: Digest,
    pub claimed_accuracy: f64,
}

/// One ledger entry.
#[derive(Clone, Debug, PartialEq)]
pub struct Block {
    pub index: u64,
    pub prev: Digest,
    pub payload: BlockPayload,
    pub digest: Digest,
}

/// A miner: its id, stake (used by proof of stake), and pool roster.
#[derive(Clone, Debug, PartialEq)]
pub struct MinerState {
    pub miner_id: usize,
    pub stake: f64,
    pub clients: Vec<usize>,
}

fn push_field(buf: &mut Vec<u8>, bytes: &[u8]) {
    buf.extend_from_slice(&(bytes.len() as u32).to_le_bytes());
    buf.extend_from_slice(bytes);
}

fn encode_block(index: u64, prev: &Digest, payload: &BlockPayload) -> Vec<u8> {
    let mut buf = Vec::with_capacity(8 + 32 + 4 * 4 + 8 + 8 + 32 + 8);
    buf.extend_from_slice(&index.to_le_bytes());
    buf.extend_from_slice(prev);
    push_field(&mut buf, &payload.round.to_le_bytes());
    push_field(&mut buf, &payload.winner_miner_id.to_le_bytes());
    push_field(&mut buf, &payload.model_digest);
    push_field(&mut buf, &payload.claimed_accuracy.to_le_bytes());
    buf
}

/// SHA-256 over the canonical block encoding.
pub fn hash_block(index: u64, prev: &Digest, payload: &BlockPayload) -> Digest {
    let mut hasher = Sha256::new();
    hasher.update(encode_block(index, prev, payload));
    hasher.finalize().into()
}

/// Content digest of a parameter vector: SHA-256 over the dimension followed
/// by each value, all little-endian.
pub fn model_digest(params: &ParamVector) -> Digest {
    let mut hasher = Sha256::new();
    hasher.update((params.dim() as u64).to_le_bytes());
    for v in params.values() {
        hasher.update(v.to_le_bytes());
    }
    hasher.finalize().into()
}

/// Hash-chained sequence of blocks plus the model store.
#[derive(Clone, Debug)]
pub struct Ledger {
    pub blocks: Vec<Block>,
    models: HashMap<Digest, ParamVector>,
}

impl Default for Ledger {
    fn default() -> Self {
        Self::new()
    }
}

impl Ledger {
    /// A ledger holding only the genesis block.
    pub fn new() -> Self {
        let payload = BlockPayload {
            round: 0,
            winner_miner_id: 0,
            model_digest: [0u8; 32],
            claimed_accuracy: 0.0,
        };
        let digest = hash_block(0, &GENESIS_PREV, &payload);
        Self {
            blocks: vec![Block {
                index: 0,
                prev: GENESIS_PREV,
                payload,
                digest,
            }],
            models: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Look up stored model parameters by digest.
    pub fn model(&self, digest: &Digest) -> Option<&ParamVector> {
        self.models.get(digest)
    }

    /// Append a block for `payload`, storing `model` under its digest.
    /// Fails with an integrity error if the ledger does not validate.
    pub fn append_block(&mut self, payload: BlockPayload, model: &ParamVector) -> Result<&Block> {
        if let Some(index) = self.first_invalid_index() {
            return Err(Error::Integrity { index });
        }
        if payload.model_digest != model_digest(model) {
            return Err(Error::InvalidArgument(
                "payload model digest does not match the model".into(),
            ));
        }
        let index = self.blocks.len() as u64;
        let prev = self.blocks.last().expect("genesis always exists").digest;
        let digest = hash_block(index, &prev, &payload);
        self.models.insert(payload.model_digest, model.clone());
        self.blocks.push(Block {
            index,
            prev,
            payload,
            digest,
        });
        Ok(self.blocks.last().unwrap())
    }

    /// The smallest block index at which the chain is inconsistent, or `None`
    /// when the ledger is intact. A block is invalid if its position or
    /// stored digest do not recompute, or its `prev` does not match its
    /// predecessor's digest.
    pub fn first_invalid_index(&self) -> Option<u64> {
        let mut prev = GENESIS_PREV;
        for (i, block) in self.blocks.iter().enumerate() {
            let i = i as u64;
            if block.index != i
                || block.prev != prev
                || hash_block(block.index, &block.prev, &block.payload) != block.digest
            {
                return Some(i);
            }
            prev = block.digest;
        }
        None
    }

    /// Ok when every block recomputes and links correctly.
    pub fn validate(&self) -> Result<()> {
        match self.first_invalid_index() {
            None => Ok(()),
            Some(index) => Err(Error::Integrity { index }),
        }
    }
}

fn leading_zero_bits(digest: &Digest) -> u32 {
    let mut bits = 0;
    for byte in digest {
        if *byte == 0 {
            bits += 8;
        } else {
            bits += byte.leading_zeros();
            break;
        }
    }
    bits
}

/// Simulated proof-of-work race. Each miner draws nonces in order until the
/// hash of `round_seed || miner_id || nonce` has `difficulty_bits` leading
/// zero bits; the miner needing the fewest draws wins, ties to the lowest id.
pub fn pow_select(miners: &[MinerState], difficulty_bits: u32, round_seed: u64) -> Result<usize> {
    if miners.is_empty() {
        return Err(Error::InvalidArgument("no miners".into()));
    }
    if difficulty_bits > 24 {
        return Err(Error::Config(format!(
            "difficulty of {difficulty_bits} bits is too expensive to simulate"
        )));
    }
    let mut best: Option<(u64, usize)> = None;
    for miner in miners {
        let mut nonce = 0u64;
        loop {
            let mut hasher = Sha256::new();
            hasher.update(round_seed.to_le_bytes());
            hasher.update((miner.miner_id as u64).to_le_bytes());
            hasher.update(nonce.to_le_bytes());
            let digest: Digest = hasher.finalize().into();
            if leading_zero_bits(&digest) >= difficulty_bits {
                break;
            }
            nonce += 1;
        }
        let candidate = (nonce + 1, miner.miner_id);
        if best.is_none_or(|b| candidate < b) {
            best = Some(candidate);
        }
    }
    Ok(best.expect("at least one miner").1)
}

/// Stake-weighted deterministic rotation. Every round each miner's credit
/// grows by its stake; the highest credit wins (lowest id on ties) and pays
/// back the total stake. Equal stakes degenerate to round-robin.
pub fn pos_select(miners: &[MinerState], round: u64) -> Result<usize> {
    if miners.is_empty() {
        return Err(Error::InvalidArgument("no miners".into()));
    }
    for m in miners {
        if !(m.stake.is_finite() && m.stake >= 0.0) {
            return Err(Error::Config(format!(
                "miner {} has invalid stake {}",
                m.miner_id, m.stake
            )));
        }
    }
    let total: f64 = miners.iter().map(|m| m.stake).sum();
    if total <= 0.0 {
        return Err(Error::Config("stakes must sum to a positive value".into()));
    }
    let mut credit = vec![0.0; miners.len()];
    let mut winner = 0usize;
    for _ in 0..=round {
        for (c, m) in credit.iter_mut().zip(miners) {
            *c += m.stake;
        }
        let mut best = 0usize;
        for (i, c) in credit.iter().enumerate().skip(1) {
            if *c > credit[best] {
                best = i;
            }
        }
        credit[best] -= total;
        winner = best;
    }
    Ok(miners[winner].miner_id)
}

/// Accuracy-based consensus: evaluate every pool's model on the validation
/// set and pick the argmax, ties to the lowest pool index. Returns the
/// winner and all accuracies for logging.
pub fn pofl_select(
    pool_models: &[ParamVector],
    validation: &Dataset,
    arch: Arch,
) -> Result<(usize, Vec<f64>)> {
    if pool_models.is_empty() {
        return Err(Error::InvalidArgument("no pool models".into()));
    }
    if validation.is_empty() {
        return Err(Error::InvalidArgument("empty validation dataset".into()));
    }
    let mut accuracies = Vec::with_capacity(pool_models.len());
    for params in pool_models {
        let model = Model::new(arch, params.clone())?;
        accuracies.push(evaluate_accuracy(&model, validation)?);
    }
    let mut winner = 0usize;
    for (i, acc) in accuracies.iter().enumerate().skip(1) {
        if *acc > accuracies[winner] {
            winner = i;
        }
    }
    Ok((winner, accuracies))
}

/// Recompute a model's validation accuracy and check the claim against it.
pub fn verify_claim(
    params: &ParamVector,
    claimed_accuracy: f64,
    validation: &Dataset,
    arch: Arch,
    tolerance: f64,
) -> Result<bool> {
    let model = Model::new(arch, params.clone())?;
    let actual = evaluate_accuracy(&model, validation)?;
    Ok((actual - claimed_accuracy).abs() <= tolerance)
}
