//! Versioned checkpoint container.
//!
//! Layout, integers little-endian: `b"PHONCKPT"`, u32 format version,
//! u64 header length, UTF-8 JSON header, then one entry per tensor:
//! u32 name length, name, u32 rank, u64 per dimension, f64 values.
//! Entries are the network parameters in storage order followed by the
//! Adam first (`adam.m.*`) and second (`adam.v.*`) moments.

use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{TrainConfig, TrainOutcome, TrainingError};
use crate::autodiff::{Adam, AdamConfig, Tensor};
use crate::model::{NetworkConfig, PhonationNet};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"PHONCKPT";
/// Refuses absurd lengths in damaged files before allocating.
const MAX_HEADER: u64 = 1 << 24;
const MAX_RANK: u32 = 8;

/// Position of a ChaCha8 stream, enough to resume it exactly.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    /// 32-byte key, hex encoded.
    pub seed: String,
    pub stream: u64,
    /// Word position as a decimal string (a `u128`).
    pub word_pos: String,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        Self {
            seed: rng.get_seed().iter().map(|b| format!("{b:02x}")).collect(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos().to_string(),
        }
    }

    pub fn restore(&self) -> Result<ChaCha8Rng, TrainingError> {
        let bad = || TrainingError::CorruptCheckpoint("rng state".into());
        if self.seed.len() != 64 {
            return Err(bad());
        }
        let mut seed = [0u8; 32];
        for (i, b) in seed.iter_mut().enumerate() {
            *b = u8::from_str_radix(&self.seed[2 * i..2 * i + 2], 16).map_err(|_| bad())?;
        }
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos.parse().map_err(|_| bad())?);
        Ok(rng)
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    network: NetworkConfig,
    train: TrainConfig,
    fold: Option<usize>,
    epoch: Option<usize>,
    rng: RngState,
    adam: AdamConfig,
    adam_step: u64,
    tensors: usize,
}

#[derive(Clone, Debug)]
pub struct CheckpointRecord {
    pub network: NetworkConfig,
    pub train: TrainConfig,
    pub fold: Option<usize>,
    /// Epoch the stored parameters come from.
    pub epoch: Option<usize>,
    pub rng: RngState,
    pub net: PhonationNet,
    pub optimizer: Adam,
}

fn corrupt(msg: impl Into<String>) -> TrainingError {
    TrainingError::CorruptCheckpoint(msg.into())
}

fn read_bytes(r: &mut impl Read, n: usize) -> Result<Vec<u8>, TrainingError> {
    let mut buf = vec![0u8; n];
    r.read_exact(&mut buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => corrupt("truncated"),
        _ => TrainingError::Io(e),
    })?;
    Ok(buf)
}

fn read_array<const N: usize>(r: &mut impl Read) -> Result<[u8; N], TrainingError> {
    Ok(read_bytes(r, N)?.try_into().expect("read_bytes returns N bytes"))
}

fn write_tensor(w: &mut impl Write, name: &str, t: &Tensor) -> io::Result<()> {
    w.write_all(&(name.len() as u32).to_le_bytes())?;
    w.write_all(name.as_bytes())?;
    w.write_all(&(t.ndim() as u32).to_le_bytes())?;
    for &d in t.shape() {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    for v in t.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_tensor(r: &mut impl Read) -> Result<(String, Tensor), TrainingError> {
    let len = u32::from_le_bytes(read_array(r)?) as usize;
    if len > 256 {
        return Err(corrupt("tensor name too long"));
    }
    let name = String::from_utf8(read_bytes(r, len)?).map_err(|_| corrupt("tensor name is not UTF-8"))?;
    let rank = u32::from_le_bytes(read_array(r)?);
    if rank > MAX_RANK {
        return Err(corrupt(format!("{name}: rank {rank}")));
    }
    let mut shape = Vec::with_capacity(rank as usize);
    for _ in 0..rank {
        shape.push(
            usize::try_from(u64::from_le_bytes(read_array(r)?)).map_err(|_| corrupt("dimension overflows"))?,
        );
    }
    let count = shape
        .iter()
        .try_fold(1usize, |a, &d| a.checked_mul(d))
        .filter(|&c| c <= 1 << 28)
        .ok_or_else(|| corrupt(format!("{name}: implausible shape {shape:?}")))?;
    let bytes = read_bytes(r, count * 8)?;
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Ok((name, Tensor::new(&shape, data)?))
}

impl CheckpointRecord {
    pub fn from_outcome(outcome: &TrainOutcome, train: &TrainConfig, fold: Option<usize>) -> Self {
        Self {
            network: outcome.net.config().clone(),
            train: train.clone(),
            fold,
            epoch: outcome.best_epoch,
            rng: RngState::capture(&outcome.rng),
            net: outcome.net.clone(),
            optimizer: outcome.optimizer.clone(),
        }
    }

    pub fn write_to(&self, w: impl Write) -> Result<(), TrainingError> {
        let names = self.net.parameter_names();
        let header = Header {
            format_version: CHECKPOINT_VERSION,
            network: self.network.clone(),
            train: self.train.clone(),
            fold: self.fold,
            epoch: self.epoch,
            rng: self.rng.clone(),
            adam: self.optimizer.config,
            adam_step: self.optimizer.step_count(),
            tensors: 3 * names.len(),
        };
        let json = serde_json::to_vec_pretty(&header).map_err(|e| corrupt(e.to_string()))?;
        let mut w = BufWriter::new(w);
        w.write_all(MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        w.write_all(&(json.len() as u64).to_le_bytes())?;
        w.write_all(&json)?;
        for (name, t) in names.iter().zip(self.net.parameters()) {
            write_tensor(&mut w, name, t)?;
        }
        for (name, t) in names.iter().zip(self.optimizer.first_moments()) {
            write_tensor(&mut w, &format!("adam.m.{name}"), t)?;
        }
        for (name, t) in names.iter().zip(self.optimizer.second_moments()) {
            write_tensor(&mut w, &format!("adam.v.{name}"), t)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from(r: impl Read) -> Result<Self, TrainingError> {
        let mut r = BufReader::new(r);
        if &read_array::<8>(&mut r)? != MAGIC {
            return Err(corrupt("not a checkpoint file"));
        }
        let version = u32::from_le_bytes(read_array(&mut r)?);
        if version != CHECKPOINT_VERSION {
            return Err(TrainingError::VersionMismatch {
                found: version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let header_len = u64::from_le_bytes(read_array(&mut r)?);
        if header_len > MAX_HEADER {
            return Err(corrupt("header length"));
        }
        let header: Header = serde_json::from_slice(&read_bytes(&mut r, header_len as usize)?)
            .map_err(|e| corrupt(format!("header: {e}")))?;
        if header.format_version != CHECKPOINT_VERSION {
            return Err(TrainingError::VersionMismatch {
                found: header.format_version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let expected = header.network.parameter_shapes()?;
        if header.tensors != 3 * expected.len() {
            return Err(corrupt(format!(
                "{} tensors for a network with {} parameters",
                header.tensors,
                expected.len()
            )));
        }
        let mut params = Vec::with_capacity(expected.len());
        for _ in 0..expected.len() {
            params.push(read_tensor(&mut r)?);
        }
        let mut moments = [Vec::new(), Vec::new()];
        for (prefix, out) in ["adam.m.", "adam.v."].iter().zip(moments.iter_mut()) {
            for (name, _) in &expected {
                let (got, t) = read_tensor(&mut r)?;
                if got != format!("{prefix}{name}") {
                    return Err(corrupt(format!("expected {prefix}{name}, found {got}")));
                }
                out.push(t);
            }
        }
        if r.read(&mut [0u8; 1])? != 0 {
            return Err(corrupt("trailing bytes"));
        }
        let net = PhonationNet::from_parameters(header.network.clone(), params)?;
        let [first, second] = moments;
        for (m, p) in first.iter().chain(&second).zip(net.parameters().iter().cycle()) {
            if m.shape() != p.shape() {
                return Err(corrupt("optimizer moment shape"));
            }
        }
        let optimizer = Adam::from_parts(header.adam, header.adam_step, first, second)?;
        header.rng.restore()?;
        Ok(Self {
            network: header.network,
            train: header.train,
            fold: header.fold,
            epoch: header.epoch,
            rng: header.rng,
            net,
            optimizer,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), TrainingError> {
        self.write_to(std::fs::File::create(path)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TrainingError> {
        Self::read_from(std::fs::File::open(path)?)
    }
}
