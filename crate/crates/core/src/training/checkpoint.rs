use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::em_forward::SampleLayout;
use crate::synth_data::ParamRanges;
use crate::tcn_core::{Network, NetworkConfig};
use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"TDCSEMCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// Persisted model: architecture, normalization bounds, input layout and weights.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelCheckpoint {
    pub network: NetworkConfig,
    pub ranges: ParamRanges,
    pub layout: SampleLayout,
    pub tensors: Vec<NamedTensor>,
    pub best_val_loss: f64,
    /// Zero-based epoch the weights were taken from.
    pub epoch: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    network: NetworkConfig,
    ranges: ParamRanges,
    layout: SampleLayout,
    best_val_loss: f64,
    epoch: usize,
    tensors: Vec<TensorEntry>,
    sha256: String,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

impl ModelCheckpoint {
    pub fn from_network(net: &Network, ranges: &ParamRanges, layout: SampleLayout, best_val_loss: f64, epoch: usize) -> Self {
        let tensors = net
            .named_tensors()
            .into_iter()
            .map(|(name, shape, data)| NamedTensor { name, shape, data })
            .collect();
        Self { network: net.config().clone(), ranges: ranges.clone(), layout, tensors, best_val_loss, epoch }
    }

    pub fn to_network(&self) -> Result<Network> {
        let mut net = Network::new(self.network.clone(), 0)?;
        let table: Vec<_> = self.tensors.iter().map(|t| (t.name.clone(), t.shape.clone(), t.data.clone())).collect();
        net.load_named_tensors(&table)?;
        Ok(net)
    }

    fn payload(&self) -> Vec<u8> {
        let n: usize = self.tensors.iter().map(|t| t.data.len()).sum();
        let mut out = Vec::with_capacity(8 * n);
        for v in self.tensors.iter().flat_map(|t| &t.data) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        if !self.best_val_loss.is_finite() {
            return Err(Error::NonFinite { context: "checkpoint validation loss".into() });
        }
        let payload = self.payload();
        let header = Header {
            network: self.network.clone(),
            ranges: self.ranges.clone(),
            layout: self.layout,
            best_val_loss: self.best_val_loss,
            epoch: self.epoch,
            tensors: self.tensors.iter().map(|t| TensorEntry { name: t.name.clone(), shape: t.shape.clone() }).collect(),
            sha256: hex(&Sha256::digest(&payload)),
        };
        let json = serde_json::to_vec(&header)?;
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        w.write_all(&(json.len() as u32).to_le_bytes())?;
        w.write_all(&json)?;
        w.write_all(&payload)?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let truncated = |e: std::io::Error| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => Error::Format("truncated checkpoint".into()),
            _ => Error::Io(e),
        };
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(truncated)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::Format("not a checkpoint file".into()));
        }
        let mut word = [0u8; 4];
        r.read_exact(&mut word).map_err(truncated)?;
        let version = u32::from_le_bytes(word);
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        r.read_exact(&mut word).map_err(truncated)?;
        let mut json = vec![0u8; u32::from_le_bytes(word) as usize];
        r.read_exact(&mut json).map_err(truncated)?;
        let header: Header = serde_json::from_slice(&json)?;
        let n: usize = header.tensors.iter().map(|t| t.shape.iter().product::<usize>()).sum();
        let mut payload = vec![0u8; 8 * n];
        r.read_exact(&mut payload).map_err(truncated)?;
        let mut rest = Vec::new();
        r.read_to_end(&mut rest)?;
        if !rest.is_empty() {
            return Err(Error::Format(format!("{} trailing bytes after checkpoint payload", rest.len())));
        }
        if hex(&Sha256::digest(&payload)) != header.sha256 {
            return Err(Error::Format("checkpoint integrity check failed".into()));
        }
        let mut values = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
        let tensors = header
            .tensors
            .into_iter()
            .map(|t| {
                let len = t.shape.iter().product();
                NamedTensor { name: t.name, shape: t.shape, data: values.by_ref().take(len).collect() }
            })
            .collect();
        Ok(Self {
            network: header.network,
            ranges: header.ranges,
            layout: header.layout,
            tensors,
            best_val_loss: header.best_val_loss,
            epoch: header.epoch,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(&mut BufReader::new(std::fs::File::open(path)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn checkpoint() -> ModelCheckpoint {
        let net = Network::new(NetworkConfig::tiny(), 3).unwrap();
        ModelCheckpoint::from_network(&net, &ParamRanges::default(), SampleLayout::Standard, 0.125, 4)
    }

    fn bytes(c: &ModelCheckpoint) -> Vec<u8> {
        let mut buf = Vec::new();
        c.write_to(&mut buf).unwrap();
        buf
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let c = checkpoint();
        let back = ModelCheckpoint::read_from(&mut bytes(&c).as_slice()).unwrap();
        assert_eq!(back, c);
        let net = back.to_network().unwrap();
        assert_eq!(net.named_tensors().len(), c.tensors.len());
    }

    #[test]
    fn version_mismatch_rejected() {
        let mut b = bytes(&checkpoint());
        b[8] = 9;
        let err = ModelCheckpoint::read_from(&mut b.as_slice()).unwrap_err();
        assert!(err.to_string().contains("version"));
    }

    #[test]
    fn truncation_and_corruption_rejected() {
        let b = bytes(&checkpoint());
        let cut = &b[..b.len() - 5];
        assert!(matches!(ModelCheckpoint::read_from(&mut &cut[..]), Err(Error::Format(_))));
        let mut flipped = b.clone();
        let last = flipped.len() - 1;
        flipped[last] ^= 0x40;
        let err = ModelCheckpoint::read_from(&mut flipped.as_slice()).unwrap_err();
        assert!(err.to_string().contains("integrity"));
    }
}
