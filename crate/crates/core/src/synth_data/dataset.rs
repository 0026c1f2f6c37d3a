use std::io::{BufReader, BufWriter, Read, Write};
use std::ops::Range;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{normalize_params, sample_parameters, seafloor_target, ParamRanges};
use crate::em_forward::{
    forward_transient, peak_normalize_encode, FrequencyGrid, SampleLayout, SampleTensor, SurveyGeometry, N_TIME,
};
use crate::{Error, Result};

pub const DATASET_MAGIC: &[u8; 8] = b"TDCSEMDS";
pub const DATASET_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenerationConfig {
    pub n: usize,
    pub seed: u64,
    pub layers: usize,
    pub ranges: ParamRanges,
    pub geometry: SurveyGeometry,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self { n: 1000, seed: 42, layers: 2, ranges: ParamRanges::default(), geometry: SurveyGeometry::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetHeader {
    pub version: u32,
    pub count: usize,
    pub seed: u64,
    pub layers: usize,
    pub geometry: SurveyGeometry,
    pub ranges: ParamRanges,
}

impl DatasetHeader {
    pub fn receivers(&self) -> usize {
        self.geometry.offsets.len()
    }

    /// Number of normalized targets per record.
    pub fn targets(&self) -> usize {
        if self.layers == 3 {
            6
        } else {
            4
        }
    }

    /// Bytes per record.
    pub fn stride(&self) -> usize {
        4 * (self.receivers() * (N_TIME + 1) + self.targets() + 1)
    }

    pub fn config(&self) -> GenerationConfig {
        GenerationConfig {
            n: self.count,
            seed: self.seed,
            layers: self.layers,
            ranges: self.ranges.clone(),
            geometry: self.geometry.clone(),
        }
    }
}

/// One clean sample: peak-normalized waveforms, log10 peaks, normalized
/// targets and the recorded source velocity.
#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub waveforms: Vec<Vec<f32>>,
    pub log_peaks: Vec<f32>,
    pub targets: Vec<f32>,
    pub v0: f32,
}

impl Record {
    pub fn tensor(&self, layout: SampleLayout) -> Result<SampleTensor> {
        let waves: Vec<Vec<f64>> = self.waveforms.iter().map(|w| w.iter().map(|&v| v as f64).collect()).collect();
        let logs: Vec<f64> = self.log_peaks.iter().map(|&v| v as f64).collect();
        SampleTensor::from_parts(layout, &waves, &logs)
    }

    pub fn targets_f64(&self) -> Vec<f64> {
        self.targets.iter().map(|&v| v as f64).collect()
    }

    /// Normalized seafloor-depth target derived from the stored depths.
    pub fn seafloor_target(&self, ranges: &ParamRanges) -> f64 {
        let k = self.targets.len();
        let (i1, i2) = if k == 6 { (3, 4) } else { (2, 3) };
        seafloor_target(
            ranges.d1.denormalize(self.targets[i1] as f64),
            ranges.d2.denormalize(self.targets[i2] as f64),
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
    All,
}

impl std::str::FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            "all" => Ok(Split::All),
            _ => Err(Error::Usage(format!("unknown split '{s}' (train|val|test|all)"))),
        }
    }
}

/// Sequential 70/15/15 partition of `n` stored records.
pub fn split_ranges(n: usize) -> [Range<usize>; 3] {
    let train = n * 70 / 100;
    let val = n * 15 / 100;
    [0..train, train..train + val, train + val..n]
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub records: Vec<Record>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn indices(&self, split: Split) -> Range<usize> {
        let [tr, va, te] = split_ranges(self.len());
        match split {
            Split::Train => tr,
            Split::Val => va,
            Split::Test => te,
            Split::All => 0..self.len(),
        }
    }

    pub fn split(&self, split: Split) -> &[Record] {
        &self.records[self.indices(split)]
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        if self.header.count != self.records.len() {
            return Err(Error::Format("header count does not match record count".into()));
        }
        let text = serde_json::to_vec(&self.header)?;
        w.write_all(DATASET_MAGIC)?;
        w.write_all(&DATASET_VERSION.to_le_bytes())?;
        w.write_all(&(text.len() as u32).to_le_bytes())?;
        w.write_all(&text)?;
        let mut buf = Vec::with_capacity(self.header.stride());
        for r in &self.records {
            buf.clear();
            for v in r.waveforms.iter().flatten().chain(&r.log_peaks).chain(&r.targets) {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            buf.extend_from_slice(&r.v0.to_le_bytes());
            w.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(&mut BufReader::new(std::fs::File::open(path)?))
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        read_exact(r, &mut magic, "magic")?;
        if &magic != DATASET_MAGIC {
            return Err(Error::Format("not a dataset file (bad magic)".into()));
        }
        let mut word = [0u8; 4];
        read_exact(r, &mut word, "version")?;
        let version = u32::from_le_bytes(word);
        if version != DATASET_VERSION {
            return Err(Error::Format(format!("unsupported dataset version {version}")));
        }
        read_exact(r, &mut word, "header length")?;
        let mut text = vec![0u8; u32::from_le_bytes(word) as usize];
        read_exact(r, &mut text, "header")?;
        let header: DatasetHeader = serde_json::from_slice(&text)?;
        let (nr, k) = (header.receivers(), header.targets());
        let mut buf = vec![0u8; header.stride()];
        let mut records = Vec::with_capacity(header.count);
        for i in 0..header.count {
            read_exact(r, &mut buf, &format!("record {i}"))?;
            let mut vals = buf.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]));
            let waveforms = (0..nr).map(|_| vals.by_ref().take(N_TIME).collect()).collect();
            let log_peaks = vals.by_ref().take(nr).collect();
            let targets = vals.by_ref().take(k).collect();
            let v0 = vals.next().unwrap_or(0.0);
            records.push(Record { waveforms, log_peaks, targets, v0 });
        }
        let mut extra = [0u8; 1];
        if r.read(&mut extra)? != 0 {
            return Err(Error::Format("trailing bytes after the last record".into()));
        }
        Ok(Self { header, records })
    }
}

fn read_exact(r: &mut impl Read, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Format(format!("truncated dataset while reading {what}")),
        _ => Error::Io(e),
    })
}

/// Forward-model and encode every sample of `config`. Any solver failure
/// aborts generation with the index and model of the failing sample.
pub fn generate_records(config: &GenerationConfig) -> Result<Vec<Record>> {
    config.geometry.validate()?;
    let models = sample_parameters(config.seed, &config.ranges, config.n, config.layers)?;
    let grid = FrequencyGrid::paper64();
    let results: Vec<Result<Record>> = models
        .par_iter()
        .enumerate()
        .map(|(i, m)| {
            let build = || -> Result<Record> {
                let enc = peak_normalize_encode(&forward_transient(m, &config.geometry, &grid)?)?;
                let theta = normalize_params(m, &config.ranges)?;
                Ok(Record {
                    waveforms: enc.waveforms.iter().map(|w| w.iter().map(|&v| v as f32).collect()).collect(),
                    log_peaks: enc.log_peaks.iter().map(|&v| v as f32).collect(),
                    targets: theta.0.iter().map(|&v| v as f32).collect(),
                    v0: m.v0 as f32,
                })
            };
            build().map_err(|e| Error::Generation { index: i, model: format!("{m:?}"), source: Box::new(e) })
        })
        .collect();
    results.into_iter().collect()
}

/// Generate a clean dataset and write it to `out`.
pub fn generate_dataset(config: &GenerationConfig, out: &Path) -> Result<Dataset> {
    let records = generate_records(config)?;
    let ds = Dataset {
        header: DatasetHeader {
            version: DATASET_VERSION,
            count: records.len(),
            seed: config.seed,
            layers: config.layers,
            geometry: config.geometry.clone(),
            ranges: config.ranges.clone(),
        },
        records,
    };
    ds.write(out)?;
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_sizes() {
        assert_eq!(split_ranges(1000), [0..700, 700..850, 850..1000]);
        let [a, b, c] = split_ranges(7);
        assert_eq!(a.len() + b.len() + c.len(), 7);
    }

    #[test]
    fn round_trip_and_corruption() {
        let cfg = GenerationConfig { n: 6, seed: 3, ..Default::default() };
        let records = generate_records(&cfg).unwrap();
        let ds = Dataset {
            header: DatasetHeader {
                version: DATASET_VERSION,
                count: 6,
                seed: 3,
                layers: 2,
                geometry: cfg.geometry.clone(),
                ranges: cfg.ranges.clone(),
            },
            records,
        };
        let mut bytes = Vec::new();
        ds.write_to(&mut bytes).unwrap();
        let back = Dataset::read_from(&mut bytes.as_slice()).unwrap();
        assert_eq!(back, ds);
        assert_eq!(back.header.config(), cfg);

        let cut = &bytes[..bytes.len() - 3];
        assert!(matches!(Dataset::read_from(&mut &cut[..]), Err(Error::Format(_))));
        let mut bad = bytes.clone();
        bad[8] = 9;
        assert!(matches!(Dataset::read_from(&mut bad.as_slice()), Err(Error::Format(_))));
    }
}
