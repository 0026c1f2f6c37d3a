use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use tdcsem::classical_inversion::{BenchmarkMethod, InversionConfig, Method};
use tdcsem::evaluation::{default_amplitude_grid, AmplitudePoint};
use tdcsem::synth_data::{GenerationConfig, Split};
use tdcsem::training::TrainConfig;
use tdcsem::uq::UqConfig;

use crate::CliError;

const SECTIONS: [&str; 7] = ["threads", "generate", "train", "invert", "benchmark", "uq", "eval"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchmarkConfig {
    pub samples: usize,
    pub split: Split,
    pub methods: Vec<BenchmarkMethod>,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        let method = |name: &str, method| BenchmarkMethod {
            name: name.into(),
            config: InversionConfig { method, ..InversionConfig::default() },
        };
        Self {
            samples: 50,
            split: Split::Test,
            methods: vec![method("lm-multistart", Method::Lm), method("lbfgs-multistart", Method::LbfgsBox)],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub split: Split,
    /// Noise levels in dB; the clean reference is always evaluated first.
    pub snr_db: Vec<f64>,
    pub repeats: usize,
    pub seed: u64,
    pub amplitude_grid: Vec<AmplitudePoint>,
    pub bootstrap: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            split: Split::Test,
            snr_db: vec![40.0, 30.0, 20.0, 10.0],
            repeats: 1,
            seed: 0,
            amplitude_grid: default_amplitude_grid(),
            bootstrap: 1000,
        }
    }
}

/// Resolved configuration of one run: presets, then the config file, then flags.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub threads: Option<usize>,
    pub generate: GenerationConfig,
    pub train: TrainConfig,
    pub invert: InversionConfig,
    pub benchmark: BenchmarkConfig,
    pub uq: UqConfig,
    pub eval: EvalConfig,
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}

fn section<T: Serialize + DeserializeOwned>(name: &str, base: T, file: &Value) -> Result<T, CliError> {
    let Some(over) = file.get(name) else {
        return Ok(base);
    };
    let mut v = serde_json::to_value(base).map_err(|e| CliError::Usage(format!("config [{name}]: {e}")))?;
    merge(&mut v, over.clone());
    serde_json::from_value(v).map_err(|e| CliError::Usage(format!("config [{name}]: {e}")))
}

impl RunConfig {
    /// Layer a TOML file over the given training preset.
    pub fn load(path: Option<&Path>, train_base: TrainConfig) -> Result<Self, CliError> {
        let file = match path {
            None => Value::Object(Default::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", p.display())))?;
                let table: toml::Table =
                    toml::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", p.display())))?;
                serde_json::to_value(table).map_err(|e| CliError::Usage(format!("config {}: {e}", p.display())))?
            }
        };
        if let Some(obj) = file.as_object() {
            if let Some(k) = obj.keys().find(|k| !SECTIONS.contains(&k.as_str())) {
                return Err(CliError::Usage(format!("unknown config section '{k}'")));
            }
        }
        let threads = match file.get("threads") {
            None => None,
            Some(v) => Some(
                v.as_u64()
                    .filter(|&n| n > 0)
                    .ok_or_else(|| CliError::Usage("threads must be a positive integer".into()))? as usize,
            ),
        };
        Ok(Self {
            threads,
            generate: section("generate", GenerationConfig::default(), &file)?,
            train: section("train", train_base, &file)?,
            invert: section("invert", InversionConfig::default(), &file)?,
            benchmark: section("benchmark", BenchmarkConfig::default(), &file)?,
            uq: section("uq", UqConfig::default(), &file)?,
            eval: section("eval", EvalConfig::default(), &file)?,
        })
    }
}
