//! Run configuration: one JSON schema covering every subcommand, plus the
//! named presets mirroring the two- to five-qubit experiment setups.

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use qrem_core::channel::{ChannelConfig, ChannelKind, DriftParam, DriftShape, DriftSchedule, Shots};
use qrem_core::error::{Error, Result};
use qrem_core::nn::{BatchSize, TrainingConfig};

/// Experiment mode; the tag doubles as the `"mode"` field in config JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum RunMode {
    Standard,
    Drift { horizon: usize },
    Subsample { fraction: f64 },
    Transfer { channel_b: ChannelConfig },
}

fn default_li_shots() -> Shots {
    Shots::Count(8192)
}

fn default_shots() -> Shots {
    Shots::Count(8192)
}

/// Everything one benchmark run needs. The master `seed` drives every
/// randomized stage; the embedded `nn.seed` is ignored by the harness, which
/// derives the training seed from `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub n: usize,
    pub channel: ChannelConfig,
    pub train_size: usize,
    pub test_size: usize,
    #[serde(default = "default_shots")]
    pub shots: Shots,
    pub nn: TrainingConfig,
    #[serde(default = "default_li_shots")]
    pub li_shots: Shots,
    pub seed: u64,
    #[serde(flatten)]
    pub mode: RunMode,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidConfig("need at least one qubit".into()));
        }
        if self.channel.n != self.n {
            return Err(Error::InvalidConfig(format!(
                "channel is for n={}, run is for n={}",
                self.channel.n, self.n
            )));
        }
        if self.train_size == 0 || self.test_size == 0 {
            return Err(Error::InvalidConfig("train and test sizes must be >= 1".into()));
        }
        self.shots.validate()?;
        self.li_shots.validate()?;
        self.nn.validate()?;
        self.channel.build()?;
        match &self.mode {
            RunMode::Standard => {}
            RunMode::Drift { horizon } => {
                if *horizon == 0 {
                    return Err(Error::InvalidConfig("drift horizon must be >= 1".into()));
                }
                if self.channel.kind != ChannelKind::Drifting {
                    return Err(Error::InvalidConfig(
                        "drift mode needs a drifting channel".into(),
                    ));
                }
            }
            RunMode::Subsample { fraction } => {
                if !fraction.is_finite() || *fraction <= 0.0 || *fraction >= 1.0 {
                    return Err(Error::InvalidConfig(format!(
                        "subsample fraction {fraction} outside (0, 1); use standard mode for 1.0"
                    )));
                }
            }
            RunMode::Transfer { channel_b } => {
                if channel_b.n != self.n {
                    return Err(Error::InvalidConfig(format!(
                        "transfer channel is for n={}, run is for n={}",
                        channel_b.n, self.n
                    )));
                }
                channel_b.build()?;
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// SHA-256 of the canonical JSON serialization, hex-encoded.
    pub fn fingerprint(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serialization");
        let digest = Sha256::digest(&bytes);
        let mut s = String::with_capacity(digest.len() * 2);
        for b in digest {
            s.push_str(&format!("{b:02x}"));
        }
        s
    }

    /// Returns the named preset, or the list of known names on failure.
    ///
    /// Presets `paper-a-n{2..5}` and `paper-b-n{2..5}` pin per-qubit-count
    /// training sizes, layer counts, widths, and learning rates for two
    /// device families, with a synthetic non-linear channel (per-qubit flip
    /// rates 0.05, κ = 0.2) standing in for hardware.
    pub fn preset(name: &str) -> Result<Self> {
        let (family, n) = match name.strip_prefix("paper-") {
            Some(rest) => {
                let (fam, qubits) = rest
                    .split_once("-n")
                    .ok_or_else(|| Error::InvalidConfig(unknown_preset(name)))?;
                let n: usize = qubits
                    .parse()
                    .map_err(|_| Error::InvalidConfig(unknown_preset(name)))?;
                (fam.to_string(), n)
            }
            None => return Err(Error::InvalidConfig(unknown_preset(name))),
        };
        if !(2..=5).contains(&n) {
            return Err(Error::InvalidConfig(unknown_preset(name)));
        }
        let idx = n - 2;
        let (train_sizes, layers): (&[usize; 4], &[usize; 4]) = match family.as_str() {
            "a" => (&[1175, 3472, 9700, 9700], &[7, 4, 8, 5]),
            "b" => (&[1800, 3800, 7800, 9850], &[5, 2, 7, 5]),
            _ => return Err(Error::InvalidConfig(unknown_preset(name))),
        };
        let learning_rate = if n <= 3 { 1e-3 } else { 5e-5 };
        let channel = ChannelConfig {
            kind: ChannelKind::Nonlinear,
            n,
            lambda: None,
            flip_rates: Some(vec![(0.05, 0.05); n]),
            kappa: Some(0.2),
            drift: None,
        };
        Ok(RunConfig {
            n,
            channel,
            train_size: train_sizes[idx],
            test_size: 200,
            shots: Shots::Count(8192),
            nn: TrainingConfig {
                hidden_layers: layers[idx],
                hidden_width: 5 * (1 << n),
                epochs: 300,
                learning_rate,
                batch_size: BatchSize::Fixed(32),
                ..TrainingConfig::defaults_for(n)
            },
            li_shots: Shots::Count(8192),
            seed: 2021,
            mode: RunMode::Standard,
        })
    }

    pub const PRESET_NAMES: [&'static str; 8] = [
        "paper-a-n2",
        "paper-a-n3",
        "paper-a-n4",
        "paper-a-n5",
        "paper-b-n2",
        "paper-b-n3",
        "paper-b-n4",
        "paper-b-n5",
    ];

    /// Drift-mode variant of a preset: the same channel parameters made to
    /// drift (ramp on eps10), trained once at t = 0.
    pub fn preset_drift(name: &str, horizon: usize, rate: f64) -> Result<Self> {
        let mut cfg = Self::preset(name)?;
        cfg.channel.kind = ChannelKind::Drifting;
        cfg.channel.drift = Some(DriftSchedule {
            param: DriftParam::Eps10,
            shape: DriftShape::Ramp,
            rate,
        });
        cfg.mode = RunMode::Drift { horizon };
        Ok(cfg)
    }
}

fn unknown_preset(name: &str) -> String {
    format!(
        "unknown preset {name:?}; available: {}",
        RunConfig::PRESET_NAMES.join(", ")
    )
}
