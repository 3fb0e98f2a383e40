//! Run configuration: `key = value` lines, `#` comments.
//!
//! An optional `preset = full|micro` line selects the starting values and
//! is applied before every other key regardless of its position. Unknown
//! keys and repeated keys are rejected; the result is validated as a whole.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::kinematics::ScanStrategy;
use crate::losses::LossWeights;
use crate::metrics::DEFAULT_FPS;
use crate::model::ModelConfig;
use crate::train::SpsaConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub loss: LossWeights,
    pub fps: f64,
    pub spsa: SpsaConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            loss: LossWeights::default(),
            fps: DEFAULT_FPS,
            spsa: SpsaConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn micro() -> Self {
        Self {
            model: ModelConfig::micro(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.loss.validate()?;
        self.spsa.validate()?;
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(Error::Config(format!("fps {} must be positive", self.fps)));
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                msg: format!("expected key = value, found {line:?}"),
            })?;
            let key = key.trim();
            if entries.iter().any(|(_, k, _)| *k == key) {
                return Err(Error::Parse {
                    line: i + 1,
                    msg: format!("duplicate key {key:?}"),
                });
            }
            entries.push((i + 1, key, value.trim()));
        }

        let mut cfg = match entries.iter().find(|(_, k, _)| *k == "preset") {
            None | Some((_, _, "full")) => Self::default(),
            Some((_, _, "micro")) => Self::micro(),
            Some((line, _, v)) => {
                return Err(Error::Parse {
                    line: *line,
                    msg: format!("unknown preset {v:?}"),
                })
            }
        };
        for (line, key, value) in entries {
            if key == "preset" {
                continue;
            }
            cfg.set(key, value).map_err(|msg| Error::Parse { line, msg })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        fn p<T: std::str::FromStr>(key: &str, value: &str) -> std::result::Result<T, String> {
            value.parse().map_err(|_| format!("bad value for {key}: {value:?}"))
        }
        let m = &mut self.model;
        match key {
            "n_tfm" => m.n_tfm = p(key, value)?,
            "m_skfm" => m.m_skfm = p(key, value)?,
            "embed_dim" => m.embed_dim = p(key, value)?,
            "joint_dim" => m.joint_dim = p(key, value)?,
            "seq_len" => m.seq_len = p(key, value)?,
            "input_dim" => m.input_dim = p(key, value)?,
            "gma_hidden" => m.gma_hidden = p(key, value)?,
            "gma_heads" => m.gma_heads = p(key, value)?,
            "gma_ffn_mult" => m.gma_ffn_mult = p(key, value)?,
            "gma_positional" => m.gma_positional = p(key, value)?,
            "ssd_state" => m.ssd_state = p(key, value)?,
            "ssd_head_dim" => m.ssd_head_dim = p(key, value)?,
            "conv_width" => m.conv_width = p(key, value)?,
            "chunk" => m.chunk = p(key, value)?,
            "scan_strategy" => {
                m.scan_strategy = value.parse::<ScanStrategy>().map_err(|e| e.to_string())?
            }
            "tie_branches" => m.tie_branches = p(key, value)?,
            "seed" => m.seed = p(key, value)?,
            "alpha" => self.loss.alpha = p(key, value)?,
            "beta" => self.loss.beta = p(key, value)?,
            "delta" => self.loss.delta = p(key, value)?,
            "fps" => self.fps = p(key, value)?,
            "spsa_lr" => self.spsa.lr = p(key, value)?,
            "spsa_lr_offset" => self.spsa.lr_offset = p(key, value)?,
            "spsa_lr_exp" => self.spsa.lr_exp = p(key, value)?,
            "spsa_perturb" => self.spsa.perturb = p(key, value)?,
            "spsa_perturb_exp" => self.spsa.perturb_exp = p(key, value)?,
            "spsa_smoothing" => self.spsa.smoothing = p(key, value)?,
            _ => return Err(format!("unknown key {key:?}")),
        }
        Ok(())
    }

    /// Every key, one per line, in a form [`RunConfig::parse`] reads back.
    pub fn serialize(&self) -> String {
        let m = &self.model;
        let mut out = String::new();
        let mut kv = |k: &str, v: &dyn std::fmt::Display| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("n_tfm", &m.n_tfm);
        kv("m_skfm", &m.m_skfm);
        kv("embed_dim", &m.embed_dim);
        kv("joint_dim", &m.joint_dim);
        kv("seq_len", &m.seq_len);
        kv("input_dim", &m.input_dim);
        kv("gma_hidden", &m.gma_hidden);
        kv("gma_heads", &m.gma_heads);
        kv("gma_ffn_mult", &m.gma_ffn_mult);
        kv("gma_positional", &m.gma_positional);
        kv("ssd_state", &m.ssd_state);
        kv("ssd_head_dim", &m.ssd_head_dim);
        kv("conv_width", &m.conv_width);
        kv("chunk", &m.chunk);
        kv("scan_strategy", &m.scan_strategy);
        kv("tie_branches", &m.tie_branches);
        kv("seed", &m.seed);
        kv("alpha", &self.loss.alpha);
        kv("beta", &self.loss.beta);
        kv("delta", &self.loss.delta);
        kv("fps", &self.fps);
        kv("spsa_lr", &self.spsa.lr);
        kv("spsa_lr_offset", &self.spsa.lr_offset);
        kv("spsa_lr_exp", &self.spsa.lr_exp);
        kv("spsa_perturb", &self.spsa.perturb);
        kv("spsa_perturb_exp", &self.spsa.perturb_exp);
        kv("spsa_smoothing", &self.spsa.smoothing);
        out
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}
