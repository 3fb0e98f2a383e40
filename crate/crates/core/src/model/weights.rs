use crate::error::{Error, Result};

use super::blocks::{Skfm, Tfm};
use super::config::{ModelConfig, OUTPUT_DIM};
use super::layers::{Init, Linear, Module, Param};

/// Every learnable tensor of the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    config: ModelConfig,
    pub embed: Linear,
    pub tfm: Vec<Tfm>,
    pub skfm: Vec<Skfm>,
    pub regressor: Linear,
}

impl Weights {
    /// Seeded initialization; see [`super::layers`] for the algorithm.
    pub fn init(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let init = Init { seed: config.seed };
        Ok(Self {
            config: config.clone(),
            embed: Linear::new(config.input_dim, config.embed_dim, &init, "embed"),
            tfm: (0..config.n_tfm)
                .map(|i| Tfm::new(config, &init, &format!("tfm.{i}")))
                .collect(),
            skfm: (0..config.m_skfm)
                .map(|i| Skfm::new(config, &init, &format!("skfm.{i}")))
                .collect(),
            regressor: Linear::new(config.embed_dim, OUTPUT_DIM, &init, "regressor"),
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// All tensors in a fixed order with hierarchical names.
    pub fn named(&self) -> Vec<(String, &Param)> {
        let mut out = Vec::new();
        self.params("", &mut out);
        out
    }

    pub fn named_mut(&mut self) -> Vec<(String, &mut Param)> {
        let mut out = Vec::new();
        self.params_mut("", &mut out);
        out
    }

    pub fn param_count(&self) -> usize {
        self.named().iter().map(|(_, p)| p.len()).sum()
    }

    /// All scalars concatenated in [`Weights::named`] order.
    pub fn to_flat(&self) -> Vec<f32> {
        self.named().iter().flat_map(|(_, p)| p.data.iter().copied()).collect()
    }

    pub fn set_flat(&mut self, flat: &[f32]) -> Result<()> {
        let total = self.param_count();
        if flat.len() != total {
            return Err(Error::Dimension {
                context: "flat weights",
                expected: total,
                actual: flat.len(),
            });
        }
        let mut rest = flat;
        for (_, p) in self.named_mut() {
            let (head, tail) = rest.split_at(p.len());
            p.data.copy_from_slice(head);
            rest = tail;
        }
        Ok(())
    }

    /// Replaces tensors by name; every tensor must be supplied with its
    /// exact shape.
    pub fn load_named(&mut self, tensors: &[(String, Param)]) -> Result<()> {
        let mut slots = self.named_mut();
        if tensors.len() != slots.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors, found {}",
                slots.len(),
                tensors.len()
            )));
        }
        for (name, src) in tensors {
            let (_, dst) = slots
                .iter_mut()
                .find(|(n, _)| n == name)
                .ok_or_else(|| Error::Checkpoint(format!("unexpected tensor {name}")))?;
            if dst.shape != src.shape {
                return Err(Error::Checkpoint(format!(
                    "tensor {name}: shape {:?} does not match {:?}",
                    src.shape, dst.shape
                )));
            }
            dst.data.copy_from_slice(&src.data);
        }
        Ok(())
    }
}

impl Module for Weights {
    fn params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Param)>) {
        use super::layers::join;
        self.embed.params(&join(prefix, "embed"), out);
        for (i, m) in self.tfm.iter().enumerate() {
            m.params(&join(prefix, &format!("tfm.{i}")), out);
        }
        for (i, m) in self.skfm.iter().enumerate() {
            m.params(&join(prefix, &format!("skfm.{i}")), out);
        }
        self.regressor.params(&join(prefix, "regressor"), out);
    }

    fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Param)>) {
        use super::layers::join;
        self.embed.params_mut(&join(prefix, "embed"), out);
        for (i, m) in self.tfm.iter_mut().enumerate() {
            m.params_mut(&join(prefix, &format!("tfm.{i}")), out);
        }
        for (i, m) in self.skfm.iter_mut().enumerate() {
            m.params_mut(&join(prefix, &format!("skfm.{i}")), out);
        }
        self.regressor.params_mut(&join(prefix, "regressor"), out);
    }
}
