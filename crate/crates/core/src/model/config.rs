use crate::error::{Error, Result};
use crate::kinematics::{ScanStrategy, NUM_JOINTS};

/// Input channels: 3 trackers × (position 3 + 6D rotation 6 + linear
/// velocity 3 + angular velocity 6).
pub const INPUT_DIM: usize = 3 * (3 + 6 + 3 + 6);
/// Output channels: 22 joints × 6D.
pub const OUTPUT_DIM: usize = NUM_JOINTS * 6;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    /// Temporal flow modules.
    pub n_tfm: usize,
    /// Spatiotemporal kinematic flow modules.
    pub m_skfm: usize,
    pub embed_dim: usize,
    /// Latent width per joint inside the spatiotemporal modules.
    pub joint_dim: usize,
    pub seq_len: usize,
    pub input_dim: usize,
    pub gma_hidden: usize,
    pub gma_heads: usize,
    /// Feed-forward width as a multiple of `gma_hidden`.
    pub gma_ffn_mult: usize,
    /// Add sinusoidal frame encodings before attention.
    pub gma_positional: bool,
    pub ssd_state: usize,
    /// Channels per SSD head; a block narrower than this runs one head.
    pub ssd_head_dim: usize,
    pub conv_width: usize,
    pub chunk: usize,
    pub scan_strategy: ScanStrategy,
    /// Share one SSD block between the forward and backward branches.
    pub tie_branches: bool,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            n_tfm: 2,
            m_skfm: 2,
            embed_dim: 256,
            joint_dim: 64,
            seq_len: 96,
            input_dim: INPUT_DIM,
            gma_hidden: 512,
            gma_heads: 8,
            gma_ffn_mult: 2,
            gma_positional: false,
            ssd_state: crate::ssd::DEFAULT_STATE_DIM,
            ssd_head_dim: 64,
            conv_width: 4,
            chunk: crate::ssd::DEFAULT_CHUNK,
            scan_strategy: ScanStrategy::Uks,
            tie_branches: false,
            seed: 0,
        }
    }
}

impl ModelConfig {
    /// Small configuration for smoke tests and micro-scale training.
    pub fn micro() -> Self {
        Self {
            n_tfm: 1,
            m_skfm: 1,
            embed_dim: 16,
            joint_dim: 4,
            seq_len: 8,
            gma_hidden: 16,
            gma_heads: 2,
            gma_ffn_mult: 1,
            ssd_state: 4,
            ssd_head_dim: 8,
            conv_width: 4,
            chunk: 8,
            ..Self::default()
        }
    }

    pub fn joints(&self) -> usize {
        NUM_JOINTS
    }

    pub fn output_dim(&self) -> usize {
        OUTPUT_DIM
    }

    /// Mixed joint width `H = J · D`.
    pub fn mixed_dim(&self) -> usize {
        NUM_JOINTS * self.joint_dim
    }

    /// Length of the flattened (frame, joint) scan inside each spatiotemporal module.
    pub fn mixed_len(&self) -> usize {
        self.seq_len * self.scan_strategy.order().len()
    }

    /// Heads and per-head width of an SSD block of `width` channels.
    pub fn ssd_heads(&self, width: usize) -> (usize, usize) {
        let p = self.ssd_head_dim.min(width);
        (width / p, p)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("embed_dim", self.embed_dim),
            ("joint_dim", self.joint_dim),
            ("seq_len", self.seq_len),
            ("gma_hidden", self.gma_hidden),
            ("gma_heads", self.gma_heads),
            ("gma_ffn_mult", self.gma_ffn_mult),
            ("ssd_state", self.ssd_state),
            ("ssd_head_dim", self.ssd_head_dim),
            ("conv_width", self.conv_width),
            ("chunk", self.chunk),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if self.input_dim != INPUT_DIM {
            return Err(Error::Config(format!(
                "input_dim must be {INPUT_DIM}, got {}",
                self.input_dim
            )));
        }
        if !self.gma_hidden.is_multiple_of(self.gma_heads) {
            return Err(Error::Config(format!(
                "gma_hidden {} not divisible by gma_heads {}",
                self.gma_hidden, self.gma_heads
            )));
        }
        if self.gma_positional && !self.gma_hidden.is_multiple_of(2) {
            return Err(Error::Config("positional encoding needs an even gma_hidden".into()));
        }
        for (name, width) in [("embed_dim", self.embed_dim), ("joint_dim", self.joint_dim)] {
            let (_, p) = self.ssd_heads(width);
            if width % p != 0 {
                return Err(Error::Config(format!(
                    "{name} {width} not divisible by ssd_head_dim {}",
                    self.ssd_head_dim
                )));
            }
        }
        Ok(())
    }

    /// Closed-form number of learnable scalars.
    pub fn param_count(&self) -> usize {
        let linear = |i: usize, o: usize| i * o + o;
        let norm = |n: usize| 2 * n;
        let ssd_block = |w: usize| {
            let (heads, _) = self.ssd_heads(w);
            let xbc = w + 2 * self.ssd_state;
            norm(w)
                + linear(w, xbc)
                + (self.conv_width + 1) * xbc
                + linear(w, heads)
                + linear(w, w)
                + norm(w)
                + linear(w, w)
        };
        let bi = |w: usize| if self.tie_branches { 1 } else { 2 } * ssd_block(w);
        let (e, g) = (self.embed_dim, self.gma_hidden);
        let lma = norm(e) + linear(e, e);
        let gma = linear(e, g)
            + norm(g)
            + 4 * linear(g, g)
            + linear(g, self.gma_ffn_mult * g)
            + linear(self.gma_ffn_mult * g, g)
            + linear(g, e);
        let tfm = bi(e) + lma + gma;
        let h = self.mixed_dim();
        let skfm = linear(e, h) + bi(self.joint_dim) + linear(h, e) + lma + gma;
        linear(self.input_dim, e) + self.n_tfm * tfm + self.m_skfm * skfm + linear(e, OUTPUT_DIM)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_dimensions() {
        let c = ModelConfig::default();
        assert_eq!(c.input_dim, 54);
        assert_eq!(c.output_dim(), 132);
        assert_eq!(c.mixed_dim(), 1408);
        assert_eq!(c.mixed_len(), 96 * 22);
        let fks = ModelConfig {
            scan_strategy: ScanStrategy::Fks,
            ..c
        };
        assert_eq!(fks.mixed_len(), 96 * 32);
    }

    #[test]
    fn validation() {
        assert!(ModelConfig::default().validate().is_ok());
        assert!(ModelConfig::micro().validate().is_ok());
        let bad_heads = ModelConfig {
            gma_heads: 7,
            ..ModelConfig::default()
        };
        assert!(bad_heads.validate().is_err());
        let bad_input = ModelConfig {
            input_dim: 36,
            ..ModelConfig::default()
        };
        assert!(bad_input.validate().is_err());
        let bad_ssd = ModelConfig {
            embed_dim: 96,
            ssd_head_dim: 64,
            ..ModelConfig::default()
        };
        assert!(bad_ssd.validate().is_err());
    }
}
