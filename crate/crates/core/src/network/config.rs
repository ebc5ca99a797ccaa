use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::kv::{entries, join};
use crate::{Error, Result};

/// Which parts of the model are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Variant {
    #[default]
    Full,
    /// Position-encoded input goes straight to upsampling.
    NoFeatureEncoding,
    /// Free per-pair weights over Euclidean neighbours replace the weighting MLP.
    NoCoordinateUpsampling,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Full => "full",
            Variant::NoFeatureEncoding => "no-fe",
            Variant::NoCoordinateUpsampling => "no-cu",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Variant::Full),
            "no-fe" => Ok(Variant::NoFeatureEncoding),
            "no-cu" => Ok(Variant::NoCoordinateUpsampling),
            other => Err(Error::Config(format!("unknown variant `{other}`"))),
        }
    }
}

/// Architecture and training hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    /// Output width of each feature-encoding submodule.
    pub widths: Vec<usize>,
    /// Frequencies per axis in the positional encoding.
    pub pe_levels: usize,
    pub k_graph: usize,
    pub k_interp: usize,
    pub alpha: f64,
    pub beta_start: f64,
    pub beta_max: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub weight_hidden: usize,
    pub weight_layers: usize,
    pub recon_hidden: usize,
    pub recon_layers: usize,
    pub omega0: f64,
    pub leaky_slope: f64,
    /// Epoch interval between checkpoints; 0 disables them.
    pub checkpoint_every: usize,
    pub variant: Variant,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            widths: vec![64, 128],
            pe_levels: 5,
            k_graph: 5,
            k_interp: 20,
            alpha: 0.001,
            beta_start: 0.001,
            beta_max: 20.0,
            lr: 1e-4,
            batch_size: 6,
            epochs: 2800,
            seed: 0,
            weight_hidden: 32,
            weight_layers: 2,
            recon_hidden: 64,
            recon_layers: 2,
            omega0: 30.0,
            leaky_slope: 0.2,
            checkpoint_every: 0,
            variant: Variant::Full,
        }
    }
}

impl ModelConfig {
    /// Width of the encoder input: displacement plus positional encoding.
    pub fn input_width(&self) -> usize {
        3 + 6 * self.pe_levels
    }

    /// Width of the concatenated per-vertex encoding.
    pub fn encoded_width(&self) -> usize {
        match self.variant {
            Variant::NoFeatureEncoding => self.input_width(),
            _ => self.input_width() + self.widths.iter().sum::<usize>(),
        }
    }

    /// Regularization weight at `epoch`, ramped linearly over the run.
    pub fn beta_at(&self, epoch: usize) -> f64 {
        if self.epochs <= 1 {
            return self.beta_start;
        }
        let t = (epoch.min(self.epochs - 1)) as f64 / (self.epochs - 1) as f64;
        self.beta_start + (self.beta_max - self.beta_start) * t
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_owned()));
        if self.widths.is_empty() || self.widths.contains(&0) {
            return bad("widths must be a non-empty list of positive sizes");
        }
        if self.k_graph == 0 || self.k_interp == 0 {
            return bad("k_graph and k_interp must be at least 1");
        }
        if self.weight_hidden == 0 || self.recon_hidden == 0 {
            return bad("hidden widths must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        let finite_nonneg = [self.alpha, self.beta_start, self.beta_max];
        if finite_nonneg.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return bad("alpha and beta must be finite and non-negative");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) || !(self.omega0 > 0.0) {
            return bad("lr and omega0 must be positive");
        }
        if !(0.0..1.0).contains(&self.leaky_slope) {
            return bad("leaky_slope must lie in [0, 1)");
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut c = ModelConfig::default();
        for e in entries(text)? {
            match e.key {
                "widths" => c.widths = e.list()?,
                "pe_levels" => c.pe_levels = e.parse()?,
                "k_graph" => c.k_graph = e.parse()?,
                "k_interp" => c.k_interp = e.parse()?,
                "alpha" => c.alpha = e.parse()?,
                "beta_start" => c.beta_start = e.parse()?,
                "beta_max" => c.beta_max = e.parse()?,
                "lr" => c.lr = e.parse()?,
                "batch_size" => c.batch_size = e.parse()?,
                "epochs" => c.epochs = e.parse()?,
                "seed" => c.seed = e.parse()?,
                "weight_hidden" => c.weight_hidden = e.parse()?,
                "weight_layers" => c.weight_layers = e.parse()?,
                "recon_hidden" => c.recon_hidden = e.parse()?,
                "recon_layers" => c.recon_layers = e.parse()?,
                "omega0" => c.omega0 = e.parse()?,
                "leaky_slope" => c.leaky_slope = e.parse()?,
                "checkpoint_every" => c.checkpoint_every = e.parse()?,
                "variant" => c.variant = e.parse()?,
                _ => return Err(e.unknown()),
            }
        }
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        format!(
            "widths = {}\npe_levels = {}\nk_graph = {}\nk_interp = {}\nalpha = {}\n\
             beta_start = {}\nbeta_max = {}\nlr = {}\nbatch_size = {}\nepochs = {}\n\
             seed = {}\nweight_hidden = {}\nweight_layers = {}\nrecon_hidden = {}\n\
             recon_layers = {}\nomega0 = {}\nleaky_slope = {}\ncheckpoint_every = {}\n\
             variant = {}\n",
            join(&self.widths),
            self.pe_levels,
            self.k_graph,
            self.k_interp,
            self.alpha,
            self.beta_start,
            self.beta_max,
            self.lr,
            self.batch_size,
            self.epochs,
            self.seed,
            self.weight_hidden,
            self.weight_layers,
            self.recon_hidden,
            self.recon_layers,
            self.omega0,
            self.leaky_slope,
            self.checkpoint_every,
            self.variant,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_widths() {
        let c = ModelConfig::default();
        assert_eq!(c.input_width(), 33);
        assert_eq!(c.encoded_width(), 33 + 64 + 128);
        let no_fe = ModelConfig {
            variant: Variant::NoFeatureEncoding,
            ..c
        };
        assert_eq!(no_fe.encoded_width(), 33);
    }

    #[test]
    fn text_round_trip() {
        let c = ModelConfig {
            widths: vec![8, 16, 4],
            lr: 3e-4,
            variant: Variant::NoCoordinateUpsampling,
            ..ModelConfig::default()
        };
        assert_eq!(ModelConfig::parse(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(ModelConfig::parse("k_graph = 0").is_err());
        assert!(ModelConfig::parse("alpha = -1").is_err());
        assert!(ModelConfig::parse("widths = ").is_err());
        assert!(ModelConfig::parse("depth = 3").is_err());
        assert!(ModelConfig::parse("variant = half").is_err());
    }

    #[test]
    fn beta_ramp_is_monotone() {
        let c = ModelConfig {
            epochs: 50,
            ..ModelConfig::default()
        };
        assert_eq!(c.beta_at(0), 0.001);
        assert_eq!(c.beta_at(49), 20.0);
        assert!((1..60).all(|e| c.beta_at(e) >= c.beta_at(e - 1)));
    }
}
