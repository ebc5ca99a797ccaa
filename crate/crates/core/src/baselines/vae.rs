use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::mesh::{DisplacementFrame, Vec3};
use crate::tensor::init::{he_bound, uniform};
use crate::tensor::{adam_step, load_checkpoint, save_checkpoint, AdamConfig, AdamState, Bound, Graph, ParamId, ParamStore, Tensor, Var};
use crate::{Error, Result, Scalar};

const SCALE_NAME: &str = "meta.disp_scale";
/// Surface output width the reference decoder was sized for.
const REFERENCE_OUTPUT: usize = 3 * 35_637;
const REFERENCE_LAST_HIDDEN: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VaeConfig {
    pub encoder: Vec<usize>,
    pub latent: usize,
    /// Decoder hidden widths; empty picks [`VaeConfig::decoder_for`].
    pub decoder: Vec<usize>,
    pub beta: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub leaky_slope: f64,
}

impl Default for VaeConfig {
    fn default() -> Self {
        VaeConfig {
            encoder: vec![1024, 512],
            latent: 128,
            decoder: Vec::new(),
            beta: 0.01,
            lr: 1e-4,
            batch_size: 6,
            epochs: 200,
            seed: 0,
            leaky_slope: 0.01,
        }
    }
}

impl VaeConfig {
    /// Decoder widths for a surface of `surface_count` vertices: 256 and
    /// 1024, then the reference 4096 scaled by the output width.
    pub fn decoder_for(&self, surface_count: usize) -> Vec<usize> {
        if !self.decoder.is_empty() {
            return self.decoder.clone();
        }
        let last = (REFERENCE_LAST_HIDDEN * 3 * surface_count).div_ceil(REFERENCE_OUTPUT);
        vec![256, 1024, last.max(256)]
    }
}

/// KL divergence of `N(mu, exp(logvar))` from the standard normal.
pub fn kl_divergence(mu: &[f64], logvar: &[f64]) -> f64 {
    -0.5 * mu
        .iter()
        .zip(logvar)
        .map(|(m, lv)| 1.0 + lv - m * m - lv.exp())
        .sum::<f64>()
}

#[derive(Debug, Clone)]
struct Dense {
    w: ParamId,
    b: ParamId,
}

/// Fully connected variational autoencoder from flattened coarse
/// displacements to flattened surface displacements.
#[derive(Debug, Clone)]
pub struct BetaVae<T> {
    config: VaeConfig,
    lattice_count: usize,
    surface_count: usize,
    disp_scale: f64,
    params: ParamStore<T>,
    encoder: Vec<Dense>,
    mu: Dense,
    logvar: Dense,
    decoder: Vec<Dense>,
}

fn dense<T: Scalar>(store: &mut ParamStore<T>, rng: &mut ChaCha8Rng, name: &str, fan_in: usize, out: usize, slope: f64) -> Dense {
    Dense {
        w: store.add(format!("{name}.w"), uniform(rng, vec![fan_in, out], he_bound(fan_in, slope))),
        b: store.add(format!("{name}.b"), Tensor::zeros(vec![out])),
    }
}

impl<T: Scalar> BetaVae<T> {
    pub fn new(config: VaeConfig, lattice_count: usize, surface_count: usize, disp_scale: f64) -> Result<Self> {
        if config.latent == 0 || config.encoder.contains(&0) || config.batch_size == 0 {
            return Err(Error::Config("vae widths and batch size must be positive".into()));
        }
        if !(disp_scale > 0.0) {
            return Err(Error::Config(format!("displacement scale must be positive, got {disp_scale}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = ParamStore::new();
        let slope = config.leaky_slope;
        let mut width = 3 * lattice_count;
        let mut encoder = Vec::new();
        for (l, &h) in config.encoder.iter().enumerate() {
            encoder.push(dense(&mut params, &mut rng, &format!("enc.{l}"), width, h, slope));
            width = h;
        }
        let mu = dense(&mut params, &mut rng, "enc.mu", width, config.latent, 1.0);
        let logvar = dense(&mut params, &mut rng, "enc.logvar", width, config.latent, 1.0);
        let mut decoder = Vec::new();
        width = config.latent;
        for (l, &h) in config.decoder_for(surface_count).iter().enumerate() {
            decoder.push(dense(&mut params, &mut rng, &format!("dec.{l}"), width, h, slope));
            width = h;
        }
        decoder.push(dense(&mut params, &mut rng, "dec.out", width, 3 * surface_count, 1.0));
        Ok(BetaVae {
            config,
            lattice_count,
            surface_count,
            disp_scale,
            params,
            encoder,
            mu,
            logvar,
            decoder,
        })
    }

    pub fn config(&self) -> &VaeConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn disp_scale(&self) -> f64 {
        self.disp_scale
    }

    fn layer(&self, g: &mut Graph<T>, bound: &Bound, d: &Dense, x: Var, act: bool) -> Result<Var> {
        let y = g.matmul(x, bound.var(d.w))?;
        let y = g.add_bias(y, bound.var(d.b))?;
        Ok(if act {
            g.leaky_relu(y, T::lit(self.config.leaky_slope))
        } else {
            y
        })
    }

    fn input(&self, frames: &[&[Vec3]]) -> Result<Tensor<T>> {
        let inv = 1.0 / self.disp_scale;
        let mut data = Vec::with_capacity(frames.len() * 3 * self.lattice_count);
        for f in frames {
            if f.len() != self.lattice_count {
                return Err(Error::shape(format!("{} coarse rows, expected {}", f.len(), self.lattice_count)));
            }
            data.extend(f.iter().flatten().map(|&v| T::lit(v * inv)));
        }
        Tensor::new(vec![frames.len(), 3 * self.lattice_count], data)
    }

    /// Records the forward pass; `noise` replaces the latent sample, `None`
    /// decodes the mean. Returns output, mean and log-variance.
    fn record(&self, g: &mut Graph<T>, bound: &Bound, x: Var, noise: Option<Var>) -> Result<(Var, Var, Var)> {
        let mut h = x;
        for d in &self.encoder {
            h = self.layer(g, bound, d, h, true)?;
        }
        let mu = self.layer(g, bound, &self.mu, h, false)?;
        let lv = self.layer(g, bound, &self.logvar, h, false)?;
        let mut z = mu;
        if let Some(eps) = noise {
            let half = g.scale(lv, T::lit(0.5));
            let std = g.exp(half);
            let s = g.mul(std, eps)?;
            z = g.add(mu, s)?;
        }
        let last = self.decoder.len() - 1;
        for (l, d) in self.decoder.iter().enumerate() {
            z = self.layer(g, bound, d, z, l != last)?;
        }
        Ok((z, mu, lv))
    }

    /// Mean-latent prediction of surface displacements, mm.
    pub fn infer(&self, lr_disp: &[Vec3]) -> Result<Vec<Vec3>> {
        let mut g = Graph::new();
        let bound = self.params.bind(&mut g, false);
        let x = g.constant(self.input(&[lr_disp])?);
        let (out, _, _) = self.record(&mut g, &bound, x, None)?;
        let s = self.disp_scale;
        Ok(g.value(out)
            .data()
            .chunks(3)
            .map(|c| [c[0].as_f64() * s, c[1].as_f64() * s, c[2].as_f64() * s])
            .collect())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut s = self.params.clone();
        s.add(SCALE_NAME, Tensor::scalar(T::lit(self.disp_scale)));
        save_checkpoint(&s, path)
    }

    pub fn load(config: VaeConfig, lattice_count: usize, surface_count: usize, path: impl AsRef<Path>) -> Result<Self> {
        let store: ParamStore<T> = load_checkpoint(path)?;
        let id = store.find(SCALE_NAME).ok_or_else(|| Error::Missing(SCALE_NAME.into()))?;
        let mut vae = Self::new(config, lattice_count, surface_count, store.get(id).item().as_f64())?;
        for id in vae.params.ids().collect::<Vec<_>>() {
            let name = vae.params.name(id).to_string();
            let src = store.find(&name).ok_or_else(|| Error::Missing(format!("parameter {name}")))?;
            let t = store.get(src);
            if t.shape() != vae.params.get(id).shape() {
                return Err(Error::shape(format!("parameter {name} has shape {:?}", t.shape())));
            }
            *vae.params.get_mut(id) = t.clone();
        }
        Ok(vae)
    }
}

/// Per-epoch mean losses per frame, in scaled units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VaeEpoch {
    pub epoch: usize,
    pub recon: f64,
    pub kl: f64,
}

/// Minibatch trainer with the reparameterized latent sample.
pub struct VaeTrainer<'a, T> {
    vae: BetaVae<T>,
    frames: Vec<&'a DisplacementFrame>,
    adam: AdamState<T>,
    rng: ChaCha8Rng,
    epoch: usize,
}

impl<'a, T: Scalar> VaeTrainer<'a, T> {
    pub fn new(vae: BetaVae<T>, frames: Vec<&'a DisplacementFrame>) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::Empty("training frames"));
        }
        for f in &frames {
            match &f.hr_disp {
                Some(h) if h.len() == vae.surface_count => {}
                Some(h) => {
                    return Err(Error::shape(format!(
                        "frame {}: {} surface rows, expected {}",
                        f.frame_id,
                        h.len(),
                        vae.surface_count
                    )))
                }
                None => return Err(Error::Missing(format!("surface targets for frame {}", f.frame_id))),
            }
        }
        let adam = AdamState::new(
            AdamConfig {
                lr: vae.config.lr,
                ..AdamConfig::default()
            },
            vae.params.tensors(),
        );
        let rng = ChaCha8Rng::seed_from_u64(vae.config.seed ^ 0x0a_e5eed);
        Ok(VaeTrainer {
            vae,
            frames,
            adam,
            rng,
            epoch: 0,
        })
    }

    pub fn vae(&self) -> &BetaVae<T> {
        &self.vae
    }

    pub fn into_vae(self) -> BetaVae<T> {
        self.vae
    }

    pub fn run_epoch(&mut self) -> Result<VaeEpoch> {
        let mut order: Vec<usize> = (0..self.frames.len()).collect();
        order.shuffle(&mut self.rng);
        let (mut recon, mut kl) = (0.0, 0.0);
        for batch in order.chunks(self.vae.config.batch_size) {
            let (r, k) = self.step(batch)?;
            recon += r;
            kl += k;
        }
        let n = self.frames.len() as f64;
        let log = VaeEpoch {
            epoch: self.epoch,
            recon: recon / n,
            kl: kl / n,
        };
        self.epoch += 1;
        Ok(log)
    }

    /// One Adam step; returns the batch sums of both loss terms.
    fn step(&mut self, batch: &[usize]) -> Result<(f64, f64)> {
        let vae = &self.vae;
        let b = batch.len();
        let lr: Vec<&[Vec3]> = batch.iter().map(|&i| self.frames[i].lr_disp.as_slice()).collect();
        let inv = 1.0 / vae.disp_scale;
        let target: Vec<T> = batch
            .iter()
            .flat_map(|&i| self.frames[i].hr_disp.iter().flatten().flatten())
            .map(|&v| T::lit(v * inv))
            .collect();
        let noise: Vec<T> = (0..b * vae.config.latent)
            .map(|_| T::lit(StandardNormal.sample(&mut self.rng)))
            .collect();

        let mut g = Graph::new();
        let bound = vae.params.bind(&mut g, true);
        let x = g.constant(vae.input(&lr)?);
        let eps = g.constant(Tensor::new(vec![b, vae.config.latent], noise)?);
        let (out, mu, lv) = vae.record(&mut g, &bound, x, Some(eps))?;
        let tgt = g.constant(Tensor::new(vec![b, 3 * vae.surface_count], target)?);
        let diff = g.sub(out, tgt)?;
        let sq = g.mul(diff, diff)?;
        let recon = g.sum_all(sq);
        let mu2 = g.mul(mu, mu)?;
        let ev = g.exp(lv);
        let t = g.add_scalar(lv, T::one());
        let t = g.sub(t, mu2)?;
        let t = g.sub(t, ev)?;
        let t = g.sum_all(t);
        let kl = g.scale(t, T::lit(-0.5));
        let weighted = g.scale(kl, T::lit(vae.config.beta));
        let total = g.add(recon, weighted)?;
        let loss = g.scale(total, T::lit(1.0 / b as f64));
        let sums = (g.value(recon).item().as_f64(), g.value(kl).item().as_f64());
        let mut grads = g.backward(loss)?;
        let grads = grads.for_params(&bound, &vae.params);
        if !grads.iter().all(Tensor::all_finite) {
            return Err(Error::Format(format!("non-finite gradient at epoch {}", self.epoch)));
        }
        adam_step(self.vae.params.tensors_mut(), &grads, &mut self.adam)?;
        Ok(sums)
    }
}

/// Trains for the configured number of epochs.
pub fn train_vae<T: Scalar>(
    config: VaeConfig,
    lattice_count: usize,
    surface_count: usize,
    frames: Vec<&DisplacementFrame>,
) -> Result<(BetaVae<T>, Vec<VaeEpoch>)> {
    let scale = crate::network::displacement_scale(&frames);
    let epochs = config.epochs;
    let vae = BetaVae::new(config, lattice_count, surface_count, scale)?;
    let mut trainer = VaeTrainer::new(vae, frames)?;
    let log = (0..epochs).map(|_| trainer.run_epoch()).collect::<Result<Vec<_>>>()?;
    Ok((trainer.into_vae(), log))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prior_has_zero_divergence() {
        assert_eq!(kl_divergence(&[0.0; 4], &[0.0; 4]), 0.0);
        assert!(kl_divergence(&[0.3, -1.0], &[0.5, -2.0]) > 0.0);
    }

    #[test]
    fn decoder_width_tracks_output() {
        let c = VaeConfig::default();
        assert_eq!(c.decoder_for(35_637), vec![256, 1024, 4096]);
        assert_eq!(c.decoder_for(10), vec![256, 1024, 256]);
    }

    #[test]
    fn overfitting_one_frame_reduces_error() {
        let frame = DisplacementFrame {
            frame_id: 0,
            params: vec![],
            lr_disp: vec![[1.0, 0.5, -0.5], [0.0, 2.0, 1.0]],
            hr_disp: Some(vec![[0.5, 0.5, 0.0], [1.0, -1.0, 0.5], [2.0, 0.0, 0.0]]),
        };
        let config = VaeConfig {
            encoder: vec![16],
            latent: 4,
            decoder: vec![16],
            lr: 1e-3,
            epochs: 150,
            ..VaeConfig::default()
        };
        let (vae, log) = train_vae::<f64>(config, 2, 3, vec![&frame]).unwrap();
        assert!(log.last().unwrap().recon < 0.2 * log[0].recon);
        let out = vae.infer(&frame.lr_disp).unwrap();
        assert_eq!(out.len(), 3);
        assert!(out.iter().flatten().all(|v| v.is_finite()));
    }
}
