use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{Geometry, LossParts, Model};
use crate::mesh::DisplacementFrame;
use crate::tensor::{adam_step, AdamConfig, AdamState, Graph, Tensor};
use crate::{Error, Result, Scalar};

/// Mean per-frame losses over one epoch.
/// Loss parts, parameter gradients and upsampling-weight adjoint of one frame.
type FrameGrads<T> = (LossParts, Vec<Tensor<T>>, Tensor<T>);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub total: f64,
    pub recon: f64,
    pub normal: f64,
    pub reg: f64,
    pub beta: f64,
}

/// Mini-batch Adam over a fixed set of training frames.
pub struct Trainer<'a, T> {
    model: Model<T>,
    geometry: &'a Geometry<T>,
    frames: Vec<&'a DisplacementFrame>,
    adam: AdamState<T>,
    rng: ChaCha8Rng,
    epoch: usize,
}

impl<'a, T: Scalar> Trainer<'a, T> {
    pub fn new(model: Model<T>, geometry: &'a Geometry<T>, frames: Vec<&'a DisplacementFrame>) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::Empty("training frames"));
        }
        if let Some(f) = frames.iter().find(|f| f.hr_disp.is_none()) {
            return Err(Error::Missing(format!("surface targets for frame {}", f.frame_id)));
        }
        let config = AdamConfig {
            lr: model.config().lr,
            ..AdamConfig::default()
        };
        let adam = AdamState::new(config, model.params().tensors());
        // Offset keeps the batch order stream apart from weight initialization.
        let rng = ChaCha8Rng::seed_from_u64(model.config().seed ^ 0x5eed_0ba7c4);
        Ok(Trainer {
            model,
            geometry,
            frames,
            adam,
            rng,
            epoch: 0,
        })
    }

    pub fn model(&self) -> &Model<T> {
        &self.model
    }

    pub fn into_model(self) -> Model<T> {
        self.model
    }

    /// Number of completed epochs.
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn run_epoch(&mut self) -> Result<EpochLog> {
        let beta = self.model.config().beta_at(self.epoch);
        let mut order: Vec<usize> = (0..self.frames.len()).collect();
        order.shuffle(&mut self.rng);
        let mut sum = LossParts::default();
        for batch in order.chunks(self.model.config().batch_size) {
            let parts = self.step(batch, beta)?;
            sum.total += parts.total;
            sum.recon += parts.recon;
            sum.normal += parts.normal;
            sum.reg += parts.reg;
        }
        let n = self.frames.len() as f64;
        let log = EpochLog {
            epoch: self.epoch,
            total: sum.total / n,
            recon: sum.recon / n,
            normal: sum.normal / n,
            reg: sum.reg / n,
            beta,
        };
        self.epoch += 1;
        Ok(log)
    }

    /// One Adam update on the mean loss of `batch`; returns summed parts.
    fn step(&mut self, batch: &[usize], beta: f64) -> Result<LossParts> {
        let model = &self.model;
        let geo = self.geometry;

        // The upsampling weights do not depend on the frame, so they are
        // recorded once and their adjoints are summed over the batch.
        let mut shared = Graph::new();
        let shared_bound = model.bind(&mut shared, true);
        let weights = model.record_weights(&mut shared, &shared_bound, geo)?;
        let weight_value = shared.value(weights).clone();

        let results: Vec<Result<FrameGrads<T>>> = batch
            .par_iter()
            .map(|&i| {
                let mut g = Graph::new();
                let bound = model.bind(&mut g, true);
                let w = g.variable(weight_value.clone());
                let (loss, parts) = model.record_loss(&mut g, &bound, geo, w, self.frames[i], beta)?;
                let mut grads = g.backward(loss)?;
                let wg = grads
                    .take(w)
                    .unwrap_or_else(|| Tensor::zeros(weight_value.shape().to_vec()));
                Ok((parts, grads.for_params(&bound, model.params()), wg))
            })
            .collect();

        let mut total = LossParts::default();
        let mut grads: Option<Vec<Tensor<T>>> = None;
        let mut weight_grad = Tensor::zeros(weight_value.shape().to_vec());
        for r in results {
            let (parts, g, wg) = r?;
            total.total += parts.total;
            total.recon += parts.recon;
            total.normal += parts.normal;
            total.reg += parts.reg;
            total.skipped_faces += parts.skipped_faces;
            accumulate(&mut weight_grad, &wg);
            match grads.as_mut() {
                None => grads = Some(g),
                Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| accumulate(a, b)),
            }
        }
        let mut grads = grads.unwrap_or_default();
        let mut from_weights = shared.backward_from(vec![(weights, weight_grad)])?;
        for (a, b) in grads
            .iter_mut()
            .zip(from_weights.for_params(&shared_bound, model.params()))
        {
            accumulate(a, &b);
        }

        let inv = T::lit(1.0 / batch.len() as f64);
        for t in &mut grads {
            t.data_mut().iter_mut().for_each(|v| *v *= inv);
        }
        if !grads.iter().all(Tensor::all_finite) {
            return Err(Error::Format(format!(
                "non-finite gradient at epoch {}",
                self.epoch
            )));
        }
        adam_step(self.model.params_mut().tensors_mut(), &grads, &mut self.adam)?;
        Ok(total)
    }
}

fn accumulate<T: Scalar>(acc: &mut Tensor<T>, add: &Tensor<T>) {
    for (a, &b) in acc.data_mut().iter_mut().zip(add.data()) {
        *a += b;
    }
}

/// Runs every configured epoch. When `checkpoints` is given, a checkpoint is
/// written there every `checkpoint_every` epochs and after the last one.
pub fn train<T: Scalar>(
    model: Model<T>,
    geometry: &Geometry<T>,
    frames: Vec<&DisplacementFrame>,
    checkpoints: Option<&Path>,
) -> Result<(Model<T>, Vec<EpochLog>)> {
    let epochs = model.config().epochs;
    let every = model.config().checkpoint_every;
    let mut trainer = Trainer::new(model, geometry, frames)?;
    let mut log = Vec::with_capacity(epochs);
    for e in 0..epochs {
        log.push(trainer.run_epoch()?);
        if let Some(dir) = checkpoints {
            let done = e + 1;
            if (every > 0 && done % every == 0) || done == epochs {
                trainer.model().save(dir.join(format!("epoch_{done:05}.ssck")))?;
            }
        }
    }
    Ok((trainer.into_model(), log))
}

/// The loss log as CSV with a header row.
pub fn loss_log_csv(log: &[EpochLog]) -> String {
    let mut out = String::from("epoch,L_total,L_recon,L_fn,L_reg,beta\n");
    for e in log {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            e.epoch, e.total, e.recon, e.normal, e.reg, e.beta
        );
    }
    out
}
