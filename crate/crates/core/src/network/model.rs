use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Geometry, ModelConfig, Variant};
use crate::mesh::{add, cross, norm, sub, DisplacementFrame, Vec3, MIN_TRIANGLE_AREA};
use crate::tensor::init::{he_bound, linear_bound, siren_bound, uniform};
use crate::tensor::{load_checkpoint, save_checkpoint, Bound, Graph, ParamId, ParamStore, Tensor, Var};
use crate::{Error, Result, Scalar};

const SCALE_NAME: &str = "meta.disp_scale";

#[derive(Debug, Clone, Copy)]
struct Linear {
    w: ParamId,
    b: ParamId,
}

#[derive(Debug, Clone, Copy)]
struct Submodule {
    edge: Linear,
    fc: Linear,
}

/// Loss terms of one frame.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossParts {
    pub total: f64,
    pub recon: f64,
    pub normal: f64,
    pub reg: f64,
    /// Faces left out of the normal term because a triangle collapsed.
    pub skipped_faces: usize,
}

/// Per-vertex encodings of one frame on the lattice.
#[derive(Debug, Clone)]
pub struct EncodedFeatures<T> {
    /// Scaled displacement followed by the positional encoding.
    pub input: Tensor<T>,
    /// Output of every encoding submodule.
    pub layers: Vec<Tensor<T>>,
    /// `input` and all `layers` side by side.
    pub encoded: Tensor<T>,
}

/// Largest absolute lattice displacement component over `frames`, used to
/// bring network inputs and outputs to unit scale.
pub fn displacement_scale(frames: &[&DisplacementFrame]) -> f64 {
    let m = frames
        .iter()
        .flat_map(|f| f.lr_disp.iter().flatten())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    if m > 0.0 {
        m
    } else {
        1.0
    }
}

/// Model weights together with the configuration that shaped them.
#[derive(Debug, Clone)]
pub struct Model<T> {
    config: ModelConfig,
    params: ParamStore<T>,
    encoder: Vec<Submodule>,
    weight_mlp: Vec<Linear>,
    recon: Vec<Linear>,
    free_weights: Option<ParamId>,
    disp_scale: f64,
}

fn linear<T: Scalar>(
    store: &mut ParamStore<T>,
    rng: &mut ChaCha8Rng,
    name: &str,
    shape: (usize, usize),
    w_bound: f64,
    b_bound: f64,
) -> Linear {
    let w = store.add(format!("{name}.w"), uniform(rng, vec![shape.0, shape.1], w_bound));
    let b = store.add(format!("{name}.b"), uniform(rng, vec![shape.1], b_bound));
    Linear { w, b }
}

/// Sine layers of width `hidden` followed by a linear output layer.
fn siren<T: Scalar>(
    store: &mut ParamStore<T>,
    rng: &mut ChaCha8Rng,
    name: &str,
    (input, hidden, layers, output): (usize, usize, usize, usize),
    omega0: f64,
) -> Vec<Linear> {
    let mut out = Vec::with_capacity(layers + 1);
    let mut fan_in = input;
    for l in 0..layers {
        let w = siren_bound(fan_in, l == 0, omega0);
        out.push(linear(store, rng, &format!("{name}.{l}"), (fan_in, hidden), w, linear_bound(fan_in)));
        fan_in = hidden;
    }
    let w = if layers == 0 {
        linear_bound(fan_in)
    } else {
        siren_bound(fan_in, false, omega0)
    };
    out.push(linear(store, rng, &format!("{name}.{layers}"), (fan_in, output), w, 0.0));
    out
}

fn dense<T: Scalar>(g: &mut Graph<T>, bound: &Bound, lin: &Linear, x: Var) -> Result<Var> {
    let y = g.matmul(x, bound.var(lin.w))?;
    g.add_bias(y, bound.var(lin.b))
}

fn sine<T: Scalar>(g: &mut Graph<T>, x: Var, omega0: f64) -> Var {
    let s = g.scale(x, T::lit(omega0));
    g.sin(s)
}

/// `k` nearest rows of `z` (excluding the row itself) by Euclidean distance,
/// ties to the lower index.
fn feature_knn<T: Scalar>(z: &Tensor<T>, k: usize) -> Vec<usize> {
    let (n, d) = (z.shape()[0], z.shape()[1]);
    let data = z.data();
    let mut out = Vec::with_capacity(n * k);
    let mut cand: Vec<(f64, usize)> = Vec::with_capacity(n);
    for i in 0..n {
        let zi = &data[i * d..(i + 1) * d];
        cand.clear();
        for j in (0..n).filter(|&j| j != i) {
            let zj = &data[j * d..(j + 1) * d];
            let d2: T = zi.iter().zip(zj).map(|(&a, &b)| (a - b) * (a - b)).sum();
            cand.push((d2.as_f64(), j));
        }
        let order = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < cand.len() {
            cand.select_nth_unstable_by(k, order);
            cand.truncate(k);
        }
        cand.sort_by(order);
        out.extend(cand.iter().map(|&(_, j)| j));
    }
    out
}

impl<T: Scalar> Model<T> {
    /// Freshly initialized weights, seeded from `config.seed`.
    pub fn new(config: ModelConfig, surface_count: usize, disp_scale: f64) -> Result<Self> {
        config.validate()?;
        if !(disp_scale > 0.0 && disp_scale.is_finite()) {
            return Err(Error::Config(format!("displacement scale {disp_scale} must be positive")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = ParamStore::new();
        let slope = config.leaky_slope;

        let mut encoder = Vec::new();
        if config.variant != Variant::NoFeatureEncoding {
            let mut prev = config.input_width();
            for (s, &d) in config.widths.iter().enumerate() {
                let edge = linear(
                    &mut params,
                    &mut rng,
                    &format!("encoder.{s}.edge"),
                    (2 * prev, d),
                    he_bound(2 * prev, slope),
                    0.0,
                );
                let fc = linear(
                    &mut params,
                    &mut rng,
                    &format!("encoder.{s}.fc"),
                    (3 * d + prev, d),
                    he_bound(3 * d + prev, slope),
                    0.0,
                );
                encoder.push(Submodule { edge, fc });
                prev = d;
            }
        }

        let (weight_mlp, free_weights) = match config.variant {
            Variant::NoCoordinateUpsampling => {
                let k = config.k_interp;
                let w = Tensor::full(vec![surface_count, k], T::lit(1.0 / k as f64));
                (Vec::new(), Some(params.add("upsample.weights", w)))
            }
            _ => (
                siren(
                    &mut params,
                    &mut rng,
                    "weight",
                    (7, config.weight_hidden, config.weight_layers, 1),
                    config.omega0,
                ),
                None,
            ),
        };

        let recon = siren(
            &mut params,
            &mut rng,
            "recon",
            (config.encoded_width(), config.recon_hidden, config.recon_layers, 3),
            config.omega0,
        );

        Ok(Model {
            config,
            params,
            encoder,
            weight_mlp,
            recon,
            free_weights,
            // Checkpoints store it in single precision.
            disp_scale: disp_scale as f32 as f64,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    pub fn disp_scale(&self) -> f64 {
        self.disp_scale
    }

    pub fn bind(&self, g: &mut Graph<T>, track: bool) -> Bound {
        self.params.bind(g, track)
    }

    /// Sets the output layer of the reconstructor to zero, so every
    /// prediction is the rest pose.
    pub fn zero_output_layer(&mut self) {
        let last = self.recon[self.recon.len() - 1];
        for id in [last.w, last.b] {
            self.params.get_mut(id).data_mut().fill(T::zero());
        }
    }

    fn check_geometry(&self, geo: &Geometry<T>) -> Result<()> {
        if geo.k_interp() != self.config.k_interp {
            return Err(Error::shape(format!(
                "geometry built for k_interp = {}, model uses {}",
                geo.k_interp(),
                self.config.k_interp
            )));
        }
        if let Some(id) = self.free_weights {
            let s = self.params.get(id).shape();
            if s[0] != geo.surface_count() {
                return Err(Error::shape(format!(
                    "weight table has {} rows for {} surface vertices",
                    s[0],
                    geo.surface_count()
                )));
            }
        }
        Ok(())
    }

    /// Normalized upsampling weights, `M x k_interp`.
    pub fn record_weights(&self, g: &mut Graph<T>, bound: &Bound, geo: &Geometry<T>) -> Result<Var> {
        self.check_geometry(geo)?;
        if let Some(id) = self.free_weights {
            return Ok(bound.var(id));
        }
        let mut h = g.constant(geo.pair_coordinates().clone());
        for (l, lin) in self.weight_mlp.iter().enumerate() {
            h = dense(g, bound, lin, h)?;
            if l + 1 < self.weight_mlp.len() {
                h = sine(g, h, self.config.omega0);
            }
        }
        let logits = g.reshape(h, vec![geo.surface_count(), geo.k_interp()])?;
        g.softmax(logits, 1)
    }

    /// Returns the full encoding and the output of each submodule.
    pub fn record_encoding(
        &self,
        g: &mut Graph<T>,
        bound: &Bound,
        geo: &Geometry<T>,
        lr_disp: &[Vec3],
    ) -> Result<(Var, Vec<Var>)> {
        let n = geo.lattice_count();
        if lr_disp.len() != n {
            return Err(Error::shape(format!(
                "{} lattice displacements for {n} lattice vertices",
                lr_disp.len()
            )));
        }
        let inv = 1.0 / self.disp_scale;
        let scaled: Vec<Vec3> = lr_disp.iter().map(|d| [d[0] * inv, d[1] * inv, d[2] * inv]).collect();
        let d = g.constant(Tensor::from_vec3s(&scaled));
        let pe = g.constant(geo.positional().clone());
        let z0 = g.concat(&[d, pe], 1)?;

        let k = self.config.k_graph;
        let slope = T::lit(self.config.leaky_slope);
        let broadcast: Arc<[usize]> = vec![0; n].into();
        let mut layers = Vec::with_capacity(self.encoder.len());
        let mut z = z0;
        for (s, sub) in self.encoder.iter().enumerate() {
            let graph = if s == 0 {
                geo.rest_graph().clone()
            } else {
                feature_knn(g.value(z), k).into()
            };
            let zi = g.gather_rows(z, geo.centers().clone())?;
            let zj = g.gather_rows(z, graph)?;
            let diff = g.sub(zj, zi)?;
            let edges = g.concat(&[zi, diff], 1)?;
            let h = dense(g, bound, &sub.edge, edges)?;
            let h = g.leaky_relu(h, slope);
            let width = g.shape(h)[1];
            let h = g.reshape(h, vec![n, k, width])?;
            let e = g.max(h, 1)?;
            let mut pooled = Vec::with_capacity(2);
            for max in [true, false] {
                let p = if max { g.max(e, 0)? } else { g.mean(e, 0)? };
                let p = g.reshape(p, vec![1, width])?;
                pooled.push(g.gather_rows(p, broadcast.clone())?);
            }
            let cat = g.concat(&[e, pooled[0], pooled[1], z], 1)?;
            let out = dense(g, bound, &sub.fc, cat)?;
            z = g.leaky_relu(out, slope);
            layers.push(z);
        }
        let encoded = if layers.is_empty() {
            z0
        } else {
            let mut parts = vec![z0];
            parts.extend_from_slice(&layers);
            g.concat(&parts, 1)?
        };
        Ok((encoded, layers))
    }

    /// Surface displacements in millimetres, `M x 3`.
    ///
    /// The first reconstructor layer is linear, so it is applied on the
    /// lattice before upsampling; this equals upsampling the encoding first.
    pub fn record_displacement(
        &self,
        g: &mut Graph<T>,
        bound: &Bound,
        geo: &Geometry<T>,
        weights: Var,
        encoded: Var,
    ) -> Result<Var> {
        let mut h = encoded;
        for (l, lin) in self.recon.iter().enumerate() {
            if l == 0 {
                let p = g.matmul(h, bound.var(lin.w))?;
                let p = g.weighted_gather(weights, p, geo.neighbors().clone())?;
                h = g.add_bias(p, bound.var(lin.b))?;
            } else {
                h = dense(g, bound, lin, h)?;
            }
            if l + 1 < self.recon.len() {
                h = sine(g, h, self.config.omega0);
            }
        }
        Ok(g.scale(h, T::lit(self.disp_scale)))
    }

    /// Records the training loss of `frame` with regularization weight `beta`.
    pub fn record_loss(
        &self,
        g: &mut Graph<T>,
        bound: &Bound,
        geo: &Geometry<T>,
        weights: Var,
        frame: &DisplacementFrame,
        beta: f64,
    ) -> Result<(Var, LossParts)> {
        let target = frame
            .hr_disp
            .as_ref()
            .ok_or_else(|| Error::Missing(format!("surface targets for frame {}", frame.frame_id)))?;
        if target.len() != geo.surface_count() {
            return Err(Error::shape(format!(
                "{} surface targets for {} surface vertices",
                target.len(),
                geo.surface_count()
            )));
        }
        let (encoded, layers) = self.record_encoding(g, bound, geo, &frame.lr_disp)?;
        let pred = self.record_displacement(g, bound, geo, weights, encoded)?;
        let tgt = g.constant(Tensor::from_vec3s(target));
        let recon = g.l1_distance(pred, tgt)?;

        let rest = g.constant(Tensor::from_vec3s(geo.surface_rest()));
        let pos = g.add(pred, rest)?;
        let (normal, skipped) = self.record_normal_term(g, geo, pos, target)?;

        let mut reg = g.constant(Tensor::scalar(T::zero()));
        for &z in &layers {
            let n = g.l2_norm(z)?;
            let s = g.sum_all(n);
            reg = g.add(reg, s)?;
        }

        let a = g.scale(normal, T::lit(self.config.alpha));
        let b = g.scale(reg, T::lit(beta));
        let total = g.add(recon, a)?;
        let total = g.add(total, b)?;
        let v = |g: &Graph<T>, x: Var| g.value(x).item().as_f64();
        let parts = LossParts {
            total: v(g, total),
            recon: v(g, recon),
            normal: v(g, normal),
            reg: v(g, reg),
            skipped_faces: skipped,
        };
        Ok((total, parts))
    }

    fn record_normal_term(
        &self,
        g: &mut Graph<T>,
        geo: &Geometry<T>,
        pos: Var,
        target: &[Vec3],
    ) -> Result<(Var, usize)> {
        let rest = geo.surface_rest();
        let p = g.value(pos).data();
        let at = |i: usize| -> Vec3 { [p[3 * i].as_f64(), p[3 * i + 1].as_f64(), p[3 * i + 2].as_f64()] };
        let (mut ia, mut ib, mut ic) = (Vec::new(), Vec::new(), Vec::new());
        let mut normals = Vec::new();
        let mut skipped = 0;
        for &[a, b, c] in geo.triangles() {
            let pn = cross(sub(at(b), at(a)), sub(at(c), at(a)));
            let ta = add(rest[a], target[a]);
            let tn = cross(sub(add(rest[b], target[b]), ta), sub(add(rest[c], target[c]), ta));
            if 0.5 * norm(pn) < MIN_TRIANGLE_AREA || 0.5 * norm(tn) < MIN_TRIANGLE_AREA {
                skipped += 1;
                continue;
            }
            ia.push(a);
            ib.push(b);
            ic.push(c);
            normals.push(tn);
        }
        if normals.is_empty() {
            return Ok((g.constant(Tensor::scalar(T::zero())), skipped));
        }
        let count = normals.len();
        let a = g.gather_rows(pos, ia.into())?;
        let b = g.gather_rows(pos, ib.into())?;
        let c = g.gather_rows(pos, ic.into())?;
        let e1 = g.sub(b, a)?;
        let e2 = g.sub(c, a)?;
        let n = g.cross(e1, e2)?;
        let t = g.constant(Tensor::from_vec3s(&normals));
        let cos = g.cosine_similarity(n, t)?;
        let s = g.sum_all(cos);
        let s = g.scale(s, -T::one());
        Ok((g.add_scalar(s, T::lit(count as f64)), skipped))
    }

    /// Upsampling weights for `geo`, `M x k_interp`.
    pub fn interpolation_weights(&self, geo: &Geometry<T>) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let bound = self.bind(&mut g, false);
        let w = self.record_weights(&mut g, &bound, geo)?;
        Ok(g.value(w).clone())
    }

    pub fn feature_encode(&self, geo: &Geometry<T>, lr_disp: &[Vec3]) -> Result<EncodedFeatures<T>> {
        let mut g = Graph::new();
        let bound = self.bind(&mut g, false);
        let (encoded, layers) = self.record_encoding(&mut g, &bound, geo, lr_disp)?;
        let width = self.config.input_width();
        let input = g.slice(encoded, 1, 0, width)?;
        Ok(EncodedFeatures {
            input: g.value(input).clone(),
            layers: layers.iter().map(|&z| g.value(z).clone()).collect(),
            encoded: g.value(encoded).clone(),
        })
    }

    /// Interpolates lattice encodings onto the surface, `M x width`.
    pub fn upsample(&self, geo: &Geometry<T>, encoded: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let bound = self.bind(&mut g, false);
        let w = self.record_weights(&mut g, &bound, geo)?;
        let z = g.constant(encoded.clone());
        let up = g.weighted_gather(w, z, geo.neighbors().clone())?;
        Ok(g.value(up).clone())
    }

    /// Displacements in millimetres from surface encodings, `M x 3`.
    pub fn reconstruct(&self, surface_features: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let bound = self.bind(&mut g, false);
        let mut h = g.constant(surface_features.clone());
        for (l, lin) in self.recon.iter().enumerate() {
            h = dense(&mut g, &bound, lin, h)?;
            if l + 1 < self.recon.len() {
                h = sine(&mut g, h, self.config.omega0);
            }
        }
        let out = g.scale(h, T::lit(self.disp_scale));
        Ok(g.value(out).clone())
    }

    /// Surface displacements with precomputed upsampling weights.
    pub fn predict_with(&self, geo: &Geometry<T>, weights: &Tensor<T>, lr_disp: &[Vec3]) -> Result<Vec<Vec3>> {
        let mut g = Graph::new();
        let bound = self.bind(&mut g, false);
        let w = g.constant(weights.clone());
        let (encoded, _) = self.record_encoding(&mut g, &bound, geo, lr_disp)?;
        let d = self.record_displacement(&mut g, &bound, geo, w, encoded)?;
        g.value(d).to_vec3s()
    }

    /// Surface displacements in millimetres for one lattice frame.
    pub fn predict(&self, geo: &Geometry<T>, lr_disp: &[Vec3]) -> Result<Vec<Vec3>> {
        let mut g = Graph::new();
        let bound = self.bind(&mut g, false);
        let w = self.record_weights(&mut g, &bound, geo)?;
        let (encoded, _) = self.record_encoding(&mut g, &bound, geo, lr_disp)?;
        let d = self.record_displacement(&mut g, &bound, geo, w, encoded)?;
        g.value(d).to_vec3s()
    }

    /// Deformed surface positions for one lattice frame.
    pub fn infer(&self, geo: &Geometry<T>, lr_disp: &[Vec3]) -> Result<Vec<Vec3>> {
        let d = self.predict(geo, lr_disp)?;
        Ok(geo.surface_rest().iter().zip(&d).map(|(&r, &v)| add(r, v)).collect())
    }

    pub fn loss(&self, geo: &Geometry<T>, frame: &DisplacementFrame, beta: f64) -> Result<LossParts> {
        let mut g = Graph::new();
        let bound = self.bind(&mut g, false);
        let w = self.record_weights(&mut g, &bound, geo)?;
        Ok(self.record_loss(&mut g, &bound, geo, w, frame, beta)?.1)
    }

    /// Parameters plus the displacement scale, ready for a checkpoint.
    pub fn to_store(&self) -> ParamStore<T> {
        let mut s = self.params.clone();
        s.add(SCALE_NAME, Tensor::scalar(T::lit(self.disp_scale)));
        s
    }

    /// Rebuilds a model from checkpoint tensors, checking every name and shape.
    pub fn from_store(config: ModelConfig, surface_count: usize, store: &ParamStore<T>) -> Result<Self> {
        let scale = store
            .find(SCALE_NAME)
            .ok_or_else(|| Error::Missing(SCALE_NAME.into()))?;
        let mut model = Model::new(config, surface_count, store.get(scale).item().as_f64())?;
        if store.len() != model.params.len() + 1 {
            return Err(Error::Format(format!(
                "checkpoint has {} tensors, model expects {}",
                store.len(),
                model.params.len() + 1
            )));
        }
        for id in model.params.ids().collect::<Vec<_>>() {
            let name = model.params.name(id).to_owned();
            let src = store.find(&name).ok_or_else(|| Error::Missing(name.clone()))?;
            let src = store.get(src);
            if src.shape() != model.params.get(id).shape() {
                return Err(Error::shape(format!(
                    "{name}: checkpoint {:?}, model {:?}",
                    src.shape(),
                    model.params.get(id).shape()
                )));
            }
            *model.params.get_mut(id) = src.clone();
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        save_checkpoint(&self.to_store(), path)
    }

    pub fn load(config: ModelConfig, surface_count: usize, path: impl AsRef<Path>) -> Result<Self> {
        Self::from_store(config, surface_count, &load_checkpoint(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn feature_neighbours_skip_self_and_break_ties_low() {
        let z = Tensor::<f64>::new(vec![4, 1], vec![0.0, 1.0, -1.0, 3.0]).unwrap();
        assert_eq!(feature_knn(&z, 2), vec![1, 2, 0, 2, 0, 1, 1, 0]);
    }
}
