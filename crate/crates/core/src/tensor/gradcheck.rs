//! Central finite-difference gradient verification in double precision.

use super::{Graph, Tensor, Var};
use crate::{Error, Result};

/// Largest `|analytic - fd| / (|analytic| + 1e-8)` over all coordinates of
/// `point`, where `f` records a scalar function of its input on a fresh graph.
pub fn grad_check<F>(f: F, point: &Tensor<f64>, h: f64) -> Result<f64>
where
    F: Fn(&mut Graph<f64>, Var) -> Result<Var>,
{
    grad_check_inputs(|g, vars| f(g, vars[0]), std::slice::from_ref(point), h)
}

/// [`grad_check`] over several inputs at once.
pub fn grad_check_inputs<F>(f: F, points: &[Tensor<f64>], h: f64) -> Result<f64>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let eval = |pts: &[Tensor<f64>]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = pts.iter().map(|p| g.constant(p.clone())).collect();
        let out = f(&mut g, &vars)?;
        let value = g.value(out);
        if value.len() != 1 {
            return Err(Error::NonScalarLoss(value.shape().to_vec()));
        }
        Ok(value.item())
    };

    let mut g = Graph::new();
    let vars: Vec<Var> = points.iter().map(|p| g.variable(p.clone())).collect();
    let out = f(&mut g, &vars)?;
    let mut grads = g.backward(out)?;

    let mut worst = 0.0f64;
    let mut probe = points.to_vec();
    for (i, v) in vars.iter().enumerate() {
        let analytic = grads
            .take(*v)
            .unwrap_or_else(|| Tensor::zeros(points[i].shape().to_vec()));
        for c in 0..points[i].len() {
            let x = points[i].data()[c];
            probe[i].data_mut()[c] = x + h;
            let up = eval(&probe)?;
            probe[i].data_mut()[c] = x - h;
            let down = eval(&probe)?;
            probe[i].data_mut()[c] = x;
            let fd = (up - down) / (2.0 * h);
            let a = analytic.data()[c];
            worst = worst.max((a - fd).abs() / (a.abs() + 1e-8));
        }
    }
    Ok(worst)
}
