use super::{Graph, Result, Tensor, TensorError, Var};
use crate::exec;

pub const DEFAULT_EPS: f64 = 1e-5;

/// Relative discrepancy used by every gradient check in the crate.
pub fn relative_error(fd: f64, ad: f64) -> f64 {
    (fd - ad).abs() / (fd.abs() + ad.abs() + 1e-12)
}

/// Compares the tape gradient of a scalar function against central
/// differences and returns the worst per-coordinate relative error.
///
/// `f` receives a fresh graph and the leaf holding `x`; it must return a
/// scalar node.
pub fn grad_check<F>(f: F, x: &Tensor, eps: f64) -> Result<f64>
where
    F: Fn(&mut Graph, Var) -> Result<Var> + Sync + Send,
{
    if eps <= 0.0 {
        return Err(TensorError::Contract(format!(
            "eps must be positive, got {eps}"
        )));
    }
    let mut g = Graph::new();
    let leaf = g.param(x.detached());
    let root = f(&mut g, leaf)?;
    g.backward(root)?;
    let ad = g
        .grad(leaf)
        .map(<[f64]>::to_vec)
        .unwrap_or_else(|| vec![0.0; x.numel()]);

    let eval = |t: Tensor| -> Result<f64> {
        let mut g = Graph::new();
        let leaf = g.constant(t);
        let root = f(&mut g, leaf)?;
        Ok(g.value(root).item())
    };
    let errors = exec::map_indices(x.numel(), |i| -> Result<f64> {
        let mut plus = x.detached();
        plus.data_mut()[i] += eps;
        let mut minus = x.detached();
        minus.data_mut()[i] -= eps;
        let fd = (eval(plus)? - eval(minus)?) / (2.0 * eps);
        Ok(relative_error(fd, ad[i]))
    });
    errors
        .into_iter()
        .try_fold(0.0f64, |worst, e| Ok(worst.max(e?)))
}
