use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Eigenvalues below this fraction of the largest count as zero variance.
const DEGENERATE_REL: f64 = 1e-12;

/// `height × width` pixels, three channels in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<[f64; 3]>,
}

impl RgbImage {
    pub fn channel(&self, c: usize) -> Vec<f64> {
        self.pixels.iter().map(|p| p[c]).collect()
    }
}

/// Orientation rule for a principal axis: non-negative third moment of the
/// projections; when that is zero, the largest-magnitude loading is made
/// positive.
fn orient(axis: &mut [f64], proj: &mut [f64]) {
    let skew: f64 = proj.iter().map(|p| p * p * p).sum();
    let scale = proj
        .iter()
        .map(|p| p.abs())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let flip = if skew.abs() > 1e-12 * scale.powi(3) * proj.len() as f64 {
        skew < 0.0
    } else {
        let lead = axis
            .iter()
            .copied()
            .fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
        lead < 0.0
    };
    if flip {
        axis.iter_mut().for_each(|v| *v = -*v);
        proj.iter_mut().for_each(|v| *v = -*v);
    }
}

/// Projections of the centred rows of `x` onto its top three principal axes,
/// oriented by [`orient`]. Axes beyond the rank of the data come back as
/// `None`.
pub fn principal_projections(x: &Tensor) -> Result<Vec<Option<Vec<f64>>>> {
    let (p, d) = (x.rows(), x.cols());
    if p < 3 {
        return Err(Error::Contract(format!(
            "PCA needs at least 3 rows, got {p}"
        )));
    }
    let mut means = vec![0.0; d];
    for r in 0..p {
        for (m, v) in means.iter_mut().zip(x.row(r)) {
            *m += v;
        }
    }
    means.iter_mut().for_each(|m| *m /= p as f64);
    let centred = DMatrix::from_fn(p, d, |r, c| x.at(r, c) - means[c]);
    let cov = centred.transpose() * &centred / p as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let top = eig.eigenvalues[order[0]].max(0.0);

    let mut out = Vec::with_capacity(3);
    for k in 0..3 {
        let usable = k < d && top > 0.0 && eig.eigenvalues[order[k]] > DEGENERATE_REL * top;
        if !usable {
            out.push(None);
            continue;
        }
        let mut axis: Vec<f64> = eig.eigenvectors.column(order[k]).iter().copied().collect();
        let mut proj: Vec<f64> = (0..p)
            .map(|r| (0..d).map(|c| centred[(r, c)] * axis[c]).sum())
            .collect();
        orient(&mut axis, &mut proj);
        out.push(Some(proj));
    }
    Ok(out)
}

/// Min-max rescale to `[0, 1]`; constant input maps to 0.5.
pub fn min_max(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi - lo > 0.0) {
        return vec![0.5; values.len()];
    }
    values.iter().map(|v| (v - lo) / (hi - lo)).collect()
}

/// Renders patch features as an RGB map of their first three principal
/// components. Zero-variance components render as a constant 0.5.
pub fn pca_rgb(patch_out: &Tensor, grid: (usize, usize)) -> Result<RgbImage> {
    let (gh, gw) = grid;
    if patch_out.rows() != gh * gw {
        return Err(Error::Contract(format!(
            "{} patch rows do not fill a {gh}×{gw} grid",
            patch_out.rows()
        )));
    }
    let comps = principal_projections(patch_out)?;
    let channels: Vec<Vec<f64>> = comps
        .iter()
        .map(|c| match c {
            Some(proj) => min_max(proj),
            None => vec![0.5; gh * gw],
        })
        .collect();
    let pixels = (0..gh * gw)
        .map(|i| [channels[0][i], channels[1][i], channels[2][i]])
        .collect();
    Ok(RgbImage {
        height: gh,
        width: gw,
        pixels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_axis_variance() {
        let x = Tensor::from_rows(&[&[1.0, 0.0], &[-1.0, 0.0], &[0.0, 0.0]]).unwrap();
        let img = pca_rgb(&x, (3, 1)).unwrap();
        let r = img.channel(0);
        assert!((r[0] - 1.0).abs() < 1e-12);
        assert!(r[1].abs() < 1e-12);
        assert!((r[2] - 0.5).abs() < 1e-12);
        assert_eq!(img.channel(1), vec![0.5; 3]);
        assert_eq!(img.channel(2), vec![0.5; 3]);
    }

    #[test]
    fn constant_points_render_grey() {
        let x = Tensor::full([4, 3], 2.5);
        let img = pca_rgb(&x, (2, 2)).unwrap();
        assert!(img.pixels.iter().all(|p| *p == [0.5, 0.5, 0.5]));
    }

    #[test]
    fn too_few_points() {
        assert!(pca_rgb(&Tensor::zeros([2, 3]), (1, 2)).is_err());
        assert!(pca_rgb(&Tensor::zeros([4, 3]), (3, 1)).is_err());
    }
}
