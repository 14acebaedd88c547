//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use spectok::model::TokenPartition;
use spectok::probes::{ProbePoint, ProbeTrace};
use spectok::Tensor;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    let data = (0..rows * cols)
        .map(|_| StandardNormal.sample(rng))
        .collect();
    Tensor::new([rows, cols], data).unwrap()
}

/// Random traces over `blocks` blocks, every probe point filled.
pub fn random_traces(rng: &mut ChaCha8Rng, n: usize, blocks: usize) -> Vec<ProbeTrace> {
    let registers = rng.random_range(0..3);
    let patches = rng.random_range(2..12);
    let d = rng.random_range(2..9);
    (0..n)
        .map(|_| {
            let mut t = ProbeTrace::new(TokenPartition::new(registers, patches));
            for b in 0..blocks {
                for p in ProbePoint::ALL {
                    t.push(b, p, &gaussian(rng, 1 + registers + patches, d));
                }
            }
            t
        })
        .collect()
}

fn cos(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let n = (a.iter().map(|x| x * x).sum::<f64>() * b.iter().map(|x| x * x).sum::<f64>()).sqrt();
    if n == 0.0 {
        0.0
    } else {
        dot / n
    }
}

fn population_moments(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Brute-force `(cls_patch mean, std, patch_patch mean, std)` over every
/// ordered-free patch pair of the selected blocks.
pub fn brute_cosine_stats(traces: &[ProbeTrace], point: ProbePoint, blocks: &[usize]) -> [f64; 4] {
    let mut cp = Vec::new();
    let mut pp = Vec::new();
    for t in traces {
        let patches: Vec<usize> = t.partition.patch_indices().collect();
        for &b in blocks {
            let a = t.get(b, point).unwrap();
            for &i in &patches {
                cp.push(cos(a.row(0), a.row(i)));
                for &j in &patches {
                    if i < j {
                        pp.push(cos(a.row(i), a.row(j)));
                    }
                }
            }
        }
    }
    let (cm, cs) = population_moments(&cp);
    let (pm, ps) = population_moments(&pp);
    [cm, cs, pm, ps]
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Returns
/// eigenvalues and column eigenvectors, unsorted.
pub fn jacobi_eigen(a: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut a = a.to_vec();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect())
        .collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    let values = (0..n).map(|i| a[i][i]).collect();
    let vectors = (0..n).map(|j| (0..n).map(|i| v[i][j]).collect()).collect();
    (values, vectors)
}

/// Reference PCA rendering: covariance, Jacobi eigenvectors, orientation
/// (positive third moment, else positive dominant loading), min-max.
pub fn pca_oracle(x: &Tensor) -> Vec<[f64; 3]> {
    let (p, d) = (x.rows(), x.cols());
    let means: Vec<f64> = (0..d)
        .map(|c| (0..p).map(|r| x.at(r, c)).sum::<f64>() / p as f64)
        .collect();
    let cen: Vec<Vec<f64>> = (0..p)
        .map(|r| (0..d).map(|c| x.at(r, c) - means[c]).collect())
        .collect();
    let cov: Vec<Vec<f64>> = (0..d)
        .map(|i| {
            (0..d)
                .map(|j| cen.iter().map(|r| r[i] * r[j]).sum::<f64>() / p as f64)
                .collect()
        })
        .collect();
    let (vals, vecs) = jacobi_eigen(&cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| vals[b].partial_cmp(&vals[a]).unwrap());
    let top = vals[order[0]];
    let mut channels = Vec::new();
    for k in 0..3 {
        if k >= d || top <= 0.0 || vals[order[k]] <= 1e-12 * top {
            channels.push(vec![0.5; p]);
            continue;
        }
        let mut axis = vecs[order[k]].clone();
        let mut proj: Vec<f64> = cen
            .iter()
            .map(|r| r.iter().zip(&axis).map(|(a, b)| a * b).sum())
            .collect();
        let skew: f64 = proj.iter().map(|v| v.powi(3)).sum();
        let scale = proj.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let flip = if skew.abs() > 1e-12 * scale.powi(3) * p as f64 {
            skew < 0.0
        } else {
            let lead = axis
                .iter()
                .fold(0.0f64, |m, &v| if v.abs() > m.abs() { v } else { m });
            lead < 0.0
        };
        if flip {
            axis.iter_mut().for_each(|v| *v = -*v);
            proj.iter_mut().for_each(|v| *v = -*v);
        }
        let lo = proj.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = proj.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        channels.push(proj.iter().map(|v| (v - lo) / (hi - lo)).collect());
    }
    (0..p)
        .map(|i| [channels[0][i], channels[1][i], channels[2][i]])
        .collect()
}

/// Patch features with well-separated principal variances.
pub fn pca_instance(rng: &mut ChaCha8Rng) -> (Tensor, (usize, usize)) {
    let (gh, gw) = (rng.random_range(2..6), rng.random_range(2..6));
    let d = rng.random_range(3..8);
    let mut x = gaussian(rng, gh * gw, d);
    let scales: Vec<f64> = (0..d).map(|j| 3.0 / (1.0 + j as f64)).collect();
    for r in 0..gh * gw {
        for (c, s) in scales.iter().enumerate() {
            x.data_mut()[r * d + c] *= s;
        }
    }
    (x, (gh, gw))
}

/// Top-`k` dims by mean absolute value: full sort on (value desc, index asc).
pub fn sorted_top_k(rows: &[&[f64]], k: usize) -> Vec<usize> {
    let d = rows[0].len();
    let mut m: Vec<(usize, f64)> = (0..d)
        .map(|j| {
            (
                j,
                rows.iter().map(|r| r[j].abs()).sum::<f64>() / rows.len() as f64,
            )
        })
        .collect();
    m.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    m.into_iter().take(k).map(|(j, _)| j).collect()
}
