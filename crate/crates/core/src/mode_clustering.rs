//! Grouping of per-mode learned transforms and kernel memory accounting.
//!
//! Memory layout of one 1-D INT-DTT+ kernel, in bits:
//!
//! ```text
//! header   1 (base kind) + 4 (diagonal shift) + 4 (off-diagonal shift)
//!          + ceil(log2(n(n-1) + 1)) (number of stored F entries)
//! diagonal n * bit_depth_d
//! F        nnz * (bit_depth_f + 2 * ceil(log2 n))   (value, row, column)
//! ```
//!
//! A dense fallback kernel stores `n² * bit_depth` bits after the same header.
//! A separable transform needs one kernel per axis.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::graph_model::DttPlusParams;
use crate::integer_kernel::IntegerTransition;
use crate::{Error, Result};

const MAX_KMEANS_ITERS: usize = 300;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeClustering {
    /// Cluster of each input mode.
    pub assignment: Vec<usize>,
    pub centroids: Vec<DttPlusParams>,
    /// Within-cluster sum of squared standardized distances after each iteration.
    pub objective_trace: Vec<f64>,
}

fn features(p: &DttPlusParams) -> [f64; 4] {
    [p.alpha_r, p.beta_r, p.alpha_c, p.beta_c]
}

fn dist2(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// k-means on z-scored `(alpha_r, beta_r, alpha_c, beta_c)` with seeded
/// k-means++ initialization.
///
/// Centroids are mapped back to parameter space; their node indices are the
/// most frequent index among members (smallest on ties).
pub fn cluster_weights(params: &[DttPlusParams], k: usize, seed: u64) -> Result<ModeClustering> {
    let m = params.len();
    if k == 0 || k > m {
        return Err(Error::InvalidParameter(format!("k = {k} must be in 1..={m}")));
    }
    let raw: Vec<[f64; 4]> = params.iter().map(features).collect();
    let mut mean = [0.0; 4];
    let mut std = [0.0; 4];
    for f in &raw {
        for d in 0..4 {
            mean[d] += f[d] / m as f64;
        }
    }
    for f in &raw {
        for d in 0..4 {
            std[d] += (f[d] - mean[d]).powi(2) / m as f64;
        }
    }
    for s in std.iter_mut() {
        *s = s.sqrt();
    }
    let z: Vec<[f64; 4]> = raw
        .iter()
        .map(|f| {
            let mut out = [0.0; 4];
            for d in 0..4 {
                out[d] = if std[d] > 0.0 { (f[d] - mean[d]) / std[d] } else { 0.0 };
            }
            out
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers: Vec<[f64; 4]> = vec![z[rng.random_range(0..m)]];
    while centers.len() < k {
        let d: Vec<f64> = z
            .iter()
            .map(|p| centers.iter().map(|c| dist2(p, c)).fold(f64::INFINITY, f64::min))
            .collect();
        let total: f64 = d.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = m - 1;
            for (i, &w) in d.iter().enumerate() {
                if w > 0.0 && target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            // Guard against rounding landing on an already chosen point.
            if d[chosen] == 0.0 {
                chosen = d.iter().enumerate().rev().find(|(_, w)| **w > 0.0).map(|(i, _)| i).unwrap_or(chosen);
            }
            chosen
        } else {
            rng.random_range(0..m)
        };
        centers.push(z[pick]);
    }

    let mut assignment = vec![usize::MAX; m];
    let mut trace = Vec::new();
    for _ in 0..MAX_KMEANS_ITERS {
        let mut changed = false;
        for (i, p) in z.iter().enumerate() {
            let mut best = 0;
            for c in 1..k {
                if dist2(p, &centers[c]) < dist2(p, &centers[best]) {
                    best = c;
                }
            }
            if assignment[i] != best {
                assignment[i] = best;
                changed = true;
            }
        }
        for (c, center) in centers.iter_mut().enumerate() {
            let members: Vec<&[f64; 4]> = z.iter().zip(&assignment).filter(|(_, &a)| a == c).map(|(p, _)| p).collect();
            if members.is_empty() {
                continue;
            }
            let mut acc = [0.0; 4];
            for p in &members {
                for d in 0..4 {
                    acc[d] += p[d];
                }
            }
            for d in 0..4 {
                center[d] = acc[d] / members.len() as f64;
            }
        }
        trace.push(z.iter().zip(&assignment).map(|(p, &a)| dist2(p, &centers[a])).sum());
        if !changed {
            break;
        }
    }

    let centroids = (0..k)
        .map(|c| {
            let members: Vec<&DttPlusParams> =
                params.iter().zip(&assignment).filter(|(_, &a)| a == c).map(|(p, _)| p).collect();
            let zc = centers[c];
            let mut f = [0.0; 4];
            for d in 0..4 {
                f[d] = if std[d] > 0.0 { zc[d] * std[d] + mean[d] } else { mean[d] };
            }
            DttPlusParams {
                alpha_r: f[0].max(0.0),
                beta_r: f[1],
                i_r: modal(members.iter().map(|p| p.i_r)),
                alpha_c: f[2].max(0.0),
                beta_c: f[3],
                i_c: modal(members.iter().map(|p| p.i_c)),
            }
        })
        .collect();
    Ok(ModeClustering { assignment, centroids, objective_trace: trace })
}

fn modal(values: impl Iterator<Item = usize>) -> usize {
    let mut v: Vec<usize> = values.collect();
    v.sort_unstable();
    let mut best = (0usize, 1usize);
    let mut k = 0;
    while k < v.len() {
        let run = v[k..].iter().take_while(|&&x| x == v[k]).count();
        if run > best.0 {
            best = (run, v[k]);
        }
        k += run;
    }
    best.1
}

/// Baseline grouping of `n_modes` ordered modes into `k` contiguous bins.
pub fn angle_bins(n_modes: usize, k: usize) -> Vec<usize> {
    (0..n_modes).map(|m| m * k / n_modes.max(1)).collect()
}

/// Memory of `kernels` separable sep-KLTs of size `n` at `bit_depth` bits.
pub fn sep_klt_memory_bits(n: usize, bit_depth: usize, kernels: usize) -> usize {
    2 * n * n * bit_depth * kernels
}

fn ceil_log2(v: usize) -> usize {
    if v <= 1 {
        0
    } else {
        (usize::BITS - (v - 1).leading_zeros()) as usize
    }
}

pub fn kernel_header_bits(n: usize) -> usize {
    1 + 4 + 4 + ceil_log2(n * (n - 1) + 1)
}

/// Bits needed to store one 1-D integer transition kernel.
pub fn integer_transition_bits(kernel: &IntegerTransition) -> usize {
    match kernel {
        IntegerTransition::Sparse(k) => {
            kernel_header_bits(k.n)
                + k.n * k.bit_depth_d as usize
                + k.nnz() * (k.bit_depth_f as usize + 2 * ceil_log2(k.n))
        }
        IntegerTransition::DenseFallback { kernel, .. } => {
            kernel_header_bits(kernel.rows) + kernel.rows * kernel.cols * kernel.bit_depth as usize
        }
    }
}

/// Total bits of a set of 1-D INT-DTT+ kernels.
pub fn memory_bits(kernels: &[IntegerTransition]) -> usize {
    kernels.iter().map(integer_transition_bits).sum()
}

/// `mode,cluster` CSV of a grouping.
pub fn grouping_csv(labels: &[String], assignment: &[usize]) -> String {
    let mut out = String::from("mode,cluster\n");
    for (l, a) in labels.iter().zip(assignment) {
        out.push_str(&format!("{l},{a}\n"));
    }
    out
}
