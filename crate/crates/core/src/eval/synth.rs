//! Synthetic intra-like residual blocks.
//!
//! Each axis follows a first-order autoregression started from a predicted
//! boundary:
//!
//! ```text
//! x_0 = d / sqrt(1 - rho²) * e_0
//! x_k = rho * x_{k-1} + e_k
//! ```
//!
//! with unit Gaussian innovations `e`. `d = 1` gives a stationary process and
//! `d < 1` a first sample with lower variance than the rest, as when the
//! boundary prediction is accurate. Blocks are `X = sigma * A_c E A_r^T`
//! rounded to `i16`, where `A` is the lower-triangular filter of the recursion,
//! so the column recursion runs down each column and the row recursion along
//! each row.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::dataset::ResidualDataset;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthModel {
    pub rho_r: f64,
    pub rho_c: f64,
    pub boundary_decay_r: f64,
    pub boundary_decay_c: f64,
    pub sigma: f64,
    pub n: usize,
    pub count: usize,
    pub seed: u64,
}

impl SynthModel {
    pub fn validate(&self) -> Result<()> {
        for (name, rho) in [("rho_r", self.rho_r), ("rho_c", self.rho_c)] {
            if !(rho.abs() < 1.0) {
                return Err(Error::InvalidParameter(format!("{name} must lie in (-1, 1), got {rho}")));
            }
        }
        for (name, d) in [("boundary_decay_r", self.boundary_decay_r), ("boundary_decay_c", self.boundary_decay_c)] {
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be > 0, got {d}")));
            }
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!("sigma must be > 0, got {}", self.sigma)));
        }
        if self.n == 0 || self.n > u16::MAX as usize {
            return Err(Error::InvalidSize(format!("block size {}", self.n)));
        }
        if self.count == 0 {
            return Err(Error::Empty("count must be >= 1"));
        }
        Ok(())
    }
}

/// Lower-triangular filter mapping innovations to one axis of samples.
pub fn ar1_filter(n: usize, rho: f64, boundary_decay: f64) -> DMatrix<f64> {
    let s0 = boundary_decay / (1.0 - rho * rho).sqrt();
    DMatrix::from_fn(n, n, |i, k| {
        if k > i {
            0.0
        } else if k == 0 {
            s0 * rho.powi(i as i32)
        } else {
            rho.powi((i - k) as i32)
        }
    })
}

/// Covariance of one axis of the unscaled field, `A A^T`.
pub fn ar1_covariance(n: usize, rho: f64, boundary_decay: f64) -> DMatrix<f64> {
    let a = ar1_filter(n, rho, boundary_decay);
    &a * a.transpose()
}

fn generate(model: &SynthModel) -> Vec<Vec<i16>> {
    let n = model.n;
    let ar = ar1_filter(n, model.rho_r, model.boundary_decay_r);
    let ac = ar1_filter(n, model.rho_c, model.boundary_decay_c);
    let art = ar.transpose() * model.sigma;
    let mut rng = ChaCha8Rng::seed_from_u64(model.seed);
    (0..model.count)
        .map(|_| {
            let e = DMatrix::from_fn(n, n, |_, _| StandardNormal.sample(&mut rng));
            let x: DMatrix<f64> = &ac * e * &art;
            (0..n * n)
                .map(|k| x[(k / n, k % n)].round().clamp(i16::MIN as f64, i16::MAX as f64) as i16)
                .collect()
        })
        .collect()
}

/// One-mode synthetic dataset labelled `"synth"`.
pub fn synth_residuals(model: &SynthModel) -> Result<ResidualDataset> {
    synth_modes(&[("synth".to_string(), *model)])
}

/// Concatenated dataset with one label per model.
pub fn synth_modes(models: &[(String, SynthModel)]) -> Result<ResidualDataset> {
    let first = models.first().ok_or(Error::Empty("no synthetic modes"))?;
    let n = first.1.n;
    if models.len() > u16::MAX as usize {
        return Err(Error::InvalidParameter("too many modes".into()));
    }
    let mut ds = ResidualDataset {
        n,
        labels: Vec::new(),
        modes: Vec::new(),
        blocks: Vec::new(),
        source: "synthetic-ar1".into(),
    };
    for (m, (label, model)) in models.iter().enumerate() {
        model.validate()?;
        if model.n != n {
            return Err(Error::DimensionMismatch { expected: n, found: model.n });
        }
        ds.labels.push(label.clone());
        let blocks = generate(model);
        ds.modes.extend(std::iter::repeat_n(m as u16, blocks.len()));
        ds.blocks.extend(blocks);
    }
    ds.validate()?;
    Ok(ds)
}
