//! Bjøntegaard delta rate between two rate/PSNR curves.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const MIN_CURVE_POINTS: usize = 4;

/// Rate in bits per sample and PSNR in dB, sorted by rate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RdCurve {
    points: Vec<(f64, f64)>,
}

impl RdCurve {
    /// Sorts `points` by rate and validates them.
    pub fn new(mut points: Vec<(f64, f64)>) -> Result<Self> {
        if points.len() < MIN_CURVE_POINTS {
            return Err(Error::InsufficientPoints(points.len()));
        }
        if points.iter().any(|&(r, d)| !(r > 0.0 && r.is_finite() && d.is_finite())) {
            return Err(Error::InvalidParameter("rates must be positive and PSNR finite".into()));
        }
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        if points.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::InvalidParameter("rates must be strictly increasing".into()));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    fn psnr_range(&self) -> (f64, f64) {
        let lo = self.points.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        let hi = self.points.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }
}

/// Least-squares cubic `log10(rate) = c0 + c1 t + c2 t² + c3 t³` with
/// `t = (psnr - center) / scale`.
struct Cubic {
    c: [f64; 4],
    center: f64,
    scale: f64,
}

impl Cubic {
    fn fit(curve: &RdCurve, center: f64, scale: f64) -> Result<Self> {
        let pts = curve.points();
        let v = DMatrix::from_fn(pts.len(), 4, |r, k| ((pts[r].1 - center) / scale).powi(k as i32));
        let y = DVector::from_iterator(pts.len(), pts.iter().map(|p| p.0.log10()));
        let sol = v
            .svd(true, true)
            .solve(&y, 1e-12)
            .map_err(|e| Error::Singular(format!("cubic fit: {e}")))?;
        Ok(Self { c: [sol[0], sol[1], sol[2], sol[3]], center, scale })
    }

    /// Integral over psnr in `[a, b]`.
    fn integral(&self, a: f64, b: f64) -> f64 {
        let prim = |x: f64| {
            let t = (x - self.center) / self.scale;
            self.scale * (0..4).map(|k| self.c[k] * t.powi(k as i32 + 1) / (k + 1) as f64).sum::<f64>()
        };
        prim(b) - prim(a)
    }
}

/// Average `log10(rate_b / rate_a)` over the overlapping PSNR range.
pub fn bd_log_delta(curve_a: &RdCurve, curve_b: &RdCurve) -> Result<f64> {
    let (a_lo, a_hi) = curve_a.psnr_range();
    let (b_lo, b_hi) = curve_b.psnr_range();
    let lo = a_lo.max(b_lo);
    let hi = a_hi.min(b_hi);
    if !(hi > lo) {
        return Err(Error::NoOverlap);
    }
    // Shared centering keeps the fit well conditioned and the result symmetric.
    let center = 0.5 * (lo + hi);
    let scale = 0.5 * (hi - lo);
    let fa = Cubic::fit(curve_a, center, scale)?;
    let fb = Cubic::fit(curve_b, center, scale)?;
    Ok((fb.integral(lo, hi) - fa.integral(lo, hi)) / (hi - lo))
}

/// Percent rate change of `curve_b` relative to `curve_a` at equal PSNR.
pub fn bd_rate(curve_a: &RdCurve, curve_b: &RdCurve) -> Result<f64> {
    Ok((10f64.powf(bd_log_delta(curve_a, curve_b)?) - 1.0) * 100.0)
}
