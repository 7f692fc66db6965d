//! Separable KLT baseline and 8-bit quantized dense transforms.

use nalgebra::DMatrix;

use crate::base_transforms::{sorted_symmetric_eigen, IntegerKernel};
use crate::rdot::SeparableTransform;
use crate::{Error, Result};

/// Bit depth of every dense transform kernel used in evaluation.
pub const DENSE_BIT_DEPTH: u32 = 8;

/// Separable transform whose analysis matrices are quantized to `bit_depth`.
pub fn quantized_transform(
    name: impl Into<String>,
    row_analysis: &DMatrix<f64>,
    col_analysis: &DMatrix<f64>,
    bit_depth: u32,
) -> Result<(SeparableTransform, IntegerKernel, IntegerKernel)> {
    let kr = IntegerKernel::quantize(row_analysis, bit_depth)?;
    let kc = IntegerKernel::quantize(col_analysis, bit_depth)?;
    let t = SeparableTransform::new(name, &kr.to_f64(), &kc.to_f64())?;
    Ok((t, kr, kc))
}

/// Row and column KLTs of a set of row-major blocks.
#[derive(Clone, Debug)]
pub struct SepKlt {
    /// Analysis matrix along rows, basis vectors as rows, by decreasing variance.
    pub row_analysis: DMatrix<f64>,
    pub col_analysis: DMatrix<f64>,
    pub row_variances: Vec<f64>,
    pub col_variances: Vec<f64>,
}

impl SepKlt {
    pub fn quantized(&self, name: impl Into<String>) -> Result<SeparableTransform> {
        Ok(quantized_transform(name, &self.row_analysis, &self.col_analysis, DENSE_BIT_DEPTH)?.0)
    }
}

fn descending_analysis(cov: &DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let eig = sorted_symmetric_eigen(cov)?;
    let n = eig.n();
    let analysis = DMatrix::from_fn(n, n, |r, c| eig.basis[(c, n - 1 - r)]);
    let vars = (0..n).rev().map(|k| eig.eigenvalues[k]).collect();
    Ok((analysis, vars))
}

/// Trains row and column KLTs from `X^T X` and `X X^T` averaged over the
/// mean-removed blocks.
pub fn sep_klt_train(blocks: &[Vec<f64>], n: usize) -> Result<SepKlt> {
    if blocks.is_empty() {
        return Err(Error::Empty("no blocks for sep-KLT"));
    }
    if let Some(b) = blocks.iter().find(|b| b.len() != n * n) {
        return Err(Error::DimensionMismatch { expected: n * n, found: b.len() });
    }
    let count = blocks.len() as f64;
    let mut mean = vec![0.0; n * n];
    for b in blocks {
        for (m, v) in mean.iter_mut().zip(b) {
            *m += v / count;
        }
    }
    let mut row_cov = DMatrix::<f64>::zeros(n, n);
    let mut col_cov = DMatrix::<f64>::zeros(n, n);
    for b in blocks {
        let x = DMatrix::from_fn(n, n, |r, c| b[r * n + c] - mean[r * n + c]);
        row_cov += x.transpose() * &x;
        col_cov += &x * x.transpose();
    }
    row_cov /= count;
    col_cov /= count;
    let (row_analysis, row_variances) = descending_analysis(&row_cov)?;
    let (col_analysis, col_variances) = descending_analysis(&col_cov)?;
    Ok(SepKlt { row_analysis, col_analysis, row_variances, col_variances })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_one_blocks_align_with_factors() {
        let u = [1.0, 2.0, -1.0, 0.5];
        let v = [0.3, -1.0, 2.0, 1.0];
        let blocks: Vec<Vec<f64>> = (0..20)
            .map(|k| {
                let s = (k as f64 - 9.5) * 0.7;
                (0..16).map(|p| s * u[p / 4] * v[p % 4]).collect()
            })
            .collect();
        let klt = sep_klt_train(&blocks, 4).unwrap();
        let cos = |a: &[f64], row: &DMatrix<f64>| {
            let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            (0..4).map(|k| a[k] * row[(0, k)]).sum::<f64>().abs() / na
        };
        assert!((cos(&u, &klt.col_analysis) - 1.0).abs() < 1e-9);
        assert!((cos(&v, &klt.row_analysis) - 1.0).abs() < 1e-9);
        assert!(klt.row_variances.windows(2).all(|w| w[0] >= w[1]));
        let t = klt.quantized("klt").unwrap();
        assert!((t.row_analysis() - &klt.row_analysis).amax() < 1.0 / 64.0);
    }
}
