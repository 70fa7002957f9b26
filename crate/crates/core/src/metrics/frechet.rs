use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

pub const FRECHET_EPS: f64 = 1e-6;

fn moments(feats: &[Vec<f64>], dim: usize) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = feats.len();
    if n < dim + 1 {
        return Err(Error::invalid(format!("Fréchet distance needs at least {} samples, got {n}", dim + 1)));
    }
    if feats.iter().any(|f| f.len() != dim) {
        return Err(Error::invalid("Fréchet features must share one dimension"));
    }
    let mut mean = DVector::zeros(dim);
    for f in feats {
        mean += DVector::from_column_slice(f);
    }
    mean /= n as f64;
    let mut cov = DMatrix::zeros(dim, dim);
    for f in feats {
        let d = DVector::from_column_slice(f) - &mean;
        cov += &d * d.transpose();
    }
    cov /= (n - 1) as f64;
    cov += DMatrix::identity(dim, dim) * FRECHET_EPS;
    Ok((mean, cov))
}

/// Symmetric PSD square root through an eigendecomposition; negative round-off eigenvalues clip to 0.
fn sqrt_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let e = SymmetricEigen::new(sym);
    let root = e.eigenvalues.map(|v| v.max(0.0).sqrt());
    &e.eigenvectors * DMatrix::from_diagonal(&root) * e.eigenvectors.transpose()
}

/// `‖μa − μb‖² + tr(Σa + Σb − 2 (Σa Σb)^½)` between Gaussian fits of two feature sets.
///
/// The cross term uses `tr((√Σa Σb √Σa)^½)`, which equals `tr((Σa Σb)^½)` and only
/// needs symmetric square roots.
pub fn frechet_distance(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64> {
    let dim = a.first().map_or(0, |f| f.len());
    if dim == 0 {
        return Err(Error::invalid("Fréchet distance of empty features"));
    }
    let (ma, ca) = moments(a, dim)?;
    let (mb, cb) = moments(b, dim)?;
    let ra = sqrt_psd(&ca);
    let cross = sqrt_psd(&(&ra * &cb * &ra)).trace();
    let d = (ma - mb).norm_squared() + ca.trace() + cb.trace() - 2.0 * cross;
    Ok(d.max(0.0))
}
