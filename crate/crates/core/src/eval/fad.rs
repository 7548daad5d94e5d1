use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use ndarray::{concatenate, Array2, Axis};

use crate::error::{Error, Result};
use crate::formats::read_srnf;

fn moments(x: &Array2<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let (n, d) = x.dim();
    let m = DMatrix::from_row_iterator(n, d, x.iter().copied());
    let mean = m.row_mean().transpose();
    let centered = DMatrix::from_fn(n, d, |i, j| m[(i, j)] - mean[j]);
    let cov = centered.transpose() * &centered / (n as f64 - 1.0);
    (mean, cov)
}

fn sqrt_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let d = DVector::from_iterator(eig.eigenvalues.len(), eig.eigenvalues.iter().map(|&l| l.max(0.0).sqrt()));
    &eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.transpose()
}

/// Frechet distance between Gaussians fitted to two embedding sets
/// (rows are embedding vectors).
pub fn frechet_distance(a: &Array2<f64>, b: &Array2<f64>) -> Result<f64> {
    if a.ncols() != b.ncols() {
        return Err(Error::ShapeMismatch { expected: format!("{} columns", a.ncols()), got: format!("{} columns", b.ncols()) });
    }
    if a.nrows() < 2 || b.nrows() < 2 {
        return Err(Error::invalid("frechet_distance needs at least two embeddings per set"));
    }
    if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(0));
    }
    let (ma, ca) = moments(a);
    let (mb, cb) = moments(b);
    let sa = sqrt_psd(&ca);
    let inner = &sa * &cb * &sa;
    let inner = (&inner + inner.transpose()) * 0.5;
    let cross: f64 = SymmetricEigen::new(inner).eigenvalues.iter().map(|&l| l.max(0.0).sqrt()).sum();
    let d = (ma - mb).norm_squared() + ca.trace() + cb.trace() - 2.0 * cross;
    Ok(d.max(0.0))
}

/// Stacks the per-clip embedding files `<dir>/<id>.srnf` produced by an
/// external embedding model.
pub fn load_embeddings(dir: &Path, ids: &[String]) -> Result<Array2<f64>> {
    let mats = ids.iter().map(|id| read_srnf(&dir.join(format!("{id}.srnf")))).collect::<Result<Vec<_>>>()?;
    if mats.is_empty() {
        return Err(Error::invalid("no embedding ids given"));
    }
    let views: Vec<_> = mats.iter().map(|m| m.view()).collect();
    concatenate(Axis(0), &views).map_err(|_| Error::format(dir, "embedding files differ in width"))
}

/// Frechet audio distance between the embeddings of two clip sets.
pub fn embedding_fad(dir: &Path, converted: &[String], reference: &[String]) -> Result<f64> {
    frechet_distance(&load_embeddings(dir, converted)?, &load_embeddings(dir, reference)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn gaussian(n: usize, d: usize, mean: f64, sd: f64, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = Normal::new(mean, sd).unwrap();
        Array2::from_shape_simple_fn((n, d), || g.sample(&mut rng))
    }

    #[test]
    fn identical_sets_are_zero() {
        let a = gaussian(50, 4, 0.0, 1.0, 1);
        assert!(frechet_distance(&a, &a).unwrap() < 1e-9);
    }

    #[test]
    fn matches_closed_form_for_isotropic_gaussians() {
        // N(0, I) vs N(2, 4I) in d dims: 4d + d + 4d - 2*2d = 5d
        let a = gaussian(20_000, 3, 0.0, 1.0, 2);
        let b = gaussian(20_000, 3, 2.0, 2.0, 3);
        let d = frechet_distance(&a, &b).unwrap();
        assert!((d - 15.0).abs() < 0.5, "{d}");
    }

    #[test]
    fn reads_embedding_files() {
        let dir = tempfile::tempdir().unwrap();
        let a = gaussian(10, 3, 0.0, 1.0, 4);
        let b = gaussian(10, 3, 1.0, 1.0, 5);
        crate::formats::write_srnf(&dir.path().join("x.srnf"), &a).unwrap();
        crate::formats::write_srnf(&dir.path().join("y.srnf"), &b).unwrap();
        let d = embedding_fad(dir.path(), &["x".into()], &["y".into()]).unwrap();
        let direct = frechet_distance(&crate::formats::round_f32(&a), &crate::formats::round_f32(&b)).unwrap();
        assert!((d - direct).abs() < 1e-9);
        assert!(matches!(embedding_fad(dir.path(), &["z".into()], &["y".into()]), Err(Error::MissingFile(_)) | Err(Error::Io(_))));
    }
}
