use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Orthonormal linear embedding: `components * (x - mean)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingBasis {
    pub mean: Vec<f64>,
    /// `d` rows of length `D`, mutually orthonormal.
    pub components: Vec<Vec<f64>>,
    /// Sample variance captured by each component, nonincreasing.
    pub variances: Vec<f64>,
}

impl EmbeddingBasis {
    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn embed(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.mean.len() {
            return Err(Error::dims(format!("basis expects {} inputs, got {}", self.mean.len(), x.len())));
        }
        let centered: Vec<f64> = x.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        Ok(self.components.iter().map(|c| dot(c, &centered)).collect())
    }

    pub fn reconstruct(&self, code: &[f64]) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (c, &w) in self.components.iter().zip(code) {
            for (o, v) in out.iter_mut().zip(c) {
                *o += w * v;
            }
        }
        out
    }

    /// A basis with no relation to any data: random orthonormal rows and zero mean.
    pub fn random(input_dim: usize, d: usize, seed: u64) -> Result<Self> {
        if d == 0 || d > input_dim {
            return Err(Error::invalid(format!("cannot draw {d} orthonormal rows in {input_dim} dimensions")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw: Vec<Vec<f64>> =
            (0..d).map(|_| (0..input_dim).map(|_| StandardNormal.sample(&mut rng)).collect()).collect();
        Ok(EmbeddingBasis { mean: vec![0.0; input_dim], components: orthonormalize(raw), variances: vec![0.0; d] })
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Principal components of `samples`, largest variance first.
///
/// Each component's largest-magnitude entry is made positive. When fewer than
/// `d` directions carry variance, the remainder is completed to an
/// orthonormal set from the standard basis.
pub fn pca_fit(samples: &[&[f64]], d: usize) -> Result<EmbeddingBasis> {
    let n = samples.len();
    let dim = samples.first().map_or(0, |s| s.len());
    if d == 0 {
        return Err(Error::invalid("embedding dimension must be positive"));
    }
    if d > n || d > dim {
        return Err(Error::invalid(format!("cannot fit {d} components from {n} samples of dimension {dim}")));
    }
    if samples.iter().any(|s| s.len() != dim) {
        return Err(Error::dims("samples differ in dimensionality"));
    }

    let mut mean = vec![0.0; dim];
    for s in samples {
        for (m, v) in mean.iter_mut().zip(s.iter()) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    // rows are samples
    let centered = DMatrix::from_fn(n, dim, |i, j| samples[i][j] - mean[j]);
    let denom = (n.max(2) - 1) as f64;

    let mut pairs: Vec<(f64, Vec<f64>)> = if n <= dim {
        let gram = &centered * centered.transpose();
        let eig = SymmetricEigen::new(gram);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        order
            .into_iter()
            .take(d)
            .map(|i| {
                let v = eig.eigenvectors.column(i);
                let comp = centered.transpose() * v;
                (eig.eigenvalues[i].max(0.0), comp.iter().copied().collect())
            })
            .collect()
    } else {
        let cov = centered.transpose() * &centered;
        let eig = SymmetricEigen::new(cov);
        (0..dim)
            .map(|i| (eig.eigenvalues[i].max(0.0), eig.eigenvectors.column(i).iter().copied().collect()))
            .collect()
    };
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    pairs.truncate(d);

    let scale = pairs.first().map_or(0.0, |p| p.0);
    let (variances, raw): (Vec<f64>, Vec<Vec<f64>>) = pairs
        .into_iter()
        .map(|(lambda, v)| {
            // directions without variance are numerically meaningless; let the completion pick them
            if lambda <= scale * 1e-12 || lambda == 0.0 {
                (0.0, vec![0.0; dim])
            } else {
                (lambda / denom, v)
            }
        })
        .unzip();
    let components = orthonormalize(raw).into_iter().map(fix_sign).collect();
    Ok(EmbeddingBasis { mean, components, variances })
}

/// Modified Gram-Schmidt in order. Rows that vanish are replaced with the
/// next standard basis vector that is not already spanned.
fn orthonormalize(rows: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let dim = rows.first().map_or(0, Vec::len);
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(rows.len());
    let mut next_axis = 0;
    for row in rows {
        let mut v = row;
        let norm0 = dot(&v, &v).sqrt();
        let mut ok = false;
        if norm0 > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm0);
            for _ in 0..2 {
                for q in &out {
                    let p = dot(&v, q);
                    v.iter_mut().zip(q).for_each(|(x, y)| *x -= p * y);
                }
            }
            let norm = dot(&v, &v).sqrt();
            if norm > 1e-6 {
                v.iter_mut().for_each(|x| *x /= norm);
                ok = true;
            }
        }
        while !ok && next_axis < dim {
            v = vec![0.0; dim];
            v[next_axis] = 1.0;
            next_axis += 1;
            for _ in 0..2 {
                for q in &out {
                    let p = dot(&v, q);
                    v.iter_mut().zip(q).for_each(|(x, y)| *x -= p * y);
                }
            }
            let norm = dot(&v, &v).sqrt();
            if norm > 0.5 {
                v.iter_mut().for_each(|x| *x /= norm);
                ok = true;
            }
        }
        out.push(v);
    }
    out
}

fn fix_sign(mut v: Vec<f64>) -> Vec<f64> {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn refs(v: &[Vec<f64>]) -> Vec<&[f64]> {
        v.iter().map(Vec::as_slice).collect()
    }

    fn assert_orthonormal(b: &EmbeddingBasis) {
        for (i, a) in b.components.iter().enumerate() {
            for (j, c) in b.components.iter().enumerate() {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dot(a, c) - want).abs() < 1e-8, "rows {i},{j}");
            }
        }
    }

    #[test]
    fn line_data_yields_the_line_direction() {
        let pts: Vec<Vec<f64>> = (0..10).map(|i| vec![1.0 + 3.0 * i as f64, 2.0 + 4.0 * i as f64]).collect();
        let b = pca_fit(&refs(&pts), 1).unwrap();
        assert!((b.components[0][0] - 0.6).abs() < 1e-10);
        assert!((b.components[0][1] - 0.8).abs() < 1e-10);
    }

    #[test]
    fn full_basis_reconstructs_training_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for (n, dim) in [(6, 20), (20, 6)] {
            let pts: Vec<Vec<f64>> = (0..n).map(|_| (0..dim).map(|_| rng.random::<f64>()).collect()).collect();
            let b = pca_fit(&refs(&pts), n.min(dim)).unwrap();
            assert_orthonormal(&b);
            for p in &pts {
                let back = b.reconstruct(&b.embed(p).unwrap());
                for (x, y) in p.iter().zip(back) {
                    assert!((x - y).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn matches_dense_covariance_eigendecomposition() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pts: Vec<Vec<f64>> = (0..20)
            .map(|_| {
                let z: f64 = rng.random_range(-1.0..1.0);
                (0..20).map(|j| z * (j as f64 * 0.3).sin() * 3.0 + rng.random_range(-0.5..0.5) * (1.0 + j as f64 / 10.0)).collect()
            })
            .collect();
        let b = pca_fit(&refs(&pts), 5).unwrap();
        for w in b.variances.windows(2) {
            assert!(w[0] >= w[1]);
        }
        // oracle: eigenvalues of the sample covariance computed directly
        let n = pts.len() as f64;
        let mean: Vec<f64> = (0..20).map(|j| pts.iter().map(|p| p[j]).sum::<f64>() / n).collect();
        let cov = DMatrix::from_fn(20, 20, |a, c| pts.iter().map(|p| (p[a] - mean[a]) * (p[c] - mean[c])).sum::<f64>() / (n - 1.0));
        let mut eig: Vec<f64> = SymmetricEigen::new(cov.clone()).eigenvalues.iter().copied().collect();
        eig.sort_by(|a, b| b.total_cmp(a));
        for i in 0..5 {
            assert!((eig[i] - b.variances[i]).abs() < 1e-8 * eig[0]);
            // Rayleigh quotient of each component equals its eigenvalue
            let v = nalgebra::DVector::from_vec(b.components[i].clone());
            assert!(((v.transpose() * &cov * &v)[0] - eig[i]).abs() < 1e-8 * eig[0]);
        }
    }

    #[test]
    fn embedding_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<Vec<f64>> = (0..12).map(|_| (0..8).map(|_| rng.random::<f64>()).collect()).collect();
        let b = pca_fit(&refs(&pts), 4).unwrap();
        assert!(b.embed(&b.mean).unwrap().iter().all(|v| v.abs() < 1e-12));
        let shifted: Vec<f64> = b.mean.iter().zip(&b.components[0]).map(|(m, c)| m + c).collect();
        let e = b.embed(&shifted).unwrap();
        assert!((e[0] - 1.0).abs() < 1e-12 && e[1..].iter().all(|v| v.abs() < 1e-12));

        let (x, y) = (&pts[0], &pts[1]);
        let (a, c) = (0.7, -1.3);
        let combo: Vec<f64> = (0..8).map(|j| a * x[j] + c * y[j] - (a + c - 1.0) * b.mean[j]).collect();
        let (ex, ey, ez) = (b.embed(x).unwrap(), b.embed(y).unwrap(), b.embed(&combo).unwrap());
        for j in 0..4 {
            assert!((ez[j] - (a * ex[j] + c * ey[j])).abs() < 1e-8);
        }
        assert!(b.embed(&[0.0; 3]).is_err());
    }

    #[test]
    fn dimension_errors_and_sign_convention() {
        let pts = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        assert!(pca_fit(&refs(&pts), 3).is_err());
        assert!(pca_fit(&refs(&pts), 0).is_err());
        let b = pca_fit(&refs(&pts), 2).unwrap();
        assert_orthonormal(&b);
        for c in &b.components {
            let big = c.iter().copied().fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
            assert!(big > 0.0);
        }
    }

    #[test]
    fn random_basis_is_orthonormal() {
        let b = EmbeddingBasis::random(30, 10, 4).unwrap();
        assert_orthonormal(&b);
        assert!(EmbeddingBasis::random(3, 4, 0).is_err());
    }
}
