//! Dense helpers shared by the ridge and PCA code.

use nalgebra::{DMatrix, DVector};

/// Singular values below `RANK_TOL * s_max` are treated as zero.
const RANK_TOL: f64 = 1e-7;

/// Thin SVD `m = U diag(s) Vᵀ` restricted to the numerical rank, `s` descending.
///
/// Computed from the symmetric eigendecomposition of the smaller Gram matrix.
/// nalgebra's bidiagonal SVD occasionally returns factors that do not
/// reconstruct rank-deficient inputs (centred data is always rank-deficient
/// when `n <= d`), while its symmetric eigensolver is reliable there.
pub(crate) fn thin_svd(m: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>, DMatrix<f64>) {
    let (n, d) = m.shape();
    let tall = n >= d;
    let gram = if tall { m.transpose() * m } else { m * m.transpose() };
    let eig = gram.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let s_max = order.first().map_or(0.0, |&i| eig.eigenvalues[i].max(0.0).sqrt());
    let kept: Vec<usize> =
        order.into_iter().filter(|&i| s_max > 0.0 && eig.eigenvalues[i].max(0.0).sqrt() > RANK_TOL * s_max).collect();
    let s: Vec<f64> = kept.iter().map(|&i| eig.eigenvalues[i].sqrt()).collect();
    let basis = DMatrix::from_fn(eig.eigenvectors.nrows(), kept.len(), |r, c| eig.eigenvectors[(r, kept[c])]);
    // the other side's vectors follow from m v = s u (or mᵀ u = s v)
    let mut other = if tall { m * &basis } else { m.transpose() * &basis };
    for (mut col, &sv) in other.column_iter_mut().zip(&s) {
        col /= sv;
    }
    if tall {
        (other, s, basis)
    } else {
        (basis, s, other)
    }
}

/// Subtracts the column means; returns the centred matrix and the means.
pub(crate) fn center(m: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let mean = m.row_mean().transpose();
    let mut c = m.clone();
    for mut row in c.row_iter_mut() {
        row -= mean.transpose();
    }
    (c, mean)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::StreamRng;

    #[test]
    fn reconstructs_rank_deficient_inputs() {
        for seed in 0..300u64 {
            let mut r = StreamRng::new(seed);
            let (n, d) = (3 + (seed % 10) as usize, 2 + (seed % 23) as usize);
            let (xc, _) = center(&DMatrix::from_fn(n, d, |_, _| r.normal()));
            for m in [xc.clone(), xc.transpose()] {
                let (u, s, v) = thin_svd(&m);
                assert!(s.len() <= n.min(d).min(n - 1).max(1));
                assert!(s.windows(2).all(|w| w[0] >= w[1]));
                let rec = &u * DMatrix::from_diagonal(&DVector::from_vec(s.clone())) * v.transpose();
                assert!((rec - &m).abs().max() < 1e-10, "seed {seed}");
                let k = s.len();
                assert!((u.transpose() * &u - DMatrix::identity(k, k)).abs().max() < 1e-10);
                assert!((v.transpose() * &v - DMatrix::identity(k, k)).abs().max() < 1e-10);
            }
        }
    }

    #[test]
    fn zero_matrix_has_empty_rank() {
        let (u, s, v) = thin_svd(&DMatrix::zeros(4, 3));
        assert!(s.is_empty());
        assert_eq!((u.ncols(), v.ncols()), (0, 0));
    }
}
