//! Complex matrix aliases and the few dense kernels the pipeline needs on top
//! of nalgebra.

use nalgebra::{Complex, DMatrix, DVector};

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Eigen-decomposition of a Hermitian matrix with eigenvalues sorted in
/// descending order (eigenvectors permuted to match, one per column).
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    pub vectors: CMatrix,
}

pub fn hermitian_eigen(m: &CMatrix) -> HermitianEigen {
    let n = m.nrows();
    let h = hermitian_part(m);
    let eig = h.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = CMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    HermitianEigen { values, vectors }
}

/// `(M + M^H) / 2`.
pub fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()).scale(0.5)
}

/// `V f(Λ) V^H` for a Hermitian eigen-decomposition.
pub fn spectral_function(eig: &HermitianEigen, f: impl Fn(f64) -> f64) -> CMatrix {
    let n = eig.vectors.nrows();
    let mut scaled = eig.vectors.clone();
    for (j, &lambda) in eig.values.iter().enumerate() {
        let s = f(lambda);
        scaled.column_mut(j).scale_mut(s);
    }
    let out = &scaled * eig.vectors.adjoint();
    debug_assert_eq!(out.nrows(), n);
    hermitian_part(&out)
}

/// Subtracts each row's mean across columns.
pub fn center_rows(m: &mut CMatrix) {
    let k = m.ncols();
    if k == 0 {
        return;
    }
    for mut row in m.row_iter_mut() {
        let mean = row.iter().sum::<C64>() / k as f64;
        for v in row.iter_mut() {
            *v -= mean;
        }
    }
}

pub fn frobenius_sq(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum()
}

/// Maximum absolute deviation from Hermitian symmetry.
pub fn hermitian_defect(m: &CMatrix) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigen_sorted_descending_and_reconstructs() {
        let a = CMatrix::from_fn(4, 4, |i, j| C64::new((i + 2 * j) as f64 * 0.3, (i as f64 - j as f64) * 0.1));
        let h = &a * a.adjoint();
        let eig = hermitian_eigen(&h);
        assert!(eig.values.windows(2).all(|w| w[0] >= w[1]));
        let back = spectral_function(&eig, |x| x);
        assert!((back - &h).norm() < 1e-10 * h.norm());
    }

    #[test]
    fn centering_removes_row_means() {
        let mut m = CMatrix::from_fn(3, 5, |i, j| C64::new(i as f64 + j as f64, 1.0));
        center_rows(&mut m);
        for row in m.row_iter() {
            assert!(row.iter().sum::<C64>().norm() < 1e-12);
        }
    }
}
