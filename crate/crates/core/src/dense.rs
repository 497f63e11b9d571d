//! Dense symmetric eigen-decomposition.

use faer::dyn_stack::{GlobalPodBuffer, PodStack};
use faer::linalg::evd::tridiag_real_evd::{compute_tridiag_real_evd, compute_tridiag_real_evd_req};
use faer::{Mat, Parallelism, Side};

/// Eigenvalues in ascending order with orthonormal eigenvectors as columns.
pub struct SymmetricEigen {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Mat<f64>,
}

pub fn symmetric_eigen(m: &Mat<f64>) -> SymmetricEigen {
    let evd = m.selfadjoint_eigendecomposition(Side::Lower);
    let s = evd.s().column_vector();
    SymmetricEigen { eigenvalues: (0..s.nrows()).map(|k| s.read(k)).collect(), eigenvectors: evd.u().to_owned() }
}

/// Eigen-decomposition of the symmetric tridiagonal matrix with diagonal
/// `diag` and sub-diagonal `offdiag` (one entry shorter), single-threaded.
pub fn tridiagonal_eigen(diag: &[f64], offdiag: &[f64]) -> SymmetricEigen {
    let n = diag.len();
    assert_eq!(offdiag.len(), n.saturating_sub(1), "sub-diagonal length");
    let mut eigenvalues = diag.to_vec();
    let mut e = offdiag.to_vec();
    let mut eigenvectors = Mat::<f64>::zeros(n, n);
    if n == 0 {
        return SymmetricEigen { eigenvalues, eigenvectors };
    }
    let req = compute_tridiag_real_evd_req::<f64>(n, Parallelism::None).expect("workspace size");
    let mut mem = GlobalPodBuffer::new(req);
    compute_tridiag_real_evd(
        &mut eigenvalues,
        &mut e,
        eigenvectors.as_mut(),
        f64::EPSILON,
        f64::MIN_POSITIVE,
        Parallelism::None,
        PodStack::new(&mut mem),
    );
    SymmetricEigen { eigenvalues, eigenvectors }
}
