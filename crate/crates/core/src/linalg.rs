use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Largest eigenvalue of a symmetric matrix and a unit eigenvector for it.
/// The eigenvector's sign is chosen so that its entries sum to a
/// non-negative value.
pub fn principal_eigen(m: &DMatrix<f64>) -> (f64, DVector<f64>) {
    let n = m.nrows();
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut best = 0;
    for i in 1..n {
        if eig.eigenvalues[i] > eig.eigenvalues[best] {
            best = i;
        }
    }
    let mut u = eig.eigenvectors.column(best).into_owned();
    if u.sum() < 0.0 {
        u = -u;
    }
    (eig.eigenvalues[best], u)
}

/// `Tr(P) − λ_max(P)`: zero exactly when a PSD matrix has rank ≤ 1.
pub fn rank_one_gap(m: &DMatrix<f64>) -> f64 {
    (m.trace() - principal_eigen(m).0).max(0.0)
}
