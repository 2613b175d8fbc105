use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{check_len, Error, Result};
use crate::fields::ScalarField;
use crate::sparse::CsrMatrix;

pub const ORACLE_DOF_LIMIT: usize = 3000;

/// Full spectrum of `[[0,B],[Bᵀ,0]] z = λ diag(K_a, K_d) z` on mean-zero fields.
#[derive(Debug, Clone)]
pub struct DenseSpectrum {
    /// Descending.
    pub eigenvalues: Vec<f64>,
    /// Nodal eigenvectors `(u; v)` as columns, orthonormal in the block energy
    /// inner product, matching `eigenvalues`.
    pub eigenvectors: DMatrix<f64>,
}

impl DenseSpectrum {
    pub fn max(&self) -> f64 {
        self.eigenvalues.first().copied().unwrap_or(0.0)
    }

    /// Columns whose eigenvalue lies within `tol` of the largest one.
    pub fn top_cluster(&self, tol: f64) -> usize {
        let top = self.max();
        self.eigenvalues
            .iter()
            .take_while(|&&l| l >= top - tol)
            .count()
    }
}

/// Columns 2..n of the Householder reflector sending `e₁` to `𝟙/√n`; an
/// orthonormal basis of the mean-zero subspace.
fn mean_zero_basis(n: usize) -> DMatrix<f64> {
    let s = 1.0 / (n as f64).sqrt();
    let mut h = DVector::from_element(n, s);
    h[0] -= 1.0;
    let hh = h.dot(&h);
    let mut q = DMatrix::identity(n, n);
    if hh > 0.0 {
        q -= (2.0 / hh) * &h * h.transpose();
    }
    q.columns(1, n - 1).into_owned()
}

fn lower_cholesky(k: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    k.clone()
        .cholesky()
        .map(|c| c.l())
        .ok_or_else(|| Error::Degenerate("stiffness not definite on mean-zero fields".into()))
}

pub fn dense_eig_oracle(ka: &CsrMatrix, kd: &CsrMatrix, b: &CsrMatrix) -> Result<DenseSpectrum> {
    let n = ka.n_rows();
    if n > ORACLE_DOF_LIMIT {
        return Err(Error::Size {
            dof: n,
            limit: ORACLE_DOF_LIMIT,
        });
    }
    check_len(n, kd.n_rows())?;
    check_len(n, b.n_rows())?;
    check_len(n, b.n_cols())?;
    if n < 2 {
        return Err(Error::InvalidParameter("need at least two nodes".into()));
    }
    let q = mean_zero_basis(n);
    let la = lower_cholesky(&(q.transpose() * ka.to_dense() * &q))?;
    let ld = lower_cholesky(&(q.transpose() * kd.to_dense() * &q))?;
    let bt = q.transpose() * b.to_dense() * &q;
    // C = L_a⁻¹ B̃ L_d⁻ᵀ
    let left = la
        .solve_lower_triangular(&bt)
        .ok_or_else(|| Error::Degenerate("singular factor".into()))?;
    let c = ld
        .solve_lower_triangular(&left.transpose())
        .ok_or_else(|| Error::Degenerate("singular factor".into()))?
        .transpose();
    let m = n - 1;
    let mut s = DMatrix::zeros(2 * m, 2 * m);
    s.view_mut((0, m), (m, m)).copy_from(&c);
    s.view_mut((m, 0), (m, m)).copy_from(&c.transpose());
    let eig = SymmetricEigen::new(s);

    let mut order: Vec<usize> = (0..2 * m).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let la_t = la.transpose();
    let ld_t = ld.transpose();
    let mut vectors = DMatrix::zeros(2 * n, 2 * m);
    for (col, &k) in order.iter().enumerate() {
        let y = eig.eigenvectors.column(k);
        let za = la_t
            .solve_upper_triangular(&y.rows(0, m).into_owned())
            .expect("factor checked");
        let zd = ld_t
            .solve_upper_triangular(&y.rows(m, m).into_owned())
            .expect("factor checked");
        vectors.view_mut((0, col), (n, 1)).copy_from(&(&q * za));
        vectors.view_mut((n, col), (n, 1)).copy_from(&(&q * zd));
    }
    Ok(DenseSpectrum {
        eigenvalues: order.iter().map(|&k| eig.eigenvalues[k]).collect(),
        eigenvectors: vectors,
    })
}

/// Sine of the energy-norm angle between the pair `(u, v)` and the top
/// eigenspace (eigenvalues within `cluster_tol` of the maximum).
pub fn oracle_alignment(
    spectrum: &DenseSpectrum,
    ka: &CsrMatrix,
    kd: &CsrMatrix,
    u: &ScalarField,
    v: &ScalarField,
    cluster_tol: f64,
) -> Result<f64> {
    let n = ka.n_rows();
    check_len(n, u.len())?;
    check_len(n, v.len())?;
    check_len(2 * n, spectrum.eigenvectors.nrows())?;
    let m_apply = |z: &DVector<f64>| -> DVector<f64> {
        let mut out = DVector::zeros(2 * n);
        let a = ka.mul_vec(z.rows(0, n).as_slice());
        let d = kd.mul_vec(z.rows(n, n).as_slice());
        out.rows_mut(0, n).copy_from_slice(&a);
        out.rows_mut(n, n).copy_from_slice(&d);
        out
    };
    let z = DVector::from_iterator(2 * n, u.values().iter().chain(v.values()).copied());
    let mz = m_apply(&z);
    let norm2 = z.dot(&mz);
    if !(norm2 > 0.0) {
        return Err(Error::Degenerate("pair has zero energy".into()));
    }
    let k = spectrum.top_cluster(cluster_tol);
    let top = spectrum.eigenvectors.columns(0, k);
    let coeffs = top.transpose() * &mz;
    let residual = &z - top * coeffs;
    let r2 = residual.dot(&m_apply(&residual)).max(0.0);
    Ok((r2 / norm2).sqrt())
}
