//! Discrete Dirichlet-to-Neumann maps and conductivity fingerprinting.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{check_len, Error, Result};
use crate::fields::{CoefficientField, ScalarField};
use crate::forms::assemble_stiffness;
use crate::mesh::Mesh;
use crate::solver::{alternating_pair_solve, default_v0, Mode, SolverConfig};
use crate::sparse::{pcg, CgOptions};

/// Dense Schur complement of the weighted stiffness onto boundary nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct DtnMatrix {
    pub matrix: DMatrix<f64>,
    /// Mesh vertex of each row/column.
    pub boundary_nodes: Vec<usize>,
}

impl DtnMatrix {
    pub fn size(&self) -> usize {
        self.boundary_nodes.len()
    }

    /// `max|Λ − Λᵀ| / max|Λ|`.
    pub fn symmetry_defect(&self) -> f64 {
        let scale = self.matrix.amax();
        if scale == 0.0 {
            return 0.0;
        }
        (&self.matrix - self.matrix.transpose()).amax() / scale
    }

    /// `max_i |(Λ𝟙)_i|`.
    pub fn kernel_defect(&self) -> f64 {
        self.matrix.column_sum().amax()
    }

    pub fn quadratic_form(&self, z: &[f64]) -> Result<f64> {
        check_len(self.size(), z.len())?;
        let z = DVector::from_column_slice(z);
        Ok(z.dot(&(&self.matrix * &z)))
    }

    /// Smallest eigenvalue of the symmetric part on mean-zero boundary vectors.
    pub fn min_mean_zero_rayleigh(&self) -> f64 {
        let m = self.size();
        if m < 2 {
            return 0.0;
        }
        let p = deflation(m);
        let s = 0.5 * (&self.matrix + self.matrix.transpose());
        let eig = SymmetricEigen::new(&p * s * &p);
        // The constant vector is an exact eigenvector of PSP with value 0;
        // drop the eigenvalue whose eigenvector is closest to it.
        let ones = DVector::from_element(m, 1.0 / (m as f64).sqrt());
        let skip = (0..m)
            .max_by(|&a, &b| {
                eig.eigenvectors
                    .column(a)
                    .dot(&ones)
                    .abs()
                    .total_cmp(&eig.eigenvectors.column(b).dot(&ones).abs())
            })
            .unwrap_or(0);
        (0..m)
            .filter(|&k| k != skip)
            .map(|k| eig.eigenvalues[k])
            .fold(f64::INFINITY, f64::min)
    }
}

fn deflation(m: usize) -> DMatrix<f64> {
    DMatrix::identity(m, m) - DMatrix::from_element(m, m, 1.0 / m as f64)
}

/// `Λ = A_bb − A_bi A_ii⁻¹ A_ib`, one interior CG solve per boundary column.
pub fn assemble_dtn(
    mesh: &Mesh,
    gamma: &CoefficientField,
    cfg: &SolverConfig,
) -> Result<DtnMatrix> {
    check_len(mesh.n_tets(), gamma.len())?;
    let k = assemble_stiffness(mesh, gamma)?.matrix;
    let mask = mesh.boundary_node_mask();
    let bnodes: Vec<usize> = (0..mesh.n_vertices()).filter(|&i| mask[i]).collect();
    let inodes: Vec<usize> = (0..mesh.n_vertices()).filter(|&i| !mask[i]).collect();
    if bnodes.is_empty() {
        return Err(Error::Degenerate("mesh has no boundary nodes".into()));
    }
    let m = bnodes.len();
    let a_bb = k.select(&bnodes, &bnodes);
    let a_ib = k.select(&inodes, &bnodes);
    let a_bi = a_ib.transpose();
    let a_ii = k.select(&inodes, &inodes);
    let opts = CgOptions {
        tol: cfg.cg_tol,
        max_iter: cfg.cg_maxit.unwrap_or(10 * inodes.len().max(1)),
        project_constants: false,
    };

    let columns: Vec<Result<Vec<f64>>> = (0..m)
        .into_par_iter()
        .map(|j| {
            let mut e = vec![0.0; m];
            e[j] = 1.0;
            let mut col = a_bb.mul_vec(&e);
            if !inodes.is_empty() {
                let rhs: Vec<f64> = a_ib.mul_vec(&e).iter().map(|x| -x).collect();
                let mut x = vec![0.0; inodes.len()];
                pcg(&a_ii, &rhs, &mut x, opts).map_err(|source| Error::ColumnSolve {
                    column: j,
                    source: Box::new(source),
                })?;
                for (c, d) in col.iter_mut().zip(a_bi.mul_vec(&x)) {
                    *c += d;
                }
            }
            Ok(col)
        })
        .collect();
    let mut matrix = DMatrix::zeros(m, m);
    for (j, col) in columns.into_iter().enumerate() {
        matrix.set_column(j, &DVector::from_vec(col?));
    }
    Ok(DtnMatrix {
        matrix,
        boundary_nodes: bnodes,
    })
}

/// Frobenius distance on mean-zero boundary data, relative to the larger of
/// the two deflated norms.
pub fn dtn_distance(a: &DtnMatrix, b: &DtnMatrix) -> Result<f64> {
    if a.boundary_nodes != b.boundary_nodes {
        return Err(Error::Incompatible(
            "DtN maps use different boundary indexing".into(),
        ));
    }
    let p = deflation(a.size());
    let pa = &p * &a.matrix * &p;
    let pb = &p * &b.matrix * &p;
    let scale = pa.norm().max(pb.norm());
    if scale == 0.0 {
        return Ok(0.0);
    }
    Ok((pa - pb).norm() / scale)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellFailure {
    pub row: usize,
    pub col: usize,
    pub message: String,
}

/// Diagnostics of the conductivity pair for one `(γ, w)` combination.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairDiagnostics {
    pub gamma: String,
    pub w: String,
    pub mu: Option<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub r1: Option<f64>,
    pub r2: Option<f64>,
    pub error: Option<String>,
    #[serde(skip)]
    pub fields: Option<(ScalarField, ScalarField)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DtnExperiment {
    pub gammas: Vec<String>,
    pub ws: Vec<String>,
    /// `null` where either map failed to assemble.
    pub distances: Vec<Vec<Option<f64>>>,
    pub failures: Vec<CellFailure>,
    pub pairs: Vec<PairDiagnostics>,
    #[serde(skip)]
    pub maps: Vec<Option<DtnMatrix>>,
}

/// Pairwise DtN distances for every conductivity, plus a gamma-mode pair solve
/// for every `(γ, w)`. Failures are recorded per cell.
pub fn dtn_experiment(
    mesh: &Mesh,
    gammas: &[(String, CoefficientField)],
    ws: &[(String, ScalarField)],
    cfg: &SolverConfig,
    seed: u64,
) -> DtnExperiment {
    let maps: Vec<Result<DtnMatrix>> = gammas
        .iter()
        .map(|(_, g)| assemble_dtn(mesh, g, cfg))
        .collect();
    let n = gammas.len();
    let mut failures = Vec::new();
    for (i, m) in maps.iter().enumerate() {
        if let Err(e) = m {
            failures.push(CellFailure {
                row: i,
                col: i,
                message: e.to_string(),
            });
        }
    }
    let mut distances = vec![vec![None; n]; n];
    for i in 0..n {
        for j in 0..n {
            if let (Ok(a), Ok(b)) = (&maps[i], &maps[j]) {
                match dtn_distance(a, b) {
                    Ok(d) => distances[i][j] = Some(d),
                    Err(e) => failures.push(CellFailure {
                        row: i,
                        col: j,
                        message: e.to_string(),
                    }),
                }
            }
        }
    }

    let pair_cfg = SolverConfig {
        mode: Mode::Gamma,
        ..cfg.clone()
    };
    let v0 = default_v0(mesh, seed);
    let mut pairs = Vec::with_capacity(n * ws.len());
    for (gname, g) in gammas {
        for (wname, w) in ws {
            let mut d = PairDiagnostics {
                gamma: gname.clone(),
                w: wname.clone(),
                mu: None,
                converged: false,
                iterations: 0,
                r1: None,
                r2: None,
                error: None,
                fields: None,
            };
            match alternating_pair_solve(mesh, w, Some(g), &v0, &pair_cfg) {
                Ok(r) => {
                    let last = r.residuals.last().copied();
                    d.mu = Some(r.mu);
                    d.converged = r.converged;
                    d.iterations = r.iterations;
                    d.r1 = last.map(|x| x.r1);
                    d.r2 = last.map(|x| x.r2);
                    d.fields = Some((r.u, r.v));
                }
                Err(e) => d.error = Some(e.to_string()),
            }
            pairs.push(d);
        }
    }
    DtnExperiment {
        gammas: gammas.iter().map(|(s, _)| s.clone()).collect(),
        ws: ws.iter().map(|(s, _)| s.clone()).collect(),
        distances,
        failures,
        pairs,
        maps: maps.into_iter().map(|m| m.ok()).collect(),
    }
}
