use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::{check_compatible, SolverConfig};
use crate::error::{check_len, Error, Result};
use crate::fields::ScalarField;
use crate::mesh::Mesh;
use crate::sparse::{dot, pcg, CgOptions, CsrMatrix, SparseForm};

/// Galerkin solution on `span{interior hats} + span{ψ_j ∘ w}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HwSolution {
    #[serde(skip)]
    pub field: ScalarField,
    pub dimension: usize,
    pub interior_nodes: usize,
    pub bins: usize,
    /// `ψ_j` columns dropped because their boundary traces were dependent.
    pub deflated: usize,
}

/// Nodal samples of `k` piecewise-linear hats on a uniform grid over the range
/// of `w`. They sum to one at every node.
fn level_functions(w: &[f64], k: usize) -> Vec<Vec<f64>> {
    let lo = w.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if k == 1 || !(hi - lo > 1e-14 * hi.abs().max(1.0)) {
        return vec![vec![1.0; w.len()]];
    }
    let step = (hi - lo) / (k - 1) as f64;
    (0..k)
        .map(|j| {
            let t = lo + j as f64 * step;
            w.iter()
                .map(|&x| (1.0 - ((x - t) / step).abs()).max(0.0))
                .collect()
        })
        .collect()
}

pub fn solve_in_hw(
    mesh: &Mesh,
    w: &ScalarField,
    k: &SparseForm,
    f: &[f64],
    bins: usize,
    cfg: &SolverConfig,
) -> Result<HwSolution> {
    let n = mesh.n_vertices();
    check_len(n, w.len())?;
    check_len(n, k.dim())?;
    check_len(n, f.len())?;
    if bins == 0 {
        return Err(Error::InvalidParameter("bins must be at least 1".into()));
    }
    check_compatible(f)?;

    let boundary = mesh.boundary_node_mask();
    let interior: Vec<usize> = (0..n).filter(|&i| !boundary[i]).collect();
    let bnodes: Vec<usize> = (0..n).filter(|&i| boundary[i]).collect();
    let psi_all = level_functions(w.values(), bins);
    let generated = psi_all.len();

    // Interior values are absorbed by the hats, so only traces decide
    // independence.
    let mut kept: Vec<Vec<f64>> = Vec::new();
    let mut traces: Vec<Vec<f64>> = Vec::new();
    for psi in psi_all {
        let mut t: Vec<f64> = bnodes.iter().map(|&i| psi[i]).collect();
        let n0 = dot(&t, &t).sqrt();
        if n0 == 0.0 {
            continue;
        }
        for _ in 0..2 {
            for q in &traces {
                let c = dot(q, &t);
                t.iter_mut().zip(q).for_each(|(a, b)| *a -= c * b);
            }
        }
        let n1 = dot(&t, &t).sqrt();
        if n1 > 1e-10 * n0 {
            traces.push(t.iter().map(|x| x / n1).collect());
            kept.push(psi);
        }
    }
    let deflated = generated - kept.len();

    // The constant function lies in the span; drop the level function that
    // carries most of it so the reduced system is definite.
    let trace_mat = DMatrix::from_fn(bnodes.len(), kept.len(), |r, c| kept[c][bnodes[r]]);
    let beta = trace_mat
        .svd(true, true)
        .solve(&DVector::from_element(bnodes.len(), 1.0), 1e-12)
        .map_err(|e| Error::Degenerate(e.to_string()))?;
    if !kept.is_empty() && !bnodes.is_empty() {
        let pivot = beta.iamax();
        kept.remove(pivot);
    }

    let ni = interior.len();
    let nk = kept.len();
    let dim = ni + nk;
    let a_ii = k.matrix.select(&interior, &interior);
    let kpsi: Vec<Vec<f64>> = kept.iter().map(|p| k.matrix.mul_vec(p)).collect();
    let mut triplets: Vec<(usize, usize, f64)> = a_ii.triplets().collect();
    for (c, kp) in kpsi.iter().enumerate() {
        for (r, &i) in interior.iter().enumerate() {
            let val = kp[i];
            if val != 0.0 {
                triplets.push((r, ni + c, val));
                triplets.push((ni + c, r, val));
            }
        }
        for (c2, p2) in kept.iter().enumerate() {
            triplets.push((ni + c2, ni + c, dot(p2, kp)));
        }
    }
    let a = CsrMatrix::from_triplets(dim, dim, triplets);
    let mut rhs: Vec<f64> = interior.iter().map(|&i| f[i]).collect();
    rhs.extend(kept.iter().map(|p| dot(p, f)));

    let mut c = vec![0.0; dim];
    if dim > 0 {
        let opts = CgOptions {
            tol: cfg.cg_tol,
            max_iter: cfg.cg_maxit.unwrap_or(10 * dim),
            project_constants: false,
        };
        pcg(&a, &rhs, &mut c, opts)?;
    }
    let mut x = vec![0.0; n];
    for (r, &i) in interior.iter().enumerate() {
        x[i] += c[r];
    }
    for (j, p) in kept.iter().enumerate() {
        x.iter_mut()
            .zip(p)
            .for_each(|(xi, pi)| *xi += c[ni + j] * pi);
    }
    Ok(HwSolution {
        field: ScalarField::new(x).mean_zero(mesh),
        dimension: ni + generated - deflated,
        interior_nodes: ni,
        bins: generated,
        deflated,
    })
}
