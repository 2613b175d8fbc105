use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{Mode, PairWeights, SolverConfig};
use crate::error::{check_len, Error, Result};
use crate::fields::{CoefficientField, ScalarField};
use crate::forms::{assemble_det_form, assemble_weighted_stiffness, DetForm};
use crate::mesh::{element_gradients_unchecked, Mesh, Vec3};
use crate::sparse::{dot, pcg, CsrMatrix, SparseForm};
use crate::verify::identity_residuals;

const MAX_RESTARTS: usize = 3;
const RESTART_SEED: u64 = 0x5eed_0000;

/// Identity residuals of the normalised pair after one sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepResiduals {
    pub r1: f64,
    pub r2: f64,
    /// `‖dual(conj(v)) − θv‖ / θ` in the dual energy norm.
    pub eigen_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairSolveReport {
    #[serde(skip)]
    pub u: ScalarField,
    #[serde(skip)]
    pub v: ScalarField,
    pub mode: Mode,
    pub mu: f64,
    pub iterations: usize,
    pub converged: bool,
    pub restarts: usize,
    pub mu_history: Vec<f64>,
    pub residuals: Vec<SweepResiduals>,
}

/// Nodal `x₂` plus a small seeded perturbation, the reproducible default start.
pub fn default_v0(mesh: &Mesh, seed: u64) -> ScalarField {
    let (lo, hi) = mesh
        .vertices()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            (lo.min(p.y), hi.max(p.y))
        });
    let amp = 1e-2 * (hi - lo);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ScalarField::new(
        mesh.vertices()
            .iter()
            .map(|p| p.y + amp * rng.random_range(-1.0..1.0))
            .collect(),
    )
}

fn restart_vector(n: usize, attempt: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(RESTART_SEED + attempt as u64);
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn remove_sum(x: &mut [f64]) {
    let m = x.iter().sum::<f64>() / x.len().max(1) as f64;
    x.iter_mut().for_each(|v| *v -= m);
}

struct PairSystem<'a> {
    mesh: &'a Mesh,
    ka: SparseForm,
    kd: SparseForm,
    b: DetForm,
    gw: Vec<Vec3>,
    weights: PairWeights,
    cfg: &'a SolverConfig,
}

impl PairSystem<'_> {
    fn solve(&self, k: &CsrMatrix, mut rhs: Vec<f64>) -> Result<Vec<f64>> {
        remove_sum(&mut rhs);
        let mut x = vec![0.0; rhs.len()];
        pcg(k, &rhs, &mut x, self.cfg.cg_options(rhs.len(), true))?;
        Ok(x)
    }

    fn conj(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.solve(&self.ka.matrix, self.b.apply(v))
    }

    fn dual(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.solve(&self.kd.matrix, self.b.apply_transpose(u))
    }

    fn residuals(&self, u: &[f64], v: &[f64]) -> (f64, f64) {
        let gu = element_gradients_unchecked(self.mesh, u);
        let gv = element_gradients_unchecked(self.mesh, v);
        let r = identity_residuals(
            self.mesh,
            &gu,
            &gv,
            &self.gw,
            &self.weights.primal,
            &self.weights.dual,
        );
        (r.r1, r.r2)
    }
}

fn scaled(x: &[f64], s: f64) -> Vec<f64> {
    x.iter().map(|v| v * s).collect()
}

/// Two-pass Gram–Schmidt in the `k` inner product; nearly dependent
/// directions are dropped.
fn orthonormalize(k: &CsrMatrix, vecs: &[&[f64]]) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for v in vecs {
        let mut x = v.to_vec();
        let n0 = k.bilinear(&x, &x).max(0.0).sqrt();
        if n0 == 0.0 {
            continue;
        }
        for _ in 0..2 {
            for q in &basis {
                let c = k.bilinear(q, &x);
                x.iter_mut().zip(q).for_each(|(a, b)| *a -= c * b);
            }
        }
        let n1 = k.bilinear(&x, &x).max(0.0).sqrt();
        if n1 > 1e-10 * n0 {
            basis.push(scaled(&x, 1.0 / n1));
        }
    }
    basis
}

/// Best `v` in `span V` for the coupled singular problem restricted to
/// `span U × span V`.
fn ritz_update(sys: &PairSystem, us: &[&[f64]], vs: &[&[f64]]) -> Option<Vec<f64>> {
    let ub = orthonormalize(&sys.ka.matrix, us);
    let vb = orthonormalize(&sys.kd.matrix, vs);
    if ub.is_empty() || vb.is_empty() {
        return None;
    }
    let bv: Vec<Vec<f64>> = vb.iter().map(|v| sys.b.apply(v)).collect();
    let c = DMatrix::from_fn(ub.len(), vb.len(), |i, j| dot(&ub[i], &bv[j]));
    let svd = c.svd(false, true);
    let vt = svd.v_t?;
    let (best, sigma) = svd
        .singular_values
        .iter()
        .copied()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(&b.1))?;
    if !(sigma > 0.0) {
        return None;
    }
    let mut out = vec![0.0; vb[0].len()];
    for (j, q) in vb.iter().enumerate() {
        let y = vt[(best, j)];
        out.iter_mut().zip(q).for_each(|(a, b)| *a += y * b);
    }
    Some(out)
}

/// Dominant pair of the pencil `[[0,B],[Bᵀ,0]] z = μ diag(K_a, K_d) z`.
///
/// Each sweep applies `conjugate_of` then `dual_conjugate_of` once and then
/// takes the best pair in the span of the current and previous iterates.
/// `gamma` is only read in [`Mode::Gamma`].
pub fn alternating_pair_solve(
    mesh: &Mesh,
    w: &ScalarField,
    gamma: Option<&CoefficientField>,
    v0: &ScalarField,
    cfg: &SolverConfig,
) -> Result<PairSolveReport> {
    cfg.validate()?;
    check_len(mesh.n_vertices(), v0.len())?;
    let weights = PairWeights::new(mesh, w, cfg.mode, gamma)?;
    let sys = PairSystem {
        mesh,
        ka: assemble_weighted_stiffness(mesh, &weights.primal)?,
        kd: assemble_weighted_stiffness(mesh, &weights.dual)?,
        b: assemble_det_form(mesh, w)?,
        gw: element_gradients_unchecked(mesh, w.values()),
        weights,
        cfg,
    };
    let wscale = sys.gw.iter().map(|g| g.norm()).fold(0.0, f64::max);
    let n = mesh.n_vertices();

    let mut start = v0.values().to_vec();
    let mut restarts = 0;
    loop {
        match sweep(&sys, start, wscale)? {
            Some((u, v, mut report)) => {
                report.u = ScalarField::new(u).mean_zero(mesh);
                report.v = ScalarField::new(v).mean_zero(mesh);
                report.mode = cfg.mode;
                report.restarts = restarts;
                return Ok(report);
            }
            None if restarts < MAX_RESTARTS => {
                restarts += 1;
                start = restart_vector(n, restarts);
            }
            None => {
                return Err(Error::Degenerate(format!(
                    "starting vector couples trivially after {MAX_RESTARTS} restarts"
                )))
            }
        }
    }
}

type SweepOutcome = Option<(Vec<f64>, Vec<f64>, PairSolveReport)>;

fn sweep(sys: &PairSystem, start: Vec<f64>, wscale: f64) -> Result<SweepOutcome> {
    let kd = &sys.kd.matrix;
    let ka = &sys.ka.matrix;
    let mut v = start;
    remove_sum(&mut v);
    let nv = kd.bilinear(&v, &v);
    if !(nv > 0.0) || !nv.is_finite() {
        return Ok(None);
    }
    v = scaled(&v, 1.0 / nv.sqrt());

    let mut report = PairSolveReport {
        u: ScalarField::zeros(0),
        v: ScalarField::zeros(0),
        mode: sys.cfg.mode,
        mu: 0.0,
        iterations: 0,
        converged: false,
        restarts: 0,
        mu_history: Vec::new(),
        residuals: Vec::new(),
    };
    let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;
    let mut mu_prev = f64::NAN;
    for it in 1..=sys.cfg.maxit {
        let u = sys.conj(&v)?;
        let theta = ka.bilinear(&u, &u);
        if !(theta > 1e-20 * wscale * wscale) {
            if it == 1 {
                return Ok(None);
            }
            return Err(Error::Degenerate(
                "coupling collapsed during iteration".into(),
            ));
        }
        let un = scaled(&u, 1.0 / theta.sqrt());
        let vp = sys.dual(&u)?;
        let diff: Vec<f64> = vp.iter().zip(&v).map(|(a, b)| a - theta * b).collect();
        let eigen_residual = kd.bilinear(&diff, &diff).max(0.0).sqrt() / theta;

        let energy = 0.5 * (ka.bilinear(&un, &un) + kd.bilinear(&v, &v));
        let mu = sys.b.pairing(&un, &v) / energy;
        let (r1, r2) = sys.residuals(&un, &v);
        report.mu = mu;
        report.iterations = it;
        report.mu_history.push(mu);
        report.residuals.push(SweepResiduals {
            r1,
            r2,
            eigen_residual,
        });

        let stalled = (mu - mu_prev).abs() <= sys.cfg.tol * mu.abs();
        if stalled && eigen_residual <= sys.cfg.residual_tol {
            report.converged = true;
            return Ok(Some((un, v, report)));
        }
        mu_prev = mu;

        let next = {
            let mut us: Vec<&[f64]> = vec![&un];
            let mut vs: Vec<&[f64]> = vec![&v, &vp];
            if let Some((pu, pv)) = &prev {
                us.push(pu);
                vs.push(pv);
            }
            ritz_update(sys, &us, &vs)
        };
        let mut next = next.unwrap_or_else(|| vp.clone());
        if kd.bilinear(&next, &v) < 0.0 {
            next.iter_mut().for_each(|x| *x = -*x);
        }
        remove_sum(&mut next);
        let nn = kd.bilinear(&next, &next);
        if !(nn > 0.0) {
            return Err(Error::Degenerate("iterate vanished".into()));
        }
        prev = Some((un, v));
        v = scaled(&next, 1.0 / nn.sqrt());
    }
    let (u, v) = prev.expect("at least one sweep");
    Ok(Some((u, v, report)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{sample_w, Axis, WSpec};
    use crate::mesh::{build_ball_mesh, build_cube_mesh};

    fn x3(mesh: &Mesh) -> ScalarField {
        mesh.interpolate(|p| p.z)
    }

    #[test]
    fn affine_pair_on_cube() {
        let mesh = build_cube_mesh(4).unwrap();
        let w = x3(&mesh);
        let r = alternating_pair_solve(
            &mesh,
            &w,
            None,
            &default_v0(&mesh, 42),
            &SolverConfig::default(),
        )
        .unwrap();
        assert!(r.converged);
        assert!((r.mu - 1.0).abs() < 1e-8, "{}", r.mu);
        let last = r.residuals.last().unwrap();
        assert!(last.r1 < 1e-6 && last.r2 < 1e-6, "{last:?}");
        assert_eq!(r.restarts, 0);
        assert!(r.u.integral_mean(&mesh).abs() < 1e-12);
        assert!(r.v.integral_mean(&mesh).abs() < 1e-12);
    }

    #[test]
    fn mu_is_monotone_and_bounded() {
        let mesh = build_cube_mesh(4).unwrap();
        let w = x3(&mesh);
        let r = alternating_pair_solve(
            &mesh,
            &w,
            None,
            &default_v0(&mesh, 3),
            &SolverConfig::default(),
        )
        .unwrap();
        for pair in r.mu_history.windows(2) {
            assert!(pair[1] >= pair[0] - 1e-12, "{pair:?}");
        }
        assert!(r.mu_history.iter().all(|&m| m <= 1.0 + 1e-12));
    }

    #[test]
    fn degenerate_start_restarts() {
        let mesh = build_cube_mesh(3).unwrap();
        let w = x3(&mesh);
        let r = alternating_pair_solve(&mesh, &w, None, &w, &SolverConfig::default()).unwrap();
        assert_eq!(r.restarts, 1);
        assert!(r.converged);
    }

    #[test]
    fn constant_w_is_degenerate() {
        let mesh = build_cube_mesh(2).unwrap();
        let w = mesh.interpolate(|_| 1.0);
        let err = alternating_pair_solve(
            &mesh,
            &w,
            None,
            &default_v0(&mesh, 42),
            &SolverConfig::default(),
        );
        assert!(matches!(err, Err(Error::Degenerate(_))));
    }

    #[test]
    fn maxit_reports_nonconvergence() {
        let mesh = build_cube_mesh(3).unwrap();
        let w = x3(&mesh);
        let cfg = SolverConfig {
            maxit: 1,
            ..SolverConfig::default()
        };
        let r = alternating_pair_solve(&mesh, &w, None, &default_v0(&mesh, 42), &cfg).unwrap();
        assert!(!r.converged);
        assert_eq!(r.iterations, 1);
    }

    #[test]
    fn ball_point_distance_below_bound() {
        let spec = WSpec::DistToPoint {
            point: [0.0, 0.0, -2.0],
        };
        let mesh = build_ball_mesh(2).unwrap();
        let w = sample_w(&spec, &mesh).unwrap();
        let r = alternating_pair_solve(
            &mesh,
            &w,
            None,
            &default_v0(&mesh, 42),
            &SolverConfig::default(),
        )
        .unwrap();
        assert!(r.converged);
        assert!(r.mu < 1.0);
    }

    #[test]
    fn weighted_w2_affine_pair() {
        let mesh = build_cube_mesh(3).unwrap();
        let w = sample_w(
            &WSpec::Coordinate {
                axis: Axis::X3,
                offset: 0.0,
            },
            &mesh,
        )
        .unwrap()
        .scaled(2.0);
        let cfg = SolverConfig {
            mode: Mode::WeightedW2,
            ..SolverConfig::default()
        };
        let r = alternating_pair_solve(&mesh, &w, None, &default_v0(&mesh, 42), &cfg).unwrap();
        assert!(r.converged);
        assert!((r.mu - 1.0).abs() < 1e-8, "{}", r.mu);
    }
}
