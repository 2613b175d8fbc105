//! Neumann solves, the conjugate maps, the alternating pair iteration and its
//! dense oracle, and the Galerkin solve on the `H¹₀ + functions of w` space.

mod hw;
mod oracle;
mod pair;

pub use hw::{solve_in_hw, HwSolution};
pub use oracle::{dense_eig_oracle, oracle_alignment, DenseSpectrum, ORACLE_DOF_LIMIT};
pub use pair::{alternating_pair_solve, default_v0, PairSolveReport, SweepResiduals};

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::fields::{CoefficientField, ScalarField};
use crate::forms::{assemble_cross_load, assemble_weighted_stiffness};
use crate::mesh::{element_gradients_unchecked, Mesh};
use crate::sparse::{pcg, CgOptions, CgStats, SparseForm};

/// Which pair of weights multiplies `∇u` and `∇v` in the two identities
/// `a∇u = ∇v∧∇w`, `d∇v = ∇w∧∇u`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// `a = d = 1`.
    #[default]
    Unitary,
    /// `a = γ`, `d = 1/γ`.
    Gamma,
    /// `a = 1`, `d = |∇w_h|²`.
    WeightedW2,
    /// `a = d = |∇w_h|`.
    GammaAbsw,
}

/// Per-element weights `(a, d)` for a mode.
#[derive(Debug, Clone, PartialEq)]
pub struct PairWeights {
    pub primal: Vec<f64>,
    pub dual: Vec<f64>,
}

impl PairWeights {
    /// `gamma` is required by [`Mode::Gamma`] and ignored otherwise.
    pub fn new(
        mesh: &Mesh,
        w: &ScalarField,
        mode: Mode,
        gamma: Option<&CoefficientField>,
    ) -> Result<Self> {
        check_len(mesh.n_vertices(), w.len())?;
        let n = mesh.n_tets();
        let grad_norm = || -> Vec<f64> {
            element_gradients_unchecked(mesh, w.values())
                .iter()
                .map(|g| g.norm())
                .collect()
        };
        let (primal, dual) = match mode {
            Mode::Unitary => (vec![1.0; n], vec![1.0; n]),
            Mode::Gamma => {
                let g = gamma.ok_or_else(|| {
                    Error::InvalidParameter("mode gamma needs a conductivity".into())
                })?;
                check_len(n, g.len())?;
                (g.values().to_vec(), g.reciprocal().values().to_vec())
            }
            Mode::WeightedW2 => (vec![1.0; n], grad_norm().iter().map(|s| s * s).collect()),
            Mode::GammaAbsw => {
                let s = grad_norm();
                (s.clone(), s)
            }
        };
        Ok(Self { primal, dual })
    }
}

/// Controls for the pair iteration and its inner CG solves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Relative change of μ between sweeps.
    pub tol: f64,
    /// Relative eigen-residual of the composed map `v ↦ dual(conj(v))`.
    pub residual_tol: f64,
    pub maxit: usize,
    pub cg_tol: f64,
    /// Defaults to `10·dof` when unset.
    pub cg_maxit: Option<usize>,
    pub mode: Mode,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            residual_tol: 1e-8,
            maxit: 500,
            cg_tol: 1e-12,
            cg_maxit: None,
            mode: Mode::Unitary,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, x: f64| {
            if x > 0.0 && x.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!(
                    "{name} must be positive, got {x}"
                )))
            }
        };
        positive("tol", self.tol)?;
        positive("residual_tol", self.residual_tol)?;
        positive("cg_tol", self.cg_tol)?;
        if self.maxit == 0 {
            return Err(Error::InvalidParameter("maxit must be at least 1".into()));
        }
        if self.cg_maxit == Some(0) {
            return Err(Error::InvalidParameter(
                "cg_maxit must be at least 1".into(),
            ));
        }
        Ok(())
    }

    pub(crate) fn cg_options(&self, dof: usize, project_constants: bool) -> CgOptions {
        CgOptions {
            tol: self.cg_tol,
            max_iter: self.cg_maxit.unwrap_or(10 * dof.max(1)),
            project_constants,
        }
    }
}

/// Relative compatibility threshold for pure-Neumann loads.
pub const COMPATIBILITY_TOL: f64 = 1e-10;

pub(crate) fn check_compatible(f: &[f64]) -> Result<()> {
    let sum: f64 = f.iter().sum();
    let scale: f64 = f.iter().map(|x| x.abs()).sum();
    if sum.abs() > COMPATIBILITY_TOL * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::Compatibility { sum, scale });
    }
    Ok(())
}

/// Solves `Kx = f` on the complement of the constants. The returned vector has
/// zero nodal sum; callers wanting the integral mean fix it with the mesh.
pub fn solve_neumann(k: &SparseForm, f: &[f64], cfg: &SolverConfig) -> Result<ScalarField> {
    solve_neumann_stats(k, f, cfg).map(|(x, _)| x)
}

pub(crate) fn solve_neumann_stats(
    k: &SparseForm,
    f: &[f64],
    cfg: &SolverConfig,
) -> Result<(ScalarField, CgStats)> {
    let n = k.dim();
    check_len(n, f.len())?;
    check_compatible(f)?;
    let mean = f.iter().sum::<f64>() / n.max(1) as f64;
    let rhs: Vec<f64> = f.iter().map(|x| x - mean).collect();
    let mut x = vec![0.0; n];
    let stats = pcg(&k.matrix, &rhs, &mut x, cfg.cg_options(n, true))?;
    Ok((ScalarField::new(x), stats))
}

/// Mean-zero `u` with `∫γ∇u·∇U = ∫(∇v∧∇w)·∇U` for all discrete `U`.
pub fn conjugate_of(
    mesh: &Mesh,
    v: &ScalarField,
    w: &ScalarField,
    gamma: &CoefficientField,
    cfg: &SolverConfig,
) -> Result<ScalarField> {
    check_len(mesh.n_tets(), gamma.len())?;
    let k = assemble_weighted_stiffness(mesh, gamma.values())?;
    let f = assemble_cross_load(mesh, v, w, 1.0)?;
    Ok(solve_neumann(&k, &f, cfg)?.mean_zero(mesh))
}

/// Mean-zero `v` with `∫d∇v·∇U = ∫(∇w∧∇u)·∇U`, where `d` is the weight that
/// multiplies `∇v` (`1/γ` for a conductivity pair, `|∇w|²` for the weighted
/// variant).
pub fn dual_conjugate_of(
    mesh: &Mesh,
    u: &ScalarField,
    w: &ScalarField,
    weight: &CoefficientField,
    cfg: &SolverConfig,
) -> Result<ScalarField> {
    check_len(mesh.n_tets(), weight.len())?;
    let k = assemble_weighted_stiffness(mesh, weight.values())?;
    let f = assemble_cross_load(mesh, w, u, 1.0)?;
    Ok(solve_neumann(&k, &f, cfg)?.mean_zero(mesh))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forms::assemble_stiffness;
    use crate::mesh::build_cube_mesh;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn x(mesh: &Mesh, axis: usize, scale: f64) -> ScalarField {
        mesh.interpolate(|p| scale * p[axis])
    }

    #[test]
    fn zero_load_gives_zero() {
        let mesh = build_cube_mesh(3).unwrap();
        let k = assemble_stiffness(&mesh, &CoefficientField::ones(mesh.n_tets())).unwrap();
        let x = solve_neumann(&k, &vec![0.0; mesh.n_vertices()], &SolverConfig::default()).unwrap();
        assert!(x.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn recovers_consistent_solution() {
        let mesh = build_cube_mesh(4).unwrap();
        let k = assemble_stiffness(&mesh, &CoefficientField::ones(mesh.n_tets())).unwrap();
        let x1 = x(&mesh, 0, 1.0);
        let exact: Vec<f64> = {
            let m = x1.values().iter().sum::<f64>() / x1.len() as f64;
            x1.values().iter().map(|v| v - m).collect()
        };
        let f = k.apply(&exact);
        let got = solve_neumann(&k, &f, &SolverConfig::default()).unwrap();
        for (a, b) in got.values().iter().zip(&exact) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn random_compatible_load_residual() {
        let mesh = build_cube_mesh(8).unwrap();
        let k = assemble_stiffness(&mesh, &CoefficientField::ones(mesh.n_tets())).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut f: Vec<f64> = (0..mesh.n_vertices())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let m = f.iter().sum::<f64>() / f.len() as f64;
        f.iter_mut().for_each(|v| *v -= m);
        let x = solve_neumann(&k, &f, &SolverConfig::default()).unwrap();
        let r: Vec<f64> = k
            .apply(x.values())
            .iter()
            .zip(&f)
            .map(|(a, b)| a - b)
            .collect();
        let rel = crate::sparse::norm(&r) / crate::sparse::norm(&f);
        assert!(rel <= 1e-12, "{rel}");
    }

    #[test]
    fn incompatible_load_rejected() {
        let mesh = build_cube_mesh(2).unwrap();
        let k = assemble_stiffness(&mesh, &CoefficientField::ones(mesh.n_tets())).unwrap();
        let f = vec![1.0; mesh.n_vertices()];
        assert!(matches!(
            solve_neumann(&k, &f, &SolverConfig::default()),
            Err(Error::Compatibility { .. })
        ));
    }

    #[test]
    fn conjugate_of_coordinates() {
        let mesh = build_cube_mesh(4).unwrap();
        let ones = CoefficientField::ones(mesh.n_tets());
        let cfg = SolverConfig::default();
        let u = conjugate_of(&mesh, &x(&mesh, 1, 1.0), &x(&mesh, 2, 1.0), &ones, &cfg).unwrap();
        assert!(u.max_abs_diff(&x(&mesh, 0, 1.0).mean_zero(&mesh)) < 1e-10);
        let u = conjugate_of(&mesh, &x(&mesh, 1, 1.0), &x(&mesh, 2, 2.0), &ones, &cfg).unwrap();
        assert!(u.max_abs_diff(&x(&mesh, 0, 2.0).mean_zero(&mesh)) < 1e-10);
    }

    #[test]
    fn dual_conjugate_of_coordinates() {
        let mesh = build_cube_mesh(4).unwrap();
        let cfg = SolverConfig::default();
        let ones = CoefficientField::ones(mesh.n_tets());
        let v =
            dual_conjugate_of(&mesh, &x(&mesh, 0, 1.0), &x(&mesh, 2, 1.0), &ones, &cfg).unwrap();
        assert!(v.max_abs_diff(&x(&mesh, 1, 1.0).mean_zero(&mesh)) < 1e-10);

        let w2 = x(&mesh, 2, 2.0);
        let weights = PairWeights::new(&mesh, &w2, Mode::WeightedW2, None).unwrap();
        assert!(weights.dual.iter().all(|&d| (d - 4.0).abs() < 1e-12));
        let four = CoefficientField::constant(mesh.n_tets(), 4.0).unwrap();
        let v = dual_conjugate_of(&mesh, &x(&mesh, 0, 2.0), &w2, &four, &cfg).unwrap();
        assert!(v.max_abs_diff(&x(&mesh, 1, 1.0).mean_zero(&mesh)) < 1e-10);

        let c = mesh.interpolate(|_| 3.0);
        let v = dual_conjugate_of(&mesh, &c, &w2, &ones, &cfg).unwrap();
        assert!(v.values().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn gamma_mode_needs_gamma() {
        let mesh = build_cube_mesh(1).unwrap();
        let w = x(&mesh, 2, 1.0);
        assert!(PairWeights::new(&mesh, &w, Mode::Gamma, None).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig::default().validate().is_ok());
        let bad = SolverConfig {
            maxit: 0,
            ..SolverConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = SolverConfig {
            tol: -1.0,
            ..SolverConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn mode_names() {
        let m: Mode = serde_json::from_str("\"weighted_w2\"").unwrap();
        assert_eq!(m, Mode::WeightedW2);
        let m: Mode = serde_json::from_str("\"gamma_absw\"").unwrap();
        assert_eq!(m, Mode::GammaAbsw);
    }
}
