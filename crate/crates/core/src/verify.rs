//! Pointwise identity checks, algebra self-tests and refinement studies.

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::fields::{sample_w, unitarity_report, CoefficientField, ScalarField, WSpec};
use crate::forms::{assemble_det_form, assemble_weighted_stiffness};
use crate::mesh::{build_ball_mesh, build_cube_mesh, element_gradients_unchecked, Mesh, Vec3};
use crate::solver::{conjugate_of, Mode, PairWeights, SolverConfig};
use crate::sparse::norm;

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct IdentityResiduals {
    pub r1: f64,
    pub r2: f64,
    pub r1_abs: f64,
    pub r2_abs: f64,
    pub grad_u: f64,
    pub grad_v: f64,
}

/// L² norms of `a∇u − ∇v∧∇w` and `d∇v − ∇w∧∇u`, with their relative forms.
pub(crate) fn identity_residuals(
    mesh: &Mesh,
    gu: &[Vec3],
    gv: &[Vec3],
    gw: &[Vec3],
    a: &[f64],
    d: &[f64],
) -> IdentityResiduals {
    let (mut s1, mut s2, mut su, mut sv) = (0.0, 0.0, 0.0, 0.0);
    for e in 0..mesh.n_tets() {
        let vol = mesh.volume(e);
        s1 += (gu[e] * a[e] - gv[e].cross(&gw[e])).norm_squared() * vol;
        s2 += (gv[e] * d[e] - gw[e].cross(&gu[e])).norm_squared() * vol;
        su += gu[e].norm_squared() * vol;
        sv += gv[e].norm_squared() * vol;
    }
    let (r1_abs, r2_abs, grad_u, grad_v) = (s1.sqrt(), s2.sqrt(), su.sqrt(), sv.sqrt());
    IdentityResiduals {
        r1: r1_abs / grad_u,
        r2: r2_abs / grad_v,
        r1_abs,
        r2_abs,
        grad_u,
        grad_v,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualReport {
    pub mode: Mode,
    pub r1: f64,
    pub r2: f64,
    pub orth: f64,
    pub det_mean: f64,
    pub norm_gap: f64,
    pub r1_abs: f64,
    pub r2_abs: f64,
    pub orth_abs: f64,
    pub grad_u_norm: f64,
    pub grad_v_norm: f64,
    /// Interior part of `K_a u − Bv`, relative to `‖Bv‖`.
    pub harmonic_u: f64,
    /// Interior part of `K_d v − Bᵀu`, relative to `‖Bᵀu‖`.
    pub harmonic_v: f64,
}

/// `gamma` is only read in [`Mode::Gamma`].
pub fn residual_report(
    mesh: &Mesh,
    u: &ScalarField,
    v: &ScalarField,
    w: &ScalarField,
    gamma: Option<&CoefficientField>,
    mode: Mode,
) -> Result<ResidualReport> {
    let n = mesh.n_vertices();
    check_len(n, u.len())?;
    check_len(n, v.len())?;
    check_len(n, w.len())?;
    let weights = PairWeights::new(mesh, w, mode, gamma)?;
    let gu = element_gradients_unchecked(mesh, u.values());
    let gv = element_gradients_unchecked(mesh, v.values());
    let gw = element_gradients_unchecked(mesh, w.values());
    let id = identity_residuals(mesh, &gu, &gv, &gw, &weights.primal, &weights.dual);
    if id.grad_u == 0.0 {
        return Err(Error::Degenerate("u has zero gradient".into()));
    }
    if id.grad_v == 0.0 {
        return Err(Error::Degenerate("v has zero gradient".into()));
    }
    let (mut orth2, mut det, mut eu, mut ev) = (0.0, 0.0, 0.0, 0.0);
    for e in 0..mesh.n_tets() {
        let vol = mesh.volume(e);
        orth2 += gv[e].dot(&gw[e]).powi(2) * vol;
        det += gu[e].cross(&gv[e]).dot(&gw[e]) * vol;
        eu += weights.primal[e] * gu[e].norm_squared() * vol;
        ev += weights.dual[e] * gv[e].norm_squared() * vol;
    }
    let orth_abs = orth2.sqrt();

    let ka = assemble_weighted_stiffness(mesh, &weights.primal)?;
    let kd = assemble_weighted_stiffness(mesh, &weights.dual)?;
    let b = assemble_det_form(mesh, w)?;
    let boundary = mesh.boundary_node_mask();
    let interior_rel = |lhs: Vec<f64>, rhs: Vec<f64>| {
        let r: Vec<f64> = (0..n)
            .filter(|&i| !boundary[i])
            .map(|i| lhs[i] - rhs[i])
            .collect();
        let s = norm(&rhs);
        if s > 0.0 {
            norm(&r) / s
        } else {
            norm(&r)
        }
    };
    let harmonic_u = interior_rel(ka.apply(u.values()), b.apply(v.values()));
    let harmonic_v = interior_rel(kd.apply(v.values()), b.apply_transpose(u.values()));

    Ok(ResidualReport {
        mode,
        r1: id.r1,
        r2: id.r2,
        orth: orth_abs / id.grad_v,
        det_mean: det / mesh.total_volume(),
        norm_gap: (eu - ev).abs() / eu.max(ev),
        r1_abs: id.r1_abs,
        r2_abs: id.r2_abs,
        orth_abs,
        grad_u_norm: id.grad_u,
        grad_v_norm: id.grad_v,
        harmonic_u,
        harmonic_v,
    })
}

/// Deviations from the orthogonal-basis relations of a conjugate triple.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OrthobasisDeviation {
    /// `(gu·gv, gu·gw, gv·gw)`.
    pub dots: [f64; 3],
    pub gu_sq_minus_det: f64,
    pub gv_sq_minus_det: f64,
}

pub fn orthobasis_check(gu: &Vec3, gv: &Vec3, gw: &Vec3) -> OrthobasisDeviation {
    let det = gu.cross(gv).dot(gw);
    OrthobasisDeviation {
        dots: [gu.dot(gv), gu.dot(gw), gv.dot(gw)],
        gu_sq_minus_det: gu.norm_squared() - det,
        gv_sq_minus_det: gv.norm_squared() - det,
    }
}

/// Raw residuals of the two cross-product identities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VectorIdentityResiduals {
    /// `|v∧w|² + (v·w)² − |v|²|w|²`.
    pub lagrange: f64,
    /// `|w∧(v∧u) − (w·u)v + (w·v)u|`.
    pub triple: f64,
}

pub fn vector_identity_checks(v: &Vec3, w: &Vec3, u: &Vec3) -> VectorIdentityResiduals {
    let lagrange =
        v.cross(w).norm_squared() + v.dot(w).powi(2) - v.norm_squared() * w.norm_squared();
    let triple = (w.cross(&v.cross(u)) - v * w.dot(u) + u * w.dot(v)).norm();
    VectorIdentityResiduals { lagrange, triple }
}

/// Nonnegative exponents summing to one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 3]", into = "[f64; 3]")]
pub struct ExponentTriple([f64; 3]);

impl ExponentTriple {
    pub fn new(alpha: [f64; 3]) -> Result<Self> {
        if alpha.iter().any(|a| !(*a >= 0.0) || !a.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "exponents must be nonnegative, got {alpha:?}"
            )));
        }
        let s: f64 = alpha.iter().sum();
        if (s - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "exponents must sum to 1, got {s}"
            )));
        }
        Ok(Self(alpha))
    }

    pub fn values(&self) -> [f64; 3] {
        self.0
    }
}

impl TryFrom<[f64; 3]> for ExponentTriple {
    type Error = Error;
    fn try_from(a: [f64; 3]) -> Result<Self> {
        Self::new(a)
    }
}

impl From<ExponentTriple> for [f64; 3] {
    fn from(t: ExponentTriple) -> Self {
        t.0
    }
}

/// `‖JJᵀ − diag(det(J)^{2αᵢ})‖_F`.
pub fn relaxed_cr_check(j: &Matrix3<f64>, alpha: &ExponentTriple) -> Result<f64> {
    let det = j.determinant();
    let integral = |a: f64| a == 0.0 || a == 0.5 || a == 1.0;
    if !(det > 0.0) && !alpha.0.iter().all(|&a| integral(a)) {
        return Err(Error::Domain(format!(
            "det(J) = {det} with fractional exponents {:?}",
            alpha.0
        )));
    }
    let power = |a: f64| {
        if integral(a) {
            det.powi((2.0 * a) as i32)
        } else {
            det.powf(2.0 * a)
        }
    };
    let target = Matrix3::from_diagonal(&Vec3::new(
        power(alpha.0[0]),
        power(alpha.0[1]),
        power(alpha.0[2]),
    ));
    Ok((j * j.transpose() - target).norm())
}

pub const DEGENERATE_FACE_TOL: f64 = 1e-10;

/// Face-wise `(∇v_h∧∇w_h)·n` on the boundary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TangentialResidual {
    pub values: Vec<f64>,
    /// `|∇w_h∧n|`.
    pub phi: Vec<f64>,
    pub degenerate: Vec<bool>,
    pub degenerate_count: usize,
    /// Over nondegenerate faces.
    pub max_abs: f64,
    /// Area-weighted, over nondegenerate faces.
    pub rms: f64,
}

pub fn boundary_tangential_residual(
    mesh: &Mesh,
    v: &ScalarField,
    w: &ScalarField,
) -> Result<TangentialResidual> {
    check_len(mesh.n_vertices(), v.len())?;
    check_len(mesh.n_vertices(), w.len())?;
    let faces = mesh.boundary_faces();
    if faces.is_empty() {
        return Err(Error::Degenerate("mesh has no boundary faces".into()));
    }
    let gv = element_gradients_unchecked(mesh, v.values());
    let gw = element_gradients_unchecked(mesh, w.values());
    let mut out = TangentialResidual {
        values: Vec::with_capacity(faces.len()),
        phi: Vec::with_capacity(faces.len()),
        degenerate: Vec::with_capacity(faces.len()),
        degenerate_count: 0,
        max_abs: 0.0,
        rms: 0.0,
    };
    let (mut num, mut area) = (0.0, 0.0);
    for f in faces {
        let r = gv[f.tet].cross(&gw[f.tet]).dot(&f.normal);
        let phi = gw[f.tet].cross(&f.normal).norm();
        let degenerate = phi <= DEGENERATE_FACE_TOL;
        if degenerate {
            out.degenerate_count += 1;
        } else {
            out.max_abs = out.max_abs.max(r.abs());
            num += f.area * r * r;
            area += f.area;
        }
        out.values.push(r);
        out.phi.push(phi);
        out.degenerate.push(degenerate);
    }
    out.rms = if area > 0.0 { (num / area).sqrt() } else { 0.0 };
    Ok(out)
}

/// Refinement studies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvergenceCase {
    /// `v = 2x₁x₂`, `w = x₃`: energy error of `conjugate_of` against the exact
    /// gradient of `x₁² − x₂²`.
    QuadraticPair,
    /// As above, measured against the nodal interpolant of `x₁² − x₂²`.
    QuadraticPairInterpolant,
    /// `v = x₂`, `w = x₃`: exact up to round-off.
    AffinePair,
    /// Largest `||∇w_h| − 1|` for the distance to `(0,0,−2)` on the ball.
    BallUnitarity,
}

impl ConvergenceCase {
    pub fn name(self) -> &'static str {
        match self {
            ConvergenceCase::QuadraticPair => "quadratic_pair",
            ConvergenceCase::QuadraticPairInterpolant => "quadratic_pair_interpolant",
            ConvergenceCase::AffinePair => "affine_pair",
            ConvergenceCase::BallUnitarity => "ball_unitarity",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub level: usize,
    pub h: f64,
    pub error: f64,
    /// Observed order against the previous row.
    pub rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceTable {
    pub case: ConvergenceCase,
    pub rows: Vec<ConvergenceRow>,
    pub monotone: bool,
    /// Least-squares slope of `log error` against `log h`; absent when no rate
    /// is claimed.
    pub slope: Option<f64>,
    pub note: Option<String>,
}

pub const ROUNDOFF_ERROR: f64 = 1e-11;

fn case_error(case: ConvergenceCase, level: usize, cfg: &SolverConfig) -> Result<(f64, f64)> {
    if case == ConvergenceCase::BallUnitarity {
        let mesh = build_ball_mesh(level)?;
        let w = sample_w(
            &WSpec::DistToPoint {
                point: [0.0, 0.0, -2.0],
            },
            &mesh,
        )?;
        return Ok((mesh.max_edge_length(), unitarity_report(&mesh, &w)?.max));
    }
    let mesh = build_cube_mesh(level)?;
    let w = mesh.interpolate(|p| p.z);
    let ones = CoefficientField::ones(mesh.n_tets());
    let err = match case {
        ConvergenceCase::AffinePair => {
            let u = conjugate_of(&mesh, &mesh.interpolate(|p| p.y), &w, &ones, cfg)?;
            gradient_error(&mesh, &u, |_| Vec3::new(1.0, 0.0, 0.0))
        }
        ConvergenceCase::QuadraticPair => {
            let v = mesh.interpolate(|p| 2.0 * p.x * p.y);
            let u = conjugate_of(&mesh, &v, &w, &ones, cfg)?;
            gradient_error(&mesh, &u, |p| Vec3::new(2.0 * p.x, -2.0 * p.y, 0.0))
        }
        ConvergenceCase::QuadraticPairInterpolant => {
            let v = mesh.interpolate(|p| 2.0 * p.x * p.y);
            let u = conjugate_of(&mesh, &v, &w, &ones, cfg)?;
            let exact = mesh.interpolate(|p| p.x * p.x - p.y * p.y);
            let gu = element_gradients_unchecked(&mesh, u.values());
            let ge = element_gradients_unchecked(&mesh, exact.values());
            (0..mesh.n_tets())
                .map(|e| (gu[e] - ge[e]).norm_squared() * mesh.volume(e))
                .sum::<f64>()
                .sqrt()
        }
        ConvergenceCase::BallUnitarity => unreachable!(),
    };
    Ok((mesh.max_edge_length(), err))
}

/// `‖∇u_h − g‖_{L²}` for an affine vector field `g`, integrated exactly.
pub fn gradient_error(mesh: &Mesh, u: &ScalarField, g: impl Fn(&Vec3) -> Vec3) -> f64 {
    let gu = element_gradients_unchecked(mesh, u.values());
    let verts = mesh.vertices();
    let mut total = 0.0;
    for (e, t) in mesh.tets().iter().enumerate() {
        let d: Vec<Vec3> = t.iter().map(|&i| gu[e] - g(&verts[i])).collect();
        let sum: Vec3 = d.iter().sum();
        let sq: f64 = d.iter().map(|x| x.norm_squared()).sum();
        total += mesh.volume(e) / 20.0 * (sq + sum.norm_squared());
    }
    total.sqrt()
}

pub fn convergence_study(
    case: ConvergenceCase,
    levels: &[usize],
    cfg: &SolverConfig,
) -> Result<ConvergenceTable> {
    if levels.len() < 3 {
        return Err(Error::InvalidParameter(format!(
            "convergence study needs at least 3 levels, got {}",
            levels.len()
        )));
    }
    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(levels.len());
    for &level in levels {
        let (h, error) = case_error(case, level, cfg)?;
        let rate = rows.last().and_then(|p: &ConvergenceRow| {
            (p.error > 0.0 && error > 0.0 && p.h != h)
                .then(|| (error / p.error).ln() / (h / p.h).ln())
        });
        rows.push(ConvergenceRow {
            level,
            h,
            error,
            rate,
        });
    }
    let monotone = rows.windows(2).all(|p| p[1].error < p[0].error);
    let roundoff = rows.iter().all(|r| r.error <= ROUNDOFF_ERROR);
    let (slope, note) = if roundoff {
        (
            None,
            Some("errors at round-off level; no rate claimed".to_string()),
        )
    } else if !monotone {
        (
            None,
            Some("error sequence not monotone; no rate claimed".to_string()),
        )
    } else {
        (Some(least_squares_slope(&rows)), None)
    };
    Ok(ConvergenceTable {
        case,
        rows,
        monotone,
        slope,
        note,
    })
}

fn least_squares_slope(rows: &[ConvergenceRow]) -> f64 {
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.h.ln(), r.error.ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn case_names_match_serde() {
        for case in [
            ConvergenceCase::QuadraticPair,
            ConvergenceCase::QuadraticPairInterpolant,
            ConvergenceCase::AffinePair,
            ConvergenceCase::BallUnitarity,
        ] {
            let json = serde_json::to_string(&case).unwrap();
            assert_eq!(json, format!("\"{}\"", case.name()));
        }
    }

    fn e(i: usize) -> Vec3 {
        let mut v = Vec3::zeros();
        v[i] = 1.0;
        v
    }

    #[test]
    fn coordinate_triple_is_exact() {
        let mesh = build_cube_mesh(3).unwrap();
        let u = mesh.interpolate(|p| p.x);
        let v = mesh.interpolate(|p| p.y);
        let w = mesh.interpolate(|p| p.z);
        let r = residual_report(&mesh, &u, &v, &w, None, Mode::Unitary).unwrap();
        for x in [r.r1, r.r2, r.orth, r.norm_gap, r.harmonic_u, r.harmonic_v] {
            assert!(x <= 1e-13, "{r:?}");
        }
        assert!((r.det_mean - 1.0).abs() < 1e-13);
    }

    #[test]
    fn weighted_triple_is_exact() {
        let mesh = build_cube_mesh(3).unwrap();
        let u = mesh.interpolate(|p| 2.0 * p.x);
        let v = mesh.interpolate(|p| p.y);
        let w = mesh.interpolate(|p| 2.0 * p.z);
        let r = residual_report(&mesh, &u, &v, &w, None, Mode::WeightedW2).unwrap();
        assert!(r.r1 <= 1e-13 && r.r2 <= 1e-13, "{r:?}");
    }

    #[test]
    fn mismatched_pair_gives_sqrt2() {
        let mesh = build_cube_mesh(2).unwrap();
        let u = mesh.interpolate(|p| p.x);
        let w = mesh.interpolate(|p| p.z);
        let r = residual_report(&mesh, &u, &u, &w, None, Mode::Unitary).unwrap();
        assert!((r.r1 - 2f64.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn residual_is_sensitive_to_perturbation() {
        let mesh = build_cube_mesh(2).unwrap();
        let u = mesh.interpolate(|p| p.x);
        let w = mesh.interpolate(|p| p.z);
        let r = |eps: f64| {
            let v = mesh.interpolate(|p| p.y + eps * p.x);
            residual_report(&mesh, &u, &v, &w, None, Mode::Unitary)
                .unwrap()
                .r1
        };
        let (a, b) = (r(1e-3), r(2e-3));
        assert!(a > 0.0 && (b / a - 2.0).abs() < 1e-6);
    }

    #[test]
    fn zero_field_is_degenerate() {
        let mesh = build_cube_mesh(2).unwrap();
        let z = ScalarField::zeros(mesh.n_vertices());
        let w = mesh.interpolate(|p| p.z);
        assert!(matches!(
            residual_report(&mesh, &z, &w, &w, None, Mode::Unitary),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn orthobasis_examples() {
        let d = orthobasis_check(&e(0), &e(1), &e(2));
        assert_eq!(d.dots, [0.0; 3]);
        assert_eq!((d.gu_sq_minus_det, d.gv_sq_minus_det), (0.0, 0.0));
        let d = orthobasis_check(&(2.0 * e(0)), &(2.0 * e(1)), &e(2));
        assert_eq!((d.gu_sq_minus_det, d.gv_sq_minus_det), (0.0, 0.0));
        let d = orthobasis_check(&e(0), &e(1), &(2.0 * e(2)));
        assert_eq!(d.gu_sq_minus_det, -1.0);
    }

    #[test]
    fn vector_identity_examples() {
        let v = Vec3::new(0.3, -1.2, 2.0);
        assert!(vector_identity_checks(&v, &v, &e(0)).lagrange.abs() < 1e-14);
        let r = vector_identity_checks(&e(1), &e(2), &e(0));
        assert_eq!(r.triple, 0.0);
    }

    #[test]
    fn exponent_validation() {
        assert!(ExponentTriple::new([0.5, 0.5, 0.0]).is_ok());
        assert!(ExponentTriple::new([0.5, 0.6, 0.0]).is_err());
        assert!(ExponentTriple::new([1.5, -0.5, 0.0]).is_err());
    }

    #[test]
    fn relaxed_cr_examples() {
        let half = ExponentTriple::new([0.5, 0.5, 0.0]).unwrap();
        let third = ExponentTriple::new([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]).unwrap();
        assert_eq!(relaxed_cr_check(&Matrix3::identity(), &half).unwrap(), 0.0);
        let j = Matrix3::from_diagonal(&Vec3::new(2.0, 2.0, 1.0));
        assert_eq!(relaxed_cr_check(&j, &half).unwrap(), 0.0);
        let j = Matrix3::from_diagonal(&Vec3::new(1.0, 2.0, 3.0));
        assert!((relaxed_cr_check(&j, &half).unwrap() - 93f64.sqrt()).abs() < 1e-12);
        let j = Matrix3::identity() * 2.0;
        assert!(relaxed_cr_check(&j, &third).unwrap() < 1e-14);
    }

    #[test]
    fn relaxed_cr_domain() {
        let third = ExponentTriple::new([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]).unwrap();
        let half = ExponentTriple::new([0.5, 0.5, 0.0]).unwrap();
        let j = Matrix3::from_diagonal(&Vec3::new(-1.0, 1.0, 1.0));
        assert!(matches!(
            relaxed_cr_check(&j, &third),
            Err(Error::Domain(_))
        ));
        assert!(relaxed_cr_check(&j, &half).is_ok());
    }

    #[test]
    fn tangential_coordinate_case() {
        let mesh = build_cube_mesh(2).unwrap();
        let v = mesh.interpolate(|p| p.y);
        let w = mesh.interpolate(|p| p.z);
        let t = boundary_tangential_residual(&mesh, &v, &w).unwrap();
        for (k, f) in mesh.boundary_faces().iter().enumerate() {
            let n = f.normal;
            if n.z.abs() > 0.5 {
                assert!(t.degenerate[k]);
                assert!(t.values[k].abs() < 1e-14);
            } else if n.x.abs() > 0.5 {
                assert!((t.values[k] - n.x.signum()).abs() < 1e-14);
            }
        }
        assert_eq!(t.degenerate_count, 16);
        assert!((t.max_abs - 1.0).abs() < 1e-14);
    }

    #[test]
    fn tangential_residual_of_function_of_w_refines() {
        let res = |n| {
            let mesh = build_ball_mesh(n).unwrap();
            let w = sample_w(
                &WSpec::DistToPoint {
                    point: [0.0, 0.0, -2.0],
                },
                &mesh,
            )
            .unwrap();
            let v = ScalarField::new(w.values().iter().map(|x| 0.5 * x * x).collect());
            boundary_tangential_residual(&mesh, &v, &w).unwrap().rms
        };
        let (a, b) = (res(2), res(4));
        assert!(b < a, "{a} {b}");
    }

    #[test]
    fn gradient_error_is_exact_for_affine_difference() {
        let mesh = build_cube_mesh(2).unwrap();
        let u = ScalarField::zeros(mesh.n_vertices());
        // ∫|(x₁,0,0)|² over the unit cube is 1/3.
        let err = gradient_error(&mesh, &u, |p| Vec3::new(p.x, 0.0, 0.0));
        assert!((err * err - 1.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn convergence_needs_three_levels() {
        assert!(convergence_study(
            ConvergenceCase::AffinePair,
            &[2, 4],
            &SolverConfig::default()
        )
        .is_err());
    }

    #[test]
    fn affine_convergence_claims_no_rate() {
        let t = convergence_study(
            ConvergenceCase::AffinePair,
            &[2, 3, 4],
            &SolverConfig::default(),
        )
        .unwrap();
        assert!(t.slope.is_none());
        assert!(t.rows.iter().all(|r| r.error < ROUNDOFF_ERROR));
    }

    #[test]
    fn quadratic_pair_rate_near_one() {
        let t = convergence_study(
            ConvergenceCase::QuadraticPair,
            &[4, 8, 16],
            &SolverConfig::default(),
        )
        .unwrap();
        let s = t.slope.unwrap();
        assert!((0.8..=1.2).contains(&s), "{t:?}");
    }

    fn vec3() -> impl Strategy<Value = Vec3> {
        (-10.0..10.0f64, -10.0..10.0f64, -10.0..10.0f64).prop_map(|(a, b, c)| Vec3::new(a, b, c))
    }

    fn rotation() -> impl Strategy<Value = Matrix3<f64>> {
        (vec3(), 0.0..std::f64::consts::TAU).prop_map(|(axis, angle)| {
            let axis = if axis.norm() < 1e-3 { Vec3::x() } else { axis };
            *nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle)
                .matrix()
        })
    }

    proptest! {
        #[test]
        fn identities_hold(v in vec3(), w in vec3(), u in vec3()) {
            let r = vector_identity_checks(&v, &w, &u);
            let s1 = (v.norm_squared() * w.norm_squared()).max(1e-300);
            let s2 = (w.norm() * v.norm() * u.norm()).max(1e-300);
            prop_assert!(r.lagrange.abs() / s1 <= 1e-12);
            prop_assert!(r.triple / s2 <= 1e-12);
        }

        #[test]
        fn conformal_family(c in 0.1..5.0f64, r in rotation()) {
            let third = ExponentTriple::new([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]).unwrap();
            let res = relaxed_cr_check(&(r * c), &third).unwrap();
            prop_assert!(res <= 1e-12 * c * c, "{}", res);
        }

        #[test]
        fn orthobasis_frame_indifference(a in vec3(), b in vec3(), c in vec3(), r in rotation()) {
            let d0 = orthobasis_check(&a, &b, &c);
            let d1 = orthobasis_check(&(r * a), &(r * b), &(r * c));
            let scale = (a.norm() * b.norm() * c.norm()).max(a.norm_squared()).max(b.norm_squared()).max(1.0);
            for k in 0..3 {
                prop_assert!((d0.dots[k] - d1.dots[k]).abs() <= 1e-12 * scale);
            }
            prop_assert!((d0.gu_sq_minus_det - d1.gu_sq_minus_det).abs() <= 1e-12 * scale);
            prop_assert!((d0.gv_sq_minus_det - d1.gv_sq_minus_det).abs() <= 1e-12 * scale);
        }
    }
}
