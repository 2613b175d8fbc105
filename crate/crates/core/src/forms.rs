//! Exact P1 assembly of the stiffness, determinant-coupling and cross-product
//! load forms. Every integrand is constant per element, so no quadrature is
//! involved.

use crate::error::{check_len, Error, Result};
use crate::fields::{CoefficientField, ScalarField};
use crate::mesh::{element_gradients_unchecked, Mesh, Vec3};
use crate::sparse::{CsrMatrix, SparseForm, Symmetry};

/// `K_ij = Σ_e weight_e ∇φ_i·∇φ_j |e|`.
pub fn assemble_stiffness(mesh: &Mesh, weight: &CoefficientField) -> Result<SparseForm> {
    check_len(mesh.n_tets(), weight.len())?;
    assemble_weighted_stiffness(mesh, weight.values())
}

pub(crate) fn assemble_weighted_stiffness(mesh: &Mesh, weight: &[f64]) -> Result<SparseForm> {
    check_len(mesh.n_tets(), weight.len())?;
    let mut triplets = Vec::with_capacity(16 * mesh.n_tets());
    for (e, t) in mesh.tets().iter().enumerate() {
        let we = weight[e];
        if !(we > 0.0) || !we.is_finite() {
            return Err(Error::BoundViolation {
                element: e,
                value: we,
                lower: 0.0,
                upper: f64::INFINITY,
            });
        }
        let g = mesh.basis_gradients(e);
        let vol = mesh.volume(e);
        for a in 0..4 {
            for b in 0..4 {
                triplets.push((t[a], t[b], we * (g[a].dot(&g[b]) * vol)));
            }
        }
    }
    let n = mesh.n_vertices();
    Ok(SparseForm {
        matrix: CsrMatrix::from_triplets(n, n, triplets),
        symmetry: Symmetry::Symmetric,
    })
}

/// Skew form `B_ij = ∫ ∇φ_i·(∇φ_j ∧ ∇w_h)`, so that `uᵀBv = ∫ det(∇u_h, ∇v_h, ∇w_h)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DetForm {
    pub form: SparseForm,
}

impl DetForm {
    pub fn matrix(&self) -> &CsrMatrix {
        &self.form.matrix
    }

    /// `Bv`, the weak pairing `∫(∇v∧∇w)·∇φ_i`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        self.form.matrix.mul_vec(v)
    }

    /// `Bᵀu`, the weak pairing `∫(∇w∧∇u)·∇φ_i`.
    pub fn apply_transpose(&self, u: &[f64]) -> Vec<f64> {
        self.form.matrix.tr_mul_vec(u)
    }

    /// `uᵀBv`.
    pub fn pairing(&self, u: &[f64], v: &[f64]) -> f64 {
        self.form.matrix.bilinear(u, v)
    }
}

pub fn assemble_det_form(mesh: &Mesh, w: &ScalarField) -> Result<DetForm> {
    check_len(mesh.n_vertices(), w.len())?;
    let gw = element_gradients_unchecked(mesh, w.values());
    let mut triplets = Vec::with_capacity(12 * mesh.n_tets());
    for (e, t) in mesh.tets().iter().enumerate() {
        let g = mesh.basis_gradients(e);
        let vol = mesh.volume(e);
        for a in 0..4 {
            for b in 0..4 {
                if a == b {
                    continue;
                }
                // (g_a × g_b)·g_w flips sign bit-exactly when a and b swap.
                triplets.push((t[a], t[b], g[a].cross(&g[b]).dot(&gw[e]) * vol));
            }
        }
    }
    let n = mesh.n_vertices();
    Ok(DetForm {
        form: SparseForm {
            matrix: CsrMatrix::from_triplets(n, n, triplets),
            symmetry: Symmetry::Skew,
        },
    })
}

/// `f_i = Σ_e c_e·∇φ_i |e|` for a piecewise-constant vector field `c`.
pub fn gradient_load(mesh: &Mesh, per_element: &[Vec3]) -> Result<Vec<f64>> {
    check_len(mesh.n_tets(), per_element.len())?;
    let mut f = vec![0.0; mesh.n_vertices()];
    for (e, t) in mesh.tets().iter().enumerate() {
        let g = mesh.basis_gradients(e);
        let vol = mesh.volume(e);
        for a in 0..4 {
            f[t[a]] += per_element[e].dot(&g[a]) * vol;
        }
    }
    Ok(f)
}

fn cross_field(mesh: &Mesh, v: &ScalarField, w: &ScalarField) -> Result<Vec<Vec3>> {
    check_len(mesh.n_vertices(), v.len())?;
    check_len(mesh.n_vertices(), w.len())?;
    let gv = element_gradients_unchecked(mesh, v.values());
    let gw = element_gradients_unchecked(mesh, w.values());
    Ok(gv.iter().zip(&gw).map(|(a, b)| a.cross(b)).collect())
}

/// `f_i = sign·∫(∇v_h∧∇w_h)·∇φ_i`.
pub fn assemble_cross_load(
    mesh: &Mesh,
    v: &ScalarField,
    w: &ScalarField,
    sign: f64,
) -> Result<Vec<f64>> {
    let c: Vec<Vec3> = cross_field(mesh, v, w)?
        .into_iter()
        .map(|x| x * sign)
        .collect();
    gradient_load(mesh, &c)
}

/// Largest interior weak divergence of `∇v_h∧∇w_h`, normalised by the matching
/// Hölder bound `max_i Σ_e |c_e||∇φ_i||e|`. Zero for a constant cross field.
pub fn weak_divergence_residual(mesh: &Mesh, v: &ScalarField, w: &ScalarField) -> Result<f64> {
    let c = cross_field(mesh, v, w)?;
    let mut pairing = vec![0.0; mesh.n_vertices()];
    let mut bound = vec![0.0; mesh.n_vertices()];
    for (e, t) in mesh.tets().iter().enumerate() {
        let g = mesh.basis_gradients(e);
        let vol = mesh.volume(e);
        for a in 0..4 {
            pairing[t[a]] += c[e].dot(&g[a]) * vol;
            bound[t[a]] += c[e].norm() * g[a].norm() * vol;
        }
    }
    let boundary = mesh.boundary_node_mask();
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for i in 0..mesh.n_vertices() {
        if boundary[i] {
            continue;
        }
        worst = worst.max(pairing[i].abs());
        scale = scale.max(bound[i]);
    }
    Ok(if scale == 0.0 { 0.0 } else { worst / scale })
}

/// Mass-lumped load `f_i = g_i ∫φ_i` of a nodal function.
pub fn lumped_load(mesh: &Mesh, g: &ScalarField) -> Result<Vec<f64>> {
    check_len(mesh.n_vertices(), g.len())?;
    Ok(mesh
        .lumped_masses()
        .iter()
        .zip(g.values())
        .map(|(m, v)| m * v)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_cube_mesh;

    #[test]
    fn single_tet_rows_sum_to_zero() {
        let mesh = build_cube_mesh(1).unwrap();
        let k = assemble_stiffness(&mesh, &CoefficientField::ones(mesh.n_tets())).unwrap();
        for s in k.matrix.row_sums() {
            assert!(s.abs() < 1e-12);
        }
        assert_eq!(k.matrix.max_symmetry_defect(1.0), 0.0);
    }

    #[test]
    fn stiffness_energy_of_coordinate() {
        let mesh = build_cube_mesh(2).unwrap();
        let k = assemble_stiffness(&mesh, &CoefficientField::ones(mesh.n_tets())).unwrap();
        let x1 = mesh.interpolate(|x| x.x);
        assert!((k.energy(x1.values()) - 1.0).abs() < 1e-13);
    }

    #[test]
    fn stiffness_is_linear_in_weight() {
        let mesh = build_cube_mesh(2).unwrap();
        let k1 = assemble_stiffness(&mesh, &CoefficientField::ones(mesh.n_tets())).unwrap();
        let k3 = assemble_stiffness(
            &mesh,
            &CoefficientField::constant(mesh.n_tets(), 3.0).unwrap(),
        )
        .unwrap();
        for ((r, c, a), (_, _, b)) in k1.matrix.triplets().zip(k3.matrix.triplets()) {
            assert!((3.0 * a - b).abs() <= 1e-15 * b.abs().max(1.0), "{r},{c}");
        }
    }

    #[test]
    fn nonpositive_weight_rejected() {
        let mesh = build_cube_mesh(1).unwrap();
        let mut w = vec![1.0; mesh.n_tets()];
        w[3] = 0.0;
        assert!(matches!(
            assemble_weighted_stiffness(&mesh, &w),
            Err(Error::BoundViolation { element: 3, .. })
        ));
    }

    #[test]
    fn det_form_on_coordinates() {
        let mesh = build_cube_mesh(2).unwrap();
        let w = mesh.interpolate(|x| x.z);
        let b = assemble_det_form(&mesh, &w).unwrap();
        let x1 = mesh.interpolate(|x| x.x);
        let x2 = mesh.interpolate(|x| x.y);
        assert!((b.pairing(x1.values(), x2.values()) - 1.0).abs() < 1e-13);
        assert!((b.pairing(x2.values(), x1.values()) + 1.0).abs() < 1e-13);
        assert_eq!(b.pairing(x1.values(), x1.values()).abs(), 0.0);
        assert_eq!(b.matrix().max_symmetry_defect(-1.0), 0.0);
    }

    #[test]
    fn det_form_kills_constants() {
        let mesh = build_cube_mesh(3).unwrap();
        let w = mesh.interpolate(|x| (x.x * x.y + x.z).sin());
        let b = assemble_det_form(&mesh, &w).unwrap();
        let ones = vec![1.0; mesh.n_vertices()];
        assert!(b.apply(&ones).iter().all(|v| v.abs() < 1e-13));
        assert!(b.apply_transpose(&ones).iter().all(|v| v.abs() < 1e-13));
    }

    #[test]
    fn cross_load_of_coordinate_pair() {
        let mesh = build_cube_mesh(3).unwrap();
        let v = mesh.interpolate(|x| x.y);
        let w = mesh.interpolate(|x| x.z);
        let f = assemble_cross_load(&mesh, &v, &w, 1.0).unwrap();
        let expected =
            gradient_load(&mesh, &vec![Vec3::new(1.0, 0.0, 0.0); mesh.n_tets()]).unwrap();
        for (a, b) in f.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-14);
        }
        assert!(f.iter().sum::<f64>().abs() < 1e-13);
        let constant = mesh.interpolate(|_| 2.5);
        let zero = assemble_cross_load(&mesh, &constant, &w, 1.0).unwrap();
        assert!(zero.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn weak_divergence_cases() {
        let mesh = build_cube_mesh(4).unwrap();
        let w = mesh.interpolate(|x| x.z);
        let v = mesh.interpolate(|x| x.y);
        assert!(weak_divergence_residual(&mesh, &v, &w).unwrap() < 1e-14);
        assert_eq!(weak_divergence_residual(&mesh, &w, &w).unwrap(), 0.0);
    }

    #[test]
    fn weak_divergence_vanishes_for_nonlinear_fields() {
        let mesh = build_cube_mesh(5).unwrap();
        let w = mesh.interpolate(|x| (x.z * x.x).exp());
        let v = mesh.interpolate(|x| 2.0 * x.x * x.y + x.z.sin());
        assert!(weak_divergence_residual(&mesh, &v, &w).unwrap() < 1e-13);
    }
}
