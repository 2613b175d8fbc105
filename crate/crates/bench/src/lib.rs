//! Shared fixtures for the benchmarks.

use conjpair::fields::{sample_w, Axis, CoefficientField, WSpec};
use conjpair::mesh::{build_cube_mesh, Mesh};
use conjpair::ScalarField;

pub struct Fixture {
    pub mesh: Mesh,
    pub w: ScalarField,
    pub gamma: CoefficientField,
}

/// Cube mesh with `w = x₃` and unit conductivity.
pub fn cube_fixture(n: usize) -> Fixture {
    let mesh = build_cube_mesh(n).expect("mesh");
    let w = sample_w(
        &WSpec::Coordinate {
            axis: Axis::X3,
            offset: 0.0,
        },
        &mesh,
    )
    .expect("w");
    let gamma = CoefficientField::ones(mesh.n_tets());
    Fixture { mesh, w, gamma }
}
