//! Structured tetrahedral meshes of the unit cube and the unit ball, with the
//! per-element P1 geometry (volumes and basis gradients) precomputed.

use std::collections::HashMap;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::fields::ScalarField;

pub type Vec3 = Vector3<f64>;

/// Model domains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    /// The open unit cube (0,1)³.
    Cube,
    /// The unit ball centred at the origin.
    Ball,
}

/// A boundary triangle with its owning tetrahedron.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryFace {
    /// Vertex indices, counter-clockwise seen from outside.
    pub nodes: [usize; 3],
    pub tet: usize,
    pub normal: Vec3,
    pub area: f64,
}

/// Constant P1 data of one tetrahedron.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TetGeometry {
    pub volume: f64,
    /// Gradients of the four barycentric basis functions, in local vertex order.
    pub gradients: [Vec3; 4],
}

/// Incidence counts of tetrahedron faces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FaceCounts {
    pub boundary: usize,
    pub interior: usize,
    /// Faces shared by more than two tetrahedra (zero for a valid mesh).
    pub overloaded: usize,
}

/// Immutable tetrahedral mesh.
#[derive(Debug, Clone)]
pub struct Mesh {
    vertices: Vec<Vec3>,
    tets: Vec<[usize; 4]>,
    boundary_faces: Vec<BoundaryFace>,
    geometry: Vec<TetGeometry>,
    domain: Domain,
    level: usize,
}

/// Kuhn subdivision of the unit voxel: one tetrahedron per axis permutation,
/// each walking from `base` to the opposite corner one axis at a time.
const AXIS_PERMUTATIONS: [[usize; 3]; 6] = [
    [0, 1, 2],
    [0, 2, 1],
    [1, 0, 2],
    [1, 2, 0],
    [2, 0, 1],
    [2, 1, 0],
];

fn permutation_is_odd(p: &[usize; 3]) -> bool {
    let mut inversions = 0;
    for a in 0..3 {
        for b in (a + 1)..3 {
            if p[a] > p[b] {
                inversions += 1;
            }
        }
    }
    inversions % 2 == 1
}

/// Tetrahedra of a structured `m`×`m`×`m` grid. With `mirrored`, every voxel's
/// Kuhn diagonal runs from the vertex nearest the grid centre outwards, which
/// keeps the triangulation conforming and symmetric across octants.
fn structured_tets(m: usize, mirrored: bool) -> Vec<[usize; 4]> {
    let idx = |i: usize, j: usize, k: usize| i + (m + 1) * (j + (m + 1) * k);
    let half = m / 2;
    let mut tets = Vec::with_capacity(6 * m * m * m);
    for k in 0..m {
        for j in 0..m {
            for i in 0..m {
                let cell = [i, j, k];
                let mut offset = [0usize; 3];
                let mut flip = [false; 3];
                if mirrored {
                    for a in 0..3 {
                        if cell[a] < half {
                            offset[a] = 1;
                            flip[a] = true;
                        }
                    }
                }
                let reflections = flip.iter().filter(|&&f| f).count();
                for perm in &AXIS_PERMUTATIONS {
                    let mut corner = offset;
                    let mut verts = [0usize; 4];
                    verts[0] = idx(i + corner[0], j + corner[1], k + corner[2]);
                    for (step, &axis) in perm.iter().enumerate() {
                        if flip[axis] {
                            corner[axis] -= 1;
                        } else {
                            corner[axis] += 1;
                        }
                        verts[step + 1] = idx(i + corner[0], j + corner[1], k + corner[2]);
                    }
                    // Orientation of the path tetrahedron is the parity of the
                    // permutation, flipped once per reflected axis.
                    if permutation_is_odd(perm) ^ (reflections % 2 == 1) {
                        verts.swap(1, 2);
                    }
                    tets.push(verts);
                }
            }
        }
    }
    tets
}

fn grid_vertices(m: usize, map: impl Fn(usize) -> f64) -> Vec<Vec3> {
    let mut vertices = Vec::with_capacity((m + 1).pow(3));
    for k in 0..=m {
        for j in 0..=m {
            for i in 0..=m {
                vertices.push(Vec3::new(map(i), map(j), map(k)));
            }
        }
    }
    vertices
}

fn signed_volume(p: &[Vec3; 4]) -> f64 {
    (p[1] - p[0]).cross(&(p[2] - p[0])).dot(&(p[3] - p[0])) / 6.0
}

fn tet_geometry(p: &[Vec3; 4]) -> Result<TetGeometry> {
    let jac = Matrix3::from_columns(&[p[1] - p[0], p[2] - p[0], p[3] - p[0]]);
    let volume = jac.determinant() / 6.0;
    if volume <= 0.0 {
        return Err(Error::Degenerate(format!(
            "tetrahedron with non-positive volume {volume:.3e}"
        )));
    }
    let inv = jac
        .try_inverse()
        .ok_or_else(|| Error::Degenerate("singular tetrahedron".into()))?;
    let g1 = inv.row(0).transpose();
    let g2 = inv.row(1).transpose();
    let g3 = inv.row(2).transpose();
    let g0 = -(g1 + g2 + g3);
    Ok(TetGeometry {
        volume,
        gradients: [g0, g1, g2, g3],
    })
}

impl Mesh {
    fn from_parts(
        vertices: Vec<Vec3>,
        tets: Vec<[usize; 4]>,
        domain: Domain,
        level: usize,
    ) -> Result<Self> {
        let geometry = tets
            .iter()
            .map(|t| tet_geometry(&t.map(|v| vertices[v])))
            .collect::<Result<Vec<_>>>()?;
        let boundary_faces = extract_boundary(&vertices, &tets);
        Ok(Self {
            vertices,
            tets,
            boundary_faces,
            geometry,
            domain,
            level,
        })
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn tets(&self) -> &[[usize; 4]] {
        &self.tets
    }

    pub fn boundary_faces(&self) -> &[BoundaryFace] {
        &self.boundary_faces
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    /// Refinement level the mesh was built with.
    pub fn level(&self) -> usize {
        self.level
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_tets(&self) -> usize {
        self.tets.len()
    }

    pub fn geometry(&self, tet: usize) -> &TetGeometry {
        &self.geometry[tet]
    }

    pub fn volume(&self, tet: usize) -> f64 {
        self.geometry[tet].volume
    }

    pub fn basis_gradients(&self, tet: usize) -> &[Vec3; 4] {
        &self.geometry[tet].gradients
    }

    pub fn signed_volume(&self, tet: usize) -> f64 {
        signed_volume(&self.tets[tet].map(|v| self.vertices[v]))
    }

    pub fn centroid(&self, tet: usize) -> Vec3 {
        self.tets[tet]
            .iter()
            .fold(Vec3::zeros(), |acc, &v| acc + self.vertices[v])
            / 4.0
    }

    pub fn total_volume(&self) -> f64 {
        self.geometry.iter().map(|g| g.volume).sum()
    }

    pub fn surface_area(&self) -> f64 {
        self.boundary_faces.iter().map(|f| f.area).sum()
    }

    /// Σ area · outward normal over the boundary; vanishes for a closed surface.
    pub fn closure_defect(&self) -> Vec3 {
        self.boundary_faces
            .iter()
            .fold(Vec3::zeros(), |acc, f| acc + f.normal * f.area)
    }

    pub fn boundary_node_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.vertices.len()];
        for face in &self.boundary_faces {
            for &v in &face.nodes {
                mask[v] = true;
            }
        }
        mask
    }

    pub fn max_edge_length(&self) -> f64 {
        let mut h: f64 = 0.0;
        for t in &self.tets {
            for a in 0..4 {
                for b in (a + 1)..4 {
                    h = h.max((self.vertices[t[a]] - self.vertices[t[b]]).norm());
                }
            }
        }
        h
    }

    pub fn face_counts(&self) -> FaceCounts {
        let mut counts: HashMap<[usize; 3], usize> = HashMap::new();
        for t in &self.tets {
            for f in local_faces(t) {
                *counts.entry(sorted(f)).or_insert(0) += 1;
            }
        }
        let mut out = FaceCounts {
            boundary: 0,
            interior: 0,
            overloaded: 0,
        };
        for &c in counts.values() {
            match c {
                1 => out.boundary += 1,
                2 => out.interior += 1,
                _ => out.overloaded += 1,
            }
        }
        out
    }

    /// ∫ φ_i over the mesh for every vertex (row sums of the mass matrix).
    pub fn lumped_masses(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.vertices.len()];
        for (t, g) in self.tets.iter().zip(&self.geometry) {
            for &v in t {
                m[v] += 0.25 * g.volume;
            }
        }
        m
    }

    /// Nodal interpolant of `f`.
    pub fn interpolate(&self, f: impl Fn(&Vec3) -> f64) -> ScalarField {
        ScalarField::new(self.vertices.iter().map(f).collect())
    }
}

fn local_faces(t: &[usize; 4]) -> [([usize; 3], usize); 4] {
    [
        ([t[1], t[2], t[3]], t[0]),
        ([t[0], t[2], t[3]], t[1]),
        ([t[0], t[1], t[3]], t[2]),
        ([t[0], t[1], t[2]], t[3]),
    ]
}

fn sorted(face: ([usize; 3], usize)) -> [usize; 3] {
    let mut f = face.0;
    f.sort_unstable();
    f
}

fn extract_boundary(vertices: &[Vec3], tets: &[[usize; 4]]) -> Vec<BoundaryFace> {
    let mut counts: HashMap<[usize; 3], usize> = HashMap::new();
    for t in tets {
        for f in local_faces(t) {
            *counts.entry(sorted(f)).or_insert(0) += 1;
        }
    }
    let mut faces = Vec::new();
    for (tet, t) in tets.iter().enumerate() {
        for f in local_faces(t) {
            if counts[&sorted(f)] != 1 {
                continue;
            }
            let ([a, b, c], opp) = f;
            let (pa, pb, pc) = (vertices[a], vertices[b], vertices[c]);
            let mut n = (pb - pa).cross(&(pc - pa));
            let mut nodes = [a, b, c];
            if n.dot(&(vertices[opp] - pa)) > 0.0 {
                n = -n;
                nodes = [a, c, b];
            }
            let len = n.norm();
            faces.push(BoundaryFace {
                nodes,
                tet,
                normal: n / len,
                area: 0.5 * len,
            });
        }
    }
    faces
}

/// Kuhn-subdivided mesh of (0,1)³ with `n` voxels per axis.
pub fn build_cube_mesh(n: usize) -> Result<Mesh> {
    if n == 0 {
        return Err(Error::InvalidParameter(
            "cube subdivisions must be at least 1".into(),
        ));
    }
    let vertices = grid_vertices(n, |i| i as f64 / n as f64);
    let tets = structured_tets(n, false);
    Mesh::from_parts(vertices, tets, Domain::Cube, n)
}

/// Mesh of the unit ball: a `2n`-per-axis grid of (−1,1)³ with octant-mirrored
/// Kuhn diagonals, radially projected so that the cube surface lands on the
/// sphere (`x ↦ x |x|_∞ / |x|₂`).
pub fn build_ball_mesh(n: usize) -> Result<Mesh> {
    if n == 0 {
        return Err(Error::InvalidParameter(
            "ball refinement level must be at least 1".into(),
        ));
    }
    let m = 2 * n;
    let cube = grid_vertices(m, |i| (2.0 * i as f64 - m as f64) / m as f64);
    let vertices = cube
        .iter()
        .map(|x| {
            let r2 = x.norm();
            if r2 == 0.0 {
                *x
            } else {
                x * (x.amax() / r2)
            }
        })
        .collect();
    let tets = structured_tets(m, true);
    Mesh::from_parts(vertices, tets, Domain::Ball, n)
}

/// Builds the mesh for `domain` at refinement `level`.
pub fn build_mesh(domain: Domain, level: usize) -> Result<Mesh> {
    match domain {
        Domain::Cube => build_cube_mesh(level),
        Domain::Ball => build_ball_mesh(level),
    }
}

/// Per-element gradient of the piecewise-linear interpolant of `field`.
pub fn element_gradients(mesh: &Mesh, field: &ScalarField) -> Result<Vec<Vec3>> {
    check_len(mesh.n_vertices(), field.len())?;
    Ok(element_gradients_unchecked(mesh, field.values()))
}

pub(crate) fn element_gradients_unchecked(mesh: &Mesh, values: &[f64]) -> Vec<Vec3> {
    mesh.tets
        .iter()
        .zip(&mesh.geometry)
        .map(|(t, g)| (0..4).fold(Vec3::zeros(), |acc, a| acc + g.gradients[a] * values[t[a]]))
        .collect()
}
