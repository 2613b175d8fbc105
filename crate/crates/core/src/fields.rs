//! Nodal scalar fields, the closed-form unitary-gradient fields `w`, and
//! piecewise-constant conductivities.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::mesh::{element_gradients_unchecked, Domain, Mesh, Vec3};

/// Default bound `C` in `C ≤ γ ≤ 1/C`.
pub const DEFAULT_BOUND: f64 = 0.1;

/// Coefficients of a piecewise-linear function, one per mesh vertex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ScalarField(Vec<f64>);

impl ScalarField {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// ∫_Ω f dx / |Ω|.
    pub fn integral_mean(&self, mesh: &Mesh) -> f64 {
        let masses = mesh.lumped_masses();
        let total: f64 = masses.iter().sum();
        masses.iter().zip(&self.0).map(|(m, v)| m * v).sum::<f64>() / total
    }

    /// Copy shifted to zero integral mean.
    pub fn mean_zero(&self, mesh: &Mesh) -> Self {
        let mean = self.integral_mean(mesh);
        Self(self.0.iter().map(|v| v - mean).collect())
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self(self.0.iter().map(|v| v * factor).collect())
    }

    pub fn max_abs_diff(&self, other: &ScalarField) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl From<Vec<f64>> for ScalarField {
    fn from(values: Vec<f64>) -> Self {
        Self(values)
    }
}

/// Coordinate axis x₁, x₂ or x₃.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X1,
    X2,
    X3,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X1 => 0,
            Axis::X2 => 1,
            Axis::X3 => 2,
        }
    }
}

/// Description of the field `w`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WSpec {
    /// `w = x_axis + offset`.
    Coordinate {
        axis: Axis,
        #[serde(default)]
        offset: f64,
    },
    /// `w = |x − point|`.
    DistToPoint { point: [f64; 3] },
    /// Distance to the line through `point` along `direction`.
    DistToAxis {
        point: [f64; 3],
        direction: [f64; 3],
    },
    /// Explicit nodal values.
    Nodal { values: Vec<f64> },
}

impl WSpec {
    fn evaluate(&self, x: &Vec3) -> f64 {
        match self {
            WSpec::Coordinate { axis, offset } => x[axis.index()] + offset,
            WSpec::DistToPoint { point } => (x - Vec3::from(*point)).norm(),
            WSpec::DistToAxis { point, direction } => {
                let d = Vec3::from(*direction).normalize();
                let r = x - Vec3::from(*point);
                (r - d * r.dot(&d)).norm()
            }
            WSpec::Nodal { .. } => unreachable!("nodal specs are not evaluated pointwise"),
        }
    }
}

fn point_in_closed_domain(domain: Domain, p: &Vec3) -> bool {
    match domain {
        Domain::Cube => p.iter().all(|&c| (0.0..=1.0).contains(&c)),
        Domain::Ball => p.norm() <= 1.0,
    }
}

fn line_meets_closed_domain(domain: Domain, a: &Vec3, d: &Vec3) -> bool {
    match domain {
        Domain::Ball => (a - d * a.dot(d)).norm() <= 1.0,
        Domain::Cube => {
            let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
            for k in 0..3 {
                if d[k] == 0.0 {
                    if !(0.0..=1.0).contains(&a[k]) {
                        return false;
                    }
                } else {
                    let t0 = (0.0 - a[k]) / d[k];
                    let t1 = (1.0 - a[k]) / d[k];
                    lo = lo.max(t0.min(t1));
                    hi = hi.min(t0.max(t1));
                }
            }
            lo <= hi
        }
    }
}

/// Samples `spec` at the mesh vertices.
pub fn sample_w(spec: &WSpec, mesh: &Mesh) -> Result<ScalarField> {
    match spec {
        WSpec::Nodal { values } => {
            check_len(mesh.n_vertices(), values.len())?;
            return Ok(ScalarField::new(values.clone()));
        }
        WSpec::Coordinate { .. } => {}
        WSpec::DistToPoint { point } => {
            if point_in_closed_domain(mesh.domain(), &Vec3::from(*point)) {
                return Err(Error::InvalidSpec(format!(
                    "reference point {point:?} lies in the closed domain"
                )));
            }
        }
        WSpec::DistToAxis { point, direction } => {
            let d = Vec3::from(*direction);
            if d.norm() == 0.0 {
                return Err(Error::InvalidSpec("axis direction is zero".into()));
            }
            if line_meets_closed_domain(mesh.domain(), &Vec3::from(*point), &d.normalize()) {
                return Err(Error::InvalidSpec(format!(
                    "axis through {point:?} meets the closed domain"
                )));
            }
        }
    }
    Ok(mesh.interpolate(|x| spec.evaluate(x)))
}

/// Deviation of the discrete gradient norm from one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UnitarityReport {
    pub max: f64,
    pub mean: f64,
}

pub fn unitarity_report(mesh: &Mesh, w: &ScalarField) -> Result<UnitarityReport> {
    check_len(mesh.n_vertices(), w.len())?;
    let devs: Vec<f64> = element_gradients_unchecked(mesh, w.values())
        .iter()
        .map(|g| (g.norm() - 1.0).abs())
        .collect();
    let max = devs.iter().copied().fold(0.0, f64::max);
    let mean = devs.iter().sum::<f64>() / devs.len() as f64;
    Ok(UnitarityReport { max, mean })
}

/// Piecewise-constant positive coefficient, one value per tetrahedron.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoefficientField {
    values: Vec<f64>,
    bound: f64,
}

impl CoefficientField {
    /// Validates `bound ≤ γ_e ≤ 1/bound` for every element.
    pub fn new(values: Vec<f64>, bound: f64) -> Result<Self> {
        if !(bound > 0.0 && bound <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "coefficient bound {bound} outside (0, 1]"
            )));
        }
        let (lower, upper) = (bound, 1.0 / bound);
        for (element, &value) in values.iter().enumerate() {
            if !(value >= lower && value <= upper) {
                return Err(Error::BoundViolation {
                    element,
                    value,
                    lower,
                    upper,
                });
            }
        }
        Ok(Self { values, bound })
    }

    pub fn constant(n_tets: usize, value: f64) -> Result<Self> {
        let bound = DEFAULT_BOUND.min(value).min(1.0 / value);
        Self::new(vec![value; n_tets], bound)
    }

    pub fn ones(n_tets: usize) -> Self {
        Self {
            values: vec![1.0; n_tets],
            bound: DEFAULT_BOUND,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Elementwise `1/γ`; the symmetric bound carries over.
    pub fn reciprocal(&self) -> Self {
        Self {
            values: self.values.iter().map(|g| 1.0 / g).collect(),
            bound: self.bound,
        }
    }

    /// `k·γ`, with the bound widened if needed.
    pub fn scaled(&self, k: f64) -> Result<Self> {
        let values: Vec<f64> = self.values.iter().map(|g| k * g).collect();
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(0.0, f64::max);
        Self::new(values, self.bound.min(lo).min(1.0 / hi))
    }
}

/// Recipes for conductivities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GammaSpec {
    Constant {
        value: f64,
    },
    /// `inside` on elements whose centroid satisfies `|x − center| < radius`.
    TwoPhase {
        center: [f64; 3],
        radius: f64,
        inside: f64,
        outside: f64,
    },
    /// `below` on elements whose centroid has `x_axis < offset`, else `above`.
    HalfSpace {
        axis: Axis,
        offset: f64,
        below: f64,
        above: f64,
    },
    /// `|∇w_h|` per element.
    AbsGradW,
    /// `|∇w_h|²` per element.
    AbsGradWSquared,
}

pub fn make_gamma(
    spec: &GammaSpec,
    mesh: &Mesh,
    w: Option<&ScalarField>,
    bound: f64,
) -> Result<CoefficientField> {
    let values = match spec {
        GammaSpec::Constant { value } => vec![*value; mesh.n_tets()],
        GammaSpec::TwoPhase {
            center,
            radius,
            inside,
            outside,
        } => {
            let c = Vec3::from(*center);
            (0..mesh.n_tets())
                .map(|e| {
                    if (mesh.centroid(e) - c).norm() < *radius {
                        *inside
                    } else {
                        *outside
                    }
                })
                .collect()
        }
        GammaSpec::HalfSpace {
            axis,
            offset,
            below,
            above,
        } => (0..mesh.n_tets())
            .map(|e| {
                if mesh.centroid(e)[axis.index()] < *offset {
                    *below
                } else {
                    *above
                }
            })
            .collect(),
        GammaSpec::AbsGradW | GammaSpec::AbsGradWSquared => {
            let w = w.ok_or_else(|| {
                Error::InvalidSpec("gradient-based conductivity needs a field w".into())
            })?;
            check_len(mesh.n_vertices(), w.len())?;
            let squared = matches!(spec, GammaSpec::AbsGradWSquared);
            element_gradients_unchecked(mesh, w.values())
                .iter()
                .map(|g| if squared { g.norm_squared() } else { g.norm() })
                .collect()
        }
    };
    CoefficientField::new(values, bound)
}
