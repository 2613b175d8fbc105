use std::fs;
use std::path::{Path, PathBuf};

use conjpair::dtn::{dtn_experiment, DtnExperiment, DtnMatrix};
use conjpair::fields::{make_gamma, sample_w, unitarity_report, UnitarityReport};
use conjpair::forms::weak_divergence_residual;
use conjpair::io::{
    convergence_csv, dense_csv, matrix_market_dense, read_vtk, to_json_string, write_vtk,
};
use conjpair::mesh::build_mesh;
use conjpair::solver::{alternating_pair_solve, default_v0};
use conjpair::verify::{
    boundary_tangential_residual, convergence_study, relaxed_cr_check, residual_report,
    ConvergenceTable, ExponentTriple, ResidualReport,
};
use conjpair::{CoefficientField, Domain, Mesh, Mode, PairSolveReport, ScalarField};
use nalgebra::Matrix3;
use serde::Serialize;

use crate::config::{CheckCrSection, RunConfig, V0Spec};
use crate::CliError;

/// Where a command wrote its artifacts and whether it fully succeeded.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub summary: String,
    pub converged: bool,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.converged {
            0
        } else {
            3
        }
    }
}

fn write(path: PathBuf, contents: &str, files: &mut Vec<PathBuf>) -> Result<(), CliError> {
    fs::write(&path, contents).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    files.push(path);
    Ok(())
}

fn prepare_out(out: &Path) -> Result<(), CliError> {
    fs::create_dir_all(out).map_err(|e| CliError::Io(format!("{}: {e}", out.display())))
}

#[derive(Debug, Clone, Serialize)]
pub struct MeshStats {
    pub domain: Domain,
    pub level: usize,
    pub vertices: usize,
    pub tets: usize,
    pub boundary_faces: usize,
    pub volume: f64,
    pub surface_area: f64,
    pub max_edge: f64,
}

impl MeshStats {
    pub fn of(mesh: &Mesh) -> Self {
        Self {
            domain: mesh.domain(),
            level: mesh.level(),
            vertices: mesh.n_vertices(),
            tets: mesh.n_tets(),
            boundary_faces: mesh.boundary_faces().len(),
            volume: mesh.total_volume(),
            surface_area: mesh.surface_area(),
            max_edge: mesh.max_edge_length(),
        }
    }
}

fn mesh_of(cfg: &RunConfig) -> Result<Mesh, CliError> {
    Ok(build_mesh(cfg.domain()?, cfg.level)?)
}

pub fn cmd_mesh(cfg: &RunConfig, out: &Path) -> Result<Outcome, CliError> {
    let mesh = mesh_of(cfg)?;
    prepare_out(out)?;
    let stats = MeshStats::of(&mesh);
    let mut files = Vec::new();
    write_vtk(&out.join("mesh.vtk"), &mesh, &[], &[])?;
    files.push(out.join("mesh.vtk"));
    write(
        out.join("mesh_stats.json"),
        &to_json_string(&stats)?,
        &mut files,
    )?;
    Ok(Outcome {
        files,
        summary: format!(
            "{} vertices, {} tets, volume {:.6}",
            stats.vertices, stats.tets, stats.volume
        ),
        converged: true,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveOutput {
    pub mesh: MeshStats,
    pub unitarity: UnitarityReport,
    #[serde(flatten)]
    pub solve: PairSolveReport,
    pub verification: Option<ResidualReport>,
    pub verification_error: Option<String>,
}

fn gamma_for(
    cfg: &RunConfig,
    mesh: &Mesh,
    w: &ScalarField,
) -> Result<Option<CoefficientField>, CliError> {
    if cfg.solver.mode == Mode::Gamma {
        Ok(Some(make_gamma(
            &cfg.gamma,
            mesh,
            Some(w),
            cfg.gamma_bound,
        )?))
    } else {
        Ok(None)
    }
}

pub fn cmd_solve(cfg: &RunConfig, out: &Path) -> Result<Outcome, CliError> {
    let mesh = mesh_of(cfg)?;
    let w = sample_w(&cfg.w, &mesh)?;
    let gamma = gamma_for(cfg, &mesh, &w)?;
    let v0 = match &cfg.v0 {
        V0Spec::PerturbedX2 => default_v0(&mesh, cfg.seed),
        V0Spec::SameAsW => w.clone(),
        V0Spec::Field { field } => sample_w(field, &mesh)?,
    };
    let report = alternating_pair_solve(&mesh, &w, gamma.as_ref(), &v0, &cfg.solver)?;
    let (verification, verification_error) = match residual_report(
        &mesh,
        &report.u,
        &report.v,
        &w,
        gamma.as_ref(),
        cfg.solver.mode,
    ) {
        Ok(r) => (Some(r), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let output = SolveOutput {
        mesh: MeshStats::of(&mesh),
        unitarity: unitarity_report(&mesh, &w)?,
        solve: report,
        verification,
        verification_error,
    };
    prepare_out(out)?;
    let mut files = Vec::new();
    write(
        out.join("solve_report.json"),
        &to_json_string(&output)?,
        &mut files,
    )?;
    let cells: Vec<(&str, &[f64])> = match &gamma {
        Some(g) => vec![("gamma", g.values())],
        None => vec![],
    };
    write_vtk(
        &out.join("fields.vtk"),
        &mesh,
        &[("u", &output.solve.u), ("v", &output.solve.v), ("w", &w)],
        &cells,
    )?;
    files.push(out.join("fields.vtk"));
    let s = &output.solve;
    Ok(Outcome {
        files,
        summary: format!(
            "mu = {:.12} after {} sweeps ({}{})",
            s.mu,
            s.iterations,
            if s.converged {
                "converged"
            } else {
                "not converged"
            },
            if s.restarts > 0 {
                format!(", {} restart(s)", s.restarts)
            } else {
                String::new()
            }
        ),
        converged: s.converged,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct TangentialSummary {
    pub max_abs: f64,
    pub rms: f64,
    pub degenerate_faces: usize,
    pub faces: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyOutput {
    pub residuals: ResidualReport,
    pub tangential: TangentialSummary,
    pub weak_divergence: f64,
    pub unitarity: UnitarityReport,
}

pub fn cmd_verify(cfg: &RunConfig, out: &Path) -> Result<Outcome, CliError> {
    let mesh = mesh_of(cfg)?;
    let path = cfg
        .verify
        .fields
        .as_ref()
        .ok_or_else(|| CliError::Config("verify needs `verify.fields`".into()))?;
    let data = read_vtk(&cfg.resolve(path))?;
    if data.points.len() != mesh.n_vertices() {
        return Err(CliError::Input(format!(
            "field file has {} points, mesh has {}",
            data.points.len(),
            mesh.n_vertices()
        )));
    }
    let moved = data
        .points
        .iter()
        .zip(mesh.vertices())
        .map(|(a, b)| (a - b).amax())
        .fold(0.0, f64::max);
    if moved > 1e-12 {
        return Err(CliError::Input(format!(
            "field file points differ from the configured mesh by {moved:.3e}"
        )));
    }
    let u = data.point_field(&cfg.verify.u_name)?;
    let v = data.point_field(&cfg.verify.v_name)?;
    let w = match data.point_field(&cfg.verify.w_name) {
        Ok(w) => w,
        Err(_) => sample_w(&cfg.w, &mesh)?,
    };
    for f in [&u, &v, &w] {
        if f.len() != mesh.n_vertices() {
            return Err(CliError::Input(
                "field length does not match the mesh".into(),
            ));
        }
    }
    let gamma = gamma_for(cfg, &mesh, &w)?;
    let residuals = residual_report(&mesh, &u, &v, &w, gamma.as_ref(), cfg.solver.mode)?;
    let t = boundary_tangential_residual(&mesh, &v, &w)?;
    let output = VerifyOutput {
        residuals,
        tangential: TangentialSummary {
            max_abs: t.max_abs,
            rms: t.rms,
            degenerate_faces: t.degenerate_count,
            faces: t.values.len(),
        },
        weak_divergence: weak_divergence_residual(&mesh, &v, &w)?,
        unitarity: unitarity_report(&mesh, &w)?,
    };
    prepare_out(out)?;
    let mut files = Vec::new();
    write(
        out.join("verify_report.json"),
        &to_json_string(&output)?,
        &mut files,
    )?;
    Ok(Outcome {
        files,
        summary: format!(
            "r1 = {:.3e}, r2 = {:.3e}, orth = {:.3e}",
            output.residuals.r1, output.residuals.r2, output.residuals.orth
        ),
        converged: true,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct MapProperties {
    pub name: String,
    pub size: usize,
    pub symmetry_defect: f64,
    pub kernel_defect: f64,
    pub min_mean_zero_rayleigh: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DtnOutput {
    pub mesh: MeshStats,
    pub distance_norm: &'static str,
    pub maps: Vec<MapProperties>,
    #[serde(flatten)]
    pub experiment: DtnExperiment,
}

fn map_properties(name: &str, d: &DtnMatrix) -> MapProperties {
    MapProperties {
        name: name.to_string(),
        size: d.size(),
        symmetry_defect: d.symmetry_defect(),
        kernel_defect: d.kernel_defect(),
        min_mean_zero_rayleigh: d.min_mean_zero_rayleigh(),
    }
}

pub fn cmd_dtn(cfg: &RunConfig, out: &Path) -> Result<Outcome, CliError> {
    let mesh = mesh_of(cfg)?;
    let gamma_specs: Vec<(String, conjpair::GammaSpec)> = if cfg.dtn.gammas.is_empty() {
        vec![("gamma".into(), cfg.gamma.clone())]
    } else {
        cfg.dtn
            .gammas
            .iter()
            .map(|g| (g.name.clone(), g.gamma.clone()))
            .collect()
    };
    let w_specs: Vec<(String, conjpair::WSpec)> = if cfg.dtn.ws.is_empty() {
        vec![("w".into(), cfg.w.clone())]
    } else {
        cfg.dtn
            .ws
            .iter()
            .map(|w| (w.name.clone(), w.w.clone()))
            .collect()
    };
    let ws = w_specs
        .iter()
        .map(|(n, s)| Ok((n.clone(), sample_w(s, &mesh)?)))
        .collect::<Result<Vec<_>, CliError>>()?;
    let first_w = &ws[0].1;
    let gammas = gamma_specs
        .iter()
        .map(|(n, s)| {
            Ok((
                n.clone(),
                make_gamma(s, &mesh, Some(first_w), cfg.gamma_bound)?,
            ))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let experiment = dtn_experiment(&mesh, &gammas, &ws, &cfg.solver, cfg.seed);

    prepare_out(out)?;
    let mut files = Vec::new();
    let mut maps = Vec::new();
    for ((name, _), map) in gammas.iter().zip(&experiment.maps) {
        if let Some(d) = map {
            maps.push(map_properties(name, d));
            write(
                out.join(format!("dtn_{name}.csv")),
                &dense_csv(&d.matrix)?,
                &mut files,
            )?;
            write(
                out.join(format!("dtn_{name}.mtx")),
                &matrix_market_dense(&d.matrix),
                &mut files,
            )?;
        }
    }
    let failures = experiment.failures.len()
        + experiment
            .pairs
            .iter()
            .filter(|p| p.error.is_some())
            .count();
    let output = DtnOutput {
        mesh: MeshStats::of(&mesh),
        distance_norm: "deflated Frobenius, relative to the larger deflated norm",
        maps,
        experiment,
    };
    write(
        out.join("dtn_experiment.json"),
        &to_json_string(&output)?,
        &mut files,
    )?;
    Ok(Outcome {
        files,
        summary: format!(
            "{} conductivities, {} w fields, {failures} failed cell(s)",
            gammas.len(),
            ws.len()
        ),
        converged: true,
    })
}

pub fn cmd_convergence(cfg: &RunConfig, out: &Path) -> Result<Outcome, CliError> {
    let c = &cfg.convergence;
    let table: ConvergenceTable = convergence_study(c.case, &c.levels, &cfg.solver)?;
    prepare_out(out)?;
    let mut files = Vec::new();
    let stem = c.case.name();
    write(
        out.join(format!("convergence_{stem}.csv")),
        &convergence_csv(&table)?,
        &mut files,
    )?;
    write(
        out.join(format!("convergence_{stem}.json")),
        &to_json_string(&table)?,
        &mut files,
    )?;
    let summary = match (table.slope, &table.note) {
        (Some(s), _) => format!("observed rate {s:.4}"),
        (None, Some(n)) => n.clone(),
        (None, None) => "no rate".into(),
    };
    Ok(Outcome {
        files,
        summary,
        converged: true,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckCrOutput {
    pub matrix: [[f64; 3]; 3],
    pub alpha: [f64; 3],
    pub determinant: f64,
    pub residual: f64,
}

pub fn cmd_check_cr(section: &CheckCrSection, out: &Path) -> Result<Outcome, CliError> {
    let m = &section.matrix;
    let j = Matrix3::from_fn(|r, c| m[r][c]);
    let alpha = ExponentTriple::new(section.alpha)?;
    let residual = relaxed_cr_check(&j, &alpha)?;
    let output = CheckCrOutput {
        matrix: section.matrix,
        alpha: section.alpha,
        determinant: j.determinant(),
        residual,
    };
    prepare_out(out)?;
    let mut files = Vec::new();
    write(
        out.join("check_cr.json"),
        &to_json_string(&output)?,
        &mut files,
    )?;
    Ok(Outcome {
        files,
        summary: format!("residual = {}", conjpair::io::fmt_f64(residual)),
        converged: true,
    })
}
