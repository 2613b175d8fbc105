//! Legacy VTK, Matrix Market, CSV and JSON output. Every float is written with
//! 17 significant digits so that files round-trip and diff cleanly.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::error::{check_len, Error, Result};
use crate::fields::ScalarField;
use crate::mesh::{Mesh, Vec3};
use crate::sparse::CsrMatrix;
use crate::verify::ConvergenceTable;

/// `x` with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

struct Pretty17<'a>(PrettyFormatter<'a>);

impl Formatter for Pretty17<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        w.write_all(fmt_f64(value).as_bytes())
    }
    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }
    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }
    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }
    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }
    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }
    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

/// Pretty JSON with 17-digit floats; non-finite values become `null`.
pub fn to_json_string<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser =
        serde_json::Serializer::with_formatter(&mut buf, Pretty17(PrettyFormatter::new()));
    value
        .serialize(&mut ser)
        .map_err(|e| Error::Parse(e.to_string()))?;
    buf.push(b'\n');
    String::from_utf8(buf).map_err(|e| Error::Parse(e.to_string()))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, to_json_string(value)?)?;
    Ok(())
}

fn check_name(name: &str) -> Result<()> {
    if name.is_empty() || name.chars().any(char::is_whitespace) {
        return Err(Error::InvalidParameter(format!(
            "bad VTK array name {name:?}"
        )));
    }
    Ok(())
}

/// Legacy ASCII unstructured grid with optional point and cell scalars.
pub fn vtk_string(
    mesh: &Mesh,
    point_data: &[(&str, &ScalarField)],
    cell_data: &[(&str, &[f64])],
) -> Result<String> {
    let (nv, nt) = (mesh.n_vertices(), mesh.n_tets());
    let mut s = String::new();
    s.push_str("# vtk DataFile Version 3.0\nconjpair\nASCII\nDATASET UNSTRUCTURED_GRID\n");
    let _ = writeln!(s, "POINTS {nv} double");
    for p in mesh.vertices() {
        let _ = writeln!(s, "{} {} {}", fmt_f64(p.x), fmt_f64(p.y), fmt_f64(p.z));
    }
    let _ = writeln!(s, "CELLS {nt} {}", 5 * nt);
    for t in mesh.tets() {
        let _ = writeln!(s, "4 {} {} {} {}", t[0], t[1], t[2], t[3]);
    }
    let _ = writeln!(s, "CELL_TYPES {nt}");
    for _ in 0..nt {
        s.push_str("10\n");
    }
    if !point_data.is_empty() {
        let _ = writeln!(s, "POINT_DATA {nv}");
        for (name, f) in point_data {
            check_name(name)?;
            check_len(nv, f.len())?;
            let _ = writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default");
            for v in f.values() {
                let _ = writeln!(s, "{}", fmt_f64(*v));
            }
        }
    }
    if !cell_data.is_empty() {
        let _ = writeln!(s, "CELL_DATA {nt}");
        for (name, f) in cell_data {
            check_name(name)?;
            check_len(nt, f.len())?;
            let _ = writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default");
            for v in f.iter() {
                let _ = writeln!(s, "{}", fmt_f64(*v));
            }
        }
    }
    Ok(s)
}

pub fn write_vtk(
    path: &Path,
    mesh: &Mesh,
    point_data: &[(&str, &ScalarField)],
    cell_data: &[(&str, &[f64])],
) -> Result<()> {
    fs::write(path, vtk_string(mesh, point_data, cell_data)?)?;
    Ok(())
}

/// Contents of a legacy VTK file written by [`write_vtk`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct VtkData {
    pub points: Vec<Vec3>,
    pub cells: Vec<[usize; 4]>,
    pub point_scalars: BTreeMap<String, Vec<f64>>,
    pub cell_scalars: BTreeMap<String, Vec<f64>>,
}

impl VtkData {
    pub fn point_field(&self, name: &str) -> Result<ScalarField> {
        self.point_scalars
            .get(name)
            .map(|v| ScalarField::new(v.clone()))
            .ok_or_else(|| Error::Parse(format!("no point scalar named {name:?}")))
    }
}

pub fn parse_vtk(text: &str) -> Result<VtkData> {
    let mut tok = text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .flat_map(str::split_whitespace);
    let bad = |m: &str| Error::Parse(format!("VTK: {m}"));
    let mut next = |what: &str| {
        tok.next()
            .ok_or_else(|| bad(&format!("unexpected end, wanted {what}")))
    };
    fn num<T: std::str::FromStr>(s: &str) -> Result<T> {
        s.parse()
            .map_err(|_| Error::Parse(format!("VTK: cannot parse {s:?}")))
    }

    let mut out = VtkData::default();
    // Title line and header keywords.
    let mut section: Option<(bool, usize)> = None;
    while let Ok(key) = next("keyword") {
        match key {
            "POINTS" => {
                let n: usize = num(next("count")?)?;
                next("type")?;
                for _ in 0..n {
                    let x = num(next("x")?)?;
                    let y = num(next("y")?)?;
                    let z = num(next("z")?)?;
                    out.points.push(Vec3::new(x, y, z));
                }
            }
            "CELLS" => {
                let n: usize = num(next("count")?)?;
                next("size")?;
                for _ in 0..n {
                    if num::<usize>(next("arity")?)? != 4 {
                        return Err(bad("only tetrahedra are supported"));
                    }
                    let mut c = [0usize; 4];
                    for v in &mut c {
                        *v = num(next("index")?)?;
                    }
                    out.cells.push(c);
                }
            }
            "CELL_TYPES" => {
                let n: usize = num(next("count")?)?;
                for _ in 0..n {
                    if next("type")? != "10" {
                        return Err(bad("only tetrahedra are supported"));
                    }
                }
            }
            "POINT_DATA" => section = Some((true, num(next("count")?)?)),
            "CELL_DATA" => section = Some((false, num(next("count")?)?)),
            "SCALARS" => {
                let (is_point, n) = section.ok_or_else(|| bad("SCALARS outside a data section"))?;
                let name = next("name")?.to_string();
                next("type")?;
                let mut k = next("components or LOOKUP_TABLE")?;
                if k != "LOOKUP_TABLE" {
                    if k != "1" {
                        return Err(bad("only single-component scalars are supported"));
                    }
                    k = next("LOOKUP_TABLE")?;
                }
                if k != "LOOKUP_TABLE" {
                    return Err(bad("missing LOOKUP_TABLE"));
                }
                next("table name")?;
                let mut vals = Vec::with_capacity(n);
                for _ in 0..n {
                    vals.push(num(next("value")?)?);
                }
                let map = if is_point {
                    &mut out.point_scalars
                } else {
                    &mut out.cell_scalars
                };
                map.insert(name, vals);
            }
            _ => {}
        }
    }
    Ok(out)
}

pub fn read_vtk(path: &Path) -> Result<VtkData> {
    parse_vtk(&fs::read_to_string(path)?)
}

/// Coordinate format, 1-based, general symmetry.
pub fn matrix_market_sparse(a: &CsrMatrix) -> String {
    let mut s = String::from("%%MatrixMarket matrix coordinate real general\n");
    let _ = writeln!(s, "{} {} {}", a.n_rows(), a.n_cols(), a.nnz());
    for (r, c, v) in a.triplets() {
        let _ = writeln!(s, "{} {} {}", r + 1, c + 1, fmt_f64(v));
    }
    s
}

/// Array format, column-major.
pub fn matrix_market_dense(a: &DMatrix<f64>) -> String {
    let mut s = String::from("%%MatrixMarket matrix array real general\n");
    let _ = writeln!(s, "{} {}", a.nrows(), a.ncols());
    for v in a.iter() {
        let _ = writeln!(s, "{}", fmt_f64(*v));
    }
    s
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

fn csv_to_string(rows: impl IntoIterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.write_record(&r).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
}

/// Columns `level,h,error,rate`; the rate is empty on the first row.
pub fn convergence_csv(t: &ConvergenceTable) -> Result<String> {
    let header = ["level", "h", "error", "rate"].map(String::from).to_vec();
    let body = t.rows.iter().map(|r| {
        vec![
            r.level.to_string(),
            fmt_f64(r.h),
            fmt_f64(r.error),
            r.rate.map(fmt_f64).unwrap_or_default(),
        ]
    });
    csv_to_string(std::iter::once(header).chain(body))
}

/// One CSV row per matrix row, no header.
pub fn dense_csv(a: &DMatrix<f64>) -> Result<String> {
    csv_to_string(
        a.row_iter()
            .map(|r| r.iter().map(|v| fmt_f64(*v)).collect()),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_cube_mesh;
    use crate::verify::{ConvergenceCase, ConvergenceRow};

    #[test]
    fn seventeen_digits() {
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_f64(0.1).parse::<f64>().unwrap(), 0.1);
    }

    #[test]
    fn json_floats_and_nonfinite() {
        #[derive(Serialize)]
        struct R {
            a: f64,
            b: f64,
            c: Vec<f64>,
        }
        let s = to_json_string(&R {
            a: 1.0 / 3.0,
            b: f64::NAN,
            c: vec![2.0],
        })
        .unwrap();
        assert!(s.contains("\"a\": 3.3333333333333331e-1"), "{s}");
        assert!(s.contains("\"b\": null"));
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["c"][0].as_f64(), Some(2.0));
    }

    #[test]
    fn vtk_round_trip() {
        let mesh = build_cube_mesh(2).unwrap();
        let u = mesh.interpolate(|p| p.x + 1e-3 * p.y.sin());
        let cells: Vec<f64> = (0..mesh.n_tets()).map(|e| e as f64).collect();
        let text = vtk_string(&mesh, &[("u", &u)], &[("id", &cells)]).unwrap();
        assert!(text.contains("CELL_TYPES 48\n10\n"));
        let d = parse_vtk(&text).unwrap();
        assert_eq!(d.points.len(), 27);
        assert_eq!(d.cells, mesh.tets());
        assert_eq!(d.point_field("u").unwrap(), u);
        assert_eq!(d.cell_scalars["id"], cells);
        assert!(d.point_field("v").is_err());
    }

    #[test]
    fn vtk_rejects_bad_names_and_lengths() {
        let mesh = build_cube_mesh(1).unwrap();
        let u = ScalarField::zeros(3);
        assert!(vtk_string(&mesh, &[("u", &u)], &[]).is_err());
        let u = ScalarField::zeros(mesh.n_vertices());
        assert!(vtk_string(&mesh, &[("a b", &u)], &[]).is_err());
    }

    #[test]
    fn matrix_market_headers() {
        let a = CsrMatrix::from_triplets(2, 2, vec![(0, 1, 2.0), (1, 0, -2.0)]);
        let s = matrix_market_sparse(&a);
        assert!(s.starts_with("%%MatrixMarket matrix coordinate real general\n2 2 2\n1 2 2.0"));
        let d = matrix_market_dense(&DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]));
        let lines: Vec<&str> = d.lines().collect();
        assert_eq!(lines[1], "2 2");
        assert_eq!(lines[3], fmt_f64(3.0));
    }

    #[test]
    fn convergence_csv_layout() {
        let t = ConvergenceTable {
            case: ConvergenceCase::AffinePair,
            rows: vec![
                ConvergenceRow {
                    level: 2,
                    h: 0.5,
                    error: 1.0,
                    rate: None,
                },
                ConvergenceRow {
                    level: 4,
                    h: 0.25,
                    error: 0.5,
                    rate: Some(1.0),
                },
            ],
            monotone: true,
            slope: Some(1.0),
            note: None,
        };
        let s = convergence_csv(&t).unwrap();
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[0], "level,h,error,rate");
        assert!(lines[1].ends_with(','));
        assert_eq!(lines.len(), 3);
    }
}
