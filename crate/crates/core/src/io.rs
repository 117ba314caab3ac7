//! Persistence of solutions, tables and study reports.
//!
//! Cell solutions use a JSON header line followed by raw little-endian f64
//! payload arrays; field solutions and tables use a JSON header line followed
//! by CSV rows. Report CSV is RFC-4180 with '.' decimal separators, and every
//! row carries the configuration hash handed in by the caller.

use crate::cell::{Backend, CellData, CellSolution, GridData, LaminateData};
use crate::corrector::{BoundReport, CorrectorReport};
use crate::error::{Error, Result};
use crate::field::{FieldKind, FieldSolution};
use crate::geometry::{GeometryKind, MicroGeometry};
use crate::homogenized::HomogenizedMap;
use crate::material::{Phase, PhaseParams};
use crate::vec2::Vec2;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

#[derive(Serialize, Deserialize)]
struct ParamsHeader {
    sigma1: f64,
    sigma2: f64,
    p1: f64,
    p2: f64,
}

impl ParamsHeader {
    fn of(p: &PhaseParams) -> Self {
        ParamsHeader {
            sigma1: p.sigma1(),
            sigma2: p.sigma2(),
            p1: p.p1(),
            p2: p.p2(),
        }
    }

    fn build(&self) -> Result<PhaseParams> {
        PhaseParams::new(self.sigma1, self.sigma2, self.p1, self.p2)
    }
}

#[derive(Serialize, Deserialize)]
struct GeomHeader {
    kind: GeometryKind,
    theta1: f64,
}

impl GeomHeader {
    fn of(g: &MicroGeometry) -> Self {
        GeomHeader {
            kind: g.kind(),
            theta1: g.theta1(),
        }
    }

    fn build(&self) -> Result<MicroGeometry> {
        MicroGeometry::new(self.kind, self.theta1)
    }
}

#[derive(Serialize, Deserialize)]
struct CellHeader {
    version: u32,
    backend: Backend,
    grid_n: usize,
    xi: [f64; 2],
    residual: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    laminate: Option<LaminateHeader>,
    /// Payload arrays in file order, as (name, element count); all entries
    /// are little-endian f64.
    arrays: Vec<(String, usize)>,
}

#[derive(Serialize, Deserialize)]
struct LaminateHeader {
    theta1: f64,
    t1: f64,
    t2: f64,
    flux_c: f64,
}

fn write_f64s(w: &mut impl Write, values: impl Iterator<Item = f64>) -> Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_f64s(r: &mut impl Read, n: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; 8 * n];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

pub fn write_cell_solution(path: &Path, sol: &CellSolution) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    match &sol.data {
        CellData::Laminate(l) => {
            let header = CellHeader {
                version: 1,
                backend: Backend::Laminate1D,
                grid_n: 0,
                xi: [sol.xi().x, sol.xi().y],
                residual: sol.residual(),
                laminate: Some(LaminateHeader {
                    theta1: l.theta1,
                    t1: l.t1,
                    t2: l.t2,
                    flux_c: l.flux_c,
                }),
                arrays: vec![],
            };
            writeln!(
                file,
                "{}",
                serde_json::to_string(&header).map_err(json_err)?
            )?;
        }
        CellData::Grid(g) => {
            let header = CellHeader {
                version: 1,
                backend: Backend::Grid2D,
                grid_n: g.n,
                xi: [sol.xi().x, sol.xi().y],
                residual: sol.residual(),
                laminate: None,
                arrays: vec![
                    ("upsilon".into(), g.upsilon.len()),
                    ("p_quad".into(), 2 * g.p_quad.len()),
                    ("flux_quad".into(), 2 * g.flux_quad.len()),
                    ("w_quad".into(), g.w_quad.len()),
                    ("phase_quad".into(), g.phase_quad.len()),
                ],
            };
            writeln!(
                file,
                "{}",
                serde_json::to_string(&header).map_err(json_err)?
            )?;
            write_f64s(&mut file, g.upsilon.iter().copied())?;
            write_f64s(&mut file, g.p_quad.iter().flat_map(|v| [v.x, v.y]))?;
            write_f64s(&mut file, g.flux_quad.iter().flat_map(|v| [v.x, v.y]))?;
            write_f64s(&mut file, g.w_quad.iter().copied())?;
            write_f64s(&mut file, g.phase_quad.iter().map(|p| p.index() as f64))?;
        }
    }
    Ok(())
}

pub fn read_cell_solution(path: &Path) -> Result<CellSolution> {
    let mut reader = BufReader::new(std::fs::File::open(path)?);
    let mut line = String::new();
    reader.read_line(&mut line)?;
    let header: CellHeader = serde_json::from_str(line.trim()).map_err(json_err)?;
    let xi = Vec2::new(header.xi[0], header.xi[1]);
    match header.backend {
        Backend::Laminate1D => {
            let l = header
                .laminate
                .ok_or_else(|| Error::Format("laminate header missing".into()))?;
            let p1v = Vec2::new(l.t1, xi.y);
            let p2v = Vec2::new(l.t2, xi.y);
            // Fluxes and energies are not stored; the reader restores only the
            // geometry of the solution. Callers needing fluxes re-solve.
            let data = LaminateData {
                theta1: l.theta1,
                t1: l.t1,
                t2: l.t2,
                flux_c: l.flux_c,
                p1v,
                p2v,
                f1: Vec2::new(l.flux_c, 0.0),
                f2: Vec2::new(l.flux_c, 0.0),
                w1: 0.0,
                w2: 0.0,
            };
            Ok(CellSolution::new(
                xi,
                header.residual,
                CellData::Laminate(data),
            ))
        }
        Backend::Grid2D => {
            let n = header.grid_n;
            let expect: Vec<usize> = vec![n * n, 8 * n * n, 8 * n * n, 4 * n * n, 4 * n * n];
            let got: Vec<usize> = header.arrays.iter().map(|(_, l)| *l).collect();
            if got != expect {
                return Err(Error::Format(format!("unexpected payload layout {got:?}")));
            }
            let upsilon = read_f64s(&mut reader, n * n)?;
            let p_raw = read_f64s(&mut reader, 8 * n * n)?;
            let f_raw = read_f64s(&mut reader, 8 * n * n)?;
            let w_quad = read_f64s(&mut reader, 4 * n * n)?;
            let ph_raw = read_f64s(&mut reader, 4 * n * n)?;
            let to_vec2 =
                |raw: &[f64]| raw.chunks_exact(2).map(|c| Vec2::new(c[0], c[1])).collect();
            let phase_quad = ph_raw
                .iter()
                .map(|&v| {
                    if v == 1.0 {
                        Ok(Phase::One)
                    } else if v == 2.0 {
                        Ok(Phase::Two)
                    } else {
                        Err(Error::Format(format!("bad phase tag {v}")))
                    }
                })
                .collect::<Result<Vec<Phase>>>()?;
            let data = GridData {
                n,
                upsilon,
                p_quad: to_vec2(&p_raw),
                flux_quad: to_vec2(&f_raw),
                w_quad,
                phase_quad,
            };
            Ok(CellSolution::new(xi, header.residual, CellData::Grid(data)))
        }
    }
}

#[derive(Serialize, Deserialize)]
struct FieldHeader {
    version: u32,
    mesh_n: usize,
    kind: FieldKind,
    residual: f64,
    energy: f64,
}

/// JSON header line, then `i,j,u` rows in row-major order.
pub fn write_field_solution(path: &Path, sol: &FieldSolution) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    let header = FieldHeader {
        version: 1,
        mesh_n: sol.mesh_n(),
        kind: sol.kind(),
        residual: sol.residual(),
        energy: sol.energy(),
    };
    writeln!(
        file,
        "{}",
        serde_json::to_string(&header).map_err(json_err)?
    )?;
    writeln!(file, "i,j,u")?;
    let np = sol.mesh_n() + 1;
    for j in 0..np {
        for i in 0..np {
            writeln!(file, "{},{},{}", i, j, sol.node(i, j))?;
        }
    }
    Ok(())
}

pub fn read_field_solution(path: &Path) -> Result<FieldSolution> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut lines = reader.lines();
    let header: FieldHeader = serde_json::from_str(
        lines
            .next()
            .ok_or_else(|| Error::Format("empty field file".into()))??
            .trim(),
    )
    .map_err(json_err)?;
    lines.next(); // column header
    let np = header.mesh_n + 1;
    let mut u = vec![0.0; np * np];
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut it = line.split(',');
        let i: usize = parse_field(it.next())?;
        let j: usize = parse_field(it.next())?;
        let v: f64 = parse_field(it.next())?;
        u[j * np + i] = v;
    }
    FieldSolution::from_parts(
        header.mesh_n,
        header.kind,
        u,
        header.residual,
        header.energy,
    )
}

/// Per-element gradient export as a CSV point cloud.
pub fn write_gradient_csv(path: &Path, sol: &FieldSolution) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(file, "x,y,gx,gy")?;
    let n = sol.mesh_n();
    for (e, g) in sol.grad_centers().iter().enumerate() {
        let (ex, ey) = (e % n, e / n);
        let c = 1.0 / n as f64;
        writeln!(
            file,
            "{},{},{},{}",
            (ex as f64 + 0.5) * c,
            (ey as f64 + 0.5) * c,
            g.x,
            g.y
        )?;
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct TableHeader {
    version: u32,
    params: ParamsHeader,
    geom: GeomHeader,
    r: f64,
    h_xi: f64,
    grid_n: usize,
    tol: f64,
}

/// JSON header line, then `xi1,xi2,b1,b2,w` rows.
pub fn write_table(path: &Path, map: &HomogenizedMap) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    let header = TableHeader {
        version: 1,
        params: ParamsHeader::of(&map.params),
        geom: GeomHeader::of(&map.geom),
        r: map.range(),
        h_xi: map.spacing(),
        grid_n: map.grid_n,
        tol: map.tol,
    };
    writeln!(
        file,
        "{}",
        serde_json::to_string(&header).map_err(json_err)?
    )?;
    writeln!(file, "xi1,xi2,b1,b2,w")?;
    let m = map.nodes_per_side();
    for j in 0..m {
        for i in 0..m {
            let xi = map.node_xi(i, j);
            let b = map.node_b(i, j);
            writeln!(
                file,
                "{},{},{},{},{}",
                xi.x,
                xi.y,
                b.x,
                b.y,
                map.node_w(i, j)
            )?;
        }
    }
    Ok(())
}

pub fn read_table(path: &Path) -> Result<HomogenizedMap> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut lines = reader.lines();
    let header: TableHeader = serde_json::from_str(
        lines
            .next()
            .ok_or_else(|| Error::Format("empty table file".into()))??
            .trim(),
    )
    .map_err(json_err)?;
    lines.next();
    let mut rows = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Format(format!("bad number: {e}")))
            })
            .collect::<Result<_>>()?;
        if vals.len() != 5 {
            return Err(Error::Format(format!(
                "expected 5 columns, got {}",
                vals.len()
            )));
        }
        rows.push(vals);
    }
    HomogenizedMap::from_rows(
        header.params.build()?,
        header.geom.build()?,
        header.r,
        header.h_xi,
        header.grid_n,
        header.tol,
        &rows,
    )
}

/// One row per eps; every row carries the configuration hash.
pub fn corrector_report_csv(report: &CorrectorReport, config_hash: &str) -> String {
    let mut out = String::from("config_hash,eps_k,eps,fine_mesh_n,e1,e2,apriori_p1,apriori_p2\n");
    for (i, &k) in report.eps_k.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            config_hash,
            k,
            1.0 / k as f64,
            report.fine_mesh_n[i],
            report.e1[i],
            report.e2[i],
            report.apriori_p1[i],
            report.apriori_p2[i],
        ));
    }
    out
}

pub fn bound_report_csv(report: &BoundReport, config_hash: &str) -> String {
    let mut out = String::from("config_hash,eps_k,eps,lhs1,lhs2,rhs1,rhs2,gap1,gap2,flagged\n");
    for (i, &k) in report.eps_k.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            config_hash,
            k,
            1.0 / k as f64,
            report.lhs1,
            report.lhs2,
            report.rhs1[i],
            report.rhs2[i],
            report.gap1[i],
            report.gap2[i],
            report.flagged[i],
        ));
    }
    out
}

fn json_err(e: serde_json::Error) -> Error {
    Error::Format(e.to_string())
}

fn parse_field<T: std::str::FromStr>(s: Option<&str>) -> Result<T> {
    s.ok_or_else(|| Error::Format("missing CSV field".into()))?
        .trim()
        .parse::<T>()
        .map_err(|_| Error::Format("unparsable CSV field".into()))
}
