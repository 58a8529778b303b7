//! Field snapshots sampled on a uniform physical grid, written as legacy VTK
//! (`STRUCTURED_POINTS`, ASCII) and CSV.
//!
//! Points outside the fluid domain carry `nan` in every field and `0` in the
//! `inside` mask.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::assembly::FieldState;
use crate::solver::Simulation;
use crate::splines::Field;
use crate::{Error, Result, Vec2};

/// Sampled fields, row-major with x varying fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSnapshot {
    pub t: f64,
    pub dims: [usize; 2],
    pub origin: Vec2<f64>,
    pub spacing: Vec2<f64>,
    pub inside: Vec<bool>,
    pub phi: Vec<f64>,
    pub ux: Vec<f64>,
    pub uy: Vec<f64>,
    pub p: Vec<f64>,
    pub mu: Vec<f64>,
}

#[derive(Serialize)]
struct CsvRow {
    x: f64,
    y: f64,
    inside: u8,
    phi: f64,
    ux: f64,
    uy: f64,
    p: f64,
    mu: f64,
}

const FIELDS: [(&str, Field); 5] =
    [("phi", Field::Phi), ("ux", Field::Ux), ("uy", Field::Uy), ("p", Field::P), ("mu", Field::Mu)];

impl FieldSnapshot {
    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn point(&self, i: usize, j: usize) -> Vec2<f64> {
        Vec2::new(self.origin.x + i as f64 * self.spacing.x, self.origin.y + j as f64 * self.spacing.y)
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i + self.dims[0] * j
    }

    fn field(&self, name: &str) -> &[f64] {
        match name {
            "phi" => &self.phi,
            "ux" => &self.ux,
            "uy" => &self.uy,
            "p" => &self.p,
            _ => &self.mu,
        }
    }

    fn field_mut(&mut self, name: &str) -> &mut Vec<f64> {
        match name {
            "phi" => &mut self.phi,
            "ux" => &mut self.ux,
            "uy" => &mut self.uy,
            "p" => &mut self.p,
            _ => &mut self.mu,
        }
    }

    /// Samples `state` on `dims` points spanning `region` (the bounding box
    /// of the ambient mesh when `None`).
    pub fn sample(
        sim: &Simulation<f64>,
        state: &FieldState<f64>,
        dims: [usize; 2],
        region: Option<[Vec2<f64>; 2]>,
    ) -> Result<Self> {
        if dims[0] < 2 || dims[1] < 2 {
            return Err(Error::config(format!("snapshot grid needs at least 2x2 points, got {dims:?}")));
        }
        let mesh = &sim.disc.mesh;
        let [lo, hi] = match region {
            Some(r) => r,
            None => {
                let a = &mesh.ambient;
                let corners = [
                    a.to_physical(Vec2::zero()),
                    a.to_physical(Vec2::new(a.extents.x, 0.0)),
                    a.to_physical(Vec2::new(0.0, a.extents.y)),
                    a.to_physical(a.extents),
                ];
                let fold = |f: fn(f64, f64) -> f64, g: fn(Vec2<f64>) -> f64, init: f64| {
                    corners.iter().map(|&c| g(c)).fold(init, f)
                };
                [
                    Vec2::new(fold(f64::min, |c| c.x, f64::INFINITY), fold(f64::min, |c| c.y, f64::INFINITY)),
                    Vec2::new(fold(f64::max, |c| c.x, f64::NEG_INFINITY), fold(f64::max, |c| c.y, f64::NEG_INFINITY)),
                ]
            }
        };
        if !(hi.x > lo.x && hi.y > lo.y) {
            return Err(Error::config("snapshot region must have positive extent"));
        }
        let spacing = Vec2::new((hi.x - lo.x) / (dims[0] - 1) as f64, (hi.y - lo.y) / (dims[1] - 1) as f64);
        let n = dims[0] * dims[1];
        let mut snap = FieldSnapshot {
            t: state.t,
            dims,
            origin: lo,
            spacing,
            inside: vec![false; n],
            phi: vec![f64::NAN; n],
            ux: vec![f64::NAN; n],
            uy: vec![f64::NAN; n],
            p: vec![f64::NAN; n],
            mu: vec![f64::NAN; n],
        };
        let ls = mesh.level_set.as_ref();
        for j in 0..dims[1] {
            for i in 0..dims[0] {
                let x = snap.point(i, j);
                let Some((id, r)) = mesh.ambient.locate(x) else { continue };
                if !mesh.is_active(id) || ls.value(x) >= 0.0 {
                    continue;
                }
                let b = sim.disc.space.eval_basis(id, r, 0)?;
                let k = snap.index(i, j);
                snap.inside[k] = true;
                for (name, f) in FIELDS {
                    let c = state.field(f);
                    snap.field_mut(name)[k] = b.functions.iter().zip(b.values()).map(|(&a, &v)| c[a] * v).sum();
                }
            }
        }
        Ok(snap)
    }

    /// Writes the legacy VTK file.
    pub fn write_vtk(&self, path: &Path) -> Result<()> {
        let io = |e| Error::Io { path: path.display().to_string(), source: e };
        let mut w = BufWriter::new(fs::File::create(path).map_err(io)?);
        let mut body = String::new();
        body.push_str("# vtk DataFile Version 3.0\n");
        body.push_str(&format!("nsch snapshot t={:.17e}\n", self.t));
        body.push_str("ASCII\nDATASET STRUCTURED_POINTS\n");
        body.push_str(&format!("DIMENSIONS {} {} 1\n", self.dims[0], self.dims[1]));
        body.push_str(&format!("ORIGIN {:.17e} {:.17e} 0\n", self.origin.x, self.origin.y));
        body.push_str(&format!("SPACING {:.17e} {:.17e} 1\n", self.spacing.x, self.spacing.y));
        body.push_str(&format!("POINT_DATA {}\n", self.len()));
        body.push_str("SCALARS inside int 1\nLOOKUP_TABLE default\n");
        for &m in &self.inside {
            body.push_str(if m { "1\n" } else { "0\n" });
        }
        for (name, _) in FIELDS {
            body.push_str(&format!("SCALARS {name} double 1\nLOOKUP_TABLE default\n"));
            for v in self.field(name) {
                if v.is_nan() {
                    body.push_str("nan\n");
                } else {
                    body.push_str(&format!("{v:.17e}\n"));
                }
            }
        }
        w.write_all(body.as_bytes()).map_err(io)?;
        w.flush().map_err(io)
    }

    /// Reads a file written by [`FieldSnapshot::write_vtk`].
    pub fn read_vtk(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Io { path: path.display().to_string(), source: e })?;
        let bad = |what: &str| Error::Parse(format!("{}: {what}", path.display()));
        let mut lines = text.lines();
        let mut next = || lines.next().ok_or_else(|| bad("unexpected end of file"));
        if !next()?.starts_with("# vtk DataFile") {
            return Err(bad("missing VTK header"));
        }
        let title = next()?;
        let t = title
            .split_once("t=")
            .and_then(|(_, v)| v.trim().parse::<f64>().ok())
            .ok_or_else(|| bad("title line does not carry the time"))?;
        if next()? != "ASCII" || next()? != "DATASET STRUCTURED_POINTS" {
            return Err(bad("expected ASCII STRUCTURED_POINTS"));
        }
        let nums = |line: &str, key: &str| -> Result<Vec<f64>> {
            let rest = line.strip_prefix(key).ok_or_else(|| bad(&format!("expected {key}")))?;
            rest.split_whitespace().map(|s| s.parse::<f64>().map_err(|_| bad("bad number"))).collect()
        };
        let d = nums(next()?, "DIMENSIONS")?;
        let o = nums(next()?, "ORIGIN")?;
        let s = nums(next()?, "SPACING")?;
        if d.len() != 3 || o.len() != 3 || s.len() != 3 {
            return Err(bad("malformed geometry header"));
        }
        let dims = [d[0] as usize, d[1] as usize];
        let n = dims[0] * dims[1];
        if nums(next()?, "POINT_DATA")?.first().map(|&v| v as usize) != Some(n) {
            return Err(bad("POINT_DATA does not match DIMENSIONS"));
        }
        let mut snap = FieldSnapshot {
            t,
            dims,
            origin: Vec2::new(o[0], o[1]),
            spacing: Vec2::new(s[0], s[1]),
            inside: Vec::with_capacity(n),
            phi: Vec::new(),
            ux: Vec::new(),
            uy: Vec::new(),
            p: Vec::new(),
            mu: Vec::new(),
        };
        let mut read_block = |expect: &str| -> Result<Vec<f64>> {
            let header = next()?;
            if header.split_whitespace().nth(1) != Some(expect) {
                return Err(bad(&format!("expected scalars `{expect}`")));
            }
            next()?;
            (0..n).map(|_| next()?.trim().parse::<f64>().map_err(|_| bad("bad value"))).collect()
        };
        snap.inside = read_block("inside")?.into_iter().map(|v| v != 0.0).collect();
        for (name, _) in FIELDS {
            *snap.field_mut(name) = read_block(name)?;
        }
        Ok(snap)
    }

    /// Writes `x, y, inside, phi, ux, uy, p, mu` rows.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let err = |e: csv::Error| Error::Parse(format!("{}: {e}", path.display()));
        let mut w = csv::Writer::from_path(path).map_err(err)?;
        for j in 0..self.dims[1] {
            for i in 0..self.dims[0] {
                let x = self.point(i, j);
                let k = self.index(i, j);
                w.serialize(CsvRow {
                    x: x.x,
                    y: x.y,
                    inside: self.inside[k] as u8,
                    phi: self.phi[k],
                    ux: self.ux[k],
                    uy: self.uy[k],
                    p: self.p[k],
                    mu: self.mu[k],
                })
                .map_err(err)?;
            }
        }
        w.flush().map_err(|e| Error::Io { path: path.display().to_string(), source: e })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic() -> FieldSnapshot {
        let dims = [4, 3];
        let n = 12;
        let inside: Vec<bool> = (0..n).map(|k| k % 5 != 0).collect();
        let f = |s: f64| -> Vec<f64> {
            (0..n).map(|k| if inside[k] { s * (k as f64 + 0.1).sqrt() / 3.0 } else { f64::NAN }).collect()
        };
        FieldSnapshot {
            t: 0.125,
            dims,
            origin: Vec2::new(-1e-5, 2.5e-6),
            spacing: Vec2::new(1.0 / 3.0 * 1e-6, 0.7e-6),
            inside: inside.clone(),
            phi: f(1.0),
            ux: f(-2.0),
            uy: f(1e-7),
            p: f(3e4),
            mu: f(-0.3),
        }
    }

    fn same(a: &[f64], b: &[f64]) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits() || (x.is_nan() && y.is_nan()))
    }

    #[test]
    fn vtk_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.vtk");
        let s = synthetic();
        s.write_vtk(&path).unwrap();
        let r = FieldSnapshot::read_vtk(&path).unwrap();
        assert_eq!(r.dims, s.dims);
        assert_eq!(r.t, s.t);
        assert_eq!(r.origin, s.origin);
        assert_eq!(r.spacing, s.spacing);
        assert_eq!(r.inside, s.inside);
        for (name, _) in FIELDS {
            assert!(same(r.field(name), s.field(name)), "{name}");
        }
    }

    #[test]
    fn csv_has_one_row_per_point() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        let s = synthetic();
        s.write_csv(&path).unwrap();
        let mut rd = csv::Reader::from_path(&path).unwrap();
        let headers = rd.headers().unwrap().clone();
        assert_eq!(headers.iter().collect::<Vec<_>>(), ["x", "y", "inside", "phi", "ux", "uy", "p", "mu"]);
        let rows: Vec<_> = rd.records().map(|r| r.unwrap()).collect();
        assert_eq!(rows.len(), s.len());
        assert_eq!(&rows[0][2], "0");
        assert_eq!(&rows[0][3], "NaN");
        let v: f64 = rows[1][3].parse().unwrap();
        assert_eq!(v, s.phi[1]);
    }
}
