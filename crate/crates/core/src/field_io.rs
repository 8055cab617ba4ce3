//! Field serialization: a CSV grid (`x[,y],value`, row-major, one header
//! line) plus a JSON metadata sidecar. Values are printed with 17
//! significant decimal digits, which round-trips `f64` exactly.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{build_domain_with_width, Domain, Field, NodeClass, Shape};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FieldMeta {
    pub shape: Shape,
    pub dim: usize,
    pub n: usize,
    pub h: f64,
    pub stencil_width: u32,
    pub interior_nodes: usize,
    pub boundary_nodes: usize,
    pub exterior_nodes: usize,
}

impl FieldMeta {
    pub fn of(domain: &Domain) -> Self {
        let (interior, boundary, exterior) = domain.counts();
        Self {
            shape: domain.shape(),
            dim: domain.dim(),
            n: domain.n(),
            h: domain.h(),
            stencil_width: domain.stencil_width(),
            interior_nodes: interior,
            boundary_nodes: boundary,
            exterior_nodes: exterior,
        }
    }
}

fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("meta.json")
}

/// 17 significant digits: enough to recover the exact bit pattern.
fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_field(field: &Field, csv_path: &Path) -> Result<()> {
    let dom = field.domain();
    let file = fs::File::create(csv_path)?;
    let mut w = BufWriter::new(file);
    if dom.dim() == 1 {
        writeln!(w, "x,value")?;
    } else {
        writeln!(w, "x,y,value")?;
    }
    for idx in 0..dom.node_count() {
        if dom.class(idx) == NodeClass::Exterior {
            continue;
        }
        let p = dom.pos(idx);
        if dom.dim() == 1 {
            writeln!(w, "{},{}", fmt17(p[0]), fmt17(field.get(idx)))?;
        } else {
            writeln!(w, "{},{},{}", fmt17(p[0]), fmt17(p[1]), fmt17(field.get(idx)))?;
        }
    }
    w.flush()?;
    let meta = FieldMeta::of(dom);
    let json = serde_json::to_string_pretty(&meta)?;
    fs::write(sidecar_path(csv_path), json + "\n")?;
    Ok(())
}

/// Reads a field written by [`write_field`], rebuilding the domain from the
/// sidecar. Node slots are recovered from the stored coordinates.
pub fn read_field(csv_path: &Path) -> Result<Field> {
    let meta: FieldMeta = serde_json::from_str(&fs::read_to_string(sidecar_path(csv_path))?)?;
    let domain = build_domain_with_width(meta.dim, meta.shape, meta.n, meta.stencil_width)?;
    read_field_on(csv_path, &domain)
}

/// Reads a field onto an existing domain (mismatches are configuration
/// errors so the caller can report the offending file).
pub fn read_field_on(csv_path: &Path, domain: &Arc<Domain>) -> Result<Field> {
    let meta: FieldMeta = serde_json::from_str(&fs::read_to_string(sidecar_path(csv_path))?)?;
    if meta.dim != domain.dim()
        || meta.shape != domain.shape()
        || meta.n != domain.n()
        || meta.stencil_width != domain.stencil_width()
    {
        return Err(Error::DomainMismatch(format!(
            "{} holds a {:?} n={} grid, expected {:?} n={}",
            csv_path.display(),
            meta.shape,
            meta.n,
            domain.shape(),
            domain.n()
        )));
    }
    let file = fs::File::open(csv_path)?;
    let reader = BufReader::new(file);
    let mut field = Field::constant(domain, 0.0);
    let mut filled = 0usize;
    let h = domain.h();
    for (line_no, line) in reader.lines().enumerate() {
        let line = line?;
        if line_no == 0 || line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != domain.dim() + 1 {
            return Err(Error::Config(format!(
                "{}:{}: expected {} comma-separated columns",
                csv_path.display(),
                line_no + 1,
                domain.dim() + 1
            )));
        }
        let parse = |s: &str| -> Result<f64> {
            s.trim().parse::<f64>().map_err(|e| {
                Error::Config(format!("{}:{}: {}", csv_path.display(), line_no + 1, e))
            })
        };
        let x = parse(parts[0])?;
        let i = ((x + 1.0) / h).round() as i64;
        let j = if domain.dim() == 2 {
            ((parse(parts[1])? + 1.0) / h).round() as i64
        } else {
            0
        };
        if i < 0 || i >= domain.n() as i64 || j < 0 || j >= domain.n() as i64 {
            return Err(Error::Config(format!(
                "{}:{}: coordinates outside the grid",
                csv_path.display(),
                line_no + 1
            )));
        }
        let idx = domain.index(i as usize, j as usize);
        if domain.class(idx) == NodeClass::Exterior {
            return Err(Error::Config(format!(
                "{}:{}: value given for an exterior node",
                csv_path.display(),
                line_no + 1
            )));
        }
        field.set(idx, parse(parts[domain.dim()])?);
        filled += 1;
    }
    let expected = meta.interior_nodes + meta.boundary_nodes;
    if filled != expected {
        return Err(Error::Config(format!(
            "{}: {} rows, expected {}",
            csv_path.display(),
            filled,
            expected
        )));
    }
    Ok(field)
}

/// Boolean masks reuse the field format with values 0 and 1.
pub fn write_mask(domain: &Arc<Domain>, mask: &[bool], csv_path: &Path) -> Result<()> {
    let mut f = Field::constant(domain, 0.0);
    for idx in 0..domain.node_count() {
        if mask[idx] {
            f.set(idx, 1.0);
        }
    }
    write_field(&f, csv_path)
}

pub fn read_mask(csv_path: &Path, domain: &Arc<Domain>) -> Result<Vec<bool>> {
    let f = read_field_on(csv_path, domain)?;
    Ok(f.values().iter().map(|&v| v != 0.0).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_domain;
    use proptest::prelude::*;

    #[test]
    fn round_trip_disc() {
        let dom = build_domain(2, Shape::Disc, 21).unwrap();
        let f = Field::from_fn(&dom, |p| (p[0] * 3.1).sin() * (p[1] * 0.7).cos() + 1.0 / 3.0);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("u.csv");
        write_field(&f, &path).unwrap();
        let g = read_field(&path).unwrap();
        assert!(g.domain().same_grid(f.domain()));
        for idx in 0..dom.node_count() {
            if dom.class(idx) != NodeClass::Exterior {
                assert_eq!(f.get(idx).to_bits(), g.get(idx).to_bits(), "node {idx}");
            }
        }
    }

    #[test]
    fn domain_mismatch_detected() {
        let dom = build_domain(1, Shape::Interval, 11).unwrap();
        let f = Field::constant(&dom, 1.0);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("u.csv");
        write_field(&f, &path).unwrap();
        let other = build_domain(1, Shape::Interval, 21).unwrap();
        assert!(matches!(read_field_on(&path, &other), Err(Error::DomainMismatch(_))));
    }

    proptest! {
        #[test]
        fn round_trip_bits_1d(vals in proptest::collection::vec(-1e12f64..1e12, 11)) {
            let dom = build_domain(1, Shape::Interval, 11).unwrap();
            let mut f = Field::constant(&dom, 0.0);
            for (idx, v) in vals.iter().enumerate() {
                f.set(idx, *v);
            }
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("f.csv");
            write_field(&f, &path).unwrap();
            let g = read_field(&path).unwrap();
            for idx in 0..11 {
                prop_assert_eq!(f.get(idx).to_bits(), g.get(idx).to_bits());
            }
        }
    }
}
