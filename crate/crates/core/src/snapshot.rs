//! CSV snapshots of tensor fields.
//!
//! One row per active cell:
//! `x,y,tag,u_xx,u_xy,u_xz,u_yy,u_yz,u_zz`, with `tag` either `interior` or
//! `boundary`. Values are written with 17 significant digits, so a
//! write/read round trip is exact.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use crate::error::FieldError;
use crate::field::{CellTag, DomainMask, TensorField};
use crate::tensor::SymTensor3;

pub const SNAPSHOT_HEADER: &str = "x,y,tag,u_xx,u_xy,u_xz,u_yy,u_yz,u_zz";

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> FieldError + '_ {
    move |source| FieldError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn write_snapshot_to(field: &TensorField, out: &mut impl Write) -> std::io::Result<()> {
    writeln!(out, "{SNAPSHOT_HEADER}")?;
    let mask = field.mask();
    let grid = mask.grid();
    for idx in 0..grid.len() {
        let tag = match mask.tag(idx) {
            CellTag::Interior => "interior",
            CellTag::Boundary => "boundary",
            CellTag::Exterior => continue,
        };
        let c = grid.center(idx);
        write!(out, "{:.16e},{:.16e},{tag}", c[0], c[1])?;
        for v in field.get(idx).to_array() {
            write!(out, ",{v:.16e}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn write_snapshot(field: &TensorField, path: &Path) -> Result<(), FieldError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    write_snapshot_to(field, &mut w)
        .and_then(|_| w.flush())
        .map_err(io_err(path))
}

/// Reads a snapshot onto `mask`. Every active cell must appear exactly once
/// with the matching tag, and boundary rows must agree with the mask's
/// boundary values.
pub fn read_snapshot(path: &Path, mask: &Arc<DomainMask>) -> Result<TensorField, FieldError> {
    let file = File::open(path).map_err(io_err(path))?;
    read_snapshot_from(BufReader::new(file), mask)
}

pub fn read_snapshot_from(
    reader: impl BufRead,
    mask: &Arc<DomainMask>,
) -> Result<TensorField, FieldError> {
    if !mask.boundary_applied() {
        return Err(FieldError::MissingBoundary);
    }
    let grid = *mask.grid();
    let mut values = vec![SymTensor3::ISOTROPIC; grid.len()];
    let mut seen = vec![false; grid.len()];
    let mut lines = reader.lines().enumerate();
    match lines.next() {
        Some((_, Ok(h))) if h.trim() == SNAPSHOT_HEADER => {}
        Some((_, Ok(h))) => {
            return Err(FieldError::SnapshotParse {
                line: 1,
                msg: format!("bad header {h:?}"),
            })
        }
        Some((_, Err(e))) => {
            return Err(FieldError::SnapshotParse {
                line: 1,
                msg: e.to_string(),
            })
        }
        None => {
            return Err(FieldError::SnapshotParse {
                line: 1,
                msg: "empty file".into(),
            })
        }
    }
    for (n, line) in lines {
        let line_no = n + 1;
        let line = line.map_err(|e| FieldError::SnapshotParse {
            line: line_no,
            msg: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').map(str::trim).collect();
        let parse_err = |msg: String| FieldError::SnapshotParse { line: line_no, msg };
        if parts.len() != 9 {
            return Err(parse_err(format!("expected 9 fields, got {}", parts.len())));
        }
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|e| parse_err(format!("{s:?}: {e}")))
        };
        let x = num(parts[0])?;
        let y = num(parts[1])?;
        let tag = match parts[2] {
            "interior" => CellTag::Interior,
            "boundary" => CellTag::Boundary,
            other => return Err(parse_err(format!("unknown tag {other:?}"))),
        };
        let mut comps = [0.0; 6];
        for (c, s) in comps.iter_mut().zip(&parts[3..]) {
            *c = num(s)?;
            if !c.is_finite() {
                return Err(parse_err(format!("non-finite value {s}")));
            }
        }
        let idx = grid.locate([x, y]).ok_or_else(|| {
            FieldError::SnapshotMismatch(format!("line {line_no}: ({x}, {y}) is outside the grid"))
        })?;
        let c = grid.center(idx);
        if (c[0] - x).abs() > 1e-6 * grid.h || (c[1] - y).abs() > 1e-6 * grid.h {
            return Err(FieldError::SnapshotMismatch(format!(
                "line {line_no}: ({x}, {y}) is not a cell center"
            )));
        }
        if mask.tag(idx) != tag {
            return Err(FieldError::SnapshotMismatch(format!(
                "line {line_no}: cell tagged {tag:?} in file but {:?} in domain",
                mask.tag(idx)
            )));
        }
        if seen[idx] {
            return Err(FieldError::SnapshotMismatch(format!(
                "line {line_no}: duplicate cell"
            )));
        }
        seen[idx] = true;
        let u = SymTensor3::from_array(comps);
        if tag == CellTag::Boundary {
            let diff = (u - mask.boundary_value(idx)).max_abs();
            if diff > 1e-9 {
                return Err(FieldError::SnapshotMismatch(format!(
                    "line {line_no}: boundary value differs from domain by {diff:e}"
                )));
            }
            values[idx] = mask.boundary_value(idx);
        } else {
            values[idx] = u.with_unit_trace();
        }
    }
    let missing = (0..grid.len())
        .filter(|&i| mask.is_active(i) && !seen[i])
        .count();
    if missing > 0 {
        return Err(FieldError::SnapshotMismatch(format!(
            "{missing} active cells missing"
        )));
    }
    Ok(TensorField::from_parts(mask.clone(), values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{apply_boundary, initial_field, make_disk_domain, BoundaryData, InitMode};

    fn field() -> TensorField {
        let mask = make_disk_domain(24, 1.0).unwrap();
        let mask = Arc::new(apply_boundary(&mask, &BoundaryData::default()).unwrap());
        initial_field(
            &mask,
            &InitMode::Random {
                seed: 5,
                amplitude: 0.3,
            },
        )
        .unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let f = field();
        let mut buf = Vec::new();
        write_snapshot_to(&f, &mut buf).unwrap();
        let g = read_snapshot_from(buf.as_slice(), f.mask_arc()).unwrap();
        assert_eq!(f, g);
    }

    #[test]
    fn mismatches_are_reported() {
        let f = field();
        let mut buf = Vec::new();
        write_snapshot_to(&f, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let truncated: String = text.lines().take(10).map(|l| format!("{l}\n")).collect();
        assert!(matches!(
            read_snapshot_from(truncated.as_bytes(), f.mask_arc()),
            Err(FieldError::SnapshotMismatch(_))
        ));
        let bad = text.replacen("interior", "boundary", 1);
        assert!(matches!(
            read_snapshot_from(bad.as_bytes(), f.mask_arc()),
            Err(FieldError::SnapshotMismatch(_))
        ));
        let garbled = format!("{SNAPSHOT_HEADER}\n0.1,0.2,interior,1,2\n");
        assert!(matches!(
            read_snapshot_from(garbled.as_bytes(), f.mask_arc()),
            Err(FieldError::SnapshotParse { line: 2, .. })
        ));
        let other = make_disk_domain(32, 1.0).unwrap();
        let other = Arc::new(apply_boundary(&other, &BoundaryData::default()).unwrap());
        assert!(read_snapshot_from(text.as_bytes(), &other).is_err());
    }
}
