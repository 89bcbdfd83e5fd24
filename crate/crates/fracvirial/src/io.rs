//! Field container and CSV exports.
//!
//! Binary layout: dim and M as little-endian u64, then L, s, sigma as little-endian f64,
//! then interleaved (re, im) f64 pairs in row-major order.

use std::io::{Read, Write};

use num_complex::Complex64;

use crate::domain::DomainRunLog;
use crate::error::{Error, Result};
use crate::evolve::RunLog;
use crate::grid::{FieldOnGrid, Grid};

#[derive(Clone, Debug)]
pub struct FieldFile {
    pub field: FieldOnGrid,
    pub s: f64,
    pub sigma: f64,
}

pub fn write_field<W: Write>(mut w: W, u: &FieldOnGrid, s: f64, sigma: f64) -> Result<()> {
    let g = &u.grid;
    w.write_all(&(g.dim() as u64).to_le_bytes())?;
    w.write_all(&(g.points() as u64).to_le_bytes())?;
    for v in [g.half_length(), s, sigma] {
        w.write_all(&v.to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(16 * u.values.len());
    for z in &u.values {
        buf.extend_from_slice(&z.re.to_le_bytes());
        buf.extend_from_slice(&z.im.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_field<R: Read>(mut r: R) -> Result<FieldFile> {
    let mut word = [0u8; 8];
    let mut next = |r: &mut R| -> Result<[u8; 8]> {
        r.read_exact(&mut word)?;
        Ok(word)
    };
    let dim = u64::from_le_bytes(next(&mut r)?) as usize;
    let points = u64::from_le_bytes(next(&mut r)?) as usize;
    let half_length = f64::from_le_bytes(next(&mut r)?);
    let s = f64::from_le_bytes(next(&mut r)?);
    let sigma = f64::from_le_bytes(next(&mut r)?);
    if !(1..=2).contains(&dim) || points > 1 << 16 {
        return Err(Error::InvalidInput(format!("bad field header: dim {dim}, M {points}")));
    }
    let grid = Grid::new(dim, half_length, points)?;
    let mut bytes = vec![0u8; 16 * grid.len()];
    r.read_exact(&mut bytes)?;
    let values = bytes
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().unwrap());
            let im = f64::from_le_bytes(c[8..].try_into().unwrap());
            Complex64::new(re, im)
        })
        .collect();
    Ok(FieldFile { field: FieldOnGrid::new(&grid, values)?, s, sigma })
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::InvalidInput(format!("csv: {other:?}")),
    }
}

/// Header row followed by numeric rows, written with shortest round-trip formatting.
pub fn write_table<W: Write>(w: W, header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(header).map_err(csv_err)?;
    for row in rows {
        out.write_record(row.iter().map(|v| format!("{v:e}"))).map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

/// One row per grid point: coordinates, re, im.
pub fn field_csv<W: Write>(w: W, u: &FieldOnGrid) -> Result<()> {
    let g = &u.grid;
    let header: &[&str] = if g.dim() == 1 { &["x", "re", "im"] } else { &["x", "y", "re", "im"] };
    let rows = u.values.iter().enumerate().map(|(i, z)| {
        let p = g.position(i);
        let mut row = p[..g.dim()].to_vec();
        row.extend([z.re, z.im]);
        row
    });
    write_table(w, header, rows)
}

/// One row per snapshot: t, dt, E, M, grad_norm, boundary mass, band fraction, M_R per radius.
pub fn run_log_csv<W: Write>(w: W, log: &RunLog) -> Result<()> {
    let mut header: Vec<String> =
        ["t", "dt", "energy", "mass", "grad_norm", "boundary_mass", "band_fraction"].map(String::from).to_vec();
    header.extend(log.radii.iter().map(|r| format!("m_r_{r}")));
    let h: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    let rows = (0..log.times.len()).map(|k| {
        let mut row = vec![
            log.times[k],
            log.dt_used[k],
            log.energy[k],
            log.mass[k],
            log.grad_norm[k],
            log.boundary_mass[k],
            log.band_fraction[k],
        ];
        row.extend(log.m_r.iter().map(|s| s[k]));
        row
    });
    write_table(w, &h, rows)
}

/// Virial right-hand side samples: t, R, then the terms.
pub fn rhs_csv<W: Write>(w: W, log: &RunLog) -> Result<()> {
    let header = [
        "t",
        "radius",
        "m_phi",
        "hessian",
        "biharmonic",
        "nonlinear",
        "rhs_total",
        "localization_defect",
        "tail_nonlinear",
        "core",
        "plancherel_gap",
    ];
    let rows = log.rhs.iter().flat_map(|s| {
        s.reports.iter().map(move |r| {
            let d = &r.decomposition;
            vec![
                s.time,
                r.radius,
                r.m_phi,
                r.hessian_term,
                r.biharmonic_term,
                r.nonlinear_term,
                r.rhs_total,
                d.localization_defect,
                d.tail_nonlinear,
                d.core_identity,
                d.plancherel_gap,
            ]
        })
    });
    write_table(w, &header, rows)
}

pub fn domain_log_csv<W: Write>(w: W, log: &DomainRunLog) -> Result<()> {
    let header =
        ["t", "dt", "energy", "mass", "form", "virial", "derivative", "bound", "pohozaev_slack", "sbp_defect", "band_fraction"];
    let rows = (0..log.times.len()).map(|k| {
        vec![
            log.times[k],
            log.dt_used[k],
            log.energy[k],
            log.mass[k],
            log.form[k],
            log.virial[k],
            log.derivative[k],
            log.bound[k],
            log.pohozaev_slack[k],
            log.sbp_defect[k],
            log.band_fraction[k],
        ]
    });
    write_table(w, &header, rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn field_roundtrip_is_bit_exact() {
        let g = Grid::new(2, 5.0, 16).unwrap();
        let u = FieldOnGrid::from_fn(&g, |x| Complex64::new(x[0].sin(), x[1] / 3.0));
        let mut buf = Vec::new();
        write_field(&mut buf, &u, 0.8, 1.0).unwrap();
        assert_eq!(buf.len(), 40 + 16 * 256);
        let back = read_field(buf.as_slice()).unwrap();
        assert_eq!(back.field.values, u.values);
        assert_eq!((back.s, back.sigma), (0.8, 1.0));
        assert!(read_field(&buf[..100]).is_err());
    }
}
