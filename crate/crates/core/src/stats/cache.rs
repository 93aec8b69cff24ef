//! Versioned binary cache of a [`StatsTable`].
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! magic            8 bytes  "TSTEPSTA"
//! version          u32      = 1
//! fingerprint      32 bytes scenario fingerprint (SHA-256)
//! zone             4 x f64  origin.x, origin.y, width, height
//! cell_size        f64
//! fov_side         f64
//! n_sources        u32
//! n_cells          u32
//! n_cells records:
//!   col, row                         u32, u32
//!   arrival_rate                     f64
//!   expected_escape_time             f64
//!   expected_detections              f64
//!   n_sources source records:
//!     rate                           f64
//!     has_cdf                        u8 (0 or 1)
//!     if has_cdf:
//!       t_a, t_b, bin_width          3 x f64
//!       n_knots                      u32
//!       n_knots x (knot, cdf_value)  2 x f64
//! ```

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use thiserror::Error;

use super::{CellStats, EscapeCdf, StatsTable};
use crate::geometry::{CellIndex, Lattice, Vec2, Zone};
use crate::scenario::Fingerprint;

pub const MAGIC: &[u8; 8] = b"TSTEPSTA";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("i/o error on stats cache: {0}")]
    Io(#[from] io::Error),
    #[error("not a stats cache file (bad magic)")]
    BadMagic,
    #[error("unsupported stats cache version {found} (expected {VERSION})")]
    Version { found: u32 },
    #[error("stale stats cache: built for scenario {found}, current scenario is {expected}")]
    Stale {
        expected: Fingerprint,
        found: Fingerprint,
    },
    #[error("corrupt stats cache: {0}")]
    Corrupt(String),
}

pub fn write_table<W: Write>(table: &StatsTable, mut w: W) -> io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_u32::<LE>(VERSION)?;
    w.write_all(&table.fingerprint.0)?;
    let lat = table.lattice();
    let z = lat.zone();
    for v in [
        z.origin.x,
        z.origin.y,
        z.width,
        z.height,
        lat.cell_size(),
        lat.fov_side(),
    ] {
        w.write_f64::<LE>(v)?;
    }
    let n_sources = table.cells.first().map_or(0, |c| c.per_source_rates.len());
    w.write_u32::<LE>(n_sources as u32)?;
    w.write_u32::<LE>(table.cells.len() as u32)?;
    for c in &table.cells {
        w.write_u32::<LE>(c.cell.col as u32)?;
        w.write_u32::<LE>(c.cell.row as u32)?;
        w.write_f64::<LE>(c.arrival_rate)?;
        w.write_f64::<LE>(c.expected_escape_time)?;
        w.write_f64::<LE>(c.expected_detections)?;
        for (rate, cdf) in c.per_source_rates.iter().zip(&c.per_source_cdfs) {
            w.write_f64::<LE>(*rate)?;
            match cdf {
                None => w.write_u8(0)?,
                Some(cdf) => {
                    w.write_u8(1)?;
                    w.write_f64::<LE>(cdf.t_a)?;
                    w.write_f64::<LE>(cdf.t_b)?;
                    w.write_f64::<LE>(cdf.bin_width)?;
                    w.write_u32::<LE>(cdf.knots.len() as u32)?;
                    for (k, v) in cdf.knots.iter().zip(&cdf.cdf_values) {
                        w.write_f64::<LE>(*k)?;
                        w.write_f64::<LE>(*v)?;
                    }
                }
            }
        }
    }
    w.flush()
}

/// Reads a table, rejecting it unless it was built for `expected`.
pub fn read_table<R: Read>(mut r: R, expected: Fingerprint) -> Result<StatsTable, CacheError> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(CacheError::BadMagic);
    }
    let version = r.read_u32::<LE>()?;
    if version != VERSION {
        return Err(CacheError::Version { found: version });
    }
    let mut fp = [0u8; 32];
    r.read_exact(&mut fp)?;
    let found = Fingerprint(fp);
    if found != expected {
        return Err(CacheError::Stale { expected, found });
    }
    let mut f = || r.read_f64::<LE>();
    let (ox, oy, width, height, cell_size, fov_side) = (f()?, f()?, f()?, f()?, f()?, f()?);
    let lattice = Lattice::new(
        Zone {
            origin: Vec2::new(ox, oy),
            width,
            height,
        },
        cell_size,
        fov_side,
    )
    .map_err(|e| CacheError::Corrupt(e.to_string()))?;
    let n_sources = r.read_u32::<LE>()? as usize;
    let n_cells = r.read_u32::<LE>()? as usize;
    if n_cells != lattice.admissible_count() {
        return Err(CacheError::Corrupt(format!(
            "{n_cells} cell records for a lattice with {} admissible cells",
            lattice.admissible_count()
        )));
    }
    let mut cells = Vec::with_capacity(n_cells);
    for expect in lattice.admissible_cells() {
        let cell = CellIndex::new(r.read_u32::<LE>()? as usize, r.read_u32::<LE>()? as usize);
        if cell != expect {
            return Err(CacheError::Corrupt(format!(
                "record for {cell} where {expect} was expected"
            )));
        }
        let arrival_rate = r.read_f64::<LE>()?;
        let expected_escape_time = r.read_f64::<LE>()?;
        let expected_detections = r.read_f64::<LE>()?;
        let mut per_source_rates = Vec::with_capacity(n_sources);
        let mut per_source_cdfs = Vec::with_capacity(n_sources);
        for _ in 0..n_sources {
            per_source_rates.push(r.read_f64::<LE>()?);
            per_source_cdfs.push(match r.read_u8()? {
                0 => None,
                1 => {
                    let t_a = r.read_f64::<LE>()?;
                    let t_b = r.read_f64::<LE>()?;
                    let bin_width = r.read_f64::<LE>()?;
                    let n = r.read_u32::<LE>()? as usize;
                    let mut knots = Vec::with_capacity(n);
                    let mut cdf_values = Vec::with_capacity(n);
                    for _ in 0..n {
                        knots.push(r.read_f64::<LE>()?);
                        cdf_values.push(r.read_f64::<LE>()?);
                    }
                    if n == 0 {
                        return Err(CacheError::Corrupt("empty escape CDF".into()));
                    }
                    Some(EscapeCdf {
                        t_a,
                        t_b,
                        bin_width,
                        knots,
                        cdf_values,
                    })
                }
                b => return Err(CacheError::Corrupt(format!("bad cdf flag {b}"))),
            });
        }
        cells.push(CellStats {
            cell,
            arrival_rate,
            per_source_rates,
            per_source_cdfs,
            expected_escape_time,
            expected_detections,
        });
    }
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(CacheError::Corrupt(format!(
            "{} trailing bytes",
            rest.len()
        )));
    }
    Ok(StatsTable::from_parts(found, lattice, cells))
}

pub fn save(table: &StatsTable, path: &Path) -> io::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    write_table(table, BufWriter::new(File::create(path)?))
}

pub fn load(path: &Path, expected: Fingerprint) -> Result<StatsTable, CacheError> {
    read_table(BufReader::new(File::open(path)?), expected)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Facing, Source};
    use crate::scenario::{QuadratureParams, Scenario};
    use crate::stats::precompute_all;

    fn small() -> Scenario {
        Scenario {
            lattice: Lattice::new(
                Zone {
                    origin: Vec2::default(),
                    width: 160.0,
                    height: 120.0,
                },
                10.0,
                60.0,
            )
            .unwrap(),
            sources: vec![
                Source {
                    position: Vec2::new(80.0, -10.0),
                    facing: Facing::North,
                    rate: 0.3,
                },
                Source {
                    position: Vec2::new(-10.0, 60.0),
                    facing: Facing::East,
                    rate: 0.2,
                },
            ],
            target_speed: 10.0,
            quadrature: QuadratureParams {
                quadrature_n: 256,
                ..QuadratureParams::default()
            },
        }
    }

    #[test]
    fn round_trip_and_staleness() {
        let sc = small();
        let table = precompute_all(&sc).unwrap();
        let mut buf = Vec::new();
        write_table(&table, &mut buf).unwrap();
        let back = read_table(buf.as_slice(), sc.fingerprint()).unwrap();
        assert_eq!(back, table);

        let mut other = sc.clone();
        other.sources[0].rate = 0.31;
        assert!(matches!(
            read_table(buf.as_slice(), other.fingerprint()),
            Err(CacheError::Stale { .. })
        ));

        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(
            read_table(bad.as_slice(), sc.fingerprint()),
            Err(CacheError::BadMagic)
        ));
        let mut bad = buf.clone();
        bad[8] = 9;
        assert!(matches!(
            read_table(bad.as_slice(), sc.fingerprint()),
            Err(CacheError::Version { found: 9 })
        ));
        let mut bad = buf.clone();
        bad.push(0);
        assert!(matches!(
            read_table(bad.as_slice(), sc.fingerprint()),
            Err(CacheError::Corrupt(_))
        ));
        let truncated = &buf[..buf.len() - 5];
        assert!(matches!(
            read_table(truncated, sc.fingerprint()),
            Err(CacheError::Io(_))
        ));
    }
}
