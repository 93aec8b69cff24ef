//! Planar geometry: the surveillance zone, its cell lattice, FOV squares,
//! source angular spans, chord transit times and FOV overlap fractions.
//!
//! Source frames: every source emits into the half-plane that contains the
//! zone. Takeoff angles live in `[0, π]`, measured from the half-plane
//! boundary. Angle 0 points along the positive lattice axis of that boundary:
//!
//! | facing | angle 0 | angle π/2 | world direction of angle φ |
//! |--------|---------|-----------|----------------------------|
//! | north  | +x      | +y        | `( cos φ,  sin φ)`         |
//! | south  | +x      | -y        | `( cos φ, -sin φ)`         |
//! | east   | +y      | +x        | `( sin φ,  cos φ)`         |
//! | west   | +y      | -x        | `(-sin φ,  cos φ)`         |

use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, Mul, Sub};

use arrayvec::ArrayVec;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Slack used when deciding whether an FOV square fits inside the zone.
const FIT_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("cell ({col}, {row}) is outside the {n_cols}x{n_rows} lattice")]
    IndexOutOfRange {
        col: usize,
        row: usize,
        n_cols: usize,
        n_rows: usize,
    },
    #[error("source at ({x}, {y}) lies inside the square")]
    SourceInsideSquare { x: f64, y: f64 },
    #[error("speed must be positive, got {0}")]
    NonPositiveSpeed(f64),
    #[error("takeoff angle {0} is outside [0, pi]")]
    AngleOutOfRange(f64),
    #[error("invalid lattice: {0}")]
    InvalidLattice(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }
}

/// Closed axis-aligned rectangle given by two corners.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub min: Vec2,
    pub max: Vec2,
}

impl Rect {
    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn corners(&self) -> [Vec2; 4] {
        [
            self.min,
            Vec2::new(self.max.x, self.min.y),
            self.max,
            Vec2::new(self.min.x, self.max.y),
        ]
    }

    pub fn center(&self) -> Vec2 {
        Vec2::new(
            0.5 * (self.min.x + self.max.x),
            0.5 * (self.min.y + self.max.y),
        )
    }

    /// Parametric interval `[t_in, t_out]` (with `t_in >= 0`) over which the
    /// ray `origin + t * dir` lies inside the rectangle.
    pub fn ray_interval(&self, origin: Vec2, dir: Vec2) -> Option<(f64, f64)> {
        let mut t0 = 0.0_f64;
        let mut t1 = f64::INFINITY;
        for (o, d, lo, hi) in [
            (origin.x, dir.x, self.min.x, self.max.x),
            (origin.y, dir.y, self.min.y, self.max.y),
        ] {
            if d == 0.0 {
                if o < lo || o > hi {
                    return None;
                }
                continue;
            }
            let (mut a, mut b) = ((lo - o) / d, (hi - o) / d);
            if a > b {
                std::mem::swap(&mut a, &mut b);
            }
            t0 = t0.max(a);
            t1 = t1.min(b);
            if t0 > t1 {
                return None;
            }
        }
        Some((t0, t1))
    }
}

/// Axis-aligned square field of view.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Square {
    pub center: Vec2,
    pub side: f64,
}

impl Square {
    pub fn rect(&self) -> Rect {
        let h = 0.5 * self.side;
        Rect {
            min: Vec2::new(self.center.x - h, self.center.y - h),
            max: Vec2::new(self.center.x + h, self.center.y + h),
        }
    }

    /// Closed containment: the boundary counts as inside.
    pub fn contains(&self, p: Vec2) -> bool {
        let h = 0.5 * self.side;
        (p.x - self.center.x).abs() <= h && (p.y - self.center.y).abs() <= h
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Zone {
    pub origin: Vec2,
    pub width: f64,
    pub height: f64,
}

impl Zone {
    pub fn rect(&self) -> Rect {
        Rect {
            min: self.origin,
            max: Vec2::new(self.origin.x + self.width, self.origin.y + self.height),
        }
    }

    pub fn contains(&self, p: Vec2) -> bool {
        self.rect().contains(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Facing {
    North,
    South,
    East,
    West,
}

impl Facing {
    /// Unit world direction of a takeoff angle in this source frame.
    pub fn direction(self, angle: f64) -> Vec2 {
        let (s, c) = angle.sin_cos();
        match self {
            Facing::North => Vec2::new(c, s),
            Facing::South => Vec2::new(c, -s),
            Facing::East => Vec2::new(s, c),
            Facing::West => Vec2::new(-s, c),
        }
    }

    /// World offset expressed as (along-boundary, into-half-plane).
    fn local(self, v: Vec2) -> (f64, f64) {
        match self {
            Facing::North => (v.x, v.y),
            Facing::South => (v.x, -v.y),
            Facing::East => (v.y, v.x),
            Facing::West => (v.y, -v.x),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Facing::North => "north",
            Facing::South => "south",
            Facing::East => "east",
            Facing::West => "west",
        }
    }
}

/// A point emitting targets into the half-plane given by `facing`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Source {
    pub position: Vec2,
    pub facing: Facing,
    /// Targets per time-step.
    pub rate: f64,
}

/// Takeoff angles `[delta, delta + theta]` whose rays hit a square.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngularSpan {
    pub delta: f64,
    pub theta: f64,
}

impl AngularSpan {
    pub fn is_reachable(&self) -> bool {
        self.theta > 0.0
    }

    pub fn end(&self) -> f64 {
        self.delta + self.theta
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellIndex {
    pub col: usize,
    pub row: usize,
}

impl CellIndex {
    pub const fn new(col: usize, row: usize) -> Self {
        Self { col, row }
    }

    /// Chebyshev (king-move) distance.
    pub fn cheby(self, other: CellIndex) -> usize {
        self.col
            .abs_diff(other.col)
            .max(self.row.abs_diff(other.row))
    }

    pub fn offset(self, dcol: i64, drow: i64) -> Option<CellIndex> {
        let col = usize::try_from(self.col as i64 + dcol).ok()?;
        let row = usize::try_from(self.row as i64 + drow).ok()?;
        Some(CellIndex { col, row })
    }
}

impl fmt::Display for CellIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.col, self.row)
    }
}

/// Canonical move order: stay, N, NE, E, SE, S, SW, W, NW (north = +row).
pub const MOVES: [(i64, i64); 9] = [
    (0, 0),
    (0, 1),
    (1, 1),
    (1, 0),
    (1, -1),
    (0, -1),
    (-1, -1),
    (-1, 0),
    (-1, 1),
];

/// The zone discretised into square cells, plus the FOV side used by every
/// sensor. Cells whose centred FOV square fits entirely inside the zone are
/// admissible; they always form an index rectangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lattice {
    zone: Zone,
    cell_size: f64,
    fov_side: f64,
    n_cols: usize,
    n_rows: usize,
    cols: (usize, usize),
    rows: (usize, usize),
}

impl Lattice {
    pub fn new(zone: Zone, cell_size: f64, fov_side: f64) -> Result<Self, GeometryError> {
        let bad = |m: String| Err(GeometryError::InvalidLattice(m));
        if !(zone.width > 0.0 && zone.height > 0.0) {
            return bad(format!(
                "zone must have positive extent, got {}x{}",
                zone.width, zone.height
            ));
        }
        if !(cell_size > 0.0) {
            return bad(format!("cell_size must be positive, got {cell_size}"));
        }
        if !(fov_side >= cell_size) {
            return bad(format!(
                "fov_side ({fov_side}) must be at least cell_size ({cell_size})"
            ));
        }
        let count = |extent: f64, what: &str| -> Result<usize, GeometryError> {
            let n = (extent / cell_size).round();
            if n < 1.0 || (n * cell_size - extent).abs() > 1e-9 * extent.max(1.0) {
                return Err(GeometryError::InvalidLattice(format!(
                    "zone {what} {extent} is not a whole multiple of cell_size {cell_size}"
                )));
            }
            Ok(n as usize)
        };
        let n_cols = count(zone.width, "width")?;
        let n_rows = count(zone.height, "height")?;
        let half = 0.5 * fov_side;
        let fit = |n: usize, extent: f64| -> Option<(usize, usize)> {
            let ok = |i: usize| {
                let c = (i as f64 + 0.5) * cell_size;
                c - half >= -FIT_EPS && c + half <= extent + FIT_EPS
            };
            let lo = (0..n).find(|&i| ok(i))?;
            let hi = (0..n).rev().find(|&i| ok(i))?;
            Some((lo, hi))
        };
        let (cols, rows) = match (fit(n_cols, zone.width), fit(n_rows, zone.height)) {
            (Some(c), Some(r)) => (c, r),
            _ => (
                // empty admissible range
                (1, 0),
                (1, 0),
            ),
        };
        Ok(Self {
            zone,
            cell_size,
            fov_side,
            n_cols,
            n_rows,
            cols,
            rows,
        })
    }

    pub fn zone(&self) -> &Zone {
        &self.zone
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn fov_side(&self) -> f64 {
        self.fov_side
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    /// Inclusive admissible column range.
    pub fn admissible_cols(&self) -> (usize, usize) {
        self.cols
    }

    /// Inclusive admissible row range.
    pub fn admissible_rows(&self) -> (usize, usize) {
        self.rows
    }

    pub fn admissible_count(&self) -> usize {
        let span = |(lo, hi): (usize, usize)| if hi >= lo { hi - lo + 1 } else { 0 };
        span(self.cols) * span(self.rows)
    }

    pub fn check(&self, cell: CellIndex) -> Result<(), GeometryError> {
        if cell.col < self.n_cols && cell.row < self.n_rows {
            Ok(())
        } else {
            Err(GeometryError::IndexOutOfRange {
                col: cell.col,
                row: cell.row,
                n_cols: self.n_cols,
                n_rows: self.n_rows,
            })
        }
    }

    pub fn is_admissible(&self, cell: CellIndex) -> bool {
        (self.cols.0..=self.cols.1).contains(&cell.col)
            && (self.rows.0..=self.rows.1).contains(&cell.row)
    }

    /// Admissible cells in row-major order.
    pub fn admissible_cells(&self) -> impl Iterator<Item = CellIndex> + '_ {
        let (c0, c1) = self.cols;
        let (r0, r1) = self.rows;
        (r0..=r1).flat_map(move |row| (c0..=c1).map(move |col| CellIndex { col, row }))
    }

    /// Position of `cell` in [`Lattice::admissible_cells`] order.
    pub fn admissible_ordinal(&self, cell: CellIndex) -> Option<usize> {
        if !self.is_admissible(cell) {
            return None;
        }
        let width = self.cols.1 - self.cols.0 + 1;
        Some((cell.row - self.rows.0) * width + (cell.col - self.cols.0))
    }

    pub fn cell_center(&self, cell: CellIndex) -> Result<Vec2, GeometryError> {
        self.check(cell)?;
        Ok(Vec2::new(
            self.zone.origin.x + (cell.col as f64 + 0.5) * self.cell_size,
            self.zone.origin.y + (cell.row as f64 + 0.5) * self.cell_size,
        ))
    }

    /// The admissible cell whose center is nearest to `p`, if any.
    pub fn nearest_admissible(&self, p: Vec2) -> Option<CellIndex> {
        if self.admissible_count() == 0 {
            return None;
        }
        let idx = |v: f64, lo: usize, hi: usize| {
            let i = (v / self.cell_size - 0.5).round().max(0.0) as usize;
            i.clamp(lo, hi)
        };
        Some(CellIndex {
            col: idx(p.x - self.zone.origin.x, self.cols.0, self.cols.1),
            row: idx(p.y - self.zone.origin.y, self.rows.0, self.rows.1),
        })
    }

    /// `n` admissible cells spread over an evenly spaced grid.
    pub fn spread_cells(&self, n: usize) -> Vec<CellIndex> {
        if n == 0 || self.admissible_count() == 0 {
            return Vec::new();
        }
        let (c0, c1) = self.cols;
        let (r0, r1) = self.rows;
        let (w, h) = ((c1 - c0 + 1) as f64, (r1 - r0 + 1) as f64);
        let mut gc = ((n as f64 * w / h).sqrt().round() as usize).clamp(1, n);
        let mut gr = n.div_ceil(gc);
        while gc * gr < n {
            gc += 1;
            gr = n.div_ceil(gc);
        }
        let mut cells = Vec::with_capacity(n);
        'outer: for j in 0..gr {
            for i in 0..gc {
                if cells.len() == n {
                    break 'outer;
                }
                let col = c0 + (((i as f64 + 0.5) / gc as f64) * w).floor() as usize;
                let row = r0 + (((j as f64 + 0.5) / gr as f64) * h).floor() as usize;
                cells.push(CellIndex::new(col.min(c1), row.min(r1)));
            }
        }
        cells
    }
}

/// The FOV square of a sensor sitting at `cell`.
pub fn fov_square(cell: CellIndex, lattice: &Lattice) -> Result<Square, GeometryError> {
    Ok(Square {
        center: lattice.cell_center(cell)?,
        side: lattice.fov_side,
    })
}

fn wrap_pi(a: f64) -> f64 {
    let mut a = a % (2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    } else if a <= -PI {
        a += 2.0 * PI;
    }
    a
}

/// Range of takeoff angles from `source` whose rays hit `square`, clamped
/// to the source's `[0, π]` frame.
pub fn angular_span(source: &Source, square: &Square) -> Result<AngularSpan, GeometryError> {
    angular_span_rect(source, &square.rect())
}

pub(crate) fn angular_span_rect(
    source: &Source,
    rect: &Rect,
) -> Result<AngularSpan, GeometryError> {
    let p = source.position;
    if rect.contains(p) {
        return Err(GeometryError::SourceInsideSquare { x: p.x, y: p.y });
    }
    let angle_of = |v: Vec2| {
        let (u, w) = source.facing.local(v - p);
        w.atan2(u)
    };
    let reference = angle_of(rect.center());
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for corner in rect.corners() {
        let d = wrap_pi(angle_of(corner) - reference);
        lo = lo.min(d);
        hi = hi.max(d);
    }
    let (lo, hi) = (reference + lo, reference + hi);
    let mut best: Option<(f64, f64)> = None;
    for shift in [-2.0 * PI, 0.0, 2.0 * PI] {
        let a = (lo + shift).max(0.0);
        let b = (hi + shift).min(PI);
        if b > a && best.is_none_or(|(x, y)| b - a > y - x) {
            best = Some((a, b));
        }
    }
    Ok(match best {
        Some((a, b)) => AngularSpan {
            delta: a,
            theta: b - a,
        },
        None => AngularSpan {
            delta: lo.clamp(0.0, PI),
            theta: 0.0,
        },
    })
}

/// Chord length of the ray from `source` at `angle` through `rect`.
pub(crate) fn chord_length(source: &Source, angle: f64, rect: &Rect) -> Option<f64> {
    let dir = source.facing.direction(angle);
    rect.ray_interval(source.position, dir).map(|(a, b)| b - a)
}

/// Time a target launched at `takeoff_angle` spends inside `square`, or
/// `None` when its ray misses the square.
pub fn transit_time(
    source: &Source,
    takeoff_angle: f64,
    square: &Square,
    speed: f64,
) -> Result<Option<f64>, GeometryError> {
    if !(speed > 0.0) {
        return Err(GeometryError::NonPositiveSpeed(speed));
    }
    if !(0.0..=PI).contains(&takeoff_angle) {
        return Err(GeometryError::AngleOutOfRange(takeoff_angle));
    }
    Ok(chord_length(source, takeoff_angle, &square.rect()).map(|c| c / speed))
}

/// Fraction of FOV area shared by sensors at `a` and `b`.
pub fn overlap_fraction(
    a: CellIndex,
    b: CellIndex,
    lattice: &Lattice,
) -> Result<f64, GeometryError> {
    lattice.check(a)?;
    lattice.check(b)?;
    Ok(overlap_unchecked(a, b, lattice))
}

pub(crate) fn overlap_unchecked(a: CellIndex, b: CellIndex, lattice: &Lattice) -> f64 {
    if a == b {
        return 1.0;
    }
    let l = lattice.fov_side;
    let dx = a.col.abs_diff(b.col) as f64 * lattice.cell_size;
    let dy = a.row.abs_diff(b.row) as f64 * lattice.cell_size;
    (l - dx).max(0.0) * (l - dy).max(0.0) / (l * l)
}

/// The cell itself and its eight neighbours, restricted to admissible
/// cells, in [`MOVES`] order.
pub fn neighbors9(cell: CellIndex, lattice: &Lattice) -> ArrayVec<CellIndex, 9> {
    MOVES
        .iter()
        .filter_map(|&(dc, dr)| cell.offset(dc, dr))
        .filter(|c| lattice.is_admissible(*c))
        .collect()
}
