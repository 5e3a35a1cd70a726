//! Position fixes from anchor ranges.
//!
//! Anchors sit at `(0, 0)`, `(x2, 0)` and `(0, y3)`. Subtracting the circle
//! equations pairwise gives a closed form that is total for any positive
//! ranges; [`multilaterate_ls`] handles arbitrary anchor sets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Agent;

/// Points this far outside the arena still count as inside.
const BOUNDS_SLACK_M: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnchorLayout {
    /// x coordinate of anchor 2, which sits on the x axis.
    pub a2_x: f64,
    /// y coordinate of anchor 3, which sits on the y axis.
    pub a3_y: f64,
}

impl Default for AnchorLayout {
    /// Anchors at the corners of a 3 m x 3 m grid.
    fn default() -> Self {
        Self { a2_x: 3.0, a3_y: 3.0 }
    }
}

impl AnchorLayout {
    pub fn new(a2_x: f64, a3_y: f64) -> Result<Self> {
        let l = Self { a2_x, a3_y };
        l.validate()?;
        Ok(l)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a2_x.is_finite() && self.a2_x > 0.0 && self.a3_y.is_finite() && self.a3_y > 0.0) {
            return Err(Error::Geometry(format!(
                "anchor layout needs a2_x > 0 and a3_y > 0, got ({}, {})",
                self.a2_x, self.a3_y
            )));
        }
        Ok(())
    }

    pub fn anchors(&self) -> [Point; 3] {
        [
            Point::new(0.0, 0.0),
            Point::new(self.a2_x, 0.0),
            Point::new(0.0, self.a3_y),
        ]
    }

    /// The arena is the rectangle spanned by the anchors.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        (-BOUNDS_SLACK_M..=self.a2_x + BOUNDS_SLACK_M).contains(&x)
            && (-BOUNDS_SLACK_M..=self.a3_y + BOUNDS_SLACK_M).contains(&y)
    }

    /// A position at `(x, y)` with its out-of-bounds flag set against this arena.
    pub fn position(&self, x: f64, y: f64) -> Position {
        Position {
            x,
            y,
            out_of_bounds: !self.contains(x, y),
        }
    }

    /// Exact ranges from every anchor to `p`.
    pub fn ranges_to(&self, p: Point) -> [f64; 3] {
        self.anchors().map(|a| a.distance(p))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// A fix in the anchor frame. Fixes outside the arena are kept and flagged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
    pub out_of_bounds: bool,
}

impl Position {
    pub fn point(&self) -> Point {
        Point::new(self.x, self.y)
    }
}

impl From<Point> for Position {
    fn from(p: Point) -> Self {
        Self {
            x: p.x,
            y: p.y,
            out_of_bounds: false,
        }
    }
}

/// One agent's ranges to anchors 1..=3 at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceVector {
    pub agent: Agent,
    pub timestamp: f64,
    pub d: [f64; 3],
}

impl DistanceVector {
    pub fn new(agent: Agent, timestamp: f64, d: [f64; 3]) -> Result<Self> {
        let v = Self { agent, timestamp, d };
        v.validate()?;
        Ok(v)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(bad) = self.d.iter().find(|d| !(d.is_finite() && **d > 0.0)) {
            return Err(Error::Geometry(format!(
                "{} range {bad} is not positive and finite",
                self.agent
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PositionRecord {
    pub timestamp: f64,
    pub agent_id: Agent,
    pub x: f64,
    pub y: f64,
    pub out_of_bounds: bool,
}

/// Writes a `timestamp,agent_id,x,y,out_of_bounds` CSV stream.
pub fn write_positions<W: std::io::Write>(
    writer: W,
    records: impl IntoIterator<Item = PositionRecord>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Closed-form fix from three ranges.
pub fn trilaterate(d: &DistanceVector, layout: &AnchorLayout) -> Result<Position> {
    layout.validate()?;
    d.validate()?;
    let [d1, d2, d3] = d.d;
    let (x2, y3) = (layout.a2_x, layout.a3_y);
    let x = (x2 * x2 + d1 * d1 - d2 * d2) / (2.0 * x2);
    let y = (y3 * y3 + d1 * d1 - d3 * d3) / (2.0 * y3);
    Ok(layout.position(x, y))
}

/// RMS range misfit of `p`: zero iff the ranges are exactly consistent with it.
pub fn residual(d: &DistanceVector, layout: &AnchorLayout, p: &Position) -> f64 {
    let anchors = layout.anchors();
    let ss: f64 = anchors
        .iter()
        .zip(d.d)
        .map(|(a, di)| (a.distance(p.point()) - di).powi(2))
        .sum();
    (ss / 3.0).sqrt()
}

pub fn separation(h: &Position, r: &Position) -> f64 {
    h.point().distance(r.point())
}

/// One range observation for [`multilaterate_ls`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Range {
    pub anchor: Point,
    pub distance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LsFix {
    pub position: Point,
    pub converged: bool,
    pub iterations: usize,
    /// Sum of squared range residuals at `position`.
    pub cost: f64,
}

pub const LS_MAX_ITERATIONS: usize = 100;
pub const LS_STEP_TOLERANCE_M: f64 = 1e-9;

fn ls_cost(ranges: &[Range], p: Point) -> f64 {
    ranges
        .iter()
        .map(|r| (r.anchor.distance(p) - r.distance).powi(2))
        .sum()
}

/// Nonlinear least-squares fix (Levenberg-Marquardt) from `initial`.
///
/// Stops when an accepted step is shorter than [`LS_STEP_TOLERANCE_M`]; after
/// [`LS_MAX_ITERATIONS`] the best iterate is returned with `converged = false`.
pub fn multilaterate_ls(ranges: &[Range], initial: Point) -> Result<LsFix> {
    if ranges.len() < 3 {
        return Err(Error::Geometry(format!(
            "need at least 3 anchors, got {}",
            ranges.len()
        )));
    }
    if let Some(r) = ranges
        .iter()
        .find(|r| !(r.distance.is_finite() && r.distance >= 0.0))
    {
        return Err(Error::Geometry(format!("bad range {}", r.distance)));
    }
    if !spans_plane(ranges) {
        return Err(Error::Geometry("anchors are collinear".into()));
    }

    let mut p = initial;
    let mut cost = ls_cost(ranges, p);
    let mut lambda = 1e-3;

    for it in 1..=LS_MAX_ITERATIONS {
        // normal equations (J^T J) and J^T r
        let (mut h11, mut h12, mut h22, mut g1, mut g2) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for r in ranges {
            let (dx, dy) = (p.x - r.anchor.x, p.y - r.anchor.y);
            let rho = dx.hypot(dy).max(1e-12);
            let (jx, jy) = (dx / rho, dy / rho);
            let res = rho - r.distance;
            h11 += jx * jx;
            h12 += jx * jy;
            h22 += jy * jy;
            g1 += jx * res;
            g2 += jy * res;
        }

        let mut accepted = None;
        while lambda < 1e12 {
            let (a, d) = (h11 + lambda * h11.max(1e-12), h22 + lambda * h22.max(1e-12));
            let det = a * d - h12 * h12;
            if det.abs() < f64::MIN_POSITIVE {
                lambda *= 10.0;
                continue;
            }
            let sx = -(d * g1 - h12 * g2) / det;
            let sy = -(a * g2 - h12 * g1) / det;
            let cand = Point::new(p.x + sx, p.y + sy);
            let c = ls_cost(ranges, cand);
            if c <= cost {
                lambda = (lambda / 10.0).max(1e-12);
                accepted = Some((cand, c, sx.hypot(sy)));
                break;
            }
            lambda *= 10.0;
        }

        match accepted {
            Some((cand, c, step)) => {
                p = cand;
                cost = c;
                if step < LS_STEP_TOLERANCE_M {
                    return Ok(LsFix { position: p, converged: true, iterations: it, cost });
                }
            }
            // no descent direction left: p is a stationary point
            None => return Ok(LsFix { position: p, converged: true, iterations: it, cost }),
        }
    }
    Ok(LsFix {
        position: p,
        converged: false,
        iterations: LS_MAX_ITERATIONS,
        cost,
    })
}

fn spans_plane(ranges: &[Range]) -> bool {
    let a = ranges[0].anchor;
    let scale = ranges
        .iter()
        .map(|r| r.anchor.distance(a))
        .fold(0.0, f64::max)
        .max(1e-12);
    ranges.iter().skip(1).any(|b| {
        ranges.iter().skip(1).any(|c| {
            let cross = (b.anchor.x - a.x) * (c.anchor.y - a.y) - (b.anchor.y - a.y) * (c.anchor.x - a.x);
            cross.abs() > 1e-9 * scale * scale
        })
    })
}

/// Least-squares refinement of a three-anchor fix, seeded with the closed form.
pub fn refine(d: &DistanceVector, layout: &AnchorLayout) -> Result<LsFix> {
    let start = trilaterate(d, layout)?;
    let ranges: Vec<Range> = layout
        .anchors()
        .iter()
        .zip(d.d)
        .map(|(&anchor, distance)| Range { anchor, distance })
        .collect();
    multilaterate_ls(&ranges, start.point())
}
