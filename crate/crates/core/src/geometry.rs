//! Floorplans, tile placement and LOS/nLOS visibility.
//!
//! Everything here is axis-aligned: wall surfaces are rectangles whose edges
//! run along the coordinate axes and obstacles are boxes.

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

const EPS: f64 = 1e-9;

/// Serialised as `[x, y, z]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    /// Unit vector in the same direction. Returns the zero vector for zero input.
    pub fn normalized(self) -> Vec3 {
        let n = self.norm();
        if n == 0.0 {
            Vec3::ZERO
        } else {
            self * (1.0 / n)
        }
    }

    pub fn distance(self, o: Vec3) -> f64 {
        (self - o).norm()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn component(self, axis: usize) -> f64 {
        match axis {
            0 => self.x,
            1 => self.y,
            _ => self.z,
        }
    }

    /// Mirror image of `self` across the plane through `point` with unit normal `normal`.
    pub fn mirror(self, point: Vec3, normal: Vec3) -> Vec3 {
        self - normal * (2.0 * (self - point).dot(normal))
    }
}

impl From<[f64; 3]> for Vec3 {
    fn from(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl From<Vec3> for [f64; 3] {
    fn from(v: Vec3) -> Self {
        v.to_array()
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("surface `{0}` has zero area")]
    ZeroAreaSurface(String),
    #[error("tile side length must be positive, got {0}")]
    SideLengthNonPositive(f64),
    #[error("side length {side} does not divide surface `{surface}` edges")]
    NotDivisible { surface: String, side: f64 },
    #[error("surface `{0}` is not axis-aligned")]
    NotAxisAligned(String),
    #[error("visibility endpoints coincide")]
    DegeneratePoints,
    #[error("frequency must be positive, got {0}")]
    FrequencyNonPositive(f64),
    #[error("invalid floorplan: {0}")]
    InvalidFloorplan(String),
}

/// A planar rectangle spanned by two axis-aligned edge vectors.
///
/// The surface normal is `normalize(edge_u × edge_v)` and must point into
/// the room; swap the edges to flip it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Surface {
    pub id: String,
    pub origin: Vec3,
    pub edge_u: Vec3,
    pub edge_v: Vec3,
}

impl Surface {
    pub fn normal(&self) -> Vec3 {
        self.edge_u.cross(self.edge_v).normalized()
    }

    pub fn area(&self) -> f64 {
        self.edge_u.cross(self.edge_v).norm()
    }

    fn is_axis_aligned(&self) -> bool {
        let axis_count = |v: Vec3| v.to_array().iter().filter(|c| c.abs() > EPS).count();
        axis_count(self.edge_u) == 1 && axis_count(self.edge_v) == 1
    }
}

/// Axis-aligned box obstacle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Obstacle {
    pub min: Vec3,
    pub max: Vec3,
}

impl Obstacle {
    pub fn new(min: Vec3, max: Vec3) -> Self {
        Obstacle { min, max }
    }

    /// Does the open segment `p→q` pass through the box interior?
    ///
    /// Touching a face (e.g. a tile mounted on the box) does not count.
    pub fn intersects_segment(&self, p: Vec3, q: Vec3) -> bool {
        let d = q - p;
        let (mut t0, mut t1) = (0.0f64, 1.0f64);
        for axis in 0..3 {
            let lo = self.min.component(axis) + EPS;
            let hi = self.max.component(axis) - EPS;
            if lo >= hi {
                return false;
            }
            let o = p.component(axis);
            let v = d.component(axis);
            if v.abs() < 1e-15 {
                if o <= lo || o >= hi {
                    return false;
                }
            } else {
                let mut a = (lo - o) / v;
                let mut b = (hi - o) / v;
                if a > b {
                    std::mem::swap(&mut a, &mut b);
                }
                t0 = t0.max(a);
                t1 = t1.min(b);
                if t0 >= t1 {
                    return false;
                }
            }
        }
        t1 - t0 > EPS
    }

    /// Euclidean distance from a point to the box (0 inside).
    pub fn distance_to(&self, p: Vec3) -> f64 {
        let mut acc = 0.0;
        for axis in 0..3 {
            let c = p.component(axis);
            let lo = self.min.component(axis);
            let hi = self.max.component(axis);
            let d = if c < lo {
                lo - c
            } else if c > hi {
                c - hi
            } else {
                0.0
            };
            acc += d * d;
        }
        acc.sqrt()
    }

    /// Shrink towards the centre by `amount` on every side (clamped at the centre).
    pub fn shrunk(&self, amount: f64) -> Obstacle {
        let c = (self.min + self.max) * 0.5;
        let clamp = |lo: f64, hi: f64, mid: f64| ((lo + amount).min(mid), (hi - amount).max(mid));
        let (x0, x1) = clamp(self.min.x, self.max.x, c.x);
        let (y0, y1) = clamp(self.min.y, self.max.y, c.y);
        let (z0, z1) = clamp(self.min.z, self.max.z, c.z);
        Obstacle::new(Vec3::new(x0, y0, z0), Vec3::new(x1, y1, z1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Floorplan {
    pub surfaces: Vec<Surface>,
    #[serde(default)]
    pub obstacles: Vec<Obstacle>,
    #[serde(rename = "ceiling_height_m")]
    pub ceiling_height: f64,
}

impl Floorplan {
    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.ceiling_height > 0.0) {
            return Err(GeometryError::InvalidFloorplan(format!(
                "ceiling_height must be positive, got {}",
                self.ceiling_height
            )));
        }
        for s in &self.surfaces {
            if s.area() <= EPS {
                return Err(GeometryError::ZeroAreaSurface(s.id.clone()));
            }
            if !s.is_axis_aligned() {
                return Err(GeometryError::NotAxisAligned(s.id.clone()));
            }
        }
        if let Some((lo, hi)) = self.bounds() {
            for (i, o) in self.obstacles.iter().enumerate() {
                for axis in 0..3 {
                    if o.min.component(axis) < lo.component(axis) - 1e-6
                        || o.max.component(axis) > hi.component(axis) + 1e-6
                    {
                        return Err(GeometryError::InvalidFloorplan(format!(
                            "obstacle {i} leaves the bounding volume of the walls"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Bounding box of all wall surfaces.
    pub fn bounds(&self) -> Option<(Vec3, Vec3)> {
        let mut it = self.surfaces.iter().flat_map(|s| {
            [s.origin, s.origin + s.edge_u, s.origin + s.edge_v, s.origin + s.edge_u + s.edge_v]
        });
        let first = it.next()?;
        Some(it.fold((first, first), |(lo, hi), p| {
            (
                Vec3::new(lo.x.min(p.x), lo.y.min(p.y), lo.z.min(p.z)),
                Vec3::new(hi.x.max(p.x), hi.y.max(p.y), hi.z.max(p.z)),
            )
        }))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TilePlacement {
    pub tile_id: String,
    pub surface_id: String,
    pub center: Vec3,
    pub normal: Vec3,
    /// In-plane unit axes of the tile square.
    pub axis_u: Vec3,
    pub axis_v: Vec3,
    pub side_length: f64,
    /// `false` marks a virtual tile that only reflects specularly.
    pub coated: bool,
}

impl TilePlacement {
    /// Is `p` (assumed on the tile plane) inside the tile square?
    pub fn contains_in_plane(&self, p: Vec3) -> bool {
        let h = self.side_length * 0.5 + 1e-9;
        let d = p - self.center;
        d.dot(self.axis_u).abs() <= h && d.dot(self.axis_v).abs() <= h
    }

    /// Signed distance of `p` from the tile plane (positive in front).
    pub fn height_of(&self, p: Vec3) -> f64 {
        (p - self.center).dot(self.normal)
    }
}

/// Grid-tile a surface with squares of `side_length`.
///
/// When the side length does not divide an edge, the partial last row or
/// column is dropped if `allow_truncation` is set, otherwise an error is
/// returned.
pub fn tile_surface(
    surface: &Surface,
    side_length: f64,
    allow_truncation: bool,
    coated: bool,
) -> Result<Vec<TilePlacement>, GeometryError> {
    if !(side_length > 0.0) {
        return Err(GeometryError::SideLengthNonPositive(side_length));
    }
    if surface.area() <= EPS {
        return Err(GeometryError::ZeroAreaSurface(surface.id.clone()));
    }
    let lu = surface.edge_u.norm();
    let lv = surface.edge_v.norm();
    let count = |len: f64| -> Result<usize, GeometryError> {
        let n = (len / side_length + 1e-9).floor();
        let rem = len - n * side_length;
        if rem > 1e-9 && !allow_truncation {
            return Err(GeometryError::NotDivisible { surface: surface.id.clone(), side: side_length });
        }
        Ok(n as usize)
    };
    let (nu, nv) = (count(lu)?, count(lv)?);
    let u = surface.edge_u.normalized();
    let v = surface.edge_v.normalized();
    let normal = surface.normal();
    let mut tiles = Vec::with_capacity(nu * nv);
    for i in 0..nu {
        for j in 0..nv {
            let center = surface.origin
                + u * ((i as f64 + 0.5) * side_length)
                + v * ((j as f64 + 0.5) * side_length);
            tiles.push(TilePlacement {
                tile_id: format!("{}-{}-{}", surface.id, i, j),
                surface_id: surface.id.clone(),
                center,
                normal,
                axis_u: u,
                axis_v: v,
                side_length,
                coated,
            });
        }
    }
    Ok(tiles)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VisibilityKind {
    Los,
    Nlos,
    Blocked,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Visibility {
    pub kind: VisibilityKind,
    /// Smallest first-Fresnel-zone clearance fraction along the segment.
    pub clearance_ratio: f64,
    /// Multiplicative power factor in (0, 1].
    pub attenuation_factor: f64,
}

/// Knobs for the Fresnel-zone visibility test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FresnelRule {
    /// Clearance at or above which a segment counts as LOS.
    pub los_clearance: f64,
    /// Penalty in dB at zero clearance.
    pub max_penalty_db: f64,
    pub samples: usize,
}

impl Default for FresnelRule {
    fn default() -> Self {
        FresnelRule { los_clearance: 0.6, max_penalty_db: 6.0, samples: 16 }
    }
}

impl FresnelRule {
    /// Linear dB penalty from 0 (at the LOS threshold) to `max_penalty_db` (no clearance).
    pub fn attenuation(&self, clearance: f64) -> f64 {
        let deficit = (self.los_clearance - clearance).max(0.0) / self.los_clearance;
        10f64.powf(-self.max_penalty_db * deficit / 10.0)
    }
}

pub fn visibility(
    p: Vec3,
    q: Vec3,
    floorplan: &Floorplan,
    frequency_hz: f64,
) -> Result<Visibility, GeometryError> {
    visibility_with(p, q, &floorplan.obstacles, frequency_hz, &FresnelRule::default())
}

pub fn visibility_with(
    p: Vec3,
    q: Vec3,
    obstacles: &[Obstacle],
    frequency_hz: f64,
    rule: &FresnelRule,
) -> Result<Visibility, GeometryError> {
    if !(frequency_hz > 0.0) {
        return Err(GeometryError::FrequencyNonPositive(frequency_hz));
    }
    let d = p.distance(q);
    if d < EPS {
        return Err(GeometryError::DegeneratePoints);
    }
    if obstacles.iter().any(|o| o.intersects_segment(p, q)) {
        return Ok(Visibility { kind: VisibilityKind::Blocked, clearance_ratio: 0.0, attenuation_factor: 0.0 });
    }
    let lambda = SPEED_OF_LIGHT / frequency_hz;
    let n = rule.samples.max(1);
    let mut clearance = 1.0f64;
    // Samples at (i + 1/2)/n keep the set symmetric under p <-> q.
    for i in 0..n {
        let s = (i as f64 + 0.5) / n as f64;
        let point = p + (q - p) * s;
        let (d1, d2) = (s * d, (1.0 - s) * d);
        let r1 = (lambda * d1 * d2 / d).sqrt();
        for o in obstacles {
            let c = (o.distance_to(point) / r1).min(1.0);
            clearance = clearance.min(c);
        }
    }
    if clearance >= rule.los_clearance {
        Ok(Visibility { kind: VisibilityKind::Los, clearance_ratio: clearance, attenuation_factor: 1.0 })
    } else {
        Ok(Visibility {
            kind: VisibilityKind::Nlos,
            clearance_ratio: clearance,
            attenuation_factor: rule.attenuation(clearance),
        })
    }
}
