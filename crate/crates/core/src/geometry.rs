//! Segments in the plane and the geometric statistics used by both models.
//!
//! A segment is stored by its center, its length and an axial direction in
//! `[0, π)`; directions `φ` and `φ + π` describe the same segment.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};

/// Absolute tolerance of the orientation predicate.
pub const ORIENTATION_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const ORIGIN: Point2 = Point2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    #[inline]
    pub fn norm_sq(self) -> f64 {
        self.x * self.x + self.y * self.y
    }

    #[inline]
    fn sub(self, o: Point2) -> Point2 {
        Point2::new(self.x - o.x, self.y - o.y)
    }

    /// Rotation about the origin.
    pub fn rotated(self, angle: f64) -> Point2 {
        let (s, c) = angle.sin_cos();
        Point2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }
}

/// Reduces an angle to the axial range `[0, π)`.
#[inline]
pub fn axial(angle: f64) -> f64 {
    let r = angle.rem_euclid(PI);
    // rem_euclid can return PI itself for tiny negative inputs
    if r >= PI {
        0.0
    } else {
        r
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Segment {
    pub center: Point2,
    pub length: f64,
    /// Axial direction in `[0, π)`.
    pub direction: f64,
}

impl Segment {
    /// Builds a segment, reducing `direction` modulo π.
    pub fn new(center: Point2, length: f64, direction: f64) -> Self {
        Self {
            center,
            length,
            direction: axial(direction),
        }
    }

    /// Checked constructor for data coming from outside the crate.
    pub fn try_new(center: Point2, length: f64, direction: f64) -> Result<Self> {
        if !(center.x.is_finite() && center.y.is_finite()) {
            return Err(Error::invalid("segment center must be finite"));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::invalid(format!(
                "segment length must be positive, got {length}"
            )));
        }
        if !direction.is_finite() {
            return Err(Error::invalid("segment direction must be finite"));
        }
        Ok(Self::new(center, length, direction))
    }

    pub fn endpoints(&self) -> (Point2, Point2) {
        let (s, c) = self.direction.sin_cos();
        let h = 0.5 * self.length;
        (
            Point2::new(self.center.x - h * c, self.center.y - h * s),
            Point2::new(self.center.x + h * c, self.center.y + h * s),
        )
    }

    /// True iff the two closed segments share at least one point.
    pub fn intersects(&self, other: &Segment) -> bool {
        let dx = self.center.x - other.center.x;
        let dy = self.center.y - other.center.y;
        let reach = 0.5 * (self.length + other.length);
        if dx * dx + dy * dy > reach * reach * (1.0 + 1e-12) + ORIENTATION_EPS {
            return false;
        }
        let (p1, p2) = self.endpoints();
        let (q1, q2) = other.endpoints();
        closed_segments_intersect(p1, p2, q1, q2)
    }

    /// Rotation of the whole segment about the origin.
    pub fn rotate(&self, angle: f64) -> Segment {
        Segment::new(
            self.center.rotated(angle),
            self.length,
            self.direction + angle,
        )
    }

    /// Largest distance of a point of the segment from the origin, divided by
    /// the disk diameter. The maximum of a convex function over a segment is
    /// attained at an endpoint.
    pub fn max_norm_distance(&self, disk: &DiskWindow) -> f64 {
        let (p, q) = self.endpoints();
        p.norm().max(q.norm()) / disk.diameter
    }

    pub fn contained_in_disk(&self, disk: &DiskWindow) -> bool {
        let (p, q) = self.endpoints();
        let rad2 = disk.radius() * disk.radius();
        let tol = 1e-12 * rad2.max(1.0);
        p.norm_sq() <= rad2 + tol && q.norm_sq() <= rad2 + tol
    }
}

#[inline]
fn cross(o: Point2, a: Point2, b: Point2) -> f64 {
    let u = a.sub(o);
    let v = b.sub(o);
    u.x * v.y - u.y * v.x
}

#[inline]
fn orientation(o: Point2, a: Point2, b: Point2) -> i8 {
    let c = cross(o, a, b);
    if c > ORIENTATION_EPS {
        1
    } else if c < -ORIENTATION_EPS {
        -1
    } else {
        0
    }
}

/// `q` lies in the bounding box of `p`-`r` (used once collinearity is known).
#[inline]
fn within_box(p: Point2, q: Point2, r: Point2) -> bool {
    let e = ORIENTATION_EPS;
    q.x <= p.x.max(r.x) + e
        && q.x >= p.x.min(r.x) - e
        && q.y <= p.y.max(r.y) + e
        && q.y >= p.y.min(r.y) - e
}

fn closed_segments_intersect(p1: Point2, p2: Point2, q1: Point2, q2: Point2) -> bool {
    let o1 = orientation(p1, p2, q1);
    let o2 = orientation(p1, p2, q2);
    let o3 = orientation(q1, q2, p1);
    let o4 = orientation(q1, q2, p2);

    if o1 != o2 && o3 != o4 {
        return true;
    }
    (o1 == 0 && within_box(p1, q1, p2))
        || (o2 == 0 && within_box(p1, q2, p2))
        || (o3 == 0 && within_box(q1, p1, q2))
        || (o4 == 0 && within_box(q1, p2, q2))
}

/// A finite collection of segments; order carries no meaning.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Configuration {
    pub segments: Vec<Segment>,
}

impl Configuration {
    pub fn new(segments: Vec<Segment>) -> Self {
        Self { segments }
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Segment> {
        self.segments.iter()
    }

    /// Number of segments of `self`, other than entries identical to `u`,
    /// hit by `u`.
    pub fn hit_count(&self, u: &Segment) -> usize {
        self.segments
            .iter()
            .filter(|v| *v != u && u.intersects(v))
            .count()
    }

    /// Number of unordered intersecting pairs.
    pub fn total_intersections(&self) -> usize {
        let s = &self.segments;
        let mut n = 0;
        for i in 0..s.len() {
            for j in (i + 1)..s.len() {
                if s[i].intersects(&s[j]) {
                    n += 1;
                }
            }
        }
        n
    }

    /// Sum of the normalised maximal distances `d(u)` over the configuration.
    pub fn distance_sum(&self, disk: &DiskWindow) -> f64 {
        crate::numerics::compensated_sum(self.segments.iter().map(|u| u.max_norm_distance(disk)))
    }

    pub fn all_in_disk(&self, disk: &DiskWindow) -> bool {
        self.segments.iter().all(|u| u.contained_in_disk(disk))
    }

    /// Serialises as CSV with header `cx,cy,r,phi`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "cx,cy,r,phi")?;
        let mut line = String::new();
        for s in &self.segments {
            line.clear();
            let _ = write!(
                line,
                "{},{},{},{}",
                s.center.x, s.center.y, s.length, s.direction
            );
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut segments = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let trimmed = line.trim();
            if i == 0 {
                if trimmed != "cx,cy,r,phi" {
                    return Err(Error::Parse {
                        line: 1,
                        message: format!("expected header `cx,cy,r,phi`, found `{trimmed}`"),
                    });
                }
                continue;
            }
            if trimmed.is_empty() {
                continue;
            }
            let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
            if fields.len() != 4 {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("expected 4 fields, found {}", fields.len()),
                });
            }
            let mut v = [0.0; 4];
            for (slot, f) in v.iter_mut().zip(&fields) {
                *slot = f.parse().map_err(|e| Error::Parse {
                    line: i + 1,
                    message: format!("`{f}`: {e}"),
                })?;
            }
            let seg = Segment::try_new(Point2::new(v[0], v[1]), v[2], v[3]).map_err(|e| {
                Error::Parse {
                    line: i + 1,
                    message: e.to_string(),
                }
            })?;
            segments.push(seg);
        }
        Ok(Configuration { segments })
    }
}

impl FromIterator<Segment> for Configuration {
    fn from_iter<I: IntoIterator<Item = Segment>>(iter: I) -> Self {
        Configuration::new(iter.into_iter().collect())
    }
}

/// Axis-aligned rectangle; segment centers are constrained to it, the
/// segments themselves may stick out.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RectWindow {
    pub origin: Point2,
    pub width: f64,
    pub height: f64,
}

impl RectWindow {
    pub fn new(origin: Point2, width: f64, height: f64) -> Result<Self> {
        if !(width > 0.0 && height > 0.0 && width.is_finite() && height.is_finite()) {
            return Err(Error::invalid(
                "rectangle window needs positive finite width and height",
            ));
        }
        Ok(Self {
            origin,
            width,
            height,
        })
    }

    pub fn unit_square() -> Self {
        Self {
            origin: Point2::ORIGIN,
            width: 1.0,
            height: 1.0,
        }
    }

    pub fn area(&self) -> f64 {
        self.width * self.height
    }

    pub fn contains(&self, p: Point2) -> bool {
        p.x >= self.origin.x
            && p.x <= self.origin.x + self.width
            && p.y >= self.origin.y
            && p.y <= self.origin.y + self.height
    }

    pub fn centroid(&self) -> Point2 {
        Point2::new(
            self.origin.x + 0.5 * self.width,
            self.origin.y + 0.5 * self.height,
        )
    }
}

/// Disk centered at the origin, parametrised by its diameter.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiskWindow {
    pub diameter: f64,
}

impl DiskWindow {
    pub fn new(diameter: f64) -> Result<Self> {
        if !(diameter > 0.0 && diameter.is_finite()) {
            return Err(Error::invalid(format!(
                "disk diameter must be positive, got {diameter}"
            )));
        }
        Ok(Self { diameter })
    }

    pub fn radius(&self) -> f64 {
        0.5 * self.diameter
    }

    pub fn area(&self) -> f64 {
        PI * self.radius() * self.radius()
    }

    pub fn contains(&self, p: Point2) -> bool {
        p.norm() <= self.radius()
    }
}

/// Window for segment centers.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Window {
    Rect(RectWindow),
    Disk(DiskWindow),
}

impl Window {
    pub fn area(&self) -> f64 {
        match self {
            Window::Rect(w) => w.area(),
            Window::Disk(d) => d.area(),
        }
    }

    pub fn contains(&self, p: Point2) -> bool {
        match self {
            Window::Rect(w) => w.contains(p),
            Window::Disk(d) => d.contains(p),
        }
    }

    pub fn centroid(&self) -> Point2 {
        match self {
            Window::Rect(w) => w.centroid(),
            Window::Disk(_) => Point2::ORIGIN,
        }
    }
}

impl From<RectWindow> for Window {
    fn from(w: RectWindow) -> Self {
        Window::Rect(w)
    }
}

impl From<DiskWindow> for Window {
    fn from(d: DiskWindow) -> Self {
        Window::Disk(d)
    }
}
