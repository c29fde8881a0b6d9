//! Planar segment distances and signed distances with endpoint gradients.
//!
//! Every signed-distance routine returns the distance between a segment
//! skeleton and a shape together with its gradient with respect to the two
//! segment endpoints. Capsule radii are subtracted by the caller.

use nalgebra::{Matrix2, Vector2};

pub type Vec2 = Vector2<f64>;

const EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub a: Vec2,
    pub b: Vec2,
}

impl Segment {
    pub fn new(a: Vec2, b: Vec2) -> Self {
        Self { a, b }
    }

    pub fn at(&self, t: f64) -> Vec2 {
        self.a + (self.b - self.a) * t
    }
}

/// Signed distance of a segment and its gradients `(∂/∂a, ∂/∂b)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentDistance {
    pub distance: f64,
    pub grad_a: Vec2,
    pub grad_b: Vec2,
}

impl SegmentDistance {
    fn zero_grad(distance: f64) -> Self {
        Self {
            distance,
            grad_a: Vec2::zeros(),
            grad_b: Vec2::zeros(),
        }
    }
}

fn cross(u: &Vec2, v: &Vec2) -> f64 {
    u.x * v.y - u.y * v.x
}

/// Closest point parameter on `seg` to `p`.
pub fn closest_on_segment(seg: &Segment, p: &Vec2) -> f64 {
    let d = seg.b - seg.a;
    let len2 = d.norm_squared();
    if len2 < EPS {
        return 0.0;
    }
    ((p - seg.a).dot(&d) / len2).clamp(0.0, 1.0)
}

pub fn point_segment_distance(seg: &Segment, p: &Vec2) -> (f64, f64) {
    let t = closest_on_segment(seg, p);
    ((p - seg.at(t)).norm(), t)
}

/// Closest parameters `(s, t)` between two segments.
pub fn closest_between(s1: &Segment, s2: &Segment) -> (f64, f64) {
    let d1 = s1.b - s1.a;
    let d2 = s2.b - s2.a;
    let r = s1.a - s2.a;
    let a = d1.norm_squared();
    let e = d2.norm_squared();
    let f = d2.dot(&r);
    if a <= EPS && e <= EPS {
        return (0.0, 0.0);
    }
    if a <= EPS {
        return (0.0, (f / e).clamp(0.0, 1.0));
    }
    let c = d1.dot(&r);
    if e <= EPS {
        return ((-c / a).clamp(0.0, 1.0), 0.0);
    }
    let b = d1.dot(&d2);
    let denom = a * e - b * b;
    let mut s = if denom > EPS * a * e {
        ((b * f - c * e) / denom).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let mut t = (b * s + f) / e;
    if t < 0.0 {
        t = 0.0;
        s = (-c / a).clamp(0.0, 1.0);
    } else if t > 1.0 {
        t = 1.0;
        s = ((b - c) / a).clamp(0.0, 1.0);
    }
    (s, t)
}

pub fn segments_intersect(s1: &Segment, s2: &Segment) -> bool {
    let (s, t) = closest_between(s1, s2);
    (s1.at(s) - s2.at(t)).norm() <= EPS
}

/// Unsigned distance between two segments with gradients with respect to
/// the first segment's endpoints and the second's.
pub fn segment_segment(s1: &Segment, s2: &Segment) -> (SegmentDistance, SegmentDistance) {
    let (s, t) = closest_between(s1, s2);
    let diff = s1.at(s) - s2.at(t);
    let dist = diff.norm();
    if dist <= EPS {
        return (SegmentDistance::zero_grad(0.0), SegmentDistance::zero_grad(0.0));
    }
    let n = diff / dist;
    (
        SegmentDistance {
            distance: dist,
            grad_a: n * (1.0 - s),
            grad_b: n * s,
        },
        SegmentDistance {
            distance: dist,
            grad_a: -n * (1.0 - t),
            grad_b: -n * t,
        },
    )
}

/// Ground surface: the solid region below a polyline that is monotone in x.
/// The polyline is extended horizontally beyond its end points.
#[derive(Debug, Clone, PartialEq)]
pub struct Ground {
    points: Vec<Vec2>,
}

impl Ground {
    pub fn new(points: &[[f64; 2]]) -> Self {
        let mut pts: Vec<Vec2> = points.iter().map(|p| Vec2::new(p[0], p[1])).collect();
        if let (Some(first), Some(last)) = (pts.first().copied(), pts.last().copied()) {
            pts.insert(0, Vec2::new(first.x - 1e3, first.y));
            pts.push(Vec2::new(last.x + 1e3, last.y));
        }
        Self { points: pts }
    }

    pub fn segments(&self) -> impl Iterator<Item = Segment> + '_ {
        self.points.windows(2).map(|w| Segment::new(w[0], w[1]))
    }

    pub fn height(&self, x: f64) -> f64 {
        let i = self.points.partition_point(|p| p.x <= x);
        if i == 0 {
            return self.points[0].y;
        }
        if i >= self.points.len() {
            return self.points[self.points.len() - 1].y;
        }
        let (p, q) = (self.points[i - 1], self.points[i]);
        p.y + (q.y - p.y) * (x - p.x) / (q.x - p.x)
    }

    pub fn is_below(&self, p: &Vec2) -> bool {
        p.y < self.height(p.x)
    }

    /// Closest surface point to `p` (lowest segment index on ties).
    fn closest_surface(&self, p: &Vec2) -> (f64, Vec2) {
        let mut best = (f64::INFINITY, *p);
        for seg in self.segments() {
            let (d, t) = point_segment_distance(&seg, p);
            if d < best.0 {
                best = (d, seg.at(t));
            }
        }
        best
    }

    /// Signed distance of a segment skeleton to the ground solid.
    pub fn signed_distance(&self, skel: &Segment) -> SegmentDistance {
        let mut best: Option<(f64, SegmentDistance)> = None;
        let mut touching = false;
        for seg in self.segments() {
            let (d, _) = segment_segment(skel, &seg);
            if d.distance <= EPS {
                touching = true;
            }
            if best.as_ref().is_none_or(|(bd, _)| d.distance < *bd) {
                best = Some((d.distance, d));
            }
        }
        let below_a = self.is_below(&skel.a);
        let below_b = self.is_below(&skel.b);
        if !below_a && !below_b && !touching {
            return best.map(|(_, d)| d).unwrap_or(SegmentDistance::zero_grad(f64::INFINITY));
        }

        // Penetration: deepest endpoint below the surface, or deepest ground
        // vertex poking above the skeleton.
        let mut deepest = SegmentDistance::zero_grad(0.0);
        for (is_a, p, below) in [(true, skel.a, below_a), (false, skel.b, below_b)] {
            if !below {
                continue;
            }
            let (depth, c) = self.closest_surface(&p);
            if depth > -deepest.distance && depth > EPS {
                let g = (c - p) / depth;
                deepest = SegmentDistance {
                    distance: -depth,
                    grad_a: if is_a { g } else { Vec2::zeros() },
                    grad_b: if is_a { Vec2::zeros() } else { g },
                };
            }
        }
        let (lo, hi) = if skel.a.x <= skel.b.x {
            (skel.a, skel.b)
        } else {
            (skel.b, skel.a)
        };
        let span = hi.x - lo.x;
        for v in &self.points {
            if v.x < lo.x || v.x > hi.x || span <= EPS {
                continue;
            }
            let line_y = lo.y + (hi.y - lo.y) * (v.x - lo.x) / span;
            if v.y <= line_y {
                continue;
            }
            let (depth, t) = point_segment_distance(skel, v);
            if depth > -deepest.distance && depth > EPS {
                let n = (skel.at(t) - v) / depth;
                deepest = SegmentDistance {
                    distance: -depth,
                    grad_a: -n * (1.0 - t),
                    grad_b: -n * t,
                };
            }
        }
        deepest
    }
}

/// Convex polygon with counterclockwise vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexPolygon {
    pub vertices: Vec<Vec2>,
}

impl ConvexPolygon {
    pub fn new(points: &[[f64; 2]]) -> Self {
        Self {
            vertices: points.iter().map(|p| Vec2::new(p[0], p[1])).collect(),
        }
    }

    pub fn is_convex_ccw(&self) -> bool {
        let n = self.vertices.len();
        n >= 3
            && (0..n).all(|i| {
                let (a, b, c) = (
                    self.vertices[i],
                    self.vertices[(i + 1) % n],
                    self.vertices[(i + 2) % n],
                );
                cross(&(b - a), &(c - b)) > 0.0
            })
    }

    pub fn edges(&self) -> impl Iterator<Item = Segment> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| Segment::new(self.vertices[i], self.vertices[(i + 1) % n]))
    }

    pub fn contains(&self, p: &Vec2) -> bool {
        self.edges().all(|e| cross(&(e.b - e.a), &(p - e.a)) >= 0.0)
    }

    fn projection(&self, axis: &Vec2) -> (f64, Vec2, f64, Vec2) {
        let mut lo = (f64::INFINITY, Vec2::zeros());
        let mut hi = (f64::NEG_INFINITY, Vec2::zeros());
        for v in &self.vertices {
            let p = axis.dot(v);
            if p < lo.0 {
                lo = (p, *v);
            }
            if p > hi.0 {
                hi = (p, *v);
            }
        }
        (lo.0, lo.1, hi.0, hi.1)
    }

    /// Signed distance of a segment skeleton to the polygon; negative values
    /// are the minimum translation depth along the separating-axis candidates.
    pub fn signed_distance(&self, skel: &Segment) -> SegmentDistance {
        let mut sep = SegmentDistance::zero_grad(f64::INFINITY);
        for e in self.edges() {
            let (d, _) = segment_segment(skel, &e);
            if d.distance < sep.distance {
                sep = d;
            }
        }
        let inside = self.contains(&skel.a) || self.contains(&skel.b);
        if sep.distance > EPS && !inside {
            return sep;
        }

        // overlap along each candidate axis; the smallest one is the depth
        let mut best = SegmentDistance::zero_grad(f64::NEG_INFINITY);
        let mut consider = |cand: SegmentDistance| {
            if cand.distance > best.distance {
                best = cand;
            }
        };
        for e in self.edges() {
            let dir = e.b - e.a;
            let len = dir.norm();
            if len <= EPS {
                continue;
            }
            let n = Vec2::new(dir.y, -dir.x) / len;
            let (pmin, _, pmax, _) = self.projection(&n);
            let (pa, pb) = (n.dot(&skel.a), n.dot(&skel.b));
            // push the skeleton out along +n
            let (smin_is_a, smin) = if pa <= pb { (true, pa) } else { (false, pb) };
            consider(SegmentDistance {
                distance: smin - pmax,
                grad_a: if smin_is_a { n } else { Vec2::zeros() },
                grad_b: if smin_is_a { Vec2::zeros() } else { n },
            });
            // or along -n
            let (smax_is_a, smax) = if pa >= pb { (true, pa) } else { (false, pb) };
            consider(SegmentDistance {
                distance: pmin - smax,
                grad_a: if smax_is_a { -n } else { Vec2::zeros() },
                grad_b: if smax_is_a { Vec2::zeros() } else { -n },
            });
        }
        let d = skel.b - skel.a;
        let len = d.norm();
        if len > EPS {
            let u = d / len;
            let rot = Matrix2::new(0.0, -1.0, 1.0, 0.0);
            let m = rot * u;
            let proj = (Matrix2::identity() - u * u.transpose()) / len;
            let (pmin, vmin, pmax, vmax) = self.projection(&m);
            let s = m.dot(&skel.a);
            // f = m·(e0 − v⁺): polygon left on the −m side
            let w = skel.a - vmax;
            let du = proj * (rot.transpose() * w);
            consider(SegmentDistance {
                distance: s - pmax,
                grad_a: m - du,
                grad_b: du,
            });
            // f = m·(v⁻ − e0): polygon left on the +m side
            let w = vmin - skel.a;
            let du = proj * (rot.transpose() * w);
            consider(SegmentDistance {
                distance: pmin - s,
                grad_a: -m - du,
                grad_b: du,
            });
        }
        best
    }
}
