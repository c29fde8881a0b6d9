//! Capsule links and the fixed collision pair list.

use super::geometry::{segment_segment, Segment, SegmentDistance};
use super::kinematics::{Biped, Landmark, PointJacobian};
use super::{Side, TerrainGeometry, DOF};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Link {
    Torso,
    Thigh(Side),
    Shank(Side),
    Foot(Side),
}

impl Link {
    pub const ALL: [Link; 7] = [
        Link::Torso,
        Link::Thigh(Side::Left),
        Link::Shank(Side::Left),
        Link::Foot(Side::Left),
        Link::Thigh(Side::Right),
        Link::Shank(Side::Right),
        Link::Foot(Side::Right),
    ];

    pub fn name(self) -> String {
        match self {
            Link::Torso => "torso".into(),
            Link::Thigh(s) => format!("thigh_{}", s.name()),
            Link::Shank(s) => format!("shank_{}", s.name()),
            Link::Foot(s) => format!("foot_{}", s.name()),
        }
    }

    /// Skeleton endpoints of the capsule.
    pub fn skeleton(self) -> (Landmark, Landmark) {
        match self {
            Link::Torso => (Landmark::Base, Landmark::TorsoTop),
            Link::Thigh(s) => (Landmark::Base, Landmark::Knee(s)),
            Link::Shank(s) => (Landmark::Knee(s), Landmark::ShankLow(s)),
            Link::Foot(s) => (Landmark::Heel(s), Landmark::Toe(s)),
        }
    }

    pub fn radius(self, biped: &Biped) -> f64 {
        match self {
            Link::Torso => biped.params.torso_radius,
            _ => biped.params.limb_radius,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PairTarget {
    Ground,
    Obstacle(usize),
    Link(Link),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CollisionPair {
    pub link: Link,
    pub target: PairTarget,
}

struct Skeleton {
    seg: Segment,
    ja: PointJacobian,
    jb: PointJacobian,
}

fn skeleton(biped: &Biped, link: Link, q: &[f64]) -> Skeleton {
    let (a, b) = link.skeleton();
    let ja = biped.landmark(a).jacobian(q);
    let jb = biped.landmark(b).jacobian(q);
    Skeleton {
        seg: Segment::new(ja.p, jb.p),
        ja,
        jb,
    }
}

fn chain(sk: &Skeleton, d: &SegmentDistance, grad: &mut [f64; DOF]) {
    for k in 0..DOF {
        grad[k] += d.grad_a.x * sk.ja.jx[k]
            + d.grad_a.y * sk.ja.jy[k]
            + d.grad_b.x * sk.jb.jx[k]
            + d.grad_b.y * sk.jb.jy[k];
    }
}

impl CollisionPair {
    pub fn label(&self) -> String {
        let target = match self.target {
            PairTarget::Ground => "ground".to_string(),
            PairTarget::Obstacle(k) => format!("obstacle{k}"),
            PairTarget::Link(l) => l.name(),
        };
        format!("{}/{}", self.link.name(), target)
    }

    /// The pair with its two sides exchanged (self pairs only).
    pub fn swapped(&self) -> Option<CollisionPair> {
        match self.target {
            PairTarget::Link(other) => Some(CollisionPair {
                link: other,
                target: PairTarget::Link(self.link),
            }),
            _ => None,
        }
    }

    /// Capsule signed distance and its gradient with respect to `q`.
    pub fn signed_distance(
        &self,
        biped: &Biped,
        terrain: &TerrainGeometry,
        q: &[f64],
    ) -> (f64, [f64; DOF]) {
        let sk = skeleton(biped, self.link, q);
        let mut grad = [0.0; DOF];
        let r = self.link.radius(biped);
        let sd = match self.target {
            PairTarget::Ground => {
                let d = terrain.ground.signed_distance(&sk.seg);
                chain(&sk, &d, &mut grad);
                d.distance - r
            }
            PairTarget::Obstacle(k) => {
                let d = terrain.obstacles[k].signed_distance(&sk.seg);
                chain(&sk, &d, &mut grad);
                d.distance - r
            }
            PairTarget::Link(other) => {
                let sk2 = skeleton(biped, other, q);
                let (d1, d2) = segment_segment(&sk.seg, &sk2.seg);
                chain(&sk, &d1, &mut grad);
                chain(&sk2, &d2, &mut grad);
                d1.distance - r - other.radius(biped)
            }
        };
        (sd, grad)
    }
}

/// Pairs checked for one configuration. Feet marked in `contact` are exempt
/// from the ground, which they must touch. Adjacent links and pairs of links
/// on opposite legs are not checked: both legs move in the same plane.
pub fn collision_pairs(contact: [bool; 2], n_obstacles: usize) -> Vec<CollisionPair> {
    let mut pairs = Vec::new();
    for link in Link::ALL {
        let exempt = match link {
            Link::Foot(Side::Left) => contact[0],
            Link::Foot(Side::Right) => contact[1],
            _ => false,
        };
        if !exempt {
            pairs.push(CollisionPair {
                link,
                target: PairTarget::Ground,
            });
        }
        for k in 0..n_obstacles {
            pairs.push(CollisionPair {
                link,
                target: PairTarget::Obstacle(k),
            });
        }
    }
    for side in Side::BOTH {
        for other in [Link::Shank(side), Link::Foot(side)] {
            pairs.push(CollisionPair {
                link: Link::Torso,
                target: PairTarget::Link(other),
            });
        }
    }
    pairs
}

/// All signed distances for `q` under the given contact exemptions.
pub fn signed_distances(
    biped: &Biped,
    terrain: &TerrainGeometry,
    q: &[f64],
    contact: [bool; 2],
) -> Vec<(String, f64, [f64; DOF])> {
    collision_pairs(contact, terrain.obstacles.len())
        .into_iter()
        .map(|p| {
            let (sd, g) = p.signed_distance(biped, terrain, q);
            (p.label(), sd, g)
        })
        .collect()
}
