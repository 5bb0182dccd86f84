//! Oriented bounding boxes: overlap by separating axes and Euclidean
//! distance between disjoint boxes.

use crate::vehicle::{EgoState, VehicleParams};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientedBox {
    pub cx: f64,
    pub cy: f64,
    pub theta: f64,
    pub length: f64,
    pub width: f64,
}

type P = (f64, f64);

impl OrientedBox {
    /// The ego footprint; the state refers to the rear axle.
    pub fn ego(state: &EgoState, params: &VehicleParams) -> Self {
        let (s, c) = state.theta.sin_cos();
        let o = params.center_offset();
        Self {
            cx: state.x + o * c,
            cy: state.y + o * s,
            theta: state.theta,
            length: params.length,
            width: params.width,
        }
    }

    pub fn corners(&self) -> [P; 4] {
        let (s, c) = self.theta.sin_cos();
        let (hl, hw) = (0.5 * self.length, 0.5 * self.width);
        let at = |l: f64, w: f64| (self.cx + l * c - w * s, self.cy + l * s + w * c);
        [at(hl, hw), at(-hl, hw), at(-hl, -hw), at(hl, -hw)]
    }

    fn axes(&self) -> [P; 2] {
        let (s, c) = self.theta.sin_cos();
        [(c, s), (-s, c)]
    }

    pub fn overlaps(&self, other: &OrientedBox) -> bool {
        let (a, b) = (self.corners(), other.corners());
        for axis in self.axes().into_iter().chain(other.axes()) {
            let (amin, amax) = extent(&a, axis);
            let (bmin, bmax) = extent(&b, axis);
            if amax < bmin || bmax < amin {
                return false;
            }
        }
        true
    }
}

fn extent(pts: &[P; 4], axis: P) -> (f64, f64) {
    pts.iter()
        .map(|p| p.0 * axis.0 + p.1 * axis.1)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| (lo.min(d), hi.max(d)))
}

fn point_segment(p: P, a: P, b: P) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    ((p.0 - a.0 - t * dx).powi(2) + (p.1 - a.1 - t * dy).powi(2)).sqrt()
}

/// Minimum distance between two boxes, 0 when they overlap.
pub fn bounding_box_distance(a: &OrientedBox, b: &OrientedBox) -> f64 {
    if a.overlaps(b) {
        return 0.0;
    }
    // for disjoint convex polygons the minimum is attained at a vertex of one
    // polygon against an edge of the other
    let (ca, cb) = (a.corners(), b.corners());
    let mut best = f64::INFINITY;
    for (pts, other) in [(&ca, &cb), (&cb, &ca)] {
        for &p in pts.iter() {
            for i in 0..4 {
                best = best.min(point_segment(p, other[i], other[(i + 1) % 4]));
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn square(cx: f64, cy: f64, theta: f64) -> OrientedBox {
        OrientedBox {
            cx,
            cy,
            theta,
            length: 1.0,
            width: 1.0,
        }
    }

    #[test]
    fn identical_boxes_touch() {
        let b = square(1.0, 2.0, 0.3);
        assert_eq!(bounding_box_distance(&b, &b), 0.0);
    }

    #[test]
    fn axis_aligned_gap() {
        assert_relative_eq!(bounding_box_distance(&square(0.0, 0.0, 0.0), &square(3.0, 0.0, 0.0)), 2.0);
        let d = bounding_box_distance(&square(0.0, 0.0, 0.0), &square(3.0, 3.0, 0.0));
        assert_relative_eq!(d, 8.0f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn ego_box_from_rear_axle() {
        let p = VehicleParams::default();
        let b = OrientedBox::ego(&EgoState::default(), &p);
        assert_relative_eq!(b.cx, 1.35);
        let xs: Vec<f64> = b.corners().iter().map(|c| c.0).collect();
        assert_relative_eq!(xs.iter().cloned().fold(f64::MIN, f64::max), 3.6);
        assert_relative_eq!(xs.iter().cloned().fold(f64::MAX, f64::min), -0.9);
    }

    /// Boundary point at perimeter parameter `t ∈ [0, 4)`.
    fn boundary(b: &OrientedBox, t: f64) -> P {
        let c = b.corners();
        let i = (t.floor() as usize).min(3);
        let f = t - i as f64;
        let (a, e) = (c[i], c[(i + 1) % 4]);
        (a.0 + f * (e.0 - a.0), a.1 + f * (e.1 - a.1))
    }

    /// Grid search over boundary parameter pairs with successive local
    /// refinement.
    fn brute_distance(a: &OrientedBox, b: &OrientedBox) -> f64 {
        let dist = |s: f64, t: f64| {
            let (p, q) = (boundary(a, s.rem_euclid(4.0)), boundary(b, t.rem_euclid(4.0)));
            ((p.0 - q.0).powi(2) + (p.1 - q.1).powi(2)).sqrt()
        };
        let n = 400;
        let (mut bs, mut bt, mut best) = (0.0, 0.0, f64::INFINITY);
        let mut h = 4.0 / n as f64;
        for i in 0..n {
            for j in 0..n {
                let (s, t) = (i as f64 * h, j as f64 * h);
                let d = dist(s, t);
                if d < best {
                    (bs, bt, best) = (s, t, d);
                }
            }
        }
        for _ in 0..6 {
            let (cs, ct) = (bs, bt);
            for i in -20..=20 {
                for j in -20..=20 {
                    let (s, t) = (cs + i as f64 * h / 10.0, ct + j as f64 * h / 10.0);
                    let d = dist(s, t);
                    if d < best {
                        (bs, bt, best) = (s, t, d);
                    }
                }
            }
            h /= 10.0;
        }
        best
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn boxes() -> impl Strategy<Value = OrientedBox> {
            (-6.0f64..6.0, -6.0f64..6.0, -3.2f64..3.2, 0.2f64..5.0, 0.2f64..3.0).prop_map(
                |(cx, cy, theta, length, width)| OrientedBox { cx, cy, theta, length, width },
            )
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]

            #[test]
            fn matches_boundary_sampling(a in boxes(), b in boxes()) {
                let d = bounding_box_distance(&a, &b);
                if a.overlaps(&b) {
                    prop_assert_eq!(d, 0.0);
                } else {
                    let brute = brute_distance(&a, &b);
                    prop_assert!((brute - d).abs() < 1e-3, "exact {} sampled {}", d, brute);
                }
            }

            #[test]
            fn symmetric(a in boxes(), b in boxes()) {
                prop_assert_eq!(bounding_box_distance(&a, &b), bounding_box_distance(&b, &a));
            }
        }
    }
}
