use crate::geometry::Point;

/// Oriented rectangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Obb {
    pub center: Point,
    pub heading: f64,
    pub half_length: f64,
    pub half_width: f64,
}

impl Obb {
    fn axes(&self) -> [[f64; 2]; 2] {
        let (s, c) = self.heading.sin_cos();
        [[c, s], [-s, c]]
    }

    pub fn half_diagonal(&self) -> f64 {
        self.half_length.hypot(self.half_width)
    }

    pub fn corners(&self) -> [Point; 4] {
        let [u, v] = self.axes();
        let (l, w) = (self.half_length, self.half_width);
        let at = |a: f64, b: f64| [self.center[0] + u[0] * a + v[0] * b, self.center[1] + u[1] * a + v[1] * b];
        [at(l, w), at(-l, w), at(-l, -w), at(l, -w)]
    }

    /// Projection radius of the rectangle onto unit `axis`.
    fn radius_on(&self, axis: [f64; 2]) -> f64 {
        let [u, v] = self.axes();
        self.half_length * dot(u, axis).abs() + self.half_width * dot(v, axis).abs()
    }

    pub fn contains(&self, p: Point) -> bool {
        let [u, v] = self.axes();
        let r = [p[0] - self.center[0], p[1] - self.center[1]];
        dot(r, u).abs() <= self.half_length && dot(r, v).abs() <= self.half_width
    }
}

fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// Separating-axis overlap test. Touching rectangles do not overlap.
pub fn obb_overlap(a: &Obb, b: &Obb) -> bool {
    let t = [b.center[0] - a.center[0], b.center[1] - a.center[1]];
    if t[0].hypot(t[1]) >= a.half_diagonal() + b.half_diagonal() {
        return false;
    }
    let axes = a.axes().into_iter().chain(b.axes());
    for axis in axes {
        if dot(t, axis).abs() >= a.radius_on(axis) + b.radius_on(axis) {
            return false;
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rect(x: f64, y: f64, h: f64) -> Obb {
        Obb { center: [x, y], heading: h, half_length: 2.5, half_width: 1.0 }
    }

    #[test]
    fn identical_pose_overlaps() {
        let a = rect(3.0, 4.0, 0.7);
        assert!(obb_overlap(&a, &a));
    }

    #[test]
    fn far_apart_never_overlaps() {
        let a = rect(0.0, 0.0, 0.3);
        let b = rect(a.half_diagonal() * 2.0 + 0.01, 0.0, 1.1);
        assert!(!obb_overlap(&a, &b));
    }

    #[test]
    fn same_lane_bumper_contact() {
        assert!(obb_overlap(&rect(0.0, 0.0, 0.0), &rect(4.9, 0.0, 0.0)));
        assert!(!obb_overlap(&rect(0.0, 0.0, 0.0), &rect(5.1, 0.0, 0.0)));
        // Adjacent lanes 4 m apart never touch.
        assert!(!obb_overlap(&rect(0.0, 0.0, 0.0), &rect(0.0, 4.0, 0.0)));
    }

    #[test]
    fn rotated_corner_case_needs_both_axis_sets() {
        // A diamond near the corner of an axis-aligned box: separated only on
        // the rotated box's axes.
        let a = Obb { center: [0.0, 0.0], heading: 0.0, half_length: 1.0, half_width: 1.0 };
        let b = Obb { center: [2.3, 2.3], heading: std::f64::consts::FRAC_PI_4, half_length: 1.0, half_width: 1.0 };
        assert!(!obb_overlap(&a, &b));
        assert!(!obb_overlap(&b, &a));
    }
}
