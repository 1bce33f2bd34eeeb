//! Small geometric primitives shared by the whole pipeline: axis-aligned
//! boxes, point/triangle queries and triangle/box overlap tests.

use nalgebra::Vector3;

pub type Vec3 = Vector3<f64>;

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn empty() -> Self {
        Aabb {
            min: Vec3::repeat(f64::INFINITY),
            max: Vec3::repeat(f64::NEG_INFINITY),
        }
    }

    pub fn from_points<'a, I: IntoIterator<Item = &'a Vec3>>(points: I) -> Self {
        let mut b = Aabb::empty();
        for p in points {
            b.grow(p);
        }
        b
    }

    pub fn grow(&mut self, p: &Vec3) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    pub fn merge(&mut self, other: &Aabb) {
        self.min = self.min.inf(&other.min);
        self.max = self.max.sup(&other.max);
    }

    pub fn is_empty(&self) -> bool {
        self.min.x > self.max.x
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn diagonal(&self) -> f64 {
        if self.is_empty() {
            0.0
        } else {
            self.extent().norm()
        }
    }

    /// Squared distance from `p` to this box (0 inside).
    pub fn dist_sq(&self, p: &Vec3) -> f64 {
        let mut d = 0.0;
        for i in 0..3 {
            let v = p[i];
            if v < self.min[i] {
                d += (self.min[i] - v) * (self.min[i] - v);
            } else if v > self.max[i] {
                d += (v - self.max[i]) * (v - self.max[i]);
            }
        }
        d
    }
}

/// Unnormalized triangle normal; its norm is twice the triangle area.
pub fn tri_normal_scaled(a: &Vec3, b: &Vec3, c: &Vec3) -> Vec3 {
    (b - a).cross(&(c - a))
}

pub fn tri_area(a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
    0.5 * tri_normal_scaled(a, b, c).norm()
}

/// Closest point on triangle (a, b, c) to `p`, after Ericson's
/// region-by-region case analysis.
pub fn closest_point_on_triangle(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> Vec3 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;

    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }

    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }

    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return a + ab * v;
    }

    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }

    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return a + ac * w;
    }

    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * w;
    }

    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    a + ab * v + ac * w
}

/// Exact triangle / axis-aligned-box overlap via the separating axis test
/// (box face normals, triangle plane, 9 edge cross products).
pub fn tri_aabb_overlap(a: &Vec3, b: &Vec3, c: &Vec3, box_min: &Vec3, box_max: &Vec3) -> bool {
    let center = (box_min + box_max) * 0.5;
    let half = (box_max - box_min) * 0.5;

    let v0 = a - center;
    let v1 = b - center;
    let v2 = c - center;

    // box face normals
    for i in 0..3 {
        let lo = v0[i].min(v1[i]).min(v2[i]);
        let hi = v0[i].max(v1[i]).max(v2[i]);
        if lo > half[i] || hi < -half[i] {
            return false;
        }
    }

    let e0 = v1 - v0;
    let e1 = v2 - v1;
    let e2 = v0 - v2;

    // triangle plane
    let n = e0.cross(&e1);
    let r = half.x * n.x.abs() + half.y * n.y.abs() + half.z * n.z.abs();
    let s = n.dot(&v0);
    if s.abs() > r {
        return false;
    }

    // 9 edge cross-product axes
    let edges = [e0, e1, e2];
    let axes = [Vec3::x(), Vec3::y(), Vec3::z()];
    for e in &edges {
        for u in &axes {
            let axis = u.cross(e);
            let r = half.x * axis.x.abs() + half.y * axis.y.abs() + half.z * axis.z.abs();
            let p0 = axis.dot(&v0);
            let p1 = axis.dot(&v1);
            let p2 = axis.dot(&v2);
            let lo = p0.min(p1).min(p2);
            let hi = p0.max(p1).max(p2);
            if lo > r || hi < -r {
                return false;
            }
        }
    }
    true
}

/// Moller-Trumbore ray/triangle intersection. Returns (t, u, v) for hits
/// with t > 0; `None` for misses and rays parallel to the plane.
pub fn ray_triangle(
    origin: &Vec3,
    dir: &Vec3,
    a: &Vec3,
    b: &Vec3,
    c: &Vec3,
) -> Option<(f64, f64, f64)> {
    let e1 = b - a;
    let e2 = c - a;
    let pvec = dir.cross(&e2);
    let det = e1.dot(&pvec);
    if det.abs() < 1e-14 {
        return None;
    }
    let inv_det = 1.0 / det;
    let tvec = origin - a;
    let u = tvec.dot(&pvec) * inv_det;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let qvec = tvec.cross(&e1);
    let v = dir.dot(&qvec) * inv_det;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = e2.dot(&qvec) * inv_det;
    if t <= 0.0 {
        return None;
    }
    Some((t, u, v))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closest_point_face_interior() {
        let a = Vec3::new(0.0, 0.0, 0.0);
        let b = Vec3::new(1.0, 0.0, 0.0);
        let c = Vec3::new(0.0, 1.0, 0.0);
        let p = Vec3::new(0.25, 0.25, 0.5);
        let q = closest_point_on_triangle(&p, &a, &b, &c);
        assert!((q - Vec3::new(0.25, 0.25, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn closest_point_vertex_region() {
        let a = Vec3::new(0.0, 0.0, 0.0);
        let b = Vec3::new(1.0, 0.0, 0.0);
        let c = Vec3::new(0.0, 1.0, 0.0);
        let p = Vec3::new(2.0, 0.0, 0.0);
        let q = closest_point_on_triangle(&p, &a, &b, &c);
        assert!((q - b).norm() < 1e-12);
    }

    #[test]
    fn tri_box_overlap_cases() {
        let a = Vec3::new(0.1, 0.1, 0.5);
        let b = Vec3::new(0.9, 0.1, 0.5);
        let c = Vec3::new(0.1, 0.9, 0.5);
        let lo = Vec3::new(0.0, 0.0, 0.0);
        let hi = Vec3::new(1.0, 1.0, 1.0);
        assert!(tri_aabb_overlap(&a, &b, &c, &lo, &hi));
        // same triangle well above the box
        let shift = Vec3::new(0.0, 0.0, 2.0);
        assert!(!tri_aabb_overlap(&(a + shift), &(b + shift), &(c + shift), &lo, &hi));
        // triangle plane slices a corner
        let a2 = Vec3::new(2.0, -1.0, -1.0);
        let b2 = Vec3::new(-1.0, 2.0, -1.0);
        let c2 = Vec3::new(-1.0, -1.0, 2.0);
        assert!(tri_aabb_overlap(&a2, &b2, &c2, &lo, &hi));
    }

    #[test]
    fn ray_hits_triangle() {
        let a = Vec3::new(0.0, 0.0, 1.0);
        let b = Vec3::new(1.0, 0.0, 1.0);
        let c = Vec3::new(0.0, 1.0, 1.0);
        let hit = ray_triangle(
            &Vec3::new(0.2, 0.2, 0.0),
            &Vec3::new(0.0, 0.0, 1.0),
            &a,
            &b,
            &c,
        );
        let (t, _, _) = hit.expect("should hit");
        assert!((t - 1.0).abs() < 1e-12);
        assert!(ray_triangle(&Vec3::new(2.0, 2.0, 0.0), &Vec3::new(0.0, 0.0, 1.0), &a, &b, &c).is_none());
    }

    #[test]
    fn aabb_distance() {
        let b = Aabb {
            min: Vec3::new(0.0, 0.0, 0.0),
            max: Vec3::new(1.0, 1.0, 1.0),
        };
        assert_eq!(b.dist_sq(&Vec3::new(0.5, 0.5, 0.5)), 0.0);
        assert!((b.dist_sq(&Vec3::new(2.0, 0.5, 0.5)) - 1.0).abs() < 1e-12);
    }
}
