//! Bounding-box versus gapped-wall collision test.
//!
//! The wall is the plane `x = wall_distance` with a tilted rectangular hole.
//! The section of the box by the plane is a convex polygon whose vertices are
//! exactly the edge/plane intersection points, so the box passes cleanly iff
//! every such point lies inside the (convex) hole.

use crate::dynamics::{QuadrotorParams, RigidBodyState};
use crate::geometry::Vec3;
use crate::real::Real;

use super::GapGeometry;

/// Corner `i` uses bit 0/1/2 for the sign along body x/y/z.
pub fn obb_corners<T: Real>(state: &RigidBodyState<T>, params: &QuadrotorParams<T>) -> [Vec3<T>; 8] {
    let half = T::lit(0.5);
    let h = [params.obb[0] * half, params.obb[1] * half, params.obb[2] * half];
    std::array::from_fn(|i| {
        let sign = |bit: usize| if i >> bit & 1 == 1 { T::one() } else { -T::one() };
        let local = Vec3::new(h[0] * sign(0), h[1] * sign(1), h[2] * sign(2));
        state.position + state.attitude.rotate(local)
    })
}

/// The 12 box edges as corner index pairs.
pub const OBB_EDGES: [(usize, usize); 12] = [
    (0, 1), (2, 3), (4, 5), (6, 7), // along x
    (0, 2), (1, 3), (4, 6), (5, 7), // along y
    (0, 4), (1, 5), (2, 6), (3, 7), // along z
];

/// Whether the box currently intersects the wall plane.
pub fn straddles_wall<T: Real>(state: &RigidBodyState<T>, params: &QuadrotorParams<T>, gap: &GapGeometry<T>) -> bool {
    let corners = obb_corners(state, params);
    let wx = gap.wall_distance;
    let lo = corners.iter().map(|c| c.x).fold(T::infinity(), T::min);
    let hi = corners.iter().map(|c| c.x).fold(T::neg_infinity(), T::max);
    lo <= wx && wx <= hi
}

/// Edge/plane intersection points of the box with the wall plane.
pub fn wall_section<T: Real>(state: &RigidBodyState<T>, params: &QuadrotorParams<T>, gap: &GapGeometry<T>) -> Vec<Vec3<T>> {
    let corners = obb_corners(state, params);
    let wx = gap.wall_distance;
    let mut points = Vec::new();
    for &(i, j) in &OBB_EDGES {
        let (a, b) = (corners[i], corners[j]);
        let (da, db) = (a.x - wx, b.x - wx);
        if da == T::zero() && db == T::zero() {
            points.push(a);
            points.push(b);
        } else if (da <= T::zero() && db >= T::zero()) || (da >= T::zero() && db <= T::zero()) {
            let t = da / (da - db);
            points.push(a + (b - a).scale(t));
        }
    }
    points
}

/// True iff the box crosses the wall plane with any part outside the hole.
pub fn collision_check<T: Real>(state: &RigidBodyState<T>, params: &QuadrotorParams<T>, gap: &GapGeometry<T>) -> bool {
    wall_section(state, params, gap).iter().any(|p| !gap.contains(p.y, p.z))
}
