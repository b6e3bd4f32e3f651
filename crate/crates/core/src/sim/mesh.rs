//! Synthetic ellipsoid vertex sets standing in for an asteroid shape model.

use crate::constraints::fibonacci_directions;
use crate::dynamics::Vec3;
use crate::error::{Error, Result};

/// Fibonacci-sphere points scaled onto the ellipsoid with the given semi-axes.
pub fn generate_ellipsoid_mesh(semi_axes: Vec3, n_points: usize) -> Result<Vec<Vec3>> {
    if n_points < 4 {
        return Err(Error::Mesh(format!(
            "need at least 4 points, got {n_points}"
        )));
    }
    if semi_axes.iter().any(|a| !(*a > 0.0)) {
        return Err(Error::Mesh(format!(
            "semi-axes must be positive, got {semi_axes:?}"
        )));
    }
    Ok(fibonacci_directions(n_points)
        .into_iter()
        .map(|d| d.component_mul(&semi_axes))
        .collect())
}

/// Smallest and largest nearest-neighbor distance over the vertex set.
pub fn nearest_neighbor_spacing(points: &[Vec3]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = 0.0_f64;
    for (i, p) in points.iter().enumerate() {
        let nn = points
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, q)| (p - q).norm_squared())
            .fold(f64::INFINITY, f64::min)
            .sqrt();
        lo = lo.min(nn);
        hi = hi.max(nn);
    }
    (lo, hi)
}

/// Ellipsoid volume, m³.
pub fn ellipsoid_volume(semi_axes: Vec3) -> f64 {
    4.0 / 3.0 * std::f64::consts::PI * semi_axes.x * semi_axes.y * semi_axes.z
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn points_on_surface() {
        let pts = generate_ellipsoid_mesh(Vec3::new(1.0, 1.0, 1.0), 200).unwrap();
        assert!(pts.iter().all(|p| (p.norm() - 1.0).abs() < 1e-12));

        let axes = Vec3::new(16e3, 8e3, 8e3);
        let pts = generate_ellipsoid_mesh(axes, 500).unwrap();
        assert_eq!(pts.len(), 500);
        for p in &pts {
            let q = p.component_div(&axes).norm();
            assert!((q - 1.0).abs() < 1e-12);
            assert!(
                p.x.abs() <= axes.x + 1e-9
                    && p.y.abs() <= axes.y + 1e-9
                    && p.z.abs() <= axes.z + 1e-9
            );
        }
    }

    #[test]
    fn small_meshes() {
        let pts = generate_ellipsoid_mesh(Vec3::new(2.0, 1.0, 1.0), 4).unwrap();
        for i in 0..4 {
            for j in i + 1..4 {
                assert!((pts[i] - pts[j]).norm() > 1e-3);
            }
        }
        assert!(generate_ellipsoid_mesh(Vec3::new(1.0, 1.0, 1.0), 3).is_err());
        assert!(generate_ellipsoid_mesh(Vec3::new(1.0, 0.0, 1.0), 10).is_err());
        assert_eq!(
            generate_ellipsoid_mesh(Vec3::new(3.0, 2.0, 1.0), 50).unwrap(),
            generate_ellipsoid_mesh(Vec3::new(3.0, 2.0, 1.0), 50).unwrap()
        );
    }
}
