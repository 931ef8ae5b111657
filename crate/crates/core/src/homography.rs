//! Normalized direct linear transform for plane-to-image homographies.

use nalgebra::{DMatrix, Matrix3, Vector2, Vector3};
use thiserror::Error;

use crate::scalar::{lit, Real};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HomographyError {
    #[error("degenerate configuration: {0}")]
    DegenerateConfiguration(String),
}

/// Similarity that moves the centroid to the origin and scales the mean
/// distance from it to √2.
fn hartley_normalization<T: Real>(points: &[Vector2<T>]) -> Option<Matrix3<T>> {
    let n: T = lit(points.len() as f64);
    let centroid = points.iter().fold(Vector2::zeros(), |acc, p| acc + p) / n;
    let mean_dist = points
        .iter()
        .map(|p| (p - centroid).norm())
        .fold(T::zero(), |a, b| a + b)
        / n;
    if mean_dist <= T::default_epsilon() || !mean_dist.is_finite() {
        return None;
    }
    let s = lit::<T>(std::f64::consts::SQRT_2) / mean_dist;
    Some(Matrix3::new(
        s,
        T::zero(),
        -s * centroid.x,
        T::zero(),
        s,
        -s * centroid.y,
        T::zero(),
        T::zero(),
        T::one(),
    ))
}

fn transform<T: Real>(h: &Matrix3<T>, p: &Vector2<T>) -> Vector2<T> {
    let q = h * Vector3::new(p.x, p.y, T::one());
    Vector2::new(q.x / q.z, q.y / q.z)
}

/// Applies a homography to a 2D point.
pub fn apply_homography<T: Real>(h: &Matrix3<T>, p: &Vector2<T>) -> Vector2<T> {
    transform(h, p)
}

/// Ratio of the smaller to the larger principal spread of a point set;
/// zero for collinear points.
fn spread_ratio<T: Real>(points: &[Vector2<T>]) -> T {
    let n: T = lit(points.len() as f64);
    let c = points.iter().fold(Vector2::zeros(), |acc, p| acc + p) / n;
    let (mut sxx, mut sxy, mut syy) = (T::zero(), T::zero(), T::zero());
    for p in points {
        let d = p - c;
        sxx += d.x * d.x;
        sxy += d.x * d.y;
        syy += d.y * d.y;
    }
    let tr = sxx + syy;
    if tr <= T::zero() {
        return T::zero();
    }
    let det = sxx * syy - sxy * sxy;
    let disc = (tr * tr * lit(0.25) - det).max(T::zero()).sqrt();
    let big = tr * lit(0.5) + disc;
    let small = tr * lit(0.5) - disc;
    small.max(T::zero()) / big
}

/// Estimates `H` with `image ~ H · (x, y, 1)` from at least four
/// correspondences. The result is scaled so that `h33 = 1` when
/// `|h33| > 1e-12`, otherwise to unit Frobenius norm.
pub fn estimate_homography<T: Real>(plane: &[Vector2<T>], image: &[Vector2<T>]) -> Result<Matrix3<T>, HomographyError> {
    if plane.len() != image.len() {
        return Err(HomographyError::DegenerateConfiguration(format!(
            "{} plane points but {} image points",
            plane.len(),
            image.len()
        )));
    }
    if plane.len() < 4 {
        return Err(HomographyError::DegenerateConfiguration(format!(
            "need at least 4 correspondences, got {}",
            plane.len()
        )));
    }
    let collinear_tol: T = lit(1e-12);
    if spread_ratio(plane) < collinear_tol || spread_ratio(image) < collinear_tol {
        return Err(HomographyError::DegenerateConfiguration("points are collinear".into()));
    }
    let degenerate = || HomographyError::DegenerateConfiguration("coincident points".into());
    let t_plane = hartley_normalization(plane).ok_or_else(degenerate)?;
    let t_image = hartley_normalization(image).ok_or_else(degenerate)?;

    let n = plane.len();
    // Zero rows leave the null space unchanged and guarantee a full V.
    let rows = (2 * n).max(9);
    let mut a = DMatrix::<T>::zeros(rows, 9);
    for (i, (p, q)) in plane.iter().zip(image).enumerate() {
        let p = transform(&t_plane, p);
        let q = transform(&t_image, q);
        let (x, y, u, v) = (p.x, p.y, q.x, q.y);
        let r = 2 * i;
        let one = T::one();
        let row0 = [-x, -y, -one, T::zero(), T::zero(), T::zero(), u * x, u * y, u];
        let row1 = [T::zero(), T::zero(), T::zero(), -x, -y, -one, v * x, v * y, v];
        for j in 0..9 {
            a[(r, j)] = row0[j];
            a[(r + 1, j)] = row1[j];
        }
    }

    let svd = a.svd(false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| HomographyError::DegenerateConfiguration("svd failed".into()))?;
    let sv = &svd.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&i, &j| sv[i].partial_cmp(&sv[j]).unwrap_or(std::cmp::Ordering::Equal));
    let smallest = order[0];
    let second = order[1];
    let largest = order[order.len() - 1];
    if sv[second] <= sv[largest] * lit(1e-10) {
        return Err(HomographyError::DegenerateConfiguration(
            "correspondences do not determine a unique homography".into(),
        ));
    }
    let h = v_t.row(smallest);
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);
    let t_image_inv = t_image
        .try_inverse()
        .ok_or_else(|| HomographyError::DegenerateConfiguration("normalization".into()))?;
    let mut hm = t_image_inv * hn * t_plane;
    if hm[(2, 2)].abs() > lit(1e-12) {
        hm /= hm[(2, 2)];
    } else {
        hm /= hm.norm();
    }
    if !hm.iter().all(|x| x.is_finite()) {
        return Err(HomographyError::DegenerateConfiguration("non-finite result".into()));
    }
    Ok(hm)
}
