//! Two-dimensional PCA projection of selected embedding rows.

use std::io;

use nalgebra::{DMatrix, SymmetricEigen};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProjectError {
    #[error("projection needs at least 3 points of dimension >= 2 (got {points} x {dim})")]
    TooSmall { points: usize, dim: usize },
    #[error("ragged input: row {0} has a different length")]
    Ragged(usize),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Projection2D {
    pub labels: Vec<String>,
    pub coords: Vec<(f64, f64)>,
    /// Variance along each principal axis.
    pub variance: (f64, f64),
    /// Set when the centered data has rank < 2; the second coordinate is 0.
    pub rank_deficient: bool,
}

/// Eigenvalues below this fraction of the largest are treated as zero.
const RANK_TOL: f64 = 1e-10;

/// Projects rows onto the two leading principal axes of the centered data.
/// Each axis is signed so its first non-negligible loading is positive.
pub fn pca_project_2d(labels: &[String], rows: &[&[f64]]) -> Result<Projection2D, ProjectError> {
    let n = rows.len();
    let d = rows.first().map_or(0, |r| r.len());
    if n < 3 || d < 2 {
        return Err(ProjectError::TooSmall { points: n, dim: d });
    }
    if let Some(i) = rows.iter().position(|r| r.len() != d) {
        return Err(ProjectError::Ragged(i));
    }
    let mut x = DMatrix::from_fn(n, d, |i, j| rows[i][j]);
    for j in 0..d {
        let m = x.column(j).mean();
        x.column_mut(j).add_scalar_mut(-m);
    }
    let cov = x.transpose() * &x / n as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let top = eig.eigenvalues[order[0]].max(0.0);
    let axis = |k: usize| {
        let mut v = eig.eigenvectors.column(order[k]).into_owned();
        let tol = 1e-12 * v.amax();
        if let Some(first) = v.iter().find(|c| c.abs() > tol) {
            if *first < 0.0 {
                v.neg_mut();
            }
        }
        v
    };
    let (v1, v2) = (axis(0), axis(1));
    let second = eig.eigenvalues[order[1]].max(0.0);
    let rank_deficient = top == 0.0 || second <= RANK_TOL * top;
    let p1 = &x * v1;
    let p2 = &x * v2;
    let coords = (0..n)
        .map(|i| (p1[i], if rank_deficient { 0.0 } else { p2[i] }))
        .collect();
    Ok(Projection2D {
        labels: labels.to_vec(),
        coords,
        variance: (top, if rank_deficient { 0.0 } else { second }),
        rank_deficient,
    })
}

impl Projection2D {
    /// CSV with `label,x,y` plus an optional group column.
    pub fn write_csv<W: io::Write>(&self, mut w: W, groups: Option<&[String]>) -> io::Result<()> {
        match groups {
            Some(_) => writeln!(w, "label,x,y,group")?,
            None => writeln!(w, "label,x,y")?,
        }
        for (i, (l, (x, y))) in self.labels.iter().zip(&self.coords).enumerate() {
            match groups {
                Some(g) => writeln!(w, "{l},{x},{y},{}", g[i])?,
                None => writeln!(w, "{l},{x},{y}")?,
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(n: usize) -> Vec<String> {
        (0..n).map(|i| i.to_string()).collect()
    }

    #[test]
    fn axis_aligned_identity() {
        // variance 4 on x, 1 on y, already centered
        let s = 2f64.sqrt();
        let pts = [[2.0 * s, 0.0], [-2.0 * s, 0.0], [0.0, s], [0.0, -s]];
        let rows: Vec<&[f64]> = pts.iter().map(|p| &p[..]).collect();
        let p = pca_project_2d(&labels(4), &rows).unwrap();
        assert!((p.variance.0 - 4.0).abs() < 1e-12 && (p.variance.1 - 1.0).abs() < 1e-12);
        for (c, q) in p.coords.iter().zip(&pts) {
            assert!((c.0.abs() - q[0].abs()).abs() < 1e-12);
            assert!((c.1.abs() - q[1].abs()).abs() < 1e-12);
        }
        assert!(!p.rank_deficient);
    }

    #[test]
    fn collinear_points_flagged() {
        let dir = [1.0, -2.0, 0.5, 3.0, 0.0, 1.0, -1.0, 2.0];
        let pts: Vec<Vec<f64>> = (0..6).map(|t| dir.iter().map(|d| d * t as f64 + 0.3).collect()).collect();
        let rows: Vec<&[f64]> = pts.iter().map(|p| p.as_slice()).collect();
        let p = pca_project_2d(&labels(6), &rows).unwrap();
        assert!(p.rank_deficient);
        assert!(p.coords.iter().all(|c| c.1.abs() < 1e-9));
    }

    #[test]
    fn translation_invariant_and_guarded() {
        let pts: Vec<Vec<f64>> = vec![vec![1.0, 2.0, 0.0], vec![0.5, -1.0, 2.0], vec![3.0, 0.0, 1.0], vec![-1.0, 1.0, 1.0]];
        let moved: Vec<Vec<f64>> = pts.iter().map(|p| p.iter().map(|v| v + 10.0).collect()).collect();
        let a = pca_project_2d(&labels(4), &pts.iter().map(|p| p.as_slice()).collect::<Vec<_>>()).unwrap();
        let b = pca_project_2d(&labels(4), &moved.iter().map(|p| p.as_slice()).collect::<Vec<_>>()).unwrap();
        for (x, y) in a.coords.iter().zip(&b.coords) {
            assert!((x.0 - y.0).abs() < 1e-9 && (x.1 - y.1).abs() < 1e-9);
        }
        assert!(pca_project_2d(&labels(2), &[&[1.0, 2.0], &[3.0, 4.0]]).is_err());
    }
}
