//! Two-dimensional principal-component projection of normalized GS
//! features, for scatter plots of references against synthesized
//! utterances.

use std::fmt::Write as _;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::features::{fit_norm_stats, GsFeatures, NormStats, GS_DIM};

/// Relative eigenvalue below which a principal direction counts as empty.
const RANK_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    /// One `(x, y)` per input row, in input order.
    pub points: Vec<(f64, f64)>,
    /// Unit principal axes in normalized feature space.
    pub axes: [[f64; GS_DIM]; 2],
    /// Variance along each axis.
    pub explained_variance: [f64; 2],
    /// Number of non-degenerate axes among the two returned (0, 1 or 2).
    /// Degenerate axes are zero vectors and project every row to 0.
    pub rank: usize,
}

/// Projects z-normalized rows (centred on their own mean) onto the top two
/// principal components. Axis signs are fixed so that each axis's
/// largest-magnitude entry is positive.
pub fn pca_project(rows: &[[f64; GS_DIM]]) -> Result<Projection> {
    if rows.len() < 3 {
        return Err(Error::invalid("projection needs at least 3 rows"));
    }
    let n = rows.len();
    let mut centre = [0.0; GS_DIM];
    for r in rows {
        for d in 0..GS_DIM {
            centre[d] += r[d] / n as f64;
        }
    }
    let centred = DMatrix::from_fn(n, GS_DIM, |i, d| rows[i][d] - centre[d]);
    let cov = centred.transpose() * &centred / n as f64;
    let eig = SymmetricEigen::new(cov);

    let mut order: Vec<usize> = (0..GS_DIM).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });
    let top = eig.eigenvalues[order[0]].max(0.0);

    let mut axes = [[0.0; GS_DIM]; 2];
    let mut explained_variance = [0.0; 2];
    let mut rank = 0;
    for (k, &idx) in order.iter().take(2).enumerate() {
        let value = eig.eigenvalues[idx];
        if top <= 0.0 || value <= RANK_TOL * top.max(1.0) {
            continue;
        }
        let col = eig.eigenvectors.column(idx);
        let pivot = (0..GS_DIM)
            .max_by(|&a, &b| col[a].abs().total_cmp(&col[b].abs()).then(b.cmp(&a)))
            .unwrap();
        let sign = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
        for d in 0..GS_DIM {
            axes[k][d] = sign * col[d];
        }
        explained_variance[k] = value;
        rank += 1;
    }

    let points = (0..n)
        .map(|i| {
            let dot = |axis: &[f64; GS_DIM]| (0..GS_DIM).map(|d| centred[(i, d)] * axis[d]).sum();
            (dot(&axes[0]), dot(&axes[1]))
        })
        .collect();
    Ok(Projection {
        points,
        axes,
        explained_variance,
        rank,
    })
}

/// Normalizes `features` with stats fitted on the same rows, then projects.
pub fn project_features(features: &[GsFeatures]) -> Result<(NormStats, Projection)> {
    let stats = fit_norm_stats(features)?;
    let rows: Vec<[f64; GS_DIM]> = features.iter().map(|f| stats.normalize(f)).collect();
    let projection = pca_project(&rows)?;
    Ok((stats, projection))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScatterPoint {
    pub id: String,
    pub x: f64,
    pub y: f64,
    pub group: String,
}

pub fn write_scatter_csv(points: &[ScatterPoint]) -> String {
    let mut out = String::from("id,x,y,group\n");
    for p in points {
        writeln!(out, "{},{},{},{}", p.id, p.x, p.y, p.group).unwrap();
    }
    out
}

pub fn read_scatter_csv(text: &str) -> Result<Vec<ScatterPoint>> {
    let mut lines = text.lines().filter(|l| !l.is_empty());
    if lines.next() != Some("id,x,y,group") {
        return Err(Error::Parse("unexpected scatter header".into()));
    }
    lines
        .map(|line| {
            let cols: Vec<&str> = line.split(',').collect();
            let bad = || Error::Parse(format!("scatter line {line:?}"));
            if cols.len() != 4 {
                return Err(bad());
            }
            Ok(ScatterPoint {
                id: cols[0].to_string(),
                x: cols[1].parse().map_err(|_| bad())?,
                y: cols[2].parse().map_err(|_| bad())?,
                group: cols[3].to_string(),
            })
        })
        .collect()
}
