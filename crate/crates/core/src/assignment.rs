//! Minimum-cost one-to-one assignment and class-agnostic ground-truth ID
//! assignment for 3D detections.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::geometry::{iou_3d, Box3D};
use crate::tracker::{Detection3D, TrackId};

/// Default IoU floor for ground-truth ID assignment.
pub const DEFAULT_GT_IOU_MIN: f64 = 0.1;

/// Row-major cost matrix. Lower is better; [`CostMatrix::FORBIDDEN`] marks
/// pairs that may never be assigned.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl CostMatrix {
    pub const FORBIDDEN: f64 = f64::INFINITY;

    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::InvalidCostMatrix(format!(
                "{} values for a {rows}x{cols} matrix",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| v.is_nan() || **v == f64::NEG_INFINITY) {
            return Err(Error::InvalidCostMatrix(format!("invalid entry {v}")));
        }
        Ok(CostMatrix { rows, cols, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidCostMatrix("ragged rows".into()));
        }
        CostMatrix::new(rows.len(), cols, rows.concat())
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        CostMatrix {
            rows,
            cols,
            values: vec![value; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        assert!(!value.is_nan(), "NaN cost");
        self.values[row * self.cols + col] = value;
    }

    pub fn is_forbidden(&self, row: usize, col: usize) -> bool {
        self.get(row, col) == Self::FORBIDDEN
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Assignment {
    /// Sorted by row.
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_rows: Vec<usize>,
    pub unmatched_cols: Vec<usize>,
}

impl Assignment {
    /// Sum of the assigned costs, accumulated in row order.
    pub fn total_cost(&self, costs: &CostMatrix) -> f64 {
        self.pairs.iter().map(|&(r, c)| costs.get(r, c)).sum()
    }
}

/// Solves the rectangular assignment problem.
///
/// Returns the assignment with the largest number of non-forbidden pairs and,
/// among those, the smallest total cost. Shortest augmenting paths with dual
/// potentials, O(n^3) in `n = max(rows, cols)`. Ties resolve toward the lowest
/// column index at each relaxation, so results are deterministic.
pub fn hungarian(costs: &CostMatrix) -> Assignment {
    let (rows, cols) = (costs.rows, costs.cols);
    let n = rows.max(cols);
    let all_unmatched = || Assignment {
        pairs: Vec::new(),
        unmatched_rows: (0..rows).collect(),
        unmatched_cols: (0..cols).collect(),
    };
    let finite = costs.values.iter().copied().filter(|v| v.is_finite());
    let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if n == 0 || !lo.is_finite() {
        return all_unmatched();
    }

    // Shift into [0, span] and price forbidden pairs above any feasible total,
    // so the optimum first minimises the number of forbidden pairs used.
    let span = hi - lo;
    let big = (span + 1.0) * (n as f64 + 1.0);
    let cost = |i: usize, j: usize| -> f64 {
        if i < rows && j < cols {
            let v = costs.get(i, j);
            if v.is_finite() {
                v - lo
            } else {
                big
            }
        } else {
            0.0
        }
    };

    // 1-indexed; index 0 is the virtual source column.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut row_of_col = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        row_of_col[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of_col[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of_col[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of_col[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of_col[j0] = row_of_col[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut col_of_row = vec![None; rows];
    for (c, &row) in row_of_col.iter().enumerate().skip(1).map(|(j, r)| (j - 1, r)) {
        let r = row - 1;
        if r < rows && c < cols && !costs.is_forbidden(r, c) {
            col_of_row[r] = Some(c);
        }
    }
    let mut col_taken = vec![false; cols];
    let mut out = Assignment::default();
    for (r, c) in col_of_row.iter().enumerate() {
        match c {
            Some(c) => {
                col_taken[*c] = true;
                out.pairs.push((r, *c));
            }
            None => out.unmatched_rows.push(r),
        }
    }
    out.unmatched_cols = (0..cols).filter(|&c| !col_taken[c]).collect();
    out
}

/// Gives each detection the track ID of the ground-truth box it overlaps,
/// one-to-one, using 3D IoU only. Pairs below `iou_min` are never matched;
/// unmatched detections are absent from the result.
pub fn assign_gt_track_ids(
    gt: &[(Box3D, TrackId)],
    detections: &[Detection3D],
    iou_min: f64,
) -> BTreeMap<usize, TrackId> {
    let mut costs = CostMatrix::filled(detections.len(), gt.len(), CostMatrix::FORBIDDEN);
    for (i, det) in detections.iter().enumerate() {
        for (j, (gt_box, _)) in gt.iter().enumerate() {
            let iou = iou_3d(&det.bbox, gt_box);
            if iou >= iou_min && iou > 0.0 {
                costs.set(i, j, 1.0 - iou);
            }
        }
    }
    hungarian(&costs)
        .pairs
        .into_iter()
        .map(|(det, g)| (det, gt[g].1))
        .collect()
}
