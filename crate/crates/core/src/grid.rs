//! Coarse-grid subsets of a nested hierarchy.
//!
//! Given composite penalties `p_1 < p_2 < ...`, the grid keeps, for each
//! `k = 0..s-1`, the largest class whose penalty is at most
//! `(1 + lambda)^k p_1`. Every class up to the largest grid element then has
//! a grid representative whose penalty is within a factor `1 + lambda`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cap on the number of classes probed for procedurally defined
/// hierarchies.
pub const DEFAULT_MAX_PROBE: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoarseGrid {
    /// Strictly increasing class indices; always starts at 1.
    pub indices: Vec<usize>,
    /// Nominal grid size; the budget is split `s` ways even when several
    /// thresholds share a class.
    pub s: usize,
    pub lambda: f64,
    /// Largest grid element.
    pub k_lambda: usize,
    /// `(1 + lambda)^k p_1` for `k = 0..s-1`.
    pub thresholds: Vec<f64>,
    /// Composite penalty of each grid class, aligned with `indices`.
    pub penbars: Vec<f64>,
}

impl CoarseGrid {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, index: usize) -> bool {
        self.indices.binary_search(&index).is_ok()
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda.is_finite() && lambda > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("growth factor must be positive, got {lambda}")))
    }
}

fn ceil_ratio(num: f64, den: f64) -> usize {
    let r = num / den;
    // ratios like log(4)/log(2) must not round up past the exact integer
    let nearest = r.round();
    if (r - nearest).abs() <= 1e-12 * nearest.max(1.0) {
        nearest as usize
    } else {
        r.ceil() as usize
    }
}

/// `ceil(log(1 + B n_1(T)) / log(1 + lambda)) + 2`.
pub fn grid_size(bound: f64, n1_at_t: f64, lambda: f64) -> Result<usize> {
    check_lambda(lambda)?;
    if !(bound.is_finite() && bound > 0.0 && n1_at_t.is_finite() && n1_at_t > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "grid size needs positive bound and sample count (B = {bound}, n1 = {n1_at_t})"
        )));
    }
    let num = (1.0 + bound * n1_at_t).ln();
    Ok(ceil_ratio(num, (1.0 + lambda).ln()) + 2)
}

/// `ceil(log(1 + B / p_1) / log(1 + lambda)) + 2`, the grid size that
/// guarantees every class beyond the grid is too penalized to be optimal.
pub fn grid_size_for_penbar(bound: f64, penbar1: f64, lambda: f64) -> Result<usize> {
    check_lambda(lambda)?;
    if !(bound.is_finite() && bound > 0.0 && penbar1.is_finite() && penbar1 > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "grid size needs positive bound and penalty (B = {bound}, p1 = {penbar1})"
        )));
    }
    Ok(ceil_ratio((1.0 + bound / penbar1).ln(), (1.0 + lambda).ln()) + 2)
}

/// Builds the coarse grid by the largest-index rule.
///
/// `penbar(i)` returns the composite penalty of class `i` (1-based), or
/// `None` once the hierarchy has no class `i`. At most `max_probe` classes
/// are examined (plus one lookahead to detect the end of a finite list).
pub fn build_coarse_grid<F>(
    mut penbar: F,
    max_probe: usize,
    lambda: f64,
    s: usize,
) -> Result<CoarseGrid>
where
    F: FnMut(usize) -> Result<Option<f64>>,
{
    check_lambda(lambda)?;
    if s == 0 {
        return Err(Error::InvalidArgument("grid size must be at least 1".into()));
    }
    let p1 = penbar(1)?.ok_or_else(|| Error::InvalidArgument("empty hierarchy".into()))?;
    if !(p1.is_finite() && p1 >= 0.0) {
        return Err(Error::InvalidArgument(format!("class 1 penalty is {p1}")));
    }

    let mut values = vec![p1];
    let mut thresholds = Vec::with_capacity(s);
    let mut indices: Vec<usize> = Vec::new();
    let mut threshold = p1;
    let mut last = 1usize;
    let mut exhausted = false;

    for k in 0..s {
        if k > 0 {
            threshold *= 1.0 + lambda;
        }
        thresholds.push(threshold);
        while !exhausted {
            let next = last + 1;
            let p = if next <= values.len() {
                values[next - 1]
            } else {
                match penbar(next)? {
                    None => {
                        exhausted = true;
                        break;
                    }
                    Some(p) => {
                        if next > max_probe {
                            return Err(Error::GridUnbounded(max_probe));
                        }
                        // strictness also rejects NaN
                        if !(p > values[last - 1]) {
                            return Err(Error::NotMonotone(next));
                        }
                        values.push(p);
                        p
                    }
                }
            };
            if p <= threshold {
                last = next;
            } else {
                break;
            }
        }
        if indices.last() != Some(&last) {
            indices.push(last);
        }
    }

    let penbars = indices.iter().map(|&i| values[i - 1]).collect();
    Ok(CoarseGrid {
        k_lambda: last,
        indices,
        s,
        lambda,
        thresholds,
        penbars,
    })
}

/// Grid construction over an explicit finite list (`penbars[i - 1]` is the
/// penalty of class `i`).
pub fn build_coarse_grid_from_slice(penbars: &[f64], lambda: f64, s: usize) -> Result<CoarseGrid> {
    build_coarse_grid(
        |i| Ok(penbars.get(i - 1).copied()),
        penbars.len().max(1),
        lambda,
        s,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridCheck {
    pub satisfied: bool,
    /// First class `i <= k_lambda` without a representative.
    pub violating_index: Option<usize>,
}

/// Brute-force check of the coarse grid condition: every class
/// `i <= k_lambda` has some grid class `j` with `p_i <= p_j <= (1 + lambda) p_i`.
pub fn verify_grid_condition(grid: &CoarseGrid, penbars: &[f64], lambda: f64) -> GridCheck {
    for i in 1..=grid.k_lambda {
        let Some(&pi) = penbars.get(i - 1) else {
            return GridCheck {
                satisfied: false,
                violating_index: Some(i),
            };
        };
        let upper = (1.0 + lambda) * pi;
        let covered = grid.indices.iter().any(|&j| {
            penbars
                .get(j - 1)
                .is_some_and(|&pj| pi <= pj && pj <= upper)
        });
        if !covered {
            return GridCheck {
                satisfied: false,
                violating_index: Some(i),
            };
        }
    }
    GridCheck {
        satisfied: true,
        violating_index: None,
    }
}

/// Index minimizing `values`, ties within `tol` going to the smallest index.
/// Returns a 0-based position.
pub fn argmin_smallest(values: &[f64], tol: f64) -> Option<usize> {
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    values.iter().position(|&v| v <= min + tol)
}
