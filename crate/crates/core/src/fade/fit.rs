use serde::{Deserialize, Serialize};

use super::{cyclic_fade_approx, cyclic_fade_exact, select_branch, Branch, FadeModelParams, SlotCharge};
use crate::error::{Error, Result};
use crate::scalar::{from_usize, lit, to_f64, Scalar};

/// Evaluation grid over `(soc_init, I)` for comparing the surface to the exact model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitGrid<T> {
    pub dt: T,
    pub c_bat: T,
    pub i_max: T,
    pub soc_max: T,
    pub points_per_axis: usize,
}

impl<T: Scalar> FitGrid<T> {
    /// Grid whose upper SoC edge keeps every slot at or below full charge.
    pub fn for_limits(dt: T, c_bat: T, i_max: T, points_per_axis: usize) -> Self {
        let soc_max = (T::one() - i_max * dt / c_bat).max(T::zero());
        Self { dt, c_bat, i_max, soc_max, points_per_axis }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchFit {
    pub points: usize,
    pub r_squared: f64,
    pub rmse_ah: f64,
    pub max_abs_err_ah: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub hi: BranchFit,
    pub lo: BranchFit,
}

#[derive(Default)]
struct Acc {
    exact: Vec<f64>,
    approx: Vec<f64>,
}

impl Acc {
    fn finish(&self) -> BranchFit {
        let n = self.exact.len();
        if n == 0 {
            return BranchFit { points: 0, r_squared: f64::NAN, rmse_ah: f64::NAN, max_abs_err_ah: f64::NAN };
        }
        let mean = self.exact.iter().sum::<f64>() / n as f64;
        let ss_tot: f64 = self.exact.iter().map(|e| (e - mean).powi(2)).sum();
        let mut ss_res = 0.0;
        let mut max_abs = 0.0f64;
        for (e, a) in self.exact.iter().zip(&self.approx) {
            ss_res += (a - e).powi(2);
            max_abs = max_abs.max((a - e).abs());
        }
        BranchFit {
            points: n,
            r_squared: 1.0 - ss_res / ss_tot,
            rmse_ah: (ss_res / n as f64).sqrt(),
            max_abs_err_ah: max_abs,
        }
    }
}

/// Coefficient of determination of the quadratic surface against the exact
/// cyclic model, separately on each branch domain.
pub fn fit_quality<T: Scalar>(params: &FadeModelParams<T>, grid: &FitGrid<T>) -> Result<FitReport> {
    if grid.points_per_axis < 2 {
        return Err(Error::InvalidInstance("fit grid needs at least 2 points per axis".into()));
    }
    let steps: T = from_usize(grid.points_per_axis - 1);
    let (mut hi, mut lo) = (Acc::default(), Acc::default());
    for a in 0..grid.points_per_axis {
        let soc = grid.soc_max * from_usize::<T>(a) / steps;
        for b in 0..grid.points_per_axis {
            let current = grid.i_max * from_usize::<T>(b) / steps;
            // keep the last column inside [0, 1] under rounding
            let soc = soc.min(T::one() - current * grid.dt / grid.c_bat + lit(1e-12)).max(T::zero());
            let slot = SlotCharge::new(soc, current, grid.dt, grid.c_bat);
            let exact = to_f64(cyclic_fade_exact(&slot, params)?);
            let approx = to_f64(cyclic_fade_approx(&slot, params)?);
            let acc = match select_branch(current, soc, params) {
                Branch::Hi => &mut hi,
                Branch::Lo => &mut lo,
            };
            acc.exact.push(exact);
            acc.approx.push(approx);
        }
    }
    Ok(FitReport { hi: hi.finish(), lo: lo.finish() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_coefficients_fit_both_branches() {
        let grid = FitGrid::for_limits(0.5, 210.0, 80.0, 100);
        let report = fit_quality(&FadeModelParams::<f64>::default(), &grid).unwrap();
        assert_eq!(report.hi.points + report.lo.points, 10_000);
        // offline least-squares fit of the same grid
        assert!((report.hi.r_squared - 0.99408).abs() < 1e-4, "{report:?}");
        assert!((report.lo.r_squared - 0.99595).abs() < 1e-4, "{report:?}");
    }

    #[test]
    fn rejects_degenerate_grid() {
        let grid = FitGrid::for_limits(0.5, 210.0, 80.0, 1);
        assert!(fit_quality(&FadeModelParams::<f64>::default(), &grid).is_err());
    }
}
