//! Lithium-ion capacity fade during a charging slot.
//!
//! Cyclic fade has an exact exponential form in the slot's stress factors and a
//! two-branch quadratic surface in `(SoC_avg, I)` that the optimizer uses.
//! Calendric fade is linear in average SoC. All quantities are per slot and in
//! amp-hours; SoC is a fraction of nominal capacity.

mod fit;

pub use fit::{fit_quality, BranchFit, FitGrid, FitReport};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{lit, to_f64, Scalar};

const SOC_SLACK: f64 = 1e-9;

/// Coefficients of `p00 + p10·s + p01·I + p11·s·I + p02·I²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfaceCoeffs<T> {
    pub p00: T,
    pub p10: T,
    pub p01: T,
    pub p11: T,
    pub p02: T,
}

impl<T: Scalar> SurfaceCoeffs<T> {
    pub fn from_f64(c: [f64; 5]) -> Self {
        Self {
            p00: lit(c[0]),
            p10: lit(c[1]),
            p01: lit(c[2]),
            p11: lit(c[3]),
            p02: lit(c[4]),
        }
    }

    #[inline]
    pub fn value(&self, soc_avg: T, current: T) -> T {
        self.p00 + self.p10 * soc_avg + self.p01 * current + self.p11 * soc_avg * current + self.p02 * current * current
    }

    /// Partial derivative in average SoC.
    #[inline]
    pub fn d_soc(&self, current: T) -> T {
        self.p10 + self.p11 * current
    }

    /// Partial derivative in current, holding average SoC fixed.
    #[inline]
    pub fn d_current(&self, soc_avg: T, current: T) -> T {
        self.p01 + self.p11 * soc_avg + lit::<T>(2.0) * self.p02 * current
    }
}

/// Table values for the region `I ≥ slope·SoC_init`.
pub const TABLE_HI: [f64; 5] = [4.169e-6, -9.871e-5, 1.63e-6, 2.661e-6, -5.757e-9];
/// Table values for the region `I < slope·SoC_init`.
pub const TABLE_LO: [f64; 5] = [6.886e-6, -1.075e-5, 1.361e-6, 6.348e-7, -1.902e-10];

/// Battery chemistry and fit coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FadeModelParams<T> {
    pub k1: T,
    pub k2: T,
    pub k3: T,
    pub k4: T,
    /// Activation energy, J/mol.
    pub activation_energy: T,
    /// Gas constant, J/(mol·K).
    pub gas_constant: T,
    /// Ambient temperature, K.
    pub t_amb: T,
    pub branch_hi: SurfaceCoeffs<T>,
    pub branch_lo: SurfaceCoeffs<T>,
    /// Slope of the line `I = slope·SoC_init` separating the two branches, A per unit SoC.
    pub branch_slope: T,
    pub p1: T,
    pub p2: T,
}

impl<T: Scalar> Default for FadeModelParams<T> {
    fn default() -> Self {
        Self {
            // Fitted so the exact model reproduces the tabulated surface at
            // dt = 0.5 h, C_bat = 210 Ah, I <= 80 A.
            k1: lit(1.058e-4),
            k2: lit(0.5892),
            k3: lit(8.37e-6),
            k4: lit(-0.6816),
            activation_energy: lit(31_700.0),
            gas_constant: lit(8.314),
            t_amb: lit(298.15),
            branch_hi: SurfaceCoeffs::from_f64(TABLE_HI),
            branch_lo: SurfaceCoeffs::from_f64(TABLE_LO),
            branch_slope: lit(480.0),
            p1: lit(0.0001347),
            p2: lit(0.00005356),
        }
    }
}

impl<T: Scalar> FadeModelParams<T> {
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, field: &'static str, value: T, reason: &'static str| {
            if ok {
                Ok(())
            } else {
                Err(Error::Config(format!("{field} = {} ({reason})", to_f64(value))))
            }
        };
        check(self.branch_slope > T::zero(), "branch_slope", self.branch_slope, "must be > 0")?;
        check(self.gas_constant > T::zero(), "gas_constant", self.gas_constant, "must be > 0")?;
        check(self.activation_energy >= T::zero(), "activation_energy", self.activation_energy, "must be >= 0")?;
        check(self.t_amb > T::zero(), "t_amb", self.t_amb, "must be > 0")
    }

    pub fn coeffs(&self, branch: Branch) -> &SurfaceCoeffs<T> {
        match branch {
            Branch::Hi => &self.branch_hi,
            Branch::Lo => &self.branch_lo,
        }
    }

    /// Arrhenius factor `exp(-Ea/R·(1/T − 1/T_amb))`.
    pub fn temperature_factor(&self, temp: Option<T>) -> T {
        match temp {
            None => T::one(),
            Some(t) => (-(self.activation_energy / self.gas_constant) * (t.recip() - self.t_amb.recip())).exp(),
        }
    }
}

/// One vehicle charging at constant current for one slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlotCharge<T> {
    pub soc_init: T,
    /// Charging current, A.
    pub current: T,
    /// Slot length, h.
    pub dt: T,
    /// Nominal capacity, Ah.
    pub c_bat: T,
    /// Battery temperature, K. `None` means ambient.
    pub temp: Option<T>,
}

impl<T: Scalar> SlotCharge<T> {
    pub fn new(soc_init: T, current: T, dt: T, c_bat: T) -> Self {
        Self { soc_init, current, dt, c_bat, temp: None }
    }

    pub fn with_temp(mut self, temp: T) -> Self {
        self.temp = Some(temp);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field, value: T, reason| Err(Error::InvalidSlot { field, value: to_f64(value), reason });
        if !(self.soc_init >= T::zero() && self.soc_init <= T::one()) {
            return bad("soc_init", self.soc_init, "must lie in [0, 1]");
        }
        if !(self.current >= T::zero()) {
            return bad("current", self.current, "must be >= 0");
        }
        if !(self.dt > T::zero()) {
            return bad("dt", self.dt, "must be > 0");
        }
        if !(self.c_bat > T::zero()) {
            return bad("c_bat", self.c_bat, "must be > 0");
        }
        if let Some(t) = self.temp {
            if !(t > T::zero()) {
                return bad("temp", t, "must be > 0");
            }
        }
        let soc_end = self.soc_init + self.current * self.dt / self.c_bat;
        if soc_end > T::one() + lit(SOC_SLACK) {
            return bad("current", self.current, "slot would charge past SoC 1");
        }
        Ok(())
    }
}

/// Charging-condition quantities driving cyclic fade.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StressFactors<T> {
    pub soc_avg: T,
    pub soc_dev: T,
    /// Charge processed, Ah.
    pub ah: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Branch {
    Hi,
    Lo,
}

pub fn stress_factors<T: Scalar>(slot: &SlotCharge<T>) -> Result<StressFactors<T>> {
    slot.validate()?;
    Ok(stress_factors_unchecked(slot.soc_init, slot.current, slot.dt, slot.c_bat))
}

#[inline]
pub(crate) fn stress_factors_unchecked<T: Scalar>(soc_init: T, current: T, dt: T, c_bat: T) -> StressFactors<T> {
    let ah = current * dt;
    let half = lit::<T>(0.5) * ah / c_bat;
    StressFactors {
        soc_avg: soc_init + half,
        soc_dev: half,
        ah,
    }
}

/// Exact cyclic capacity loss for the slot, Ah.
pub fn cyclic_fade_exact<T: Scalar>(slot: &SlotCharge<T>, params: &FadeModelParams<T>) -> Result<T> {
    let sf = stress_factors(slot)?;
    if slot.current == T::zero() {
        return Ok(T::zero());
    }
    let inner = params.k1 * sf.soc_dev * (params.k2 * sf.soc_avg).exp() + params.k3 * (params.k4 * sf.soc_dev).exp();
    Ok(inner * params.temperature_factor(slot.temp) * sf.ah.sqrt())
}

/// HI iff `current ≥ branch_slope·soc_init`.
#[inline]
pub fn select_branch<T: Scalar>(current: T, soc_init: T, params: &FadeModelParams<T>) -> Branch {
    if current >= params.branch_slope * soc_init {
        Branch::Hi
    } else {
        Branch::Lo
    }
}

/// Quadratic-surface cyclic capacity loss for the slot, Ah. Zero at zero
/// current and clamped below at zero.
pub fn cyclic_fade_approx<T: Scalar>(slot: &SlotCharge<T>, params: &FadeModelParams<T>) -> Result<T> {
    let sf = stress_factors(slot)?;
    let branch = select_branch(slot.current, slot.soc_init, params);
    Ok(surface_clamped(params.coeffs(branch), sf.soc_avg, slot.current))
}

#[inline]
pub(crate) fn surface_clamped<T: Scalar>(coeffs: &SurfaceCoeffs<T>, soc_avg: T, current: T) -> T {
    if current <= T::zero() {
        return T::zero();
    }
    coeffs.value(soc_avg, current).max(T::zero())
}

/// Calendric capacity loss at a given average SoC, Ah per slot.
pub fn calendric_fade_approx<T: Scalar>(soc_avg: T, params: &FadeModelParams<T>) -> Result<T> {
    if !(soc_avg >= T::zero() && soc_avg <= T::one() + lit(SOC_SLACK)) {
        return Err(Error::SocOutOfRange(to_f64(soc_avg)));
    }
    Ok(params.p1 * soc_avg + params.p2)
}

pub fn total_fade_approx<T: Scalar>(slot: &SlotCharge<T>, params: &FadeModelParams<T>) -> Result<T> {
    let sf = stress_factors(slot)?;
    Ok(cyclic_fade_approx(slot, params)? + calendric_fade_approx(sf.soc_avg, params)?)
}

/// Exact cyclic loss plus calendric loss. The calendric part uses the linear
/// SoC form because no kinetic parameters are available for its exact form.
pub fn total_fade_exact<T: Scalar>(slot: &SlotCharge<T>, params: &FadeModelParams<T>) -> Result<T> {
    let sf = stress_factors(slot)?;
    Ok(cyclic_fade_exact(slot, params)? + calendric_fade_approx(sf.soc_avg, params)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn params() -> FadeModelParams<f64> {
        FadeModelParams::default()
    }

    #[test]
    fn stress_factor_examples() {
        let sf = stress_factors(&SlotCharge::new(0.5, 0.0, 0.25, 200.0)).unwrap();
        assert_eq!(sf, StressFactors { soc_avg: 0.5, soc_dev: 0.0, ah: 0.0 });

        // I·dt = 0.2·C_bat
        let sf = stress_factors(&SlotCharge::new(0.2, 40.0, 1.0, 200.0)).unwrap();
        assert_relative_eq!(sf.soc_avg, 0.3, epsilon = 1e-15);
        assert_relative_eq!(sf.soc_dev, 0.1, epsilon = 1e-15);
        assert_relative_eq!(sf.ah, 40.0);

        let sf = stress_factors(&SlotCharge::new(0.0, 40.0, 0.5, 200.0)).unwrap();
        assert_relative_eq!(sf.soc_avg, 0.05, epsilon = 1e-15);
        assert_relative_eq!(sf.soc_dev, 0.05, epsilon = 1e-15);
        assert_relative_eq!(sf.ah, 20.0);
    }

    #[test]
    fn invalid_slots_name_the_field() {
        let cases = [
            (SlotCharge::new(1.2, 0.0, 0.5, 200.0), "soc_init"),
            (SlotCharge::new(0.5, -1.0, 0.5, 200.0), "current"),
            (SlotCharge::new(0.5, 1.0, 0.0, 200.0), "dt"),
            (SlotCharge::new(0.5, 1.0, 0.5, 0.0), "c_bat"),
            (SlotCharge::new(0.9, 80.0, 1.0, 200.0), "current"),
            (SlotCharge::new(0.5, 1.0, 0.5, 200.0).with_temp(-3.0), "temp"),
        ];
        for (slot, name) in cases {
            match stress_factors(&slot) {
                Err(Error::InvalidSlot { field, .. }) => assert_eq!(field, name),
                other => panic!("expected invalid slot for {name}, got {other:?}"),
            }
        }
    }

    #[test]
    fn exact_cyclic_examples() {
        let p = params();
        assert_eq!(cyclic_fade_exact(&SlotCharge::new(0.4, 0.0, 0.5, 210.0), &p).unwrap(), 0.0);

        let slot = SlotCharge::new(0.3, 60.0, 0.25, 210.0);
        let d = 0.5 * 60.0 * 0.25 / 210.0;
        let by_hand = (p.k1 * d * (p.k2 * (0.3 + d)).exp() + p.k3 * (p.k4 * d).exp()) * 15f64.sqrt();
        let got = cyclic_fade_exact(&slot, &p).unwrap();
        assert_relative_eq!(got, by_hand, max_relative = 1e-14);
        // independent scripted evaluation
        assert_relative_eq!(got, 4.9472477430808534e-05, max_relative = 1e-12);

        // temperature factor at T = T_amb + 10 K
        let hot = cyclic_fade_exact(&slot.with_temp(308.15), &p).unwrap();
        assert_relative_eq!(hot, 7.491997008261618e-05, max_relative = 1e-10);
        assert_relative_eq!(p.temperature_factor(Some(p.t_amb)), 1.0);
    }

    #[test]
    fn branch_selection() {
        let p = params();
        assert_eq!(select_branch(100.0, 0.5, &p), Branch::Lo);
        assert_eq!(select_branch(240.0, 0.5, &p), Branch::Hi);
        assert_eq!(select_branch(200.0, 0.1, &p), Branch::Hi);
    }

    #[test]
    fn approx_cyclic_examples() {
        let p = params();
        assert_eq!(cyclic_fade_approx(&SlotCharge::new(0.5, 0.0, 1.0 / 12.0, 210.0), &p).unwrap(), 0.0);
        let lo = cyclic_fade_approx(&SlotCharge::new(0.5, 100.0, 1.0 / 12.0, 210.0), &p).unwrap();
        assert_relative_eq!(lo, 0.00016849523015873016, max_relative = 1e-12);
        let hi = cyclic_fade_approx(&SlotCharge::new(0.1, 200.0, 1.0 / 12.0, 210.0), &p).unwrap();
        assert_relative_eq!(hi, 0.00016043998412698418, max_relative = 1e-12);
    }

    #[test]
    fn calendric_examples() {
        let p = params();
        assert_eq!(calendric_fade_approx(0.0, &p).unwrap(), 0.00005356);
        assert_relative_eq!(calendric_fade_approx(1.0, &p).unwrap(), 0.00018826, max_relative = 1e-12);
        assert_relative_eq!(calendric_fade_approx(0.5, &p).unwrap(), 0.00012091, max_relative = 1e-12);
        assert!(matches!(calendric_fade_approx(1.5, &p), Err(Error::SocOutOfRange(_))));
        assert!(matches!(calendric_fade_approx(-0.1, &p), Err(Error::SocOutOfRange(_))));
    }

    #[test]
    fn total_examples() {
        let p = params();
        assert_eq!(total_fade_approx(&SlotCharge::new(0.0, 0.0, 0.5, 210.0), &p).unwrap(), 0.00005356);
        let slot = SlotCharge::new(0.5, 100.0, 1.0 / 12.0, 210.0);
        assert_relative_eq!(total_fade_approx(&slot, &p).unwrap(), 0.0002920778492063492, max_relative = 1e-12);
    }

    #[test]
    fn runs_in_single_precision() {
        let p = FadeModelParams::<f32>::default();
        let lo = cyclic_fade_approx(&SlotCharge::new(0.5f32, 100.0, 1.0 / 12.0, 210.0), &p).unwrap();
        assert!((lo - 1.6849523e-4).abs() / 1.6849523e-4 < 1e-4);
        assert_eq!(calendric_fade_approx(0.0f32, &p).unwrap(), 5.356e-5);
    }

    #[test]
    fn default_params_validate() {
        params().validate().unwrap();
        let mut p = params();
        p.branch_slope = 0.0;
        assert!(p.validate().is_err());
    }

    proptest! {
        #[test]
        fn fades_nonnegative(soc in 0.0f64..0.8, current in 1e-6f64..80.0) {
            let p = params();
            let slot = SlotCharge::new(soc, current, 0.5, 210.0);
            prop_assert!(cyclic_fade_approx(&slot, &p).unwrap() >= 0.0);
            prop_assert!(cyclic_fade_exact(&slot, &p).unwrap() >= 0.0);
            let sf = stress_factors(&slot).unwrap();
            prop_assert!(calendric_fade_approx(sf.soc_avg, &p).unwrap() > 0.0);
        }

        #[test]
        fn calendric_monotone(a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let p = params();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(calendric_fade_approx(lo, &p).unwrap() <= calendric_fade_approx(hi, &p).unwrap());
        }

        #[test]
        fn stress_linear_in_current(soc in 0.0f64..0.5, current in 0.0f64..40.0) {
            let one = stress_factors(&SlotCharge::new(soc, current, 0.5, 210.0)).unwrap();
            let two = stress_factors(&SlotCharge::new(soc, 2.0 * current, 0.5, 210.0)).unwrap();
            prop_assert_eq!(two.soc_dev, 2.0 * one.soc_dev);
            prop_assert_eq!(two.ah, 2.0 * one.ah);
            prop_assert!(((two.soc_avg - soc) - 2.0 * (one.soc_avg - soc)).abs() < 1e-15);
        }
    }
}
