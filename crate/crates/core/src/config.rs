//! Run configuration: a flat TOML document with units in the key names.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fade::FadeModelParams;
use crate::ingest::SessionConversion;
use crate::problem::{ChargeLimits, Weights};
use crate::scheduler::Policy;
use crate::simulator::SimConfig;
use crate::solver::SolverConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Baseline,
    #[default]
    Proposed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub dt_minutes: u32,
    pub voltage_v: f64,
    pub c_bat_ah: f64,
    pub i_max_a: f64,
    pub ic_max_a: f64,
    /// Extra charge above the departure requirement as a fraction of `c_bat_ah`.
    pub soc_xtra_fraction: f64,
    pub battery_cost_usd: f64,
    pub peak_threshold: f64,
    /// Arrival SoC for sessions that do not record one.
    pub default_soc_start: f64,
    pub policy: PolicyKind,
    /// `[cost, fade, availability]`.
    pub weights: [f64; 3],

    pub fade_k1: Option<f64>,
    pub fade_k2: Option<f64>,
    pub fade_k3: Option<f64>,
    pub fade_k4: Option<f64>,
    pub fade_activation_energy_j_per_mol: Option<f64>,
    pub fade_t_amb_k: Option<f64>,
    pub fade_p1: Option<f64>,
    pub fade_p2: Option<f64>,
    pub fade_branch_slope_a: Option<f64>,

    pub solver_tol_obj: f64,
    pub solver_max_branch_iters: usize,
    pub solver_max_inner_iters: usize,

    pub sessions: Option<PathBuf>,
    pub prices: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let solver = SolverConfig::<f64>::default();
        Self {
            dt_minutes: 30,
            voltage_v: 410.0,
            c_bat_ah: 210.0,
            i_max_a: 80.0,
            ic_max_a: 320.0,
            soc_xtra_fraction: 0.10,
            battery_cost_usd: 11_610.0,
            peak_threshold: 0.75,
            default_soc_start: 0.4,
            policy: PolicyKind::Proposed,
            weights: [1.0, 1.0, 1.0],
            fade_k1: None,
            fade_k2: None,
            fade_k3: None,
            fade_k4: None,
            fade_activation_energy_j_per_mol: None,
            fade_t_amb_k: None,
            fade_p1: None,
            fade_p2: None,
            fade_branch_slope_a: None,
            solver_tol_obj: solver.tol_obj,
            solver_max_branch_iters: solver.max_branch_iters,
            solver_max_inner_iters: solver.max_inner_iters,
            sessions: None,
            prices: None,
            out_dir: None,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a file; relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io { path: path.display().to_string(), message: e.to_string() })?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.sessions, &mut cfg.prices, &mut cfg.out_dir].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.dt_minutes == 0 {
            return fail("dt_minutes must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.soc_xtra_fraction) {
            return fail(format!("soc_xtra_fraction {} outside [0, 1]", self.soc_xtra_fraction));
        }
        if !(0.0..=1.0).contains(&self.default_soc_start) {
            return fail(format!("default_soc_start {} outside [0, 1]", self.default_soc_start));
        }
        self.sim_config(self.policy)?.validate()
    }

    pub fn limits(&self) -> ChargeLimits<f64> {
        ChargeLimits {
            i_max: self.i_max_a,
            ic_max: self.ic_max_a,
            voltage: self.voltage_v,
            c_bat: self.c_bat_ah,
            soc_xtra_ah: self.soc_xtra_fraction * self.c_bat_ah,
            dt_secs: i64::from(self.dt_minutes) * 60,
        }
    }

    pub fn fade_params(&self) -> FadeModelParams<f64> {
        let mut f = FadeModelParams::default();
        let set = |slot: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *slot = v;
            }
        };
        set(&mut f.k1, self.fade_k1);
        set(&mut f.k2, self.fade_k2);
        set(&mut f.k3, self.fade_k3);
        set(&mut f.k4, self.fade_k4);
        set(&mut f.activation_energy, self.fade_activation_energy_j_per_mol);
        set(&mut f.t_amb, self.fade_t_amb_k);
        set(&mut f.p1, self.fade_p1);
        set(&mut f.p2, self.fade_p2);
        set(&mut f.branch_slope, self.fade_branch_slope_a);
        f
    }

    pub fn weights(&self) -> Weights<f64> {
        Weights::from_array(self.weights)
    }

    pub fn solver(&self) -> SolverConfig<f64> {
        SolverConfig {
            tol_obj: self.solver_tol_obj,
            max_branch_iters: self.solver_max_branch_iters,
            max_inner_iters: self.solver_max_inner_iters,
            ..SolverConfig::default()
        }
    }

    pub fn policy(&self, kind: PolicyKind) -> Policy<f64> {
        match kind {
            PolicyKind::Baseline => Policy::Baseline,
            PolicyKind::Proposed => Policy::Proposed { weights: self.weights() },
        }
    }

    pub fn sim_config(&self, kind: PolicyKind) -> Result<SimConfig<f64>> {
        let cfg = SimConfig {
            limits: self.limits(),
            battery_cost: self.battery_cost_usd,
            peak_threshold: self.peak_threshold,
            policy: self.policy(kind),
            fade: self.fade_params(),
            solver: self.solver(),
        };
        Ok(cfg)
    }

    pub fn conversion(&self) -> SessionConversion<f64> {
        SessionConversion { voltage: self.voltage_v, c_bat: self.c_bat_ah, soc_start: self.default_soc_start }
    }
}
