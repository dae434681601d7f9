//! Commands behind the `fleetcharge` binary: load inputs, run policies and
//! render reports.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use fleetcharge::config::{PolicyKind, RunConfig};
use fleetcharge::fade::{fit_quality, FitGrid, FitReport};
use fleetcharge::ingest::{format_timestamp, parse_prices, parse_sessions, PriceCurve};
use fleetcharge::scheduler::LedgerRow;
use fleetcharge::simulator::{run, Event, SimOutcome};
use fleetcharge::{MetricsReport, Weights};
use serde::Serialize;
use sha2::{Digest, Sha256};

/// Default sweep: cost-led, fade-led and availability-led weights.
pub const DEFAULT_SWEEP: [[f64; 3]; 3] = [[0.6, 0.3, 0.1], [0.3, 0.6, 0.1], [0.1, 0.3, 0.6]];

pub struct Inputs {
    pub config: RunConfig,
    pub events: Vec<Event<f64>>,
    pub prices: PriceCurve<f64>,
}

impl Inputs {
    pub fn load(config: RunConfig, sessions: Option<&Path>, prices: Option<&Path>) -> Result<Self> {
        let sessions = sessions
            .map(Path::to_path_buf)
            .or_else(|| config.sessions.clone())
            .ok_or_else(|| anyhow!("no session file given (--sessions or `sessions` in the config)"))?;
        let prices = prices
            .map(Path::to_path_buf)
            .or_else(|| config.prices.clone())
            .ok_or_else(|| anyhow!("price-gap: no price file given (--prices or `prices` in the config)"))?;
        let events = parse_sessions(&sessions, &config.conversion())?;
        let prices = parse_prices(&prices)?;
        Ok(Self { config, events, prices })
    }

    pub fn simulate(&self, kind: PolicyKind, weights: Weights) -> Result<SimOutcome<f64>> {
        let mut cfg = self.config.sim_config(kind)?;
        if let fleetcharge::scheduler::Policy::Proposed { weights: w } = &mut cfg.policy {
            *w = weights;
        }
        Ok(run(&self.events, &self.prices, &cfg)?)
    }

    /// SHA-256 of the canonical JSON form of the event list.
    pub fn digest(&self) -> String {
        event_digest(&self.events)
    }
}

pub fn event_digest(events: &[Event<f64>]) -> String {
    let bytes = serde_json::to_vec(events).expect("events serialize");
    let hash = Sha256::digest(bytes);
    hash.iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

pub fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p).with_context(|| format!("loading {}", p.display())),
        None => Ok(RunConfig::default()),
    }
}

pub fn parse_weights(s: &str) -> Result<Weights> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|_| anyhow!("bad weight {p:?} in {s:?}")))
        .collect::<Result<_>>()?;
    let [a, b, c] = parts[..] else {
        return Err(anyhow!("expected three comma-separated weights, got {s:?}"));
    };
    let w = Weights::new(a, b, c);
    w.validate()?;
    Ok(w)
}

/// Metrics that belong in reproducible reports (everything except timing).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsView {
    pub total_charging_cost_usd: f64,
    pub total_fade_exact_ah: f64,
    pub total_fade_approx_ah: f64,
    pub total_value_loss_usd: f64,
    pub total_peak_power_period_h: f64,
    pub mean_event_peak_period_h: f64,
    pub total_charging_time_h: f64,
    pub n_served: usize,
    pub n_rejected: usize,
    pub n_relaxed: usize,
}

impl From<&MetricsReport> for MetricsView {
    fn from(m: &MetricsReport) -> Self {
        Self {
            total_charging_cost_usd: m.total_charging_cost,
            total_fade_exact_ah: m.total_fade_exact,
            total_fade_approx_ah: m.total_fade_approx,
            total_value_loss_usd: m.total_value_loss,
            total_peak_power_period_h: m.total_peak_power_period,
            mean_event_peak_period_h: m.mean_event_peak_period(),
            total_charging_time_h: m.total_charging_time,
            n_served: m.n_served,
            n_rejected: m.n_rejected,
            n_relaxed: m.n_relaxed,
        }
    }
}

impl MetricsView {
    fn rows(&self) -> [(&'static str, f64, usize); 10] {
        [
            ("Total charging cost ($)", self.total_charging_cost_usd, 2),
            ("Total capacity fade, exact (Ah)", self.total_fade_exact_ah, 4),
            ("Total capacity fade, approx (Ah)", self.total_fade_approx_ah, 4),
            ("Amortized value loss ($)", self.total_value_loss_usd, 2),
            ("Total peak power period (h)", self.total_peak_power_period_h, 2),
            ("Mean peak power period per event (h)", self.mean_event_peak_period_h, 2),
            ("Total charging time (h)", self.total_charging_time_h, 2),
            ("Vehicles served", self.n_served as f64, 0),
            ("Tasks rejected", self.n_rejected as f64, 0),
            ("Plans with relaxed bounds", self.n_relaxed as f64, 0),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub event_digest: String,
    pub weights: [f64; 3],
    pub baseline: MetricsView,
    pub proposed: MetricsView,
}

fn pct(new: f64, old: f64) -> String {
    if old == 0.0 {
        "n/a".into()
    } else {
        format!("{:+.1}%", 100.0 * (new - old) / old)
    }
}

impl Comparison {
    pub fn render_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "events sha256 {}", self.event_digest);
        let _ = writeln!(s, "weights {:?}", self.weights);
        let _ = writeln!(s, "{:<38} {:>14} {:>14} {:>9}", "metric", "baseline", "proposed", "change");
        for ((name, b, prec), (_, p, _)) in self.baseline.rows().iter().zip(self.proposed.rows().iter()) {
            let _ = writeln!(s, "{name:<38} {b:>14.prec$} {p:>14.prec$} {:>9}", pct(*p, *b));
        }
        s
    }

    pub fn render_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("comparison serializes") + "\n"
    }
}

pub fn compare(inputs: &Inputs, weights: Weights) -> Result<(Comparison, [SimOutcome<f64>; 2])> {
    let (base, prop) = std::thread::scope(|s| {
        let b = s.spawn(|| inputs.simulate(PolicyKind::Baseline, weights));
        let p = inputs.simulate(PolicyKind::Proposed, weights);
        (b.join().expect("baseline run panicked"), p)
    });
    let (base, prop) = (base?, prop?);
    let cmp = Comparison {
        event_digest: inputs.digest(),
        weights: weights.as_array(),
        baseline: MetricsView::from(&base.metrics),
        proposed: MetricsView::from(&prop.metrics),
    };
    Ok((cmp, [base, prop]))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub weights: [f64; 3],
    pub metrics: MetricsView,
}

/// Runs the proposed policy once per weight triple, in parallel, keeping input order.
pub fn sweep(inputs: &Inputs, triples: &[Weights]) -> Result<(Vec<SweepRow>, Vec<SimOutcome<f64>>)> {
    let results: Vec<Result<SimOutcome<f64>>> = std::thread::scope(|s| {
        let handles: Vec<_> = triples.iter().map(|w| s.spawn(move || inputs.simulate(PolicyKind::Proposed, *w))).collect();
        handles.into_iter().map(|h| h.join().expect("sweep run panicked")).collect()
    });
    let mut rows = Vec::new();
    let mut outcomes = Vec::new();
    for (w, r) in triples.iter().zip(results) {
        let out = r?;
        rows.push(SweepRow { weights: w.as_array(), metrics: MetricsView::from(&out.metrics) });
        outcomes.push(out);
    }
    Ok((rows, outcomes))
}

pub fn render_sweep(rows: &[SweepRow]) -> String {
    let mut s = String::new();
    let _ = write!(s, "{:<38}", "metric");
    for r in rows {
        let label = format!("({}, {}, {})", r.weights[0], r.weights[1], r.weights[2]);
        let _ = write!(s, " {label:>16}");
    }
    s.push('\n');
    if let Some(first) = rows.first() {
        for (k, (name, _, prec)) in first.metrics.rows().iter().enumerate() {
            let _ = write!(s, "{name:<38}");
            for r in rows {
                let v = r.metrics.rows()[k].1;
                let _ = write!(s, " {v:>16.prec$}");
            }
            s.push('\n');
        }
    }
    s
}

/// Exact-versus-surface fit over the slot conditions implied by the config.
pub fn validate_fade(config: &RunConfig, points: usize) -> Result<FitReport> {
    let lim = config.limits();
    let grid = FitGrid::for_limits(lim.dt_hours(), lim.c_bat, lim.i_max, points);
    Ok(fit_quality(&config.fade_params(), &grid)?)
}

pub fn render_fit(report: &FitReport, points: usize) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "grid {points} x {points} (soc_init, current)");
    let _ = writeln!(s, "{:<8} {:>8} {:>10} {:>14} {:>14}", "branch", "points", "r2", "rmse_ah", "max_abs_ah");
    for (name, b) in [("HI", &report.hi), ("LO", &report.lo)] {
        let _ = writeln!(s, "{name:<8} {:>8} {:>10.5} {:>14.4e} {:>14.4e}", b.points, b.r_squared, b.rmse_ah, b.max_abs_err_ah);
    }
    s
}

pub fn write_ledger(path: &Path, rows: &[LedgerRow<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(["time", "vehicle_id", "current_a", "power_kw", "price", "cost_usd", "soc", "fade_exact_ah", "fade_approx_ah"])?;
    for r in rows {
        w.write_record([
            format_timestamp(r.time),
            r.vehicle_id.clone(),
            format!("{}", r.current_a),
            format!("{}", r.power_kw),
            format!("{}", r.price),
            format!("{}", r.cost_usd),
            format!("{}", r.soc),
            format!("{}", r.fade_exact_ah),
            format!("{}", r.fade_approx_ah),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Wall-clock figures, kept apart from the reproducible report.
#[derive(Debug, Serialize)]
pub struct Timing {
    pub label: String,
    pub max_opt_time_ms: f64,
    pub mean_opt_time_ms: f64,
    pub plans: usize,
}

impl Timing {
    pub fn of(label: &str, out: &SimOutcome<f64>) -> Self {
        let n = out.plan_times_ms.len();
        let mean = if n == 0 { 0.0 } else { out.plan_times_ms.iter().sum::<f64>() / n as f64 };
        Self { label: label.into(), max_opt_time_ms: out.metrics.max_opt_time_ms, mean_opt_time_ms: mean, plans: n }
    }
}

pub fn ensure_dir(dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir.to_path_buf())
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}
