//! Cost-versus-velocity model adjudication.
//!
//! Four cost laws compete on the same `(velocity, cost)` samples:
//!
//! | model               | cost                                   |
//! |---------------------|----------------------------------------|
//! | `classical`         | `k·v² + b`                             |
//! | `classical_shifted` | `k·(v−v₀)² + b`                        |
//! | `hybrid`            | `k·u² + b`, `u = (v−v₀)/(1−v·v₀)`      |
//! | `relativistic`      | `k·(γ(v−v₀) − 1) + b`                  |
//!
//! In the absolute frame the origin `v₀` is pinned at zero; in the shifted
//! frame it is a free parameter searched over `[0, min v]`. The classical
//! model never moves its origin. Every law is linear in `(k, b)` for a fixed
//! origin, so fits are separable: closed-form weighted least squares inside
//! a one-dimensional search over `v₀`.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::io::Write;

use crate::error::{InertiaError, Result};

pub const DEFAULT_GRID_POINTS: usize = 401;
pub const DEFAULT_REFINE_TOLERANCE: f64 = 1e-10;
pub const MIN_VELOCITY_SPAN: f64 = 0.2;
pub const MIN_SAMPLES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostSample {
    pub velocity: f64,
    pub cost: f64,
    pub weight: f64,
    pub censored: bool,
}

impl CostSample {
    pub fn new(velocity: f64, cost: f64) -> Self {
        CostSample { velocity, cost, weight: 1.0, censored: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    Classical,
    ClassicalShifted,
    Hybrid,
    Relativistic,
}

impl Model {
    pub const ALL: [Model; 4] = [Model::Classical, Model::ClassicalShifted, Model::Hybrid, Model::Relativistic];

    pub fn as_str(self) -> &'static str {
        match self {
            Model::Classical => "classical",
            Model::ClassicalShifted => "classical_shifted",
            Model::Hybrid => "hybrid",
            Model::Relativistic => "relativistic",
        }
    }

    fn has_origin(self) -> bool {
        !matches!(self, Model::Classical)
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    Absolute,
    Shifted,
}

impl Frame {
    pub const ALL: [Frame; 2] = [Frame::Absolute, Frame::Shifted];

    pub fn as_str(self) -> &'static str {
        match self {
            Frame::Absolute => "absolute",
            Frame::Shifted => "shifted",
        }
    }
}

impl fmt::Display for Frame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub k: f64,
    pub b: f64,
    pub v0: f64,
}

/// The law's single nonlinear feature at velocity `v` for origin `v0`.
fn feature(model: Model, v: f64, v0: f64) -> Result<f64> {
    if !(v.is_finite() && (0.0..1.0).contains(&v)) {
        return Err(InertiaError::domain(format!("velocity {v} outside [0, 1)")));
    }
    let v0 = if model.has_origin() { v0 } else { 0.0 };
    let shifted = match model {
        Model::Classical => v,
        Model::ClassicalShifted | Model::Relativistic => v - v0,
        Model::Hybrid => (v - v0) / (1.0 - v * v0),
    };
    if !(0.0..1.0).contains(&shifted) {
        return Err(InertiaError::domain(format!(
            "transformed velocity {shifted} outside [0, 1) (v = {v}, v0 = {v0})"
        )));
    }
    Ok(match model {
        Model::Relativistic => 1.0 / ((1.0 - shifted) * (1.0 + shifted)).sqrt() - 1.0,
        _ => shifted * shifted,
    })
}

pub fn model_predict(model: Model, params: &ModelParams, v: f64) -> Result<f64> {
    Ok(params.k * feature(model, v, params.v0)? + params.b)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: Model,
    pub frame: Frame,
    pub k: f64,
    pub b: f64,
    /// Origin used by the fit; `None` for the classical law.
    pub v0: Option<f64>,
    pub rmse: f64,
    pub n_samples: usize,
    /// Whether the origin refinement reached its tolerance.
    pub converged: bool,
}

impl FitResult {
    pub fn params(&self) -> ModelParams {
        ModelParams { k: self.k, b: self.b, v0: self.v0.unwrap_or(0.0) }
    }

    pub fn predict(&self, v: f64) -> Result<f64> {
        model_predict(self.model, &self.params(), v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitOptions {
    pub include_censored: bool,
    pub grid_points: usize,
    pub tolerance: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            include_censored: false,
            grid_points: DEFAULT_GRID_POINTS,
            tolerance: DEFAULT_REFINE_TOLERANCE,
        }
    }
}

struct LinearFit {
    k: f64,
    b: f64,
    sse: f64,
}

/// Weighted least squares of `cost ≈ k·φ + b`, centered for stability.
fn solve_linear(model: Model, samples: &[CostSample], v0: f64) -> Result<LinearFit> {
    let phi = samples
        .iter()
        .map(|s| feature(model, s.velocity, v0))
        .collect::<Result<Vec<f64>>>()?;
    let sw: f64 = samples.iter().map(|s| s.weight).sum();
    let phi_bar = samples.iter().zip(&phi).map(|(s, p)| s.weight * p).sum::<f64>() / sw;
    let y_bar = samples.iter().map(|s| s.weight * s.cost).sum::<f64>() / sw;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (s, p) in samples.iter().zip(&phi) {
        let dx = p - phi_bar;
        sxx += s.weight * dx * dx;
        sxy += s.weight * dx * (s.cost - y_bar);
    }
    let scale = phi.iter().map(|p| p * p).fold(0.0, f64::max);
    if !(sxx > 1e-24 * scale.max(f64::MIN_POSITIVE) * sw) {
        return Err(InertiaError::DegenerateDesign(format!(
            "{model} feature has no spread across samples"
        )));
    }
    let k = sxy / sxx;
    let b = y_bar - k * phi_bar;
    let sse = samples
        .iter()
        .zip(&phi)
        .map(|(s, p)| {
            let r = k * p + b - s.cost;
            s.weight * r * r
        })
        .sum();
    Ok(LinearFit { k, b, sse })
}

fn usable(samples: &[CostSample], options: &FitOptions) -> Result<Vec<CostSample>> {
    let kept: Vec<CostSample> =
        samples.iter().copied().filter(|s| options.include_censored || !s.censored).collect();
    for s in &kept {
        if !(s.cost.is_finite() && s.weight.is_finite() && s.weight > 0.0) {
            return Err(InertiaError::domain(format!("invalid sample {s:?}")));
        }
        if !(s.velocity.is_finite() && (0.0..1.0).contains(&s.velocity)) {
            return Err(InertiaError::domain(format!("sample velocity {} outside [0, 1)", s.velocity)));
        }
    }
    if kept.len() < MIN_SAMPLES {
        return Err(InertiaError::DegenerateDesign(format!(
            "need at least {MIN_SAMPLES} usable samples, got {}",
            kept.len()
        )));
    }
    let lo = kept.iter().map(|s| s.velocity).fold(f64::INFINITY, f64::min);
    let hi = kept.iter().map(|s| s.velocity).fold(f64::NEG_INFINITY, f64::max);
    if hi - lo < MIN_VELOCITY_SPAN {
        return Err(InertiaError::DegenerateDesign(format!(
            "velocities span {:.4}, need at least {MIN_VELOCITY_SPAN}",
            hi - lo
        )));
    }
    Ok(kept)
}

fn sse_at(model: Model, samples: &[CostSample], v0: f64) -> f64 {
    solve_linear(model, samples, v0).map(|f| f.sse).unwrap_or(f64::INFINITY)
}

/// Grid search over `[0, hi]`, then golden-section refinement around the
/// best grid point. Returns `(v0, converged)`.
fn search_origin(model: Model, samples: &[CostSample], hi: f64, options: &FitOptions) -> (f64, bool) {
    if hi <= 0.0 {
        return (0.0, true);
    }
    let n = options.grid_points.max(3);
    let step = hi / (n - 1) as f64;
    let (best_i, best_sse) = (0..n)
        .map(|i| (i, sse_at(model, samples, (i as f64 * step).min(hi))))
        .fold((0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });

    let mut a = (best_i.saturating_sub(1) as f64 * step).max(0.0);
    let mut b = ((best_i + 1) as f64 * step).min(hi);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = sse_at(model, samples, c);
    let mut fd = sse_at(model, samples, d);
    let mut iterations = 0;
    while (b - a) > options.tolerance && iterations < 200 {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = sse_at(model, samples, c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = sse_at(model, samples, d);
        }
        iterations += 1;
    }
    let converged = (b - a) <= options.tolerance;
    let mid = 0.5 * (a + b);
    let candidates = [(mid, sse_at(model, samples, mid)), (best_i as f64 * step, best_sse)];
    let (v0, _) = candidates.into_iter().fold((0.0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
    (v0.min(hi), converged)
}

pub fn fit(model: Model, samples: &[CostSample], frame: Frame, options: &FitOptions) -> Result<FitResult> {
    let kept = usable(samples, options)?;
    let free_origin = frame == Frame::Shifted && model.has_origin();
    let (v0, converged) = if free_origin {
        let min_v = kept.iter().map(|s| s.velocity).fold(f64::INFINITY, f64::min);
        search_origin(model, &kept, min_v, options)
    } else {
        (0.0, true)
    };
    let lin = solve_linear(model, &kept, v0)?;
    let sw: f64 = kept.iter().map(|s| s.weight).sum();
    Ok(FitResult {
        model,
        frame,
        k: lin.k,
        b: lin.b,
        v0: model.has_origin().then_some(v0),
        rmse: (lin.sse / sw).sqrt(),
        n_samples: kept.len(),
        converged,
    })
}

/// Weighted residual sum of squares of arbitrary parameters.
pub fn residual_sum(model: Model, params: &ModelParams, samples: &[CostSample]) -> Result<f64> {
    samples.iter().try_fold(0.0, |acc, s| {
        let r = model_predict(model, params, s.velocity)? - s.cost;
        Ok(acc + s.weight * r * r)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictRow {
    pub model: Model,
    pub frame: Frame,
    pub fit: Option<FitResult>,
    pub error: Option<String>,
}

impl VerdictRow {
    pub fn rmse(&self) -> f64 {
        self.fit.map(|f| f.rmse).unwrap_or(f64::INFINITY)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adjudication {
    /// Every model in every frame, best fit first; failed fits last.
    pub rows: Vec<VerdictRow>,
    /// `|rmse_rel,absolute − rmse_rel,shifted|`, when both fits succeeded.
    pub covariance_gap: Option<f64>,
}

impl Adjudication {
    pub fn get(&self, model: Model, frame: Frame) -> Option<&FitResult> {
        self.rows
            .iter()
            .find(|r| r.model == model && r.frame == frame)
            .and_then(|r| r.fit.as_ref())
    }

    pub fn winner(&self) -> Option<Model> {
        self.rows.first().filter(|r| r.fit.is_some()).map(|r| r.model)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        w.write_record(["model", "frame", "k", "b", "v0", "rmse", "converged"])?;
        for row in &self.rows {
            match &row.fit {
                Some(f) => w.write_record([
                    row.model.as_str().to_string(),
                    row.frame.as_str().to_string(),
                    f.k.to_string(),
                    f.b.to_string(),
                    f.v0.map(|v| v.to_string()).unwrap_or_default(),
                    f.rmse.to_string(),
                    f.converged.to_string(),
                ])?,
                None => w.write_record([row.model.as_str(), row.frame.as_str(), "", "", "", "", "false"])?,
            }
        }
        w.flush()?;
        Ok(())
    }
}

pub fn adjudicate(samples: &[CostSample], options: &FitOptions) -> Adjudication {
    let mut rows: Vec<VerdictRow> = Model::ALL
        .iter()
        .flat_map(|&m| Frame::ALL.iter().map(move |&f| (m, f)))
        .map(|(model, frame)| match fit(model, samples, frame, options) {
            Ok(fit) => VerdictRow { model, frame, fit: Some(fit), error: None },
            Err(e) => VerdictRow { model, frame, fit: None, error: Some(e.to_string()) },
        })
        .collect();
    rows.sort_by(|a, b| a.rmse().total_cmp(&b.rmse()));
    let find = |frame| {
        rows.iter()
            .find(|r| r.model == Model::Relativistic && r.frame == frame)
            .and_then(|r| r.fit.map(|f| f.rmse))
    };
    let covariance_gap = match (find(Frame::Absolute), find(Frame::Shifted)) {
        (Some(a), Some(s)) => Some((a - s).abs()),
        _ => None,
    };
    Adjudication { rows, covariance_gap }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gamma_minus_one(v: f64) -> f64 {
        1.0 / (1.0 - v * v).sqrt() - 1.0
    }

    fn relativistic_samples() -> Vec<CostSample> {
        (1..=9)
            .map(|i| {
                let v = i as f64 / 10.0;
                CostSample::new(v, 10.0 * gamma_minus_one(v) + 2.0)
            })
            .collect()
    }

    fn quadratic_samples() -> Vec<CostSample> {
        (1..=9)
            .map(|i| {
                let v = i as f64 / 10.0;
                CostSample::new(v, 7.0 * v * v + 1.0)
            })
            .collect()
    }

    #[test]
    fn predict_examples() {
        let p = ModelParams { k: 3.0, b: 1.5, v0: 0.0 };
        assert_eq!(model_predict(Model::Relativistic, &p, 0.0).unwrap(), 1.5);
        let unit = ModelParams { k: 1.0, b: 0.0, v0: 0.0 };
        assert!((model_predict(Model::Relativistic, &unit, 0.8).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        for v in [0.0, 0.1, 0.5, 0.95] {
            let a = model_predict(Model::Hybrid, &p, v).unwrap();
            let b = model_predict(Model::Classical, &p, v).unwrap();
            assert_eq!(a, b);
        }
        assert!(model_predict(Model::Classical, &p, 1.0).is_err());
        let shifted = ModelParams { v0: 0.5, ..p };
        assert!(model_predict(Model::ClassicalShifted, &shifted, 0.2).is_err());
    }

    #[test]
    fn hybrid_uses_relativistic_addition() {
        let p = ModelParams { k: 1.0, b: 0.0, v0: 0.5 };
        let u: f64 = (0.8 - 0.5) / (1.0 - 0.4);
        assert!((model_predict(Model::Hybrid, &p, 0.8).unwrap() - u * u).abs() < 1e-15);
    }

    #[test]
    fn recovers_relativistic_parameters() {
        let s = relativistic_samples();
        let f = fit(Model::Relativistic, &s, Frame::Absolute, &FitOptions::default()).unwrap();
        assert!((f.k - 10.0).abs() < 1e-6 && (f.b - 2.0).abs() < 1e-6);
        assert!(f.rmse < 1e-8);
        let c = fit(Model::Classical, &s, Frame::Absolute, &FitOptions::default()).unwrap();
        assert!(c.rmse > f.rmse);
    }

    #[test]
    fn quadratic_data_prefers_classical() {
        let s = quadratic_samples();
        let c = fit(Model::Classical, &s, Frame::Absolute, &FitOptions::default()).unwrap();
        let r = fit(Model::Relativistic, &s, Frame::Absolute, &FitOptions::default()).unwrap();
        assert!(c.rmse <= r.rmse);
        let verdict = adjudicate(&s, &FitOptions::default());
        assert_ne!(verdict.winner(), Some(Model::Relativistic));
    }

    #[test]
    fn shifted_frame_is_covariant_for_relativistic_data() {
        let s = relativistic_samples();
        let verdict = adjudicate(&s, &FitOptions::default());
        let abs = verdict.get(Model::Relativistic, Frame::Absolute).unwrap();
        let sh = verdict.get(Model::Relativistic, Frame::Shifted).unwrap();
        assert!(abs.rmse < 1e-8 && sh.rmse < 1e-8);
        assert!(verdict.covariance_gap.unwrap() < 0.1 * abs.rmse.max(1e-12));
        let cs_abs = verdict.get(Model::ClassicalShifted, Frame::Absolute).unwrap();
        let cs_sh = verdict.get(Model::ClassicalShifted, Frame::Shifted).unwrap();
        assert!(cs_abs.rmse > cs_sh.rmse);
        assert_eq!(verdict.winner(), Some(Model::Relativistic));
        assert_eq!(verdict.rows.len(), 8);
    }

    #[test]
    fn hybrid_at_zero_origin_matches_classical() {
        let s = relativistic_samples();
        let h = fit(Model::Hybrid, &s, Frame::Absolute, &FitOptions::default()).unwrap();
        let c = fit(Model::Classical, &s, Frame::Absolute, &FitOptions::default()).unwrap();
        assert_eq!(h.rmse, c.rmse);
        assert_eq!(h.v0, Some(0.0));
        assert_eq!(c.v0, None);
    }

    #[test]
    fn recovered_parameters_are_local_minima() {
        let mut s = relativistic_samples();
        // Perturb the data so the optimum carries a nonzero residual.
        for (i, x) in s.iter_mut().enumerate() {
            x.cost += if i % 2 == 0 { 0.3 } else { -0.2 };
        }
        for model in Model::ALL {
            let f = fit(model, &s, Frame::Absolute, &FitOptions::default()).unwrap();
            let base = residual_sum(model, &f.params(), &s).unwrap();
            for (dk, db) in [(1.01, 1.0), (0.99, 1.0), (1.0, 1.01), (1.0, 0.99)] {
                let p = ModelParams { k: f.k * dk, b: f.b * db, ..f.params() };
                assert!(residual_sum(model, &p, &s).unwrap() > base, "{model} not at a minimum");
            }
        }
    }

    #[test]
    fn scale_equivariance() {
        let mut s = relativistic_samples();
        for (i, x) in s.iter_mut().enumerate() {
            x.cost += 0.1 * (i as f64).sin();
        }
        let scaled: Vec<CostSample> = s.iter().map(|x| CostSample { cost: 3.5 * x.cost, ..*x }).collect();
        let a = adjudicate(&s, &FitOptions::default());
        let b = adjudicate(&scaled, &FitOptions::default());
        for (ra, rb) in a.rows.iter().zip(&b.rows) {
            assert_eq!((ra.model, ra.frame), (rb.model, rb.frame));
            let (fa, fb) = (ra.fit.unwrap(), rb.fit.unwrap());
            assert!((fb.k - 3.5 * fa.k).abs() <= 1e-8 * fa.k.abs().max(1.0));
            assert!((fb.b - 3.5 * fa.b).abs() <= 1e-8 * fa.b.abs().max(1.0));
            assert!((fb.rmse - 3.5 * fa.rmse).abs() <= 1e-8 * fa.rmse.max(1e-6));
        }
    }

    #[test]
    fn degenerate_inputs() {
        let same: Vec<CostSample> = (0..6).map(|i| CostSample::new(0.5, i as f64)).collect();
        assert!(matches!(
            fit(Model::Classical, &same, Frame::Absolute, &FitOptions::default()),
            Err(InertiaError::DegenerateDesign(_))
        ));
        let few = vec![CostSample::new(0.1, 1.0), CostSample::new(0.9, 2.0)];
        assert!(fit(Model::Classical, &few, Frame::Absolute, &FitOptions::default()).is_err());
    }

    #[test]
    fn censored_samples_are_excluded_by_default() {
        let mut s = relativistic_samples();
        s.push(CostSample { velocity: 0.95, cost: 1e6, weight: 1.0, censored: true });
        let f = fit(Model::Relativistic, &s, Frame::Absolute, &FitOptions::default()).unwrap();
        assert_eq!(f.n_samples, 9);
        assert!(f.rmse < 1e-8);
        let opts = FitOptions { include_censored: true, ..FitOptions::default() };
        let g = fit(Model::Relativistic, &s, Frame::Absolute, &opts).unwrap();
        assert_eq!(g.n_samples, 10);
        assert!(g.rmse > 1.0);
    }

    #[test]
    fn partial_tables_survive_failures() {
        // A velocity of 0 forces the shifted origin to zero but stays valid;
        // an out-of-range velocity fails every row.
        let mut s = quadratic_samples();
        s.push(CostSample::new(1.2, 3.0));
        let verdict = adjudicate(&s, &FitOptions::default());
        assert!(verdict.rows.iter().all(|r| r.error.is_some()));
        assert_eq!(verdict.winner(), None);
        assert_eq!(verdict.covariance_gap, None);
    }

    #[test]
    fn verdict_csv_layout() {
        let verdict = adjudicate(&relativistic_samples(), &FitOptions::default());
        let mut buf = Vec::new();
        verdict.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("model,frame,k,b,v0,rmse,converged"));
        assert_eq!(lines.count(), 8);
    }
}
