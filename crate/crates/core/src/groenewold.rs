//! Groenewold information, reaction yields, the `ρ₃₅` coherence yield and
//! magnetic-field sweeps.

use rayon::prelude::*;

use crate::entropy::shannon_binary;
use crate::error::{Error, Result};
use crate::integrator::{integrate, IntegratorSettings, TrajectoryRecord};
use crate::liouville::{spectra_over_field, track_lambdas};
use crate::master::{DensityMatrix, MasterEquation, ReactionParams, Theory};
use crate::spin::SpinSystem;

/// Sweep runs are integrated for this many decay times `1/min(k_S, k_T)`.
pub const SWEEP_DECAY_TIMES: f64 = 12.0;
pub const SWEEP_DT: f64 = 0.02;
/// A run counts as complete when `Tr ρ(t_max)` is below this.
pub const COMPLETION_TRACE: f64 = 1e-3;
/// Decay rates at or below this count as zero.
pub const ZERO_RATE: f64 = 1e-8;

fn require_steps_with_entropies(record: &TrajectoryRecord) -> Result<()> {
    if record.theory() != Theory::Kominis {
        return Err(Error::Unsupported(
            "information accounting needs projection events, which the Haberkorn theory lacks".into(),
        ));
    }
    if record.steps.iter().any(|s| s.entropies.is_none()) {
        return Err(Error::InvalidParameter(
            "record lacks per-step entropies; integrate with step_entropies enabled".into(),
        ));
    }
    Ok(())
}

/// Per-step integrand of the Groenewold information.
pub fn groenewold_integrand(record: &TrajectoryRecord) -> Result<Vec<f64>> {
    require_steps_with_entropies(record)?;
    Ok(record
        .steps
        .iter()
        .map(|s| {
            let e = s.entropies.expect("checked");
            let (ws, wt) = s.stats.event_weights(Theory::Kominis);
            (ws + wt) * e.initial - ws * e.singlet - wt * e.triplet
        })
        .collect())
}

/// Information extracted by the singlet/triplet measurements over the whole
/// trajectory, in nats.
pub fn groenewold_information(record: &TrajectoryRecord) -> Result<f64> {
    Ok(groenewold_integrand(record)?.iter().sum())
}

/// `Σ (dr+dp) H[q_S]`, the Lanford-Robinson ceiling on the Groenewold
/// information.
pub fn lanford_robinson_budget(record: &TrajectoryRecord) -> Result<f64> {
    if record.theory() != Theory::Kominis {
        return Err(Error::Unsupported("budget is defined for Kominis records".into()));
    }
    Ok(record
        .steps
        .iter()
        .map(|s| {
            let (ws, wt) = s.stats.event_weights(Theory::Kominis);
            (ws + wt) * shannon_binary(s.stats.q_singlet)
        })
        .sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CoherenceFunctional {
    /// `Σ (dr+dp) |ρ₃₅| / Tr ρ`.
    #[default]
    EventWeighted,
    /// `(k_S + k_T) ∫ |ρ₃₅| dt`.
    TimeIntegral,
}

impl std::fmt::Display for CoherenceFunctional {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::EventWeighted => "event-weighted",
            Self::TimeIntegral => "time-integral",
        })
    }
}

impl std::str::FromStr for CoherenceFunctional {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "event-weighted" | "event_weighted" => Ok(Self::EventWeighted),
            "time-integral" | "time_integral" => Ok(Self::TimeIntegral),
            other => Err(Error::InvalidParameter(format!("unknown coherence functional `{other}`"))),
        }
    }
}

/// Yield of the `ρ₃₅` coherence (1-based, `↑↓⇑` and `↓↑⇑`).
pub fn coherence_yield_rho35(record: &TrajectoryRecord) -> Result<f64> {
    coherence_yield(record, CoherenceFunctional::EventWeighted)
}

pub fn coherence_yield(record: &TrajectoryRecord, functional: CoherenceFunctional) -> Result<f64> {
    if record.dim != 8 {
        return Err(Error::DimensionMismatch {
            expected: 8,
            got: record.dim,
        });
    }
    if record.tracked_element != Some((3, 5)) {
        return Err(Error::InvalidParameter(
            "record must track element (3,5)".into(),
        ));
    }
    let k_tot = record.params.k_singlet + record.params.k_triplet;
    Ok(record
        .steps
        .iter()
        .map(|s| {
            let mag = s.tracked.expect("tracked element recorded every step").norm();
            match functional {
                CoherenceFunctional::EventWeighted => {
                    let (ws, wt) = s.stats.event_weights(Theory::Kominis);
                    if s.trace > 0.0 {
                        (ws + wt) * mag / s.trace
                    } else {
                        0.0
                    }
                }
                CoherenceFunctional::TimeIntegral => k_tot * mag * record.dt,
            }
        })
        .sum())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSettings {
    pub t_max: f64,
    pub dt: f64,
    pub functional: CoherenceFunctional,
}

impl SweepSettings {
    /// [`SWEEP_DECAY_TIMES`] decay times at step [`SWEEP_DT`].
    pub fn for_params(params: &ReactionParams) -> Result<Self> {
        let k = params.k_singlet.min(params.k_triplet);
        if !(k > 0.0) {
            return Err(Error::InvalidParameter(
                "sweep needs both recombination rates positive".into(),
            ));
        }
        Ok(Self {
            t_max: SWEEP_DECAY_TIMES / k,
            dt: SWEEP_DT,
            functional: CoherenceFunctional::EventWeighted,
        })
    }

    fn integrator(&self) -> IntegratorSettings {
        let n = (self.t_max / self.dt).round().max(1.0) as usize;
        IntegratorSettings::new(self.t_max, self.dt)
            .with_stride(n)
            .with_step_entropies(true)
            .with_tracked_element(3, 5)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub b: f64,
    pub y_singlet: f64,
    pub y_triplet: f64,
    pub groenewold: f64,
    pub lr_budget: f64,
    pub c35: f64,
    pub final_trace: f64,
}

impl SweepPoint {
    pub fn is_complete(&self) -> bool {
        self.final_trace < COMPLETION_TRACE
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub points: Vec<SweepPoint>,
    /// One message per field value whose reaction did not complete.
    pub warnings: Vec<String>,
}

impl SweepResult {
    pub fn fields(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.b).collect()
    }

    pub fn singlet_yield(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.y_singlet).collect()
    }

    pub fn groenewold(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.groenewold).collect()
    }

    pub fn c35(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.c35).collect()
    }
}

fn check_grid(fields: &[f64]) -> Result<()> {
    if fields.is_empty() {
        return Err(Error::InvalidParameter("empty field grid".into()));
    }
    if fields.iter().any(|b| !b.is_finite()) {
        return Err(Error::InvalidParameter("field grid must be finite".into()));
    }
    if fields.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("field grid must be strictly ascending".into()));
    }
    Ok(())
}

/// Linear grid of `n` points on `[lo, hi]`.
pub fn linear_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// One pure-singlet run at field `b`.
pub fn sweep_point(template: &SpinSystem, params: &ReactionParams, b: f64, settings: &SweepSettings) -> Result<SweepPoint> {
    let sys = template.with_field(b)?;
    let eq = MasterEquation::new(&sys, *params)?;
    let rec = integrate(&eq, &DensityMatrix::singlet_up(&sys), &settings.integrator())?;
    let (y_singlet, y_triplet) = rec.yields();
    Ok(SweepPoint {
        b,
        y_singlet,
        y_triplet,
        groenewold: groenewold_information(&rec)?,
        lr_budget: lanford_robinson_budget(&rec)?,
        c35: coherence_yield(&rec, settings.functional)?,
        final_trace: rec.final_trace(),
    })
}

/// Yields, Groenewold information and `ρ₃₅` yield over a field grid, one
/// independent trajectory per field value.
pub fn field_sweep(
    template: &SpinSystem,
    params: &ReactionParams,
    fields: &[f64],
    settings: &SweepSettings,
) -> Result<SweepResult> {
    check_grid(fields)?;
    if params.theory != Theory::Kominis {
        return Err(Error::Unsupported("field sweeps use the Kominis theory".into()));
    }
    if template.dim() != 8 {
        return Err(Error::DimensionMismatch {
            expected: 8,
            got: template.dim(),
        });
    }
    let points = fields
        .par_iter()
        .map(|&b| sweep_point(template, params, b, settings))
        .collect::<Result<Vec<_>>>()?;
    let warnings = points
        .iter()
        .filter(|p| !p.is_complete())
        .map(|p| format!("B = {}: reaction incomplete, Tr ρ(t_max) = {:e}", p.b, p.final_trace))
        .collect();
    Ok(SweepResult { points, warnings })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LifetimeRow {
    pub b: f64,
    /// Smallest decay rate above [`ZERO_RATE`].
    pub slowest: Option<f64>,
    /// All λ_m, labelled consistently across the grid.
    pub tracked: Vec<f64>,
}

/// Decay rates of the non-reacting law along the field grid.
pub fn liouville_lifetimes_link(
    template: &SpinSystem,
    k_singlet: f64,
    k_triplet: f64,
    fields: &[f64],
) -> Result<Vec<LifetimeRow>> {
    check_grid(fields)?;
    let spectra = spectra_over_field(template, k_singlet, k_triplet, fields)?;
    let tracked = track_lambdas(&spectra);
    Ok(fields
        .iter()
        .zip(spectra.iter().zip(tracked))
        .map(|(&b, (sp, tracked))| LifetimeRow {
            b,
            slowest: sp.slowest_nonzero(ZERO_RATE),
            tracked,
        })
        .collect())
}

/// Indices of strict interior local minima of `ys` with `xs` in `[lo, hi]`.
pub fn local_minima_in(xs: &[f64], ys: &[f64], lo: f64, hi: f64) -> Vec<usize> {
    interior(xs, lo, hi)
        .filter(|&i| ys[i] < ys[i - 1] && ys[i] < ys[i + 1])
        .collect()
}

/// Indices of strict interior local extrema of `ys` with `xs` in `[lo, hi]`.
pub fn local_extrema_in(xs: &[f64], ys: &[f64], lo: f64, hi: f64) -> Vec<usize> {
    interior(xs, lo, hi)
        .filter(|&i| (ys[i] - ys[i - 1]) * (ys[i + 1] - ys[i]) < 0.0)
        .collect()
}

/// True when `ys` is non-decreasing or non-increasing over `xs ∈ [lo, hi]`.
pub fn monotone_in(xs: &[f64], ys: &[f64], lo: f64, hi: f64) -> bool {
    let idx: Vec<usize> = (0..xs.len()).filter(|&i| xs[i] >= lo && xs[i] <= hi).collect();
    let diffs: Vec<f64> = idx.windows(2).map(|w| ys[w[1]] - ys[w[0]]).collect();
    diffs.iter().all(|&d| d >= 0.0) || diffs.iter().all(|&d| d <= 0.0)
}

fn interior(xs: &[f64], lo: f64, hi: f64) -> impl Iterator<Item = usize> + '_ {
    (1..xs.len().saturating_sub(1)).filter(move |&i| xs[i] >= lo && xs[i] <= hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spin::{HyperfineCoupling, Operator};
    use crate::C64;

    fn fig3() -> (SpinSystem, ReactionParams) {
        (
            SpinSystem::single_nucleus(1.0, 0.0).unwrap(),
            ReactionParams::new(0.05, 0.05, 0.0, Theory::Kominis).unwrap(),
        )
    }

    fn run(sys: &SpinSystem, p: ReactionParams, t_max: f64, dt: f64) -> TrajectoryRecord {
        let eq = MasterEquation::new(sys, p).unwrap();
        let s = IntegratorSettings::new(t_max, dt)
            .with_stride(100)
            .with_step_entropies(true)
            .with_tracked_element(3, 5);
        integrate(&eq, &DensityMatrix::singlet_up(sys), &s).unwrap()
    }

    #[test]
    fn no_mixing_extracts_no_information() {
        let sys = SpinSystem::new(1, Vec::<HyperfineCoupling>::new(), 0.0).unwrap();
        let p = ReactionParams::new(0.05, 0.05, 0.0, Theory::Kominis).unwrap();
        let rec = run(&sys, p, 50.0, 1e-2);
        assert!(groenewold_information(&rec).unwrap().abs() < 1e-12);

        let mut diag = Operator::zeros(8, 8);
        diag[(2, 2)] = C64::from(0.5);
        diag[(5, 5)] = C64::from(0.5);
        let eq = MasterEquation::new(&sys, p).unwrap();
        let s = IntegratorSettings::new(50.0, 1e-2).with_tracked_element(3, 5);
        let rec = integrate(&eq, &DensityMatrix::new(diag).unwrap(), &s).unwrap();
        assert_eq!(coherence_yield_rho35(&rec).unwrap(), 0.0);
    }

    #[test]
    fn zero_field_information_is_positive_and_bounded() {
        let (sys, p) = fig3();
        let rec = run(&sys, p, 120.0, 1e-2);
        let integrand = groenewold_integrand(&rec).unwrap();
        for (s, g) in rec.steps.iter().zip(&integrand) {
            let (ws, wt) = s.stats.event_weights(Theory::Kominis);
            assert!(*g >= -1e-12);
            assert!(*g <= (ws + wt) * shannon_binary(s.stats.q_singlet) + 1e-9);
        }
        let ig = groenewold_information(&rec).unwrap();
        assert!(ig > 0.0);
        assert!(ig <= lanford_robinson_budget(&rec).unwrap() + 1e-6);
        assert!(coherence_yield_rho35(&rec).unwrap() > 0.0);
    }

    #[test]
    fn information_requires_kominis_entropies() {
        let (sys, p) = fig3();
        let rec = run(&sys, p.with_theory(Theory::Haberkorn), 1.0, 1e-2);
        assert!(matches!(groenewold_information(&rec), Err(Error::Unsupported(_))));
        let eq = MasterEquation::new(&sys, p).unwrap();
        let bare = integrate(&eq, &DensityMatrix::singlet_up(&sys), &IntegratorSettings::new(1.0, 1e-2)).unwrap();
        assert!(groenewold_information(&bare).is_err());
        assert!(coherence_yield_rho35(&bare).is_err());
    }

    #[test]
    fn coherence_yield_needs_dim_8() {
        let sys = SpinSystem::new(
            2,
            vec![
                HyperfineCoupling::donor(0, 1.0),
                HyperfineCoupling::donor(1, 0.5),
            ],
            0.0,
        )
        .unwrap();
        let p = ReactionParams::new(0.05, 0.05, 0.0, Theory::Kominis).unwrap();
        let rec = run(&sys, p, 1.0, 1e-2);
        assert!(matches!(coherence_yield_rho35(&rec), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn time_integral_functional() {
        let (sys, p) = fig3();
        let rec = run(&sys, p.with_theory(Theory::Kominis), 10.0, 1e-2);
        let manual: f64 = rec.steps.iter().map(|s| s.tracked.unwrap().norm()).sum::<f64>() * 0.1 * 1e-2;
        let c = coherence_yield(&rec, CoherenceFunctional::TimeIntegral).unwrap();
        assert!((c - manual).abs() < 1e-14);
    }

    #[test]
    fn sweep_validation_and_single_point() {
        let (sys, p) = fig3();
        let s = SweepSettings { t_max: 5.0, dt: 1e-2, functional: CoherenceFunctional::EventWeighted };
        assert!(field_sweep(&sys, &p, &[1.0, 0.5], &s).is_err());
        assert!(field_sweep(&sys, &p, &[], &s).is_err());
        assert!(field_sweep(&sys, &p.with_theory(Theory::Haberkorn), &[0.0], &s).is_err());
        let r = field_sweep(&sys, &p, &[0.3], &s).unwrap();
        assert_eq!(r.points.len(), 1);
        assert_eq!(r.warnings.len(), 1);
        assert!(!r.points[0].is_complete());
    }

    #[test]
    fn sweep_settings_rule() {
        let (_, p) = fig3();
        let s = SweepSettings::for_params(&p).unwrap();
        assert!((s.t_max - 240.0).abs() < 1e-12);
        let z = ReactionParams::new(0.0, 0.05, 0.0, Theory::Kominis).unwrap();
        assert!(SweepSettings::for_params(&z).is_err());
    }

    #[test]
    fn extremum_helpers() {
        let xs = linear_grid(0.0, 2.0, 5);
        assert_eq!(xs, vec![0.0, 0.5, 1.0, 1.5, 2.0]);
        let ys = [3.0, 2.0, 1.0, 2.0, 3.0];
        assert_eq!(local_minima_in(&xs, &ys, 0.8, 1.2), vec![2]);
        assert_eq!(local_extrema_in(&xs, &ys, 0.0, 2.0), vec![2]);
        assert!(!monotone_in(&xs, &ys, 0.0, 2.0));
        assert!(monotone_in(&xs, &ys, 1.0, 2.0));
        assert_eq!(linear_grid(1.0, 2.0, 1), vec![1.0]);
    }

    #[test]
    fn lifetimes_table() {
        let sys = SpinSystem::new(1, Vec::<HyperfineCoupling>::new(), 0.0).unwrap();
        let rows = liouville_lifetimes_link(&sys, 0.05, 0.05, &[0.0, 0.5]).unwrap();
        for r in &rows {
            assert!((r.slowest.unwrap() - 0.05).abs() < 1e-10);
            assert!(r.tracked.iter().all(|&l| l >= -1e-10));
        }
    }
}
