//! Entropy functionals and the Ozawa / Lanford-Robinson bound audits.
//!
//! Recombination during `dt` is read as a singlet/triplet measurement on the
//! single-pair state `ρ/Tr{ρ}`: a fraction of pairs ends in
//! `ρ_S = Q_S ρ Q_S / Tr{ρQ_S}`, the rest in `ρ_T`. The post-measurement
//! entropy is the event-weighted average of `S[ρ_S]` and `S[ρ_T]`, where the
//! events counted depend on the theory (see [`StepStats::event_weights`]).
//! All entropies are in nats.

use std::fmt;

use nalgebra::DMatrixView;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::integrator::{integrate, IntegratorSettings, TrajectoryRecord};
use crate::master::{purity, DensityMatrix, MasterEquation, ReactionParams, StepStats, Theory};
use crate::spin::{Operator, Projectors, SpinSystem};
use crate::C64;

/// Eigenvalues below this count as exact zeros in `-λ ln λ`.
pub const ZERO_EIGENVALUE: f64 = 1e-14;
/// Tolerance of the bound verdicts on entropy differences.
pub const BOUND_TOL: f64 = 1e-9;
const INPUT_TOL: f64 = 1e-9;

fn spectrum_entropy(eigenvalues: impl IntoIterator<Item = f64>) -> f64 {
    eigenvalues
        .into_iter()
        .filter(|&l| l > ZERO_EIGENVALUE)
        .map(|l| -l * l.ln())
        .sum()
}

/// Entropy of `m / scale` for a Hermitian block `m`.
fn block_entropy(m: DMatrixView<'_, C64>, scale: f64) -> f64 {
    if scale <= 0.0 {
        return 0.0;
    }
    let ev = m.into_owned().symmetric_eigenvalues();
    spectrum_entropy(ev.iter().map(|l| l / scale))
}

/// `-Tr{ρ ln ρ}` of a unit-trace density matrix.
pub fn von_neumann_entropy(rho: &Operator) -> Result<f64> {
    let tr = rho.trace().re;
    if (tr - 1.0).abs() > INPUT_TOL {
        return Err(Error::InvalidState(format!(
            "entropy needs unit trace (got {tr}); normalize by Tr ρ first"
        )));
    }
    let h = (rho + rho.adjoint()) * C64::from(0.5);
    let ev = h.symmetric_eigenvalues();
    if let Some(min) = ev.iter().copied().reduce(f64::min) {
        if min < -INPUT_TOL {
            return Err(Error::InvalidState(format!("negative eigenvalue {min:e}")));
        }
    }
    Ok(spectrum_entropy(ev.iter().copied()))
}

/// Entropy per radical pair, `S[ρ / Tr{ρ}]`.
pub fn pre_measurement_entropy(rho: &Operator) -> Result<f64> {
    let tr = rho.trace().re;
    if tr <= 0.0 {
        return Err(Error::InvalidState(format!("Tr ρ = {tr:e} is not positive")));
    }
    von_neumann_entropy(&(rho / C64::from(tr)))
}

/// `H[q] = -q ln q - (1-q) ln(1-q)`.
pub fn shannon_binary(q: f64) -> f64 {
    let term = |p: f64| if p > 0.0 { -p * p.ln() } else { 0.0 };
    term(q) + term(1.0 - q)
}

/// Entropies of the pre-measurement state and of both post-measurement
/// branches.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchEntropies {
    /// `S[ρ/Tr{ρ}]`.
    pub initial: f64,
    /// `S[ρ_S]` (zero when the singlet population vanishes).
    pub singlet: f64,
    pub triplet: f64,
}

impl BranchEntropies {
    /// Event-weighted post-measurement entropy. `None` if both weights vanish.
    pub fn post_measurement(&self, w_singlet: f64, w_triplet: f64) -> Option<f64> {
        let total = w_singlet + w_triplet;
        if !(total > 0.0) {
            return None;
        }
        Some((w_singlet * self.singlet + w_triplet * self.triplet) / total)
    }
}

/// Branch entropies of a state given in the singlet-triplet frame.
pub(crate) fn branch_entropies(rho: &Operator, n_singlet: usize) -> BranchEntropies {
    let dim = rho.nrows();
    let nt = dim - n_singlet;
    let ps: f64 = (0..n_singlet).map(|i| rho[(i, i)].re).sum();
    let pt: f64 = (n_singlet..dim).map(|i| rho[(i, i)].re).sum();
    BranchEntropies {
        initial: block_entropy(rho.view((0, 0), (dim, dim)), ps + pt),
        singlet: block_entropy(rho.view((0, 0), (n_singlet, n_singlet)), ps),
        triplet: block_entropy(rho.view((n_singlet, n_singlet), (nt, nt)), pt),
    }
}

/// Branch entropies of a product-basis state.
pub fn branch_entropies_of(rho: &Operator, proj: &Projectors) -> BranchEntropies {
    branch_entropies(&proj.to_frame(rho), proj.n_singlet())
}

/// Post-measurement entropy of `rho` for the event weights of `theory`
/// taken from `stats`.
pub fn post_measurement_entropy(
    rho: &Operator,
    proj: &Projectors,
    stats: &StepStats,
    theory: Theory,
) -> Result<f64> {
    let (ws, wt) = stats.event_weights(theory);
    branch_entropies_of(rho, proj)
        .post_measurement(ws, wt)
        .ok_or_else(|| Error::InvalidState("both measurement branches have zero weight".into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Ok,
    Violated,
}

impl Verdict {
    fn from_ok(ok: bool) -> Self {
        if ok {
            Verdict::Ok
        } else {
            Verdict::Violated
        }
    }

    pub fn is_ok(self) -> bool {
        self == Verdict::Ok
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Ok => "OK",
            Verdict::Violated => "VIOLATED",
        })
    }
}

/// Entropy bookkeeping along a trajectory, one entry per snapshot.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EntropyTrace {
    pub times: Vec<f64>,
    pub s_initial: Vec<f64>,
    pub s_final: Vec<f64>,
    /// `H[q_S]`.
    pub shannon: Vec<f64>,
    /// `S_initial - S_final`, reported even when negative.
    pub delta: Vec<f64>,
    pub purity: Vec<f64>,
    pub q_singlet: Vec<f64>,
    pub p_coh: Vec<f64>,
}

impl EntropyTrace {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundsReport {
    pub theory: Theory,
    pub trace: EntropyTrace,
    pub ozawa: Verdict,
    /// Evaluated only where `ΔS ≥ 0`.
    pub lanford_robinson: Verdict,
    /// `max_t (S_final - S_initial)`.
    pub max_violation: f64,
    /// `max_t (ΔS - H[q_S])` over samples with `ΔS ≥ 0`.
    pub max_lr_excess: f64,
    /// `min_t (H[q_S] - ΔS)` over samples with `t > 0` and `ΔS ≥ 0`.
    pub saturation_gap: f64,
}

/// Entropies of every snapshot with a positive trace, using `theory`'s
/// post-measurement weighting.
pub fn entropy_trace(record: &TrajectoryRecord, theory: Theory) -> Result<EntropyTrace> {
    let proj = Projectors::for_dimension(record.dim)?;
    let coherence = crate::master::TraceNormCoherence;
    let mut trace = EntropyTrace::default();
    for snap in &record.snapshots {
        let frame = proj.to_frame(&snap.rho);
        let ns = proj.n_singlet();
        let tr = snap.trace();
        if tr <= 0.0 {
            continue;
        }
        let ps: f64 = (0..ns).map(|i| frame[(i, i)].re).sum();
        let pt = tr - ps;
        let kp = record.params.projection_rate();
        let (ws, wt) = match theory {
            Theory::Haberkorn => (record.params.k_singlet * ps, record.params.k_triplet * pt),
            Theory::Kominis => (
                (record.params.k_singlet + kp) * ps,
                (record.params.k_triplet + kp) * pt,
            ),
        };
        let b = branch_entropies(&frame, ns);
        let s_final = b
            .post_measurement(ws, wt)
            .ok_or_else(|| Error::InvalidState("both measurement branches have zero weight".into()))?;
        let q = (ps / tr).clamp(0.0, 1.0);
        trace.times.push(snap.t);
        trace.s_initial.push(b.initial);
        trace.s_final.push(s_final);
        trace.shannon.push(shannon_binary(q));
        trace.delta.push(b.initial - s_final);
        trace.purity.push(purity(&snap.rho));
        trace.q_singlet.push(q);
        trace.p_coh.push(crate::master::p_coh_with(&coherence, &snap.rho, &proj)?);
    }
    Ok(trace)
}

/// Entropy trace of a record's snapshots and the bound verdicts.
pub fn audit_bounds(record: &TrajectoryRecord, theory: Theory) -> Result<BoundsReport> {
    if record.snapshots.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "audit needs at least 2 samples, record has {}",
            record.snapshots.len()
        )));
    }
    let trace = entropy_trace(record, theory)?;
    let max_violation = trace
        .delta
        .iter()
        .map(|d| -d)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut max_lr_excess = f64::NEG_INFINITY;
    let mut saturation_gap = f64::INFINITY;
    for i in 0..trace.len() {
        let (d, h) = (trace.delta[i], trace.shannon[i]);
        if d >= 0.0 {
            max_lr_excess = max_lr_excess.max(d - h);
            if trace.times[i] > 0.0 {
                saturation_gap = saturation_gap.min(h - d);
            }
        }
    }
    Ok(BoundsReport {
        theory,
        ozawa: Verdict::from_ok(max_violation <= BOUND_TOL),
        lanford_robinson: Verdict::from_ok(max_lr_excess <= BOUND_TOL),
        max_violation,
        max_lr_excess,
        saturation_gap,
        trace,
    })
}

/// Samples at local maxima of `q_S(t)` together with the Lanford-Robinson
/// gap `H[q_S] - ΔS` there and whether the gap is a local minimum within
/// `window` samples.
pub fn gap_at_singlet_maxima(trace: &EntropyTrace, window: usize) -> Vec<(f64, f64, f64, bool)> {
    let q = &trace.q_singlet;
    let gap: Vec<f64> = (0..trace.len())
        .map(|i| trace.shannon[i] - trace.delta[i])
        .collect();
    let n = q.len();
    (1..n.saturating_sub(1))
        .filter(|&i| q[i] > q[i - 1] && q[i] >= q[i + 1])
        .map(|i| {
            let lo = i.saturating_sub(window);
            let hi = (i + window).min(n - 1);
            let local_min = gap[lo..=hi].iter().copied().fold(f64::INFINITY, f64::min);
            (trace.times[i], q[i], gap[i], gap[i] <= local_min + BOUND_TOL)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanVerdict {
    pub ozawa: Verdict,
    pub lanford_robinson: Verdict,
    pub max_violation: f64,
}

impl From<&BoundsReport> for ScanVerdict {
    fn from(r: &BoundsReport) -> Self {
        Self {
            ozawa: r.ozawa,
            lanford_robinson: r.lanford_robinson,
            max_violation: r.max_violation,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaScanRow {
    pub gamma: f64,
    pub haberkorn: ScanVerdict,
    pub kominis: ScanVerdict,
}

/// Pure-singlet runs under both theories at each relaxation rate.
pub fn gamma_scan(
    sys: &SpinSystem,
    params: &ReactionParams,
    gammas: &[f64],
    settings: &IntegratorSettings,
) -> Result<Vec<GammaScanRow>> {
    if gammas.iter().any(|g| !(*g >= 0.0)) {
        return Err(Error::InvalidParameter("γ values must be non-negative".into()));
    }
    if gammas.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidParameter("γ values must be ascending".into()));
    }
    let rho0 = DensityMatrix::singlet_up(sys);
    let run = |gamma: f64, theory: Theory| -> Result<ScanVerdict> {
        let p = params.with_gamma(gamma).with_theory(theory);
        let eq = MasterEquation::new(sys, p)?;
        let rec = integrate(&eq, &rho0, settings)?;
        Ok(ScanVerdict::from(&audit_bounds(&rec, theory)?))
    };
    gammas
        .par_iter()
        .map(|&gamma| {
            Ok(GammaScanRow {
                gamma,
                haberkorn: run(gamma, Theory::Haberkorn)?,
                kominis: run(gamma, Theory::Kominis)?,
            })
        })
        .collect()
}
