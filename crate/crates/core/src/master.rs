//! Master equations for the radical-pair density matrix.
//!
//! The product-basis functions [`rhs_haberkorn`], [`rhs_kominis`] and
//! [`relaxation_term`] spell the equations out with explicit projector
//! products. [`MasterEquation`] evaluates the same right-hand sides in the
//! singlet-triplet frame, where every projector product reduces to scaling a
//! block, and is what the integrator drives.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrixView, DVector};

use crate::error::{Error, Result};
use crate::spin::{Operator, Projectors, SpinSystem};
use crate::C64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Theory {
    /// Anticommutator reaction terms.
    Haberkorn,
    /// Dephasing Lindblad term plus coherence-weighted reaction terms.
    Kominis,
}

impl fmt::Display for Theory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Theory::Haberkorn => "haberkorn",
            Theory::Kominis => "kominis",
        })
    }
}

impl FromStr for Theory {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "haberkorn" | "hme" => Ok(Theory::Haberkorn),
            "kominis" => Ok(Theory::Kominis),
            other => Err(Error::InvalidParameter(format!("unknown theory '{other}'"))),
        }
    }
}

/// Recombination rates, spin-randomization rate and the theory selector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReactionParams {
    pub k_singlet: f64,
    pub k_triplet: f64,
    pub gamma: f64,
    pub theory: Theory,
}

impl ReactionParams {
    pub fn new(k_singlet: f64, k_triplet: f64, gamma: f64, theory: Theory) -> Result<Self> {
        let p = Self {
            k_singlet,
            k_triplet,
            gamma,
            theory,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("k_S", self.k_singlet),
            ("k_T", self.k_triplet),
            ("gamma", self.gamma),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "{name} = {v} must be finite and non-negative"
                )));
            }
        }
        Ok(())
    }

    pub fn with_theory(self, theory: Theory) -> Self {
        Self { theory, ..self }
    }

    pub fn with_gamma(self, gamma: f64) -> Self {
        Self { gamma, ..self }
    }

    /// Rate of the unobserved singlet/triplet projections, `(k_S + k_T)/2`.
    pub fn projection_rate(&self) -> f64 {
        0.5 * (self.k_singlet + self.k_triplet)
    }
}

/// Hermitian positive-semidefinite matrix with trace in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix(Operator);

impl DensityMatrix {
    pub const HERMITICITY_TOL: f64 = 1e-12;
    pub const EIGENVALUE_TOL: f64 = 1e-10;

    pub fn new(op: Operator) -> Result<Self> {
        if !op.is_square() {
            return Err(Error::InvalidState(format!(
                "{}x{} matrix is not square",
                op.nrows(),
                op.ncols()
            )));
        }
        let asym = (&op - op.adjoint())
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        if asym > Self::HERMITICITY_TOL {
            return Err(Error::InvalidState(format!(
                "not Hermitian (max |ρ - ρ†| = {asym:e})"
            )));
        }
        let tr = op.trace().re;
        if !(0.0..=1.0 + 1e-12).contains(&tr) {
            return Err(Error::InvalidState(format!("trace {tr} outside [0, 1]")));
        }
        let min = min_eigenvalue(&op);
        if min < -Self::EIGENVALUE_TOL {
            return Err(Error::InvalidState(format!("negative eigenvalue {min:e}")));
        }
        Ok(Self(op))
    }

    /// `|ψ⟩⟨ψ|` for a normalized state vector.
    pub fn pure(psi: &DVector<C64>) -> Result<Self> {
        Self::new(psi * psi.adjoint())
    }

    /// `|S⟩ ⊗ |⇑…⇑⟩`.
    pub fn singlet_up(sys: &SpinSystem) -> Self {
        Self::pure(&sys.singlet_up_state()).expect("normalized state")
    }

    /// `Q_T / Tr{Q_T}`.
    pub fn mixed_triplet(sys: &SpinSystem) -> Self {
        let qt = sys.projectors().triplet;
        let tr = qt.trace().re;
        Self(qt / C64::from(tr))
    }

    /// `p 𝟙 / dim`.
    pub fn maximally_mixed(dim: usize, population: f64) -> Result<Self> {
        Self::new(Operator::identity(dim, dim) * C64::from(population / dim as f64))
    }

    pub fn matrix(&self) -> &Operator {
        &self.0
    }

    pub fn into_inner(self) -> Operator {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.0.trace().re
    }

    /// `Tr{ρ²} / Tr{ρ}²`.
    pub fn purity(&self) -> f64 {
        purity(&self.0)
    }
}

pub(crate) fn purity(rho: &Operator) -> f64 {
    let tr = rho.trace().re;
    // Tr{ρ²} = Σ |ρ_ij|² for Hermitian ρ
    rho.iter().map(|z| z.norm_sqr()).sum::<f64>() / (tr * tr)
}

pub(crate) fn min_eigenvalue(op: &Operator) -> f64 {
    let h = (op + op.adjoint()) * C64::from(0.5);
    h.symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// A map from density matrices to `[0, 1]` quantifying singlet-triplet
/// coherence.
///
/// Implementations only supply a norm of the off-diagonal block `Q_S ρ Q_T`
/// (as an `n_singlet × n_triplet` matrix in the singlet-triplet frame); the
/// normalization by `√(Tr{ρQ_S} Tr{ρQ_T})` and clamping are shared.
pub trait CoherenceMeasure: Send + Sync + fmt::Debug {
    fn name(&self) -> &'static str;

    fn off_diagonal_norm(&self, block: DMatrixView<'_, C64>) -> f64;
}

/// Trace norm of the S-T block. Equals 1 on S-T coherent pure states and
/// never exceeds 1 on positive matrices.
#[derive(Debug, Clone, Copy, Default)]
pub struct TraceNormCoherence;

impl CoherenceMeasure for TraceNormCoherence {
    fn name(&self) -> &'static str {
        "trace-norm"
    }

    fn off_diagonal_norm(&self, block: DMatrixView<'_, C64>) -> f64 {
        // singular values of X are square roots of the eigenvalues of X X†
        let gram = block * block.adjoint();
        if gram.nrows() == 2 {
            // σ₁ + σ₂ = √(σ₁² + σ₂² + 2σ₁σ₂)
            let det = (gram[(0, 0)] * gram[(1, 1)] - gram[(0, 1)] * gram[(1, 0)]).re;
            let tr = gram[(0, 0)].re + gram[(1, 1)].re;
            return (tr + 2.0 * det.max(0.0).sqrt()).max(0.0).sqrt();
        }
        gram.symmetric_eigenvalues()
            .iter()
            .map(|&v| v.max(0.0).sqrt())
            .sum()
    }
}

/// Hilbert-Schmidt norm of the S-T block; agrees with the trace norm on pure
/// states and is smaller on mixtures.
#[derive(Debug, Clone, Copy, Default)]
pub struct FrobeniusCoherence;

impl CoherenceMeasure for FrobeniusCoherence {
    fn name(&self) -> &'static str {
        "frobenius"
    }

    fn off_diagonal_norm(&self, block: DMatrixView<'_, C64>) -> f64 {
        block.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }
}

/// Resolve a coherence measure by the name it reports.
pub fn coherence_measure(name: &str) -> Result<Arc<dyn CoherenceMeasure>> {
    match name {
        "trace-norm" => Ok(Arc::new(TraceNormCoherence)),
        "frobenius" => Ok(Arc::new(FrobeniusCoherence)),
        other => Err(Error::InvalidParameter(format!(
            "unknown coherence measure '{other}'"
        ))),
    }
}

fn coherence_in_frame(measure: &dyn CoherenceMeasure, rho: &Operator, n_singlet: usize) -> f64 {
    let dim = rho.nrows();
    let ps: f64 = (0..n_singlet).map(|i| rho[(i, i)].re).sum();
    let pt: f64 = (n_singlet..dim).map(|i| rho[(i, i)].re).sum();
    let denom = ps * pt;
    if denom <= 0.0 {
        return 0.0;
    }
    let block = rho.view((0, n_singlet), (n_singlet, dim - n_singlet));
    (measure.off_diagonal_norm(block) / denom.sqrt()).clamp(0.0, 1.0)
}

/// Default coherence `‖Q_S ρ Q_T‖₁ / √(Tr{ρQ_S} Tr{ρQ_T})`, clamped to `[0, 1]`.
pub fn p_coh(rho: &Operator, proj: &Projectors) -> Result<f64> {
    p_coh_with(&TraceNormCoherence, rho, proj)
}

pub fn p_coh_with(measure: &dyn CoherenceMeasure, rho: &Operator, proj: &Projectors) -> Result<f64> {
    let tr = rho.trace().re;
    if tr <= 0.0 {
        return Err(Error::InvalidState(format!("p_coh needs Tr ρ > 0 (got {tr:e})")));
    }
    Ok(coherence_in_frame(measure, &proj.to_frame(rho), proj.n_singlet()))
}

fn commutator_term(h: &Operator, rho: &Operator) -> Operator {
    (h * rho - rho * h) * C64::new(0.0, -1.0)
}

/// `-γ (ρ - Tr{ρ}/Tr{𝟙} 𝟙)`.
pub fn relaxation_term(rho: &Operator, gamma: f64) -> Operator {
    let dim = rho.nrows();
    let mean = rho.trace() / C64::from(dim as f64);
    (rho - Operator::identity(dim, dim) * mean) * C64::from(-gamma)
}

/// `-i[𝓗,ρ] - k_S/2 {Q_S, ρ} - k_T/2 {Q_T, ρ}` plus relaxation.
pub fn rhs_haberkorn(rho: &Operator, params: &ReactionParams, h: &Operator, proj: &Projectors) -> Operator {
    let (qs, qt) = (&proj.singlet, &proj.triplet);
    let mut d = commutator_term(h, rho);
    d -= (qs * rho + rho * qs) * C64::from(0.5 * params.k_singlet);
    d -= (qt * rho + rho * qt) * C64::from(0.5 * params.k_triplet);
    if params.gamma > 0.0 {
        d += relaxation_term(rho, params.gamma);
    }
    d
}

/// Four-term measurement-based master equation plus relaxation, with the
/// `1/p_coh` factors of the reaction term cancelled against its prefactor.
///
/// `p_coh` is supplied by the caller so that forced values can be studied.
/// Returns zero when `Tr ρ ≤ 0`.
pub fn rhs_kominis(
    rho: &Operator,
    params: &ReactionParams,
    h: &Operator,
    proj: &Projectors,
    p_coh: f64,
) -> Operator {
    let dim = rho.nrows();
    let tr = rho.trace().re;
    if tr <= 0.0 {
        return Operator::zeros(dim, dim);
    }
    let (qs, qt) = (&proj.singlet, &proj.triplet);
    let (ks, kt) = (params.k_singlet, params.k_triplet);
    let ss = qs * rho * qs;
    let tt = qt * rho * qt;
    let coherences = qs * rho * qt + qt * rho * qs;

    let mut d = commutator_term(h, rho);
    d -= (rho * qs + qs * rho - &ss * C64::from(2.0)) * C64::from(0.5 * (ks + kt));
    d -= (&ss * C64::from(ks) + &tt * C64::from(kt)) * C64::from(1.0 - p_coh);
    let reaction_rate = ks * (rho * qs).trace().re + kt * (rho * qt).trace().re;
    d -= ((ss + tt) * C64::from(p_coh) + coherences) * C64::from(reaction_rate / tr);
    if params.gamma > 0.0 {
        d += relaxation_term(rho, params.gamma);
    }
    d
}

/// Reaction and projection statistics of one time step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepStats {
    /// Fraction recombining to singlet products, `k_S dt Tr{ρQ_S}`.
    pub dr_singlet: f64,
    pub dr_triplet: f64,
    /// Probability of an unobserved singlet projection, `(k_S+k_T)/2 dt Tr{ρQ_S}`.
    pub dp_singlet: f64,
    pub dp_triplet: f64,
    /// `Tr{ρQ_S} / Tr{ρ}`.
    pub q_singlet: f64,
    pub q_triplet: f64,
    pub p_coh: f64,
}

impl StepStats {
    fn from_populations(params: &ReactionParams, singlet: f64, triplet: f64, p_coh: f64, dt: f64) -> Self {
        let tr = singlet + triplet;
        let kp = params.projection_rate();
        let q_singlet = (singlet / tr).clamp(0.0, 1.0);
        Self {
            dr_singlet: params.k_singlet * dt * singlet,
            dr_triplet: params.k_triplet * dt * triplet,
            dp_singlet: kp * dt * singlet,
            dp_triplet: kp * dt * triplet,
            q_singlet,
            q_triplet: 1.0 - q_singlet,
            p_coh,
        }
    }

    /// Total number of singlet/triplet "measurement" events in the step as
    /// counted by `theory`.
    pub fn event_weights(&self, theory: Theory) -> (f64, f64) {
        match theory {
            Theory::Haberkorn => (self.dr_singlet, self.dr_triplet),
            Theory::Kominis => (
                self.dr_singlet + self.dp_singlet,
                self.dr_triplet + self.dp_triplet,
            ),
        }
    }
}

/// Statistics of a step of length `dt` taken from state `rho` (product basis).
pub fn step_stats(rho: &Operator, params: &ReactionParams, proj: &Projectors, dt: f64) -> Result<StepStats> {
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter(format!("dt = {dt} must be positive")));
    }
    let tr = rho.trace().re;
    if tr <= 0.0 {
        return Err(Error::InvalidState(format!("Tr ρ = {tr:e} is not positive")));
    }
    let singlet = (rho * &proj.singlet).trace().re;
    let triplet = (rho * &proj.triplet).trace().re;
    let p = p_coh(rho, proj)?;
    Ok(StepStats::from_populations(params, singlet, triplet, p, dt))
}

/// Singlet/triplet populations of a state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Populations {
    pub singlet: f64,
    pub triplet: f64,
}

impl Populations {
    pub fn trace(&self) -> f64 {
        self.singlet + self.triplet
    }
}

/// Right-hand side of the selected theory for one spin system, evaluated in
/// the singlet-triplet frame.
#[derive(Debug, Clone)]
pub struct MasterEquation {
    params: ReactionParams,
    projectors: Projectors,
    hamiltonian: Operator,
    frame_hamiltonian: Operator,
    /// Column-major real part of the frame Hamiltonian when it has no
    /// imaginary part.
    real_hamiltonian: Option<Vec<f64>>,
    real_hamiltonian8: Option<Matrix8>,
    coherence: Arc<dyn CoherenceMeasure>,
}

/// `out = a b` for square column-major `a` (real) and `b`.
fn real_left_mul(out: &mut Operator, a: &[f64], b: &Operator) {
    let n = b.nrows();
    let b = as_f64(b.as_slice());
    let out = as_f64_mut(out.as_mut_slice());
    for j in 0..n {
        let col = &mut out[2 * j * n..2 * (j + 1) * n];
        col.fill(0.0);
        for k in 0..n {
            let (re, im) = (b[2 * (j * n + k)], b[2 * (j * n + k) + 1]);
            let a_k = &a[k * n..(k + 1) * n];
            for (o, &x) in col.chunks_exact_mut(2).zip(a_k) {
                o[0] += x * re;
                o[1] += x * im;
            }
        }
    }
}

type Matrix8 = nalgebra::SMatrix<f64, 8, 8>;

fn real_left_mul8(out: &mut Operator, a: &Matrix8, b: &Operator) {
    let bs = b.as_slice();
    let re = Matrix8::from_fn(|i, j| bs[j * 8 + i].re);
    let im = Matrix8::from_fn(|i, j| bs[j * 8 + i].im);
    let (mr, mi) = (a * re, a * im);
    for ((o, &r), &i) in out.as_mut_slice().iter_mut().zip(mr.as_slice()).zip(mi.as_slice()) {
        *o = C64::new(r, i);
    }
}

fn as_f64(z: &[C64]) -> &[f64] {
    // SAFETY: Complex<f64> is repr(C) with two f64 fields.
    unsafe { std::slice::from_raw_parts(z.as_ptr().cast(), 2 * z.len()) }
}

fn as_f64_mut(z: &mut [C64]) -> &mut [f64] {
    // SAFETY: Complex<f64> is repr(C) with two f64 fields.
    unsafe { std::slice::from_raw_parts_mut(z.as_mut_ptr().cast(), 2 * z.len()) }
}

impl MasterEquation {
    pub fn new(sys: &SpinSystem, params: ReactionParams) -> Result<Self> {
        params.validate()?;
        let projectors = sys.projectors();
        let hamiltonian = sys.hamiltonian();
        let frame_hamiltonian = projectors.to_frame(&hamiltonian);
        let real_hamiltonian: Option<Vec<f64>> = frame_hamiltonian
            .iter()
            .all(|z| z.im == 0.0)
            .then(|| frame_hamiltonian.iter().map(|z| z.re).collect());
        Ok(Self {
            params,
            projectors,
            hamiltonian,
            frame_hamiltonian,
            real_hamiltonian8: real_hamiltonian
                .as_ref()
                .filter(|h| h.len() == 64)
                .map(|h| Matrix8::from_column_slice(h)),
            real_hamiltonian,
            coherence: Arc::new(TraceNormCoherence),
        })
    }

    pub fn with_coherence(mut self, measure: Arc<dyn CoherenceMeasure>) -> Self {
        self.coherence = measure;
        self
    }

    pub fn params(&self) -> &ReactionParams {
        &self.params
    }

    pub fn projectors(&self) -> &Projectors {
        &self.projectors
    }

    pub fn hamiltonian(&self) -> &Operator {
        &self.hamiltonian
    }

    pub fn coherence_measure(&self) -> &dyn CoherenceMeasure {
        self.coherence.as_ref()
    }

    pub fn dim(&self) -> usize {
        self.hamiltonian.nrows()
    }

    /// With equal rates the coherence-dependent parts of the reaction terms
    /// cancel identically, so `p_coh` never needs evaluating.
    fn coherence_enters(&self) -> bool {
        self.params.theory == Theory::Kominis && self.params.k_singlet != self.params.k_triplet
    }

    pub fn populations(&self, rho: &Operator) -> Populations {
        let ns = self.projectors.n_singlet();
        let singlet = (0..ns).map(|i| rho[(i, i)].re).sum();
        let triplet = (ns..rho.nrows()).map(|i| rho[(i, i)].re).sum();
        Populations { singlet, triplet }
    }

    /// Coherence of a frame-basis state under the configured measure.
    pub fn coherence(&self, rho: &Operator) -> f64 {
        coherence_in_frame(self.coherence.as_ref(), rho, self.projectors.n_singlet())
    }

    pub fn stats(&self, rho: &Operator, dt: f64) -> StepStats {
        let pop = self.populations(rho);
        StepStats::from_populations(&self.params, pop.singlet, pop.triplet, self.coherence(rho), dt)
    }

    /// `dρ/dt` for a frame-basis `rho`, written into `out`.
    pub fn rhs_into(&self, rho: &Operator, out: &mut Operator) {
        let dim = rho.nrows();
        let ns = self.projectors.n_singlet();
        let pop = self.populations(rho);
        let tr = pop.trace();
        let (ks, kt) = (self.params.k_singlet, self.params.k_triplet);

        // block coefficients for (singlet-singlet, triplet-triplet, coherences)
        let (css, ctt, cst) = match self.params.theory {
            Theory::Haberkorn => (-ks, -kt, -0.5 * (ks + kt)),
            Theory::Kominis => {
                if tr <= 0.0 {
                    out.fill(C64::from(0.0));
                    return;
                }
                let p = if self.coherence_enters() {
                    self.coherence(rho)
                } else {
                    0.0
                };
                let c = (ks * pop.singlet + kt * pop.triplet) / tr;
                (
                    -(1.0 - p) * ks - c * p,
                    -(1.0 - p) * kt - c * p,
                    -0.5 * (ks + kt) - c,
                )
            }
        };

        // rho is Hermitian, so -i[H, ρ] = -i(Hρ - (Hρ)†)
        match (&self.real_hamiltonian8, &self.real_hamiltonian) {
            (Some(h), _) => real_left_mul8(out, h, rho),
            (None, Some(h)) => real_left_mul(out, h, rho),
            (None, None) => out.gemm(C64::from(1.0), &self.frame_hamiltonian, rho, C64::from(0.0)),
        }
        let g = self.params.gamma;
        let (css, ctt, cst) = (css - g, ctt - g, cst - g);
        let r = rho.as_slice();
        let o = out.as_mut_slice();
        let minus_i = C64::new(0.0, -1.0);
        for j in 0..dim {
            for i in 0..j {
                let (ij, ji) = (j * dim + i, i * dim + j);
                let c = match (i < ns, j < ns) {
                    (true, true) => css,
                    (false, false) => ctt,
                    _ => cst,
                };
                let (a, b) = (o[ij], o[ji]);
                o[ij] = minus_i * (a - b.conj()) + r[ij] * c;
                o[ji] = minus_i * (b - a.conj()) + r[ji] * c;
            }
            let jj = j * dim + j;
            let c = if j < ns { css } else { ctt };
            o[jj] = C64::new(2.0 * o[jj].im, 0.0) + r[jj] * c;
        }
        if g > 0.0 {
            let shift = C64::from(g * tr / dim as f64);
            for i in 0..dim {
                o[i * dim + i] += shift;
            }
        }
    }

    pub fn rhs(&self, rho: &Operator) -> Operator {
        let mut out = Operator::zeros(rho.nrows(), rho.ncols());
        self.rhs_into(rho, &mut out);
        out
    }

    /// Frame right-hand side applied to a product-basis state.
    pub fn rhs_product(&self, rho: &Operator) -> Operator {
        let p = &self.projectors;
        p.to_product(&self.rhs(&p.to_frame(rho)))
    }
}
