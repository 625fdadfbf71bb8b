//! Fixed-step fourth-order Runge-Kutta integration with per-step reaction
//! statistics.
//!
//! The state is propagated in the singlet-triplet frame and Hermitized after
//! every step. Step statistics are evaluated either at the step midpoint
//! (cubic Hermite interpolation between the two endpoints, using the
//! derivative already computed for the next step) or at the left endpoint.
//! Summing the midpoint statistics is the midpoint rule for the time
//! integrals of the reaction yields, accurate to `O(dt²)`; the left-endpoint
//! sum is only `O(dt)`.

use crate::entropy::{branch_entropies, BranchEntropies};
use crate::error::{Error, Result};
use crate::master::{min_eigenvalue, purity, DensityMatrix, MasterEquation, ReactionParams, StepStats, Theory};
use crate::spin::Operator;
use crate::C64;

/// Populations below this are treated as a completed reaction.
pub const POPULATION_CUTOFF: f64 = 1e-9;
pub const DEFAULT_DT: f64 = 1e-3;
pub const DEFAULT_STRIDE: usize = 10;
/// Snapshot eigenvalues below this abort the run.
pub const POSITIVITY_TOL: f64 = 1e-8;
const TRACE_GROWTH_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quadrature {
    Midpoint,
    LeftEndpoint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegratorSettings {
    pub t_max: f64,
    pub dt: f64,
    /// Snapshot every `stride` steps (the final state is always kept).
    pub stride: usize,
    pub quadrature: Quadrature,
    /// Record the pre- and post-measurement entropies of every step.
    pub step_entropies: bool,
    /// Record this product-basis element (1-based row, column) every step.
    pub tracked_element: Option<(usize, usize)>,
    /// Check the minimum eigenvalue of every snapshot.
    pub check_positivity: bool,
}

impl IntegratorSettings {
    pub fn new(t_max: f64, dt: f64) -> Self {
        Self {
            t_max,
            dt,
            stride: DEFAULT_STRIDE,
            quadrature: Quadrature::Midpoint,
            step_entropies: false,
            tracked_element: None,
            check_positivity: true,
        }
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    pub fn with_quadrature(mut self, quadrature: Quadrature) -> Self {
        self.quadrature = quadrature;
        self
    }

    pub fn with_step_entropies(mut self, on: bool) -> Self {
        self.step_entropies = on;
        self
    }

    pub fn with_tracked_element(mut self, row: usize, col: usize) -> Self {
        self.tracked_element = Some((row, col));
        self
    }

    pub fn n_steps(&self) -> usize {
        (self.t_max / self.dt).round() as usize
    }

    fn validate(&self, dim: usize) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("dt = {} must be positive", self.dt)));
        }
        if !(self.t_max >= self.dt && self.t_max.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "t_max = {} must be at least dt = {}",
                self.t_max, self.dt
            )));
        }
        if self.stride == 0 {
            return Err(Error::InvalidParameter("stride must be at least 1".into()));
        }
        if let Some((i, j)) = self.tracked_element {
            if i == 0 || j == 0 || i > dim || j > dim {
                return Err(Error::InvalidParameter(format!(
                    "tracked element ({i},{j}) outside 1..={dim}"
                )));
            }
        }
        Ok(())
    }
}

/// `t_max = 20 / max(k_S, k_T)` and `dt = 10⁻³`.
pub fn default_grid(params: &ReactionParams) -> Result<(f64, f64)> {
    let k = params.k_singlet.max(params.k_triplet);
    if !(k > 0.0) {
        return Err(Error::InvalidParameter(
            "default grid needs k_S + k_T > 0".into(),
        ));
    }
    Ok((20.0 / k, DEFAULT_DT))
}

/// Statistics and optional observables of one integration step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    /// Time at which the statistics were evaluated.
    pub t: f64,
    pub trace: f64,
    pub stats: StepStats,
    pub entropies: Option<BranchEntropies>,
    /// Unnormalized tracked element `ρ_ij`.
    pub tracked: Option<C64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    /// Product-basis density matrix.
    pub rho: Operator,
    /// Cumulative singlet yield `∫ dr_S` up to `t`.
    pub r_singlet: f64,
    pub r_triplet: f64,
}

impl Snapshot {
    pub fn trace(&self) -> f64 {
        self.rho.trace().re
    }

    pub fn purity(&self) -> f64 {
        purity(&self.rho)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Termination {
    Completed,
    /// `Tr ρ` fell below [`POPULATION_CUTOFF`] at time `t`.
    PopulationExhausted { t: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub params: ReactionParams,
    pub dt: f64,
    pub dim: usize,
    pub tracked_element: Option<(usize, usize)>,
    pub steps: Vec<StepRecord>,
    pub snapshots: Vec<Snapshot>,
    pub termination: Termination,
}

impl TrajectoryRecord {
    pub fn theory(&self) -> Theory {
        self.params.theory
    }

    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.t).collect()
    }

    pub fn trace_series(&self) -> Vec<f64> {
        self.snapshots.iter().map(Snapshot::trace).collect()
    }

    pub fn purity_series(&self) -> Vec<f64> {
        self.snapshots.iter().map(Snapshot::purity).collect()
    }

    /// Total yields `(Y_S, Y_T)` accumulated over all steps.
    pub fn yields(&self) -> (f64, f64) {
        self.steps.iter().fold((0.0, 0.0), |(s, t), r| {
            (s + r.stats.dr_singlet, t + r.stats.dr_triplet)
        })
    }

    pub fn final_trace(&self) -> f64 {
        self.snapshots.last().map_or(0.0, Snapshot::trace)
    }
}

fn hermitize(m: &mut Operator) {
    let n = m.nrows();
    for j in 0..n {
        m[(j, j)].im = 0.0;
        for i in 0..j {
            let v = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
            m[(i, j)] = v;
            m[(j, i)] = v.conj();
        }
    }
}

/// `y += a x`.
fn axpy(y: &mut Operator, a: f64, x: &Operator) {
    for (yi, xi) in y.as_mut_slice().iter_mut().zip(x.as_slice()) {
        yi.re += a * xi.re;
        yi.im += a * xi.im;
    }
}

fn frame_trace(m: &Operator) -> f64 {
    (0..m.nrows()).map(|i| m[(i, i)].re).sum()
}

struct Recorder<'a> {
    eq: &'a MasterEquation,
    settings: &'a IntegratorSettings,
    record: TrajectoryRecord,
    r_singlet: f64,
    r_triplet: f64,
}

impl Recorder<'_> {
    fn snapshot(&mut self, t: f64, rho_frame: &Operator) -> Result<()> {
        let rho = self.eq.projectors().to_product(rho_frame);
        if self.settings.check_positivity {
            let min = min_eigenvalue(&rho);
            if min < -POSITIVITY_TOL {
                return Err(self.breach(t, format!("eigenvalue {min:e} below -{POSITIVITY_TOL:e}")));
            }
        }
        self.record.snapshots.push(Snapshot {
            t,
            rho,
            r_singlet: self.r_singlet,
            r_triplet: self.r_triplet,
        });
        Ok(())
    }

    fn step(&mut self, t: f64, state: &Operator, dt: f64) {
        let stats = self.eq.stats(state, dt);
        let ns = self.eq.projectors().n_singlet();
        let entropies = self
            .settings
            .step_entropies
            .then(|| branch_entropies(state, ns));
        let tracked = self.settings.tracked_element.map(|(i, j)| {
            let u = self.eq.projectors().frame();
            let left = u.row(i - 1) * state;
            left.dot(&u.row(j - 1).conjugate())
        });
        self.r_singlet += stats.dr_singlet;
        self.r_triplet += stats.dr_triplet;
        self.record.steps.push(StepRecord {
            t,
            trace: frame_trace(state),
            stats,
            entropies,
            tracked,
        });
    }

    fn breach(&mut self, t: f64, detail: String) -> Error {
        Error::InvariantBreach {
            t,
            detail,
            partial: Box::new(self.record.clone()),
        }
    }
}

/// Integrate `eq` from `rho0` over `[0, t_max]`.
pub fn integrate(eq: &MasterEquation, rho0: &DensityMatrix, settings: &IntegratorSettings) -> Result<TrajectoryRecord> {
    let dim = eq.dim();
    if rho0.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: rho0.dim(),
        });
    }
    settings.validate(dim)?;
    let dt = settings.dt;
    let n_steps = settings.n_steps();

    let mut rec = Recorder {
        eq,
        settings,
        record: TrajectoryRecord {
            params: *eq.params(),
            dt,
            dim,
            tracked_element: settings.tracked_element,
            steps: Vec::with_capacity(n_steps),
            snapshots: Vec::with_capacity(n_steps / settings.stride.min(n_steps.max(1)) + 2),
            termination: Termination::Completed,
        },
        r_singlet: 0.0,
        r_triplet: 0.0,
    };

    let mut rho = eq.projectors().to_frame(rho0.matrix());
    rec.snapshot(0.0, &rho)?;

    let mut f = eq.rhs(&rho);
    let mut stage = Operator::zeros(dim, dim);
    let (mut k2, mut k3, mut k4) = (stage.clone(), stage.clone(), stage.clone());
    let mut next = stage.clone();
    let mut f_next = stage.clone();
    let (half, full, sixth, third) = (0.5 * dt, dt, dt / 6.0, dt / 3.0);

    for n in 0..n_steps {
        let t = n as f64 * dt;
        let tr = frame_trace(&rho);
        if tr < POPULATION_CUTOFF {
            rec.record.termination = Termination::PopulationExhausted { t };
            if rec.record.snapshots.last().map(|s| s.t) != Some(t) {
                rec.snapshot(t, &rho)?;
            }
            return Ok(rec.record);
        }

        stage.copy_from(&rho);
        axpy(&mut stage, half, &f);
        eq.rhs_into(&stage, &mut k2);
        stage.copy_from(&rho);
        axpy(&mut stage, half, &k2);
        eq.rhs_into(&stage, &mut k3);
        stage.copy_from(&rho);
        axpy(&mut stage, full, &k3);
        eq.rhs_into(&stage, &mut k4);

        next.copy_from(&rho);
        axpy(&mut next, sixth, &f);
        axpy(&mut next, third, &k2);
        axpy(&mut next, third, &k3);
        axpy(&mut next, sixth, &k4);
        hermitize(&mut next);
        eq.rhs_into(&next, &mut f_next);

        let next_tr = frame_trace(&next);
        if next_tr > tr + TRACE_GROWTH_TOL || !next_tr.is_finite() {
            return Err(rec.breach(t + dt, format!("trace grew from {tr} to {next_tr}")));
        }

        match settings.quadrature {
            Quadrature::Midpoint => {
                // ρ(t + dt/2) ≈ (ρ₀ + ρ₁)/2 + dt/8 (f₀ − f₁)
                stage.copy_from(&rho);
                axpy(&mut stage, 1.0, &next);
                stage.scale_mut(0.5);
                axpy(&mut stage, dt / 8.0, &f);
                axpy(&mut stage, -dt / 8.0, &f_next);
                rec.step(t + 0.5 * dt, &stage, dt);
            }
            Quadrature::LeftEndpoint => rec.step(t, &rho, dt),
        }

        std::mem::swap(&mut rho, &mut next);
        std::mem::swap(&mut f, &mut f_next);
        if (n + 1) % settings.stride == 0 || n + 1 == n_steps {
            rec.snapshot((n + 1) as f64 * dt, &rho)?;
        }
    }
    Ok(rec.record)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spin::SpinSystem;

    fn fig1(theory: Theory, gamma: f64) -> (MasterEquation, DensityMatrix) {
        let sys = SpinSystem::single_nucleus(1.0, 0.0).unwrap();
        let p = ReactionParams::new(0.01, 0.2, gamma, theory).unwrap();
        (MasterEquation::new(&sys, p).unwrap(), DensityMatrix::singlet_up(&sys))
    }

    #[test]
    fn default_grid_rule() {
        let p = ReactionParams::new(0.01, 0.2, 0.0, Theory::Kominis).unwrap();
        let (t, dt) = default_grid(&p).unwrap();
        assert!((t - 100.0).abs() < 1e-12);
        assert_eq!(dt, 1e-3);
        let p = ReactionParams::new(0.05, 0.05, 0.0, Theory::Kominis).unwrap();
        assert!((default_grid(&p).unwrap().0 - 400.0).abs() < 1e-12);
        let p = ReactionParams::new(0.0, 0.0, 0.0, Theory::Kominis).unwrap();
        assert!(default_grid(&p).is_err());
    }

    #[test]
    fn settings_validation() {
        let (eq, rho) = fig1(Theory::Kominis, 0.0);
        for s in [
            IntegratorSettings::new(1.0, 0.0),
            IntegratorSettings::new(1e-4, 1e-3),
            IntegratorSettings::new(1.0, 1e-3).with_stride(0),
            IntegratorSettings::new(1.0, 1e-3).with_tracked_element(9, 1),
        ] {
            assert!(matches!(integrate(&eq, &rho, &s), Err(Error::InvalidParameter(_))));
        }
        let sys = SpinSystem::new(2, vec![], 0.0).unwrap();
        let wrong = DensityMatrix::singlet_up(&sys);
        assert!(matches!(
            integrate(&eq, &wrong, &IntegratorSettings::new(1.0, 1e-3)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn unitary_evolution_preserves_trace() {
        let sys = SpinSystem::single_nucleus(1.0, 0.5).unwrap();
        for th in [Theory::Haberkorn, Theory::Kominis] {
            let p = ReactionParams::new(0.0, 0.0, 0.0, th).unwrap();
            let eq = MasterEquation::new(&sys, p).unwrap();
            let rec = integrate(&eq, &DensityMatrix::singlet_up(&sys), &IntegratorSettings::new(20.0, 1e-3)).unwrap();
            for s in &rec.snapshots {
                assert!((s.trace() - 1.0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn snapshot_grid_and_yields() {
        let (eq, rho) = fig1(Theory::Kominis, 5e-4);
        let rec = integrate(&eq, &rho, &IntegratorSettings::new(10.0, 1e-2).with_stride(7)).unwrap();
        assert_eq!(rec.steps.len(), 1000);
        let times = rec.times();
        assert_eq!(times[0], 0.0);
        assert!((times.last().unwrap() - 10.0).abs() < 1e-12);
        assert!(times.windows(2).all(|w| w[1] > w[0]));
        assert!(rec
            .snapshots
            .windows(2)
            .all(|w| w[1].r_singlet >= w[0].r_singlet && w[1].r_triplet >= w[0].r_triplet));
        let (ys, yt) = rec.yields();
        assert!((ys + yt + rec.final_trace() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn fig1_population_nearly_exhausted() {
        for th in [Theory::Haberkorn, Theory::Kominis] {
            let (eq, rho) = fig1(th, 5e-4);
            let rec = integrate(&eq, &rho, &IntegratorSettings::new(100.0, 1e-3).with_stride(1000)).unwrap();
            assert!(rec.final_trace() < 0.05, "{th}: {}", rec.final_trace());
        }
    }

    #[test]
    fn midpoint_beats_left_endpoint() {
        // Trace bookkeeping Tr ρ + r_S + r_T = 1: the midpoint sum is second
        // order, the left-endpoint sum first order.
        let (eq, rho) = fig1(Theory::Kominis, 5e-4);
        let defect = |q, dt| {
            let s = IntegratorSettings::new(20.0, dt).with_quadrature(q).with_stride(usize::MAX);
            let rec = integrate(&eq, &rho, &s).unwrap();
            let (ys, yt) = rec.yields();
            (ys + yt + rec.final_trace() - 1.0).abs()
        };
        let (m1, m2) = (defect(Quadrature::Midpoint, 2e-2), defect(Quadrature::Midpoint, 1e-2));
        let (l1, l2) = (
            defect(Quadrature::LeftEndpoint, 2e-2),
            defect(Quadrature::LeftEndpoint, 1e-2),
        );
        assert!(m1 < 1e-6 && m2 < m1, "{m1} {m2}");
        assert!((l1 / l2 - 2.0).abs() < 0.2, "{l1} {l2}");
        assert!(m1 < l1 * 1e-2);
    }

    #[test]
    fn exhausted_population_terminates() {
        let sys = SpinSystem::single_nucleus(1.0, 0.0).unwrap();
        let p = ReactionParams::new(5.0, 5.0, 0.0, Theory::Kominis).unwrap();
        let eq = MasterEquation::new(&sys, p).unwrap();
        let rec = integrate(&eq, &DensityMatrix::singlet_up(&sys), &IntegratorSettings::new(10.0, 1e-3)).unwrap();
        match rec.termination {
            Termination::PopulationExhausted { t } => assert!(t < 5.0),
            other => panic!("{other:?}"),
        }
        assert!(rec.final_trace() < POPULATION_CUTOFF);
    }

    #[test]
    fn runaway_state_is_reported_with_partial_record() {
        // negative rates are rejected by validation, so provoke a breach with
        // a step far beyond the stability limit of RK4
        let sys = SpinSystem::single_nucleus(1.0, 0.0).unwrap();
        let p = ReactionParams::new(0.0, 0.0, 50.0, Theory::Haberkorn).unwrap();
        let eq = MasterEquation::new(&sys, p).unwrap();
        let err = integrate(&eq, &DensityMatrix::singlet_up(&sys), &IntegratorSettings::new(5.0, 0.1).with_stride(1))
            .unwrap_err();
        match err {
            Error::InvariantBreach { partial, .. } => assert!(!partial.snapshots.is_empty()),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn deterministic_records() {
        let (eq, rho) = fig1(Theory::Kominis, 5e-4);
        let s = IntegratorSettings::new(5.0, 1e-3).with_step_entropies(true);
        assert_eq!(integrate(&eq, &rho, &s).unwrap(), integrate(&eq, &rho, &s).unwrap());
    }
}
