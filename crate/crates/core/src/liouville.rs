//! Liouville-space form of the non-reacting evolution law
//! `dρ/dt = -i[H, ρ] - κ(ρQ_S + Q_Sρ - 2Q_SρQ_S)`, `κ = (k_S + k_T)/2`.
//!
//! Operators are vectorized by stacking columns, so entry `(i, j)` of a
//! `d × d` matrix lands at index `j·d + i` (0-based). Under this convention
//! `XρY ↦ (Yᵀ ⊗ X) vec ρ`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::spin::{Operator, SpinSystem};
use crate::C64;

/// Condition number of the eigenvector matrix above which spectral
/// reconstruction is abandoned in favour of time integration.
pub const CONDITION_LIMIT: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Vectorization {
    ColumnStacking,
}

pub fn vectorize(rho: &Operator) -> Result<DVector<C64>> {
    if rho.nrows() != rho.ncols() {
        return Err(Error::InvalidState(format!(
            "cannot vectorize a {}×{} matrix",
            rho.nrows(),
            rho.ncols()
        )));
    }
    Ok(DVector::from_column_slice(rho.as_slice()))
}

pub fn devectorize(v: &DVector<C64>) -> Result<Operator> {
    let n = v.len();
    let d = (n as f64).sqrt().round() as usize;
    if d * d != n || d == 0 {
        return Err(Error::InvalidState(format!(
            "vector length {n} is not a perfect square"
        )));
    }
    Ok(Operator::from_column_slice(d, d, v.as_slice()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Superoperator {
    matrix: DMatrix<C64>,
    dim: usize,
    convention: Vectorization,
}

impl Superoperator {
    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    /// Hilbert-space dimension `d` (the matrix is `d² × d²`).
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn convention(&self) -> Vectorization {
        self.convention
    }

    pub fn apply(&self, rho: &Operator) -> Result<Operator> {
        if rho.nrows() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: rho.nrows(),
            });
        }
        devectorize(&(&self.matrix * vectorize(rho)?))
    }

    /// Fixed-step RK4 propagation of `rho0` to time `t`.
    pub fn integrate(&self, rho0: &Operator, t: f64, dt: f64) -> Result<Operator> {
        if !(dt > 0.0) || !(t >= 0.0) {
            return Err(Error::InvalidParameter(format!("need t ≥ 0, dt > 0 (t={t}, dt={dt})")));
        }
        let steps = (t / dt).round() as usize;
        let h = if steps == 0 { 0.0 } else { t / steps as f64 };
        let hc = C64::from(h);
        let mut v = vectorize(rho0)?;
        for _ in 0..steps {
            let k1 = &self.matrix * &v;
            let k2 = &self.matrix * (&v + &k1 * (hc * 0.5));
            let k3 = &self.matrix * (&v + &k2 * (hc * 0.5));
            let k4 = &self.matrix * (&v + &k3 * hc);
            v += (k1 + (k2 + k3) * C64::from(2.0) + k4) * (hc / 6.0);
        }
        devectorize(&v)
    }
}

/// Superoperator of the non-reacting law for `sys` with dephasing rate
/// `(k_singlet + k_triplet)/2`.
pub fn build_superoperator(sys: &SpinSystem, k_singlet: f64, k_triplet: f64) -> Result<Superoperator> {
    if !(k_singlet >= 0.0 && k_triplet >= 0.0) || !k_singlet.is_finite() || !k_triplet.is_finite() {
        return Err(Error::InvalidParameter("rates must be finite and non-negative".into()));
    }
    let d = sys.dim();
    let h = sys.hamiltonian();
    let q = sys.projectors().singlet;
    let id = Operator::identity(d, d);
    let kappa = C64::from(0.5 * (k_singlet + k_triplet));
    let commutator = id.kronecker(&h) - h.transpose().kronecker(&id);
    let dephasing = q.transpose().kronecker(&id) + id.kronecker(&q)
        - q.transpose().kronecker(&q) * C64::from(2.0);
    Ok(Superoperator {
        matrix: commutator * C64::new(0.0, -1.0) - dephasing * kappa,
        dim: d,
        convention: Vectorization::ColumnStacking,
    })
}

/// One eigenmode of 𝒦 with eigenvalue `-λ + iΩ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mode {
    pub lambda: f64,
    pub omega: f64,
    /// Right eigenvector, devectorized.
    pub matrix: Operator,
}

impl Mode {
    pub fn eigenvalue(&self) -> C64 {
        C64::new(-self.lambda, self.omega)
    }
}

#[derive(Debug, Clone)]
pub struct Spectrum {
    pub modes: Vec<Mode>,
    /// Right eigenvectors as columns, in the order of `modes`.
    vectors: DMatrix<C64>,
    inverse: Option<DMatrix<C64>>,
    /// 2-norm condition number of `vectors`.
    pub condition: f64,
}

impl Spectrum {
    /// True when the eigenvector basis is too ill-conditioned to expand in.
    pub fn is_ill_conditioned(&self) -> bool {
        self.inverse.is_none()
    }

    pub fn lambdas(&self) -> Vec<f64> {
        self.modes.iter().map(|m| m.lambda).collect()
    }

    /// Expansion coefficients of `rho0` in the eigenmodes.
    pub fn coefficients(&self, rho0: &Operator) -> Result<Option<DVector<C64>>> {
        let v = vectorize(rho0)?;
        if v.len() != self.vectors.nrows() {
            return Err(Error::DimensionMismatch {
                expected: self.vectors.nrows(),
                got: v.len(),
            });
        }
        Ok(self.inverse.as_ref().map(|inv| inv * v))
    }

    /// `ρ(t) = Σ_m c_m e^{(-λ_m + iΩ_m)t} M_m`, or `None` when ill-conditioned.
    pub fn reconstruct(&self, rho0: &Operator, t: f64) -> Result<Option<Operator>> {
        let Some(c) = self.coefficients(rho0)? else {
            return Ok(None);
        };
        let weights = DVector::from_iterator(
            c.len(),
            self.modes
                .iter()
                .zip(c.iter())
                .map(|(m, ci)| ci * (m.eigenvalue() * t).exp()),
        );
        devectorize(&(&self.vectors * weights)).map(Some)
    }

    /// Smallest decay rate above `threshold`.
    pub fn slowest_nonzero(&self, threshold: f64) -> Option<f64> {
        self.modes.iter().map(|m| m.lambda).find(|&l| l > threshold)
    }

    fn unit_vector(&self, m: usize) -> DVector<C64> {
        let c = self.vectors.column(m);
        c / C64::from(c.norm())
    }
}

/// `ρ(t)` from the spectrum when it is well conditioned, otherwise from RK4
/// integration with step `dt`. The flag reports whether the fallback ran.
pub fn evolve(
    sup: &Superoperator,
    spectrum: &Spectrum,
    rho0: &Operator,
    t: f64,
    dt: f64,
) -> Result<(Operator, bool)> {
    match spectrum.reconstruct(rho0, t)? {
        Some(rho) => Ok((rho, false)),
        None => Ok((sup.integrate(rho0, t, dt)?, true)),
    }
}

/// Full eigendecomposition, sorted by λ ascending then Ω ascending.
pub fn spectrum(sup: &Superoperator) -> Result<Spectrum> {
    let k = sup.matrix();
    let n = k.nrows();
    let fk = faer::Mat::<faer::c64>::from_fn(n, n, |i, j| k[(i, j)]);
    let evd = fk
        .eigen()
        .map_err(|e| Error::Eigensolver(format!("{e:?}")))?;
    let s = evd.S().column_vector();
    let u = evd.U();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        let (ea, eb) = (s[a], s[b]);
        (-ea.re)
            .total_cmp(&-eb.re)
            .then(ea.im.total_cmp(&eb.im))
    });
    let vectors = DMatrix::<C64>::from_fn(n, n, |i, j| u[(i, order[j])]);
    let modes = order
        .iter()
        .enumerate()
        .map(|(j, &m)| {
            Ok(Mode {
                lambda: -s[m].re,
                omega: s[m].im,
                matrix: devectorize(&vectors.column(j).into_owned())?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let sv = vectors.clone().singular_values();
    let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
    let smax = sv.iter().copied().fold(0.0, f64::max);
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    let inverse = if condition <= CONDITION_LIMIT {
        vectors.clone().try_inverse()
    } else {
        None
    };
    Ok(Spectrum {
        modes,
        vectors,
        inverse,
        condition,
    })
}

/// Spectra of the non-reacting law at each field value, in parallel.
pub fn spectra_over_field(
    template: &SpinSystem,
    k_singlet: f64,
    k_triplet: f64,
    fields: &[f64],
) -> Result<Vec<Spectrum>> {
    fields
        .par_iter()
        .map(|&b| spectrum(&build_superoperator(&template.with_field(b)?, k_singlet, k_triplet)?))
        .collect()
}

/// λ_m along a sequence of spectra. Mode identities are carried from one
/// spectrum to the next by greedy nearest-eigenvalue matching, with
/// eigenvector overlap deciding between (near-)degenerate candidates. Row `i`
/// holds the λ values of spectrum `i` in the mode labelling of spectrum 0.
pub fn track_lambdas(spectra: &[Spectrum]) -> Vec<Vec<f64>> {
    const DEGENERATE: f64 = 1e-9;
    let Some(first) = spectra.first() else {
        return Vec::new();
    };
    let n = first.modes.len();
    let mut labels: Vec<usize> = (0..n).collect();
    let mut table = vec![first.lambdas()];
    for pair in spectra.windows(2) {
        let (prev, next) = (&pair[0], &pair[1]);
        let pv: Vec<_> = (0..n).map(|m| prev.unit_vector(m)).collect();
        let nv: Vec<_> = (0..n).map(|m| next.unit_vector(m)).collect();
        let mut candidates = Vec::with_capacity(n * n);
        for a in 0..n {
            for b in 0..n {
                let dist = (prev.modes[a].eigenvalue() - next.modes[b].eigenvalue()).norm();
                let bucket = (dist / DEGENERATE).floor();
                candidates.push((bucket, -pv[a].dotc(&nv[b]).norm(), a, b));
            }
        }
        candidates.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.total_cmp(&y.1)));
        let mut next_of = vec![usize::MAX; n];
        let mut taken = vec![false; n];
        for (_, _, a, b) in candidates {
            if next_of[a] == usize::MAX && !taken[b] {
                next_of[a] = b;
                taken[b] = true;
            }
        }
        labels = labels.iter().map(|&l| next_of[l]).collect();
        table.push(labels.iter().map(|&l| next.modes[l].lambda).collect());
    }
    table
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{max_abs, random_complex, random_density};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn direct_rhs(sys: &SpinSystem, kappa: f64, rho: &Operator) -> Operator {
        let h = sys.hamiltonian();
        let q = sys.projectors().singlet;
        let comm = &h * rho - rho * &h;
        let deph = rho * &q + &q * rho - &q * rho * &q * C64::from(2.0);
        comm * C64::new(0.0, -1.0) - deph * C64::from(kappa)
    }

    #[test]
    fn column_stacking_layout() {
        let mut e21 = Operator::zeros(8, 8);
        e21[(1, 0)] = C64::from(1.0);
        let v = vectorize(&e21).unwrap();
        assert_eq!(v[1], C64::from(1.0));
        assert_eq!(v.iter().filter(|z| z.norm() > 0.0).count(), 1);
        let mut e12 = Operator::zeros(8, 8);
        e12[(0, 1)] = C64::from(1.0);
        assert_eq!(vectorize(&e12).unwrap()[8], C64::from(1.0));
    }

    #[test]
    fn vectorization_errors() {
        assert!(vectorize(&Operator::zeros(2, 3)).is_err());
        assert!(devectorize(&DVector::zeros(7)).is_err());
        assert!(devectorize(&DVector::zeros(0)).is_err());
    }

    #[test]
    fn matches_direct_rhs() {
        let sys = SpinSystem::single_nucleus(1.0, 0.7).unwrap();
        let sup = build_superoperator(&sys, 0.01, 0.2).unwrap();
        assert_eq!(sup.convention(), Vectorization::ColumnStacking);
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..100 {
            let rho = random_density(&mut rng, 8, 1.0);
            let err = max_abs(&(sup.apply(&rho).unwrap() - direct_rhs(&sys, 0.105, &rho)));
            assert!(err < 1e-12, "{err}");
        }
    }

    #[test]
    fn trace_is_left_null_vector() {
        let sys = SpinSystem::single_nucleus(1.0, 0.3).unwrap();
        let sup = build_superoperator(&sys, 0.05, 0.05).unwrap();
        let one = vectorize(&Operator::identity(8, 8)).unwrap();
        let row = one.adjoint() * sup.matrix();
        assert!(row.iter().all(|z| z.norm() < 1e-13));
    }

    #[test]
    fn analytic_multiplicities() {
        let sys = SpinSystem::new(1, vec![], 0.0).unwrap();
        let k = 0.05;
        let sp = spectrum(&build_superoperator(&sys, k, k).unwrap()).unwrap();
        let at = |target: f64| sp.modes.iter().filter(|m| (m.lambda - target).abs() < 1e-10).count();
        assert_eq!(at(0.0), 40);
        assert_eq!(at(k), 24);
        assert!(!sp.is_ill_conditioned());
    }

    #[test]
    fn dissipative_and_conjugate_closed() {
        let sys = SpinSystem::single_nucleus(1.0, 1.0).unwrap();
        let sp = spectrum(&build_superoperator(&sys, 0.05, 0.05).unwrap()).unwrap();
        for m in &sp.modes {
            assert!(m.lambda >= -1e-10);
            let partner = sp
                .modes
                .iter()
                .any(|o| (o.lambda - m.lambda).abs() < 1e-8 && (o.omega + m.omega).abs() < 1e-8);
            assert!(partner, "no conjugate for {:?}", m.eigenvalue());
        }
        for w in sp.modes.windows(2) {
            assert!(w[0].lambda <= w[1].lambda + 1e-15);
        }
    }

    #[test]
    fn reconstruction_matches_integration() {
        let sys = SpinSystem::single_nucleus(1.0, 1.0).unwrap();
        let sup = build_superoperator(&sys, 0.05, 0.05).unwrap();
        let sp = spectrum(&sup).unwrap();
        let rho0 = crate::DensityMatrix::singlet_up(&sys).into_inner();
        for t in [0.0, 7.5, 40.0] {
            let rec = sp.reconstruct(&rho0, t).unwrap().unwrap();
            let int = sup.integrate(&rho0, t, 1e-2).unwrap();
            assert!(max_abs(&(rec - int)) < 1e-6);
        }
        let (_, fallback) = evolve(&sup, &sp, &rho0, 1.0, 1e-2).unwrap();
        assert!(!fallback);
    }

    #[test]
    fn integrate_rejects_bad_grid() {
        let sys = SpinSystem::single_nucleus(1.0, 0.0).unwrap();
        let sup = build_superoperator(&sys, 0.05, 0.05).unwrap();
        let rho = Operator::identity(8, 8);
        assert!(sup.integrate(&rho, 1.0, 0.0).is_err());
        assert!(sup.integrate(&rho, -1.0, 0.1).is_err());
        assert!(sup.apply(&Operator::identity(4, 4)).is_err());
        assert!(build_superoperator(&sys, -1.0, 0.0).is_err());
    }

    fn worst_jump(h: f64) -> f64 {
        let sys = SpinSystem::single_nucleus(1.0, 0.0).unwrap();
        let n = (0.4 / h).round() as usize;
        let fields: Vec<f64> = (0..=n).map(|i| 0.8 + h * i as f64).collect();
        let table = track_lambdas(&spectra_over_field(&sys, 0.05, 0.05, &fields).unwrap());
        assert_eq!(table.len(), fields.len());
        table
            .windows(2)
            .flat_map(|w| w[0].iter().zip(&w[1]).map(|(a, b)| (a - b).abs()).collect::<Vec<_>>())
            .fold(0.0, f64::max)
    }

    #[test]
    fn tracked_lambdas_are_continuous() {
        // An exceptional point near B = A makes λ(B) square-root-like there,
        // so jumps shrink like √h rather than h.
        let (coarse, fine) = (worst_jump(0.02), worst_jump(0.005));
        assert!(coarse < 0.01, "{coarse}");
        assert!(fine < 0.7 * coarse, "{coarse} -> {fine}");
    }

    proptest! {
        #[test]
        fn vectorization_round_trip_and_linearity(seed in any::<u64>(), a in -2.0..2.0f64, b in -2.0..2.0f64) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = random_complex(&mut rng, 8, 8);
            let y = random_complex(&mut rng, 8, 8);
            prop_assert_eq!(devectorize(&vectorize(&x).unwrap()).unwrap(), x.clone());
            let lhs = vectorize(&(&x * C64::from(a) + &y * C64::from(b))).unwrap();
            let rhs = vectorize(&x).unwrap() * C64::from(a) + vectorize(&y).unwrap() * C64::from(b);
            prop_assert!((lhs - rhs).norm() < 1e-12);
        }
    }
}
