use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use radpair::groenewold::{sweep_point, SweepSettings};
use radpair::integrator::POSITIVITY_TOL;
use radpair::liouville::build_superoperator;
use radpair::master::{p_coh, rhs_haberkorn, rhs_kominis};
use radpair::spin::HyperfineCoupling;
use radpair::{
    integrate, DensityMatrix, IntegratorSettings, MasterEquation, Operator, ReactionParams, SpinSystem,
    Theory, C64,
};

fn max_abs(m: &Operator) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// `G G†` scaled to `trace`, with `G` uniform in the complex unit square.
fn random_density(rng: &mut ChaCha8Rng, dim: usize, trace: f64) -> Operator {
    let g = Operator::from_fn(dim, dim, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    let rho = &g * g.adjoint();
    let tr = rho.trace().re;
    rho * C64::from(trace / tr)
}

/// One or two nuclei with random couplings on either electron.
fn random_system(rng: &mut ChaCha8Rng) -> SpinSystem {
    let n = rng.gen_range(1..=2);
    let couplings = (0..n)
        .map(|i| {
            let a = rng.gen_range(0.2..1.5);
            if rng.gen_bool(0.5) {
                HyperfineCoupling::donor(i, a)
            } else {
                HyperfineCoupling::acceptor(i, a)
            }
        })
        .collect();
    SpinSystem::new(n, couplings, rng.gen_range(0.0..3.0)).unwrap()
}

fn theory(kominis: bool) -> Theory {
    if kominis {
        Theory::Kominis
    } else {
        Theory::Haberkorn
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn trace_decays_at_recombination_rate(
        seed in any::<u64>(),
        ks in 0.0..0.5f64,
        kt in 0.0..0.5f64,
        gamma in 0.0..0.1f64,
        kominis in any::<bool>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sys = random_system(&mut rng);
        let p = ReactionParams::new(ks, kt, gamma, theory(kominis)).unwrap();
        let eq = MasterEquation::new(&sys, p).unwrap();
        let trace = rng.gen_range(0.1..1.0);
        let rho = random_density(&mut rng, sys.dim(), trace);
        let proj = sys.projectors();
        let ps = (&rho * &proj.singlet).trace().re;
        let pt = (&rho * &proj.triplet).trace().re;
        let d = eq.rhs_product(&rho).trace().re;
        prop_assert!((d + ks * ps + kt * pt).abs() < 1e-12, "{d} vs {}", -(ks * ps + kt * pt));
        let dt = 1e-3;
        let s = eq.stats(&proj.to_frame(&rho), dt);
        prop_assert!((s.dr_singlet + s.dr_triplet + d * dt).abs() < 1e-14);
    }

    #[test]
    fn frame_rhs_matches_product_forms(
        seed in any::<u64>(),
        ks in 0.0..0.5f64,
        kt in 0.0..0.5f64,
        gamma in 0.0..0.1f64,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sys = random_system(&mut rng);
        let (h, proj) = (sys.hamiltonian(), sys.projectors());
        let trace = rng.gen_range(0.1..1.0);
        let rho = random_density(&mut rng, sys.dim(), trace);
        let ph = ReactionParams::new(ks, kt, gamma, Theory::Haberkorn).unwrap();
        let hme = MasterEquation::new(&sys, ph).unwrap().rhs_product(&rho);
        prop_assert!(max_abs(&(hme - rhs_haberkorn(&rho, &ph, &h, &proj))) < 1e-12);
        let pk = ph.with_theory(Theory::Kominis);
        let km = MasterEquation::new(&sys, pk).unwrap().rhs_product(&rho);
        let explicit = rhs_kominis(&rho, &pk, &h, &proj, p_coh(&rho, &proj).unwrap());
        prop_assert!(max_abs(&(km - explicit)) < 1e-12);
    }

    #[test]
    fn equal_rates_split_off_uniform_decay(
        seed in any::<u64>(),
        k in 0.0..0.5f64,
        forced_p in 0.0..=1.0f64,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sys = random_system(&mut rng);
        let (h, proj) = (sys.hamiltonian(), sys.projectors());
        let rho = random_density(&mut rng, sys.dim(), 1.0);
        let p = ReactionParams::new(k, k, 0.0, Theory::Kominis).unwrap();
        let reacting = rhs_kominis(&rho, &p, &h, &proj, forced_p);
        let nonreacting = build_superoperator(&sys, k, k).unwrap().apply(&rho).unwrap();
        prop_assert!(max_abs(&(reacting - (nonreacting - &rho * C64::from(k)))) < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn trajectories_stay_physical(
        seed in any::<u64>(),
        ks in 0.0..0.3f64,
        kt in 0.0..0.3f64,
        gamma in 0.0..0.05f64,
        kominis in any::<bool>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sys = random_system(&mut rng);
        let rho0 = DensityMatrix::new(random_density(&mut rng, sys.dim(), 1.0)).unwrap();
        let p = ReactionParams::new(ks, kt, gamma, theory(kominis)).unwrap();
        let eq = MasterEquation::new(&sys, p).unwrap();
        let rec = integrate(&eq, &rho0, &IntegratorSettings::new(10.0, 1e-2).with_stride(50)).unwrap();
        for w in rec.snapshots.windows(2) {
            prop_assert!(w[1].trace() <= w[0].trace() + 1e-12);
        }
        for s in &rec.snapshots {
            let h = (&s.rho + s.rho.adjoint()) * C64::from(0.5);
            let min = h.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min);
            prop_assert!(min >= -POSITIVITY_TOL, "λ_min = {min} at t = {}", s.t);
            prop_assert!((s.trace() + s.r_singlet + s.r_triplet - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn groenewold_information_within_budget(
        ks in 0.02..0.2f64,
        kt in 0.02..0.2f64,
        b in 0.0..2.0f64,
    ) {
        let sys = SpinSystem::single_nucleus(1.0, 0.0).unwrap();
        let p = ReactionParams::new(ks, kt, 0.0, Theory::Kominis).unwrap();
        let settings = SweepSettings::for_params(&p).unwrap();
        let pt = sweep_point(&sys, &p, b, &settings).unwrap();
        prop_assert!(pt.groenewold >= -1e-9, "I_G = {}", pt.groenewold);
        prop_assert!(pt.groenewold <= pt.lr_budget + 1e-9, "I_G = {} > {}", pt.groenewold, pt.lr_budget);
        prop_assert!((pt.y_singlet + pt.y_triplet + pt.final_trace - 1.0).abs() < 1e-5);
        prop_assert!(pt.c35 >= 0.0);
    }
}
