//! Spin Hilbert space of a radical pair with spin-1/2 nuclei.
//!
//! The product basis is ordered lexicographically over the tensor slots
//! `(donor electron, acceptor electron, nucleus 1, ..., nucleus n)` with the
//! up state before the down state in every slot. User-facing indices are
//! 1-based, so for a single nucleus index 3 is `|↑↓⇑⟩` and index 5 is
//! `|↓↑⇑⟩`.

use std::fmt;

use nalgebra::{DMatrix, DMatrixView, DVector, Matrix2};

use crate::error::{Error, Result};
use crate::C64;

/// Dense complex operator on the spin Hilbert space.
pub type Operator = DMatrix<C64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Electron {
    Donor,
    Acceptor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Particle {
    Donor,
    Acceptor,
    /// Nucleus with a 0-based index.
    Nucleus(usize),
}

impl From<Electron> for Particle {
    fn from(e: Electron) -> Self {
        match e {
            Electron::Donor => Particle::Donor,
            Electron::Acceptor => Particle::Acceptor,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    fn half_pauli(self) -> Matrix2<C64> {
        let z = C64::new(0.0, 0.0);
        let h = C64::new(0.5, 0.0);
        let ih = C64::new(0.0, 0.5);
        match self {
            Axis::X => Matrix2::new(z, h, h, z),
            Axis::Y => Matrix2::new(z, -ih, ih, z),
            Axis::Z => Matrix2::new(h, z, z, -h),
        }
    }
}

/// Isotropic hyperfine coupling `A I_i · s_e` (angular-frequency units of `A`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperfineCoupling {
    pub nucleus: usize,
    pub electron: Electron,
    pub constant: f64,
}

impl HyperfineCoupling {
    pub fn donor(nucleus: usize, constant: f64) -> Self {
        Self { nucleus, electron: Electron::Donor, constant }
    }

    pub fn acceptor(nucleus: usize, constant: f64) -> Self {
        Self { nucleus, electron: Electron::Acceptor, constant }
    }
}

/// One product-basis state, listing the spin projections slot by slot.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BasisLabel {
    /// `true` for spin up; slot 0 is the donor electron, slot 1 the acceptor.
    pub up: Vec<bool>,
}

impl fmt::Display for BasisLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (slot, &up) in self.up.iter().enumerate() {
            let c = match (slot < 2, up) {
                (true, true) => '↑',
                (true, false) => '↓',
                (false, true) => '⇑',
                (false, false) => '⇓',
            };
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

/// Ordered product basis for two electrons and `n_nuclei` spin-1/2 nuclei.
pub fn build_basis(n_nuclei: usize) -> Result<Vec<BasisLabel>> {
    if n_nuclei == 0 {
        return Err(Error::InvalidSystem(
            "at least one nucleus is required for hyperfine mixing".into(),
        ));
    }
    let slots = 2 + n_nuclei;
    Ok((0..1usize << slots)
        .map(|index| BasisLabel {
            up: (0..slots)
                .map(|slot| (index >> (slots - 1 - slot)) & 1 == 0)
                .collect(),
        })
        .collect())
}

/// Electron pair plus nuclei, with isotropic hyperfine couplings and a field
/// `b_field` along z.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinSystem {
    n_nuclei: usize,
    couplings: Vec<HyperfineCoupling>,
    b_field: f64,
}

impl SpinSystem {
    pub fn new(n_nuclei: usize, couplings: Vec<HyperfineCoupling>, b_field: f64) -> Result<Self> {
        if n_nuclei == 0 {
            return Err(Error::InvalidSystem(
                "at least one nucleus is required for hyperfine mixing".into(),
            ));
        }
        if n_nuclei > 4 {
            return Err(Error::InvalidSystem(format!(
                "{n_nuclei} nuclei exceed the dense-operator limit of 4"
            )));
        }
        if !b_field.is_finite() {
            return Err(Error::InvalidSystem(format!("field {b_field} is not finite")));
        }
        for c in &couplings {
            if c.nucleus >= n_nuclei {
                return Err(Error::InvalidSystem(format!(
                    "coupling refers to nucleus {} but only {n_nuclei} exist",
                    c.nucleus
                )));
            }
            if !c.constant.is_finite() {
                return Err(Error::InvalidSystem(format!(
                    "hyperfine constant {} is not finite",
                    c.constant
                )));
            }
        }
        Ok(Self {
            n_nuclei,
            couplings,
            b_field,
        })
    }

    /// One nucleus coupled to the donor electron with constant `a`.
    pub fn single_nucleus(a: f64, b_field: f64) -> Result<Self> {
        Self::new(
            1,
            vec![HyperfineCoupling {
                nucleus: 0,
                electron: Electron::Donor,
                constant: a,
            }],
            b_field,
        )
    }

    pub fn with_field(&self, b_field: f64) -> Result<Self> {
        Self::new(self.n_nuclei, self.couplings.clone(), b_field)
    }

    pub fn n_nuclei(&self) -> usize {
        self.n_nuclei
    }

    pub fn couplings(&self) -> &[HyperfineCoupling] {
        &self.couplings
    }

    pub fn b_field(&self) -> f64 {
        self.b_field
    }

    pub fn dim(&self) -> usize {
        1 << (2 + self.n_nuclei)
    }

    fn nuclear_dim(&self) -> usize {
        1 << self.n_nuclei
    }

    pub fn basis(&self) -> Vec<BasisLabel> {
        build_basis(self.n_nuclei).expect("validated on construction")
    }

    /// `(Pauli matrix)/2` of `particle` embedded at its tensor slot.
    pub fn spin_operator(&self, particle: Particle, axis: Axis) -> Result<Operator> {
        let slot = match particle {
            Particle::Donor => 0,
            Particle::Acceptor => 1,
            Particle::Nucleus(i) if i < self.n_nuclei => 2 + i,
            Particle::Nucleus(i) => {
                return Err(Error::InvalidParameter(format!(
                    "nucleus {i} does not exist ({} nuclei)",
                    self.n_nuclei
                )))
            }
        };
        let half = axis.half_pauli();
        let identity = Matrix2::<C64>::identity();
        let mut op = DMatrix::<C64>::identity(1, 1);
        for s in 0..2 + self.n_nuclei {
            let factor = if s == slot { &half } else { &identity };
            op = op.kronecker(factor);
        }
        Ok(op)
    }

    /// `Σ_i A_i I_i·s_e(i) + B (s_Dz + s_Az)`.
    pub fn hamiltonian(&self) -> Operator {
        let dim = self.dim();
        let mut h = Operator::zeros(dim, dim);
        for c in &self.couplings {
            for axis in Axis::ALL {
                let nuc = self
                    .spin_operator(Particle::Nucleus(c.nucleus), axis)
                    .expect("validated coupling");
                let el = self
                    .spin_operator(c.electron.into(), axis)
                    .expect("electron slot exists");
                h += (nuc * el) * C64::from(c.constant);
            }
        }
        if self.b_field != 0.0 {
            let sz = self.spin_operator(Particle::Donor, Axis::Z).unwrap()
                + self.spin_operator(Particle::Acceptor, Axis::Z).unwrap();
            h += sz * C64::from(self.b_field);
        }
        h
    }

    /// Singlet and triplet projectors with their singlet-triplet frame.
    pub fn projectors(&self) -> Projectors {
        Projectors::new(self.nuclear_dim())
    }

    /// `|S⟩ ⊗ |⇑…⇑⟩` as a state vector.
    pub fn singlet_up_state(&self) -> DVector<C64> {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let electrons = DVector::from_vec(vec![
            C64::from(0.0),
            C64::from(r),
            C64::from(-r),
            C64::from(0.0),
        ]);
        let mut nuclear = DVector::<C64>::zeros(self.nuclear_dim());
        nuclear[0] = C64::from(1.0);
        electrons.kronecker(&nuclear)
    }
}

/// `Q_S = |S⟩⟨S| ⊗ 𝟙` and `Q_T = 𝟙 - Q_S`, together with an orthonormal
/// frame whose first `n_singlet` columns span the range of `Q_S`.
///
/// The frame columns are `|S⟩⊗|n⟩` followed by `|T+⟩⊗|n⟩`, `|T0⟩⊗|n⟩`,
/// `|T−⟩⊗|n⟩` over the nuclear product states `|n⟩`. In that frame both
/// projectors are diagonal.
#[derive(Debug, Clone)]
pub struct Projectors {
    pub singlet: Operator,
    pub triplet: Operator,
    frame: Operator,
    n_singlet: usize,
}

impl Projectors {
    fn new(nuclear_dim: usize) -> Self {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let electron_states: [[f64; 4]; 4] = [
            [0.0, r, -r, 0.0], // S
            [1.0, 0.0, 0.0, 0.0], // T+
            [0.0, r, r, 0.0], // T0
            [0.0, 0.0, 0.0, 1.0], // T-
        ];
        let dim = 4 * nuclear_dim;
        let mut frame = Operator::zeros(dim, dim);
        let mut col = 0;
        for e in &electron_states {
            for n in 0..nuclear_dim {
                for (ei, &amp) in e.iter().enumerate() {
                    frame[(ei * nuclear_dim + n, col)] = C64::from(amp);
                }
                col += 1;
            }
        }
        let vs = frame.columns(0, nuclear_dim);
        let singlet = &vs * vs.adjoint();
        let triplet = Operator::identity(dim, dim) - &singlet;
        Self {
            singlet,
            triplet,
            frame,
            n_singlet: nuclear_dim,
        }
    }

    /// Projectors for a radical pair whose full Hilbert dimension is `dim`.
    pub fn for_dimension(dim: usize) -> Result<Self> {
        if dim < 8 || !dim.is_power_of_two() {
            return Err(Error::DimensionMismatch {
                expected: 8,
                got: dim,
            });
        }
        Ok(Self::new(dim / 4))
    }

    pub fn dim(&self) -> usize {
        self.frame.nrows()
    }

    pub fn n_singlet(&self) -> usize {
        self.n_singlet
    }

    /// Unitary whose columns are the singlet-triplet frame vectors, expressed
    /// in the product basis.
    pub fn frame(&self) -> &Operator {
        &self.frame
    }

    /// Isometry onto the singlet subspace (`dim × n_singlet`).
    pub fn singlet_basis(&self) -> DMatrixView<'_, C64> {
        self.frame.columns(0, self.n_singlet)
    }

    /// Isometry onto the triplet subspace (`dim × 3 n_singlet`).
    pub fn triplet_basis(&self) -> DMatrixView<'_, C64> {
        self.frame
            .columns(self.n_singlet, self.dim() - self.n_singlet)
    }

    /// Product-basis operator expressed in the singlet-triplet frame.
    pub fn to_frame(&self, op: &Operator) -> Operator {
        self.frame.adjoint() * op * &self.frame
    }

    /// Frame operator expressed back in the product basis.
    pub fn to_product(&self, op: &Operator) -> Operator {
        &self.frame * op * self.frame.adjoint()
    }
}
