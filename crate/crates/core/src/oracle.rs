//! Brute-force reference: the discretized two-excitation Hamiltonian as a
//! dense matrix, evolved exactly through its eigendecomposition.
//!
//! Basis order: `|e_a e_b; 0>` for a < b, then `|e_a; 1_alpha>`, then
//! `|0; 1_alpha 1_beta>` for alpha <= beta. Doubly occupied photon states
//! `|0; 2_alpha>` are normalized, so transitions into them carry sqrt(2).

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64 as C64;

use crate::ecm::CouplingTensor;
use crate::error::{Error, Result};
use crate::hierarchy::{pair_count, pair_index, HierarchyState};
use crate::model::EmitterSpec;

/// Largest N Q the oracle accepts.
pub const MAX_MODES: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BasisState {
    Atoms(usize, usize),
    Mixed(usize, usize),
    Photons(usize, usize),
}

#[derive(Debug, Clone)]
pub struct TwoExcitationBasis {
    pub n: usize,
    pub modes: usize,
    pub states: Vec<BasisState>,
    index: HashMap<BasisState, usize>,
}

impl TwoExcitationBasis {
    pub fn new(n: usize, modes: usize) -> Self {
        let mut states = Vec::with_capacity(Self::dimension_for(n, modes));
        for a in 0..n {
            for b in a + 1..n {
                states.push(BasisState::Atoms(a, b));
            }
        }
        for a in 0..n {
            for al in 0..modes {
                states.push(BasisState::Mixed(a, al));
            }
        }
        for al in 0..modes {
            for be in al..modes {
                states.push(BasisState::Photons(al, be));
            }
        }
        let index = states.iter().enumerate().map(|(i, s)| (*s, i)).collect();
        Self { n, modes, states, index }
    }

    pub fn dimension_for(n: usize, modes: usize) -> usize {
        pair_count(n) + n * modes + modes * (modes + 1) / 2
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    /// Index of a basis state; photon pairs and atom pairs may be given in
    /// either order.
    pub fn index_of(&self, s: BasisState) -> usize {
        let key = match s {
            BasisState::Atoms(a, b) => BasisState::Atoms(a.min(b), a.max(b)),
            BasisState::Photons(a, b) => BasisState::Photons(a.min(b), a.max(b)),
            other => other,
        };
        self.index[&key]
    }
}

pub fn assemble_hamiltonian(couplings: &CouplingTensor, emitters: &[EmitterSpec]) -> Result<(TwoExcitationBasis, DMatrix<f64>)> {
    let (n, m) = (couplings.n, couplings.modes());
    if m > MAX_MODES {
        return Err(Error::TooLarge(m));
    }
    if emitters.len() != n {
        return Err(Error::Shape(format!("{} emitters for {n} coupling rows", emitters.len())));
    }
    let basis = TwoExcitationBasis::new(n, m);
    let mut h = DMatrix::zeros(basis.dim(), basis.dim());
    let g = |a: usize, al: usize| couplings.row(a)[al];
    let w = |al: usize| couplings.mode_frequency(al);
    let mut set = |i: usize, j: usize, v: f64| {
        h[(i, j)] = v;
        h[(j, i)] = v;
    };
    for (i, s) in basis.states.iter().enumerate() {
        match *s {
            BasisState::Atoms(a, b) => {
                set(i, i, emitters[a].omega + emitters[b].omega);
                for al in 0..m {
                    // emitter b emits, emitter a stays excited, and vice versa
                    set(i, basis.index_of(BasisState::Mixed(a, al)), g(b, al));
                    set(i, basis.index_of(BasisState::Mixed(b, al)), g(a, al));
                }
            }
            BasisState::Mixed(a, al) => {
                set(i, i, emitters[a].omega + w(al));
                for be in 0..m {
                    let amp = if be == al { 2f64.sqrt() } else { 1.0 };
                    set(i, basis.index_of(BasisState::Photons(al, be)), amp * g(a, be));
                }
            }
            BasisState::Photons(al, be) => set(i, i, w(al) + w(be)),
        }
    }
    Ok((basis, h))
}

/// Exact propagator exp(-i H t) through the eigendecomposition of H.
#[derive(Debug, Clone)]
pub struct ExactPropagator {
    values: DVector<f64>,
    vectors: DMatrix<f64>,
}

impl ExactPropagator {
    pub fn new(h: &DMatrix<f64>) -> Self {
        let eig = SymmetricEigen::new(h.clone());
        Self {
            values: eig.eigenvalues,
            vectors: eig.eigenvectors,
        }
    }

    pub fn evolve(&self, psi0: &DVector<C64>, t: f64) -> DVector<C64> {
        let v = self.vectors.map(|x| C64::new(x, 0.0));
        let mut coeff = v.transpose() * psi0;
        for (c, &e) in coeff.iter_mut().zip(self.values.iter()) {
            *c *= C64::new(0.0, -e * t).exp();
        }
        v * coeff
    }
}

pub fn exact_evolve(h: &DMatrix<f64>, psi0: &DVector<C64>, times: &[f64]) -> Vec<DVector<C64>> {
    let p = ExactPropagator::new(h);
    times.iter().map(|&t| p.evolve(psi0, t)).collect()
}

/// Oracle amplitudes from hierarchy amplitudes: D~_aa = sqrt(2) u_aa,
/// D~_ab = u_ab for a != b.
pub fn state_to_vector(basis: &TwoExcitationBasis, s: &HierarchyState) -> DVector<C64> {
    let mut v = DVector::zeros(basis.dim());
    for (i, st) in basis.states.iter().enumerate() {
        v[i] = match *st {
            BasisState::Atoms(a, b) => s.c[pair_index(s.n, a, b)],
            BasisState::Mixed(a, al) => s.b[a * s.modes + al],
            BasisState::Photons(al, be) if al == be => s.d_at(al, al) / 2f64.sqrt(),
            BasisState::Photons(al, be) => s.d_at(al, be),
        };
    }
    v
}

/// Inverse of [`state_to_vector`].
pub fn vector_to_state(basis: &TwoExcitationBasis, v: &DVector<C64>, t: f64) -> HierarchyState {
    let (n, m) = (basis.n, basis.modes);
    let mut s = HierarchyState::zeros(n, m);
    s.t = t;
    for (i, st) in basis.states.iter().enumerate() {
        match *st {
            BasisState::Atoms(a, b) => s.c[pair_index(n, a, b)] = v[i],
            BasisState::Mixed(a, al) => s.b[a * m + al] = v[i],
            BasisState::Photons(al, be) => {
                let z = if al == be { v[i] * 2f64.sqrt() } else { v[i] };
                for (p, q) in [(al, be), (be, al)] {
                    s.d_re[p * m + q] = z.re;
                    s.d_im[p * m + q] = z.im;
                }
            }
        }
    }
    s
}

/// Excited-state population of emitter `a`.
pub fn emitter_population(basis: &TwoExcitationBasis, v: &DVector<C64>, a: usize) -> f64 {
    basis
        .states
        .iter()
        .zip(v.iter())
        .filter(|(s, _)| match **s {
            BasisState::Atoms(x, y) => x == a || y == a,
            BasisState::Mixed(x, _) => x == a,
            BasisState::Photons(..) => false,
        })
        .map(|(_, z)| z.norm_sqr())
        .sum()
}

/// Reduced density matrix of emitters (i, j) in the order |ee>, |eg>, |ge>,
/// |gg>, by explicit partial trace over the other emitters and the field.
pub fn reduced_pair_density(basis: &TwoExcitationBasis, v: &DVector<C64>, i: usize, j: usize) -> [[C64; 4]; 4] {
    // environment label: (excited emitters outside the pair, photon modes)
    type Env = (Vec<usize>, Vec<usize>);
    let mut groups: HashMap<Env, [C64; 4]> = HashMap::new();
    for (s, z) in basis.states.iter().zip(v.iter()) {
        let (atoms, photons): (Vec<usize>, Vec<usize>) = match *s {
            BasisState::Atoms(a, b) => (vec![a, b], vec![]),
            BasisState::Mixed(a, al) => (vec![a], vec![al]),
            BasisState::Photons(al, be) => (vec![], vec![al, be]),
        };
        let (ei, ej) = (atoms.contains(&i), atoms.contains(&j));
        let slot = match (ei, ej) {
            (true, true) => 0,
            (true, false) => 1,
            (false, true) => 2,
            (false, false) => 3,
        };
        let rest: Vec<usize> = atoms.into_iter().filter(|&x| x != i && x != j).collect();
        groups.entry((rest, photons)).or_insert([C64::new(0.0, 0.0); 4])[slot] += z;
    }
    let mut rho = [[C64::new(0.0, 0.0); 4]; 4];
    for amp in groups.values() {
        for r in 0..4 {
            for c in 0..4 {
                rho[r][c] += amp[r] * amp[c].conj();
            }
        }
    }
    rho
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ecm::{build_overlap, couplings, diagonalize_overlap};
    use crate::greens::{im_greens_matrix, EnvironmentSpec};
    use crate::hierarchy::{init_state, InitialState};
    use crate::model::{build_grid, Normalization, QuadratureRule};
    use std::f64::consts::PI;

    fn small(n: usize, q: usize) -> (CouplingTensor, Vec<EmitterSpec>) {
        let lam = 2.0 * PI / 10.0;
        let xs = [0.74, 0.76, 0.9];
        let em: Vec<EmitterSpec> = xs[..n]
            .iter()
            .map(|&x| EmitterSpec {
                position: x,
                omega: 10.0,
                dipole: 0.224,
                initially_excited: false,
            })
            .collect();
        let pos: Vec<f64> = xs[..n].iter().map(|x| x * lam).collect();
        let grid = build_grid(8.0, 12.0, q, QuadratureRule::Trapezoid).unwrap();
        let t = im_greens_matrix(&EnvironmentSpec::mirror_only(), &pos, &grid).unwrap();
        let b = diagonalize_overlap(build_overlap(&t, &pos).unwrap(), &grid.nodes).unwrap();
        (couplings(&b, &em, &grid, &Normalization::default()).unwrap(), em)
    }

    #[test]
    fn dimension_counting() {
        assert_eq!(TwoExcitationBasis::new(2, 6).dim(), 34);
        assert_eq!(TwoExcitationBasis::dimension_for(2, 16), 1 + 32 + 136);
    }

    #[test]
    fn zero_coupling_is_diagonal_and_symmetric() {
        let (c, em) = small(2, 3);
        let (_, h) = assemble_hamiltonian(&c.zeroed(), &em).unwrap();
        assert_eq!(h.clone() - DMatrix::from_diagonal(&h.diagonal()), DMatrix::zeros(34, 34));
        let (_, h) = assemble_hamiltonian(&c, &em).unwrap();
        assert_eq!((&h - h.transpose()).amax(), 0.0);
    }

    #[test]
    fn guard_trips() {
        let (c, em) = small(2, 33);
        assert!(matches!(assemble_hamiltonian(&c, &em), Err(Error::TooLarge(66))));
    }

    #[test]
    fn unitary_and_energy_conserving() {
        let (c, em) = small(2, 4);
        let (basis, h) = assemble_hamiltonian(&c, &em).unwrap();
        let s = init_state(&InitialState::PairExcited { pair: [1, 2] }, &em, c.modes()).unwrap();
        let psi0 = state_to_vector(&basis, &s);
        let hc = h.map(|x| C64::new(x, 0.0));
        let energy = |p: &DVector<C64>| (p.adjoint() * &hc * p)[(0, 0)].re;
        let e0 = energy(&psi0);
        let out = exact_evolve(&h, &psi0, &[0.0, 1.0, 7.5]);
        assert!((&out[0] - &psi0).norm() < 1e-12);
        for p in &out {
            assert!((p.norm() - 1.0).abs() < 1e-12);
            assert!((energy(p) - e0).abs() < 1e-10 * e0.abs());
        }
    }

    #[test]
    fn amplitude_mapping_round_trips() {
        let (c, _) = small(3, 3);
        let basis = TwoExcitationBasis::new(3, c.modes());
        let v = DVector::from_fn(basis.dim(), |i, _| C64::new((i as f64).sin(), (i as f64 * 0.7).cos()));
        let s = vector_to_state(&basis, &v, 0.0);
        assert_eq!(s.asymmetry(), 0.0);
        assert!((s.total_norm() - v.norm_squared()).abs() < 1e-12);
        assert!((state_to_vector(&basis, &s) - v).norm() < 1e-14);
    }

    #[test]
    fn partial_trace_of_wbar() {
        let (c, em) = small(3, 2);
        let basis = TwoExcitationBasis::new(3, c.modes());
        let s = init_state(&InitialState::DickeWbar, &em, c.modes()).unwrap();
        let v = state_to_vector(&basis, &s);
        let rho = reduced_pair_density(&basis, &v, 0, 1);
        let third = 1.0 / 3.0;
        assert!((rho[0][0].re - third).abs() < 1e-15);
        assert!((rho[1][1].re - third).abs() < 1e-15);
        assert!((rho[2][2].re - third).abs() < 1e-15);
        assert!(rho[3][3].norm() < 1e-15);
        assert!((rho[1][2].re - third).abs() < 1e-15);
        assert!(rho[0][3].norm() < 1e-15);
        assert!((emitter_population(&basis, &v, 2) - 2.0 * third).abs() < 1e-15);
    }
}
