//! Atomic, field and two-photon observables evaluated on state snapshots.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::ecm::ModeProfileSet;
use crate::error::{Error, Result};
use crate::hierarchy::HierarchyState;

/// Smallest two-photon population accepted by [`jsd_and_schmidt`].
pub const PGG_FLOOR: f64 = 1e-6;
/// Residual one-photon population above which the conditional reading is flagged.
pub const RESIDUAL_B_WARNING: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SectorProbabilities {
    pub p_c: f64,
    pub p_b: f64,
    pub p_d: f64,
}

impl SectorProbabilities {
    pub fn total(&self) -> f64 {
        self.p_c + self.p_b + self.p_d
    }
}

pub fn sector_probabilities(s: &HierarchyState) -> SectorProbabilities {
    SectorProbabilities {
        p_c: s.p_c(),
        p_b: s.p_b(),
        p_d: s.p_d(),
    }
}

/// Excited-state population of each emitter.
pub fn emitter_populations(s: &HierarchyState) -> Vec<f64> {
    (0..s.n)
        .map(|a| {
            let pairs: f64 = (0..s.n).filter(|&b| b != a).map(|b| s.c_at(a, b).norm_sqr()).sum();
            pairs + s.b_row(a).iter().map(|z| z.norm_sqr()).sum::<f64>()
        })
        .collect()
}

/// Two-qubit reduced density matrix in the X form it takes inside the
/// two-excitation manifold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReducedTwoQubit {
    pub p_ee: f64,
    pub p_eg: f64,
    pub p_ge: f64,
    pub p_gg: f64,
    pub z12: C64,
}

impl ReducedTwoQubit {
    pub fn trace(&self) -> f64 {
        self.p_ee + self.p_eg + self.p_ge + self.p_gg
    }

    pub fn concurrence(&self) -> f64 {
        concurrence(self)
    }

    pub fn bell_fidelities(&self) -> (f64, f64) {
        bell_fidelities(self)
    }
}

fn overlap(x: &[C64], y: &[C64]) -> C64 {
    x.iter().zip(y).map(|(u, v)| u * v.conj()).sum()
}

fn norm_sqr(x: &[C64]) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum()
}

pub fn reduced_two_qubit(s: &HierarchyState) -> Result<ReducedTwoQubit> {
    if s.n != 2 {
        return Err(Error::WrongN { expected: 2, got: s.n });
    }
    Ok(ReducedTwoQubit {
        p_ee: s.c[0].norm_sqr(),
        p_eg: norm_sqr(s.b_row(0)),
        p_ge: norm_sqr(s.b_row(1)),
        p_gg: s.p_d(),
        z12: overlap(s.b_row(0), s.b_row(1)),
    })
}

/// Reduced state of the 0-based pair (i, j) of a three-emitter state, with
/// the remaining emitter traced out together with the field.
pub fn reduced_pair_from_three(s: &HierarchyState, i: usize, j: usize) -> Result<ReducedTwoQubit> {
    if s.n != 3 {
        return Err(Error::WrongN { expected: 3, got: s.n });
    }
    if i == j || i > 2 || j > 2 {
        return Err(Error::Shape(format!("invalid emitter pair ({i}, {j})")));
    }
    let m = 3 - i - j;
    let (cim, cjm) = (s.c_at(i, m), s.c_at(j, m));
    Ok(ReducedTwoQubit {
        p_ee: s.c_at(i, j).norm_sqr(),
        p_eg: cim.norm_sqr() + norm_sqr(s.b_row(i)),
        p_ge: cjm.norm_sqr() + norm_sqr(s.b_row(j)),
        p_gg: norm_sqr(s.b_row(m)) + s.p_d(),
        z12: cim * cjm.conj() + overlap(s.b_row(i), s.b_row(j)),
    })
}

pub fn concurrence(rho: &ReducedTwoQubit) -> f64 {
    2.0 * (rho.z12.norm() - (rho.p_ee * rho.p_gg).max(0.0).sqrt()).max(0.0)
}

/// (F+, F-) for the symmetric and antisymmetric one-excitation Bell states.
pub fn bell_fidelities(rho: &ReducedTwoQubit) -> (f64, f64) {
    let mean = 0.5 * (rho.p_eg + rho.p_ge);
    (mean + rho.z12.re, mean - rho.z12.re)
}

/// Collective vectors over (C12, C13, C23) or (B1, B2, B3): bright, then the
/// two dark states.
pub fn dicke_vectors() -> [[f64; 3]; 3] {
    let (s3, s2, s6) = (3f64.sqrt(), 2f64.sqrt(), 6f64.sqrt());
    [
        [1.0 / s3, 1.0 / s3, 1.0 / s3],
        [1.0 / s2, -1.0 / s2, 0.0],
        [1.0 / s6, 1.0 / s6, -2.0 / s6],
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DickeDecomposition {
    pub wbar_c: f64,
    pub d1_c: f64,
    pub d2_c: f64,
    pub w_b: f64,
    pub d1_b: f64,
    pub d2_b: f64,
}

impl DickeDecomposition {
    /// Population in the single-excitation dark manifold.
    pub fn dark_b(&self) -> f64 {
        self.d1_b + self.d2_b
    }
}

pub fn dicke_decomposition(s: &HierarchyState) -> Result<DickeDecomposition> {
    if s.n != 3 {
        return Err(Error::WrongN { expected: 3, got: s.n });
    }
    let u = dicke_vectors();
    let proj = |v: &[f64; 3], x: [C64; 3]| (v[0] * x[0] + v[1] * x[1] + v[2] * x[2]).norm_sqr();
    let c = [s.c_at(0, 1), s.c_at(0, 2), s.c_at(1, 2)];
    let mut b = [0.0; 3];
    for alpha in 0..s.modes {
        let x = [s.b[alpha], s.b[s.modes + alpha], s.b[2 * s.modes + alpha]];
        for (acc, v) in b.iter_mut().zip(&u) {
            *acc += proj(v, x);
        }
    }
    Ok(DickeDecomposition {
        wbar_c: proj(&u[0], c),
        d1_c: proj(&u[1], c),
        d2_c: proj(&u[2], c),
        w_b: b[0],
        d1_b: b[1],
        d2_b: b[2],
    })
}

/// Reconstruction vectors F_alpha(r) for a fixed set of observation points,
/// stored as an (N Q) x P matrix.
#[derive(Debug, Clone)]
pub struct FieldProbe {
    pub points: Vec<f64>,
    f: DMatrix<f64>,
}

impl FieldProbe {
    pub fn new(profiles: &ModeProfileSet, weights: &[f64]) -> Result<Self> {
        if weights.len() != profiles.q {
            return Err(Error::ProfileMismatch(format!(
                "{} quadrature weights for {} profile nodes",
                weights.len(),
                profiles.q
            )));
        }
        let m = profiles.n * profiles.q;
        let p = profiles.points.len();
        let mut f = DMatrix::zeros(m, p);
        for r in 0..p {
            for (alpha, v) in profiles.weighted_row(r, weights).into_iter().enumerate() {
                f[(alpha, r)] = v;
            }
        }
        Ok(Self {
            points: profiles.points.clone(),
            f,
        })
    }

    pub fn modes(&self) -> usize {
        self.f.nrows()
    }

    pub fn vector(&self, r: usize) -> Vec<f64> {
        self.f.column(r).iter().copied().collect()
    }

    /// I(r) = sum_a |F^T B_a|^2 + |D F|^2 at every probe point.
    pub fn intensity(&self, s: &HierarchyState) -> Result<Vec<f64>> {
        let m = s.modes;
        if m != self.modes() {
            return Err(Error::ProfileMismatch(format!("state has {m} modes, profiles {}", self.modes())));
        }
        let mut out = vec![0.0; self.points.len()];
        for a in 0..s.n {
            let row = s.b_row(a);
            let bre = DMatrix::from_iterator(1, m, row.iter().map(|z| z.re));
            let bim = DMatrix::from_iterator(1, m, row.iter().map(|z| z.im));
            let (xr, xi) = (bre * &self.f, bim * &self.f);
            for (o, (u, v)) in out.iter_mut().zip(xr.iter().zip(xi.iter())) {
                *o += u * u + v * v;
            }
        }
        let dre = DMatrix::from_row_slice(m, m, &s.d_re);
        let dim = DMatrix::from_row_slice(m, m, &s.d_im);
        let (yr, yi) = (dre * &self.f, dim * &self.f);
        for (r, o) in out.iter_mut().enumerate() {
            *o += yr.column(r).norm_squared() + yi.column(r).norm_squared();
        }
        Ok(out)
    }
}

/// One-body photonic density kernel rho(alpha, alpha') = sum_a B_a,alpha
/// B*_a,alpha' + sum_beta D_alpha,beta D*_alpha',beta.
pub fn one_body_kernel(s: &HierarchyState) -> DMatrix<C64> {
    let m = s.modes;
    DMatrix::from_fn(m, m, |i, j| {
        let atoms: C64 = (0..s.n).map(|a| s.b[a * m + i] * s.b[a * m + j].conj()).sum();
        let photons: C64 = (0..m).map(|k| s.d_at(i, k) * s.d_at(j, k).conj()).sum();
        atoms + photons
    })
}

/// Intensity from the one-body kernel: sum F_alpha rho(alpha, alpha') F_alpha'.
pub fn intensity_from_kernel(kernel: &DMatrix<C64>, f: &[f64]) -> f64 {
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..f.len() {
        for j in 0..f.len() {
            acc += f[i] * kernel[(i, j)] * f[j];
        }
    }
    acc.re
}

/// Conditional joint spectral density and one-photon Schmidt diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct JsdReport {
    pub frequencies: Vec<f64>,
    /// J(omega_q, omega_q'), row-major over the frequency nodes.
    pub j: Vec<f64>,
    pub p_gg: f64,
    pub p_b: f64,
    pub trace_rho1: f64,
    pub purity: f64,
    pub k_eff: f64,
    pub entropy_nats: f64,
    pub entropy_bits: f64,
    pub min_eigenvalue: f64,
    pub integral: f64,
    pub omega0: f64,
    pub gamma0: f64,
}

impl JsdReport {
    pub fn j_at(&self, q: usize, qp: usize) -> f64 {
        self.j[q * self.frequencies.len() + qp]
    }

    /// Rotated coordinates (Omega, delta) of the node pair (q, q').
    pub fn rotated(&self, q: usize, qp: usize) -> (f64, f64) {
        let (w1, w2) = (self.frequencies[q], self.frequencies[qp]);
        ((w1 + w2 - 2.0 * self.omega0) / self.gamma0, (w1 - w2) / self.gamma0)
    }

    pub fn residual_warning(&self) -> bool {
        self.p_b > RESIDUAL_B_WARNING
    }
}

/// Builds the conditional two-photon diagnostics from the final state. J is
/// normalized so that its quadrature integral over (omega1, omega2) is one;
/// rho_1 = D D^dagger / (2 P_gg) over the combined mode index.
pub fn jsd_and_schmidt(s: &HierarchyState, nodes: &[f64], weights: &[f64], omega0: f64, gamma0: f64) -> Result<JsdReport> {
    let m = s.modes;
    let nq = nodes.len();
    if nq == 0 || m % nq != 0 || weights.len() != nq {
        return Err(Error::Shape(format!("{m} modes over {nq} nodes")));
    }
    let p_gg = s.p_d();
    if p_gg < PGG_FLOOR {
        return Err(Error::EmptyTwoPhotonSector(p_gg));
    }
    let mut j = vec![0.0; nq * nq];
    for alpha in 0..m {
        for beta in 0..m {
            let (q, qp) = (alpha % nq, beta % nq);
            j[q * nq + qp] += 0.5 * s.d_at(alpha, beta).norm_sqr() / (weights[q] * weights[qp] * p_gg);
        }
    }
    let mut integral = 0.0;
    for q in 0..nq {
        for qp in 0..nq {
            integral += weights[q] * weights[qp] * j[q * nq + qp];
        }
    }
    let d = DMatrix::from_fn(m, m, |i, k| s.d_at(i, k));
    let rho = (&d * d.adjoint()) / C64::new(2.0 * p_gg, 0.0);
    let trace_rho1 = rho.trace().re;
    let purity: f64 = rho.iter().map(|z| z.norm_sqr()).sum();
    let eig = SymmetricEigen::new(rho).eigenvalues;
    let min_eigenvalue = eig.iter().copied().fold(f64::INFINITY, f64::min);
    let entropy_nats = -eig.iter().filter(|&&l| l > 0.0).map(|&l| l * l.ln()).sum::<f64>();
    Ok(JsdReport {
        frequencies: nodes.to_vec(),
        j,
        p_gg,
        p_b: s.p_b(),
        trace_rho1,
        purity,
        k_eff: 1.0 / purity,
        entropy_nats,
        entropy_bits: entropy_nats / std::f64::consts::LN_2,
        min_eigenvalue,
        integral,
        omega0,
        gamma0,
    })
}
