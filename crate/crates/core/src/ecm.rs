//! Emitter-centered modes: the overlap matrix Gamma(omega), its spectral
//! decomposition, the per-channel couplings and the bright-mode profiles used
//! for field reconstruction.
//!
//! Everything here is real: Gamma is Im G, so the eigenvectors and the
//! couplings `g_ak = d_a N(omega) sqrt(gamma_k) V_ak` are real as well.

use std::io::Write;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::greens::{greens_1d, EnvironmentSpec, GreensTable, PSD_TOLERANCE};
use crate::model::{EmitterSpec, FrequencyGrid, Normalization};

/// Relative eigenvalue gap below which a pair counts as degenerate.
pub const DEGENERACY_TOLERANCE: f64 = 1e-10;
/// Self-coupling below which a profile node is unusable.
pub const SELF_COUPLING_FLOOR: f64 = 1e-14;

/// Gamma_ij(omega_q) = Im G(R_i, R_j, omega_q) for each grid node.
pub fn build_overlap(table: &GreensTable, positions: &[f64]) -> Result<Vec<DMatrix<f64>>> {
    let sites = positions
        .iter()
        .enumerate()
        .map(|(a, &x)| table.position_index(x).ok_or(Error::MissingPosition(a + 1)))
        .collect::<Result<Vec<_>>>()?;
    Ok(table.select(&sites).im_g)
}

#[derive(Debug, Clone)]
pub struct EcmBasis {
    pub n: usize,
    pub nodes: Vec<f64>,
    pub overlap: Vec<DMatrix<f64>>,
    /// Descending eigenvalues per node.
    pub gammas: Vec<DVector<f64>>,
    /// Columns are eigenvectors, ordered as `gammas`.
    pub vectors: Vec<DMatrix<f64>>,
    /// Near-degenerate channel pairs per node.
    pub degenerate: Vec<Vec<(usize, usize)>>,
    /// Number of small negative eigenvalues clamped to zero per node.
    pub clamped: Vec<usize>,
}

impl EcmBasis {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Largest |V gamma V^T - Gamma| / |Gamma| over nodes.
    pub fn reconstruction_error(&self) -> f64 {
        (0..self.len())
            .map(|q| {
                let v = &self.vectors[q];
                let r = v * DMatrix::from_diagonal(&self.gammas[q]) * v.transpose();
                let scale = self.overlap[q].norm();
                if scale == 0.0 {
                    r.norm()
                } else {
                    (r - &self.overlap[q]).norm() / scale
                }
            })
            .fold(0.0, f64::max)
    }

    /// Largest |V^T V - 1| over nodes.
    pub fn orthogonality_error(&self) -> f64 {
        self.vectors
            .iter()
            .map(|v| (v.transpose() * v - DMatrix::identity(self.n, self.n)).amax())
            .fold(0.0, f64::max)
    }
}

fn diagonalize_one(m: &DMatrix<f64>, omega: f64) -> Result<(DVector<f64>, DMatrix<f64>, Vec<(usize, usize)>, usize)> {
    let n = m.nrows();
    let eig = SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let scale = m.norm();
    let tol = PSD_TOLERANCE * m.diagonal().amax();
    let mut gammas = DVector::zeros(n);
    let mut vectors = DMatrix::zeros(n, n);
    let mut clamped = 0;
    for (k, &src) in order.iter().enumerate() {
        let mut g = eig.eigenvalues[src];
        if g < 0.0 {
            if g < -tol {
                return Err(Error::IndefiniteOverlap {
                    omega,
                    eigenvalue: g,
                    tolerance: tol,
                });
            }
            g = 0.0;
            clamped += 1;
        }
        gammas[k] = g;
        let mut col = eig.eigenvectors.column(src).into_owned();
        let lead = col.iter().copied().fold(0.0f64, |best, x| if x.abs() > best.abs() { x } else { best });
        if lead < 0.0 {
            col.neg_mut();
        }
        vectors.set_column(k, &col);
    }
    let mut degenerate = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if (gammas[i] - gammas[j]).abs() < DEGENERACY_TOLERANCE * scale {
                degenerate.push((i, j));
            }
        }
    }
    Ok((gammas, vectors, degenerate, clamped))
}

pub fn diagonalize_overlap(overlap: Vec<DMatrix<f64>>, nodes: &[f64]) -> Result<EcmBasis> {
    let n = overlap.first().map_or(0, |m| m.nrows());
    if overlap.len() != nodes.len() {
        return Err(Error::Shape(format!("{} matrices for {} nodes", overlap.len(), nodes.len())));
    }
    let parts = overlap
        .par_iter()
        .zip(nodes.par_iter())
        .map(|(m, &w)| diagonalize_one(m, w))
        .collect::<Vec<_>>();
    let mut basis = EcmBasis {
        n,
        nodes: nodes.to_vec(),
        overlap: Vec::new(),
        gammas: Vec::with_capacity(nodes.len()),
        vectors: Vec::with_capacity(nodes.len()),
        degenerate: Vec::with_capacity(nodes.len()),
        clamped: Vec::with_capacity(nodes.len()),
    };
    for p in parts {
        let (g, v, d, c) = p?;
        basis.gammas.push(g);
        basis.vectors.push(v);
        basis.degenerate.push(d);
        basis.clamped.push(c);
    }
    basis.overlap = overlap;
    Ok(basis)
}

/// Couplings `g[a][k][q]` in the combined layout `a * N Q + k Q + q`, plain
/// and quadrature-weighted.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingTensor {
    pub n: usize,
    pub q: usize,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub g: Vec<f64>,
    pub g_weighted: Vec<f64>,
}

impl CouplingTensor {
    /// Number of photonic modes, N Q.
    pub fn modes(&self) -> usize {
        self.n * self.q
    }

    pub fn get(&self, a: usize, k: usize, q: usize) -> f64 {
        self.g[a * self.modes() + k * self.q + q]
    }

    /// Weighted coupling row of emitter `a` over the combined mode index.
    pub fn row(&self, a: usize) -> &[f64] {
        let m = self.modes();
        &self.g_weighted[a * m..(a + 1) * m]
    }

    /// Frequency of combined mode index `alpha`.
    pub fn mode_frequency(&self, alpha: usize) -> f64 {
        self.nodes[alpha % self.q]
    }

    /// Copy with every coupling set to zero.
    pub fn zeroed(&self) -> Self {
        let mut out = self.clone();
        out.g.iter_mut().for_each(|v| *v = 0.0);
        out.g_weighted.iter_mut().for_each(|v| *v = 0.0);
        out
    }

    /// 2 pi sum_k |g_ak(omega_q)|^2.
    pub fn golden_rule_rate(&self, a: usize, q: usize) -> f64 {
        2.0 * std::f64::consts::PI * (0..self.n).map(|k| self.get(a, k, q).powi(2)).sum::<f64>()
    }
}

pub fn couplings(basis: &EcmBasis, emitters: &[EmitterSpec], grid: &FrequencyGrid, norm: &Normalization) -> Result<CouplingTensor> {
    let (n, nq) = (basis.n, grid.len());
    if emitters.len() != n || basis.len() != nq {
        return Err(Error::Shape(format!(
            "basis has {n} emitters over {} nodes; got {} emitters over {nq} nodes",
            basis.len(),
            emitters.len()
        )));
    }
    let m = n * nq;
    let mut g = vec![0.0; n * m];
    let mut gw = vec![0.0; n * m];
    for q in 0..nq {
        let f = norm.factor(grid.nodes[q]);
        let sw = grid.weights[q].sqrt();
        for k in 0..n {
            let amp = f * basis.gammas[q][k].sqrt();
            for (a, e) in emitters.iter().enumerate() {
                let v = e.dipole * amp * basis.vectors[q][(a, k)];
                g[a * m + k * nq + q] = v;
                gw[a * m + k * nq + q] = sw * v;
            }
        }
    }
    Ok(CouplingTensor {
        n,
        q: nq,
        nodes: grid.nodes.clone(),
        weights: grid.weights.clone(),
        g,
        g_weighted: gw,
    })
}

/// Largest relative violation of sum_k g_ak g_bk = N^2 d_a d_b Gamma_ab at
/// node `q`, measured against N^2 d_a d_b |Gamma|.
pub fn spectral_sum_residual(c: &CouplingTensor, basis: &EcmBasis, emitters: &[EmitterSpec], norm: &Normalization, q: usize) -> f64 {
    let f2 = norm.factor(c.nodes[q]).powi(2);
    let scale = basis.overlap[q].norm();
    let mut worst = 0.0f64;
    for a in 0..c.n {
        for b in 0..c.n {
            let lhs: f64 = (0..c.n).map(|k| c.get(a, k, q) * c.get(b, k, q)).sum();
            let ref_scale = f2 * emitters[a].dipole * emitters[b].dipole;
            let rhs = ref_scale * basis.overlap[q][(a, b)];
            if scale > 0.0 {
                worst = worst.max((lhs - rhs).abs() / (ref_scale * scale));
            } else {
                worst = worst.max(lhs.abs());
            }
        }
    }
    worst
}

/// Writes `omega,k,gamma,residual` rows with 1-based channel index.
pub fn write_gamma_spectra(
    c: &CouplingTensor,
    basis: &EcmBasis,
    emitters: &[EmitterSpec],
    norm: &Normalization,
    out: impl Write,
) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(["omega", "k", "gamma", "residual"])?;
    for q in 0..basis.len() {
        let r = spectral_sum_residual(c, basis, emitters, norm, q);
        for k in 0..basis.n {
            w.write_record([
                format!("{:.16e}", basis.nodes[q]),
                (k + 1).to_string(),
                format!("{:.16e}", basis.gammas[q][k]),
                format!("{r:.6e}"),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io("<gamma spectra>", e))?;
    Ok(())
}

/// Bright-mode profiles `Phi_k(r, omega_q)` in layout `r * N Q + k Q + q`.
#[derive(Debug, Clone)]
pub struct ModeProfileSet {
    pub points: Vec<f64>,
    pub n: usize,
    pub q: usize,
    pub phi: Vec<f64>,
    /// False where some Gamma_jj(omega_q) vanished; those nodes are zeroed.
    pub usable: Vec<bool>,
}

impl ModeProfileSet {
    pub fn row(&self, r: usize) -> &[f64] {
        let m = self.n * self.q;
        &self.phi[r * m..(r + 1) * m]
    }

    /// Reconstruction vector F_alpha(r) = sqrt(w_q) Phi_k(r, omega_q).
    pub fn weighted_row(&self, r: usize, weights: &[f64]) -> Vec<f64> {
        self.row(r)
            .iter()
            .enumerate()
            .map(|(alpha, &p)| weights[alpha % self.q].sqrt() * p)
            .collect()
    }
}

/// Psi_j(r, omega) = Im G(r, R_j, omega) / Gamma_jj(omega).
pub fn localized_profile(env: &EnvironmentSpec, omega: f64, r: f64, site: f64) -> Result<f64> {
    let self_term = greens_1d(env, omega, site, site)?.im;
    if self_term < SELF_COUPLING_FLOOR {
        return Err(Error::VanishingSelfCoupling { emitter: 0, omega });
    }
    Ok(greens_1d(env, omega, r, site)?.im / self_term)
}

pub fn mode_profiles(
    env: &EnvironmentSpec,
    points: &[f64],
    positions: &[f64],
    basis: &EcmBasis,
    norm: &Normalization,
) -> Result<ModeProfileSet> {
    let (n, nq) = (basis.n, basis.len());
    if positions.len() != n {
        return Err(Error::ProfileMismatch(format!("{} positions for {n} emitters", positions.len())));
    }
    let m = n * nq;
    let columns = (0..nq)
        .into_par_iter()
        .map(|q| -> Result<Option<Vec<f64>>> {
            let omega = basis.nodes[q];
            let diag = basis.overlap[q].diagonal();
            if diag.iter().any(|&d| d < SELF_COUPLING_FLOOR) {
                return Ok(None);
            }
            let f = norm.factor(omega);
            let mut col = vec![0.0; points.len() * n];
            for (r, &x) in points.iter().enumerate() {
                let psi = positions
                    .iter()
                    .enumerate()
                    .map(|(j, &rj)| Ok(greens_1d(env, omega, x, rj)?.im / diag[j]))
                    .collect::<Result<Vec<f64>>>()?;
                for k in 0..n {
                    let s: f64 = (0..n).map(|j| basis.vectors[q][(j, k)] * psi[j]).sum();
                    col[r * n + k] = f * basis.gammas[q][k].sqrt() * s;
                }
            }
            Ok(Some(col))
        })
        .collect::<Vec<_>>();
    let mut phi = vec![0.0; points.len() * m];
    let mut usable = vec![true; nq];
    for (q, col) in columns.into_iter().enumerate() {
        match col? {
            Some(col) => {
                for r in 0..points.len() {
                    for k in 0..n {
                        phi[r * m + k * nq + q] = col[r * n + k];
                    }
                }
            }
            None => usable[q] = false,
        }
    }
    Ok(ModeProfileSet {
        points: points.to_vec(),
        n,
        q: nq,
        phi,
        usable,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::greens::{im_greens_matrix, SlabSpec};
    use crate::model::{build_grid, QuadratureRule};
    use nalgebra::dmatrix;
    use num_complex::Complex64;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn emitter(x: f64, d: f64) -> EmitterSpec {
        EmitterSpec {
            position: x,
            omega: 10.0,
            dipole: d,
            initially_excited: false,
        }
    }

    #[test]
    fn diagonal_and_exchange_symmetric() {
        let b = diagonalize_overlap(vec![dmatrix![1.0, 0.0; 0.0, 2.0]], &[1.0]).unwrap();
        assert_eq!(b.gammas[0].as_slice(), &[2.0, 1.0]);
        assert_eq!(b.vectors[0], dmatrix![0.0, 1.0; 1.0, 0.0]);

        let b = diagonalize_overlap(vec![dmatrix![3.0, 1.0; 1.0, 3.0]], &[1.0]).unwrap();
        assert!((b.gammas[0][0] - 4.0).abs() < 1e-14 && (b.gammas[0][1] - 2.0).abs() < 1e-14);
        let s = 1.0 / 2f64.sqrt();
        assert!((b.vectors[0][(0, 0)] - s).abs() < 1e-14 && (b.vectors[0][(1, 0)] - s).abs() < 1e-14);
        assert!((b.vectors[0][(0, 1)].abs() - s).abs() < 1e-14);
        assert!((b.vectors[0][(0, 1)] + b.vectors[0][(1, 1)]).abs() < 1e-14);
    }

    #[test]
    fn indefinite_is_rejected_and_noise_is_clamped() {
        let err = diagonalize_overlap(vec![dmatrix![1.0, 2.0; 2.0, 1.0]], &[1.0]).unwrap_err();
        assert!(matches!(err, Error::IndefiniteOverlap { .. }));
        let b = diagonalize_overlap(vec![dmatrix![1.0, 1.0 + 1e-13; 1.0 + 1e-13, 1.0]], &[1.0]).unwrap();
        assert_eq!(b.gammas[0][1], 0.0);
        assert_eq!(b.clamped[0], 1);
    }

    #[test]
    fn node_positions_give_vanishing_overlap() {
        let lam = 2.0 * PI / 10.0;
        let grid = build_grid(9.0, 11.0, 3, QuadratureRule::GaussLegendre).unwrap();
        let pos = [0.5 * lam, lam];
        let t = im_greens_matrix(&EnvironmentSpec::mirror_only(), &pos, &grid).unwrap();
        let ov = build_overlap(&t, &pos).unwrap();
        // middle GL node of a symmetric window is the centre frequency
        assert!(ov[1].amax() < 1e-12);
        assert!(matches!(build_overlap(&t, &[0.1]), Err(Error::MissingPosition(1))));
    }

    #[test]
    fn coincident_free_space_is_rank_one() {
        let grid = build_grid(9.0, 11.0, 4, QuadratureRule::GaussLegendre).unwrap();
        let pos = [1.0, 1.0 + 1e-9];
        let t = im_greens_matrix(&EnvironmentSpec::FreeSpace1d, &pos, &grid).unwrap();
        let b = diagonalize_overlap(t.im_g, &grid.nodes).unwrap();
        for q in 0..grid.len() {
            assert!(b.gammas[q][1] < 1e-12 * b.gammas[q][0]);
            assert!((b.gammas[q][0] - 1.0 / grid.nodes[q]).abs() < 1e-12);
        }
    }

    fn slab_setup() -> (EnvironmentSpec, FrequencyGrid, Vec<f64>, Vec<EmitterSpec>) {
        let env = EnvironmentSpec::MirroredWaveguide {
            slabs: vec![SlabSpec::new(0.9, 1.2, Complex64::new(12.0, 0.05))],
        };
        let grid = build_grid(5.0, 15.0, 24, QuadratureRule::GaussLegendre).unwrap();
        let pos = vec![0.2, 0.45, 1.5];
        let em = vec![emitter(0.2, 0.2), emitter(0.45, 0.3), emitter(1.5, 0.25)];
        (env, grid, pos, em)
    }

    #[test]
    fn basis_invariants_and_spectral_sum() {
        let (env, grid, pos, em) = slab_setup();
        let t = im_greens_matrix(&env, &pos, &grid).unwrap();
        let b = diagonalize_overlap(build_overlap(&t, &pos).unwrap(), &grid.nodes).unwrap();
        assert!(b.orthogonality_error() < 1e-12);
        assert!(b.reconstruction_error() < 1e-10);
        for g in &b.gammas {
            for k in 1..g.len() {
                assert!(g[k - 1] >= g[k] && g[k] >= 0.0);
            }
        }
        let norm = Normalization::default();
        let c = couplings(&b, &em, &grid, &norm).unwrap();
        for q in 0..grid.len() {
            assert!(spectral_sum_residual(&c, &b, &em, &norm, q) < 1e-10);
            // commutator surrogate: rows divided by the dipoles are orthogonal
            for k in 0..3 {
                for l in 0..3 {
                    let s: f64 = (0..3).map(|a| c.get(a, k, q) * c.get(a, l, q) / em[a].dipole.powi(2)).sum();
                    let expect = if k == l { norm.factor(grid.nodes[q]).powi(2) * b.gammas[q][k] } else { 0.0 };
                    assert!((s - expect).abs() < 1e-10 * norm.factor(grid.nodes[q]).powi(2) * b.gammas[q][0]);
                }
            }
        }
    }

    #[test]
    fn single_emitter_free_space_rate() {
        let grid = build_grid(5.0, 15.0, 8, QuadratureRule::GaussLegendre).unwrap();
        let t = im_greens_matrix(&EnvironmentSpec::FreeSpace1d, &[0.3], &grid).unwrap();
        let b = diagonalize_overlap(t.im_g, &grid.nodes).unwrap();
        let norm = Normalization::default();
        let c = couplings(&b, &[emitter(0.3, 0.224)], &grid, &norm).unwrap();
        for q in 0..grid.len() {
            let w = grid.nodes[q];
            let expect = 0.224f64.powi(2) * norm.factor(w).powi(2) / (2.0 * w);
            assert!((c.get(0, 0, q).powi(2) - expect).abs() < 1e-14 * expect.max(1.0));
        }
    }

    #[test]
    fn dark_channel_decouples() {
        let b = diagonalize_overlap(vec![dmatrix![1.0, 0.0; 0.0, 0.0]], &[10.0]).unwrap();
        let grid = FrequencyGrid {
            nodes: vec![10.0],
            weights: vec![1.0],
            rule: QuadratureRule::GaussLegendre,
            omega_min: 9.0,
            omega_max: 11.0,
        };
        let c = couplings(&b, &[emitter(0.0, 1.0), emitter(1.0, 1.0)], &grid, &Normalization::default()).unwrap();
        assert_eq!(c.get(0, 1, 0), 0.0);
        assert_eq!(c.get(1, 1, 0), 0.0);
    }

    #[test]
    fn profiles_self_normalize_and_dark_vanish() {
        let grid = build_grid(8.0, 12.0, 6, QuadratureRule::GaussLegendre).unwrap();
        let env = EnvironmentSpec::mirror_only();
        let x = 0.37;
        let t = im_greens_matrix(&env, &[x], &grid).unwrap();
        let b = diagonalize_overlap(t.im_g, &grid.nodes).unwrap();
        for &w in &grid.nodes {
            assert!((localized_profile(&env, w, x, x).unwrap() - 1.0).abs() < 1e-14);
        }
        let norm = Normalization::default();
        let p = mode_profiles(&env, &[x, 0.8], &[x], &b, &norm).unwrap();
        for q in 0..grid.len() {
            let expect = norm.factor(grid.nodes[q]) * b.gammas[q][0].sqrt();
            assert!((p.row(0)[q] - expect).abs() < 1e-12 * expect);
        }

        // symmetric pair in free space: bright profile is the symmetric sum
        let env = EnvironmentSpec::FreeSpace1d;
        let pos = [1.0, 1.1];
        let t = im_greens_matrix(&env, &pos, &grid).unwrap();
        let b = diagonalize_overlap(t.im_g, &grid.nodes).unwrap();
        let r = 1.43;
        let p = mode_profiles(&env, &[r], &pos, &b, &norm).unwrap();
        for q in 0..grid.len() {
            let w = grid.nodes[q];
            let psi: Vec<f64> = pos.iter().map(|&s| localized_profile(&env, w, r, s).unwrap()).collect();
            let expect = norm.factor(w) * b.gammas[q][0].sqrt() * (psi[0] + psi[1]) / 2f64.sqrt();
            assert!((p.row(0)[q] - expect).abs() < 1e-12 * expect.abs().max(1e-3));
        }
    }

    #[test]
    fn profile_nodes_with_vanishing_self_coupling_are_flagged() {
        let lam = 2.0 * PI / 10.0;
        let grid = build_grid(9.0, 11.0, 3, QuadratureRule::GaussLegendre).unwrap();
        let env = EnvironmentSpec::mirror_only();
        let pos = [0.5 * lam];
        let t = im_greens_matrix(&env, &pos, &grid).unwrap();
        let b = diagonalize_overlap(t.im_g, &grid.nodes).unwrap();
        let p = mode_profiles(&env, &[0.3], &pos, &b, &Normalization::default()).unwrap();
        assert_eq!(p.usable, vec![true, false, true]);
        assert!(matches!(
            localized_profile(&env, 10.0, 0.3, 0.5 * lam),
            Err(Error::VanishingSelfCoupling { .. })
        ));
    }

    proptest! {
        #[test]
        fn random_psd_reconstructs(entries in proptest::collection::vec(-1.0f64..1.0, 16)) {
            let a = DMatrix::from_vec(4, 4, entries);
            let m = &a * a.transpose();
            let b = diagonalize_overlap(vec![m], &[1.0]).unwrap();
            prop_assert!(b.reconstruction_error() < 1e-10);
            prop_assert!(b.orthogonality_error() < 1e-12);
        }
    }
}
