//! Scalar 1D Green's functions for free space and for a semi-infinite
//! waveguide closed by a perfect mirror at x = 0, optionally loaded with
//! piecewise-constant lossy slabs.
//!
//! The mirrored case uses the two-solution Wronskian construction
//! `G(x, x') = -phi_L(x_<) phi_R(x_>) / W` where `phi_L` vanishes at the
//! mirror and `phi_R` is outgoing to the right. Both are carried across slab
//! interfaces with 2x2 transfer matrices acting on `(phi, phi')`, which keeps
//! `phi` and `phi'` continuous by construction.

use std::io::Write;
use std::path::Path;

use log::warn;
use nalgebra::{DMatrix, Matrix2, SymmetricEigen, Vector2};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::FrequencyGrid;

/// Below this |k| the transfer matrix switches to its k -> 0 limit.
pub const SINGULAR_WAVENUMBER: f64 = 1e-14;
/// Relative floor on |W| against |phi_L| |phi_R'|.
pub const WRONSKIAN_FLOOR: f64 = 1e-12;
/// Negative eigenvalues of Im G above -PSD_TOLERANCE * max(diag) are noise.
pub const PSD_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlabSpec {
    pub x1: f64,
    pub x2: f64,
    pub eps: C64,
}

impl SlabSpec {
    pub fn new(x1: f64, x2: f64, eps: C64) -> Self {
        Self { x1, x2, eps }
    }

    pub fn wavenumber(&self, omega: f64) -> C64 {
        omega * self.eps.sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EnvironmentSpec {
    #[serde(rename = "free-space-1d")]
    FreeSpace1d,
    /// Dirichlet mirror at x = 0; slabs must be disjoint and sorted.
    MirroredWaveguide { slabs: Vec<SlabSpec> },
    /// Spectra supplied externally; see [`load_tabulated`].
    Tabulated,
}

impl EnvironmentSpec {
    pub fn mirror_only() -> Self {
        EnvironmentSpec::MirroredWaveguide { slabs: Vec::new() }
    }

    pub fn name(&self) -> &'static str {
        match self {
            EnvironmentSpec::FreeSpace1d => "free-space-1d",
            EnvironmentSpec::MirroredWaveguide { .. } => "mirrored-waveguide",
            EnvironmentSpec::Tabulated => "tabulated",
        }
    }

    /// Local wavenumber k(x) = omega sqrt(eps(x)).
    pub fn wavenumber_at(&self, omega: f64, x: f64) -> C64 {
        if let EnvironmentSpec::MirroredWaveguide { slabs } = self {
            for s in slabs {
                if x >= s.x1 && x <= s.x2 {
                    return s.wavenumber(omega);
                }
            }
        }
        C64::new(omega, 0.0)
    }
}

pub type Transfer = Matrix2<C64>;

/// Propagator of `(phi, phi')` across a homogeneous layer of thickness `d`.
pub fn transfer_matrix(k: C64, d: f64) -> Transfer {
    if k.norm() < SINGULAR_WAVENUMBER {
        return Transfer::new(C64::new(1.0, 0.0), C64::new(d, 0.0), C64::new(0.0, 0.0), C64::new(1.0, 0.0));
    }
    let kd = k * d;
    let (s, c) = (kd.sin(), kd.cos());
    Transfer::new(c, s / k, -k * s, c)
}

/// Backward propagator, the inverse of [`transfer_matrix`] (unit determinant).
fn transfer_inverse(k: C64, d: f64) -> Transfer {
    let t = transfer_matrix(k, d);
    Transfer::new(t[(1, 1)], -t[(0, 1)], -t[(1, 0)], t[(0, 0)])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomogeneousSolutions {
    pub phi_l: C64,
    pub dphi_l: C64,
    pub phi_r: C64,
    pub dphi_r: C64,
}

impl HomogeneousSolutions {
    pub fn wronskian(&self) -> C64 {
        self.phi_l * self.dphi_r - self.dphi_l * self.phi_r
    }
}

/// Region boundaries `[0, x1, x2, ...]` with the wavenumber of each region
/// to the right of the boundary.
fn layers(slabs: &[SlabSpec], omega: f64) -> Vec<(f64, C64)> {
    let k0 = C64::new(omega, 0.0);
    let mut out = vec![(0.0, k0)];
    for s in slabs {
        out.push((s.x1, s.wavenumber(omega)));
        out.push((s.x2, k0));
    }
    out
}

fn left_solution(slabs: &[SlabSpec], omega: f64, x: f64) -> Vector2<C64> {
    let mut u = Vector2::new(C64::new(0.0, 0.0), C64::new(1.0, 0.0));
    let layers = layers(slabs, omega);
    for (i, &(start, k)) in layers.iter().enumerate() {
        let end = layers.get(i + 1).map_or(f64::INFINITY, |l| l.0);
        if x <= end {
            return transfer_matrix(k, x - start) * u;
        }
        u = transfer_matrix(k, end - start) * u;
    }
    u
}

fn right_solution(slabs: &[SlabSpec], omega: f64, x: f64) -> Vector2<C64> {
    let k0 = C64::new(omega, 0.0);
    let layers = layers(slabs, omega);
    let x_right = layers.last().map_or(0.0, |l| l.0);
    let outgoing = |x: f64| {
        let e = (C64::i() * k0 * x).exp();
        Vector2::new(e, C64::i() * k0 * e)
    };
    if x >= x_right {
        return outgoing(x);
    }
    let mut u = outgoing(x_right);
    let mut end = x_right;
    for &(start, k) in layers.iter().rev().skip(1) {
        if x >= start {
            return transfer_inverse(k, end - x) * u;
        }
        u = transfer_inverse(k, end - start) * u;
        end = start;
    }
    u
}

pub fn homogeneous_solutions(env: &EnvironmentSpec, omega: f64, x: f64) -> Result<HomogeneousSolutions> {
    let EnvironmentSpec::MirroredWaveguide { slabs } = env else {
        return Err(Error::UnsupportedEnvironment(env.name()));
    };
    if !(omega > 0.0) {
        return Err(Error::InvalidFrequency(omega));
    }
    let l = left_solution(slabs, omega, x);
    let r = right_solution(slabs, omega, x);
    Ok(HomogeneousSolutions {
        phi_l: l[0],
        dphi_l: l[1],
        phi_r: r[0],
        dphi_r: r[1],
    })
}

/// Wronskian evaluated to the right of every slab, with a degeneracy check.
fn checked_wronskian(slabs: &[SlabSpec], omega: f64) -> Option<C64> {
    let x_ref = slabs.last().map_or(0.0, |s| s.x2).max(1.0 / omega);
    let l = left_solution(slabs, omega, x_ref);
    let r = right_solution(slabs, omega, x_ref);
    let w = l[0] * r[1] - l[1] * r[0];
    (w.norm() >= WRONSKIAN_FLOOR * l[0].norm() * r[1].norm()).then_some(w)
}

fn mirrored_greens(slabs: &[SlabSpec], omega: f64, x: f64, xp: f64) -> Result<C64> {
    let (lo, hi) = if x <= xp { (x, xp) } else { (xp, x) };
    let mut w = omega;
    let mut wr = checked_wronskian(slabs, w);
    if wr.is_none() {
        w = omega * (1.0 + 1e-9);
        wr = checked_wronskian(slabs, w);
    }
    let Some(wr) = wr else {
        return Err(Error::DegenerateWronskian {
            omega,
            magnitude: checked_wronskian_magnitude(slabs, omega),
        });
    };
    let l = left_solution(slabs, w, lo);
    let r = right_solution(slabs, w, hi);
    Ok(-l[0] * r[0] / wr)
}

fn checked_wronskian_magnitude(slabs: &[SlabSpec], omega: f64) -> f64 {
    let x_ref = slabs.last().map_or(0.0, |s| s.x2).max(1.0 / omega);
    let l = left_solution(slabs, omega, x_ref);
    let r = right_solution(slabs, omega, x_ref);
    (l[0] * r[1] - l[1] * r[0]).norm()
}

pub fn greens_1d(env: &EnvironmentSpec, omega: f64, x: f64, xp: f64) -> Result<C64> {
    if !(omega > 0.0) {
        return Err(Error::InvalidFrequency(omega));
    }
    match env {
        EnvironmentSpec::FreeSpace1d => {
            let k = omega;
            Ok(C64::i() * (C64::i() * k * (x - xp).abs()).exp() / (2.0 * k))
        }
        EnvironmentSpec::MirroredWaveguide { slabs } => mirrored_greens(slabs, omega, x, xp),
        EnvironmentSpec::Tabulated => Err(Error::UnsupportedEnvironment("tabulated")),
    }
}

/// Sampled Im G(x_i, x_j, omega_q) at a set of positions.
#[derive(Debug, Clone, PartialEq)]
pub struct GreensTable {
    /// Physical coordinates; NaN for tables loaded without coordinates.
    pub positions: Vec<f64>,
    pub frequencies: Vec<f64>,
    pub im_g: Vec<DMatrix<f64>>,
    /// Smallest eigenvalue of each matrix before clamping.
    pub min_eigenvalues: Vec<f64>,
}

impl GreensTable {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn with_positions(mut self, positions: &[f64]) -> Result<Self> {
        if positions.len() != self.positions.len() {
            return Err(Error::Shape(format!(
                "table has {} sites, {} positions given",
                self.positions.len(),
                positions.len()
            )));
        }
        self.positions = positions.to_vec();
        Ok(self)
    }

    /// Index of `x` among the table positions.
    pub fn position_index(&self, x: f64) -> Option<usize> {
        let scale = x.abs().max(1.0);
        self.positions.iter().position(|&p| (p - x).abs() <= 1e-12 * scale)
    }

    /// Restricts the table to the given site indices, in order.
    pub fn select(&self, sites: &[usize]) -> GreensTable {
        let im_g = self
            .im_g
            .iter()
            .map(|m| DMatrix::from_fn(sites.len(), sites.len(), |i, j| m[(sites[i], sites[j])]))
            .collect::<Vec<_>>();
        let min_eigenvalues = im_g.iter().map(min_eigenvalue).collect();
        GreensTable {
            positions: sites.iter().map(|&s| self.positions[s]).collect(),
            frequencies: self.frequencies.clone(),
            im_g,
            min_eigenvalues,
        }
    }
}

fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(m.clone()).eigenvalues.min()
}

fn max_diagonal(m: &DMatrix<f64>) -> f64 {
    m.diagonal().iter().fold(0.0f64, |a, &b| a.max(b.abs()))
}

/// Symmetrizes, records the minimum eigenvalue and clamps small negative
/// eigenvalues to zero.
fn finish_matrix(mut m: DMatrix<f64>, omega: f64) -> (DMatrix<f64>, f64) {
    let mt = m.transpose();
    m = (&m + &mt) * 0.5;
    if m.nrows() == 0 {
        return (m, 0.0);
    }
    let eig = SymmetricEigen::new(m.clone());
    let min = eig.eigenvalues.min();
    let tol = PSD_TOLERANCE * max_diagonal(&m);
    if min < -tol {
        warn!("Im G at omega = {omega} is indefinite: min eigenvalue {min:e} (tolerance {tol:e})");
    } else if min < -64.0 * f64::EPSILON * max_diagonal(&m) {
        // roundoff-level negatives are left alone so that re-exporting a
        // loaded table reproduces it exactly
        let clamped = eig.eigenvalues.map(|v| v.max(0.0));
        let v = &eig.eigenvectors;
        let mut r = v * DMatrix::from_diagonal(&clamped) * v.transpose();
        let rt = r.transpose();
        r = (&r + &rt) * 0.5;
        return (r, min);
    }
    (m, min)
}

pub fn im_greens_matrix(env: &EnvironmentSpec, positions: &[f64], grid: &FrequencyGrid) -> Result<GreensTable> {
    let n = positions.len();
    let per_freq: Vec<Result<(DMatrix<f64>, f64)>> = grid
        .nodes
        .par_iter()
        .map(|&omega| {
            let mut m = DMatrix::zeros(n, n);
            for i in 0..n {
                for j in i..n {
                    let g = greens_1d(env, omega, positions[i], positions[j]).map_err(|e| Error::GreensAt {
                        omega,
                        i,
                        j,
                        source: Box::new(e),
                    })?;
                    m[(i, j)] = g.im;
                    m[(j, i)] = g.im;
                }
            }
            Ok(finish_matrix(m, omega))
        })
        .collect();
    let mut im_g = Vec::with_capacity(grid.len());
    let mut min_eigenvalues = Vec::with_capacity(grid.len());
    for r in per_freq {
        let (m, e) = r?;
        im_g.push(m);
        min_eigenvalues.push(e);
    }
    Ok(GreensTable {
        positions: positions.to_vec(),
        frequencies: grid.nodes.clone(),
        im_g,
        min_eigenvalues,
    })
}

pub const TABLE_HEADER: [&str; 4] = ["omega", "i", "j", "im_g"];

/// Writes the table as `omega,i,j,im_g` rows sorted by (omega, i, j), with
/// 1-based site indices and 17 significant digits.
pub fn write_tabulated(table: &GreensTable, out: impl Write) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(TABLE_HEADER)?;
    for (omega, m) in table.frequencies.iter().zip(&table.im_g) {
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                w.write_record([
                    format!("{omega:.16e}"),
                    (i + 1).to_string(),
                    (j + 1).to_string(),
                    format!("{:.16e}", m[(i, j)]),
                ])?;
            }
        }
    }
    w.flush().map_err(|e| Error::io("<table>", e))?;
    Ok(())
}

pub fn save_tabulated(table: &GreensTable, path: &Path) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_tabulated(table, std::io::BufWriter::new(f))
}

/// Loads a tabulated Im G spectrum and resamples it onto the grid nodes by
/// monotone cubic interpolation in omega.
pub fn load_tabulated(path: &Path, grid: &FrequencyGrid) -> Result<GreensTable> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let headers = rdr.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    if headers.iter().collect::<Vec<_>>() != TABLE_HEADER {
        return Err(parse_err(1, format!("expected header {:?}, found {:?}", TABLE_HEADER.join(","), headers)));
    }
    let mut rows: Vec<(f64, usize, usize, f64)> = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| parse_err(line, e.to_string()))?;
        if rec.len() != 4 {
            return Err(parse_err(line, format!("expected 4 fields, found {}", rec.len())));
        }
        let f = |idx: usize| -> Result<f64> {
            rec[idx].trim().parse::<f64>().map_err(|e| parse_err(line, format!("column {}: {e}", TABLE_HEADER[idx])))
        };
        let u = |idx: usize| -> Result<usize> {
            let v = rec[idx].trim().parse::<usize>().map_err(|e| parse_err(line, format!("column {}: {e}", TABLE_HEADER[idx])))?;
            if v == 0 {
                return Err(parse_err(line, "site indices are 1-based".into()));
            }
            Ok(v - 1)
        };
        rows.push((f(0)?, u(1)?, u(2)?, f(3)?));
    }
    if rows.is_empty() {
        return Err(parse_err(1, "no data rows".into()));
    }
    let n = rows.iter().map(|r| r.1.max(r.2)).max().unwrap() + 1;
    let mut omegas: Vec<f64> = Vec::new();
    for r in &rows {
        if omegas.last() != Some(&r.0) {
            if let Some(&last) = omegas.last() {
                if r.0 < last {
                    return Err(parse_err(0, "rows are not sorted by omega".into()));
                }
            }
            omegas.push(r.0);
        }
    }
    let nw = omegas.len();
    let mut values = vec![f64::NAN; nw * n * n];
    let mut wi = 0;
    for r in &rows {
        while omegas[wi] != r.0 {
            wi += 1;
        }
        values[(wi * n + r.1) * n + r.2] = r.3;
    }
    // fill from the transpose where only one triangle is given
    for w in 0..nw {
        for i in 0..n {
            for j in 0..n {
                let a = (w * n + i) * n + j;
                if values[a].is_nan() {
                    let b = (w * n + j) * n + i;
                    if values[b].is_nan() {
                        return Err(parse_err(0, format!("missing entry ({}, {}) at omega = {}", i + 1, j + 1, omegas[w])));
                    }
                    values[a] = values[b];
                }
            }
        }
    }

    let (tmin, tmax) = (omegas[0], omegas[nw - 1]);
    let (gmin, gmax) = (grid.nodes[0], grid.nodes[grid.len() - 1]);
    let slack = 1e-12 * gmax.abs();
    if gmin < tmin - slack || gmax > tmax + slack || nw < 2 {
        return Err(Error::Coverage {
            table_min: tmin,
            table_max: tmax,
            grid_min: gmin,
            grid_max: gmax,
        });
    }

    let mut mats = vec![DMatrix::zeros(n, n); grid.len()];
    for i in 0..n {
        for j in 0..n {
            let ys: Vec<f64> = (0..nw).map(|w| values[(w * n + i) * n + j]).collect();
            let interp = MonotoneCubic::new(&omegas, &ys);
            for (q, &omega) in grid.nodes.iter().enumerate() {
                mats[q][(i, j)] = interp.eval(omega.clamp(tmin, tmax));
            }
        }
    }
    let mut im_g = Vec::with_capacity(grid.len());
    let mut min_eigenvalues = Vec::with_capacity(grid.len());
    for (m, &omega) in mats.into_iter().zip(&grid.nodes) {
        let (m, e) = finish_matrix(m, omega);
        im_g.push(m);
        min_eigenvalues.push(e);
    }
    Ok(GreensTable {
        positions: vec![f64::NAN; n],
        frequencies: grid.nodes.clone(),
        im_g,
        min_eigenvalues,
    })
}

/// Fritsch-Carlson monotone piecewise-cubic Hermite interpolant.
struct MonotoneCubic<'a> {
    x: &'a [f64],
    y: Vec<f64>,
    m: Vec<f64>,
}

impl<'a> MonotoneCubic<'a> {
    fn new(x: &'a [f64], y: &[f64]) -> Self {
        let n = x.len();
        let d: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / (x[i + 1] - x[i])).collect();
        let mut m = vec![0.0; n];
        m[0] = d[0];
        m[n - 1] = d[n - 2];
        for i in 1..n - 1 {
            m[i] = if d[i - 1] * d[i] <= 0.0 { 0.0 } else { 0.5 * (d[i - 1] + d[i]) };
        }
        for i in 0..n - 1 {
            if d[i] == 0.0 {
                m[i] = 0.0;
                m[i + 1] = 0.0;
            } else {
                let a = m[i] / d[i];
                let b = m[i + 1] / d[i];
                let s = a * a + b * b;
                if s > 9.0 {
                    let t = 3.0 / s.sqrt();
                    m[i] = t * a * d[i];
                    m[i + 1] = t * b * d[i];
                }
            }
        }
        Self { x, y: y.to_vec(), m }
    }

    fn eval(&self, t: f64) -> f64 {
        let n = self.x.len();
        let k = match self.x.binary_search_by(|v| v.partial_cmp(&t).unwrap()) {
            Ok(k) => return self.y[k],
            Err(0) => 0,
            Err(k) if k >= n => n - 2,
            Err(k) => k - 1,
        };
        let h = self.x[k + 1] - self.x[k];
        let s = (t - self.x[k]) / h;
        let (s2, s3) = (s * s, s * s * s);
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        h00 * self.y[k] + h10 * h * self.m[k] + h01 * self.y[k + 1] + h11 * h * self.m[k + 1]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_grid, QuadratureRule};
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn one_slab() -> EnvironmentSpec {
        EnvironmentSpec::MirroredWaveguide {
            slabs: vec![SlabSpec::new(0.9, 1.6, c(12.0, 0.05))],
        }
    }

    #[test]
    fn transfer_identity_and_half_wave() {
        let t = transfer_matrix(c(2.0, 0.0), 0.0);
        assert_eq!(t, Transfer::identity());
        let t = transfer_matrix(c(1.0, 0.0), PI);
        let expect = -Transfer::identity();
        assert!((t - expect).norm() < 1e-15);
    }

    #[test]
    fn transfer_small_k_limit() {
        let t = transfer_matrix(c(1e-16, 0.0), 0.7);
        assert_eq!(t[(0, 1)], c(0.7, 0.0));
        assert_eq!(t[(1, 0)], c(0.0, 0.0));
    }

    #[test]
    fn dirichlet_and_vacuum_closed_form() {
        let env = EnvironmentSpec::mirror_only();
        let h = homogeneous_solutions(&env, 2.0 * PI, 0.0).unwrap();
        assert_eq!(h.phi_l, c(0.0, 0.0));
        let h = homogeneous_solutions(&env, 2.0 * PI, 0.25).unwrap();
        assert!((h.phi_l - c(1.0 / (2.0 * PI), 0.0)).norm() < 1e-15);
        assert!(matches!(homogeneous_solutions(&env, 0.0, 0.1), Err(Error::InvalidFrequency(_))));
    }

    #[test]
    fn interface_continuity() {
        let env = one_slab();
        let EnvironmentSpec::MirroredWaveguide { slabs } = &env else { unreachable!() };
        let omega = 9.3;
        for x in [slabs[0].x1, slabs[0].x2] {
            let eps = 1e-13;
            for f in [left_solution, right_solution] {
                let a = f(slabs, omega, x - eps);
                let b = f(slabs, omega, x + eps);
                for i in 0..2 {
                    let scale = a[i].norm().max(b[i].norm());
                    assert!((a[i] - b[i]).norm() <= 1e-10 * scale.max(1.0), "x = {x}, comp {i}");
                }
            }
        }
    }

    #[test]
    fn mirrored_closed_form() {
        let env = EnvironmentSpec::mirror_only();
        for &(omega, x, xp) in &[(10.0, 0.3, 0.7), (7.5, 1.1, 0.2), (12.0, 0.05, 2.0)] {
            let g = greens_1d(&env, omega, x, xp).unwrap();
            let (lo, hi) = (f64::min(x, xp), f64::max(x, xp));
            let im = (omega * lo).sin() * (omega * hi).sin() / omega;
            assert!((g.im - im).abs() <= 1e-10 * im.abs().max(1e-3), "{} vs {}", g.im, im);
        }
        assert_eq!(greens_1d(&env, 10.0, 0.0, 0.4).unwrap(), c(0.0, 0.0));
        // nodes of omega_a = 10 at 0.5 lambda and 1.0 lambda
        let lam = 2.0 * PI / 10.0;
        assert!(greens_1d(&env, 10.0, 0.5 * lam, 0.5 * lam).unwrap().im.abs() < 1e-12);
        assert!(greens_1d(&env, 10.0, 0.5 * lam, 1.0 * lam).unwrap().im.abs() < 1e-12);
    }

    #[test]
    fn free_space_self_term() {
        let g = greens_1d(&EnvironmentSpec::FreeSpace1d, 4.0, 1.0, 1.0).unwrap();
        assert!((g.im - 1.0 / 8.0).abs() < 1e-15);
    }

    #[test]
    fn reciprocity_is_exact() {
        let env = one_slab();
        let a = greens_1d(&env, 11.0, 0.4, 2.2).unwrap();
        let b = greens_1d(&env, 11.0, 2.2, 0.4).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn wronskian_is_constant() {
        let env = EnvironmentSpec::MirroredWaveguide {
            slabs: vec![SlabSpec::new(0.5, 0.8, c(4.0, 0.3)), SlabSpec::new(1.2, 1.25, c(12.0, 0.0))],
        };
        for omega in [6.0, 10.0, 14.5] {
            let ws: Vec<C64> = [0.1, 0.6, 1.0, 1.22, 3.0]
                .iter()
                .map(|&x| homogeneous_solutions(&env, omega, x).unwrap().wronskian())
                .collect();
            for w in &ws {
                assert!((w - ws[0]).norm() <= 1e-10 * ws[0].norm());
            }
        }
    }

    #[test]
    fn table_symmetry_and_free_space_entries() {
        let grid = build_grid(5.0, 15.0, 16, QuadratureRule::GaussLegendre).unwrap();
        let t = im_greens_matrix(&EnvironmentSpec::FreeSpace1d, &[0.3], &grid).unwrap();
        for (m, &w) in t.im_g.iter().zip(&grid.nodes) {
            assert!((m[(0, 0)] - 1.0 / (2.0 * w)).abs() < 1e-15);
        }
        let t = im_greens_matrix(&one_slab(), &[0.2, 0.5, 1.3, 2.0], &grid).unwrap();
        for m in &t.im_g {
            assert_eq!((m - m.transpose()).norm(), 0.0);
        }
    }

    #[test]
    fn monotone_cubic_hits_nodes_and_keeps_monotonicity() {
        let x = [0.0, 1.0, 2.0, 3.0, 4.0];
        let y = [0.0, 0.1, 0.1, 2.0, 2.1];
        let p = MonotoneCubic::new(&x, &y);
        for i in 0..5 {
            assert_eq!(p.eval(x[i]), y[i]);
        }
        let mut prev = -1.0;
        for k in 0..=400 {
            let v = p.eval(k as f64 * 0.01);
            assert!(v >= prev - 1e-15);
            prev = v;
        }
    }
}
