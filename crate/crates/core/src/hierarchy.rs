//! Two-excitation amplitude hierarchy (C, B, D sectors) and its fixed-step
//! RK4 integration, plus the single-excitation reduction.
//!
//! Photonic modes use the combined index `alpha = k * Q + q` and the
//! quadrature-weighted amplitudes `B~ = sqrt(w) B`, `D~ = sqrt(w w') D`.
//! The generator is shifted by `frame` per excitation. Every sector carries
//! exactly two quanta, so the shift is a global phase `exp(-2 i frame t)`
//! and leaves all populations and coherences untouched while keeping the
//! integrated frequencies small.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::ecm::CouplingTensor;
use crate::error::{Error, Result};
use crate::model::{EmitterSpec, STEP_GUARD};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialState {
    /// |e_a e_b> with 1-based emitter indices.
    PairExcited { pair: [usize; 2] },
    /// Pattern such as "eeg" or "110" with exactly two excitations.
    NamedProduct { pattern: String },
    /// (|eeg> + |ege> + |gee>) / sqrt(3).
    DickeWbar,
    /// Explicit [re, im] amplitudes for pairs (1,2), (1,3), ..., (N-1,N).
    CustomC { amplitudes: Vec<[f64; 2]> },
    /// The two emitters flagged `initially_excited`.
    FromEmitters,
}

/// Position of pair (a, b), a < b, in the lexicographic pair order.
pub fn pair_index(n: usize, a: usize, b: usize) -> usize {
    debug_assert!(a < b && b < n);
    a * (2 * n - a - 1) / 2 + (b - a - 1)
}

pub fn pair_count(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

impl InitialState {
    pub fn validate(&self, n: usize, emitters: &[EmitterSpec]) -> Result<()> {
        self.pair_amplitudes(n, emitters).map(|_| ())
    }

    pub fn pair_amplitudes(&self, n: usize, emitters: &[EmitterSpec]) -> Result<Vec<C64>> {
        let bad = |m: String| Err(Error::InvalidKind(m));
        if n < 2 {
            return bad(format!("two-excitation states need N >= 2, got {n}"));
        }
        let mut c = vec![C64::new(0.0, 0.0); pair_count(n)];
        let from_flags = |flags: Vec<bool>| -> Result<Vec<C64>> {
            let on: Vec<usize> = flags.iter().enumerate().filter(|f| *f.1).map(|f| f.0).collect();
            if on.len() != 2 {
                return Err(Error::InvalidKind(format!("{} excited emitters, need exactly 2", on.len())));
            }
            let mut c = vec![C64::new(0.0, 0.0); pair_count(n)];
            c[pair_index(n, on[0], on[1])] = C64::new(1.0, 0.0);
            Ok(c)
        };
        match self {
            InitialState::PairExcited { pair: [a, b] } => {
                if *a == 0 || *b == 0 || *a > n || *b > n || a == b {
                    return bad(format!("pair ({a}, {b}) is not two distinct emitters in 1..={n}"));
                }
                let (a, b) = (a.min(b) - 1, a.max(b) - 1);
                c[pair_index(n, a, b)] = C64::new(1.0, 0.0);
                Ok(c)
            }
            InitialState::NamedProduct { pattern } => {
                if pattern.chars().count() != n {
                    return bad(format!("pattern {pattern:?} has length != {n}"));
                }
                let flags = pattern
                    .chars()
                    .map(|ch| match ch {
                        'e' | '1' => Ok(true),
                        'g' | '0' => Ok(false),
                        _ => Err(Error::InvalidKind(format!("pattern {pattern:?}: use e/g or 1/0"))),
                    })
                    .collect::<Result<Vec<_>>>()?;
                from_flags(flags)
            }
            InitialState::DickeWbar => {
                if n != 3 {
                    return bad(format!("dicke-wbar needs N = 3, got {n}"));
                }
                Ok(vec![C64::new(1.0 / 3f64.sqrt(), 0.0); 3])
            }
            InitialState::CustomC { amplitudes } => {
                if amplitudes.len() != c.len() {
                    return bad(format!("custom-c needs {} amplitudes, got {}", c.len(), amplitudes.len()));
                }
                let c: Vec<C64> = amplitudes.iter().map(|&[re, im]| C64::new(re, im)).collect();
                let norm: f64 = c.iter().map(|z| z.norm_sqr()).sum();
                if (norm - 1.0).abs() > 1e-10 {
                    return bad(format!("custom-c amplitudes have norm {norm}, need 1"));
                }
                Ok(c)
            }
            InitialState::FromEmitters => {
                if emitters.len() != n {
                    return bad("emitter list does not match N".into());
                }
                from_flags(emitters.iter().map(|e| e.initially_excited).collect())
            }
        }
    }
}

/// Sector amplitudes at time `t`. `d_re`/`d_im` hold the dense (N Q)^2
/// two-photon matrix row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct HierarchyState {
    pub n: usize,
    pub modes: usize,
    pub t: f64,
    pub c: Vec<C64>,
    pub b: Vec<C64>,
    pub d_re: Vec<f64>,
    pub d_im: Vec<f64>,
}

impl HierarchyState {
    pub fn zeros(n: usize, modes: usize) -> Self {
        Self {
            n,
            modes,
            t: 0.0,
            c: vec![C64::new(0.0, 0.0); pair_count(n)],
            b: vec![C64::new(0.0, 0.0); n * modes],
            d_re: vec![0.0; modes * modes],
            d_im: vec![0.0; modes * modes],
        }
    }

    /// C_ab with the symmetric read C_ba = C_ab; zero on the diagonal.
    pub fn c_at(&self, a: usize, b: usize) -> C64 {
        match a.cmp(&b) {
            std::cmp::Ordering::Less => self.c[pair_index(self.n, a, b)],
            std::cmp::Ordering::Greater => self.c[pair_index(self.n, b, a)],
            std::cmp::Ordering::Equal => C64::new(0.0, 0.0),
        }
    }

    pub fn b_row(&self, a: usize) -> &[C64] {
        &self.b[a * self.modes..(a + 1) * self.modes]
    }

    pub fn d_at(&self, alpha: usize, beta: usize) -> C64 {
        let i = alpha * self.modes + beta;
        C64::new(self.d_re[i], self.d_im[i])
    }

    pub fn p_c(&self) -> f64 {
        self.c.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn p_b(&self) -> f64 {
        self.b.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Squared Frobenius norm of D~.
    pub fn d_norm_sqr(&self) -> f64 {
        self.d_re.iter().zip(&self.d_im).map(|(r, i)| r * r + i * i).sum()
    }

    pub fn p_d(&self) -> f64 {
        0.5 * self.d_norm_sqr()
    }

    pub fn total_norm(&self) -> f64 {
        self.p_c() + self.p_b() + self.p_d()
    }

    /// |D~ - D~^T|_F / |D~|_F, zero for an empty two-photon sector.
    pub fn asymmetry(&self) -> f64 {
        let m = self.modes;
        let mut diff = 0.0;
        for i in 0..m {
            for j in i + 1..m {
                let (u, v) = (i * m + j, j * m + i);
                let dr = self.d_re[u] - self.d_re[v];
                let di = self.d_im[u] - self.d_im[v];
                diff += 2.0 * (dr * dr + di * di);
            }
        }
        let total = self.d_norm_sqr();
        if total == 0.0 {
            0.0
        } else {
            (diff / total).sqrt()
        }
    }

    /// Amplitudes in the unshifted frame: multiplies every sector by
    /// exp(-2 i frame t).
    pub fn to_lab_frame(&self, frame: f64) -> HierarchyState {
        let ph = C64::new(0.0, -2.0 * frame * self.t).exp();
        let mut out = self.clone();
        out.c.iter_mut().for_each(|z| *z *= ph);
        out.b.iter_mut().for_each(|z| *z *= ph);
        for (r, i) in out.d_re.iter_mut().zip(out.d_im.iter_mut()) {
            let z = C64::new(*r, *i) * ph;
            *r = z.re;
            *i = z.im;
        }
        out
    }
}

pub fn init_state(kind: &InitialState, emitters: &[EmitterSpec], modes: usize) -> Result<HierarchyState> {
    let n = emitters.len();
    let mut s = HierarchyState::zeros(n, modes);
    s.c = kind.pair_amplitudes(n, emitters)?;
    Ok(s)
}


/// Scratch buffers for [`Hierarchy::step`]; reuse across steps.
#[derive(Debug, Clone)]
pub struct Workspace {
    b_re: Vec<f64>,
    b_im: Vec<f64>,
    k_re: Vec<f64>,
    k_im: Vec<f64>,
    mv_re: Vec<f64>,
    mv_im: Vec<f64>,
    stage_c: Vec<C64>,
    stage_b: Vec<C64>,
    stage_re: Vec<f64>,
    stage_im: Vec<f64>,
    kc: Vec<C64>,
    kb: Vec<C64>,
}

impl Workspace {
    pub fn new(n: usize, m: usize) -> Self {
        let z = C64::new(0.0, 0.0);
        Self {
            b_re: vec![0.0; n * m],
            b_im: vec![0.0; n * m],
            k_re: vec![0.0; m],
            k_im: vec![0.0; m],
            mv_re: vec![0.0; n * m],
            mv_im: vec![0.0; n * m],
            stage_c: vec![z; pair_count(n)],
            stage_b: vec![z; n * m],
            stage_re: vec![0.0; m * m],
            stage_im: vec![0.0; m * m],
            kc: vec![z; pair_count(n)],
            kb: vec![z; n * m],
        }
    }
}

fn split(b: &[C64], re: &mut [f64], im: &mut [f64]) {
    for ((z, r), i) in b.iter().zip(re.iter_mut()).zip(im.iter_mut()) {
        *r = z.re;
        *i = z.im;
    }
}

/// Dot product with four independent partial sums, combined in a fixed
/// order so results do not depend on scheduling.
#[inline]
fn dot(x: &[f64], y: &[f64]) -> f64 {
    let mut s = [0.0; 4];
    let (xc, yc) = (x.chunks_exact(4), y.chunks_exact(4));
    let (xr, yr) = (xc.remainder(), yc.remainder());
    for (a, b) in xc.zip(yc) {
        for l in 0..4 {
            s[l] += a[l] * b[l];
        }
    }
    for (a, b) in xr.iter().zip(yr) {
        s[0] += a * b;
    }
    (s[0] + s[1]) + (s[2] + s[3])
}

fn c_sym(c: &[C64], n: usize, a: usize, b: usize) -> C64 {
    match a.cmp(&b) {
        std::cmp::Ordering::Less => c[pair_index(n, a, b)],
        std::cmp::Ordering::Greater => c[pair_index(n, b, a)],
        std::cmp::Ordering::Equal => C64::new(0.0, 0.0),
    }
}

/// Fixed-step RK4 integrator for the hierarchy.
#[derive(Debug, Clone)]
pub struct Hierarchy {
    n: usize,
    m: usize,
    /// Weighted coupling rows, `g[a * m + alpha]`.
    g: Vec<f64>,
    /// omega_a - frame.
    eps: Vec<f64>,
    /// omega_alpha - frame.
    e: Vec<f64>,
    frame: f64,
    omega_max: f64,
}

impl Hierarchy {
    pub fn new(couplings: &CouplingTensor, emitters: &[EmitterSpec], frame: f64) -> Result<Self> {
        let n = couplings.n;
        if emitters.len() != n {
            return Err(Error::Shape(format!("{} emitters for a {n}-emitter coupling tensor", emitters.len())));
        }
        let m = couplings.modes();
        let omega_max = couplings
            .nodes
            .iter()
            .copied()
            .chain(emitters.iter().map(|e| e.omega))
            .fold(0.0, f64::max);
        Ok(Self {
            n,
            m,
            g: couplings.g_weighted.clone(),
            eps: emitters.iter().map(|e| e.omega - frame).collect(),
            e: (0..m).map(|al| couplings.mode_frequency(al) - frame).collect(),
            frame,
            omega_max,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn modes(&self) -> usize {
        self.m
    }

    pub fn frame(&self) -> f64 {
        self.frame
    }

    pub fn workspace(&self) -> Workspace {
        Workspace::new(self.n, self.m)
    }

    /// Largest step allowed by the stability guard.
    pub fn step_limit(&self) -> f64 {
        STEP_GUARD / self.omega_max
    }

    pub fn check_step(&self, dt: f64, allow_large_step: bool) -> Result<()> {
        if !(dt > 0.0) || (!allow_large_step && dt > self.step_limit()) {
            return Err(Error::StepTooLarge {
                dt,
                limit: self.step_limit(),
            });
        }
        Ok(())
    }

    fn g_row(&self, a: usize) -> &[f64] {
        &self.g[a * self.m..(a + 1) * self.m]
    }

    /// Time derivative of every sector; `t` of the result is zero.
    pub fn rhs(&self, s: &HierarchyState) -> HierarchyState {
        let (n, m) = (self.n, self.m);
        let mut out = HierarchyState::zeros(n, m);
        let mut b_re = vec![0.0; n * m];
        let mut b_im = vec![0.0; n * m];
        split(&s.b, &mut b_re, &mut b_im);
        let mut mv_re = vec![0.0; n * m];
        let mut mv_im = vec![0.0; n * m];
        for alpha in 0..m {
            let row = alpha * m..(alpha + 1) * m;
            let (dr, di) = (&s.d_re[row.clone()], &s.d_im[row.clone()]);
            self.d_row(alpha, &b_re, &b_im, dr, di, &mut out.d_re[row.clone()], &mut out.d_im[row]);
            for a in 0..n {
                mv_re[a * m + alpha] = dot(self.g_row(a), dr);
                mv_im[a * m + alpha] = dot(self.g_row(a), di);
            }
        }
        self.small_rhs(&s.c, &s.b, &mv_re, &mv_im, &mut out.c, &mut out.b);
        out
    }

    /// Derivatives of C and B given the stage input and the matvec
    /// `sum_beta g_a,beta D_alpha,beta`.
    fn small_rhs(&self, c: &[C64], b: &[C64], mv_re: &[f64], mv_im: &[f64], kc: &mut [C64], kb: &mut [C64]) {
        let (n, m) = (self.n, self.m);
        let mi = C64::new(0.0, -1.0);
        for a in 0..n {
            for bb in a + 1..n {
                let (ga, gb) = (self.g_row(a), self.g_row(bb));
                let (ba, bbr) = (&b[a * m..(a + 1) * m], &b[bb * m..(bb + 1) * m]);
                let mut acc = C64::new(0.0, 0.0);
                for al in 0..m {
                    acc += ba[al] * gb[al] + bbr[al] * ga[al];
                }
                let p = pair_index(n, a, bb);
                kc[p] = mi * ((self.eps[a] + self.eps[bb]) * c[p] + acc);
            }
        }
        for a in 0..n {
            for al in 0..m {
                let mut acc = C64::new(mv_re[a * m + al], mv_im[a * m + al]);
                for bb in 0..n {
                    if bb != a {
                        acc += self.g[bb * m + al] * c_sym(c, n, a, bb);
                    }
                }
                kb[a * m + al] = mi * ((self.eps[a] + self.e[al]) * b[a * m + al] + acc);
            }
        }
    }

    /// One row of dD~: -i[(e_alpha + e_beta) D + S] with
    /// S = sum_a (B_a,alpha g_a,beta + g_a,alpha B_a,beta), symmetric in
    /// (alpha, beta) bit for bit.
    #[allow(clippy::too_many_arguments)]
    fn d_row(&self, alpha: usize, b_re: &[f64], b_im: &[f64], d_re: &[f64], d_im: &[f64], k_re: &mut [f64], k_im: &mut [f64]) {
        match self.n {
            1 => self.d_row_n::<1>(alpha, b_re, b_im, d_re, d_im, k_re, k_im),
            2 => self.d_row_n::<2>(alpha, b_re, b_im, d_re, d_im, k_re, k_im),
            3 => self.d_row_n::<3>(alpha, b_re, b_im, d_re, d_im, k_re, k_im),
            4 => self.d_row_n::<4>(alpha, b_re, b_im, d_re, d_im, k_re, k_im),
            _ => self.d_row_any(alpha, b_re, b_im, d_re, d_im, k_re, k_im),
        }
    }

    #[allow(clippy::too_many_arguments)]
    #[inline(always)]
    fn d_row_n<const N: usize>(
        &self,
        alpha: usize,
        b_re: &[f64],
        b_im: &[f64],
        d_re: &[f64],
        d_im: &[f64],
        k_re: &mut [f64],
        k_im: &mut [f64],
    ) {
        let m = self.m;
        // reslicing to [..m] lets the compiler drop bounds checks and vectorize
        let g: [&[f64]; N] = std::array::from_fn(|a| &self.g[a * m..][..m]);
        let br: [&[f64]; N] = std::array::from_fn(|a| &b_re[a * m..][..m]);
        let bi: [&[f64]; N] = std::array::from_fn(|a| &b_im[a * m..][..m]);
        let ga: [f64; N] = std::array::from_fn(|a| g[a][alpha]);
        let bar: [f64; N] = std::array::from_fn(|a| br[a][alpha]);
        let bai: [f64; N] = std::array::from_fn(|a| bi[a][alpha]);
        let ea = self.e[alpha];
        let e = &self.e[..m];
        let (d_re, d_im) = (&d_re[..m], &d_im[..m]);
        let (k_re, k_im) = (&mut k_re[..m], &mut k_im[..m]);
        for be in 0..m {
            let mut sr = 0.0;
            let mut si = 0.0;
            for a in 0..N {
                sr += bar[a] * g[a][be] + ga[a] * br[a][be];
                si += bai[a] * g[a][be] + ga[a] * bi[a][be];
            }
            let en = ea + e[be];
            k_re[be] = en * d_im[be] + si;
            k_im[be] = -(en * d_re[be] + sr);
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn d_row_any(&self, alpha: usize, b_re: &[f64], b_im: &[f64], d_re: &[f64], d_im: &[f64], k_re: &mut [f64], k_im: &mut [f64]) {
        let m = self.m;
        let ea = self.e[alpha];
        for be in 0..m {
            let mut sr = 0.0;
            let mut si = 0.0;
            for a in 0..self.n {
                let o = a * m;
                sr += b_re[o + alpha] * self.g[o + be] + self.g[o + alpha] * b_re[o + be];
                si += b_im[o + alpha] * self.g[o + be] + self.g[o + alpha] * b_im[o + be];
            }
            let en = ea + self.e[be];
            k_re[be] = en * d_im[be] + si;
            k_im[be] = -(en * d_re[be] + sr);
        }
    }

    /// Classical RK4 step. The generator is linear and time independent, so
    /// the four-stage update equals the degree-4 Taylor polynomial of
    /// exp(-i H dt), evaluated here in nested form
    /// `y + dt A (y + dt/2 A (y + dt/3 A (y + dt/4 A y)))`.
    /// Each stage consumes one row of the two-photon input (for its own
    /// derivative and for the B matvec) and overwrites it in place, so only
    /// the state and a single stage buffer are touched. No renormalization
    /// is applied.
    pub fn step(&self, y: &mut HierarchyState, dt: f64, ws: &mut Workspace) {
        let (n, m) = (self.n, self.m);
        const FACTOR: [f64; 4] = [0.25, 1.0 / 3.0, 0.5, 1.0];
        ws.stage_c.copy_from_slice(&y.c);
        ws.stage_b.copy_from_slice(&y.b);
        for s in 0..4 {
            split(&ws.stage_b, &mut ws.b_re, &mut ws.b_im);
            let c = FACTOR[s] * dt;
            for alpha in 0..m {
                let o = alpha * m;
                if s == 0 {
                    ws.stage_re[o..][..m].copy_from_slice(&y.d_re[o..][..m]);
                    ws.stage_im[o..][..m].copy_from_slice(&y.d_im[o..][..m]);
                }
                let (vr, vi) = (&mut ws.stage_re[o..][..m], &mut ws.stage_im[o..][..m]);
                self.d_row(alpha, &ws.b_re, &ws.b_im, vr, vi, &mut ws.k_re, &mut ws.k_im);
                for a in 0..n {
                    let g = &self.g[a * m..][..m];
                    ws.mv_re[a * m + alpha] = dot(g, vr);
                    ws.mv_im[a * m + alpha] = dot(g, vi);
                }
                let (kr, ki) = (&ws.k_re[..m], &ws.k_im[..m]);
                let (yr, yi) = (&mut y.d_re[o..][..m], &mut y.d_im[o..][..m]);
                if s < 3 {
                    for i in 0..m {
                        vr[i] = yr[i] + c * kr[i];
                        vi[i] = yi[i] + c * ki[i];
                    }
                } else {
                    for i in 0..m {
                        yr[i] += c * kr[i];
                        yi[i] += c * ki[i];
                    }
                }
            }
            self.small_rhs(&ws.stage_c, &ws.stage_b, &ws.mv_re, &ws.mv_im, &mut ws.kc, &mut ws.kb);
            for (stage, k, yv) in [(&mut ws.stage_c, &ws.kc, &mut y.c), (&mut ws.stage_b, &ws.kb, &mut y.b)] {
                for i in 0..k.len() {
                    if s < 3 {
                        stage[i] = yv[i] + c * k[i];
                    } else {
                        yv[i] += c * k[i];
                    }
                }
            }
        }
        y.t += dt;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvolveOptions {
    pub dt: f64,
    pub steps: usize,
    /// Observer cadence in steps; the final step is always sampled.
    pub sample_every: usize,
    pub allow_large_step: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConsistencySample {
    pub t: f64,
    pub p_tot: f64,
    pub asymmetry: f64,
}

#[derive(Debug, Clone)]
pub struct Evolution {
    pub state: HierarchyState,
    pub samples: Vec<ConsistencySample>,
}

/// Integrates from `init` for `opts.steps` steps, calling `observer` on the
/// initial state, every `sample_every` steps and on the final state.
pub fn evolve<F>(h: &Hierarchy, init: HierarchyState, opts: &EvolveOptions, mut observer: F) -> Result<Evolution>
where
    F: FnMut(&HierarchyState) -> std::result::Result<(), String>,
{
    h.check_step(opts.dt, opts.allow_large_step)?;
    if init.n != h.n || init.modes != h.m {
        return Err(Error::Shape(format!(
            "state has N = {}, NQ = {}; integrator has N = {}, NQ = {}",
            init.n, init.modes, h.n, h.m
        )));
    }
    let every = opts.sample_every.max(1);
    let mut ws = h.workspace();
    let mut y = init;
    let t0 = y.t;
    let mut samples = Vec::new();
    let mut record = |y: &HierarchyState, samples: &mut Vec<ConsistencySample>| -> Result<()> {
        samples.push(ConsistencySample {
            t: y.t,
            p_tot: y.total_norm(),
            asymmetry: y.asymmetry(),
        });
        observer(y).map_err(|message| Error::Observer { t: y.t, message })
    };
    record(&y, &mut samples)?;
    for step in 1..=opts.steps {
        h.step(&mut y, opts.dt, &mut ws);
        // avoid accumulating round-off in t
        y.t = t0 + step as f64 * opts.dt;
        if step % every == 0 || step == opts.steps {
            record(&y, &mut samples)?;
        }
    }
    Ok(Evolution { state: y, samples })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConsistencyReport {
    pub max_norm_drift: f64,
    pub max_asymmetry: f64,
    /// Drift at dt divided by drift at dt / 2, when both runs are available.
    pub convergence_ratio: Option<f64>,
}

pub fn consistency_report(samples: &[ConsistencySample], initial_norm: f64) -> ConsistencyReport {
    ConsistencyReport {
        max_norm_drift: samples.iter().map(|s| (s.p_tot - initial_norm).abs()).fold(0.0, f64::max),
        max_asymmetry: samples.iter().map(|s| s.asymmetry).fold(0.0, f64::max),
        convergence_ratio: None,
    }
}

impl ConsistencyReport {
    pub fn with_halved(mut self, halved: &ConsistencyReport) -> Self {
        self.convergence_ratio = Some(self.max_norm_drift / halved.max_norm_drift);
        self
    }
}

/// Sampled one-excitation amplitudes in the unshifted frame.
#[derive(Debug, Clone)]
pub struct SingleExcitationSeries {
    pub t: Vec<f64>,
    /// `c[sample][a]`.
    pub c: Vec<Vec<C64>>,
    /// Photon amplitudes b~ at the final time.
    pub b_final: Vec<C64>,
}

/// One-excitation dynamics with the same couplings:
/// i dc_a = omega_a c_a + sum g~_a,alpha b~_alpha,
/// i db~_alpha = omega_alpha b~_alpha + sum_a g~_a,alpha c_a.
pub fn single_excitation_evolve(
    couplings: &CouplingTensor,
    emitters: &[EmitterSpec],
    initial: &[C64],
    frame: f64,
    opts: &EvolveOptions,
) -> Result<SingleExcitationSeries> {
    let h = Hierarchy::new(couplings, emitters, frame)?;
    h.check_step(opts.dt, opts.allow_large_step)?;
    let (n, m) = (h.n, h.m);
    if initial.len() != n {
        return Err(Error::Shape(format!("{} amplitudes for {n} emitters", initial.len())));
    }
    let mi = C64::new(0.0, -1.0);
    let f = |y: &[C64], k: &mut [C64]| {
        let (c, b) = y.split_at(n);
        let (kc, kb) = k.split_at_mut(n);
        for a in 0..n {
            let acc: C64 = h.g_row(a).iter().zip(b).map(|(g, z)| *g * z).sum();
            kc[a] = mi * (h.eps[a] * c[a] + acc);
        }
        for al in 0..m {
            let mut acc = h.e[al] * b[al];
            for (a, ca) in c.iter().enumerate() {
                acc += h.g[a * m + al] * ca;
            }
            kb[al] = mi * acc;
        }
    };
    let len = n + m;
    let mut y = vec![C64::new(0.0, 0.0); len];
    y[..n].copy_from_slice(initial);
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) = (y.clone(), y.clone(), y.clone(), y.clone(), y.clone());
    let every = opts.sample_every.max(1);
    let lab = |y: &[C64], t: f64| -> Vec<C64> {
        let ph = C64::new(0.0, -frame * t).exp();
        y[..n].iter().map(|z| z * ph).collect()
    };
    let mut out = SingleExcitationSeries {
        t: vec![0.0],
        c: vec![lab(&y, 0.0)],
        b_final: Vec::new(),
    };
    let dt = opts.dt;
    for step in 1..=opts.steps {
        f(&y, &mut k1);
        for i in 0..len {
            tmp[i] = y[i] + 0.5 * dt * k1[i];
        }
        f(&tmp, &mut k2);
        for i in 0..len {
            tmp[i] = y[i] + 0.5 * dt * k2[i];
        }
        f(&tmp, &mut k3);
        for i in 0..len {
            tmp[i] = y[i] + dt * k3[i];
        }
        f(&tmp, &mut k4);
        for i in 0..len {
            y[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if step % every == 0 || step == opts.steps {
            let t = step as f64 * dt;
            out.t.push(t);
            out.c.push(lab(&y, t));
        }
    }
    let ph = C64::new(0.0, -frame * opts.steps as f64 * dt).exp();
    out.b_final = y[n..].iter().map(|z| z * ph).collect();
    Ok(out)
}
