//! Truncated-Fock operator algebra and the model Hamiltonians.
//!
//! Tensor order is fixed as spins (x) modes with row-major index
//! composition: the basis index is
//! `((s_0 * 2 + s_1) * ... * N + n_0) * N + n_1 ...`
//! with spin index 0 = up (sigma_z eigenvalue +1). Every module in the
//! crate builds on this ordering; do not reorder.

use ndarray::Array2;
use num_complex::Complex64 as C64;

use crate::{Error, Result};

pub type CMat = Array2<C64>;

/// Default cap on the total Hilbert-space dimension.
pub const DEFAULT_DIM_CAP: usize = 20_000;

/// Hermiticity tolerance used by every builder.
pub const HERM_TOL: f64 = 1e-12;

/// Current dimension cap: `USQED_DIM_CAP` env override or the default.
pub fn dim_cap() -> usize {
    std::env::var("USQED_DIM_CAP")
        .ok()
        .and_then(|s| s.parse().ok())
        .unwrap_or(DEFAULT_DIM_CAP)
}

/// Layout of a truncated Hilbert space: `n_spins` two-level systems
/// followed by `n_modes` bosonic modes with Fock states |0>..|N-1>.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HilbertSpec {
    pub fock_cutoff: usize,
    pub n_modes: usize,
    pub n_spins: usize,
}

impl HilbertSpec {
    pub fn new(fock_cutoff: usize, n_modes: usize, n_spins: usize) -> Result<Self> {
        if n_modes >= 1 && fock_cutoff < 1 {
            return Err(Error::IncompatibleSpace(
                "fock_cutoff must be >= 1".into(),
            ));
        }
        let spec = HilbertSpec {
            fock_cutoff: fock_cutoff.max(1),
            n_modes,
            n_spins,
        };
        let dim = spec.dim();
        let cap = dim_cap();
        if dim > cap {
            return Err(Error::DimensionOverflow { dim, cap });
        }
        Ok(spec)
    }

    /// Single spin + single mode, the Rabi-model layout.
    pub fn rabi(fock_cutoff: usize) -> Result<Self> {
        Self::new(fock_cutoff, 1, 1)
    }

    pub fn dim(&self) -> usize {
        (1usize << self.n_spins) * self.fock_cutoff.pow(self.n_modes as u32)
    }

    pub fn is_rabi_shaped(&self) -> bool {
        self.n_spins == 1 && self.n_modes == 1
    }

    /// Dimensions of the tensor factors in composition order.
    fn site_dims(&self) -> Vec<usize> {
        let mut dims = vec![2; self.n_spins];
        dims.extend(std::iter::repeat(self.fock_cutoff).take(self.n_modes));
        dims
    }
}

/// Dense operator tagged with its Hilbert-space layout.
#[derive(Debug, Clone)]
pub struct Operator {
    pub space: HilbertSpec,
    pub matrix: CMat,
    pub hermitian_hint: bool,
}

impl Operator {
    pub fn new(space: HilbertSpec, matrix: CMat, hermitian_hint: bool) -> Result<Self> {
        let d = space.dim();
        if matrix.nrows() != d || matrix.ncols() != d {
            return Err(Error::IncompatibleSpace(format!(
                "matrix is {}x{} but space dimension is {}",
                matrix.nrows(),
                matrix.ncols(),
                d
            )));
        }
        if hermitian_hint {
            let defect = herm_defect(&matrix);
            if defect > HERM_TOL {
                return Err(Error::NonHermitian { defect });
            }
        }
        Ok(Operator {
            space,
            matrix,
            hermitian_hint,
        })
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn dagger(&self) -> Operator {
        Operator {
            space: self.space.clone(),
            matrix: dagger(&self.matrix),
            hermitian_hint: self.hermitian_hint,
        }
    }
}

/// max_ij |M_ij - conj(M_ji)|
pub fn herm_defect(m: &CMat) -> f64 {
    let mut d = 0.0f64;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            d = d.max((m[[i, j]] - m[[j, i]].conj()).norm());
        }
    }
    d
}

pub fn dagger(m: &CMat) -> CMat {
    m.t().mapv(|z| z.conj())
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    let (ra, ca) = a.dim();
    let (rb, cb) = b.dim();
    let mut out = Array2::zeros((ra * rb, ca * cb));
    for ia in 0..ra {
        for ja in 0..ca {
            let x = a[[ia, ja]];
            if x.norm_sqr() == 0.0 {
                continue;
            }
            for ib in 0..rb {
                for jb in 0..cb {
                    out[[ia * rb + ib, ja * cb + jb]] = x * b[[ib, jb]];
                }
            }
        }
    }
    out
}

pub fn identity(dim: usize) -> CMat {
    Array2::eye(dim).mapv(|x: f64| C64::new(x, 0.0))
}

pub fn max_abs(m: &CMat) -> f64 {
    m.iter().fold(0.0f64, |acc, z| acc.max(z.norm()))
}

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

fn local_annihilation(n: usize) -> CMat {
    let mut a = Array2::zeros((n, n));
    for k in 1..n {
        a[[k - 1, k]] = c((k as f64).sqrt());
    }
    a
}

fn local_pauli(which: char) -> CMat {
    // basis: index 0 = |up>, index 1 = |down>
    let i = C64::new(0.0, 1.0);
    match which {
        'x' => ndarray::array![[c(0.0), c(1.0)], [c(1.0), c(0.0)]],
        'y' => ndarray::array![[c(0.0), -i], [i, c(0.0)]],
        'z' => ndarray::array![[c(1.0), c(0.0)], [c(0.0), c(-1.0)]],
        '+' => ndarray::array![[c(0.0), c(1.0)], [c(0.0), c(0.0)]],
        '-' => ndarray::array![[c(0.0), c(0.0)], [c(1.0), c(0.0)]],
        _ => unreachable!(),
    }
}

/// Embed a local operator at tensor slot `site` of `space`.
fn embed(space: &HilbertSpec, site: usize, local: &CMat) -> CMat {
    let dims = space.site_dims();
    let mut out = identity(1);
    for (k, &d) in dims.iter().enumerate() {
        let factor = if k == site {
            local.clone()
        } else {
            identity(d)
        };
        out = kron(&out, &factor);
    }
    out
}

/// Table of elementary operators on a given space.
pub struct Algebra {
    pub space: HilbertSpec,
    /// Annihilation operator per mode.
    pub a: Vec<CMat>,
    /// Creation operator per mode.
    pub adag: Vec<CMat>,
    pub sx: Vec<CMat>,
    pub sy: Vec<CMat>,
    pub sz: Vec<CMat>,
    pub sp: Vec<CMat>,
    pub sm: Vec<CMat>,
    pub id: CMat,
}

pub fn build_algebra(space: &HilbertSpec) -> Result<Algebra> {
    let d = space.dim();
    let cap = dim_cap();
    if d > cap {
        return Err(Error::DimensionOverflow { dim: d, cap });
    }
    let mut alg = Algebra {
        space: space.clone(),
        a: Vec::new(),
        adag: Vec::new(),
        sx: Vec::new(),
        sy: Vec::new(),
        sz: Vec::new(),
        sp: Vec::new(),
        sm: Vec::new(),
        id: identity(d),
    };
    for s in 0..space.n_spins {
        alg.sx.push(embed(space, s, &local_pauli('x')));
        alg.sy.push(embed(space, s, &local_pauli('y')));
        alg.sz.push(embed(space, s, &local_pauli('z')));
        alg.sp.push(embed(space, s, &local_pauli('+')));
        alg.sm.push(embed(space, s, &local_pauli('-')));
    }
    let a_local = local_annihilation(space.fock_cutoff);
    let adag_local = dagger(&a_local);
    for m in 0..space.n_modes {
        let site = space.n_spins + m;
        alg.a.push(embed(space, site, &a_local));
        alg.adag.push(embed(space, site, &adag_local));
    }
    Ok(alg)
}

/// Quantum Rabi model parameters (frequencies in units of a reference, hbar = 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RabiParams {
    /// Cavity frequency omega > 0.
    pub omega: f64,
    /// TLS splitting Omega >= 0.
    pub splitting: f64,
    /// Light-matter coupling g >= 0.
    pub g: f64,
}

impl RabiParams {
    pub fn new(omega: f64, splitting: f64, g: f64) -> Result<Self> {
        if !(omega > 0.0) || splitting < 0.0 || g < 0.0 {
            return Err(Error::IncompatibleSpace(format!(
                "invalid Rabi parameters: omega={omega}, splitting={splitting}, g={g}"
            )));
        }
        Ok(RabiParams {
            omega,
            splitting,
            g,
        })
    }
}

/// Two-mode Hopfield model with diamagnetic term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HopfieldParams {
    pub omega_c: f64,
    pub omega_x: f64,
    pub g: f64,
    /// Diamagnetic coefficient D >= 0.
    pub d_dia: f64,
}

impl HopfieldParams {
    pub fn new(omega_c: f64, omega_x: f64, g: f64, d_dia: f64) -> Result<Self> {
        if !(omega_c > 0.0) || !(omega_x > 0.0) || d_dia < 0.0 {
            return Err(Error::IncompatibleSpace(format!(
                "invalid Hopfield parameters: omega_c={omega_c}, omega_x={omega_x}, d_dia={d_dia}"
            )));
        }
        Ok(HopfieldParams {
            omega_c,
            omega_x,
            g,
            d_dia,
        })
    }
}

/// Discretized spin-boson model: one TLS coupled to K modes.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinBosonParams {
    pub splitting: f64,
    /// (omega_k, g_k) pairs, frequencies strictly increasing.
    pub modes: Vec<(f64, f64)>,
}

impl SpinBosonParams {
    pub fn new(splitting: f64, modes: Vec<(f64, f64)>) -> Result<Self> {
        if modes.is_empty() {
            return Err(Error::IncompatibleSpace("spin-boson needs K >= 1".into()));
        }
        for w in modes.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(Error::IncompatibleSpace(
                    "spin-boson frequencies must be strictly increasing".into(),
                ));
            }
        }
        for &(w, g) in &modes {
            if !(w > 0.0) || g < 0.0 {
                return Err(Error::IncompatibleSpace(format!(
                    "invalid spin-boson mode (omega={w}, g={g})"
                )));
            }
        }
        Ok(SpinBosonParams { splitting, modes })
    }
}

/// Model selector for [`build_hamiltonian`].
#[derive(Debug, Clone)]
pub enum Model {
    Rabi(RabiParams),
    JaynesCummings(RabiParams),
    Hopfield(HopfieldParams),
    SpinBoson(SpinBosonParams),
}

impl Model {
    pub fn check_space(&self, space: &HilbertSpec) -> Result<()> {
        let ok = match self {
            Model::Rabi(_) | Model::JaynesCummings(_) => space.is_rabi_shaped(),
            Model::Hopfield(_) => space.n_spins == 0 && space.n_modes == 2,
            Model::SpinBoson(p) => space.n_spins == 1 && space.n_modes == p.modes.len(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::IncompatibleSpace(format!(
                "space ({} spins, {} modes) does not fit {:?}",
                space.n_spins, space.n_modes, self
            )))
        }
    }
}

pub fn build_hamiltonian(model: &Model, space: &HilbertSpec) -> Result<Operator> {
    model.check_space(space)?;
    let alg = build_algebra(space)?;
    let m = match model {
        Model::Rabi(p) => {
            let n = alg.adag[0].dot(&alg.a[0]);
            let x = &alg.adag[0] + &alg.a[0];
            n.mapv(|z| z * c(p.omega))
                + alg.sz[0].mapv(|z| z * c(p.splitting / 2.0))
                + alg.sx[0].dot(&x).mapv(|z| z * c(p.g))
        }
        Model::JaynesCummings(p) => {
            let n = alg.adag[0].dot(&alg.a[0]);
            n.mapv(|z| z * c(p.omega))
                + alg.sz[0].mapv(|z| z * c(p.splitting / 2.0))
                + (alg.sp[0].dot(&alg.a[0]) + alg.sm[0].dot(&alg.adag[0])).mapv(|z| z * c(p.g))
        }
        Model::Hopfield(p) => {
            // H = wc a'a + wx b'b + i g (a'+a)(b'-b) + D (a'+a)^2
            let (a, adag) = (&alg.a[0], &alg.adag[0]);
            let (b, bdag) = (&alg.a[1], &alg.adag[1]);
            let xa = adag + a;
            let pb = bdag - b;
            let i = C64::new(0.0, 1.0);
            adag.dot(a).mapv(|z| z * c(p.omega_c))
                + bdag.dot(b).mapv(|z| z * c(p.omega_x))
                + xa.dot(&pb).mapv(|z| z * i * c(p.g))
                + xa.dot(&xa).mapv(|z| z * c(p.d_dia))
        }
        Model::SpinBoson(p) => {
            let mut h = alg.sz[0].mapv(|z| z * c(p.splitting / 2.0));
            for (k, &(wk, gk)) in p.modes.iter().enumerate() {
                let xk = &alg.adag[k] + &alg.a[k];
                h = h
                    + alg.adag[k].dot(&alg.a[k]).mapv(|z| z * c(wk))
                    + alg.sx[0].dot(&xk).mapv(|z| z * c(gk));
            }
            h
        }
    };
    Operator::new(space.clone(), m, true)
}

/// exp(G) for anti-Hermitian G, via eigendecomposition of iG.
pub fn expm_antihermitian(g: &CMat) -> Result<CMat> {
    let h = g.mapv(|z| z * C64::new(0.0, 1.0)); // Hermitian
    let defect = herm_defect(&h);
    if defect > 1e-10 {
        return Err(Error::NonHermitian { defect });
    }
    crate::numkern::funm_hermitian(&h, |lam| (-C64::new(0.0, 1.0) * lam).exp())
}

const UNITARITY_TOL: f64 = 1e-8;

fn check_unitary(space: &HilbertSpec, u: CMat) -> Result<Operator> {
    let d = u.nrows();
    let defect = max_abs(&(dagger(&u).dot(&u) - identity(d)));
    if defect > UNITARITY_TOL {
        return Err(Error::TruncationUnitarity {
            defect,
            tol: UNITARITY_TOL,
        });
    }
    Operator::new(space.clone(), u, false)
}

/// Displacement operator D(alpha) = exp(alpha a' - alpha* a) on `mode`.
pub fn displacement(space: &HilbertSpec, alpha: C64, mode: usize) -> Result<Operator> {
    let alg = build_algebra(space)?;
    if mode >= space.n_modes {
        return Err(Error::IncompatibleSpace(format!("no mode {mode}")));
    }
    if alpha.norm_sqr() > space.fock_cutoff as f64 / 4.0 {
        log::warn!(
            "displacement |alpha|^2 = {:.3} large for cutoff N = {}; truncation error likely",
            alpha.norm_sqr(),
            space.fock_cutoff
        );
    }
    let gen = alg.adag[mode].mapv(|z| z * alpha) - alg.a[mode].mapv(|z| z * alpha.conj());
    check_unitary(space, expm_antihermitian(&gen)?)
}

/// Squeeze operator S(lambda) = exp(lambda (a^2 - a'^2)) on `mode`,
/// normalized so that S' a S = a cosh(2 lambda) - a' sinh(2 lambda).
pub fn squeeze(space: &HilbertSpec, lambda: f64, mode: usize) -> Result<Operator> {
    let alg = build_algebra(space)?;
    if mode >= space.n_modes {
        return Err(Error::IncompatibleSpace(format!("no mode {mode}")));
    }
    let a2 = alg.a[mode].dot(&alg.a[mode]);
    let adag2 = alg.adag[mode].dot(&alg.adag[mode]);
    let gen = (a2 - adag2).mapv(|z| z * c(lambda));
    check_unitary(space, expm_antihermitian(&gen)?)
}

/// Excitation-number parity P = sigma_z exp(i pi a'a) on a Rabi-shaped space.
pub fn parity_operator(space: &HilbertSpec) -> Result<Operator> {
    if !space.is_rabi_shaped() {
        return Err(Error::IncompatibleSpace(
            "parity operator needs 1 spin + 1 mode".into(),
        ));
    }
    let n = space.fock_cutoff;
    let mut photon = Array2::zeros((n, n));
    for k in 0..n {
        photon[[k, k]] = c(if k % 2 == 0 { 1.0 } else { -1.0 });
    }
    let m = kron(&local_pauli('z'), &photon);
    Operator::new(space.clone(), m, true)
}
