//! Dissipation and measurement: dressed-basis and phenomenological
//! Lindblad master equations, steady states, propagation, input-output
//! X+ fields, photodetection, correlation functions, emission spectra,
//! and Langevin linear response for the Hopfield model.
//!
//! Temperature is fixed at T = 0 throughout: only positive-frequency
//! (lowering) jump operators enter the dissipator, and the omega = 0
//! dephasing-like block of the decomposition is excluded.
//!
//! Superoperators use the row-major vec convention,
//! vec(A rho B) = (A kron B^T) vec(rho).

use std::sync::Arc;

use ndarray::{Array1, Array2};
use num_complex::Complex64 as C64;

use crate::numkern::{self, eig_general, propagate_ode, EigenSystem, OdeOptions};
use crate::qops::{dagger, identity, kron, max_abs, CMat, HilbertSpec, Operator};
use crate::{Error, Result};

fn c(x: f64) -> C64 {
    C64::new(x, 0.0)
}

const I1: C64 = C64::new(0.0, 1.0);

/// Bath spectral-density family gamma(omega).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DensityKind {
    /// gamma(omega) = gamma0
    Flat,
    /// gamma(omega) = gamma0 sqrt(omega / omega_ref)
    Sqrt { omega_ref: f64 },
    /// gamma(omega) = gamma0 omega / omega_ref
    Ohmic { omega_ref: f64 },
}

/// One dissipation channel: coupling operator, spectral density, and
/// secular clustering tolerance.
#[derive(Clone)]
pub struct BathSpec {
    pub coupling_op: Operator,
    pub density_kind: DensityKind,
    pub gamma0: f64,
    /// Optional Lamb-shift function D(omega); absent by default.
    pub lamb_shift: Option<Arc<dyn Fn(f64) -> f64 + Send + Sync>>,
    /// Width of generalized-secular frequency classes; 0 = strict secular.
    pub cluster_tol: f64,
}

impl BathSpec {
    pub fn new(coupling_op: Operator, density_kind: DensityKind, gamma0: f64) -> Result<Self> {
        if gamma0 < 0.0 {
            return Err(Error::Numerics(format!("negative base rate {gamma0}")));
        }
        Ok(BathSpec {
            coupling_op,
            density_kind,
            gamma0,
            lamb_shift: None,
            cluster_tol: 0.0,
        })
    }

    pub fn rate_at(&self, omega: f64) -> f64 {
        match self.density_kind {
            DensityKind::Flat => self.gamma0,
            DensityKind::Sqrt { omega_ref } => self.gamma0 * (omega / omega_ref).sqrt(),
            DensityKind::Ohmic { omega_ref } => self.gamma0 * omega / omega_ref,
        }
    }
}

impl std::fmt::Debug for BathSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BathSpec")
            .field("density_kind", &self.density_kind)
            .field("gamma0", &self.gamma0)
            .field("lamb_shift", &self.lamb_shift.is_some())
            .field("cluster_tol", &self.cluster_tol)
            .finish()
    }
}

/// Validated density matrix.
#[derive(Debug, Clone)]
pub struct DensityMatrix {
    pub matrix: CMat,
}

impl DensityMatrix {
    pub fn new(matrix: CMat) -> Result<Self> {
        let tr: C64 = (0..matrix.nrows()).map(|i| matrix[[i, i]]).sum();
        if (tr.re - 1.0).abs() > 1e-10 || tr.im.abs() > 1e-10 {
            return Err(Error::Numerics(format!("density matrix trace {tr}")));
        }
        let defect = crate::qops::herm_defect(&matrix);
        if defect > 1e-10 {
            return Err(Error::NonHermitian { defect });
        }
        let (vals, _) = numkern::eigh_dense(&matrix)?;
        if vals[0] < -1e-8 {
            return Err(Error::Numerics(format!(
                "density matrix negative eigenvalue {}",
                vals[0]
            )));
        }
        Ok(DensityMatrix { matrix })
    }

    pub fn pure(state: &Array1<C64>) -> Result<Self> {
        let d = state.len();
        let mut m = Array2::zeros((d, d));
        for i in 0..d {
            for j in 0..d {
                m[[i, j]] = state[i] * state[j].conj();
            }
        }
        DensityMatrix::new(m)
    }
}

/// One jump channel of a Lindblad generator.
#[derive(Debug, Clone)]
pub struct JumpTerm {
    pub rate: f64,
    /// Representative frequency of the secular class (0 for
    /// phenomenological channels).
    pub omega_bar: f64,
    pub op: CMat,
}

/// Lindblad generator d rho/dt = -i[H_eff, rho] + sum_k rate_k
/// (A rho A' - {A'A, rho}/2), all matrices in the lab basis.
#[derive(Debug, Clone)]
pub struct LindbladGenerator {
    pub h_eff: CMat,
    pub jumps: Vec<JumpTerm>,
    pub space: HilbertSpec,
}

impl LindbladGenerator {
    pub fn dim(&self) -> usize {
        self.h_eff.nrows()
    }

    pub fn apply(&self, rho: &CMat) -> CMat {
        let mut out = (self.h_eff.dot(rho) - rho.dot(&self.h_eff)).mapv(|z| z * (-I1));
        for j in &self.jumps {
            let adag = dagger(&j.op);
            let ada = adag.dot(&j.op);
            let gain = j.op.dot(rho).dot(&adag);
            let loss = (ada.dot(rho) + rho.dot(&ada)).mapv(|z| z * c(0.5));
            out = out + (gain - loss).mapv(|z| z * c(j.rate));
        }
        out
    }

    /// Dense superoperator, row-major vec convention.
    pub fn superoperator(&self) -> CMat {
        let d = self.dim();
        let id = identity(d);
        let ht = self.h_eff.t().to_owned();
        let mut l = (kron(&self.h_eff, &id) - kron(&id, &ht)).mapv(|z| z * (-I1));
        for j in &self.jumps {
            let adag = dagger(&j.op);
            let ada = adag.dot(&j.op);
            let a_conj = j.op.mapv(|z| z.conj());
            let term = kron(&j.op, &a_conj)
                - kron(&ada, &id).mapv(|z| z * c(0.5))
                - kron(&id, &ada.t().to_owned()).mapv(|z| z * c(0.5));
            l = l + term.mapv(|z| z * c(j.rate));
        }
        l
    }
}

/// Positive-frequency jump operators A~(omega_bar) of `a` in the basis
/// of `eigen`, clustered into generalized-secular classes of width
/// <= cluster_tol. Operators are returned in the lab basis. The list
/// covers transitions among the levels present in `eigen` only.
pub fn dressed_jump_operators(
    eigen: &EigenSystem,
    a: &Operator,
    bath: &BathSpec,
) -> Result<Vec<(f64, CMat)>> {
    if !a.hermitian_hint {
        return Err(Error::IncompatibleSpace(
            "coupling operator must be Hermitian".into(),
        ));
    }
    let v = &eigen.vectors;
    let m = eigen.values.len();
    let a_e = dagger(v).dot(&a.matrix).dot(v); // m x m

    // all positive transition frequencies (k -> i lowering, E_k > E_i)
    let mut gaps: Vec<(f64, usize, usize)> = Vec::new();
    for i in 0..m {
        for k in 0..m {
            let w = eigen.values[k] - eigen.values[i];
            if w > 1e-12 {
                gaps.push((w, i, k));
            }
        }
    }
    gaps.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());

    // greedy clustering from below; a tie at exactly cluster_tol goes to
    // the lower-frequency class
    let mut classes: Vec<Vec<(f64, usize, usize)>> = Vec::new();
    for g in gaps {
        match classes.last_mut() {
            Some(cl) if g.0 - cl[0].0 <= bath.cluster_tol => {
                if (g.0 - cl[0].0 - bath.cluster_tol).abs() < f64::EPSILON * cl[0].0.abs() {
                    log::warn!(
                        "dressed_jump_operators: class-boundary tie at omega = {}, assigned to the lower class",
                        g.0
                    );
                }
                cl.push(g);
            }
            _ => classes.push(vec![g]),
        }
    }

    let mut out = Vec::with_capacity(classes.len());
    for cl in classes {
        let omega_bar = cl.iter().map(|g| g.0).sum::<f64>() / cl.len() as f64;
        let mut op_e: CMat = Array2::zeros((m, m));
        for &(_, i, k) in &cl {
            op_e[[i, k]] = a_e[[i, k]];
        }
        let op = v.dot(&op_e).dot(&dagger(v));
        out.push((omega_bar, op));
    }
    Ok(out)
}

/// Dressed (microscopic, secular) master equation at T = 0.
pub fn build_lindbladian_dressed(
    h: &Operator,
    eigen: &EigenSystem,
    baths: &[BathSpec],
) -> Result<LindbladGenerator> {
    let mut jumps = Vec::new();
    let mut h_eff = h.matrix.clone();
    let mut min_gap = f64::INFINITY;
    let mut max_rate = 0.0f64;
    for bath in baths {
        let ops = dressed_jump_operators(eigen, &bath.coupling_op, bath)?;
        let mut prev_w: Option<f64> = None;
        for (w, op) in ops {
            let rate = bath.rate_at(w);
            if let Some(p) = prev_w {
                min_gap = min_gap.min(w - p);
            }
            prev_w = Some(w);
            max_rate = max_rate.max(rate);
            if let Some(ds) = &bath.lamb_shift {
                let shift = dagger(&op).dot(&op).mapv(|z| z * c(ds(w)));
                h_eff = h_eff + shift;
            }
            if rate > 0.0 {
                jumps.push(JumpTerm {
                    rate,
                    omega_bar: w,
                    op,
                });
            }
        }
        if bath.gamma0 > 0.1 * min_gap {
            log::warn!(
                "build_lindbladian_dressed: gamma0 = {} is not small against the smallest class separation {min_gap:.3e}; secular approximation is strained",
                bath.gamma0
            );
        }
    }
    let _ = max_rate;
    Ok(LindbladGenerator {
        h_eff,
        jumps,
        space: h.space.clone(),
    })
}

/// Phenomenological master equation: bare lowering jump operators with
/// flat rates, regardless of the dressed structure.
pub fn build_lindbladian_phenomenological(
    h: &Operator,
    channels: &[(f64, CMat)],
) -> Result<LindbladGenerator> {
    let jumps = channels
        .iter()
        .map(|(rate, op)| JumpTerm {
            rate: *rate,
            omega_bar: 0.0,
            op: op.clone(),
        })
        .collect();
    Ok(LindbladGenerator {
        h_eff: h.matrix.clone(),
        jumps,
        space: h.space.clone(),
    })
}

fn vec_rho(rho: &CMat) -> Array1<C64> {
    Array1::from_iter(rho.iter().cloned())
}

fn unvec_rho(v: &Array1<C64>, d: usize) -> CMat {
    Array2::from_shape_vec((d, d), v.to_vec()).expect("vec length d^2")
}

/// Unique steady state of `l`, from the zero mode of the dense
/// superoperator. Checks the Lindblad spectral structure on the way.
pub fn steady_state(l: &LindbladGenerator) -> Result<DensityMatrix> {
    let sup = l.superoperator();
    let ge = eig_general(&sup)?;
    let max_re = ge
        .values
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max);
    if max_re > 1e-8 {
        return Err(Error::SpectralInstability(format!(
            "Liouvillian eigenvalue with positive real part {max_re:.3e}"
        )));
    }
    let mut idx: Vec<usize> = (0..ge.values.len()).collect();
    idx.sort_by(|&i, &j| {
        ge.values[i]
            .norm()
            .partial_cmp(&ge.values[j].norm())
            .unwrap()
    });
    let n_slow = idx.iter().take_while(|&&i| ge.values[i].norm() < 1e-10).count();
    if n_slow != 1 {
        let gap = idx
            .get(n_slow.max(1))
            .map(|&i| ge.values[i].norm())
            .unwrap_or(0.0);
        return Err(Error::DegenerateSteadyState { n_slow, gap });
    }
    let zero_modes = [idx[0]];
    let d = l.dim();
    let raw = unvec_rho(&ge.right.column(zero_modes[0]).to_owned(), d);
    let herm = (raw.clone() + dagger(&raw)).mapv(|z| z * c(0.5));
    let tr: C64 = (0..d).map(|i| herm[[i, i]]).sum();
    if tr.norm() < 1e-12 {
        return Err(Error::Numerics("traceless zero mode".into()));
    }
    let rho = herm.mapv(|z| z / tr);
    let resid = max_abs(&l.apply(&rho));
    if resid > 1e-10 {
        return Err(Error::Numerics(format!(
            "steady-state residual {resid:.3e}"
        )));
    }
    DensityMatrix::new(rho)
}

/// Propagate rho0 along `t_grid` under `l`; trace is checked to 1e-10
/// at every reported time.
pub fn propagate(
    l: &LindbladGenerator,
    rho0: &DensityMatrix,
    t_grid: &[f64],
) -> Result<Vec<CMat>> {
    let d = l.dim();
    let rhs = move |_t: f64, v: &Array1<C64>| -> Array1<C64> {
        let rho = unvec_rho(v, d);
        vec_rho(&l.apply(&rho))
    };
    let sols = propagate_ode(&rhs, &vec_rho(&rho0.matrix), t_grid, &OdeOptions::default())?;
    let mut out = Vec::with_capacity(sols.len());
    for v in sols {
        let rho = unvec_rho(&v, d);
        let tr: C64 = (0..d).map(|i| rho[[i, i]]).sum();
        if (tr.re - 1.0).abs() > 1e-10 || tr.im.abs() > 1e-10 {
            return Err(Error::Numerics(format!(
                "propagate lost the trace: {tr}"
            )));
        }
        out.push(rho);
    }
    Ok(out)
}

/// Positive-frequency (lowering) part of X in the basis of `eigen`,
/// returned in the lab basis: X+ = sum_{E_i < E_j} X_ij |i><j|.
pub fn xplus_operator(eigen: &EigenSystem, x: &Operator) -> Result<CMat> {
    if !x.hermitian_hint {
        return Err(Error::IncompatibleSpace("X must be Hermitian".into()));
    }
    let v = &eigen.vectors;
    let m = eigen.values.len();
    let x_e = dagger(v).dot(&x.matrix).dot(v);
    let mut up: CMat = Array2::zeros((m, m));
    for i in 0..m {
        for j in 0..m {
            if eigen.values[j] - eigen.values[i] > 1e-12 {
                up[[i, j]] = x_e[[i, j]];
            }
        }
    }
    Ok(v.dot(&up).dot(&dagger(v)))
}

/// Detector operator O+ = sqrt(2 pi) g(omega_ji) X_ij |i><j| over
/// positive-frequency transitions (unit proportionality constant).
pub fn detector_operator(
    eigen: &EigenSystem,
    x: &Operator,
    g_of_omega: impl Fn(f64) -> f64,
) -> Result<CMat> {
    if !x.hermitian_hint {
        return Err(Error::IncompatibleSpace("X must be Hermitian".into()));
    }
    let v = &eigen.vectors;
    let m = eigen.values.len();
    let x_e = dagger(v).dot(&x.matrix).dot(v);
    let sq2pi = (2.0 * std::f64::consts::PI).sqrt();
    let mut up: CMat = Array2::zeros((m, m));
    for i in 0..m {
        for j in 0..m {
            let w = eigen.values[j] - eigen.values[i];
            if w > 1e-12 {
                up[[i, j]] = x_e[[i, j]] * c(sq2pi * g_of_omega(w));
            }
        }
    }
    Ok(v.dot(&up).dot(&dagger(v)))
}

fn trace_of(m: &CMat) -> C64 {
    (0..m.nrows()).map(|i| m[[i, i]]).sum()
}

/// Normalized second-order correlation g2(tau) for the detector field
/// O+, by quantum regression over `l`.
pub fn correlation_g2(
    l: &LindbladGenerator,
    rho_ss: &DensityMatrix,
    o_plus: &CMat,
    tau_grid: &[f64],
) -> Result<Vec<f64>> {
    let o_minus = dagger(o_plus);
    let flux = trace_of(&o_minus.dot(o_plus).dot(&rho_ss.matrix)).re;
    if flux < 1e-14 {
        return Err(Error::DarkSteadyState { flux });
    }
    // seeded matrix O+ rho O- propagated by the same generator
    let seed = o_plus.dot(&rho_ss.matrix).dot(&o_minus);
    let d = l.dim();
    let rhs = move |_t: f64, v: &Array1<C64>| -> Array1<C64> {
        let m = unvec_rho(v, d);
        vec_rho(&l.apply(&m))
    };
    let obs = o_minus.dot(o_plus);
    if tau_grid.iter().all(|&t| t == 0.0) {
        let g0 = trace_of(&obs.dot(&seed)).re / (flux * flux);
        return Ok(vec![g0; tau_grid.len()]);
    }
    let mut grid = tau_grid.to_vec();
    let prepend = grid.first().map(|&t| t > 0.0).unwrap_or(false);
    if prepend {
        grid.insert(0, 0.0);
    }
    let sols = propagate_ode(&rhs, &vec_rho(&seed), &grid, &OdeOptions::default())?;
    let skip = if prepend { 1 } else { 0 };
    Ok(sols
        .iter()
        .skip(skip)
        .map(|v| trace_of(&obs.dot(&unvec_rho(v, d))).re / (flux * flux))
        .collect())
}

/// Emission spectrum S(omega) = Re int_0^inf e^{-i omega tau}
/// <O-(tau) O+(0)> d tau by Liouvillian eigen-expansion, so that peaks
/// sit at positive transition frequencies (the stationary zero mode is
/// dropped; only the fluctuation part is reported).
pub fn emission_spectrum(
    l: &LindbladGenerator,
    rho_ss: &DensityMatrix,
    o_plus: &CMat,
    omega_grid: &[f64],
) -> Result<Vec<f64>> {
    let o_minus = dagger(o_plus);
    let flux = trace_of(&o_minus.dot(o_plus).dot(&rho_ss.matrix)).re;
    if flux < 1e-14 {
        return Err(Error::DarkSteadyState { flux });
    }
    let sup = l.superoperator();
    let ge = eig_general(&sup)?;
    if ge.defective {
        return Err(Error::SpectralInstability(
            "defective Liouvillian spectrum".into(),
        ));
    }
    let d = l.dim();
    let seed = vec_rho(&o_plus.dot(&rho_ss.matrix));
    // c_alpha = <<L_alpha | seed>>, weight_alpha = tr[O- R_alpha]
    let n = ge.values.len();
    let mut amp = Vec::with_capacity(n);
    for k in 0..n {
        if ge.values[k].norm() < 1e-12 {
            amp.push(C64::new(0.0, 0.0));
            continue;
        }
        let lk = ge.left.column(k);
        let ck: C64 = lk.iter().zip(seed.iter()).map(|(a, b)| a.conj() * b).sum();
        let rk = unvec_rho(&ge.right.column(k).to_owned(), d);
        let wk = trace_of(&o_minus.dot(&rk));
        amp.push(ck * wk);
    }
    Ok(omega_grid
        .iter()
        .map(|&w| {
            let mut s = 0.0;
            for k in 0..n {
                if amp[k].norm() == 0.0 {
                    continue;
                }
                // int_0^inf e^{-i w t} e^{lambda t} dt = -1/(lambda - i w)
                s += (amp[k] * (-1.0 / (ge.values[k] - I1 * c(w)))).re;
            }
            s
        })
        .collect())
}

/// Linear response of the damped Hopfield model.
#[derive(Debug, Clone)]
pub struct HopfieldResponse {
    pub omega: Vec<f64>,
    /// 4x4 scattering matrices over (a, b, a'(-w), b'(-w)).
    pub u: Vec<CMat>,
    /// |t_c|^2 for a symmetric two-port cavity channel.
    pub transmission: Vec<f64>,
    pub reflection: Vec<f64>,
    /// max over the grid of ||U eta U' - eta||, eta = diag(1,1,-1,-1)
    pub unitarity_defect: f64,
    /// closed-model polariton frequencies (positive branch), from the
    /// Hopfield-Bogoliubov 4x4 eigenproblem
    pub normal_modes: Vec<f64>,
}

/// Input-output scattering of the Hopfield model with Markovian-flat
/// kappa_c, kappa_x channel kernels.
pub fn hopfield_langevin_response(
    params: &crate::qops::HopfieldParams,
    kappa_c: f64,
    kappa_x: f64,
    omega_grid: &[f64],
) -> Result<HopfieldResponse> {
    let (wc, wx, g, dd) = (params.omega_c, params.omega_x, params.g, params.d_dia);
    // [v, H] = M v over v = (a, b, a', b')
    let m: CMat = ndarray::array![
        [c(wc + 2.0 * dd), -I1 * c(g), c(2.0 * dd), I1 * c(g)],
        [I1 * c(g), c(wx), I1 * c(g), c(0.0)],
        [c(-2.0 * dd), I1 * c(g), c(-(wc + 2.0 * dd)), -I1 * c(g)],
        [I1 * c(g), c(0.0), I1 * c(g), c(-wx)],
    ];
    let ge = eig_general(&m)?;
    let mut normal_modes = Vec::new();
    for z in &ge.values {
        if z.im.abs() > 1e-9 {
            return Err(Error::SpectralInstability(format!(
                "imaginary Hopfield normal mode {z} at omega_c={wc}, omega_x={wx}, g={g}, D={dd}"
            )));
        }
        if z.re > 0.0 {
            normal_modes.push(z.re);
        }
    }
    normal_modes.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let sqrt_k = ndarray::Array2::from_diag(&Array1::from(vec![
        c(kappa_c.sqrt()),
        c(kappa_x.sqrt()),
        c(kappa_c.sqrt()),
        c(kappa_x.sqrt()),
    ]));
    let khalf = sqrt_k.mapv(|z| z * z * c(0.5));
    let id4 = identity(4);
    let eta = ndarray::Array2::from_diag(&Array1::from(vec![
        c(1.0),
        c(1.0),
        c(-1.0),
        c(-1.0),
    ]));

    let mut u_list = Vec::with_capacity(omega_grid.len());
    let mut transmission = Vec::with_capacity(omega_grid.len());
    let mut reflection = Vec::with_capacity(omega_grid.len());
    let mut defect = 0.0f64;
    for &w in omega_grid {
        // (i (M - w I) + K/2) v = sqrt(K) v_in
        let lhs = (m.clone() - id4.mapv(|z| z * c(w))).mapv(|z| z * I1) + khalf.clone();
        let mut ginv = Array2::zeros((4, 4));
        for col in 0..4 {
            let mut e = Array1::zeros(4);
            e[col] = c(1.0);
            let x = numkern::solve_linear(&lhs, &e)?;
            for row in 0..4 {
                ginv[[row, col]] = x[row];
            }
        }
        let u = sqrt_k.dot(&ginv).dot(&sqrt_k) - &id4;
        let herm = u.dot(&eta).dot(&dagger(&u)) - &eta;
        defect = defect.max(max_abs(&herm));
        // symmetric two-mirror split of the cavity channel
        let t = ginv[[0, 0]] * c(kappa_c / 2.0);
        transmission.push(t.norm_sqr());
        reflection.push(u[[0, 0]].norm_sqr());
        u_list.push(u);
    }
    Ok(HopfieldResponse {
        omega: omega_grid.to_vec(),
        u: u_list,
        transmission,
        reflection,
        unitarity_defect: defect,
        normal_modes,
    })
}
