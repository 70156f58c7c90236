//! Time-periodic driving of open systems: the Floquet-Liouville block
//! eigenproblem, trajectory/steady-state reconstruction, the
//! Floquet-Markov master equation built from the monodromy operator,
//! and the weak-drive effective Liouvillian used for driven
//! photon-counting statistics.
//!
//! Conventions: L(t) = sum_k e^{-i k w_d t} L^(k) with the monochromatic
//! drive contributing L^(+-1) = -i (F/2) e^{-+i phi} [D, .]; the block
//! matrix is L~[(n,m)] = L^(n-m) + i n w_d delta_nm and physical
//! solutions are reconstructed with e^{-i n w_d t} block phases.

use ndarray::{s, Array1, Array2};
use num_complex::Complex64 as C64;

use crate::numkern::{eig_general, propagate_ode, EigenSystem, GeneralEigen, OdeOptions};
use crate::open::{
    dressed_jump_operators, BathSpec, DensityMatrix, JumpTerm, LindbladGenerator,
};
use crate::qops::{dagger, identity, kron, max_abs, CMat, Operator};
use crate::{Error, Result};

fn c(x: f64) -> C64 {
    C64::new(x, 0.0)
}

const I1: C64 = C64::new(0.0, 1.0);

/// Monochromatic drive H(t) = H0 + F cos(w_d t + phi) drive_op.
#[derive(Debug, Clone)]
pub struct DriveSpec {
    pub f: f64,
    pub omega_d: f64,
    pub phi: f64,
    pub drive_op: Operator,
}

impl DriveSpec {
    pub fn new(f: f64, omega_d: f64, phi: f64, drive_op: Operator) -> Result<Self> {
        if !(omega_d > 0.0) {
            return Err(Error::IncompatibleSpace(format!(
                "drive frequency must be positive, got {omega_d}"
            )));
        }
        Ok(DriveSpec {
            f,
            omega_d,
            phi,
            drive_op,
        })
    }

    pub fn period(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.omega_d
    }
}

/// Map x into the first Brillouin zone (-w/2, w/2].
pub fn to_zone(x: f64, omega_d: f64) -> f64 {
    let mut y = x % omega_d;
    if y <= -omega_d / 2.0 {
        y += omega_d;
    } else if y > omega_d / 2.0 {
        y -= omega_d;
    }
    y
}

fn commutator_superop(d_mat: &CMat) -> CMat {
    let d = d_mat.nrows();
    let id = identity(d);
    kron(d_mat, &id) - kron(&id, &d_mat.t().to_owned())
}

/// Floquet-Liouville eigenproblem data over the extended space
/// (dimension d^2 (2 N_F + 1)).
#[derive(Debug, Clone)]
pub struct FloquetLiouvillian {
    pub l0: LindbladGenerator,
    pub drive: DriveSpec,
    pub n_f: usize,
    pub eigen: GeneralEigen,
    /// indices of eigenvalues with Im in (-w_d/2, w_d/2]
    pub zone: Vec<usize>,
}

fn assemble_big_matrix(l0_sup: &CMat, drive: &DriveSpec, n_f: usize) -> CMat {
    let d2 = l0_sup.nrows();
    let nb = 2 * n_f + 1;
    let dsup = commutator_superop(&drive.drive_op.matrix);
    let phase = C64::from_polar(1.0, drive.phi);
    // L^(+1) = -i F/2 e^{-i phi} [D, .], L^(-1) with e^{+i phi}
    let l_plus = dsup.mapv(|z| z * (-I1) * c(drive.f / 2.0) * phase.conj());
    let l_minus = dsup.mapv(|z| z * (-I1) * c(drive.f / 2.0) * phase);
    let mut big: CMat = Array2::zeros((d2 * nb, d2 * nb));
    for p in 0..nb {
        let n = p as i64 - n_f as i64;
        let mut diag = big.slice_mut(s![p * d2..(p + 1) * d2, p * d2..(p + 1) * d2]);
        diag.assign(l0_sup);
        for i in 0..d2 {
            diag[[i, i]] += I1 * c(n as f64 * drive.omega_d);
        }
        if drive.f != 0.0 {
            if p + 1 < nb {
                big.slice_mut(s![p * d2..(p + 1) * d2, (p + 1) * d2..(p + 2) * d2])
                    .assign(&l_minus);
                big.slice_mut(s![(p + 1) * d2..(p + 2) * d2, p * d2..(p + 1) * d2])
                    .assign(&l_plus);
            }
        }
    }
    big
}

fn zone_indices(values: &[C64], omega_d: f64) -> Vec<usize> {
    (0..values.len())
        .filter(|&i| {
            let im = values[i].im;
            im > -omega_d / 2.0 && im <= omega_d / 2.0
        })
        .collect()
}

/// Zone eigenvalues that are well represented at the current Fourier
/// cutoff: relative weight in the two edge blocks below 1e-6. The
/// others are replicas whose blocks got truncated; they cannot be
/// expected to be stationary in N_F.
fn retained_zone(ge: &GeneralEigen, omega_d: f64, d2: usize, n_f: usize) -> Vec<usize> {
    let nb = 2 * n_f + 1;
    zone_indices(&ge.values, omega_d)
        .into_iter()
        .filter(|&i| {
            let col = ge.right.column(i);
            let total: f64 = col.iter().map(|z| z.norm_sqr()).sum();
            let edge: f64 = col
                .slice(s![..d2])
                .iter()
                .chain(col.slice(s![(nb - 1) * d2..]).iter())
                .map(|z| z.norm_sqr())
                .sum();
            edge < 1e-6 * total
        })
        .collect()
}

/// Trace-normalized rho_ss(0) from the zero mode, if unique.
fn zero_mode_state(ge: &GeneralEigen, d2: usize, n_f: usize) -> Option<CMat> {
    let d = (d2 as f64).sqrt() as usize;
    let zeros: Vec<usize> = (0..ge.values.len())
        .filter(|&i| ge.values[i].norm() < 1e-9)
        .collect();
    if zeros.len() != 1 {
        return None;
    }
    let col = ge.right.column(zeros[0]);
    let nb = 2 * n_f + 1;
    let mut rho: CMat = Array2::zeros((d, d));
    for p in 0..nb {
        for i in 0..d {
            for j in 0..d {
                rho[[i, j]] += col[p * d2 + i * d + j];
            }
        }
    }
    let tr: C64 = (0..d).map(|i| rho[[i, i]]).sum();
    if tr.norm() < 1e-12 {
        return None;
    }
    Some(rho.mapv(|z| z / tr))
}

/// Build the Floquet-Liouville block matrix, growing N_F in steps of 2
/// until the zone eigenvalues are stable to 1e-8.
pub fn build_floquet_liouvillian(
    l0: &LindbladGenerator,
    drive: &DriveSpec,
    n_f_start: usize,
) -> Result<FloquetLiouvillian> {
    const CAP: usize = 15;
    let l0_sup = l0.superoperator();
    let mut n_f = n_f_start.max(1);
    let mut prev: Option<(usize, GeneralEigen)> = None;
    loop {
        let big = assemble_big_matrix(&l0_sup, drive, n_f);
        let ge = eig_general(&big)?;
        if let Some((p_nf, ref pge)) = prev {
            let pz = retained_zone(pge, drive.omega_d, l0_sup.nrows(), p_nf);
            let mut residual = pz
                .iter()
                .map(|&i| {
                    ge.values
                        .iter()
                        .map(|z| (z - pge.values[i]).norm())
                        .fold(f64::INFINITY, f64::min)
                })
                .fold(0.0, f64::max);
            // eigenvalues converge faster than eigenvectors; also pin
            // down the zero-mode state (the physical steady state)
            if let (Some(a), Some(b)) = (
                zero_mode_state(pge, l0_sup.nrows(), p_nf),
                zero_mode_state(&ge, l0_sup.nrows(), n_f),
            ) {
                residual = residual.max(max_abs(&(a - b)));
            }
            if residual < 1e-8 || drive.f == 0.0 {
                let zone = zone_indices(&ge.values, drive.omega_d);
                return Ok(FloquetLiouvillian {
                    l0: l0.clone(),
                    drive: drive.clone(),
                    n_f,
                    eigen: ge,
                    zone,
                });
            }
            if n_f + 2 > CAP {
                return Err(Error::FloquetCutoffCap { cap: CAP, residual });
            }
        } else if drive.f == 0.0 {
            let zone = zone_indices(&ge.values, drive.omega_d);
            return Ok(FloquetLiouvillian {
                l0: l0.clone(),
                drive: drive.clone(),
                n_f,
                eigen: ge,
                zone,
            });
        }
        prev = Some((n_f, ge));
        n_f += 2;
    }
}

impl FloquetLiouvillian {
    pub fn dim(&self) -> usize {
        self.l0.dim()
    }

    fn n_blocks(&self) -> usize {
        2 * self.n_f + 1
    }

    /// rho(t) vec from mode coefficients: sum_a c_a e^{W_a t}
    /// sum_n e^{-i n w_d t} R_a^(n)
    fn reconstruct(&self, coeffs: &Array1<C64>, t: f64) -> CMat {
        let d = self.dim();
        let d2 = d * d;
        let nb = self.n_blocks();
        let mut out: Array1<C64> = Array1::zeros(d2);
        let maxc = coeffs.iter().map(|z| z.norm()).fold(0.0, f64::max);
        for (a, &ca) in coeffs.iter().enumerate() {
            if ca.norm() < 1e-15 * maxc {
                continue;
            }
            let w = (self.eigen.values[a] * c(t)).exp() * ca;
            let col = self.eigen.right.column(a);
            for p in 0..nb {
                let n = p as i64 - self.n_f as i64;
                let ph = C64::from_polar(1.0, -(n as f64) * self.drive.omega_d * t) * w;
                for i in 0..d2 {
                    out[i] += ph * col[p * d2 + i];
                }
            }
        }
        Array2::from_shape_vec((d, d), out.to_vec()).expect("d^2 vec")
    }

    fn mode_coefficients(&self, rho0: &CMat) -> Array1<C64> {
        let d = self.dim();
        let d2 = d * d;
        let nb = self.n_blocks();
        // embedding |rho0>> tensor |0): block n = 0
        let mut ext: Array1<C64> = Array1::zeros(d2 * nb);
        for (i, z) in rho0.iter().enumerate() {
            ext[self.n_f * d2 + i] = *z;
        }
        let n = self.eigen.values.len();
        let mut coeffs = Array1::zeros(n);
        for a in 0..n {
            let la = self.eigen.left.column(a);
            coeffs[a] = la.iter().zip(ext.iter()).map(|(x, y)| x.conj() * y).sum();
        }
        coeffs
    }
}

/// Trajectory by Floquet eigen-reconstruction; falls back to direct
/// time integration when the spectrum is defective.
pub fn floquet_dynamics(
    fl: &FloquetLiouvillian,
    rho0: &DensityMatrix,
    t_grid: &[f64],
) -> Result<Vec<CMat>> {
    if fl.eigen.defective {
        log::warn!("floquet_dynamics: defective Floquet-Liouville spectrum, falling back to time integration");
        return propagate_driven(&fl.l0, &fl.drive, rho0, t_grid);
    }
    let coeffs = fl.mode_coefficients(&rho0.matrix);
    let mut out = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let rho = fl.reconstruct(&coeffs, t);
        let tr: C64 = (0..rho.nrows()).map(|i| rho[[i, i]]).sum();
        if (tr.re - 1.0).abs() > 1e-9 || tr.im.abs() > 1e-9 {
            return Err(Error::Numerics(format!(
                "floquet_dynamics trace drift {tr} at t = {t}"
            )));
        }
        out.push(rho);
    }
    Ok(out)
}

/// Periodic steady state rho_ss(t) of the driven generator.
#[derive(Debug, Clone)]
pub struct PeriodicSteadyState {
    /// Fourier blocks R^(n), n = -N_F..N_F
    pub blocks: Vec<CMat>,
    pub omega_d: f64,
}

impl PeriodicSteadyState {
    pub fn at(&self, t: f64) -> CMat {
        let n_f = (self.blocks.len() - 1) / 2;
        let d = self.blocks[0].nrows();
        let mut rho: CMat = Array2::zeros((d, d));
        for (p, b) in self.blocks.iter().enumerate() {
            let n = p as i64 - n_f as i64;
            let ph = C64::from_polar(1.0, -(n as f64) * self.omega_d * t);
            rho = rho + b.mapv(|z| z * ph);
        }
        rho
    }
}

/// Extract the unique zero mode of the Floquet-Liouville matrix as a
/// periodic steady-state sampler.
pub fn floquet_steady_state(fl: &FloquetLiouvillian) -> Result<PeriodicSteadyState> {
    let d = fl.dim();
    let d2 = d * d;
    let zero_modes: Vec<usize> = fl
        .zone
        .iter()
        .cloned()
        .filter(|&i| fl.eigen.values[i].norm() < 1e-9)
        .collect();
    if zero_modes.len() != 1 {
        return Err(Error::DegenerateSteadyState {
            n_slow: zero_modes.len(),
            gap: 0.0,
        });
    }
    let col = fl.eigen.right.column(zero_modes[0]);
    let nb = fl.n_blocks();
    let mut blocks: Vec<CMat> = (0..nb)
        .map(|p| {
            Array2::from_shape_vec(
                (d, d),
                col.slice(s![p * d2..(p + 1) * d2]).to_vec(),
            )
            .expect("block")
        })
        .collect();
    // normalize: the time-averaged trace sits in the n = 0 block
    let tr: C64 = (0..d).map(|i| blocks[fl.n_f][[i, i]]).sum();
    if tr.norm() < 1e-12 {
        return Err(Error::Numerics("traceless Floquet zero mode".into()));
    }
    for b in blocks.iter_mut() {
        *b = b.mapv(|z| z / tr);
    }
    // hermitize pairwise: R^(-n) should equal R^(n) dagger
    for p in 0..nb {
        let q = nb - 1 - p;
        if p <= q {
            let sym = (blocks[p].clone() + dagger(&blocks[q])).mapv(|z| z * c(0.5));
            blocks[q] = dagger(&sym);
            blocks[p] = sym;
        }
    }
    let pss = PeriodicSteadyState {
        blocks,
        omega_d: fl.drive.omega_d,
    };
    // sanity at sampled phases
    for k in 0..8 {
        let rho = pss.at(k as f64 / 8.0 * fl.drive.period());
        let tr: C64 = (0..d).map(|i| rho[[i, i]]).sum();
        if (tr.re - 1.0).abs() > 1e-7 || tr.im.abs() > 1e-7 {
            return Err(Error::Numerics(format!("periodic steady trace {tr}")));
        }
        let (vals, _) = crate::numkern::eigh_dense(
            &(rho.clone() + dagger(&rho)).mapv(|z| z * c(0.5)),
        )?;
        if vals[0] < -1e-7 {
            return Err(Error::Numerics(format!(
                "periodic steady negative eigenvalue {}",
                vals[0]
            )));
        }
    }
    Ok(pss)
}

/// Periodic steady state by direct linear solve of the block system
/// (one structurally redundant equation replaced by the central-block
/// trace constraint), grown in N_F until the Fourier blocks are stable
/// to `tol`. Much cheaper than the full eigensolve when only the
/// steady state is needed.
pub fn floquet_steady_state_direct(
    l0: &LindbladGenerator,
    drive: &DriveSpec,
    n_f_start: usize,
    tol: f64,
) -> Result<PeriodicSteadyState> {
    const CAP: usize = 21;
    let l0_sup = l0.superoperator();
    let d = l0.dim();
    let d2 = d * d;
    let mut n_f = n_f_start.max(1);
    let mut prev: Option<Vec<CMat>> = None;
    loop {
        let mut big = assemble_big_matrix(&l0_sup, drive, n_f);
        let dim = big.nrows();
        let r0 = n_f * d2; // (central block, element 00) row
        for col in 0..dim {
            big[[r0, col]] = c(0.0);
        }
        for i in 0..d {
            big[[r0, n_f * d2 + i * d + i]] = c(1.0);
        }
        let mut rhs: Array1<C64> = Array1::zeros(dim);
        rhs[r0] = c(1.0);
        let sol = crate::numkern::solve_linear(&big, &rhs)?;
        let mut blocks: Vec<CMat> = (0..2 * n_f + 1)
            .map(|p| {
                Array2::from_shape_vec((d, d), sol.slice(s![p * d2..(p + 1) * d2]).to_vec())
                    .expect("block")
            })
            .collect();
        let nb = blocks.len();
        for p in 0..nb {
            let q = nb - 1 - p;
            if p <= q {
                let sym = (blocks[p].clone() + dagger(&blocks[q])).mapv(|z| z * c(0.5));
                blocks[q] = dagger(&sym);
                blocks[p] = sym;
            }
        }
        if let Some(pb) = prev {
            // compare aligned by harmonic index
            let off = (blocks.len() - pb.len()) / 2;
            let mut residual = 0.0f64;
            for (k, b) in pb.iter().enumerate() {
                residual = residual.max(max_abs(&(b - &blocks[k + off])));
            }
            for (k, b) in blocks.iter().enumerate() {
                if k < off || k >= off + pb.len() {
                    residual = residual.max(max_abs(b));
                }
            }
            if residual < tol {
                return Ok(PeriodicSteadyState {
                    blocks,
                    omega_d: drive.omega_d,
                });
            }
            if n_f + 2 > CAP {
                return Err(Error::FloquetCutoffCap { cap: CAP, residual });
            }
        }
        prev = Some(blocks);
        n_f += 2;
    }
}

/// Direct integration of the time-dependent master equation
/// d rho/dt = L0 rho - i F cos(w_d t + phi) [D, rho].
pub fn propagate_driven(
    l0: &LindbladGenerator,
    drive: &DriveSpec,
    rho0: &DensityMatrix,
    t_grid: &[f64],
) -> Result<Vec<CMat>> {
    propagate_driven_opts(l0, drive, rho0, t_grid, &OdeOptions::default())
}

/// As propagate_driven, with explicit solver tolerances.
pub fn propagate_driven_opts(
    l0: &LindbladGenerator,
    drive: &DriveSpec,
    rho0: &DensityMatrix,
    t_grid: &[f64],
    opts: &OdeOptions,
) -> Result<Vec<CMat>> {
    let d = l0.dim();
    let l0_sup = l0.superoperator();
    let dsup = commutator_superop(&drive.drive_op.matrix);
    let (f, wd, phi) = (drive.f, drive.omega_d, drive.phi);
    let rhs = move |t: f64, v: &Array1<C64>| -> Array1<C64> {
        let mut out = l0_sup.dot(v);
        if f != 0.0 {
            let amp = -I1 * c(f * (wd * t + phi).cos());
            out = out + dsup.dot(v).mapv(|z| z * amp);
        }
        out
    };
    let v0 = Array1::from_iter(rho0.matrix.iter().cloned());
    let sols = propagate_ode(&rhs, &v0, t_grid, opts)?;
    Ok(sols
        .into_iter()
        .map(|v| Array2::from_shape_vec((d, d), v.to_vec()).expect("d^2"))
        .collect())
}

/// Floquet states of the driven Hamiltonian, from the monodromy
/// operator U(T, 0).
#[derive(Debug, Clone)]
pub struct FloquetStates {
    /// quasienergies in (-w_d/2, w_d/2]
    pub quasienergies: Vec<f64>,
    /// |u_a(t_k)> as columns, one matrix per period sample
    pub modes_t: Vec<CMat>,
    pub t_samples: Vec<f64>,
    pub omega_d: f64,
}

fn schrodinger_propagate(
    h0: &CMat,
    drive: &DriveSpec,
    psi0: &Array1<C64>,
    t_grid: &[f64],
) -> Result<Vec<Array1<C64>>> {
    let (f, wd, phi) = (drive.f, drive.omega_d, drive.phi);
    let dmat = drive.drive_op.matrix.clone();
    let h0 = h0.clone();
    let rhs = move |t: f64, v: &Array1<C64>| -> Array1<C64> {
        let mut out = h0.dot(v);
        if f != 0.0 {
            out = out + dmat.dot(v).mapv(|z| z * c(f * (wd * t + phi).cos()));
        }
        out.mapv(|z| z * (-I1))
    };
    propagate_ode(&rhs, psi0, t_grid, &OdeOptions::default())
}

/// Compute quasienergies and period-sampled Floquet modes with
/// n_samples points over one period.
pub fn floquet_states(h0: &Operator, drive: &DriveSpec, n_samples: usize) -> Result<FloquetStates> {
    let d = h0.space.dim();
    let t = drive.period();
    // monodromy U(T, 0), column by column
    let mut u_t: CMat = Array2::zeros((d, d));
    for col in 0..d {
        let mut e = Array1::zeros(d);
        e[col] = c(1.0);
        let sol = schrodinger_propagate(&h0.matrix, drive, &e, &[0.0, t])?;
        for row in 0..d {
            u_t[[row, col]] = sol[1][row];
        }
    }
    let ge = eig_general(&u_t)?;
    for z in &ge.values {
        if (z.norm() - 1.0).abs() > 1e-7 {
            return Err(Error::Numerics(format!(
                "monodromy eigenvalue off the unit circle: |{z}| = {}",
                z.norm()
            )));
        }
    }
    // U(T)|u(0)> = e^{-i eps T}|u(0)>
    let mut quasi: Vec<f64> = ge
        .values
        .iter()
        .map(|z| to_zone(-z.arg() / t, drive.omega_d))
        .collect();
    for i in 0..quasi.len() {
        for j in i + 1..quasi.len() {
            if (quasi[i] - quasi[j]).abs() < 1e-9 {
                log::warn!(
                    "floquet_states: quasienergy degeneracy {} ~ {}; secular approximation breaks down",
                    quasi[i],
                    quasi[j]
                );
            }
        }
    }
    // |u_a(t)> = e^{+i eps t} U(t, 0)|u_a(0)>
    let t_samples: Vec<f64> = (0..n_samples).map(|k| k as f64 * t / n_samples as f64).collect();
    let mut grid = t_samples.clone();
    grid.push(t); // propagate over the full period for accuracy symmetry
    let mut modes_t: Vec<CMat> = vec![Array2::zeros((d, d)); n_samples];
    for a in 0..d {
        let u0 = ge.right.column(a).to_owned();
        let sols = schrodinger_propagate(&h0.matrix, drive, &u0, &grid)?;
        for (k, tv) in t_samples.iter().enumerate() {
            let ph = C64::from_polar(1.0, quasi[a] * tv);
            for row in 0..d {
                modes_t[k][[row, a]] = sols[k][row] * ph;
            }
        }
    }
    // sort by quasienergy for reproducibility
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| quasi[i].partial_cmp(&quasi[j]).unwrap());
    let quasi_sorted: Vec<f64> = order.iter().map(|&i| quasi[i]).collect();
    let modes_sorted: Vec<CMat> = modes_t
        .iter()
        .map(|m| {
            let mut s: CMat = Array2::zeros((d, d));
            for (new, &old) in order.iter().enumerate() {
                s.column_mut(new).assign(&m.column(old));
            }
            s
        })
        .collect();
    quasi = quasi_sorted;
    Ok(FloquetStates {
        quasienergies: quasi,
        modes_t: modes_sorted,
        t_samples,
        omega_d: drive.omega_d,
    })
}

/// Fourier components A^(k)_ab = (1/T) int_0^T e^{-i k w_d t}
/// <u_a(t)|A|u_b(t)> dt by the periodic trapezoidal rule.
fn fourier_components(fs: &FloquetStates, a_mat: &CMat, k_max: i64) -> Vec<CMat> {
    let d = fs.modes_t[0].nrows();
    let ns = fs.modes_t.len();
    let mut out = vec![Array2::zeros((d, d)); (2 * k_max + 1) as usize];
    for (s_idx, m) in fs.modes_t.iter().enumerate() {
        let sandwich = dagger(m).dot(a_mat).dot(m);
        let tv = fs.t_samples[s_idx];
        for (ki, k) in (-k_max..=k_max).enumerate() {
            let ph = C64::from_polar(1.0 / ns as f64, -(k as f64) * fs.omega_d * tv);
            out[ki] = out[ki].clone() + sandwich.mapv(|z| z * ph);
        }
    }
    out
}

/// Floquet-Markov master equation in the |u_a(0)> basis: monodromy
/// Floquet states, Fourier-resolved jump operators at
/// omega = eps_b - eps_a + k w_d > 0, rates gamma(omega).
pub fn floquet_markov_me(
    h0: &Operator,
    baths: &[BathSpec],
    drive: &DriveSpec,
) -> Result<(LindbladGenerator, FloquetStates)> {
    let d = h0.space.dim();
    let k_max: i64 = 6;
    // refine the period sampling until the Fourier components settle
    let mut n_samples = 256;
    let mut fs = floquet_states(h0, drive, n_samples)?;
    let mut comps: Vec<Vec<CMat>> = baths
        .iter()
        .map(|b| fourier_components(&fs, &b.coupling_op.matrix, k_max))
        .collect();
    loop {
        let fs2 = floquet_states(h0, drive, n_samples * 2)?;
        let comps2: Vec<Vec<CMat>> = baths
            .iter()
            .map(|b| fourier_components(&fs2, &b.coupling_op.matrix, k_max))
            .collect();
        let mut change = 0.0f64;
        for (c1, c2) in comps.iter().zip(&comps2) {
            for (m1, m2) in c1.iter().zip(c2) {
                change = change.max(max_abs(&(m1 - m2)));
            }
        }
        fs = fs2;
        comps = comps2;
        if change < 1e-8 {
            break;
        }
        n_samples *= 2;
        if n_samples > 8192 {
            return Err(Error::Numerics(format!(
                "Fourier components not converged at {n_samples} samples (change {change:.3e})"
            )));
        }
    }
    // jump operators grouped by frequency
    let mut jumps: Vec<JumpTerm> = Vec::new();
    for (bath, comp) in baths.iter().zip(&comps) {
        let mut freq_ops: Vec<(f64, CMat)> = Vec::new();
        let max_amp = comp
            .iter()
            .flat_map(|m| m.iter())
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        for (ki, k) in (-k_max..=k_max).enumerate() {
            for a in 0..d {
                for b in 0..d {
                    // interaction-picture element rotates as
                    // e^{i(eps_a - eps_b + k w_d) t} = e^{-i w t}
                    let w = fs.quasienergies[b] - fs.quasienergies[a]
                        - k as f64 * drive.omega_d;
                    let amp = comp[ki][[a, b]];
                    if w <= 1e-9 || amp.norm() < 1e-7 * max_amp {
                        continue;
                    }
                    match freq_ops.iter_mut().find(|(w0, _)| (*w0 - w).abs() < 1e-9) {
                        Some((_, op)) => op[[a, b]] += amp,
                        None => {
                            let mut op: CMat = Array2::zeros((d, d));
                            op[[a, b]] = amp;
                            freq_ops.push((w, op));
                        }
                    }
                }
            }
        }
        for (w, op) in freq_ops {
            jumps.push(JumpTerm {
                rate: bath.rate_at(w),
                omega_bar: w,
                op,
            });
        }
    }
    let h_eff = Array2::from_diag(&Array1::from(
        fs.quasienergies.iter().map(|&e| c(e)).collect::<Vec<_>>(),
    ));
    Ok((
        LindbladGenerator {
            h_eff,
            jumps,
            space: h0.space.clone(),
        },
        fs,
    ))
}

/// Weak-drive effective Liouvillian for a driven dressed system, in the
/// frame rotating at w_d with respect to the dressed excitation number
/// n_i = round((E_i - E_0)/w_d). Returns the generator (dressed-basis)
/// and the static rung-lowering part of the drive operator, which
/// doubles as the detector field O+ in this frame.
pub fn effective_drive_liouvillian(
    h: &Operator,
    eigen: &EigenSystem,
    baths: &[BathSpec],
    drive: &DriveSpec,
) -> Result<(LindbladGenerator, CMat)> {
    let d = h.space.dim();
    let v = &eigen.vectors;
    let e0 = eigen.values[0];
    let rungs: Vec<i64> = eigen
        .values
        .iter()
        .map(|&e| ((e - e0) / drive.omega_d).round() as i64)
        .collect();
    // rung-lowering part of the drive operator
    let d_e = dagger(v).dot(&drive.drive_op.matrix).dot(v);
    let mut ladder: CMat = Array2::zeros((d, d));
    for i in 0..d {
        for j in 0..d {
            if rungs[j] - rungs[i] == 1 {
                ladder[[i, j]] = d_e[[i, j]];
            }
        }
    }
    let phase = C64::from_polar(1.0, drive.phi);
    let mut h_eff: CMat = Array2::from_diag(&Array1::from(
        (0..d)
            .map(|i| c(eigen.values[i] - e0 - rungs[i] as f64 * drive.omega_d))
            .collect::<Vec<_>>(),
    ));
    h_eff = h_eff
        + ladder.mapv(|z| z * c(drive.f / 2.0) * phase)
        + dagger(&ladder).mapv(|z| z * c(drive.f / 2.0) * phase.conj());
    // dressed jumps, transformed to the energy basis and split by rung
    // change so every channel is static in the rotating frame
    let mut jumps = Vec::new();
    for bath in baths {
        for (w, op_lab) in dressed_jump_operators(eigen, &bath.coupling_op, bath)? {
            let op_e = dagger(v).dot(&op_lab).dot(v);
            let mut by_dn: Vec<(i64, CMat)> = Vec::new();
            for i in 0..d {
                for j in 0..d {
                    if op_e[[i, j]].norm() < 1e-14 {
                        continue;
                    }
                    let dn = rungs[j] - rungs[i];
                    match by_dn.iter_mut().find(|(k, _)| *k == dn) {
                        Some((_, m)) => m[[i, j]] += op_e[[i, j]],
                        None => {
                            let mut m: CMat = Array2::zeros((d, d));
                            m[[i, j]] = op_e[[i, j]];
                            by_dn.push((dn, m));
                        }
                    }
                }
            }
            for (_, m) in by_dn {
                jumps.push(JumpTerm {
                    rate: bath.rate_at(w),
                    omega_bar: w,
                    op: m,
                });
            }
        }
    }
    Ok((
        LindbladGenerator {
            h_eff,
            jumps,
            space: h.space.clone(),
        },
        ladder,
    ))
}

/// Brute-force period-averaged g2(0) of the driven system by direct
/// time integration of the lab-frame master equation.
pub fn driven_g2_zero_oracle(
    l0: &LindbladGenerator,
    drive: &DriveSpec,
    o_plus: &CMat,
    rho0: &DensityMatrix,
    n_relax_periods: usize,
    n_samples: usize,
    opts: &OdeOptions,
) -> Result<f64> {
    let t = drive.period();
    let mut grid: Vec<f64> = vec![0.0];
    grid.push(n_relax_periods as f64 * t);
    for k in 1..=n_samples {
        grid.push((n_relax_periods as f64 + k as f64 / n_samples as f64) * t);
    }
    let traj = propagate_driven_opts(l0, drive, rho0, &grid, opts)?;
    let o_minus = dagger(o_plus);
    let g1 = o_minus.dot(o_plus);
    let g2op = o_minus.dot(&o_minus).dot(o_plus).dot(o_plus);
    let trace_of = |m: &CMat| -> C64 { (0..m.nrows()).map(|i| m[[i, i]]).sum() };
    let mut num = 0.0;
    let mut den = 0.0;
    // skip rho(0) and rho(relax): the remaining n_samples points tile one
    // period uniformly (phase k/n_samples, k = 1..n_samples)
    for rho in traj.iter().skip(2) {
        num += trace_of(&g2op.dot(rho)).re;
        den += trace_of(&g1.dot(rho)).re;
    }
    num /= n_samples as f64;
    den /= n_samples as f64;
    if den < 1e-14 {
        return Err(Error::DarkSteadyState { flux: den });
    }
    Ok(num / (den * den))
}
