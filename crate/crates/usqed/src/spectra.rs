//! Closed-system spectral methods: exact diagonalization with cutoff
//! convergence, the Jaynes-Cummings closed form, the Bloch-Siegert
//! effective Hamiltonian, the GRWA, the Braak exact solution, and the
//! variational polaron families.

use ndarray::{Array1, Array2};
use num_complex::Complex64 as C64;

use crate::numkern::{
    self, eig_hermitian_with_parity, find_roots, minimize, EigenSystem, MinimizeResult,
    SimplexOptions,
};
use crate::qops::{
    build_algebra, build_hamiltonian, dagger, displacement, dim_cap, expm_antihermitian,
    parity_operator, squeeze, CMat, HilbertSpec, Model, Operator, RabiParams, SpinBosonParams,
};
use crate::{Error, Result};

fn c(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// Spectrum converged in the Fock cutoff.
#[derive(Debug, Clone)]
pub struct ConvergedSpectrum {
    pub eigen: EigenSystem,
    pub space: HilbertSpec,
    pub cutoff_used: usize,
    /// (cutoff, max level shift vs previous cutoff)
    pub cutoff_history: Vec<(usize, f64)>,
    pub n_converged: usize,
    /// +1/-1 per level for Rabi-shaped models, None otherwise.
    pub parities: Option<Vec<i8>>,
}

fn model_space(model: &Model, n: usize) -> Result<HilbertSpec> {
    match model {
        Model::Rabi(_) | Model::JaynesCummings(_) => HilbertSpec::rabi(n),
        Model::Hopfield(_) => HilbertSpec::new(n, 2, 0),
        Model::SpinBoson(p) => HilbertSpec::new(n, p.modes.len(), 1),
    }
}

fn diagonalize(model: &Model, n: usize) -> Result<(EigenSystem, HilbertSpec, Option<CMat>)> {
    let space = model_space(model, n)?;
    let h = build_hamiltonian(model, &space)?;
    let parity = if space.is_rabi_shaped() {
        Some(parity_operator(&space)?.matrix)
    } else {
        None
    };
    let eig = eig_hermitian_with_parity(&h, parity.as_ref())?;
    Ok((eig, space, parity))
}

/// Exact diagonalization with the cutoff raised until the lowest
/// `n_levels` stop moving by more than `tol`.
pub fn exact_spectrum(model: &Model, n_levels: usize, tol: f64, n_start: usize) -> Result<ConvergedSpectrum> {
    assert!(tol > 0.0 && n_levels >= 1);
    let mut n = n_start.max(n_levels + 2).max(8);
    let mut last = diagonalize(model, n)?;
    let mut history = Vec::new();
    loop {
        let n_next = n + (n / 2).max(8);
        if model_space(model, n_next)?.dim() > dim_cap() {
            return Err(Error::CutoffCapReached {
                cap: dim_cap(),
                shift: history.last().map(|&(_, s)| s).unwrap_or(f64::NAN),
            });
        }
        let next = diagonalize(model, n_next)?;
        let shift = (0..n_levels)
            .map(|k| (next.0.values[k] - last.0.values[k]).abs())
            .fold(0.0f64, f64::max);
        history.push((n_next, shift));
        last = next;
        n = n_next;
        if shift < tol {
            break;
        }
    }
    let (eig, space, parity) = last;
    let parities = parity.as_ref().map(|p| parity_labels(&eig, p, n_levels));
    Ok(ConvergedSpectrum {
        eigen: eig,
        space,
        cutoff_used: n,
        cutoff_history: history,
        n_converged: n_levels,
        parities,
    })
}

/// <P> per eigenvector, rounded to +/-1.
pub fn parity_labels(eig: &EigenSystem, parity: &CMat, n_levels: usize) -> Vec<i8> {
    let mut out = Vec::with_capacity(n_levels);
    for k in 0..n_levels.min(eig.values.len()) {
        let v = eig.vectors.column(k);
        let pv = parity.dot(&v);
        let mean: C64 = v.iter().zip(pv.iter()).map(|(a, b)| a.conj() * b).sum();
        out.push(if mean.re >= 0.0 { 1 } else { -1 });
    }
    out
}

/// Closed-form Jaynes-Cummings level: ground plus doublets
/// E_n(+/-) = omega (n - 1/2) +/- sqrt((Omega-omega)^2 + 4 g^2 n)/2.
pub fn jc_spectrum(params: &RabiParams, n_levels: usize) -> Vec<f64> {
    let (w, om, g) = (params.omega, params.splitting, params.g);
    let mut levels = vec![-om / 2.0];
    let mut n = 1usize;
    while levels.len() < n_levels + 2 {
        let nf = n as f64;
        let split = ((om - w).powi(2) + 4.0 * g * g * nf).sqrt() / 2.0;
        let center = w * (nf - 0.5);
        levels.push(center - split);
        levels.push(center + split);
        n += 1;
    }
    levels.sort_by(|a, b| a.partial_cmp(b).unwrap());
    levels.truncate(n_levels);
    levels
}

/// Bloch-Siegert spectrum with eigenstates rotated back to the lab frame.
pub struct BlochSiegertSpectrum {
    pub levels: Vec<f64>,
    /// Columns are lab-frame eigenstates U1 U2 |psi_BS>.
    pub lab_states: CMat,
    pub space: HilbertSpec,
}

/// H_BS = H_JC + g^2/(omega+Omega) [sigma_z (a'a + 1/2) - 1/2], with the
/// first-order state corrections applied through U1 and U2.
pub fn bloch_siegert_spectrum(params: &RabiParams, cutoff: usize) -> Result<BlochSiegertSpectrum> {
    let (w, om, g) = (params.omega, params.splitting, params.g);
    if g > 0.3 * w.min(w + om) {
        log::warn!(
            "bloch_siegert_spectrum: g = {g} beyond the perturbative regime (omega = {w}, splitting = {om})"
        );
    }
    let space = HilbertSpec::rabi(cutoff)?;
    let alg = build_algebra(&space)?;
    let mu = g * g / (w + om);
    let h_jc = build_hamiltonian(&Model::JaynesCummings(params.clone()), &space)?;
    let num = alg.adag[0].dot(&alg.a[0]);
    let shift = alg.sz[0].dot(&(num + crate::qops::identity(space.dim()).mapv(|z| z * c(0.5))))
        - crate::qops::identity(space.dim()).mapv(|z| z * c(0.5));
    let h_bs = Operator::new(
        space.clone(),
        h_jc.matrix.clone() + shift.mapv(|z| z * c(mu)),
        true,
    )?;
    let parity = parity_operator(&space)?;
    let eig = eig_hermitian_with_parity(&h_bs, Some(&parity.matrix))?;

    // lab-frame correction
    let g1 = (alg.a[0].dot(&alg.sm[0]) - alg.adag[0].dot(&alg.sp[0])).mapv(|z| z * c(g / (w + om)));
    let u1 = expm_antihermitian(&g1)?;
    let a2 = alg.a[0].dot(&alg.a[0]);
    let adag2 = alg.adag[0].dot(&alg.adag[0]);
    let g2 = alg.sz[0]
        .dot(&(a2 - adag2))
        .mapv(|z| z * c(g * g / (2.0 * w * (w + om))));
    let u2 = expm_antihermitian(&g2)?;
    let lab_states = u1.dot(&u2).dot(&eig.vectors);
    Ok(BlochSiegertSpectrum {
        levels: eig.values,
        lab_states,
        space,
    })
}

/// GRWA levels: the Rabi Hamiltonian rotated by the polaron unitary
/// U = exp[(g/omega) sigma_x (a - a')], truncated to its 2x2
/// {(down,N),(up,N-1)} blocks plus the isolated (down,0) ground entry,
/// then diagonalized blockwise.
pub fn grwa_spectrum(params: &RabiParams, cutoff: usize) -> Result<Vec<f64>> {
    let space = HilbertSpec::rabi(cutoff)?;
    let alg = build_algebra(&space)?;
    let (w, g) = (params.omega, params.g);
    let gen = alg.sx[0]
        .dot(&(&alg.a[0] - &alg.adag[0]))
        .mapv(|z| z * c(g / w));
    let u = expm_antihermitian(&gen)?;
    // enforce truncation unitarity before trusting the rotation
    let defect =
        crate::qops::max_abs(&(dagger(&u).dot(&u) - crate::qops::identity(space.dim())));
    if defect > 1e-8 {
        return Err(Error::TruncationUnitarity { defect, tol: 1e-8 });
    }
    let h = build_hamiltonian(&Model::Rabi(params.clone()), &space)?;
    let ht = dagger(&u).dot(&h.matrix).dot(&u);

    // spin index 0 = up; (s, n) -> s*cutoff + n
    let idx = |s: usize, n: usize| s * cutoff + n;
    let mut levels = vec![ht[[idx(1, 0), idx(1, 0)]].re];
    for n in 1..cutoff {
        let i = idx(1, n); // (down, N)
        let j = idx(0, n - 1); // (up, N-1)
        let (haa, hbb) = (ht[[i, i]].re, ht[[j, j]].re);
        let hab = ht[[i, j]];
        let tr = haa + hbb;
        let disc = ((haa - hbb).powi(2) + 4.0 * hab.norm_sqr()).sqrt();
        levels.push((tr - disc) / 2.0);
        levels.push((tr + disc) / 2.0);
    }
    levels.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(levels)
}

pub mod braak {
    //! Exact Rabi spectrum from the zeros of the transcendental
    //! functions G+/-(x), x = E/omega + (g/omega)^2.
    //!
    //! The power-series coefficients are built from the recursion
    //!   n K_n = f_{n-1}(x) K_{n-1} - K_{n-2},   K_0 = 1,
    //!   f_n(x) = 2 gt + (1/(2 gt)) (n - x + (Ot/2)^2 / (x - n)),
    //! (gt = g/omega, Ot = splitting/omega) obtained by substituting
    //! phi_1 = e^{-gt z} sum u_n (z+gt)^n, phi_2 = e^{-gt z} sum v_n (z+gt)^n
    //! into the Bargmann-space linear ODEs of the model, with
    //! u_n = (Ot/2) v_n / (x - n) and K_n = v_n. The substitution is
    //! re-checked numerically in the tests before anything trusts it.

    use super::*;

    /// Guard band around each pole x = n when scanning for roots.
    pub const POLE_GUARD: f64 = 1e-4;
    const SERIES_CAP: usize = 600;

    /// Evaluator for G+/-(x) at fixed rescaled couplings.
    #[derive(Debug, Clone)]
    pub struct BraakSeries {
        /// g / omega
        pub gt: f64,
        /// splitting / omega
        pub ot: f64,
    }

    impl BraakSeries {
        pub fn new(params: &RabiParams) -> Self {
            BraakSeries {
                gt: params.g / params.omega,
                ot: params.splitting / params.omega,
            }
        }

        /// Series coefficients K_0..K_m.
        pub fn coefficients(&self, x: f64, m: usize) -> Vec<f64> {
            let (g, ho) = (self.gt, self.ot / 2.0);
            let f = |n: f64| 2.0 * g + (n - x + ho * ho / (x - n)) / (2.0 * g);
            let mut k = Vec::with_capacity(m + 1);
            k.push(1.0);
            if m >= 1 {
                k.push(f(0.0));
            }
            for n in 2..=m {
                let kn = (f((n - 1) as f64) * k[n - 1] - k[n - 2]) / n as f64;
                k.push(kn);
            }
            k
        }

        /// (G_plus, G_minus) at x, adaptive truncation.
        pub fn eval(&self, x: f64) -> Result<(f64, f64)> {
            let (g, ho) = (self.gt, self.ot / 2.0);
            if (x - x.round()).abs() < 1e-12 && x.round() >= 0.0 {
                return Err(Error::SeriesNonConvergence { x, cap: 0 });
            }
            let f = |n: f64| 2.0 * g + (n - x + ho * ho / (x - n)) / (2.0 * g);
            let (mut km2, mut km1) = (0.0f64, 1.0f64); // K_{-1}, K_0
            let mut gp = 1.0 - ho / x;
            let mut gm = 1.0 + ho / x;
            let mut gpow = 1.0f64;
            let mut quiet = 0usize;
            for n in 1..=SERIES_CAP {
                let nf = n as f64;
                let kn = (f(nf - 1.0) * km1 - km2) / nf;
                gpow *= g;
                let base = kn * gpow;
                let tp = base * (1.0 - ho / (x - nf));
                let tm = base * (1.0 + ho / (x - nf));
                gp += tp;
                gm += tm;
                km2 = km1;
                km1 = kn;
                let scale = gp.abs().max(gm.abs()).max(1.0);
                if nf > x + 4.0 && tp.abs().max(tm.abs()) < 1e-13 * scale {
                    quiet += 1;
                    if quiet >= 5 {
                        return Ok((gp, gm));
                    }
                } else {
                    quiet = 0;
                }
            }
            Err(Error::SeriesNonConvergence { x, cap: SERIES_CAP })
        }
    }

    /// One root of G+ or G-.
    #[derive(Debug, Clone, Copy)]
    pub struct BraakLevel {
        pub energy: f64,
        pub parity: i8,
        /// Set when a G+ and a G- root collided within 1e-8 of each
        /// other (possible Juddian degeneracy).
        pub juddian: bool,
    }

    pub fn braak_g(x: f64, params: &RabiParams) -> Result<(f64, f64)> {
        BraakSeries::new(params).eval(x)
    }

    /// All levels with E <= e_max, from pole-aware scans of G+ and G-.
    pub fn braak_spectrum(params: &RabiParams, e_max: f64) -> Result<Vec<BraakLevel>> {
        let series = BraakSeries::new(params);
        let w = params.omega;
        let (gt, ot) = (series.gt, series.ot);
        // ground state sits above -gt^2 - ot/2 (rescaled units)
        let x_lo = gt * gt + (-gt * gt - ot / 2.0) - 0.25;
        let x_hi = gt * gt + e_max / w + 1e-9;

        // subintervals split at the poles x = n with guard bands
        let mut intervals = Vec::new();
        let mut cursor = x_lo;
        let mut n = x_lo.max(0.0).ceil() as i64;
        while (n as f64) < x_hi {
            let p = n as f64;
            if p - POLE_GUARD > cursor {
                intervals.push((cursor, p - POLE_GUARD));
            }
            cursor = p + POLE_GUARD;
            n += 1;
        }
        if x_hi > cursor {
            intervals.push((cursor, x_hi));
        }

        let mut plus_roots = Vec::new();
        let mut minus_roots = Vec::new();
        for &(lo, hi) in &intervals {
            let n_pts = (((hi - lo) * 240.0).ceil() as usize).max(8);
            let grid: Vec<f64> = (0..=n_pts)
                .map(|i| lo + (hi - lo) * i as f64 / n_pts as f64)
                .collect();
            for (sel, sink) in [(0usize, &mut plus_roots), (1usize, &mut minus_roots)] {
                let f = |x: f64| {
                    let (gp, gm) = series.eval(x).unwrap_or((f64::NAN, f64::NAN));
                    if sel == 0 {
                        gp
                    } else {
                        gm
                    }
                };
                match find_roots(f, &grid) {
                    Ok(mut r) => sink.append(&mut r),
                    Err(Error::NoSignChange) => {}
                    Err(e) => return Err(e),
                }
            }
        }

        // G+ roots carry parity +1 (checked against exact-diagonalization
        // parity labels in the tests)
        let mut levels: Vec<BraakLevel> = Vec::new();
        for (roots, parity) in [(plus_roots, 1i8), (minus_roots, -1i8)] {
            for x in roots {
                levels.push(BraakLevel {
                    energy: (x - gt * gt) * w,
                    parity,
                    juddian: false,
                });
            }
        }
        levels.sort_by(|a, b| a.energy.partial_cmp(&b.energy).unwrap());
        // collisions between opposite-parity roots
        let mut i = 0;
        while i + 1 < levels.len() {
            if (levels[i + 1].energy - levels[i].energy).abs() < 1e-8
                && levels[i].parity != levels[i + 1].parity
            {
                levels[i].juddian = true;
                levels[i + 1].juddian = true;
                log::warn!(
                    "braak_spectrum: possible Juddian degeneracy near E = {}",
                    levels[i].energy
                );
            }
            i += 1;
        }
        levels.retain(|l| l.energy <= e_max);
        Ok(levels)
    }
}

/// Result of a variational polaron minimization.
#[derive(Debug, Clone)]
pub struct VariationalGround {
    pub energy: f64,
    pub beta: f64,
    pub lambda: f64,
    pub state: Array1<C64>,
    pub space: HilbertSpec,
    pub stagnated: bool,
}

fn polaron_state(
    space: &HilbertSpec,
    beta: f64,
    lambda: f64,
) -> Result<Array1<C64>> {
    let n = space.fock_cutoff;
    // mode-only factor: D(+/-beta) S(lambda) |0>
    let mode_space = HilbertSpec::new(n, 1, 0)?;
    let dm = displacement(&mode_space, c(-beta), 0)?;
    let dp = displacement(&mode_space, c(beta), 0)?;
    let s0 = if lambda != 0.0 {
        squeeze(&mode_space, lambda, 0)?.matrix.column(0).to_owned()
    } else {
        let mut vac = Array1::zeros(n);
        vac[0] = c(1.0);
        vac
    };
    let (svm, svp) = (dm.matrix.dot(&s0), dp.matrix.dot(&s0));
    // |psi> = |+> D(-beta) S |0> - |-> D(beta) S |0>, spin index 0 = up
    let inv_sqrt2 = 1.0 / 2f64.sqrt();
    let mut psi = Array1::zeros(2 * n);
    for k in 0..n {
        // |+> = (|up> + |down>)/sqrt(2)
        psi[k] = (svm[k] - svp[k]) * c(inv_sqrt2);
        psi[n + k] = (svm[k] + svp[k]) * c(inv_sqrt2);
    }
    let norm: f64 = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if norm < 1e-14 {
        return Err(Error::Numerics("polaron trial state collapsed".into()));
    }
    Ok(psi.mapv(|z| z / c(norm)))
}

/// Minimize the parity-even displaced (optionally squeezed) two-branch
/// trial state over (beta, lambda >= 0).
pub fn variational_polaron_ground(
    params: &RabiParams,
    with_squeezing: bool,
) -> Result<VariationalGround> {
    let cutoff = 80;
    let space = HilbertSpec::rabi(cutoff)?;
    let h = build_hamiltonian(&Model::Rabi(params.clone()), &space)?;
    let energy = |beta: f64, lambda: f64| -> f64 {
        match polaron_state(&space, beta, lambda) {
            Ok(psi) => {
                let hp = h.matrix.dot(&psi);
                psi.iter()
                    .zip(hp.iter())
                    .map(|(a, b)| (a.conj() * b).re)
                    .sum()
            }
            Err(_) => f64::INFINITY,
        }
    };
    let beta0 = params.g / params.omega;
    let opts = SimplexOptions {
        initial_step: 0.2,
        ..Default::default()
    };
    let r: MinimizeResult;
    let (beta, lambda);
    if with_squeezing {
        // lambda >= 0 enforced through |u|
        r = minimize(|v| energy(v[0], v[1].abs()), &[beta0, 0.05], &opts);
        beta = r.x[0];
        lambda = r.x[1].abs();
    } else {
        r = minimize(|v| energy(v[0], 0.0), &[beta0], &opts);
        beta = r.x[0];
        lambda = 0.0;
    }
    if r.stagnated {
        log::warn!("variational_polaron_ground: minimizer stagnated after {} iterations", r.iterations);
    }
    let state = polaron_state(&space, beta, lambda)?;
    Ok(VariationalGround {
        energy: r.fx,
        beta,
        lambda,
        state,
        space,
        stagnated: r.stagnated,
    })
}

/// Multi-polaron ansatz for the spin-boson ground state.
#[derive(Debug, Clone)]
pub struct PolaronAnsatz {
    pub n_pol: usize,
    /// displacements[n][k]: branch n, mode k (real)
    pub displacements: Vec<Vec<f64>>,
    pub weights: Vec<C64>,
    pub state: Array1<C64>,
    pub space: HilbertSpec,
    pub stagnated: bool,
}

/// Truncated coherent-state column exp(-a^2/2) a^n / sqrt(n!).
fn coherent_column(n: usize, alpha: f64) -> Array1<C64> {
    let mut v = Array1::zeros(n);
    let mut amp = (-alpha * alpha / 2.0).exp();
    for k in 0..n {
        v[k] = c(amp);
        amp *= alpha / ((k + 1) as f64).sqrt();
    }
    v
}

fn multipolaron_branch(space: &HilbertSpec, alphas: &[f64]) -> Array1<C64> {
    // |phi> = |+> prod_k |alpha_k> - |-> prod_k |-alpha_k>
    let n = space.fock_cutoff;
    let dim_modes: usize = n.pow(space.n_modes as u32);
    let mut plus = Array1::from(vec![c(1.0)]);
    let mut minus = plus.clone();
    for &al in alphas {
        let (cp, cm) = (coherent_column(n, al), coherent_column(n, -al));
        let tensor = |left: &Array1<C64>, right: &Array1<C64>| -> Array1<C64> {
            let mut out = Array1::zeros(left.len() * right.len());
            for (i, &a) in left.iter().enumerate() {
                for (j, &b) in right.iter().enumerate() {
                    out[i * right.len() + j] = a * b;
                }
            }
            out
        };
        plus = tensor(&plus, &cp);
        minus = tensor(&minus, &cm);
    }
    let inv_sqrt2 = 1.0 / 2f64.sqrt();
    let mut psi = Array1::zeros(2 * dim_modes);
    for j in 0..dim_modes {
        psi[j] = (plus[j] - minus[j]) * c(inv_sqrt2); // up component
        psi[dim_modes + j] = (plus[j] + minus[j]) * c(inv_sqrt2); // down
    }
    psi
}

/// Variational multi-polaron ground state of the discretized spin-boson
/// model; weights solved exactly in the branch subspace, displacements
/// minimized numerically.
pub fn multipolaron_spin_boson_ground(
    params: &SpinBosonParams,
    n_pol: usize,
    fock_cutoff: usize,
) -> Result<(f64, PolaronAnsatz)> {
    let k_modes = params.modes.len();
    assert!(n_pol >= 1);
    if k_modes * n_pol > 200 {
        return Err(Error::Numerics(format!(
            "{} optimization variables exceed the cap of 200",
            k_modes * n_pol
        )));
    }
    let space = HilbertSpec::new(fock_cutoff, k_modes, 1)?;
    let h = build_hamiltonian(&Model::SpinBoson(params.clone()), &space)?;

    let opts = SimplexOptions {
        initial_step: 0.25,
        max_iter: 8000,
        ..Default::default()
    };
    // grow the ansatz one branch at a time, warm-starting from the
    // previous optimum so the energy is non-increasing in n_pol
    let mut best: Option<MinimizeResult> = None;
    for p in 1..=n_pol {
        let x0: Vec<f64> = match &best {
            None => params.modes.iter().map(|&(wk, gk)| gk / wk).collect(),
            Some(prev) => {
                let mut x = prev.x.clone();
                let last = &prev.x[(p - 2) * k_modes..(p - 1) * k_modes];
                x.extend(last.iter().map(|a| a * 0.5));
                x
            }
        };
        let sub_energy = {
            let h = &h;
            let space = &space;
            move |flat: &[f64]| -> f64 {
                let branches: Vec<Array1<C64>> = (0..p)
                    .map(|i| multipolaron_branch(space, &flat[i * k_modes..(i + 1) * k_modes]))
                    .collect();
                match subspace_ground(&h.matrix, &branches) {
                    Ok((e, _)) => e,
                    Err(_) => f64::INFINITY,
                }
            }
        };
        let mut r = minimize(sub_energy, &x0, &opts);
        if let Some(prev) = &best {
            if r.fx > prev.fx {
                // local-minimum regression: keep the previous optimum
                // with the new branch collapsed onto the last one (the
                // overlap projection discards the redundant direction)
                r.x = x0;
                r.fx = prev.fx;
            }
        }
        best = Some(r);
    }
    let r = best.unwrap();
    if r.stagnated {
        log::warn!("multipolaron_spin_boson_ground: minimizer stagnated after {} iterations", r.iterations);
    }

    let displacements: Vec<Vec<f64>> = (0..n_pol)
        .map(|i| r.x[i * k_modes..(i + 1) * k_modes].to_vec())
        .collect();
    let branches: Vec<Array1<C64>> = displacements
        .iter()
        .map(|al| multipolaron_branch(&space, al))
        .collect();
    let (energy, weights) = subspace_ground(&h.matrix, &branches)?;
    let mut state: Array1<C64> = Array1::zeros(space.dim());
    for (w, b) in weights.iter().zip(&branches) {
        state = state + b.mapv(|z| z * *w);
    }
    let norm: f64 = state.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    state = state.mapv(|z| z / c(norm));
    Ok((
        energy,
        PolaronAnsatz {
            n_pol,
            displacements,
            weights,
            state,
            space,
            stagnated: r.stagnated,
        },
    ))
}

/// Lowest generalized eigenvalue of (H, S) on the span of `vecs`,
/// with ill-conditioned overlap directions projected out.
fn subspace_ground(h: &CMat, vecs: &[Array1<C64>]) -> Result<(f64, Vec<C64>)> {
    let m = vecs.len();
    let mut s = Array2::zeros((m, m));
    let mut hm = Array2::zeros((m, m));
    let hv: Vec<Array1<C64>> = vecs.iter().map(|v| h.dot(v)).collect();
    for i in 0..m {
        for j in 0..m {
            s[[i, j]] = vecs[i].iter().zip(vecs[j].iter()).map(|(a, b)| a.conj() * b).sum();
            hm[[i, j]] = vecs[i].iter().zip(hv[j].iter()).map(|(a, b)| a.conj() * b).sum();
        }
    }
    // S^{-1/2} through its eigenbasis, dropping near-null directions
    let (svals, svecs) = numkern::eigh_dense(&s)?;
    let kept: Vec<usize> = (0..m).filter(|&i| svals[i] > 1e-10).collect();
    if kept.is_empty() {
        return Err(Error::Numerics("overlap matrix numerically null".into()));
    }
    let mut w = Array2::zeros((m, kept.len()));
    for (out, &i) in kept.iter().enumerate() {
        for r in 0..m {
            w[[r, out]] = svecs[[r, i]] / c(svals[i].sqrt());
        }
    }
    let h_red = dagger(&w).dot(&hm).dot(&w);
    let (evals, evecs) = numkern::eigh_dense(&h_red)?;
    let coeffs_red: Vec<C64> = (0..kept.len()).map(|r| evecs[[r, 0]]).collect();
    let mut coeffs = vec![C64::new(0.0, 0.0); m];
    for r in 0..m {
        for (out, _) in kept.iter().enumerate() {
            coeffs[r] += w[[r, out]] * coeffs_red[out];
        }
    }
    Ok((evals[0], coeffs))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rp(omega: f64, splitting: f64, g: f64) -> RabiParams {
        RabiParams::new(omega, splitting, g).unwrap()
    }

    #[test]
    fn exact_decoupled_spectrum() {
        let spec = exact_spectrum(&Model::Rabi(rp(1.0, 1.0, 0.0)), 6, 1e-10, 12).unwrap();
        let expect = [-0.5, 0.5, 0.5, 1.5, 1.5, 2.5];
        for (v, e) in spec.eigen.values.iter().zip(expect) {
            assert!((v - e).abs() < 1e-10, "{v} vs {e}");
        }
    }

    #[test]
    fn exact_displaced_oscillator() {
        let spec = exact_spectrum(&Model::Rabi(rp(1.0, 0.0, 0.5)), 6, 1e-10, 24).unwrap();
        for k in 0..3 {
            let e = k as f64 - 0.25;
            assert!((spec.eigen.values[2 * k] - e).abs() < 1e-8);
            assert!((spec.eigen.values[2 * k + 1] - e).abs() < 1e-8);
        }
    }

    #[test]
    fn exact_parity_definite() {
        let spec = exact_spectrum(&Model::Rabi(rp(1.0, 0.4, 0.7)), 8, 1e-10, 24).unwrap();
        let parity = parity_operator(&spec.space).unwrap();
        let labels = spec.parities.as_ref().unwrap();
        for k in 0..8 {
            let v = spec.eigen.vectors.column(k);
            let pv = parity.matrix.dot(&v);
            let mean: C64 = v.iter().zip(pv.iter()).map(|(a, b)| a.conj() * b).sum();
            assert!((mean.re.abs() - 1.0).abs() < 1e-8, "level {k}: <P> = {mean}");
            assert_eq!(labels[k], if mean.re > 0.0 { 1 } else { -1 });
        }
    }

    #[test]
    fn jc_matches_numerical_diagonalization() {
        let p = rp(1.0, 0.8, 0.3);
        let spec = exact_spectrum(&Model::JaynesCummings(p.clone()), 10, 1e-11, 30).unwrap();
        let closed = jc_spectrum(&p, 10);
        for (a, b) in closed.iter().zip(&spec.eigen.values) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn jc_resonant_doublet() {
        let p = rp(1.0, 1.0, 0.15);
        let levels = jc_spectrum(&p, 3);
        assert!((levels[2] - levels[1] - 2.0 * p.g).abs() < 1e-12);
    }

    #[test]
    fn bs_ground_energy_closed_form() {
        let p = rp(1.0, 0.9, 0.1);
        let bs = bloch_siegert_spectrum(&p, 40).unwrap();
        let expect = -p.splitting / 2.0 - p.g * p.g / (p.omega + p.splitting);
        assert!((bs.levels[0] - expect).abs() < 1e-10);
    }

    #[test]
    fn bs_reduces_to_jc_at_zero_coupling() {
        let p = rp(1.0, 0.7, 0.0);
        let bs = bloch_siegert_spectrum(&p, 30).unwrap();
        let jc = jc_spectrum(&p, 8);
        for (a, b) in bs.levels.iter().zip(&jc) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn bs_beats_jc_at_small_coupling() {
        let p = rp(1.0, 1.0, 0.1);
        let exact = exact_spectrum(&Model::Rabi(p.clone()), 6, 1e-11, 40).unwrap();
        let bs = bloch_siegert_spectrum(&p, exact.cutoff_used).unwrap();
        let jc = jc_spectrum(&p, 6);
        let err_bs = (0..6)
            .map(|k| (bs.levels[k] - exact.eigen.values[k]).abs())
            .fold(0.0f64, f64::max);
        let err_jc = (0..6)
            .map(|k| (jc[k] - exact.eigen.values[k]).abs())
            .fold(0.0f64, f64::max);
        assert!(err_bs < err_jc, "BS {err_bs:.3e} vs JC {err_jc:.3e}");
    }

    #[test]
    fn bs_lab_states_improve_on_jc_states() {
        let p = rp(1.0, 1.0, 0.1);
        let exact = exact_spectrum(&Model::Rabi(p.clone()), 4, 1e-11, 40).unwrap();
        let bs = bloch_siegert_spectrum(&p, exact.cutoff_used).unwrap();
        let jc_h = build_hamiltonian(&Model::JaynesCummings(p), &exact.space).unwrap();
        let jc_eig = crate::numkern::eig_hermitian(&jc_h).unwrap();
        for k in 0..4 {
            let ve = exact.eigen.vectors.column(k);
            let fid = |col: ndarray::ArrayView1<C64>| -> f64 {
                let ov: C64 = ve.iter().zip(col.iter()).map(|(a, b)| a.conj() * b).sum();
                ov.norm_sqr()
            };
            let f_bs = fid(bs.lab_states.column(k));
            let f_jc = fid(jc_eig.vectors.column(k));
            assert!(
                f_bs >= f_jc - 1e-12,
                "level {k}: fidelity BS {f_bs} < JC {f_jc}"
            );
            assert!(f_bs > 0.999, "level {k}: lab-frame fidelity only {f_bs}");
        }
    }

    #[test]
    fn grwa_exact_at_zero_splitting() {
        let p = rp(1.0, 0.0, 0.6);
        let levels = grwa_spectrum(&p, 60).unwrap();
        for k in 0..3 {
            let e = k as f64 - 0.36;
            assert!((levels[2 * k] - e).abs() < 1e-8, "{}", levels[2 * k]);
            assert!((levels[2 * k + 1] - e).abs() < 1e-8);
        }
    }

    #[test]
    fn grwa_free_limit() {
        let p = rp(1.0, 0.9, 0.0);
        let levels = grwa_spectrum(&p, 40).unwrap();
        let jc = jc_spectrum(&p, 6);
        for (a, b) in levels.iter().take(6).zip(&jc) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn grwa_beats_jc_at_strong_coupling() {
        let p = rp(1.0, 1.0, 0.8);
        let exact = exact_spectrum(&Model::Rabi(p.clone()), 4, 1e-11, 60).unwrap();
        let grwa = grwa_spectrum(&p, exact.cutoff_used).unwrap();
        let jc = jc_spectrum(&p, 4);
        let err_g = (0..4)
            .map(|k| (grwa[k] - exact.eigen.values[k]).abs())
            .fold(0.0f64, f64::max);
        let err_jc = (0..4)
            .map(|k| (jc[k] - exact.eigen.values[k]).abs())
            .fold(0.0f64, f64::max);
        assert!(err_g < err_jc, "GRWA {err_g:.3e} vs JC {err_jc:.3e}");
    }

    #[test]
    fn braak_series_satisfies_the_bargmann_odes() {
        // substitute the truncated series back into
        //   (z+g) phi1' + (g z - E) phi1 + (O/2) phi2 = 0
        //   (z-g) phi2' - (g z + E) phi2 + (O/2) phi1 = 0
        // at generic x between poles
        let (g, om) = (0.7, 0.4);
        let p = rp(1.0, om, g);
        let series = braak::BraakSeries::new(&p);
        let x = 0.37;
        let e = x - g * g;
        let m = 80;
        let kv = series.coefficients(x, m);
        let un: Vec<f64> = (0..=m)
            .map(|n| (om / 2.0) * kv[n] / (x - n as f64))
            .collect();
        let poly = |cf: &[f64], y: f64| -> f64 {
            cf.iter().rev().fold(0.0, |acc, &a| acc * y + a)
        };
        let dpoly = |cf: &[f64], y: f64| -> f64 {
            cf.iter()
                .enumerate()
                .skip(1)
                .rev()
                .fold(0.0, |acc, (n, &a)| acc * y + n as f64 * a)
        };
        for z in [-0.9f64, -0.5, 0.0, 0.2] {
            let y = z + g;
            let ex = (-g * z).exp();
            let phi1 = ex * poly(&un, y);
            let phi2 = ex * poly(&kv, y);
            let dphi1 = ex * (dpoly(&un, y) - g * poly(&un, y));
            let dphi2 = ex * (dpoly(&kv, y) - g * poly(&kv, y));
            let r1 = (z + g) * dphi1 + (g * z - e) * phi1 + (om / 2.0) * phi2;
            let r2 = (z - g) * dphi2 - (g * z + e) * phi2 + (om / 2.0) * phi1;
            let scale = phi1.abs().max(phi2.abs()).max(1.0);
            assert!(
                r1.abs() < 1e-10 * scale && r2.abs() < 1e-10 * scale,
                "z = {z}: residuals {r1:.3e}, {r2:.3e}"
            );
        }
    }

    #[test]
    fn braak_g_diverges_at_poles() {
        let p = rp(1.0, 0.4, 0.7);
        let series = braak::BraakSeries::new(&p);
        for n in 0..4 {
            let far = series.eval(n as f64 + 0.5).unwrap();
            let near = series.eval(n as f64 + 1e-6).unwrap();
            assert!(
                near.0.abs().max(near.1.abs()) > 1e3 * far.0.abs().max(far.1.abs()).max(1.0),
                "no divergence at x = {n}"
            );
        }
    }

    #[test]
    fn braak_matches_exact_at_figure_parameters() {
        let p = rp(1.0, 0.4, 0.7);
        let exact = exact_spectrum(&Model::Rabi(p.clone()), 8, 1e-11, 40).unwrap();
        let e_max = exact.eigen.values[7] + 0.3;
        let levels = braak::braak_spectrum(&p, e_max).unwrap();
        assert!(levels.len() >= 8, "found {} levels", levels.len());
        let labels = exact.parities.as_ref().unwrap();
        for k in 0..8 {
            assert!(
                (levels[k].energy - exact.eigen.values[k]).abs() < 1e-6,
                "level {k}: {} vs {}",
                levels[k].energy,
                exact.eigen.values[k]
            );
            assert_eq!(levels[k].parity, labels[k], "parity mismatch at level {k}");
        }
    }

    #[test]
    fn braak_matches_exact_on_coupling_grid() {
        for g in [0.3, 0.7, 1.2] {
            for om in [0.4, 1.0] {
                let p = rp(1.0, om, g);
                let exact = exact_spectrum(&Model::Rabi(p.clone()), 6, 1e-11, 40).unwrap();
                let e_max = exact.eigen.values[5] + 0.2;
                let levels = braak::braak_spectrum(&p, e_max).unwrap();
                assert!(levels.len() >= 6, "g={g}, om={om}: {} levels", levels.len());
                for k in 0..6 {
                    assert!(
                        (levels[k].energy - exact.eigen.values[k]).abs() < 1e-6,
                        "g={g}, om={om}, level {k}"
                    );
                }
                // zero counting below e_max
                let n_exact = exact
                    .eigen
                    .values
                    .iter()
                    .take(6)
                    .filter(|&&e| e <= e_max)
                    .count();
                assert!(levels.len() >= n_exact);
            }
        }
    }

    #[test]
    fn variational_exact_polaron_limit() {
        let p = rp(1.0, 0.0, 0.5);
        let v = variational_polaron_ground(&p, false).unwrap();
        assert!((v.beta - 0.5).abs() < 1e-5, "beta = {}", v.beta);
        assert!((v.energy + 0.25).abs() < 1e-8, "E = {}", v.energy);
    }

    #[test]
    fn variational_bound_and_squeezing_gain() {
        let p = rp(1.0, 1.0, 1.0);
        let exact = exact_spectrum(&Model::Rabi(p.clone()), 2, 1e-11, 60).unwrap();
        let e0 = exact.eigen.values[0];
        let plain = variational_polaron_ground(&p, false).unwrap();
        let squeezed = variational_polaron_ground(&p, true).unwrap();
        assert!(plain.energy >= e0 - 1e-12);
        assert!(squeezed.energy >= e0 - 1e-12);
        assert!(squeezed.energy <= plain.energy + 1e-12);
        // strictly better gap with squeezing at this coupling
        assert!(
            (squeezed.energy - e0) < (plain.energy - e0),
            "squeezing gained nothing: {} vs {}",
            squeezed.energy - e0,
            plain.energy - e0
        );
    }

    #[test]
    fn multipolaron_decoupled_limit() {
        let p = SpinBosonParams::new(0.0, vec![(0.5, 0.2), (1.0, 0.2), (1.5, 0.2)]).unwrap();
        let (e, ans) = multipolaron_spin_boson_ground(&p, 1, 8).unwrap();
        let expect: f64 = -p.modes.iter().map(|(w, g)| g * g / w).sum::<f64>();
        assert!((e - expect).abs() < 1e-6, "E = {e}, expect {expect}");
        for (k, &(w, g)) in p.modes.iter().enumerate() {
            assert!((ans.displacements[0][k].abs() - g / w).abs() < 1e-4);
        }
    }

    #[test]
    fn multipolaron_monotone_in_branches() {
        let p = SpinBosonParams::new(1.0, vec![(0.5, 0.2), (1.0, 0.2), (1.5, 0.2)]).unwrap();
        // dense oracle on the same truncated model (N = 8 per mode)
        let space = HilbertSpec::new(8, 3, 1).unwrap();
        let h = build_hamiltonian(&Model::SpinBoson(p.clone()), &space).unwrap();
        let eig = crate::numkern::eig_hermitian(&h).unwrap();
        let e0 = eig.values[0];
        let (e1, _) = multipolaron_spin_boson_ground(&p, 1, 8).unwrap();
        let (e2, _) = multipolaron_spin_boson_ground(&p, 2, 8).unwrap();
        assert!(e1 >= e0 - 1e-12 && e2 >= e0 - 1e-12);
        assert!(e2 <= e1 + 1e-12, "E(2) = {e2} > E(1) = {e1}");
    }
}
