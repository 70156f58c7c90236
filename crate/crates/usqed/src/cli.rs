//! Batch front door: subcommands over JSON configs producing CSV/JSON
//! tables. No interactive mode; users are scripts. All frequencies are
//! unitless (units of the reference declared by the config), hbar = 1.
//!
//! Exit codes: 0 success, 2 config/schema violation, 3 numerical
//! failure (a diagnostic JSON with the error payload goes to stderr).

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::Deserialize;
use sha2::{Digest, Sha256};
use std::io::Write;

use crate::floquet::{build_floquet_liouvillian, effective_drive_liouvillian, floquet_steady_state, DriveSpec};
use crate::gauge::gauge_spectrum_deviation;
use crate::numkern::eig_hermitian_with_parity;
use crate::open::{
    build_lindbladian_dressed, build_lindbladian_phenomenological, correlation_g2,
    emission_spectrum, steady_state, BathSpec, DensityKind, LindbladGenerator,
};
use crate::qops::{
    build_algebra, build_hamiltonian, parity_operator, CMat, HilbertSpec, Model, Operator,
    RabiParams,
};
use crate::spectra::{
    bloch_siegert_spectrum, braak, exact_spectrum, grwa_spectrum, jc_spectrum,
    variational_polaron_ground,
};
use crate::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_SCHEMA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

impl std::str::FromStr for OutputFormat {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(format!("unknown format {other:?} (expected csv or json)")),
        }
    }
}

/// One output cell. Floats render as %.12e so tables are byte-stable.
#[derive(Debug, Clone)]
pub enum Cell {
    Int(i64),
    Num(f64),
    Text(String),
}

#[derive(Debug, Clone)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

/// C-style `%.12e`: two-or-more exponent digits with explicit sign,
/// independent of platform formatting quirks.
pub fn fmt_e(x: f64) -> String {
    if !x.is_finite() {
        // match C's %e for the non-finite values used as flags
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let s = format!("{:.12e}", x);
    let (mant, exp) = s.split_once('e').expect("float formatting");
    let (sign, digits) = match exp.strip_prefix('-') {
        Some(d) => ('-', d),
        None => ('+', exp),
    };
    format!("{mant}e{sign}{digits:0>2}")
}

impl Table {
    pub fn render_csv(&self, meta: &RunMeta) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "# usqed {} sha256={}\n",
            meta.version, meta.config_sha256
        ));
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row
                .iter()
                .map(|c| match c {
                    Cell::Int(v) => v.to_string(),
                    Cell::Num(v) => fmt_e(*v),
                    Cell::Text(v) => v.clone(),
                })
                .collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn render_json(&self, meta: &RunMeta) -> String {
        let rows: Vec<serde_json::Value> = self
            .rows
            .iter()
            .map(|row| {
                row.iter()
                    .map(|c| match c {
                        Cell::Int(v) => serde_json::json!(v),
                        Cell::Num(v) => serde_json::json!(v),
                        Cell::Text(v) => serde_json::json!(v),
                    })
                    .collect()
            })
            .collect();
        let doc = serde_json::json!({
            "version": meta.version,
            "config_sha256": meta.config_sha256,
            "columns": self.columns,
            "rows": rows,
        });
        let mut s = serde_json::to_string_pretty(&doc).expect("json rendering");
        s.push('\n');
        s
    }
}

#[derive(Debug, Clone)]
pub struct RunMeta {
    pub version: &'static str,
    pub config_sha256: String,
}

// ---------------------------------------------------------------------
// configs

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    pub omega: f64,
    pub splitting: f64,
    pub g: f64,
}

impl ModelBlock {
    fn params(&self) -> Result<RabiParams> {
        RabiParams::new(self.omega, self.splitting, self.g)
            .map_err(|e| Error::Schema(e.to_string()))
    }
}

fn default_tol() -> f64 {
    1e-9
}
fn default_cutoff() -> usize {
    60
}
fn default_seed() -> u64 {
    0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumConfig {
    pub model: ModelBlock,
    pub methods: Vec<String>,
    pub n_levels: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Fock cutoff for the fixed-cutoff methods (bs, grwa).
    #[serde(default = "default_cutoff")]
    pub cutoff: usize,
    /// Reserved for randomized minimizer restarts; recorded in the
    /// config hash so outputs are reproducible per seed.
    #[serde(default = "default_seed")]
    pub seed: u64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidityMapConfig {
    pub omega: f64,
    pub g_grid: Vec<f64>,
    pub splitting_grid: Vec<f64>,
    pub methods: Vec<String>,
    pub n_levels: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_cutoff")]
    pub cutoff: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SteadyConfig {
    pub omega: f64,
    pub splitting: f64,
    pub g_grid: Vec<f64>,
    pub cutoff: usize,
    /// Qubit decay rate (sigma_x bath / bare sigma_minus channel).
    pub gamma: f64,
    /// Cavity decay rate (x bath / bare a channel).
    pub kappa: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "system", rename_all = "snake_case", deny_unknown_fields)]
pub enum G2Config {
    /// Coherently driven linear cavity in the drive frame.
    Cavity {
        detuning: f64,
        f: f64,
        kappa: f64,
        cutoff: usize,
        tau_grid: Vec<f64>,
        omega_grid: Vec<f64>,
    },
    /// Weakly driven dissipative Rabi model at a dressed one-photon
    /// resonance (rotating-frame effective Liouvillian).
    Rabi {
        omega: f64,
        splitting: f64,
        g: f64,
        cutoff: usize,
        gamma: f64,
        f: f64,
        /// Defaults to the lower-polariton transition E1 - E0.
        omega_d: Option<f64>,
        tau_grid: Vec<f64>,
        omega_grid: Vec<f64>,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FloquetConfig {
    pub model: ModelBlock,
    pub cutoff: usize,
    pub gamma: f64,
    pub f: f64,
    #[serde(default)]
    pub phi: f64,
    pub omega_d_grid: Vec<f64>,
    #[serde(default = "default_n_f")]
    pub n_f: usize,
    /// "photon" or "sz".
    pub observable: String,
}

fn default_n_f() -> usize {
    3
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaugeScanConfig {
    pub omega: f64,
    pub splitting: f64,
    pub g_grid: Vec<f64>,
    pub orders: Vec<usize>,
    pub n_levels: usize,
    pub cutoff: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

fn parse_config<T: serde::de::DeserializeOwned>(bytes: &[u8]) -> Result<T> {
    serde_json::from_slice(bytes).map_err(|e| Error::Schema(e.to_string()))
}

/// Schema validation without execution; the fuzz harness drives this.
pub fn check_config(command: &str, config_bytes: &[u8]) -> Result<()> {
    match command {
        "spectrum" => parse_config::<SpectrumConfig>(config_bytes).map(|_| ()),
        "validity-map" => parse_config::<ValidityMapConfig>(config_bytes).map(|_| ()),
        "steady" => parse_config::<SteadyConfig>(config_bytes).map(|_| ()),
        "g2" => parse_config::<G2Config>(config_bytes).map(|_| ()),
        "floquet" => parse_config::<FloquetConfig>(config_bytes).map(|_| ()),
        "gauge-scan" => parse_config::<GaugeScanConfig>(config_bytes).map(|_| ()),
        other => Err(Error::Schema(format!("unknown command {other:?}"))),
    }
}

fn require(cond: bool, msg: &str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::Schema(msg.to_string()))
    }
}

// ---------------------------------------------------------------------
// subcommand implementations

fn rabi_system(
    params: &RabiParams,
    cutoff: usize,
) -> Result<(HilbertSpec, Operator, crate::numkern::EigenSystem)> {
    let space = HilbertSpec::rabi(cutoff)?;
    let h = build_hamiltonian(&Model::Rabi(params.clone()), &space)?;
    let parity = parity_operator(&space)?;
    let eig = eig_hermitian_with_parity(&h, Some(&parity.matrix))?;
    Ok((space, h, eig))
}

fn spectrum_rows(
    params: &RabiParams,
    method: &str,
    n_levels: usize,
    tol: f64,
    cutoff: usize,
) -> Result<Vec<Vec<Cell>>> {
    let push = |rows: &mut Vec<Vec<Cell>>, i: usize, parity: i64, e: f64, used: usize| {
        rows.push(vec![
            Cell::Int(i as i64),
            Cell::Int(parity),
            Cell::Num(e),
            Cell::Text(method.to_string()),
            Cell::Int(used as i64),
        ]);
    };
    let mut rows = Vec::new();
    match method {
        "exact" => {
            let conv = exact_spectrum(&Model::Rabi(params.clone()), n_levels, tol, 8)?;
            let parities = conv.parities.as_deref().unwrap_or(&[]);
            for i in 0..n_levels {
                let p = parities.get(i).copied().unwrap_or(0) as i64;
                push(&mut rows, i, p, conv.eigen.values[i], conv.cutoff_used);
            }
        }
        "jc" => {
            let levels = jc_spectrum(params, n_levels);
            for (i, &e) in levels.iter().take(n_levels).enumerate() {
                push(&mut rows, i, 0, e, 0);
            }
        }
        "bs" => {
            let bs = bloch_siegert_spectrum(params, cutoff)?;
            for (i, &e) in bs.levels.iter().take(n_levels).enumerate() {
                push(&mut rows, i, 0, e, cutoff);
            }
        }
        "grwa" => {
            let levels = grwa_spectrum(params, cutoff)?;
            for (i, &e) in levels.iter().take(n_levels).enumerate() {
                push(&mut rows, i, 0, e, cutoff);
            }
        }
        "braak" => {
            let e_max = params.omega * (n_levels as f64 + 2.0) - params.g * params.g;
            let levels = braak::braak_spectrum(params, e_max)?;
            for (i, lvl) in levels.iter().take(n_levels).enumerate() {
                push(&mut rows, i, lvl.parity as i64, lvl.energy, 0);
            }
        }
        "variational" => {
            let v = variational_polaron_ground(params, true)?;
            push(&mut rows, 0, 1, v.energy, v.space.fock_cutoff);
        }
        other => {
            return Err(Error::Schema(format!(
                "unknown spectrum method {other:?} (expected exact|jc|bs|grwa|braak|variational)"
            )))
        }
    }
    Ok(rows)
}

pub fn cmd_spectrum(cfg: &SpectrumConfig) -> Result<Table> {
    require(cfg.n_levels >= 1, "n_levels must be >= 1")?;
    require(!cfg.methods.is_empty(), "methods must be non-empty")?;
    let params = cfg.model.params()?;
    let mut rows = Vec::new();
    for m in &cfg.methods {
        rows.extend(spectrum_rows(&params, m, cfg.n_levels, cfg.tol, cfg.cutoff)?);
    }
    Ok(Table {
        columns: vec!["level_index", "parity", "energy", "method", "cutoff_used"],
        rows,
    })
}

pub fn cmd_validity_map(cfg: &ValidityMapConfig) -> Result<Table> {
    require(!cfg.g_grid.is_empty(), "g_grid must be non-empty")?;
    require(!cfg.splitting_grid.is_empty(), "splitting_grid must be non-empty")?;
    require(cfg.n_levels >= 1, "n_levels must be >= 1")?;
    for m in &cfg.methods {
        require(
            matches!(m.as_str(), "jc" | "bs" | "grwa"),
            "validity-map methods must be jc|bs|grwa",
        )?;
    }
    let mut points = Vec::new();
    for &g in &cfg.g_grid {
        for &om in &cfg.splitting_grid {
            points.push((g, om));
        }
    }
    let results: Vec<Result<Vec<Vec<Cell>>>> = points
        .par_iter()
        .map(|&(g, om)| {
            let params =
                RabiParams::new(cfg.omega, om, g).map_err(|e| Error::Schema(e.to_string()))?;
            let conv = exact_spectrum(&Model::Rabi(params.clone()), cfg.n_levels, cfg.tol, 8)?;
            let exact = &conv.eigen.values[..cfg.n_levels];
            let mut rows = Vec::new();
            for m in &cfg.methods {
                let approx: Vec<f64> = match m.as_str() {
                    "jc" => jc_spectrum(&params, cfg.n_levels),
                    "bs" => bloch_siegert_spectrum(&params, cfg.cutoff)?.levels,
                    "grwa" => grwa_spectrum(&params, cfg.cutoff)?,
                    _ => unreachable!(),
                };
                let err = exact
                    .iter()
                    .zip(approx.iter())
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0f64, f64::max);
                rows.push(vec![
                    Cell::Num(g),
                    Cell::Num(om),
                    Cell::Text(m.clone()),
                    Cell::Num(err),
                ]);
            }
            Ok(rows)
        })
        .collect();
    let mut rows = Vec::new();
    for r in results {
        rows.extend(r?);
    }
    Ok(Table {
        columns: vec!["g", "splitting", "method", "max_error"],
        rows,
    })
}

/// Dressed vs phenomenological photon number for one coupling.
fn steady_point(
    params: &RabiParams,
    cutoff: usize,
    gamma: f64,
    kappa: f64,
) -> Result<(f64, f64, f64)> {
    let (space, h, eig) = rabi_system(params, cutoff)?;
    let alg = build_algebra(&space)?;
    let n_op = alg.adag[0].dot(&alg.a[0]);
    let photon_number = |rho: &CMat| -> f64 {
        (0..rho.nrows()).map(|i| n_op.row(i).dot(&rho.column(i)).re).sum()
    };

    let xc = Operator::new(space.clone(), &alg.a[0] + &alg.adag[0], true)?;
    let sx = Operator::new(space.clone(), alg.sx[0].clone(), true)?;
    let baths = [
        BathSpec::new(xc, DensityKind::Flat, kappa)?,
        BathSpec::new(sx, DensityKind::Flat, gamma)?,
    ];
    let l_dressed = build_lindbladian_dressed(&h, &eig, &baths)?;
    let rho_d = steady_state(&l_dressed)?;

    let channels = [(kappa, alg.a[0].clone()), (gamma, alg.sm[0].clone())];
    let l_phen = build_lindbladian_phenomenological(&h, &channels)?;
    let rho_p = steady_state(&l_phen)?;

    let gs = eig.vectors.column(0);
    let fid = gs
        .iter()
        .enumerate()
        .map(|(i, a)| a.conj() * rho_p.matrix.row(i).dot(&gs))
        .sum::<C64>()
        .re;
    Ok((photon_number(&rho_d.matrix), photon_number(&rho_p.matrix), fid))
}

pub fn cmd_steady(cfg: &SteadyConfig) -> Result<Table> {
    require(!cfg.g_grid.is_empty(), "g_grid must be non-empty")?;
    require(cfg.gamma > 0.0 && cfg.kappa > 0.0, "gamma and kappa must be > 0")?;
    require(cfg.cutoff >= 4, "cutoff must be >= 4")?;
    let results: Vec<Result<Vec<Cell>>> = cfg
        .g_grid
        .par_iter()
        .map(|&g| {
            let params = RabiParams::new(cfg.omega, cfg.splitting, g)
                .map_err(|e| Error::Schema(e.to_string()))?;
            let (n_d, n_p, fid) = steady_point(&params, cfg.cutoff, cfg.gamma, cfg.kappa)?;
            Ok(vec![
                Cell::Num(g),
                Cell::Num(n_d),
                Cell::Num(n_p),
                Cell::Num(n_p - n_d),
                Cell::Num(fid),
            ])
        })
        .collect();
    Ok(Table {
        columns: vec!["g", "n_dressed", "n_phen", "excess", "fidelity_ground"],
        rows: results.into_iter().collect::<Result<_>>()?,
    })
}

fn g2_table(
    l: &LindbladGenerator,
    o_plus: &CMat,
    tau_grid: &[f64],
    omega_grid: &[f64],
) -> Result<Table> {
    let rho = steady_state(l)?;
    let g2 = correlation_g2(l, &rho, o_plus, tau_grid)?;
    let spec = emission_spectrum(l, &rho, o_plus, omega_grid)?;
    let mut rows = Vec::new();
    for (&tau, &v) in tau_grid.iter().zip(g2.iter()) {
        rows.push(vec![
            Cell::Text("g2".into()),
            Cell::Num(tau),
            Cell::Num(v),
        ]);
    }
    for (&w, &v) in omega_grid.iter().zip(spec.iter()) {
        rows.push(vec![
            Cell::Text("spectrum".into()),
            Cell::Num(w),
            Cell::Num(v),
        ]);
    }
    Ok(Table {
        columns: vec!["kind", "x", "value"],
        rows,
    })
}

pub fn cmd_g2(cfg: &G2Config) -> Result<Table> {
    match cfg {
        G2Config::Cavity {
            detuning,
            f,
            kappa,
            cutoff,
            tau_grid,
            omega_grid,
        } => {
            require(*kappa > 0.0, "kappa must be > 0")?;
            require(!tau_grid.is_empty(), "tau_grid must be non-empty")?;
            let space = HilbertSpec::new(*cutoff, 1, 0)?;
            let alg = build_algebra(&space)?;
            let hmat = alg.adag[0].dot(&alg.a[0]).mapv(|z| z * C64::new(*detuning, 0.0))
                + (&alg.a[0] + &alg.adag[0]).mapv(|z| z * C64::new(*f, 0.0));
            let h = Operator::new(space, hmat, true)?;
            let l = build_lindbladian_phenomenological(&h, &[(*kappa, alg.a[0].clone())])?;
            g2_table(&l, &alg.a[0], tau_grid, omega_grid)
        }
        G2Config::Rabi {
            omega,
            splitting,
            g,
            cutoff,
            gamma,
            f,
            omega_d,
            tau_grid,
            omega_grid,
        } => {
            require(*gamma > 0.0, "gamma must be > 0")?;
            require(!tau_grid.is_empty(), "tau_grid must be non-empty")?;
            let params = RabiParams::new(*omega, *splitting, *g)
                .map_err(|e| Error::Schema(e.to_string()))?;
            let (space, h, eig) = rabi_system(&params, *cutoff)?;
            let alg = build_algebra(&space)?;
            let x = Operator::new(space.clone(), &alg.a[0] + &alg.adag[0], true)?;
            let wd = omega_d.unwrap_or(eig.values[1] - eig.values[0]);
            let drive = DriveSpec::new(*f, wd, 0.0, x.clone())?;
            let bath = BathSpec::new(x, DensityKind::Flat, *gamma)?;
            let (leff, ladder) = effective_drive_liouvillian(&h, &eig, &[bath], &drive)?;
            g2_table(&leff, &ladder, tau_grid, omega_grid)
        }
    }
}

pub fn cmd_floquet(cfg: &FloquetConfig) -> Result<Table> {
    require(!cfg.omega_d_grid.is_empty(), "omega_d_grid must be non-empty")?;
    require(cfg.gamma > 0.0, "gamma must be > 0")?;
    require(
        matches!(cfg.observable.as_str(), "photon" | "sz"),
        "observable must be photon|sz",
    )?;
    let params = cfg.model.params()?;
    let (space, h, eig) = rabi_system(&params, cfg.cutoff)?;
    let alg = build_algebra(&space)?;
    let x = Operator::new(space.clone(), &alg.a[0] + &alg.adag[0], true)?;
    let bath = BathSpec::new(x.clone(), DensityKind::Flat, cfg.gamma)?;
    let l0 = build_lindbladian_dressed(&h, &eig, &[bath])?;
    let obs = match cfg.observable.as_str() {
        "photon" => alg.adag[0].dot(&alg.a[0]),
        _ => alg.sz[0].clone(),
    };

    let results: Vec<Result<Vec<Vec<Cell>>>> = cfg
        .omega_d_grid
        .par_iter()
        .map(|&wd| {
            let drive = DriveSpec::new(cfg.f, wd, cfg.phi, x.clone())?;
            let fl = build_floquet_liouvillian(&l0, &drive, cfg.n_f)?;
            let pss = floquet_steady_state(&fl)?;
            let t = drive.period();
            let n_avg = 64;
            let mut avg = 0.0;
            for k in 0..n_avg {
                let rho = pss.at(k as f64 * t / n_avg as f64);
                avg += (0..rho.nrows())
                    .map(|i| obs.row(i).dot(&rho.column(i)).re)
                    .sum::<f64>();
            }
            avg /= n_avg as f64;
            let mut rows = Vec::new();
            for (slot, &k) in fl.zone.iter().enumerate() {
                let lam = fl.eigen.values[k];
                rows.push(vec![
                    Cell::Num(wd),
                    Cell::Int(slot as i64),
                    Cell::Num(lam.re),
                    Cell::Num(lam.im),
                    Cell::Num(avg),
                ]);
            }
            Ok(rows)
        })
        .collect();
    let mut rows = Vec::new();
    for r in results {
        rows.extend(r?);
    }
    Ok(Table {
        columns: vec!["omega_d", "zone_index", "re_lambda", "im_lambda", "avg_obs"],
        rows,
    })
}

pub fn cmd_gauge_scan(cfg: &GaugeScanConfig) -> Result<Table> {
    require(!cfg.g_grid.is_empty(), "g_grid must be non-empty")?;
    require(!cfg.orders.is_empty(), "orders must be non-empty")?;
    require(cfg.n_levels >= 1, "n_levels must be >= 1")?;
    let grid: Vec<RabiParams> = cfg
        .g_grid
        .iter()
        .map(|&g| RabiParams::new(cfg.omega, cfg.splitting, g))
        .collect::<Result<_>>()
        .map_err(|e| Error::Schema(e.to_string()))?;
    let rows_in = gauge_spectrum_deviation(&grid, &cfg.orders, cfg.n_levels, cfg.cutoff, cfg.tol)?;
    let mut rows = Vec::new();
    for r in &rows_in {
        let mut push = |variant: String, d: Option<f64>| {
            rows.push(vec![
                Cell::Num(r.g),
                Cell::Text(variant),
                Cell::Num(d.unwrap_or(f64::NAN)),
                Cell::Int(d.is_some() as i64),
            ]);
        };
        push("full".into(), r.full);
        for (i, &k) in cfg.orders.iter().enumerate() {
            push(format!("taylor{k}"), r.taylor[i]);
        }
    }
    Ok(Table {
        columns: vec!["g", "variant", "deviation", "converged"],
        rows,
    })
}

// ---------------------------------------------------------------------
// driver

/// Parse the config bytes for `command`, run it, and render the table.
pub fn run(command: &str, config_bytes: &[u8], format: OutputFormat) -> Result<String> {
    let mut hasher = Sha256::new();
    hasher.update(config_bytes);
    let meta = RunMeta {
        version: env!("CARGO_PKG_VERSION"),
        config_sha256: format!("{:x}", hasher.finalize()),
    };
    let table = match command {
        "spectrum" => cmd_spectrum(&parse_config(config_bytes)?)?,
        "validity-map" => cmd_validity_map(&parse_config(config_bytes)?)?,
        "steady" => cmd_steady(&parse_config(config_bytes)?)?,
        "g2" => cmd_g2(&parse_config(config_bytes)?)?,
        "floquet" => cmd_floquet(&parse_config(config_bytes)?)?,
        "gauge-scan" => cmd_gauge_scan(&parse_config(config_bytes)?)?,
        other => return Err(Error::Schema(format!("unknown command {other:?}"))),
    };
    Ok(match format {
        OutputFormat::Csv => table.render_csv(&meta),
        OutputFormat::Json => table.render_json(&meta),
    })
}

/// Full process entry point; returns the exit code.
pub fn main_entry(
    command: &str,
    config_path: &std::path::Path,
    out: Option<&std::path::Path>,
    format: OutputFormat,
    threads: Option<usize>,
) -> i32 {
    if let Some(n) = threads {
        // ignore the error if a global pool already exists
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let config_bytes = match std::fs::read(config_path) {
        Ok(b) => b,
        Err(e) => {
            let _ = writeln!(
                std::io::stderr(),
                "{}",
                serde_json::json!({"error_kind": "Io", "message": e.to_string()})
            );
            return EXIT_SCHEMA;
        }
    };
    match run(command, &config_bytes, format) {
        Ok(rendered) => {
            let result = match out {
                Some(p) => std::fs::write(p, rendered.as_bytes()),
                None => std::io::stdout().write_all(rendered.as_bytes()),
            };
            if let Err(e) = result {
                let _ = writeln!(
                    std::io::stderr(),
                    "{}",
                    serde_json::json!({"error_kind": "Io", "message": e.to_string()})
                );
                return EXIT_NUMERICAL;
            }
            EXIT_OK
        }
        Err(e) => {
            let kind = error_kind(&e);
            let _ = writeln!(
                std::io::stderr(),
                "{}",
                serde_json::json!({"error_kind": kind, "message": e.to_string()})
            );
            if matches!(e, Error::Schema(_)) {
                EXIT_SCHEMA
            } else {
                EXIT_NUMERICAL
            }
        }
    }
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::DimensionOverflow { .. } => "DimensionOverflow",
        Error::IncompatibleSpace(_) => "IncompatibleSpace",
        Error::NonHermitian { .. } => "NonHermitian",
        Error::TruncationUnitarity { .. } => "TruncationUnitarity",
        Error::Lapack(_) => "Lapack",
        Error::SingularSolve => "SingularSolve",
        Error::NoSignChange => "NoSignChange",
        Error::MinimizerStagnation(_) => "MinimizerStagnation",
        Error::CutoffCapReached { .. } => "CutoffCapReached",
        Error::SeriesNonConvergence { .. } => "SeriesNonConvergence",
        Error::DarkSteadyState { .. } => "DarkSteadyState",
        Error::DegenerateSteadyState { .. } => "DegenerateSteadyState",
        Error::SpectralInstability(_) => "SpectralInstability",
        Error::FloquetCutoffCap { .. } => "FloquetCutoffCap",
        Error::Schema(_) => "Schema",
        Error::Io(_) => "Io",
        Error::Numerics(_) => "Numerics",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta() -> RunMeta {
        RunMeta {
            version: "test",
            config_sha256: "deadbeef".into(),
        }
    }

    #[test]
    fn float_formatting_is_c_style() {
        assert_eq!(fmt_e(1.0), "1.000000000000e+00");
        assert_eq!(fmt_e(-0.25), "-2.500000000000e-01");
        assert_eq!(fmt_e(6.62607e-34), "6.626070000000e-34");
        assert_eq!(fmt_e(1.5e120), "1.500000000000e+120");
        assert_eq!(fmt_e(0.0), "0.000000000000e+00");
    }

    #[test]
    fn unknown_keys_rejected() {
        let cfg = br#"{"model": {"omega": 1.0, "splitting": 1.0, "g": 0.0},
                       "methods": ["exact"], "n_levels": 3, "bogus": 1}"#;
        match run("spectrum", cfg, OutputFormat::Csv) {
            Err(Error::Schema(msg)) => assert!(msg.contains("bogus"), "{msg}"),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_command_and_method_are_schema_errors() {
        assert!(matches!(
            run("frobnicate", b"{}", OutputFormat::Csv),
            Err(Error::Schema(_))
        ));
        let cfg = br#"{"model": {"omega": 1.0, "splitting": 1.0, "g": 0.1},
                       "methods": ["shrink"], "n_levels": 3}"#;
        assert!(matches!(
            run("spectrum", cfg, OutputFormat::Csv),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn spectrum_g_zero_closed_form() {
        let cfg = SpectrumConfig {
            model: ModelBlock {
                omega: 1.0,
                splitting: 0.6,
                g: 0.0,
            },
            methods: vec!["exact".into()],
            n_levels: 6,
            tol: 1e-10,
            cutoff: 60,
            seed: 0,
        };
        let table = cmd_spectrum(&cfg).unwrap();
        // n w +/- Omega/2, sorted
        let want = [-0.3, 0.3, 0.7, 1.3, 1.7, 2.3];
        for (row, w) in table.rows.iter().zip(want.iter()) {
            match row[2] {
                Cell::Num(e) => assert!((e - w).abs() < 1e-10, "{e} vs {w}"),
                _ => panic!("energy column should be numeric"),
            }
        }
    }

    #[test]
    fn csv_is_byte_stable() {
        let cfg = br#"{"omega": 1.0, "splitting": 1.0, "g_grid": [0.0, 0.2],
                       "orders": [2], "n_levels": 3, "cutoff": 40}"#;
        let a = run("gauge-scan", cfg, OutputFormat::Csv).unwrap();
        let b = run("gauge-scan", cfg, OutputFormat::Csv).unwrap();
        assert_eq!(a, b);
        assert!(a.starts_with("# usqed "));
        assert!(!a.contains('\r'));
    }

    #[test]
    fn gauge_scan_g_zero_row_is_zero() {
        let cfg = br#"{"omega": 1.0, "splitting": 1.0, "g_grid": [0.0],
                       "orders": [2, 4], "n_levels": 4, "cutoff": 40}"#;
        let out = run("gauge-scan", cfg, OutputFormat::Csv).unwrap();
        for line in out.lines().skip(2) {
            let dev: f64 = line.split(',').nth(2).unwrap().parse().unwrap();
            assert!(dev.abs() < 1e-12, "{line}");
        }
    }

    #[test]
    fn steady_excess_positive_and_monotone() {
        let cfg = SteadyConfig {
            omega: 1.0,
            splitting: 1.0,
            g_grid: vec![0.2, 0.5, 0.8],
            cutoff: 10,
            gamma: 1.0 / 60.0,
            kappa: 1.0 / 60.0,
        };
        let table = cmd_steady(&cfg).unwrap();
        let excess: Vec<f64> = table
            .rows
            .iter()
            .map(|r| match r[3] {
                Cell::Num(v) => v,
                _ => panic!(),
            })
            .collect();
        for w in excess.windows(2) {
            assert!(w[0] > 0.0 && w[1] > w[0], "{excess:?}");
        }
    }

    #[test]
    fn g2_linear_cavity_is_coherent() {
        let cfg = br#"{"system": "cavity", "detuning": 0.3, "f": 0.05, "kappa": 0.2,
                       "cutoff": 14, "tau_grid": [0.0, 1.0, 5.0],
                       "omega_grid": [0.0, 0.3]}"#;
        let out = run("g2", cfg, OutputFormat::Csv).unwrap();
        for line in out.lines().skip(2).filter(|l| l.starts_with("g2,")) {
            let v: f64 = line.split(',').nth(2).unwrap().parse().unwrap();
            assert!((v - 1.0).abs() < 1e-6, "{line}");
        }
    }

    #[test]
    fn json_output_carries_meta() {
        let cfg = br#"{"model": {"omega": 1.0, "splitting": 1.0, "g": 0.0},
                       "methods": ["jc"], "n_levels": 2}"#;
        let out = run("spectrum", cfg, OutputFormat::Json).unwrap();
        let doc: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert!(doc["config_sha256"].as_str().unwrap().len() == 64);
        assert_eq!(doc["columns"][2], "energy");
    }

    #[test]
    fn table_renders_all_cell_types() {
        let t = Table {
            columns: vec!["a", "b", "c"],
            rows: vec![vec![Cell::Int(3), Cell::Num(0.5), Cell::Text("x".into())]],
        };
        let csv = t.render_csv(&meta());
        assert!(csv.ends_with("3,5.000000000000e-01,x\n"), "{csv}");
    }
}
