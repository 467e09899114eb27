//! Device and numerics configuration, physical constants, derived scales,
//! and the line-based configuration-file grammar.
//!
//! Internal units throughout the crate: energies in meV, lengths in nm,
//! wavevectors in nm⁻¹, temperatures in K.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// ħ²/(2mₑ) in meV·nm².
pub const HBAR2_OVER_2ME: f64 = 38.1;
/// e²/(4πε₀) in meV·nm.
pub const COULOMB_CONST: f64 = 1439.96;
/// Boltzmann constant in meV/K.
pub const K_BOLTZMANN: f64 = 0.08617;

/// Physical parameters of the gated quantum-dot array.
///
/// The modulated potential is V(x,y) = v0·[cos(2πx/λ) + cos(2πy/λ)], so the
/// dot centers (potential minima for v0 > 0) sit at (λ/2, λ/2) mod λ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceConfig {
    /// Modulation period λ (nm).
    pub lambda_nm: f64,
    /// Modulation amplitude V₀ (meV); v0 ≥ 0.
    pub v0_mev: f64,
    /// Distance d from the 2DEG plane to the screening gate (nm).
    pub depth_nm: f64,
    /// Effective mass ratio m*/mₑ.
    pub mass_ratio: f64,
    /// Relative dielectric constant ε_r.
    pub epsilon_r: f64,
}

impl Default for DeviceConfig {
    fn default() -> Self {
        DeviceConfig {
            lambda_nm: 100.0,
            v0_mev: 0.56,
            depth_nm: 30.0,
            mass_ratio: 0.067,
            epsilon_r: 13.0,
        }
    }
}

/// Numerical-control parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumericsConfig {
    /// Plane-wave cutoff M: reciprocal-lattice vectors −M..M per axis.
    pub plane_wave_cutoff: usize,
    /// Brillouin-zone intervals per 1D axis; sampled at k_grid+1 points
    /// including both endpoints. Must be even so k=0 is sampled.
    pub k_grid: usize,
    /// Real-space sample points per period λ for Wannier orbitals.
    pub real_grid: usize,
    /// Periods retained on each side of the orbital center; the sampling
    /// window is [x_c − real_span·λ, x_c + real_span·λ].
    pub real_span: usize,
    /// Momentum-quadrature intervals per axis (sampled at q_grid+1 points).
    pub q_grid: usize,
    /// Momentum cutoff (nm⁻¹); 0 selects the default 20·(2π/λ).
    pub q_max_inv_nm: f64,
    /// Highest 1D band index per axis retained in the ED orbital basis.
    pub orbital_cutoff: usize,
    /// Residual tolerance for iterative eigensolves, relative to the
    /// eigenvalue scale: converged when ‖Hx − θx‖ ≤ tol·(1 + |θ|).
    pub eigensolver_tol: f64,
    /// Iteration cap for the iterative eigensolver.
    pub ed_max_iterations: usize,
}

impl Default for NumericsConfig {
    fn default() -> Self {
        NumericsConfig {
            plane_wave_cutoff: 16,
            k_grid: 256,
            real_grid: 64,
            real_span: 11,
            q_grid: 512,
            q_max_inv_nm: 0.0,
            orbital_cutoff: 4,
            eigensolver_tol: 1e-8,
            ed_max_iterations: 1500,
        }
    }
}

impl NumericsConfig {
    /// Effective momentum cutoff for a given device.
    pub fn q_max(&self, dev: &DeviceConfig) -> f64 {
        if self.q_max_inv_nm > 0.0 {
            self.q_max_inv_nm
        } else {
            20.0 * std::f64::consts::TAU / dev.lambda_nm
        }
    }
}

/// Task-level parameters consumed by the CLI drivers (base filling, sweep
/// grids, temperature). Kept in core so the config grammar covers them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskConfig {
    /// Base electron number N_b for effective-parameter runs.
    pub nb: usize,
    /// Largest N for addition-spectrum runs (E_N computed to n_max+1).
    pub n_max: usize,
    /// Temperature for feasibility verdicts (K).
    pub temperature_k: f64,
    /// Sweep grid over V₀ (meV); empty = use the device value only.
    pub v0_list: Vec<f64>,
    /// Sweep grid over N_b; empty = use `nb` only.
    pub nb_list: Vec<usize>,
    /// Sweep grid over gate depth d (nm); empty = use the device value only.
    pub d_list: Vec<f64>,
}

impl Default for TaskConfig {
    fn default() -> Self {
        TaskConfig {
            nb: 0,
            n_max: 8,
            temperature_k: 0.01,
            v0_list: Vec::new(),
            nb_list: Vec::new(),
            d_list: Vec::new(),
        }
    }
}

/// Full run configuration: device + numerics + task.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Config {
    pub device: DeviceConfig,
    pub numerics: NumericsConfig,
    pub task: TaskConfig,
}

/// Characteristic energy scales of a device.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scales {
    /// Kinetic scale ħ²/(2m*λ²) (meV).
    pub e_lambda: f64,
    /// Coulomb scale e²/(4πελ) (meV).
    pub coulomb_scale: f64,
}

impl Scales {
    /// Thermal energy k_B·T in meV for a temperature in K.
    pub fn thermal_energy(temperature_k: f64) -> f64 {
        K_BOLTZMANN * temperature_k
    }
}

/// Derive the kinetic and Coulomb energy scales of a device.
pub fn derive_scales(dev: &DeviceConfig) -> Scales {
    Scales {
        e_lambda: HBAR2_OVER_2ME / (dev.mass_ratio * dev.lambda_nm * dev.lambda_nm),
        coulomb_scale: COULOMB_CONST / (dev.epsilon_r * dev.lambda_nm),
    }
}

/// Validate a configuration, reporting every violated invariant by field name.
pub fn validate_config(cfg: &Config) -> Result<Config> {
    let mut errors = Vec::new();
    let d = &cfg.device;
    if !(d.lambda_nm > 0.0) {
        errors.push("device.lambda_nm must be > 0".to_string());
    }
    if !(d.v0_mev >= 0.0) {
        errors.push("device.v0_mev must be >= 0".to_string());
    }
    if !(d.depth_nm > 0.0) {
        errors.push("device.depth_nm must be > 0".to_string());
    }
    if !(d.mass_ratio > 0.0) {
        errors.push("device.mass_ratio must be > 0".to_string());
    }
    if !(d.epsilon_r >= 1.0) {
        errors.push("device.epsilon_r must be >= 1".to_string());
    }
    let n = &cfg.numerics;
    if n.plane_wave_cutoff == 0 {
        errors.push("numerics.plane_wave_cutoff must be positive".to_string());
    }
    if n.k_grid == 0 || n.k_grid % 2 != 0 {
        errors.push("numerics.k_grid must be positive and even".to_string());
    }
    for (name, v) in [
        ("numerics.real_grid", n.real_grid),
        ("numerics.real_span", n.real_span),
        ("numerics.q_grid", n.q_grid),
        ("numerics.orbital_cutoff", n.orbital_cutoff),
        ("numerics.ed_max_iterations", n.ed_max_iterations),
    ] {
        if v == 0 {
            errors.push(format!("{name} must be positive"));
        }
    }
    if !(n.q_max_inv_nm >= 0.0) {
        errors.push("numerics.q_max_inv_nm must be >= 0".to_string());
    }
    if !(n.eigensolver_tol > 0.0) {
        errors.push("numerics.eigensolver_tol must be > 0".to_string());
    }
    if errors.is_empty() {
        Ok(cfg.clone())
    } else {
        Err(Error::Config(errors.join("; ")))
    }
}

/// Parse the line-based configuration grammar:
///
/// ```text
/// # comment
/// section.key = value
/// ```
///
/// Sections are `device`, `numerics`, `task`; keys are case-sensitive;
/// unknown keys are an error. List-valued task keys take comma-separated
/// numbers. Parsing starts from defaults and applies assignments in order.
pub fn parse_config(text: &str) -> Result<Config> {
    let mut cfg = Config::default();
    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected `section.key = value`", lineno + 1)))?;
        apply_assignment(&mut cfg, key.trim(), value.trim())
            .map_err(|e| Error::Config(format!("line {}: {e}", lineno + 1)))?;
    }
    Ok(cfg)
}

/// Apply a single `section.key = value` assignment (also used by `--set`).
pub fn apply_assignment(cfg: &mut Config, key: &str, value: &str) -> Result<()> {
    fn f(value: &str, key: &str) -> Result<f64> {
        value
            .parse::<f64>()
            .map_err(|_| Error::Config(format!("{key}: expected a number, got `{value}`")))
    }
    fn u(value: &str, key: &str) -> Result<usize> {
        value
            .parse::<usize>()
            .map_err(|_| Error::Config(format!("{key}: expected a non-negative integer, got `{value}`")))
    }
    fn flist(value: &str, key: &str) -> Result<Vec<f64>> {
        value.split(',').map(|s| f(s.trim(), key)).collect()
    }
    fn ulist(value: &str, key: &str) -> Result<Vec<usize>> {
        value.split(',').map(|s| u(s.trim(), key)).collect()
    }
    match key {
        "device.lambda_nm" => cfg.device.lambda_nm = f(value, key)?,
        "device.v0_mev" => cfg.device.v0_mev = f(value, key)?,
        "device.depth_nm" => cfg.device.depth_nm = f(value, key)?,
        "device.mass_ratio" => cfg.device.mass_ratio = f(value, key)?,
        "device.epsilon_r" => cfg.device.epsilon_r = f(value, key)?,
        "numerics.plane_wave_cutoff" => cfg.numerics.plane_wave_cutoff = u(value, key)?,
        "numerics.k_grid" => cfg.numerics.k_grid = u(value, key)?,
        "numerics.real_grid" => cfg.numerics.real_grid = u(value, key)?,
        "numerics.real_span" => cfg.numerics.real_span = u(value, key)?,
        "numerics.q_grid" => cfg.numerics.q_grid = u(value, key)?,
        "numerics.q_max_inv_nm" => cfg.numerics.q_max_inv_nm = f(value, key)?,
        "numerics.orbital_cutoff" => cfg.numerics.orbital_cutoff = u(value, key)?,
        "numerics.eigensolver_tol" => cfg.numerics.eigensolver_tol = f(value, key)?,
        "numerics.ed_max_iterations" => cfg.numerics.ed_max_iterations = u(value, key)?,
        "task.nb" => cfg.task.nb = u(value, key)?,
        "task.n_max" => cfg.task.n_max = u(value, key)?,
        "task.temperature_k" => cfg.task.temperature_k = f(value, key)?,
        "task.v0_list" => cfg.task.v0_list = flist(value, key)?,
        "task.nb_list" => cfg.task.nb_list = ulist(value, key)?,
        "task.d_list" => cfg.task.d_list = flist(value, key)?,
        _ => return Err(Error::Config(format!("unknown key `{key}`"))),
    }
    Ok(())
}

/// Render a configuration back in the config-file grammar (the
/// `resolved_config.txt` format). Re-parsing the output reproduces `cfg`.
pub fn render_config(cfg: &Config) -> String {
    let mut s = String::new();
    let d = &cfg.device;
    let n = &cfg.numerics;
    let t = &cfg.task;
    let fl = |xs: &[f64]| xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
    let ul = |xs: &[usize]| xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
    s.push_str(&format!("device.lambda_nm = {}\n", d.lambda_nm));
    s.push_str(&format!("device.v0_mev = {}\n", d.v0_mev));
    s.push_str(&format!("device.depth_nm = {}\n", d.depth_nm));
    s.push_str(&format!("device.mass_ratio = {}\n", d.mass_ratio));
    s.push_str(&format!("device.epsilon_r = {}\n", d.epsilon_r));
    s.push_str(&format!("numerics.plane_wave_cutoff = {}\n", n.plane_wave_cutoff));
    s.push_str(&format!("numerics.k_grid = {}\n", n.k_grid));
    s.push_str(&format!("numerics.real_grid = {}\n", n.real_grid));
    s.push_str(&format!("numerics.real_span = {}\n", n.real_span));
    s.push_str(&format!("numerics.q_grid = {}\n", n.q_grid));
    s.push_str(&format!("numerics.q_max_inv_nm = {}\n", n.q_max_inv_nm));
    s.push_str(&format!("numerics.orbital_cutoff = {}\n", n.orbital_cutoff));
    s.push_str(&format!("numerics.eigensolver_tol = {}\n", n.eigensolver_tol));
    s.push_str(&format!("numerics.ed_max_iterations = {}\n", n.ed_max_iterations));
    s.push_str(&format!("task.nb = {}\n", t.nb));
    s.push_str(&format!("task.n_max = {}\n", t.n_max));
    s.push_str(&format!("task.temperature_k = {}\n", t.temperature_k));
    if !t.v0_list.is_empty() {
        s.push_str(&format!("task.v0_list = {}\n", fl(&t.v0_list)));
    }
    if !t.nb_list.is_empty() {
        s.push_str(&format!("task.nb_list = {}\n", ul(&t.nb_list)));
    }
    if !t.d_list.is_empty() {
        s.push_str(&format!("task.d_list = {}\n", fl(&t.d_list)));
    }
    s
}
