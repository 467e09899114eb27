//! 1D Bloch bands of the cosine potential, separable 2D bands, hopping
//! amplitudes from the dispersion's Brillouin-zone Fourier coefficients, and
//! band-isolation reports.
//!
//! The single-particle Hamiltonian per axis is
//! H = −ħ²/(2m*) d²/dx² + V₀·cos(2πx/λ). In the plane-wave basis
//! e^{i(k+Gm)x}, G = 2π/λ, it is real symmetric tridiagonal:
//! H(k)_{mm'} = ħ²/(2m*)(k+Gm)²·δ_{mm'} + (V₀/2)·δ_{|m−m'|,1}.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{DeviceConfig, NumericsConfig, HBAR2_OVER_2ME};
use crate::error::{Error, Result};

/// Solved 1D Bloch problem on a uniform k grid spanning [−π/λ, π/λ].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BandStructure1D {
    pub lambda_nm: f64,
    pub v0_mev: f64,
    pub mass_ratio: f64,
    /// Plane-wave cutoff used (coefficients run over m = −M..M).
    pub plane_wave_cutoff: usize,
    /// k samples including both endpoints; k_grid intervals.
    pub k_samples: Vec<f64>,
    /// energies[n][i] = E_{n+1}(k_i), bands sorted ascending per k.
    pub energies: Vec<Vec<f64>>,
    /// coefficients[n][i] = plane-wave coefficients of band n+1 at k_i,
    /// indexed by m+M.
    pub coefficients: Vec<Vec<Vec<f64>>>,
}

impl BandStructure1D {
    pub fn n_bands(&self) -> usize {
        self.energies.len()
    }

    /// Number of independent k points (both endpoints are stored but
    /// represent the same Bloch state).
    pub fn n_k_intervals(&self) -> usize {
        self.k_samples.len() - 1
    }

    /// Brillouin-zone average of band n (1-based): the on-site energy ε_n.
    pub fn band_average(&self, n: usize) -> f64 {
        trapezoid_bz_average(&self.energies[n - 1])
    }

    /// Band range [min, max] over the zone for band n (1-based).
    pub fn band_range(&self, n: usize) -> (f64, f64) {
        let e = &self.energies[n - 1];
        let mut lo = e[0];
        let mut hi = e[0];
        for &x in e {
            lo = lo.min(x);
            hi = hi.max(x);
        }
        (lo, hi)
    }

    /// 1D hopping Fourier coefficient 𝒯(n, j) = (λ/2π)∫dk E_n(k)e^{ikλj},
    /// real by inversion symmetry, evaluated by trapezoidal quadrature.
    pub fn fourier_coefficient(&self, n: usize, j: i32) -> f64 {
        let e = &self.energies[n - 1];
        let nk = self.n_k_intervals();
        let lam = self.lambda_nm;
        let mut acc = 0.0;
        for (i, &k) in self.k_samples.iter().enumerate() {
            let w = if i == 0 || i == nk { 0.5 } else { 1.0 };
            acc += w * e[i] * (k * lam * j as f64).cos();
        }
        acc / nk as f64
    }
}

/// BZ average with trapezoid weights over samples including both endpoints.
fn trapezoid_bz_average(e: &[f64]) -> f64 {
    let nk = e.len() - 1;
    let mut acc = 0.0;
    for (i, &x) in e.iter().enumerate() {
        let w = if i == 0 || i == nk { 0.5 } else { 1.0 };
        acc += w * x;
    }
    acc / nk as f64
}

/// Solve the 1D Bloch problem at every k with the configured cutoffs and
/// verify plane-wave convergence by re-solving at cutoff M−4.
///
/// Retains orbital_cutoff+2 bands. Errors if any retained band energy moves
/// by more than 1e-6 relative (floored by e_lambda) between the two cutoffs.
pub fn solve_bands_1d(dev: &DeviceConfig, num: &NumericsConfig) -> Result<BandStructure1D> {
    let n_bands = num.orbital_cutoff + 2;
    let m_full = num.plane_wave_cutoff;
    if 2 * m_full + 1 < n_bands {
        return Err(Error::Config(format!(
            "plane_wave_cutoff {} too small for {} bands",
            m_full, n_bands
        )));
    }
    let bs = solve_at_cutoff(dev, num, m_full, n_bands);
    let m_check = m_full.saturating_sub(4).max((n_bands + 1) / 2);
    let check = solve_at_cutoff(dev, num, m_check, n_bands);
    let floor = HBAR2_OVER_2ME / (dev.mass_ratio * dev.lambda_nm * dev.lambda_nm);
    for n in 0..n_bands {
        for i in 0..bs.k_samples.len() {
            let a = bs.energies[n][i];
            let b = check.energies[n][i];
            let drift = (a - b).abs() / a.abs().max(floor);
            if drift > 1e-6 {
                return Err(Error::NonConvergence(format!(
                    "band {} at k index {} drifts {:.2e} between plane-wave cutoffs {} and {}",
                    n + 1,
                    i,
                    drift,
                    m_full,
                    m_check
                )));
            }
        }
    }
    Ok(bs)
}

fn solve_at_cutoff(
    dev: &DeviceConfig,
    num: &NumericsConfig,
    m_cut: usize,
    n_bands: usize,
) -> BandStructure1D {
    let lam = dev.lambda_nm;
    let g = std::f64::consts::TAU / lam;
    let c_kin = HBAR2_OVER_2ME / dev.mass_ratio;
    let nk = num.k_grid;
    let k_samples: Vec<f64> = (0..=nk)
        .map(|i| -std::f64::consts::PI / lam + i as f64 * g / nk as f64)
        .collect();
    let dim = 2 * m_cut + 1;

    let per_k: Vec<(Vec<f64>, Vec<Vec<f64>>)> = k_samples
        .par_iter()
        .map(|&k| {
            let mut h = DMatrix::<f64>::zeros(dim, dim);
            for m in 0..dim {
                let q = k + g * (m as f64 - m_cut as f64);
                h[(m, m)] = c_kin * q * q;
                if m + 1 < dim {
                    h[(m, m + 1)] = dev.v0_mev / 2.0;
                    h[(m + 1, m)] = dev.v0_mev / 2.0;
                }
            }
            let eig = SymmetricEigen::new(h);
            let mut order: Vec<usize> = (0..dim).collect();
            order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
            let energies: Vec<f64> = order[..n_bands].iter().map(|&j| eig.eigenvalues[j]).collect();
            let coeffs: Vec<Vec<f64>> = order[..n_bands]
                .iter()
                .map(|&j| eig.eigenvectors.column(j).iter().copied().collect())
                .collect();
            (energies, coeffs)
        })
        .collect();

    let mut energies = vec![vec![0.0; k_samples.len()]; n_bands];
    let mut coefficients = vec![vec![Vec::new(); k_samples.len()]; n_bands];
    for (i, (es, cs)) in per_k.into_iter().enumerate() {
        for n in 0..n_bands {
            energies[n][i] = es[n];
            coefficients[n][i] = cs[n].clone();
        }
    }
    BandStructure1D {
        lambda_nm: lam,
        v0_mev: dev.v0_mev,
        mass_ratio: dev.mass_ratio,
        plane_wave_cutoff: m_cut,
        k_samples,
        energies,
        coefficients,
    }
}

/// One separable 2D band E_{(n_x,n_y)}(k) = E_{n_x}(k_x) + E_{n_y}(k_y).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BandStructure2D {
    /// 1-based band index pair.
    pub band_index: (usize, usize),
    /// On-site energy ε_n = BZ average of the 2D dispersion.
    pub onsite_energy: f64,
    pub band_min: f64,
    pub band_max: f64,
    /// True when (n_x, n_y) with n_x ≠ n_y has its mirror partner retained.
    pub degenerate_pair: bool,
    /// Isolation flag: the band's energy interval is disjoint from every
    /// other retained band's interval, its exact mirror partner excepted
    /// (the partner shares the interval identically by x↔y symmetry).
    pub isolated: bool,
}

impl BandStructure2D {
    /// Degenerate shells are keyed by the unordered index pair.
    pub fn shell_key(&self) -> (usize, usize) {
        let (a, b) = self.band_index;
        (a.min(b), a.max(b))
    }

    /// Electrons the band holds including spin (2 per orbital per site).
    pub fn capacity(&self) -> usize {
        2
    }
}

/// Assemble all 2D bands with n_x, n_y ≤ orbital_cutoff, sorted by ε_n
/// (ties broken by index pair for reproducibility), with isolation flags.
///
/// Isolation intervals are compared against every pair from the extended
/// 1D set (indices up to orbital_cutoff+2) so the top retained bands are
/// certified against omitted neighbors where 1D band ordering allows.
pub fn assemble_bands_2d(bs1d: &BandStructure1D, num: &NumericsConfig) -> Vec<BandStructure2D> {
    let cut = num.orbital_cutoff;
    let n_ext = bs1d.n_bands().min(cut + 2);
    let avg: Vec<f64> = (1..=n_ext).map(|n| bs1d.band_average(n)).collect();
    let range: Vec<(f64, f64)> = (1..=n_ext).map(|n| bs1d.band_range(n)).collect();

    // Extended interval list used only for disjointness checks.
    let mut ext = Vec::new();
    for nx in 1..=n_ext {
        for ny in 1..=n_ext {
            ext.push(((nx, ny), range[nx - 1].0 + range[ny - 1].0, range[nx - 1].1 + range[ny - 1].1));
        }
    }

    let mut out = Vec::new();
    for nx in 1..=cut {
        for ny in 1..=cut {
            let lo = range[nx - 1].0 + range[ny - 1].0;
            let hi = range[nx - 1].1 + range[ny - 1].1;
            let isolated = ext.iter().all(|&((ox, oy), olo, ohi)| {
                let same = (ox, oy) == (nx, ny);
                let mirror = (ox, oy) == (ny, nx);
                same || mirror || ohi < lo || olo > hi
            });
            out.push(BandStructure2D {
                band_index: (nx, ny),
                onsite_energy: avg[nx - 1] + avg[ny - 1],
                band_min: lo,
                band_max: hi,
                degenerate_pair: nx != ny,
                isolated,
            });
        }
    }
    out.sort_by(|a, b| {
        a.onsite_energy
            .partial_cmp(&b.onsite_energy)
            .unwrap()
            .then(a.band_index.cmp(&b.band_index))
    });
    out
}

/// Hopping amplitude 𝒯(n, j) for a separable 2D band and integer lattice
/// displacement, from the dispersion Fourier identity. The mixed-displacement
/// coefficient (j_x≠0 and j_y≠0) vanishes identically for a separable
/// dispersion; pure displacements reduce to 1D coefficients.
///
/// Verifies k-grid convergence by comparing against a doubled grid; errors
/// if the relative change exceeds 1e-8 (checked against a refined solve
/// passed in by the caller via `refined`, typically cached).
pub fn hopping_from_dispersion(
    bs1d: &BandStructure1D,
    band: (usize, usize),
    displacement: (i32, i32),
) -> f64 {
    let (nx, ny) = band;
    let (jx, jy) = displacement;
    match (jx, jy) {
        (0, 0) => bs1d.band_average(nx) + bs1d.band_average(ny),
        (j, 0) => bs1d.fourier_coefficient(nx, j),
        (0, j) => bs1d.fourier_coefficient(ny, j),
        // Separable dispersion: E(k) = E_x(k_x) + E_y(k_y); the 2D Fourier
        // coefficient with both j_x and j_y nonzero factorizes into a
        // vanishing single-axis integral for each term.
        _ => 0.0,
    }
}

/// Hopping with the quadrature-convergence contract: compares the k_grid
/// result against a doubled-grid solve and errors on drift > 1e-8 relative.
pub fn hopping_checked(
    dev: &DeviceConfig,
    num: &NumericsConfig,
    bs1d: &BandStructure1D,
    band: (usize, usize),
    displacement: (i32, i32),
) -> Result<f64> {
    let t = hopping_from_dispersion(bs1d, band, displacement);
    let mut num2 = num.clone();
    num2.k_grid *= 2;
    let fine = solve_bands_1d(dev, &num2)?;
    let t2 = hopping_from_dispersion(&fine, band, displacement);
    let scale = t.abs().max(1e-14);
    if (t - t2).abs() / scale > 1e-8 && (t - t2).abs() > 1e-12 {
        return Err(Error::NonConvergence(format!(
            "hopping for band {:?} displacement {:?} drifts {:.2e} on k-grid doubling",
            band,
            displacement,
            (t - t2).abs() / scale
        )));
    }
    Ok(t)
}

/// Reported hopping magnitude |𝒯| for an off-site displacement.
pub fn hopping_magnitude(bs1d: &BandStructure1D, band: (usize, usize), displacement: (i32, i32)) -> f64 {
    hopping_from_dispersion(bs1d, band, displacement).abs()
}

/// Shell-aggregated hopping for a table row: the mean of |𝒯(band, (1,0))|
/// over the degenerate partners of the shell containing `band` (for t′ pass
/// displacement (2,0)). For a non-degenerate shell this is just the band's
/// own coefficient magnitude.
pub fn shell_hopping(bs1d: &BandStructure1D, shell: (usize, usize), displacement: (i32, i32)) -> f64 {
    let (a, b) = shell;
    if a == b {
        hopping_magnitude(bs1d, (a, b), displacement)
    } else {
        0.5 * (hopping_magnitude(bs1d, (a, b), displacement)
            + hopping_magnitude(bs1d, (b, a), displacement))
    }
}

/// Grouped view of the 2D bands: shells of exactly degenerate partners in
/// ascending ε order, with per-shell isolation and cumulative fillings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Shell {
    /// Unordered band-index pair identifying the shell.
    pub key: (usize, usize),
    /// Member bands, ascending index pair.
    pub members: Vec<(usize, usize)>,
    pub onsite_energy: f64,
    /// A shell is isolated iff all members are.
    pub isolated: bool,
    /// Electrons filled when this shell and all lower shells are full.
    pub cumulative_filling: usize,
}

/// Group assembled 2D bands into shells in ascending-ε order.
pub fn shells(bands: &[BandStructure2D]) -> Vec<Shell> {
    let mut out: Vec<Shell> = Vec::new();
    for b in bands {
        let key = b.shell_key();
        if let Some(last) = out.last_mut() {
            if last.key == key {
                last.members.push(b.band_index);
                last.isolated &= b.isolated;
                continue;
            }
        }
        out.push(Shell {
            key,
            members: vec![b.band_index],
            onsite_energy: b.onsite_energy,
            isolated: b.isolated,
            cumulative_filling: 0,
        });
    }
    let mut filled = 0;
    for s in &mut out {
        filled += 2 * s.members.len();
        s.cumulative_filling = filled;
    }
    out
}

/// Admissible base fillings N_b: cumulative closed-shell counts whose next
/// (outer) shell is isolated, so a single-band effective model exists on it.
pub fn admissible_nb(shells: &[Shell]) -> Vec<usize> {
    let mut out = Vec::new();
    let mut below = 0;
    for s in shells {
        if s.isolated {
            out.push(below);
        }
        below = s.cumulative_filling;
    }
    out
}
