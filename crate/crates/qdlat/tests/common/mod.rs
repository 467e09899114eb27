//! Shared property checks: each returns Ok(detail) on success or
//! Err(explanation), so the same implementations back both the per-property
//! test functions and the aggregated acceptance report.

use qdlat::bands::{assemble_bands_2d, solve_bands_1d};
use qdlat::config::{derive_scales, Config};
use qdlat::coulomb::{element_real_space, onsite_tensor, CoulombTensor, Kernel};
use qdlat::ed::{FockSector, SiteHamiltonian};
use qdlat::pipeline::{sweep_csv, Pipeline};
use qdlat::wannier::build_basis;

pub type Check = Result<String, String>;

fn cfg_with(v0: f64, cutoff: usize) -> Config {
    let mut cfg = Config::default();
    cfg.device.v0_mev = v0;
    cfg.numerics.orbital_cutoff = cutoff;
    cfg
}

/// Free-particle limit: |𝒯(n,1)| = 2(2n−1)·e_λ and |𝒯(n,2)| = e_λ/2.
pub fn free_particle_hopping() -> Check {
    let mut cfg = cfg_with(0.0, 4);
    cfg.numerics.k_grid = 4096; // aliasing of 1/j² tails scales as 1/k_grid²
    let bs = solve_bands_1d(&cfg.device, &cfg.numerics).map_err(|e| e.to_string())?;
    let e_lam = derive_scales(&cfg.device).e_lambda;
    let mut worst = 0.0f64;
    for n in 1..=4 {
        let t1 = qdlat::bands::hopping_magnitude(&bs, (n, 1), (1, 0));
        let want1 = 2.0 * (2.0 * n as f64 - 1.0) * e_lam;
        let t2 = qdlat::bands::hopping_magnitude(&bs, (n, 1), (2, 0));
        let want2 = e_lam / 2.0;
        let r1 = (t1 - want1).abs() / want1;
        let r2 = (t2 - want2).abs() / want2;
        worst = worst.max(r1).max(r2);
        if r1 > 1e-6 || r2 > 1e-6 {
            return Err(format!(
                "band {n}: |t| = {t1:.9}/{t2:.9} vs closed forms {want1:.9}/{want2:.9}"
            ));
        }
    }
    Ok(format!("closed forms reproduced, worst relative error {worst:.2e}"))
}

/// Wannier basis orthonormality ⟨w_m|w_n⟩ = δ_mn to 1e-6 at both table
/// amplitudes, plus translated-copy orthogonality. The shallow amplitude
/// leaves the upper bands nearly free, so their orbitals carry slowly
/// decaying tails: reaching 1e-6 there needs a wide synthesis window
/// (real_span 80) and a k-grid fine enough (1536) to push the periodic
/// images of those tails far outside it. The deep amplitude decays
/// exponentially and meets the bound at production numerics.
pub fn wannier_orthonormality() -> Check {
    let mut worst = 0.0f64;
    for v0 in [0.56, 5.4] {
        let mut cfg = cfg_with(v0, 4);
        if v0 < 1.0 {
            cfg.numerics.k_grid = 1536;
            cfg.numerics.real_span = 80;
        }
        let bs = solve_bands_1d(&cfg.device, &cfg.numerics).map_err(|e| e.to_string())?;
        let ws = build_basis(&cfg.device, &cfg.numerics, &bs, 4).map_err(|e| e.to_string())?;
        for i in 0..ws.len() {
            for j in 0..ws.len() {
                let want = if i == j { 1.0 } else { 0.0 };
                let dev = (ws[i].overlap(&ws[j]) - want).abs();
                worst = worst.max(dev);
                if dev > 1e-6 {
                    return Err(format!(
                        "V0 {v0}: ⟨w{}|w{}⟩ deviates by {dev:.2e}",
                        i + 1,
                        j + 1
                    ));
                }
            }
        }
        // one-period translate of the lowest orbital
        let per = cfg.numerics.real_grid;
        let w = &ws[0];
        let mut acc = 0.0;
        for i in per..w.w.len() {
            acc += w.w[i] * w.w[i - per];
        }
        let t = (acc * w.dx).abs();
        worst = worst.max(t);
        if t > 1e-5 {
            return Err(format!("V0 {v0}: translate overlap {t:.2e}"));
        }
    }
    Ok(format!("orthonormal to {worst:.2e} at both amplitudes"))
}

/// Momentum-space tensor elements agree with the independent real-space
/// evaluation to better than 2%.
pub fn momentum_vs_real_space() -> Check {
    let mut worst = 0.0f64;
    for v0 in [0.56, 5.4] {
        let cfg = cfg_with(v0, 2);
        let bs = solve_bands_1d(&cfg.device, &cfg.numerics).map_err(|e| e.to_string())?;
        let b2 = assemble_bands_2d(&bs, &cfg.numerics);
        let ws = build_basis(&cfg.device, &cfg.numerics, &bs, 2).map_err(|e| e.to_string())?;
        let kernel = Kernel::screened(&cfg.device);
        let t = onsite_tensor(&kernel, &b2, &ws, &cfg.device, &cfg.numerics)
            .map_err(|e| e.to_string())?;
        let orb = |o: (usize, usize)| -> usize {
            t.orbitals.iter().position(|&p| p == o).expect("orbital present")
        };
        for (o1, o2, o3, o4) in [
            ((1, 1), (1, 1), (1, 1), (1, 1)),
            ((1, 1), (1, 2), (1, 2), (1, 1)),
            ((1, 2), (2, 1), (2, 1), (1, 2)),
            ((1, 1), (2, 2), (2, 2), (1, 1)),
            ((1, 1), (1, 2), (1, 1), (1, 2)),
        ] {
            let direct = element_real_space(&kernel, &ws, o1, o2, o3, o4);
            let quad = t.get(orb(o1), orb(o2), orb(o3), orb(o4));
            let scale = quad.abs().max(1e-3);
            let rel = (direct - quad).abs() / scale;
            worst = worst.max(rel);
            if rel > 0.02 {
                return Err(format!(
                    "V0 {v0} element {o1:?}{o2:?}{o3:?}{o4:?}: momentum {quad:.6} vs real {direct:.6} ({rel:.4} rel)"
                ));
            }
        }
    }
    Ok(format!("paths agree, worst relative difference {worst:.2e}"))
}

// --- independent brute-force diagonalization -----------------------------
//
// A deliberately naive second implementation: determinants as sorted
// occupation lists, operators applied through list insertion/removal with
// explicit permutation parity. No bit tricks shared with the library path.

#[derive(Clone, PartialEq)]
struct Det {
    up: Vec<usize>,
    dn: Vec<usize>,
}

fn remove(orbs: &[usize], p: usize) -> Option<(Vec<usize>, f64)> {
    let pos = orbs.iter().position(|&x| x == p)?;
    let mut out = orbs.to_vec();
    out.remove(pos);
    Some((out, if pos % 2 == 0 { 1.0 } else { -1.0 }))
}

fn insert(orbs: &[usize], p: usize) -> Option<(Vec<usize>, f64)> {
    if orbs.contains(&p) {
        return None;
    }
    let mut out = orbs.to_vec();
    let pos = out.iter().position(|&x| x > p).unwrap_or(out.len());
    out.insert(pos, p);
    Some((out, if pos % 2 == 0 { 1.0 } else { -1.0 }))
}

fn combos(m: usize, n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    fn rec(start: usize, m: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if left == 0 {
            out.push(cur.clone());
            return;
        }
        for p in start..m {
            cur.push(p);
            rec(p + 1, m, left - 1, cur, out);
            cur.pop();
        }
    }
    rec(0, m, n, &mut Vec::new(), &mut out);
    out
}

/// ⟨row|H|col⟩ accumulated by literal operator application of
/// H = Σ ε_p n_pσ + ½ Σ U[p,q,r,s] c†_pσ c†_qτ c_rτ c_sσ.
/// dn-string operators act with the ups listed first, so each dn
/// annihilation/creation picks up (−1)^{N_up}.
fn brute_matrix(eps: &[f64], u: &impl Fn(usize, usize, usize, usize) -> f64, dets: &[Det]) -> Vec<Vec<f64>> {
    let m = eps.len();
    let nd = dets.len();
    let mut h = vec![vec![0.0; nd]; nd];
    let idx = |d: &Det| dets.iter().position(|x| x == d).expect("closed sector");
    for (j, d) in dets.iter().enumerate() {
        for &p in d.up.iter().chain(d.dn.iter()) {
            h[j][j] += eps[p];
        }
        // spin channels: 0 = up, 1 = dn
        for s1 in 0..2 {
            for s2 in 0..2 {
                for p in 0..m {
                    for q in 0..m {
                        for r in 0..m {
                            for t in 0..m {
                                let amp = 0.5 * u(p, q, r, t);
                                if amp == 0.0 {
                                    continue;
                                }
                                // c_{t,s1}
                                let (mut up, mut dn) = (d.up.clone(), d.dn.clone());
                                let mut sign = 1.0;
                                let step = |up: &mut Vec<usize>,
                                            dn: &mut Vec<usize>,
                                            sign: &mut f64,
                                            orb: usize,
                                            spin: usize,
                                            create: bool|
                                 -> bool {
                                    let (list, cross) = if spin == 0 {
                                        (&mut *up, 1.0)
                                    } else {
                                        (
                                            &mut *dn,
                                            if up.len() % 2 == 0 { 1.0 } else { -1.0 },
                                        )
                                    };
                                    let res = if create {
                                        insert(list, orb)
                                    } else {
                                        remove(list, orb)
                                    };
                                    match res {
                                        Some((new, s)) => {
                                            *list = new;
                                            *sign *= s * cross;
                                            true
                                        }
                                        None => false,
                                    }
                                };
                                if !step(&mut up, &mut dn, &mut sign, t, s1, false) {
                                    continue;
                                }
                                if !step(&mut up, &mut dn, &mut sign, r, s2, false) {
                                    continue;
                                }
                                if !step(&mut up, &mut dn, &mut sign, q, s2, true) {
                                    continue;
                                }
                                if !step(&mut up, &mut dn, &mut sign, p, s1, true) {
                                    continue;
                                }
                                let i = idx(&Det { up, dn });
                                h[i][j] += sign * amp;
                            }
                        }
                    }
                }
            }
        }
    }
    h
}

fn lowest_eig(h: &[Vec<f64>]) -> f64 {
    let n = h.len();
    let mat = nalgebra::DMatrix::from_fn(n, n, |i, j| h[i][j]);
    mat.symmetric_eigenvalues()
        .iter()
        .fold(f64::INFINITY, |a, &b| a.min(b))
}

/// Library ED (grouped matvec / dense path) equals the naive list-based
/// diagonalization for every sector with M ≤ 3, N ≤ 4, to 1e-8 meV, on a
/// physical tensor slice.
pub fn ed_brute_force_equivalence() -> Check {
    let cfg = cfg_with(0.56, 2);
    let p = Pipeline::new(cfg.clone(), None).map_err(|e| e.to_string())?;
    let full = p.tensor().map_err(|e| e.to_string())?;
    // M = 3 slice of the physical tensor
    let m = 3;
    let mut values = vec![0.0; m * m * m * m];
    for a in 0..m {
        for b in 0..m {
            for c in 0..m {
                for d in 0..m {
                    values[((a * m + b) * m + c) * m + d] = full.get(a, b, c, d);
                }
            }
        }
    }
    let tensor = CoulombTensor {
        orbitals: full.orbitals[..m].to_vec(),
        eps: full.eps[..m].to_vec(),
        values,
        errors: vec![0.0; m * m * m * m],
        q_grid: full.q_grid,
        q_max: full.q_max,
        flagged: 0,
    };
    let mut worst = 0.0f64;
    let mut checked = 0;
    for n in 0..=4usize {
        for two_sz in (-(n as i32)..=n as i32).step_by(2) {
            if (n as i32 + two_sz) % 2 != 0 {
                continue;
            }
            let nu = ((n as i32 + two_sz) / 2) as usize;
            let ndn = n - nu;
            if nu > m || ndn > m {
                continue;
            }
            let sector = FockSector::new(m, n, two_sz).map_err(|e| e.to_string())?;
            let h = SiteHamiltonian::build(&tensor, sector).map_err(|e| e.to_string())?;
            let lib = h.ground_energy(&cfg.numerics).map_err(|e| e.to_string())?.energy;

            let mut dets = Vec::new();
            for up in combos(m, nu) {
                for dn in combos(m, ndn) {
                    dets.push(Det { up: up.clone(), dn });
                }
            }
            let hb = brute_matrix(
                &tensor.eps,
                &|a, b, c, d| tensor.get(a, b, c, d),
                &dets,
            );
            // symmetry of the naive matrix is itself a check
            for i in 0..hb.len() {
                for j in 0..hb.len() {
                    if (hb[i][j] - hb[j][i]).abs() > 1e-10 {
                        return Err(format!("naive H not symmetric at ({i},{j})"));
                    }
                }
            }
            let naive = lowest_eig(&hb);
            let dev = (lib - naive).abs();
            worst = worst.max(dev);
            checked += 1;
            if dev > 1e-8 {
                return Err(format!(
                    "sector N={n}, 2Sz={two_sz}: library {lib:.12} vs naive {naive:.12}"
                ));
            }
        }
    }
    Ok(format!(
        "{checked} sectors agree with the naive diagonalization, worst |ΔE| = {worst:.2e} meV"
    ))
}

/// E(N, Sᶻ) = E(N, −Sᶻ) on the physical tensor.
pub fn spin_flip_symmetry() -> Check {
    let cfg = cfg_with(0.56, 2);
    let p = Pipeline::new(cfg.clone(), None).map_err(|e| e.to_string())?;
    let tensor = p.tensor().map_err(|e| e.to_string())?;
    let m = tensor.n_orbitals();
    let mut worst = 0.0f64;
    for (n, two_sz) in [(2usize, 2i32), (3, 1), (3, 3), (4, 2)] {
        let e_plus = SiteHamiltonian::build(&tensor, FockSector::new(m, n, two_sz).unwrap())
            .map_err(|e| e.to_string())?
            .ground_energy(&cfg.numerics)
            .map_err(|e| e.to_string())?
            .energy;
        let e_minus = SiteHamiltonian::build(&tensor, FockSector::new(m, n, -two_sz).unwrap())
            .map_err(|e| e.to_string())?
            .ground_energy(&cfg.numerics)
            .map_err(|e| e.to_string())?
            .energy;
        let dev = (e_plus - e_minus).abs();
        worst = worst.max(dev);
        if dev > 1e-9 {
            return Err(format!(
                "N={n}: E(+{two_sz}/2) = {e_plus:.12} vs E(-{two_sz}/2) = {e_minus:.12}"
            ));
        }
    }
    Ok(format!("sector energies spin-symmetric to {worst:.2e} meV"))
}

/// Ground energies are variational: enlarging the orbital set (M) or the
/// plane-wave basis can only lower them.
pub fn variational_monotonicity() -> Check {
    // in M, via nested truncations of one cutoff-3 tensor
    let cfg = cfg_with(0.56, 3);
    let p = Pipeline::new(cfg.clone(), None).map_err(|e| e.to_string())?;
    let tensor = p.tensor().map_err(|e| e.to_string())?;
    let mut prev = f64::INFINITY;
    let mut energies = Vec::new();
    for max_band in 1..=3usize {
        let t = tensor.restrict_max_band(max_band);
        let m = t.n_orbitals();
        let e = SiteHamiltonian::build(&t, FockSector::new(m, 2, 0).unwrap())
            .map_err(|e| e.to_string())?
            .ground_energy(&cfg.numerics)
            .map_err(|e| e.to_string())?
            .energy;
        if e > prev + 1e-10 {
            return Err(format!(
                "E(N=2) rose from {prev:.9} to {e:.9} when enlarging M (max band {max_band})"
            ));
        }
        prev = e;
        energies.push(e);
    }

    // In the plane-wave cutoff, pointwise on the two lowest bands, at both
    // amplitudes. The band solver refuses cutoffs whose bands still drift
    // above 1e-6 relative, so within its accepted domain enlargement may
    // move energies only at eigensolver-noise level; the 1e-10 allowance
    // covers that noise while still catching any genuine rise.
    for v0 in [0.56, 5.4] {
        let mut prev_bands: Option<Vec<Vec<f64>>> = None;
        for pw in [10usize, 12, 16] {
            let mut c = cfg_with(v0, 2);
            c.numerics.plane_wave_cutoff = pw;
            let bs = solve_bands_1d(&c.device, &c.numerics).map_err(|e| e.to_string())?;
            if let Some(prev) = &prev_bands {
                for n in 0..2 {
                    for (a, b) in prev[n].iter().zip(&bs.energies[n]) {
                        if *b > *a + 1e-10 {
                            return Err(format!(
                                "V0 {v0}: band {} rose by {:.3e} when enlarging the plane-wave basis to {pw}",
                                n + 1,
                                b - a
                            ));
                        }
                    }
                }
            }
            prev_bands = Some(bs.energies.clone());
        }
    }
    Ok(format!(
        "E(N=2) decreases over nested orbital sets ({:.6} → {:.6} → {:.6}); bands never rise under plane-wave enlargement",
        energies[0], energies[1], energies[2]
    ))
}

/// Screening can only reduce density-density repulsion. The bare kernel has
/// no finite 2D Fourier transform at q = 0, so both kernels are evaluated on
/// the independent real-space path, element by element.
pub fn screened_le_bare() -> Check {
    let cfg = cfg_with(0.56, 2);
    let bs = solve_bands_1d(&cfg.device, &cfg.numerics).map_err(|e| e.to_string())?;
    let ws = build_basis(&cfg.device, &cfg.numerics, &bs, 2).map_err(|e| e.to_string())?;
    let scr = Kernel::screened(&cfg.device);
    let bare = Kernel::bare(&cfg.device);
    let orbs = [(1usize, 1usize), (1, 2), (2, 1), (2, 2)];
    let mut min_gap = f64::INFINITY;
    for &a in &orbs {
        for &b in &orbs {
            let s = element_real_space(&scr, &ws, a, b, b, a);
            let u = element_real_space(&bare, &ws, a, b, b, a);
            min_gap = min_gap.min(u - s);
            if s >= u {
                return Err(format!(
                    "density-density ({a:?},{b:?}): screened {s:.9} ≥ bare {u:.9}"
                ));
            }
        }
    }
    Ok(format!(
        "all 16 density-density elements strictly reduced; smallest bare−screened gap {min_gap:.4} meV"
    ))
}

/// Sweeps are deterministic and cache-transparent: byte-identical CSV text
/// uncached, cold-cached, and warm-cached.
pub fn sweep_cache_determinism() -> Check {
    let mut cfg = cfg_with(0.56, 1);
    cfg.numerics.q_grid = 96;
    cfg.numerics.real_span = 8;
    cfg.task.v0_list = vec![0.5, 1.0];
    cfg.task.nb_list = vec![0];
    let dir = tempfile::TempDir::new().map_err(|e| e.to_string())?;

    let plain = Pipeline::new(cfg.clone(), None).map_err(|e| e.to_string())?;
    let a = sweep_csv(&plain.sweep().map_err(|e| e.to_string())?);

    let cached = Pipeline::new(cfg.clone(), Some(dir.path().to_path_buf())).map_err(|e| e.to_string())?;
    let b = sweep_csv(&cached.sweep().map_err(|e| e.to_string())?); // cold
    let c = sweep_csv(&cached.sweep().map_err(|e| e.to_string())?); // warm
    let (hits, _) = cached.cache_stats();
    if a != b {
        return Err("uncached vs cold-cache sweep CSVs differ".into());
    }
    if b != c {
        return Err("cold vs warm cache sweep CSVs differ".into());
    }
    if hits == 0 {
        return Err("warm rerun did not hit the cache".into());
    }
    Ok(format!(
        "three evaluation modes byte-identical ({} bytes, {hits} cache hits)",
        a.len()
    ))
}

/// All eight property checks in criterion order. Consumed by the
/// acceptance binary; the harnessed suite calls each check directly.
#[allow(dead_code)]
pub fn all_properties() -> Vec<(&'static str, Check)> {
    vec![
        ("free-particle hopping", free_particle_hopping()),
        ("wannier orthonormality", wannier_orthonormality()),
        ("momentum vs real space", momentum_vs_real_space()),
        ("ed brute-force equivalence", ed_brute_force_equivalence()),
        ("spin-flip symmetry", spin_flip_symmetry()),
        ("variational monotonicity", variational_monotonicity()),
        ("screened <= bare", screened_le_bare()),
        ("sweep/cache determinism", sweep_cache_determinism()),
    ]
}
