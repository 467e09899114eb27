//! Deterministic orchestration of the stage graph (bands → wannier →
//! coulomb → ed → effective) with content-addressed caching.
//!
//! Each stage is keyed by a canonical serialization of exactly the
//! configuration subset it consumes, so changing one parameter invalidates
//! only the stages that read it. Cache entries are binary payloads
//! (bincode, so non-finite floats round-trip bitwise) written atomically
//! (temp file + rename) alongside a text meta file carrying the key,
//! format version, and payload hash; corrupt entries are recomputed and
//! overwritten with a warning.

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use crate::bands::{assemble_bands_2d, shells, solve_bands_1d, BandStructure1D, BandStructure2D, Shell};
use crate::config::{validate_config, Config};
use crate::coulomb::{onsite_tensor, CoulombTensor, Kernel};
use crate::csvio::{fmt_e, fmt_f};
use crate::ed::{addition_spectrum, hund_check, EDResult, HundReport};
use crate::effective::{
    effective_params, shell_for_base, table_report, EffectiveParams, SiteContext, TableRow,
};
use crate::error::{Error, Result};
use crate::wannier::{build_basis, Wannier1D};

/// Bumping this invalidates every existing cache entry.
const CACHE_FORMAT_VERSION: u32 = 2;

/// Identity of one stage evaluation: the stage name plus the canonical
/// serialization of the config subset it consumes.
#[derive(Debug, Clone)]
pub struct StageKey {
    pub stage: String,
    pub canon: String,
    pub hash: String,
}

impl StageKey {
    pub fn new(stage: &str, payload: &impl Serialize) -> Result<StageKey> {
        let canon = serde_json::to_string(payload)?;
        let mut h = Sha256::new();
        h.update(stage.as_bytes());
        h.update([0u8]);
        h.update(CACHE_FORMAT_VERSION.to_le_bytes());
        h.update([0u8]);
        h.update(canon.as_bytes());
        let hash = h
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect::<String>();
        Ok(StageKey {
            stage: stage.to_string(),
            canon,
            hash,
        })
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Content-addressed stage cache. With no root directory it degrades to a
/// pass-through that still counts productions as misses.
pub struct Cache {
    root: Option<PathBuf>,
    hits: AtomicUsize,
    misses: AtomicUsize,
}

impl Cache {
    pub fn new(root: Option<PathBuf>) -> Cache {
        Cache {
            root,
            hits: AtomicUsize::new(0),
            misses: AtomicUsize::new(0),
        }
    }

    pub fn stats(&self) -> (usize, usize) {
        (self.hits.load(Ordering::Relaxed), self.misses.load(Ordering::Relaxed))
    }

    fn entry_paths(&self, key: &StageKey) -> Option<(PathBuf, PathBuf)> {
        let root = self.root.as_ref()?;
        let dir = root.join(&key.stage);
        Some((dir.join(format!("{}.bin", key.hash)), dir.join(format!("{}.meta", key.hash))))
    }

    fn load<T: DeserializeOwned>(&self, key: &StageKey) -> Option<T> {
        let (bin, meta) = self.entry_paths(key)?;
        let payload = fs::read(&bin).ok()?;
        let meta_text = fs::read_to_string(&meta).ok()?;
        let recorded = meta_text
            .lines()
            .find_map(|l| l.strip_prefix("payload_sha256="))?;
        if recorded != sha256_hex(&payload) {
            eprintln!(
                "warning: corrupt cache entry {} (hash mismatch); recomputing",
                bin.display()
            );
            return None;
        }
        match bincode::deserialize(&payload) {
            Ok(v) => Some(v),
            Err(e) => {
                eprintln!(
                    "warning: unreadable cache entry {} ({e}); recomputing",
                    bin.display()
                );
                None
            }
        }
    }

    fn atomic_write(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
        let dir = path.parent().expect("cache entry has a parent dir");
        let tmp = dir.join(format!(
            ".{}.tmp-{}-{:x}",
            path.file_name().unwrap().to_string_lossy(),
            std::process::id(),
            std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.subsec_nanos())
                .unwrap_or(0)
        ));
        fs::write(&tmp, bytes)?;
        fs::rename(&tmp, path)
    }

    fn store<T: Serialize>(&self, key: &StageKey, value: &T) {
        let Some((bin, meta)) = self.entry_paths(key) else {
            return;
        };
        let payload = match bincode::serialize(value) {
            Ok(p) => p,
            Err(e) => {
                eprintln!("warning: cache serialization failed ({e}); skipping store");
                return;
            }
        };
        let meta_text = format!(
            "stage={}\nversion={}\nkey={}\npayload_sha256={}\ncreated_unix={}\n",
            key.stage,
            CACHE_FORMAT_VERSION,
            key.canon,
            sha256_hex(&payload),
            std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0)
        );
        let write = || -> std::io::Result<()> {
            fs::create_dir_all(bin.parent().unwrap())?;
            Self::atomic_write(&bin, &payload)?;
            Self::atomic_write(&meta, meta_text.as_bytes())
        };
        if let Err(e) = write() {
            eprintln!("warning: cache write failed for {} ({e})", bin.display());
        }
    }

    /// Return the cached output for `key` or compute, store, and return it.
    pub fn run<T, F>(&self, stage: &str, payload: &impl Serialize, producer: F) -> Result<T>
    where
        T: Serialize + DeserializeOwned,
        F: FnOnce() -> Result<T>,
    {
        let key = StageKey::new(stage, payload)?;
        if let Some(v) = self.load::<T>(&key) {
            self.hits.fetch_add(1, Ordering::Relaxed);
            return Ok(v);
        }
        let v = producer()?;
        self.store(&key, &v);
        self.misses.fetch_add(1, Ordering::Relaxed);
        Ok(v)
    }
}

// Per-stage key payloads: exactly the config fields each stage consumes.

#[derive(Serialize)]
struct BandsKey {
    lambda_nm: f64,
    v0_mev: f64,
    mass_ratio: f64,
    plane_wave_cutoff: usize,
    k_grid: usize,
    orbital_cutoff: usize,
}

#[derive(Serialize)]
struct WannierKey {
    bands: BandsKey,
    real_grid: usize,
    real_span: usize,
}

#[derive(Serialize)]
struct CoulombKey {
    wannier: WannierKey,
    epsilon_r: f64,
    depth_nm: f64,
    q_grid: usize,
    q_max_inv_nm: f64,
}

#[derive(Serialize)]
struct EdKey {
    coulomb: CoulombKey,
    eigensolver_tol: f64,
    ed_max_iterations: usize,
    op: &'static str,
    arg: usize,
}

/// All single-site stage outputs, bundled for the parameter extractors.
pub struct SiteBundle {
    pub bands: BandStructure1D,
    pub bands2d: Vec<BandStructure2D>,
    pub shells: Vec<Shell>,
    pub basis: Vec<Wannier1D>,
    pub tensor: CoulombTensor,
}

impl SiteBundle {
    pub fn context<'a>(&'a self, cfg: &'a Config) -> SiteContext<'a> {
        SiteContext {
            device: &cfg.device,
            bands: &self.bands,
            bands2d: &self.bands2d,
            shells: &self.shells,
            basis: &self.basis,
            tensor: &self.tensor,
            kernel: Kernel::screened(&cfg.device),
        }
    }
}

/// One sweep-grid evaluation: the swept depth plus a summary row; failed
/// points carry the error text and NaN physical columns.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub d_nm: f64,
    pub row: TableRow,
    pub error: String,
}

/// Data for the amplitude-sweep figure: U and t at N_b = 0 plus the
/// outer-shell hopping at N_b = 2, per swept amplitude.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Fig3Point {
    pub v0_mev: f64,
    pub u_mev: f64,
    pub t_nb0_mev: f64,
    pub t_nb2_mev: f64,
}

/// `sweep.csv`: table columns prefixed by the swept depth, plus an error
/// column (empty on success).
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from(
        "d_nm,v0_mev,nb,nx,ny,degenerate,u_mev,u_err_mev,v_mev,v_err_mev,t_mev,tprime_mev,isolated,error\n",
    );
    for r in rows {
        let t = &r.row;
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            fmt_f(r.d_nm),
            fmt_f(t.v0_mev),
            t.nb,
            t.nx,
            t.ny,
            t.degenerate,
            fmt_f(t.u_mev),
            fmt_e(t.u_err_mev),
            fmt_f(t.v_mev),
            fmt_e(t.v_err_mev),
            fmt_f(t.t_mev),
            fmt_f(t.tprime_mev),
            t.isolated,
            r.error.replace([',', '\n'], ";")
        ));
    }
    s
}

/// `fig3.csv`.
pub fn fig3_csv(points: &[Fig3Point]) -> String {
    let mut s = String::from("v0_mev,u_mev,t_nb0_mev,t_nb2_mev\n");
    for p in points {
        s.push_str(&format!(
            "{},{},{},{}\n",
            fmt_f(p.v0_mev),
            fmt_f(p.u_mev),
            fmt_f(p.t_nb0_mev),
            fmt_f(p.t_nb2_mev)
        ));
    }
    s
}

/// Orchestrator owning a validated configuration and a (shareable) cache.
pub struct Pipeline {
    pub cfg: Config,
    cache: Arc<Cache>,
}

impl Pipeline {
    pub fn new(cfg: Config, cache_root: Option<PathBuf>) -> Result<Pipeline> {
        validate_config(&cfg)?;
        Ok(Pipeline {
            cfg,
            cache: Arc::new(Cache::new(cache_root)),
        })
    }

    /// A pipeline for a modified configuration sharing this cache.
    pub fn with_config(&self, cfg: Config) -> Result<Pipeline> {
        validate_config(&cfg)?;
        Ok(Pipeline {
            cfg,
            cache: Arc::clone(&self.cache),
        })
    }

    pub fn cache_stats(&self) -> (usize, usize) {
        self.cache.stats()
    }

    fn bands_key(&self) -> BandsKey {
        BandsKey {
            lambda_nm: self.cfg.device.lambda_nm,
            v0_mev: self.cfg.device.v0_mev,
            mass_ratio: self.cfg.device.mass_ratio,
            plane_wave_cutoff: self.cfg.numerics.plane_wave_cutoff,
            k_grid: self.cfg.numerics.k_grid,
            orbital_cutoff: self.cfg.numerics.orbital_cutoff,
        }
    }

    fn wannier_key(&self) -> WannierKey {
        WannierKey {
            bands: self.bands_key(),
            real_grid: self.cfg.numerics.real_grid,
            real_span: self.cfg.numerics.real_span,
        }
    }

    fn coulomb_key(&self) -> CoulombKey {
        CoulombKey {
            wannier: self.wannier_key(),
            epsilon_r: self.cfg.device.epsilon_r,
            depth_nm: self.cfg.device.depth_nm,
            q_grid: self.cfg.numerics.q_grid,
            q_max_inv_nm: self.cfg.numerics.q_max_inv_nm,
        }
    }

    fn ed_key(&self, op: &'static str, arg: usize) -> EdKey {
        EdKey {
            coulomb: self.coulomb_key(),
            eigensolver_tol: self.cfg.numerics.eigensolver_tol,
            ed_max_iterations: self.cfg.numerics.ed_max_iterations,
            op,
            arg,
        }
    }

    pub fn bands(&self) -> Result<BandStructure1D> {
        self.cache.run("bands", &self.bands_key(), || {
            solve_bands_1d(&self.cfg.device, &self.cfg.numerics)
        })
    }

    pub fn basis(&self) -> Result<Vec<Wannier1D>> {
        let bands = self.bands()?;
        self.cache.run("wannier", &self.wannier_key(), || {
            build_basis(
                &self.cfg.device,
                &self.cfg.numerics,
                &bands,
                self.cfg.numerics.orbital_cutoff,
            )
        })
    }

    pub fn tensor(&self) -> Result<CoulombTensor> {
        let bands = self.bands()?;
        let bands2d = assemble_bands_2d(&bands, &self.cfg.numerics);
        let basis = self.basis()?;
        self.cache.run("coulomb", &self.coulomb_key(), || {
            onsite_tensor(
                &Kernel::screened(&self.cfg.device),
                &bands2d,
                &basis,
                &self.cfg.device,
                &self.cfg.numerics,
            )
        })
    }

    /// All stage outputs up to the Coulomb tensor.
    pub fn bundle(&self) -> Result<SiteBundle> {
        let bands = self.bands()?;
        let bands2d = assemble_bands_2d(&bands, &self.cfg.numerics);
        let sh = shells(&bands2d);
        let basis = self.basis()?;
        let tensor = self.tensor()?;
        Ok(SiteBundle {
            bands,
            bands2d,
            shells: sh,
            basis,
            tensor,
        })
    }

    /// Addition spectrum up to the configured N_max (cached ED stage).
    pub fn addition(&self, n_max: usize) -> Result<EDResult> {
        let tensor = self.tensor()?;
        self.cache.run("ed", &self.ed_key("addition", n_max), || {
            addition_spectrum(&tensor, n_max, &self.cfg.numerics)
        })
    }

    /// Hund's-rule report at base filling `nb` (cached ED stage).
    pub fn hund(&self, nb: usize) -> Result<HundReport> {
        let tensor = self.tensor()?;
        self.cache.run("ed", &self.ed_key("hund", nb), || {
            hund_check(&tensor, nb, &self.cfg.numerics)
        })
    }

    /// Effective parameters at base filling `nb` (cached effective stage).
    pub fn effective(&self, nb: usize) -> Result<EffectiveParams> {
        let bundle = self.bundle()?;
        self.cache.run("effective", &self.ed_key("params", nb), || {
            effective_params(&bundle.context(&self.cfg), nb, &self.cfg.numerics)
        })
    }

    /// One summary-table row (cached effective stage, NaN-degrading).
    pub fn row(&self, nb: usize) -> Result<TableRow> {
        let bundle = self.bundle()?;
        self.cache.run("effective", &self.ed_key("row", nb), || {
            let ctx = bundle.context(&self.cfg);
            let mut rows = table_report(&ctx, &[nb], &self.cfg.numerics)?;
            rows.pop()
                .ok_or_else(|| Error::Missing("table row production".into()))
        })
    }

    /// Summary table for `nb_list`, defaulting to every admissible base
    /// filling of the current configuration when the list is empty.
    pub fn table(&self, nb_list: &[usize]) -> Result<Vec<TableRow>> {
        let list: Vec<usize> = if nb_list.is_empty() {
            crate::bands::admissible_nb(&self.bundle()?.shells)
        } else {
            nb_list.to_vec()
        };
        list.iter().map(|&nb| self.row(nb)).collect()
    }

    /// Outer-shell hopping magnitude at base filling `nb` (band data only).
    pub fn hopping_at_base(&self, nb: usize, displacement: (i32, i32)) -> Result<f64> {
        let bands = self.bands()?;
        let bands2d = assemble_bands_2d(&bands, &self.cfg.numerics);
        let sh = shells(&bands2d);
        let shell = shell_for_base(&sh, nb)?;
        Ok(crate::bands::shell_hopping(&bands, shell.key, displacement))
    }

    fn grid(&self) -> (Vec<f64>, Vec<f64>, Vec<usize>) {
        let t = &self.cfg.task;
        let v0s = if t.v0_list.is_empty() {
            vec![self.cfg.device.v0_mev]
        } else {
            t.v0_list.clone()
        };
        let ds = if t.d_list.is_empty() {
            vec![self.cfg.device.depth_nm]
        } else {
            t.d_list.clone()
        };
        let nbs = if t.nb_list.is_empty() {
            vec![t.nb]
        } else {
            t.nb_list.clone()
        };
        (v0s, ds, nbs)
    }

    /// Evaluate the configured sweep grid (V₀ × d × N_b). Points run
    /// concurrently, share the cache, and fail independently: a failed
    /// point records its error text in the row instead of aborting.
    pub fn sweep(&self) -> Result<Vec<SweepRow>> {
        let (v0s, ds, nbs) = self.grid();
        let mut points = Vec::new();
        for &v0 in &v0s {
            for &d in &ds {
                for &nb in &nbs {
                    points.push((v0, d, nb));
                }
            }
        }
        let rows: Vec<SweepRow> = points
            .par_iter()
            .map(|&(v0, d, nb)| {
                let mut cfg = self.cfg.clone();
                cfg.device.v0_mev = v0;
                cfg.device.depth_nm = d;
                let point = match self.with_config(cfg) {
                    Ok(p) => p,
                    Err(e) => return failed_point(v0, d, nb, &e),
                };
                match point.row(nb) {
                    Ok(row) => SweepRow {
                        d_nm: d,
                        row,
                        error: String::new(),
                    },
                    Err(e) => failed_point(v0, d, nb, &e),
                }
            })
            .collect();
        Ok(rows)
    }

    /// Amplitude-figure points from the sweep grid: one per V₀ at the first
    /// swept depth, with N_b = 0 interaction data and band-only hoppings.
    pub fn fig3(&self, sweep_rows: &[SweepRow]) -> Result<Vec<Fig3Point>> {
        let (v0s, ds, _) = self.grid();
        let d0 = ds[0];
        let mut out = Vec::new();
        for &v0 in &v0s {
            let row = sweep_rows
                .iter()
                .find(|r| r.d_nm == d0 && r.row.v0_mev == v0 && r.row.nb == 0);
            let (u, t0) = match row {
                Some(r) if r.error.is_empty() => (r.row.u_mev, r.row.t_mev),
                _ => (f64::NAN, f64::NAN),
            };
            let mut cfg = self.cfg.clone();
            cfg.device.v0_mev = v0;
            cfg.device.depth_nm = d0;
            let t2 = self
                .with_config(cfg)
                .and_then(|p| p.hopping_at_base(2, (1, 0)))
                .unwrap_or(f64::NAN);
            out.push(Fig3Point {
                v0_mev: v0,
                u_mev: u,
                t_nb0_mev: t0,
                t_nb2_mev: t2,
            });
        }
        Ok(out)
    }
}

fn failed_point(v0: f64, d: f64, nb: usize, e: &Error) -> SweepRow {
    SweepRow {
        d_nm: d,
        row: TableRow {
            v0_mev: v0,
            nb,
            nx: 0,
            ny: 0,
            degenerate: false,
            u_mev: f64::NAN,
            u_err_mev: f64::NAN,
            v_mev: f64::NAN,
            v_err_mev: f64::NAN,
            t_mev: f64::NAN,
            tprime_mev: f64::NAN,
            isolated: false,
        },
        error: e.to_string(),
    }
}
