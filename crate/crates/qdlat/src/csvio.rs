//! Deterministic CSV rendering for every output schema.
//!
//! Physical quantities print with 9 fixed decimals and error/residual
//! estimates in scientific notation with 3 decimals, so repeated runs of
//! the same configuration emit byte-identical files. Every file carries a
//! header row with units encoded in the column names.

use crate::bands::{hopping_from_dispersion, BandStructure1D, BandStructure2D};
use crate::coulomb::CoulombTensor;
use crate::ed::EDResult;
use crate::effective::{FeasibilityReport, TableRow};
use crate::wannier::Wannier1D;

/// Fixed-point format for physical values (9 decimals).
pub fn fmt_f(x: f64) -> String {
    format!("{x:.9}")
}

/// Scientific format for error estimates and residuals (3 decimals).
pub fn fmt_e(x: f64) -> String {
    format!("{x:.3e}")
}

/// `band_1d.csv`: the 1D dispersion on the k grid, one row per (k, band).
pub fn band_1d_csv(bs: &BandStructure1D) -> String {
    let mut s = String::from("k_nm_inv,band_index,energy_mev\n");
    let nk = bs.k_samples.len();
    for ik in 0..nk {
        for band in 1..=bs.n_bands() {
            s.push_str(&fmt_f(bs.k_samples[ik]));
            s.push(',');
            s.push_str(&band.to_string());
            s.push(',');
            s.push_str(&fmt_f(bs.energies[band - 1][ik]));
            s.push('\n');
        }
    }
    s
}

/// `bands_2d.csv`: assembled 2D bands in ascending-ε order.
pub fn bands_2d_csv(bands: &[BandStructure2D]) -> String {
    let mut s = String::from("nx,ny,eps_mev,min_mev,max_mev,isolated\n");
    for b in bands {
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            b.band_index.0,
            b.band_index.1,
            fmt_f(b.onsite_energy),
            fmt_f(b.band_min),
            fmt_f(b.band_max),
            b.isolated
        ));
    }
    s
}

/// `hoppings.csv`: signed dispersion Fourier coefficients per band for the
/// standard displacement set, including a mixed displacement (identically
/// zero for the separable potential).
pub fn hoppings_csv(bs1d: &BandStructure1D, bands: &[BandStructure2D]) -> String {
    let mut s = String::from("nx,ny,jx,jy,t_mev\n");
    for b in bands {
        for &(jx, jy) in &[(1i32, 0i32), (0, 1), (2, 0), (0, 2), (1, 1)] {
            let t = hopping_from_dispersion(bs1d, b.band_index, (jx, jy));
            s.push_str(&format!(
                "{},{},{jx},{jy},{}\n",
                b.band_index.0,
                b.band_index.1,
                fmt_f(t)
            ));
        }
    }
    s
}

/// `wannier_<n>.csv`: the 1D orbital on its real-space grid.
pub fn wannier_csv(w: &Wannier1D) -> String {
    let mut s = String::from("x_nm,amplitude_per_sqrt_nm\n");
    for (x, a) in w.x.iter().zip(&w.w) {
        s.push_str(&fmt_f(*x));
        s.push(',');
        s.push_str(&fmt_f(*a));
        s.push('\n');
    }
    s
}

/// `coulomb_tensor.csv`: nonzero tensor elements with error estimates.
pub fn coulomb_csv(t: &CoulombTensor) -> String {
    let mut s = String::from("n1x,n1y,n2x,n2y,n3x,n3y,n4x,n4y,value_mev,err_mev\n");
    let m = t.n_orbitals();
    for n1 in 0..m {
        for n2 in 0..m {
            for n3 in 0..m {
                for n4 in 0..m {
                    let val = t.get(n1, n2, n3, n4);
                    if val == 0.0 {
                        continue;
                    }
                    let (o1, o2, o3, o4) = (
                        t.orbitals[n1],
                        t.orbitals[n2],
                        t.orbitals[n3],
                        t.orbitals[n4],
                    );
                    s.push_str(&format!(
                        "{},{},{},{},{},{},{},{},{},{}\n",
                        o1.0,
                        o1.1,
                        o2.0,
                        o2.1,
                        o3.0,
                        o3.1,
                        o4.0,
                        o4.1,
                        fmt_f(val),
                        fmt_e(t.err(n1, n2, n3, n4))
                    ));
                }
            }
        }
    }
    s
}

/// `ed_energies.csv`: every solved (N, 2Sᶻ ≥ 0) sector.
pub fn ed_csv(res: &EDResult) -> String {
    let mut s = String::from("n_electrons,two_sz,energy_mev,dim,iterations,residual\n");
    for r in &res.records {
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.n_electrons,
            r.two_sz,
            fmt_f(r.energy),
            r.dim,
            r.iterations,
            fmt_e(r.residual)
        ));
    }
    s
}

/// `addition.csv` / `fig2_addition.csv`: the addition spectrum.
pub fn addition_csv(res: &EDResult) -> String {
    let mut s = String::from("n_electrons,a_mev\n");
    for (i, a) in res.addition.iter().enumerate() {
        s.push_str(&format!("{},{}\n", i + 1, fmt_f(*a)));
    }
    s
}

/// `fig2_spectrum.csv`: single-particle levels in ascending order
/// (degenerate partners adjacent).
pub fn spectrum_csv(eps: &[f64]) -> String {
    let mut s = String::from("level_index,energy_mev\n");
    for (i, e) in eps.iter().enumerate() {
        s.push_str(&format!("{},{}\n", i + 1, fmt_f(*e)));
    }
    s
}

/// `table.csv`: summary rows.
pub fn table_csv(rows: &[TableRow]) -> String {
    let mut s = String::from(
        "v0_mev,nb,nx,ny,degenerate,u_mev,u_err_mev,v_mev,v_err_mev,t_mev,tprime_mev,isolated\n",
    );
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            fmt_f(r.v0_mev),
            r.nb,
            r.nx,
            r.ny,
            r.degenerate,
            fmt_f(r.u_mev),
            fmt_e(r.u_err_mev),
            fmt_f(r.v_mev),
            fmt_e(r.v_err_mev),
            fmt_f(r.t_mev),
            fmt_f(r.tprime_mev),
            r.isolated
        ));
    }
    s
}

/// `feasibility.csv`: phase-observability verdicts.
pub fn feasibility_csv(rows: &[FeasibilityReport]) -> String {
    let mut s = String::from("nb,temperature_k,kbt_mev,qpt,af,sc\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.nb,
            fmt_f(r.temperature_k),
            fmt_f(r.thermal_energy_mev),
            r.qpt,
            r.af,
            r.sc
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formats_are_stable() {
        assert_eq!(fmt_f(0.08), "0.080000000");
        assert_eq!(fmt_f(-1.5), "-1.500000000");
        assert_eq!(fmt_f(f64::NAN), "NaN");
        assert_eq!(fmt_e(0.00015), "1.500e-4");
        assert_eq!(fmt_e(0.0), "0.000e0");
    }

    #[test]
    fn headers_have_units() {
        let rows: Vec<TableRow> = Vec::new();
        let s = table_csv(&rows);
        assert!(s.starts_with("v0_mev,nb,"));
        assert_eq!(s.lines().count(), 1);
        let f: Vec<FeasibilityReport> = Vec::new();
        assert!(feasibility_csv(&f).contains("kbt_mev"));
    }

    #[test]
    fn spectrum_rows_are_indexed_from_one() {
        let s = spectrum_csv(&[-0.5, 1.25]);
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[1], "1,-0.500000000");
        assert_eq!(lines[2], "2,1.250000000");
    }
}
