//! Linear solver over intertwiner spaces.
//!
//! Spaces like "bimodule maps between two modules", "the center of an
//! extension" or "hom spaces certified by Θ/Φ" are all nullspaces of linear
//! constraints on a plain intertwiner. The solver materializes the
//! constraints on the coordinate basis of Hom(dom, cod) and extracts an
//! orthonormal nullspace basis by SVD.

use crate::bimodule::{Bimodule, Intertwiner};
use crate::error::Result;
use crate::linalg::{CMat, CVec};
use num_complex::Complex64 as C64;

/// Number of complex unknowns in Hom(dom, cod).
pub fn hom_dim(dom: &Bimodule, cod: &Bimodule) -> usize {
    let mut d = 0;
    for j in 0..dom.rows() {
        for i in 0..dom.cols() {
            d += dom.mult(j, i) * cod.mult(j, i);
        }
    }
    d
}

/// Coordinate basis of Hom(dom, cod) matching [`vec_intertwiner`] order.
pub fn coordinate_intertwiners(dom: &Bimodule, cod: &Bimodule) -> Vec<Intertwiner> {
    let mut out = Vec::with_capacity(hom_dim(dom, cod));
    for j in 0..dom.rows() {
        for i in 0..dom.cols() {
            for r in 0..cod.mult(j, i) {
                for c in 0..dom.mult(j, i) {
                    let mut f = Intertwiner::zero(dom, cod).unwrap();
                    f.block_mut(j, i)[(r, c)] = crate::linalg::cr(1.0);
                    out.push(f);
                }
            }
        }
    }
    out
}

pub fn vec_intertwiner(f: &Intertwiner) -> CVec {
    let mut data = Vec::new();
    for j in 0..f.dom().rows() {
        for i in 0..f.dom().cols() {
            let b = f.block(j, i);
            for r in 0..b.nrows() {
                for c in 0..b.ncols() {
                    data.push(b[(r, c)]);
                }
            }
        }
    }
    CVec::from_vec(data)
}

pub fn unvec_intertwiner(dom: &Bimodule, cod: &Bimodule, v: &CVec) -> Intertwiner {
    let mut f = Intertwiner::zero(dom, cod).unwrap();
    let mut idx = 0;
    for j in 0..dom.rows() {
        for i in 0..dom.cols() {
            let (kr, kc) = (cod.mult(j, i), dom.mult(j, i));
            for r in 0..kr {
                for c in 0..kc {
                    f.block_mut(j, i)[(r, c)] = v[idx];
                    idx += 1;
                }
            }
        }
    }
    f
}

/// Orthonormal basis of {f ∈ Hom(dom,cod) : constraint(f) = 0 for all
/// constraints}. Each constraint must be complex-linear in f.
pub fn solve_intertwiner_space(
    dom: &Bimodule,
    cod: &Bimodule,
    constraints: &[&dyn Fn(&Intertwiner) -> Result<Intertwiner>],
    tol: f64,
) -> Result<Vec<Intertwiner>> {
    let basis = coordinate_intertwiners(dom, cod);
    let unknowns = basis.len();
    if unknowns == 0 {
        return Ok(vec![]);
    }
    let mut rows_per_constraint = Vec::with_capacity(constraints.len());
    let mut columns: Vec<Vec<C64>> = vec![Vec::new(); unknowns];
    for cons in constraints {
        let mut len = None;
        for (col, e) in basis.iter().enumerate() {
            let img = cons(e)?;
            let v = vec_intertwiner(&img);
            if len.is_none() {
                len = Some(v.len());
            }
            columns[col].extend(v.iter().cloned());
        }
        rows_per_constraint.push(len.unwrap_or(0));
    }
    let total_rows: usize = rows_per_constraint.iter().sum();
    let mut a = CMat::zeros(total_rows, unknowns);
    for (col, colvals) in columns.iter().enumerate() {
        for (r, z) in colvals.iter().enumerate() {
            a[(r, col)] = *z;
        }
    }
    let ns = crate::linalg::nullspace(&a, tol);
    Ok((0..ns.ncols())
        .map(|c| unvec_intertwiner(dom, cod, &ns.column(c).into_owned()))
        .collect())
}
