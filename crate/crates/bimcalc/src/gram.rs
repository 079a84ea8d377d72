//! Gram-quotient oracle for the relative tensor product.
//!
//! Builds the positive sesquilinear form on the algebraic tensor product of
//! two bimodules from the trace formula
//!
//!   ⟨ξ₁⊙β₁, ξ₂⊙β₂⟩ = τ_M(⟨ξ₁,ξ₂⟩_M ·_M⟨β₂,β₁⟩),
//!
//! quotients the null directions, and carries explicit left/right actions on
//! the quotient. This is the independent route against which the skeletal
//! fast path of [`crate::fusion`] is checked: the two must be unitarily
//! equivalent, and the equivalence is constructed (not just asserted).

use crate::algebra::{trace, AlgebraElement};
use crate::bimodule::{left_action_dense, m_valued_inner, n_valued_inner, right_action_dense, Bimodule, Vector};
use crate::error::{Error, Result};
use crate::exec::Parallelism;
use crate::fusion::{fuse, Fusion};
use crate::linalg::{CMat, CVec};
use num_complex::Complex64 as C64;

/// Relative cutoff for genuine null directions of the balanced tensor
/// product, as a fraction of the largest Gram eigenvalue.
pub const NULL_CUTOFF: f64 = 1e-10;

/// The completed Gram quotient of Y ⊙ X with its action data.
pub struct GramFusion {
    y: Bimodule,
    x: Bimodule,
    skeletal: Fusion,
    gram: CMat,
    /// Kept eigenpairs: columns are eigenvectors over the spanning set,
    /// scaled by 1/sqrt(eigenvalue), so they form an ONB of the quotient.
    onb: CMat,
    dim: usize,
}

/// Build the Gram quotient for Y ⊠_M X with the given execution mode.
pub fn fuse_gram_oracle(y: &Bimodule, x: &Bimodule, mode: Parallelism) -> Result<GramFusion> {
    let skeletal = fuse(y, x)?;
    let ybasis = y.coordinate_basis();
    let xbasis = x.coordinate_basis();
    let dy = ybasis.len();
    let dx = xbasis.len();

    // Precompute the two families of algebra-valued inner products.
    let y_pairs: Vec<AlgebraElement> = crate::exec::map_indexed(mode, dy * dy, |t| {
        let (r1, r2) = (t / dy, t % dy);
        m_valued_inner(&ybasis[r1], &ybasis[r2]).expect("same parent")
    });
    let x_pairs: Vec<AlgebraElement> = crate::exec::map_indexed(mode, dx * dx, |t| {
        let (s1, s2) = (t / dx, t % dx);
        // stored as {}_M⟨v_{s2}, v_{s1}⟩ ready for the trace formula
        n_valued_inner(&xbasis[s2], &xbasis[s1]).expect("same parent")
    });

    let dim_span = dy * dx;
    let rows: Vec<Vec<C64>> = crate::exec::map_indexed(mode, dim_span, |row| {
        let (r1, s1) = (row / dx, row % dx);
        let mut out = Vec::with_capacity(dim_span);
        for r2 in 0..dy {
            let g1 = &y_pairs[r1 * dy + r2];
            for s2 in 0..dx {
                let g2 = &x_pairs[s1 * dx + s2];
                out.push(trace(&g1.mul(g2).expect("same parent")));
            }
        }
        out
    });
    let mut gram = CMat::zeros(dim_span, dim_span);
    for (r, rowvals) in rows.iter().enumerate() {
        for (c, v) in rowvals.iter().enumerate() {
            gram[(r, c)] = *v;
        }
    }

    let (vals, vecs) = crate::linalg::hermitian_eig(&gram);
    let max = vals.iter().cloned().fold(0.0, f64::max);
    if let Some(&min) = vals.first() {
        if min < -1e-9 * max.max(1.0) {
            return Err(Error::numerical(format!(
                "Gram matrix has negative eigenvalue {min:.3e}; upstream inner products are broken"
            )));
        }
    }
    let cutoff = NULL_CUTOFF * max.max(1.0);
    let mut cols = Vec::new();
    for (idx, &v) in vals.iter().enumerate() {
        if v > cutoff {
            cols.push((idx, v));
        }
    }
    let dim = cols.len();
    let mut onb = CMat::zeros(dim_span, dim);
    for (t, &(idx, v)) in cols.iter().enumerate() {
        let scale = 1.0 / v.sqrt();
        for r in 0..dim_span {
            onb[(r, t)] = vecs[(r, idx)] * crate::linalg::cr(scale);
        }
    }

    Ok(GramFusion { y: y.clone(), x: x.clone(), skeletal, gram, onb, dim })
}

impl GramFusion {
    /// Dimension of the completed quotient space.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Dense dimension predicted by the skeletal fast path:
    /// Σ_{k,i} n_k · mult(Z)_{ki} · m_i.
    pub fn skeletal_dim(&self) -> usize {
        self.skeletal.fused().total_dim()
    }

    /// Coefficients of an elementary tensor ξ ⊙ β over the spanning set.
    pub fn span_coefficients(&self, xi: &Vector, beta: &Vector) -> Result<CVec> {
        if !xi.parent().same_shape(&self.y) || !beta.parent().same_shape(&self.x) {
            return Err(Error::structural("vectors do not match the oracle factors"));
        }
        let a = xi.to_dense();
        let b = beta.to_dense();
        let mut out = CVec::zeros(a.len() * b.len());
        for r in 0..a.len() {
            for s in 0..b.len() {
                out[r * b.len() + s] = a[r] * b[s];
            }
        }
        Ok(out)
    }

    /// Gram seminorm of a coefficient vector over the spanning set.
    pub fn gram_norm(&self, coeffs: &CVec) -> f64 {
        let g = &self.gram * coeffs;
        coeffs.dotc(&g).re.max(0.0).sqrt()
    }

    /// Left action of a target-algebra element on the quotient, in the ONB.
    pub fn left_action(&self, b: &AlgebraElement) -> Result<CMat> {
        if !b.parent().same_structure(self.y.target()) {
            return Err(Error::structural("left action must come from the target algebra"));
        }
        let dx = self.x.total_dim();
        let l = left_action_dense(&self.y, b);
        let big = kron_with_identity_right(&l, dx);
        Ok(self.onb.adjoint() * &self.gram * big * &self.onb)
    }

    /// Right action of a source-algebra element on the quotient, in the ONB.
    pub fn right_action(&self, a: &AlgebraElement) -> Result<CMat> {
        if !a.parent().same_structure(self.x.source()) {
            return Err(Error::structural("right action must come from the source algebra"));
        }
        let dy = self.y.total_dim();
        let r = right_action_dense(&self.x, a);
        let big = kron_with_identity_left(dy, &r);
        Ok(self.onb.adjoint() * &self.gram * big * &self.onb)
    }

    /// The unitary from the quotient (in its ONB) onto the dense realization
    /// of the skeletal fusion, obtained by pushing the spanning set through
    /// the canonical elementary-tensor map.
    pub fn unitary_to_skeletal(&self) -> Result<CMat> {
        let ybasis = self.y.coordinate_basis();
        let xbasis = self.x.coordinate_basis();
        let dz = self.skeletal.fused().total_dim();
        let dx = xbasis.len();
        let mut phi = CMat::zeros(dz, ybasis.len() * dx);
        for (r, u) in ybasis.iter().enumerate() {
            for (s, v) in xbasis.iter().enumerate() {
                let img = self.skeletal.fuse_vectors(u, v)?.to_dense();
                phi.set_column(r * dx + s, &img);
            }
        }
        Ok(phi * &self.onb)
    }

    /// Full equivalence report against the skeletal fast path.
    pub fn check_equivalence(&self) -> Result<GramEquivalence> {
        let u = self.unitary_to_skeletal()?;
        let dim_match = self.dim == self.skeletal_dim();
        let iso_residual = if dim_match {
            let d = self.dim;
            let e1 = crate::linalg::op_norm(&(u.adjoint() * &u - crate::linalg::identity(d)));
            let e2 = crate::linalg::op_norm(&(&u * u.adjoint() - crate::linalg::identity(d)));
            e1.max(e2)
        } else {
            f64::INFINITY
        };
        let mut act_residual: f64 = 0.0;
        for b in self.y.target().matrix_unit_basis() {
            let q = self.left_action(&b)?;
            let dense = left_action_dense(self.skeletal.fused(), &b);
            act_residual = act_residual.max(crate::linalg::op_norm(&(&u * q - dense * &u)));
        }
        for a in self.x.source().matrix_unit_basis() {
            let q = self.right_action(&a)?;
            let dense = right_action_dense(self.skeletal.fused(), &a);
            act_residual = act_residual.max(crate::linalg::op_norm(&(&u * q - dense * &u)));
        }
        Ok(GramEquivalence { dim_match, iso_residual, act_residual })
    }
}

/// Outcome of comparing the Gram quotient with the skeletal fusion.
#[derive(Debug, Clone)]
pub struct GramEquivalence {
    pub dim_match: bool,
    pub iso_residual: f64,
    pub act_residual: f64,
}

impl GramEquivalence {
    pub fn passes(&self, tol: f64) -> bool {
        self.dim_match && self.iso_residual < tol && self.act_residual < tol
    }
}

fn kron_with_identity_right(l: &CMat, dx: usize) -> CMat {
    let dy = l.nrows();
    let mut out = CMat::zeros(dy * dx, dy * dx);
    for r in 0..dy {
        for c in 0..dy {
            let v = l[(r, c)];
            if v != C64::ZERO {
                for s in 0..dx {
                    out[(r * dx + s, c * dx + s)] = v;
                }
            }
        }
    }
    out
}

fn kron_with_identity_left(dy: usize, r: &CMat) -> CMat {
    let dx = r.nrows();
    let mut out = CMat::zeros(dy * dx, dy * dx);
    for b in 0..dy {
        for s in 0..dx {
            for t in 0..dx {
                let v = r[(s, t)];
                if v != C64::ZERO {
                    out[(b * dx + s, b * dx + t)] = v;
                }
            }
        }
    }
    out
}
