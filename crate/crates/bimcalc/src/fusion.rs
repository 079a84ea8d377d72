//! Relative tensor product (Connes fusion) of skeletal bimodules.
//!
//! For Y ∈ hom(M,N) and X ∈ hom(L,M), the fused bimodule Z = Y ⊠_M X has
//! multiplicity matrix mult(Z) = mult(Y) · mult(X); the multiplicity leg of
//! block (k,i) is indexed by triples (j, α, b) — middle block, Y-leg, X-leg —
//! in lexicographic order. On vectors, the canonical identification
//! contracts the shared C^{m_j} leg with a sqrt(m_j) weight:
//!
//!   (ξ ⊠ β)[c, (j,α,b), r] = sqrt(m_j) Σ_q ξ[c,α,q] β[q,b,r]
//!
//! which is exactly the normalization making the fused ambient inner product
//! equal τ_M(⟨ξ₁,ξ₂⟩_M ·_M⟨β₂,β₁⟩). With this convention the unitors are
//! identities on the nose, while associators are genuine (permutation)
//! unitaries carried explicitly.

use crate::bimodule::{Bimodule, Intertwiner, Vector};
use crate::error::{Error, Result};
use crate::linalg::{cr, CMat};
use num_complex::Complex64 as C64;

/// The result of fusing two bimodules, with the canonical index data.
#[derive(Debug, Clone)]
pub struct Fusion {
    y: Bimodule,
    x: Bimodule,
    z: Bimodule,
}

/// Fuse Y ⊠_M X. Requires source(Y) = target(X) = M.
pub fn fuse(y: &Bimodule, x: &Bimodule) -> Result<Fusion> {
    if !y.source().same_structure(x.target()) {
        return Err(Error::structural(
            "fusion needs the source algebra of the left factor to equal the target of the right",
        ));
    }
    let rows = y.rows();
    let mids = y.cols();
    let cols = x.cols();
    let mut mult = vec![0usize; rows * cols];
    for k in 0..rows {
        for i in 0..cols {
            let mut acc = 0;
            for j in 0..mids {
                acc += y.mult(k, j) * x.mult(j, i);
            }
            mult[k * cols + i] = acc;
        }
    }
    let z = Bimodule::from_flat_mult(x.source().clone(), y.target().clone(), mult)?;
    Ok(Fusion { y: y.clone(), x: x.clone(), z })
}

impl Fusion {
    pub fn left(&self) -> &Bimodule {
        &self.y
    }

    pub fn right(&self) -> &Bimodule {
        &self.x
    }

    pub fn fused(&self) -> &Bimodule {
        &self.z
    }

    /// Canonical multiplicity-leg index of (j, alpha, b) within block (k,i).
    pub fn mult_index(&self, k: usize, i: usize, j: usize, alpha: usize, b: usize) -> usize {
        let mut off = 0;
        for jj in 0..j {
            off += self.y.mult(k, jj) * self.x.mult(jj, i);
        }
        off + alpha * self.x.mult(j, i) + b
    }

    /// Image of the elementary tensor ξ ⊠ β under the canonical unitary.
    pub fn fuse_vectors(&self, xi: &Vector, beta: &Vector) -> Result<Vector> {
        if !xi.parent().same_shape(&self.y) || !beta.parent().same_shape(&self.x) {
            return Err(Error::structural("vectors do not match the fusion factors"));
        }
        let mut out = self.z.zero_vector();
        let m_alg = self.y.source();
        for k in 0..self.z.rows() {
            for i in 0..self.z.cols() {
                let o = out.block_mut(k, i);
                if o.k == 0 {
                    continue;
                }
                for j in 0..self.y.cols() {
                    let ky = self.y.mult(k, j);
                    let kx = self.x.mult(j, i);
                    if ky == 0 || kx == 0 {
                        continue;
                    }
                    let w = cr((m_alg.block_size(j) as f64).sqrt());
                    let ty = xi.block(k, j);
                    let tx = beta.block(j, i);
                    let mut base = 0;
                    for jj in 0..j {
                        base += self.y.mult(k, jj) * self.x.mult(jj, i);
                    }
                    for c in 0..o.n {
                        for alpha in 0..ky {
                            for b in 0..kx {
                                let leg = base + alpha * kx + b;
                                for r in 0..o.m {
                                    let mut acc = C64::ZERO;
                                    for q in 0..ty.m {
                                        acc += ty.get(c, alpha, q) * tx.get(q, b, r);
                                    }
                                    let cur = o.get(c, leg, r);
                                    o.set(c, leg, r, cur + w * acc);
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Horizontal composition of 2-morphisms: (g ⊠ f) acts block-diagonally over
/// the middle index as g_{kj} ⊗ f_{ji} in the canonical ordering, so that
/// (g ⊠ f)(ξ ⊠ β) = g(ξ) ⊠ f(β).
pub fn fuse_morphisms(g: &Intertwiner, f: &Intertwiner) -> Result<Intertwiner> {
    let dom = fuse(g.dom(), f.dom())?;
    let cod = fuse(g.cod(), f.cod())?;
    let rows = dom.z.rows();
    let cols = dom.z.cols();
    let mids = g.dom().cols();
    let mut blocks = Vec::with_capacity(rows * cols);
    for k in 0..rows {
        for i in 0..cols {
            let mut blk = CMat::zeros(cod.z.mult(k, i), dom.z.mult(k, i));
            for j in 0..mids {
                let gb = g.block(k, j);
                let fb = f.block(j, i);
                let r0 = cod.mult_index(k, i, j, 0, 0);
                let c0 = dom.mult_index(k, i, j, 0, 0);
                for a2 in 0..gb.nrows() {
                    for b2 in 0..fb.nrows() {
                        for a1 in 0..gb.ncols() {
                            for b1 in 0..fb.ncols() {
                                blk[(r0 + a2 * fb.nrows() + b2, c0 + a1 * fb.ncols() + b1)] =
                                    gb[(a2, a1)] * fb[(b2, b1)];
                            }
                        }
                    }
                }
            }
            blocks.push(blk);
        }
    }
    Intertwiner::new(dom.z, cod.z, blocks)
}

/// The canonical associator (Z ⊠ Y) ⊠ X → Z ⊠ (Y ⊠ X): a permutation of the
/// multiplicity leg in every block; the contraction values coincide.
pub fn associator(z: &Bimodule, y: &Bimodule, x: &Bimodule) -> Result<Intertwiner> {
    let zy = fuse(z, y)?;
    let left_outer = fuse(zy.fused(), x)?;
    let yx = fuse(y, x)?;
    let right_outer = fuse(z, yx.fused())?;
    let rows = left_outer.z.rows();
    let cols = left_outer.z.cols();
    let mut blocks = Vec::with_capacity(rows * cols);
    for n in 0..rows {
        for k in 0..cols {
            let kk = left_outer.z.mult(n, k);
            let mut blk = CMat::zeros(kk, kk);
            for m in 0..z.cols() {
                for l in 0..y.cols() {
                    let km = z.mult(n, m);
                    let kl = y.mult(m, l);
                    let ke = x.mult(l, k);
                    for a in 0..km {
                        for b in 0..kl {
                            for e in 0..ke {
                                // left: ((m,a,b) within Z⊠Y at (n,l), l, e)
                                let mu = zy.mult_index(n, l, m, a, b);
                                let col = left_outer.mult_index(n, k, l, mu, e);
                                // right: (m, a, (l,b,e) within Y⊠X at (m,k))
                                let nu = yx.mult_index(m, k, l, b, e);
                                let row = right_outer.mult_index(n, k, m, a, nu);
                                blk[(row, col)] = cr(1.0);
                            }
                        }
                    }
                }
            }
            blocks.push(blk);
        }
    }
    Intertwiner::new(left_outer.z.clone(), right_outer.z.clone(), blocks)
}

/// Witness for conjugate(Y ⊠ X) = X̄ ⊠ Ȳ: the multiplicity-leg permutation
/// (j, α, b) ↦ (j, b, α) mapping bar(ξ ⊠ β) to β̄ ⊠ ξ̄.
pub fn conjugate_fusion_witness(y: &Bimodule, x: &Bimodule) -> Result<Intertwiner> {
    let yx = fuse(y, x)?;
    let dom = yx.fused().conjugate();
    let cod_f = fuse(&x.conjugate(), &y.conjugate())?;
    let rows = dom.rows();
    let cols = dom.cols();
    let mut blocks = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for k in 0..cols {
            // dom block (i,k) carries the legs of (Y⊠X) block (k,i): (j, α, b)
            let kk = dom.mult(i, k);
            let mut blk = CMat::zeros(kk, kk);
            for j in 0..y.cols() {
                let ka = y.mult(k, j);
                let kb = x.mult(j, i);
                for alpha in 0..ka {
                    for b in 0..kb {
                        let col = yx.mult_index(k, i, j, alpha, b);
                        let row = cod_f.mult_index(i, k, j, b, alpha);
                        blk[(row, col)] = cr(1.0);
                    }
                }
            }
            blocks.push(blk);
        }
    }
    Intertwiner::new(dom, cod_f.z.clone(), blocks)
}

/// A parenthesized fusion expression over a list of composable factors.
/// Used to build canonical rebracketing witnesses out of binary associators.
#[derive(Debug, Clone)]
pub enum FuseTree {
    Leaf(Bimodule),
    Node(Box<FuseTree>, Box<FuseTree>),
}

impl FuseTree {
    pub fn leaf(x: &Bimodule) -> Self {
        FuseTree::Leaf(x.clone())
    }

    pub fn node(l: FuseTree, r: FuseTree) -> Self {
        FuseTree::Node(Box::new(l), Box::new(r))
    }

    /// Left-comb tree (((x₁ ⊠ x₂) ⊠ x₃) ⊠ ...) over the factors.
    pub fn left_comb(factors: &[Bimodule]) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::structural("empty fusion expression"));
        }
        let mut it = factors.iter();
        let mut tree = FuseTree::leaf(it.next().unwrap());
        for f in it {
            tree = FuseTree::node(tree, FuseTree::leaf(f));
        }
        Ok(tree)
    }

    pub fn factors(&self) -> Vec<Bimodule> {
        match self {
            FuseTree::Leaf(x) => vec![x.clone()],
            FuseTree::Node(l, r) => {
                let mut out = l.factors();
                out.extend(r.factors());
                out
            }
        }
    }

    /// The fused bimodule value of this expression.
    pub fn bimodule(&self) -> Result<Bimodule> {
        match self {
            FuseTree::Leaf(x) => Ok(x.clone()),
            FuseTree::Node(l, r) => {
                Ok(fuse(&l.bimodule()?, &r.bimodule()?)?.fused().clone())
            }
        }
    }

    /// Witness from this expression to the left comb over the same factors.
    pub fn to_left_comb(&self) -> Result<Intertwiner> {
        match self {
            FuseTree::Leaf(x) => Ok(Intertwiner::identity(x)),
            FuseTree::Node(l, r) => {
                let wl = l.to_left_comb()?;
                let wr = r.to_left_comb()?;
                let step = fuse_morphisms(&wl, &wr)?;
                let merge = merge_combs(&l.factors(), &r.factors())?;
                merge.compose(&step)
            }
        }
    }
}

/// Witness LC(lhs) ⊠ LC(rhs) → LC(lhs ++ rhs) by peeling the right comb.
fn merge_combs(lhs: &[Bimodule], rhs: &[Bimodule]) -> Result<Intertwiner> {
    let lc_l = FuseTree::left_comb(lhs)?.bimodule()?;
    if rhs.len() == 1 {
        let dom = fuse(&lc_l, &rhs[0])?.fused().clone();
        return Ok(Intertwiner::identity(&dom));
    }
    let init = &rhs[..rhs.len() - 1];
    let last = &rhs[rhs.len() - 1];
    let lc_init = FuseTree::left_comb(init)?.bimodule()?;
    // LC(l) ⊠ (LC(init) ⊠ last) → (LC(l) ⊠ LC(init)) ⊠ last
    let step1 = associator(&lc_l, &lc_init, last)?.adjoint();
    // (LC(l) ⊠ LC(init)) ⊠ last → LC(l ++ init) ⊠ last
    let step2 = fuse_morphisms(&merge_combs(lhs, init)?, &Intertwiner::identity(last))?;
    step2.compose(&step1)
}

/// Canonical rebracketing witness between two fusion expressions over the
/// same factor list.
pub fn rebracket(from: &FuseTree, to: &FuseTree) -> Result<Intertwiner> {
    let ff = from.factors();
    let tf = to.factors();
    if ff.len() != tf.len() || ff.iter().zip(&tf).any(|(a, b)| !a.same_shape(b)) {
        return Err(Error::structural("rebracketing needs identical factor lists"));
    }
    to.to_left_comb()?.adjoint().compose(&from.to_left_comb()?)
}
