//! Bimodules over C*-Frobenius algebras, the projection p^B, and the
//! relative horizontal composition ⊠_B obtained by compressing with a chosen
//! isometry. Together with the Frobenius algebras as objects this is the
//! bicategory of special bimodules.
//!
//! The compressed product is defined up to the recorded isometry; every
//! equality below is asserted through explicit witnesses, never by comparing
//! raw compressed coordinates across different choices.

use crate::bimodule::{Bimodule, Intertwiner};
use crate::error::{Error, Result};
use crate::frobenius::FrobeniusAlgebra;
use crate::fusion::{associator, fuse_morphisms};
use crate::linalg::{cr, CMat};

/// A (B,A)-bimodule: carrier X ∈ hom(L, M) with left action l: B ⊠ X → X of
/// the algebra B over (M,M) and right action r: X ⊠ A → X of A over (L,L).
#[derive(Debug, Clone)]
pub struct AlgBimodule {
    left_algebra: FrobeniusAlgebra,
    right_algebra: FrobeniusAlgebra,
    x: Bimodule,
    l: Intertwiner,
    r: Intertwiner,
}

impl AlgBimodule {
    pub fn new(
        left_algebra: FrobeniusAlgebra,
        right_algebra: FrobeniusAlgebra,
        x: Bimodule,
        l: Intertwiner,
        r: Intertwiner,
    ) -> Result<Self> {
        if !x.target().same_structure(left_algebra.base()) {
            return Err(Error::structural("left algebra must live over the target of X"));
        }
        if !x.source().same_structure(right_algebra.base()) {
            return Err(Error::structural("right algebra must live over the source of X"));
        }
        let bx = crate::fusion::fuse(left_algebra.carrier(), &x)?.fused().clone();
        if !l.dom().same_shape(&bx) || !l.cod().same_shape(&x) {
            return Err(Error::structural("l must map B ⊠ X → X"));
        }
        let xa = crate::fusion::fuse(&x, right_algebra.carrier())?.fused().clone();
        if !r.dom().same_shape(&xa) || !r.cod().same_shape(&x) {
            return Err(Error::structural("r must map X ⊠ A → X"));
        }
        Ok(AlgBimodule { left_algebra, right_algebra, x, l, r })
    }

    /// An algebra as a bimodule over itself: l = r = m.
    pub fn over_itself(f: &FrobeniusAlgebra) -> Self {
        AlgBimodule {
            left_algebra: f.clone(),
            right_algebra: f.clone(),
            x: f.carrier().clone(),
            l: f.multiplication().clone(),
            r: f.multiplication().clone(),
        }
    }

    /// A plain bimodule as a module over the trivial algebras, with the
    /// (identity) unitor actions.
    pub fn over_trivial(x: &Bimodule) -> Self {
        let left = FrobeniusAlgebra::trivial(x.target());
        let right = FrobeniusAlgebra::trivial(x.source());
        AlgBimodule {
            left_algebra: left,
            right_algebra: right,
            l: Intertwiner::identity(x),
            r: Intertwiner::identity(x),
            x: x.clone(),
        }
    }

    pub fn left_algebra(&self) -> &FrobeniusAlgebra {
        &self.left_algebra
    }

    pub fn right_algebra(&self) -> &FrobeniusAlgebra {
        &self.right_algebra
    }

    pub fn carrier(&self) -> &Bimodule {
        &self.x
    }

    pub fn left_action(&self) -> &Intertwiner {
        &self.l
    }

    pub fn right_action(&self) -> &Intertwiner {
        &self.r
    }
}

/// Residuals of the module axioms and specialness.
#[derive(Debug, Clone)]
pub struct ModuleReport {
    pub left_assoc: f64,
    pub right_assoc: f64,
    pub unit: f64,
    pub commute: f64,
    pub special_left: f64,
    pub special_right: f64,
}

impl ModuleReport {
    pub fn is_module(&self, tol: f64) -> bool {
        self.left_assoc < tol && self.right_assoc < tol && self.unit < tol && self.commute < tol
    }

    pub fn is_special(&self, tol: f64) -> bool {
        self.is_module(tol) && self.special_left < tol && self.special_right < tol
    }
}

pub fn verify_module(xm: &AlgBimodule) -> Result<ModuleReport> {
    let b = xm.left_algebra.carrier();
    let a = xm.right_algebra.carrier();
    let x = &xm.x;
    let (id_b, id_a, id_x) =
        (Intertwiner::identity(b), Intertwiner::identity(a), Intertwiner::identity(x));

    // l(m_B ⊠ 1) = l(1 ⊠ l) ∘ assoc on (B⊠B)⊠X
    let lhs = xm.l.compose(&fuse_morphisms(xm.left_algebra.multiplication(), &id_x)?)?;
    let rhs = xm
        .l
        .compose(&fuse_morphisms(&id_b, &xm.l)?)?
        .compose(&associator(b, b, x)?)?;
    let left_assoc = lhs.distance(&rhs)?;

    // r(1 ⊠ m_A) ∘ assoc = r(r ⊠ 1) on (X⊠A)⊠A
    let lhs = xm
        .r
        .compose(&fuse_morphisms(&id_x, xm.right_algebra.multiplication())?)?
        .compose(&associator(x, a, a)?)?;
    let rhs = xm.r.compose(&fuse_morphisms(&xm.r, &id_a)?)?;
    let right_assoc = lhs.distance(&rhs)?;

    let unit_l = xm
        .l
        .compose(&fuse_morphisms(xm.left_algebra.unit_map(), &id_x)?)?
        .dist_to_identity()?;
    let unit_r = xm
        .r
        .compose(&fuse_morphisms(&id_x, xm.right_algebra.unit_map())?)?
        .dist_to_identity()?;
    let unit = unit_l.max(unit_r);

    // r(l ⊠ 1) = l(1 ⊠ r) ∘ assoc on (B⊠X)⊠A
    let lhs = xm.r.compose(&fuse_morphisms(&xm.l, &id_a)?)?;
    let rhs = xm
        .l
        .compose(&fuse_morphisms(&id_b, &xm.r)?)?
        .compose(&associator(b, x, a)?)?;
    let commute = lhs.distance(&rhs)?;

    let special_left = xm.l.compose(&xm.l.adjoint())?.dist_to_identity()?;
    let special_right = xm.r.compose(&xm.r.adjoint())?.dist_to_identity()?;

    Ok(ModuleReport { left_assoc, right_assoc, unit, commute, special_left, special_right })
}

/// Specialization of a module over special algebras with
/// h = (l (1⊠rr*) l*)^{1/2}; returns the special module and the isomorphism
/// h⁻¹: (X,l,r) → (X,l',r').
pub struct SpecializedModule {
    pub module: AlgBimodule,
    pub h: Intertwiner,
    /// residual of l(1⊠rr*)l* = r((ll*)⊠1)r*
    pub symmetry_residual: f64,
}

pub fn specialize_module(xm: &AlgBimodule, tol: f64) -> Result<SpecializedModule> {
    let rep_b = crate::frobenius::verify_algebra(&xm.left_algebra)?;
    let rep_a = crate::frobenius::verify_algebra(&xm.right_algebra)?;
    if !rep_b.is_special(tol.max(1e-6)) || !rep_a.is_special(tol.max(1e-6)) {
        return Err(Error::precondition("specialize_module needs special algebras"));
    }
    let b = xm.left_algebra.carrier();
    let a = xm.right_algebra.carrier();
    let (id_b, id_a) = (Intertwiner::identity(b), Intertwiner::identity(a));

    let rr = xm.r.compose(&xm.r.adjoint())?;
    let h2 = xm
        .l
        .compose(&fuse_morphisms(&id_b, &rr)?)?
        .compose(&xm.l.adjoint())?;
    let ll = xm.l.compose(&xm.l.adjoint())?;
    let h2_alt = xm
        .r
        .compose(&fuse_morphisms(&ll, &id_a)?)?
        .compose(&xm.r.adjoint())?;
    let symmetry_residual = h2.distance(&h2_alt)?;

    let h = crate::frobenius::intertwiner_psd_fn(&h2, f64::sqrt)?;
    let h_inv = crate::frobenius::intertwiner_psd_fn(&h2, |v| {
        if v < crate::linalg::POSITIVITY_FLOOR {
            0.0
        } else {
            1.0 / v.sqrt()
        }
    })?;
    // invertibility guard
    if h.compose(&h_inv)?.dist_to_identity()? > 1e-6 {
        return Err(Error::numerical("l(1⊠rr*)l* is numerically singular"));
    }
    let l_new = h_inv.compose(&xm.l)?.compose(&fuse_morphisms(&id_b, &h)?)?;
    let r_new = h_inv.compose(&xm.r)?.compose(&fuse_morphisms(&h, &id_a)?)?;
    let module = AlgBimodule::new(
        xm.left_algebra.clone(),
        xm.right_algebra.clone(),
        xm.x.clone(),
        l_new,
        r_new,
    )?;
    Ok(SpecializedModule { module, h, symmetry_residual })
}

fn check_shared_algebra(y: &AlgBimodule, x: &AlgBimodule, tol: f64) -> Result<()> {
    let b1 = y.right_algebra();
    let b2 = x.left_algebra();
    if !b1.carrier().same_shape(b2.carrier()) {
        return Err(Error::structural("modules do not share the middle algebra"));
    }
    let dm = b1.multiplication().distance(b2.multiplication())?;
    let di = b1.unit_map().distance(b2.unit_map())?;
    if dm > tol || di > tol {
        return Err(Error::structural(
            "modules carry different Frobenius structures on the middle algebra",
        ));
    }
    Ok(())
}

/// The projection p^B on Y ⊠ X: (r_Y ⊠ 1_X)(1_Y ⊠ l_X*), with associator.
pub fn p_projection(ym: &AlgBimodule, xm: &AlgBimodule, tol: f64) -> Result<Intertwiner> {
    check_shared_algebra(ym, xm, tol.max(1e-9))?;
    let y = ym.carrier();
    let x = xm.carrier();
    let b = ym.right_algebra().carrier();
    let (id_y, id_x) = (Intertwiner::identity(y), Intertwiner::identity(x));
    fuse_morphisms(&ym.r, &id_x)?
        .compose(&associator(y, b, x)?.adjoint())?
        .compose(&fuse_morphisms(&id_y, &xm.l.adjoint())?)
}

/// The equivalent form (1_Y ⊠ l_X)(r_Y* ⊠ 1_X) of the same projection.
pub fn p_projection_alt(ym: &AlgBimodule, xm: &AlgBimodule, tol: f64) -> Result<Intertwiner> {
    check_shared_algebra(ym, xm, tol.max(1e-9))?;
    let y = ym.carrier();
    let x = xm.carrier();
    let b = ym.right_algebra().carrier();
    let (id_y, id_x) = (Intertwiner::identity(y), Intertwiner::identity(x));
    fuse_morphisms(&id_y, &xm.l)?
        .compose(&associator(y, b, x)?)?
        .compose(&fuse_morphisms(&ym.r.adjoint(), &id_x)?)
}

/// The compressed relative product Y ⊠_B X with its defining isometry.
pub struct RelativeProduct {
    pub p: Intertwiner,
    /// isometry s: (Y ⊠_B X) → Y ⊠ X with s s* = p, s* s = 1.
    pub s: Intertwiner,
    pub module: AlgBimodule,
}

/// Compress Y ⊠ X by p^B. The isometry is chosen by deterministic
/// eigendecomposition (descending eigenvalues, block order fixed).
pub fn rel_tensor(ym: &AlgBimodule, xm: &AlgBimodule, tol: f64) -> Result<RelativeProduct> {
    let p = p_projection(ym, xm, tol)?;
    let idem = p.compose(&p)?.distance(&p)?;
    let herm = p.distance(&p.adjoint())?;
    if idem > tol.max(1e-7) || herm > tol.max(1e-7) {
        return Err(Error::numerical(format!(
            "p^B is not a projection (idempotency {idem:.2e}, hermiticity {herm:.2e}); are the modules special?"
        )));
    }
    let yx = p.dom().clone();
    let mut ranks = vec![0usize; yx.rows() * yx.cols()];
    let mut s_blocks: Vec<CMat> = Vec::with_capacity(yx.rows() * yx.cols());
    for j in 0..yx.rows() {
        for i in 0..yx.cols() {
            let blk = p.block(j, i);
            if blk.nrows() == 0 {
                s_blocks.push(CMat::zeros(0, 0));
                continue;
            }
            let (vals, vecs) = crate::linalg::hermitian_eig(blk);
            let keep: Vec<usize> = (0..vals.len()).filter(|&t| vals[t] > 0.5).collect();
            let rank = keep.len();
            ranks[j * yx.cols() + i] = rank;
            let mut sb = CMat::zeros(blk.nrows(), rank);
            // ascending eigenvalue order from hermitian_eig; take the kept
            // ones in descending order for determinism
            for (col, &t) in keep.iter().rev().enumerate() {
                sb.set_column(col, &vecs.column(t).into_owned());
            }
            s_blocks.push(sb);
        }
    }
    let z = Bimodule::from_flat_mult(yx.source().clone(), yx.target().clone(), ranks)?;
    // fix zero-rank block shapes
    let mut fixed = Vec::with_capacity(s_blocks.len());
    for (idx, sb) in s_blocks.into_iter().enumerate() {
        let (j, i) = (idx / yx.cols(), idx % yx.cols());
        if sb.ncols() == z.mult(j, i) && sb.nrows() == yx.mult(j, i) {
            fixed.push(sb);
        } else {
            fixed.push(CMat::zeros(yx.mult(j, i), z.mult(j, i)));
        }
    }
    let s = Intertwiner::new(z.clone(), yx.clone(), fixed)?;

    let c_alg = ym.left_algebra();
    let a_alg = xm.right_algebra();
    let y = ym.carrier();
    let x = xm.carrier();
    let (id_c, id_a, id_x) = (
        Intertwiner::identity(c_alg.carrier()),
        Intertwiner::identity(a_alg.carrier()),
        Intertwiner::identity(x),
    );
    let id_y = Intertwiner::identity(y);

    // l_Z := s* (l_Y ⊠ 1_X) assoc⁻¹ (1_C ⊠ s)
    let l_z = s
        .adjoint()
        .compose(&fuse_morphisms(&ym.l, &id_x)?)?
        .compose(&associator(c_alg.carrier(), y, x)?.adjoint())?
        .compose(&fuse_morphisms(&id_c, &s)?)?;
    // r_Z := s* (1_Y ⊠ r_X) assoc (s ⊠ 1_A)
    let r_z = s
        .adjoint()
        .compose(&fuse_morphisms(&id_y, &xm.r)?)?
        .compose(&associator(y, x, a_alg.carrier())?)?
        .compose(&fuse_morphisms(&s, &id_a)?)?;

    let module = AlgBimodule::new(c_alg.clone(), a_alg.clone(), z, l_z, r_z)?;
    Ok(RelativeProduct { p, s, module })
}

/// g ⊠_B f between compressed products: s₂* (g ⊠ f) s₁.
pub fn rel_tensor_morphisms(
    rp1: &RelativeProduct,
    rp2: &RelativeProduct,
    g: &Intertwiner,
    f: &Intertwiner,
) -> Result<Intertwiner> {
    rp2.s
        .adjoint()
        .compose(&fuse_morphisms(g, f)?)?
        .compose(&rp1.s)
}

/// Witness for the unit constraint B ⊠_B X ≅ X: the unitary s* ∘ l_X*.
pub fn left_unit_witness(rp: &RelativeProduct, xm: &AlgBimodule) -> Result<Intertwiner> {
    rp.s.adjoint().compose(&xm.left_action().adjoint())
}

/// Witness for X ⊠_A A ≅ X: the unitary s* ∘ r_X*.
pub fn right_unit_witness(rp: &RelativeProduct, xm: &AlgBimodule) -> Result<Intertwiner> {
    rp.s.adjoint().compose(&xm.right_action().adjoint())
}

/// The canonical unitary (Z ⊠_C Y) ⊠_B X → Z ⊠_C (Y ⊠_B X), obtained by
/// embedding both sides into (Z ⊠ Y) ⊠ X resp. Z ⊠ (Y ⊠ X) and conjugating
/// the plain associator.
pub struct RelAssociator {
    pub witness: Intertwiner,
    pub unitarity_residual: f64,
}

pub fn rel_associator(
    zm: &AlgBimodule,
    ym: &AlgBimodule,
    xm: &AlgBimodule,
    tol: f64,
) -> Result<RelAssociator> {
    let zy = rel_tensor(zm, ym, tol)?;
    let zy_x = rel_tensor(&zy.module, xm, tol)?;
    let yx = rel_tensor(ym, xm, tol)?;
    let z_yx = rel_tensor(zm, &yx.module, tol)?;

    let id_x = Intertwiner::identity(xm.carrier());
    let id_z = Intertwiner::identity(zm.carrier());
    let embed_left = fuse_morphisms(&zy.s, &id_x)?.compose(&zy_x.s)?;
    let embed_right = fuse_morphisms(&id_z, &yx.s)?.compose(&z_yx.s)?;
    let assoc = associator(zm.carrier(), ym.carrier(), xm.carrier())?;
    let witness = embed_right.adjoint().compose(&assoc)?.compose(&embed_left)?;
    let u1 = witness
        .adjoint()
        .compose(&witness)?
        .dist_to_identity()?;
    let u2 = witness
        .compose(&witness.adjoint())?
        .dist_to_identity()?;
    Ok(RelAssociator { witness, unitarity_residual: u1.max(u2) })
}

/// Candidate dual module of a special (B,A)-bimodule: carrier X̄ with the
/// rotated actions
///   l_X̄ = (1_X̄ ⊠ γ̄*)(1_X̄ ⊠ r_X ⊠ 1_X̄)(γ ⊠ 1_{A ⊠ X̄})
///   r_X̄ = (γ* ⊠ 1_X̄)(1_X̄ ⊠ l_X ⊠ 1_X̄)(1_{X̄ ⊠ B} ⊠ γ̄)
/// built from a solution (γ, γ̄) for the underlying 1-morphism X.
pub fn dual_module(xm: &AlgBimodule, sol: &crate::duality::DualitySolution) -> Result<AlgBimodule> {
    if !sol.x().same_shape(xm.carrier()) {
        return Err(Error::structural("solution does not match the module carrier"));
    }
    let x = xm.carrier();
    let xb = x.conjugate();
    let a = xm.right_algebra().carrier();
    let b = xm.left_algebra().carrier();
    let id_xb = Intertwiner::identity(&xb);
    let id_a = Intertwiner::identity(a);
    let id_b = Intertwiner::identity(b);

    // l_X̄ : A ⊠ X̄ → X̄
    // A⊠X̄ --γ⊠1--> ((X̄ X) A) X̄ ... associated stepwise
    let l_xb = {
        // step 1: (γ ⊠ 1_{A⊠X̄}) : A⊠X̄ = L²L ⊠ (A⊠X̄) → (X̄⊠X) ⊠ (A⊠X̄)
        let axb = crate::fusion::fuse(a, &xb)?.fused().clone();
        let step1 = fuse_morphisms(sol.gamma(), &Intertwiner::identity(&axb))?;
        // step 2: (X̄X)(AX̄) → ((X̄X)A)X̄
        let xbx = crate::fusion::fuse(&xb, x)?.fused().clone();
        let step2 = associator(&xbx, a, &xb)?.adjoint();
        // step 3: ((X̄X)A)X̄ → (X̄(XA))X̄
        let step3 = fuse_morphisms(&associator(&xb, x, a)?, &id_xb)?;
        // step 4: (X̄(XA))X̄ → (X̄X)X̄ via 1⊠r
        let step4 = fuse_morphisms(&fuse_morphisms(&id_xb, &xm.r)?, &id_xb)?;
        // step 5: (X̄X)X̄ → X̄(XX̄)
        let step5 = associator(&xb, x, &xb)?;
        // step 6: X̄(XX̄) → X̄ L²M = X̄
        let step6 = fuse_morphisms(&id_xb, &sol.gammabar().adjoint())?;
        step6
            .compose(&step5)?
            .compose(&step4)?
            .compose(&step3)?
            .compose(&step2)?
            .compose(&step1)?
    };

    // r_X̄ : X̄ ⊠ B → X̄
    let r_xb = {
        // step 1: (1_{X̄⊠B} ⊠ γ̄) : (X̄⊠B) ⊠ L²M → (X̄⊠B) ⊠ (X⊠X̄)
        let xbb = crate::fusion::fuse(&xb, b)?.fused().clone();
        let xxb = crate::fusion::fuse(x, &xb)?.fused().clone();
        let step1 = fuse_morphisms(&Intertwiner::identity(&xbb), sol.gammabar())?;
        // step 2: (X̄B)(XX̄) → ((X̄B)X)X̄
        let step2 = associator(&xbb, x, &xb)?.adjoint();
        let _ = &xxb;
        // step 3: ((X̄B)X)X̄ → (X̄(BX))X̄
        let step3 = fuse_morphisms(&associator(&xb, b, x)?, &id_xb)?;
        // step 4: (X̄(BX))X̄ → (X̄X)X̄ via 1⊠l
        let step4 = fuse_morphisms(&fuse_morphisms(&id_xb, &xm.l)?, &id_xb)?;
        // step 5: (X̄X)X̄ → X̄ ... apply γ* to the first factor: (γ*⊠1)
        let step5 = fuse_morphisms(&sol.gamma().adjoint(), &id_xb)?;
        step5.compose(&step4)?.compose(&step3)?.compose(&step2)?.compose(&step1)?
    };
    let _ = (id_a, id_b);

    AlgBimodule::new(
        xm.right_algebra().clone(),
        xm.left_algebra().clone(),
        xb,
        l_xb,
        r_xb,
    )
}

/// Solve the conjugate equations for (Xm, X̄m) inside the bicategory of
/// special bimodules: find bimodule maps γ_rel: A → X̄ ⊠_B X and
/// γ̄_rel: B → X ⊠_A X̄ satisfying the compressed zig-zags.
pub struct RelativeSolution {
    pub gamma: Intertwiner,
    pub gammabar: Intertwiner,
    pub zigzag_residual: f64,
}

pub fn solve_relative_solution(
    xm: &AlgBimodule,
    xbar_m: &AlgBimodule,
    tol: f64,
) -> Result<RelativeSolution> {
    let a_alg = xm.right_algebra().clone();
    let b_alg = xm.left_algebra().clone();
    let w = rel_tensor(xbar_m, xm, tol)?; // X̄ ⊠_B X, an (A,A)-module
    let v = rel_tensor(xm, xbar_m, tol)?; // X ⊠_A X̄, a (B,B)-module

    let gamma_space = bimodule_map_space(&AlgBimodule::over_itself(&a_alg), &w.module, tol)?;
    let gbar_space = bimodule_map_space(&AlgBimodule::over_itself(&b_alg), &v.module, tol)?;
    if gamma_space.is_empty() || gbar_space.is_empty() {
        return Err(Error::precondition("no candidate relative unit found"));
    }

    // The first zig-zag is linear in γ_rel and antilinear in γ̄_rel, so it is
    // linear in the coefficient matrix E_{kl} = c_k conj(d_l) of the pair
    // over the two candidate bases. Solve for E by least squares, then
    // factor the (rank-one) solution.
    let xa = rel_tensor(xm, &AlgBimodule::over_itself(&a_alg), tol)?;
    let xw = rel_tensor(xm, &w.module, tol)?;
    let right_unit = right_unit_witness(&xa, xm)?; // X → X ⊠_A A
    let ra = rel_associator(xm, xbar_m, xm, tol)?;
    let into_left = ra.witness.adjoint(); // X ⊠_A (X̄ ⊠_B X) → (X ⊠_A X̄) ⊠_B X
    let vx = rel_tensor(&v.module, xm, tol)?;
    let bx = rel_tensor(&AlgBimodule::over_itself(&b_alg), xm, tol)?;
    let left_unit = left_unit_witness(&bx, xm)?; // X → B ⊠_B X

    let zz1_composite = |gamma: &Intertwiner, gammabar: &Intertwiner| -> Result<Intertwiner> {
        let step1 =
            rel_tensor_morphisms(&xa, &xw, &Intertwiner::identity(xm.carrier()), gamma)?
                .compose(&right_unit)?;
        rel_tensor_morphisms(
            &vx,
            &bx,
            &gammabar.adjoint(),
            &Intertwiner::identity(xm.carrier()),
        )?
        .compose(&into_left)?
        .compose(&step1)
    };

    let kk = gamma_space.len();
    let ll = gbar_space.len();
    let target = crate::solver::vec_intertwiner(&left_unit);
    let mut a_mat = crate::linalg::CMat::zeros(target.len(), kk * ll);
    for (k, f) in gamma_space.iter().enumerate() {
        for (l, g) in gbar_space.iter().enumerate() {
            let t = zz1_composite(f, g)?;
            let vcol = crate::solver::vec_intertwiner(&t);
            for r in 0..vcol.len() {
                a_mat[(r, k * ll + l)] = vcol[r];
            }
        }
    }
    let coef = crate::linalg::lstsq(
        &a_mat,
        &crate::linalg::CMat::from_column_slice(target.len(), 1, target.as_slice()),
    );
    let e = crate::linalg::CMat::from_fn(kk, ll, |k, l| coef[(k * ll + l, 0)]);
    // rank-one factorization E = c d*
    let svd = e.clone().svd(true, true);
    let sigma = svd.singular_values[0];
    if sigma < 1e-12 {
        return Err(Error::numerical("relative zig-zag system has no solution"));
    }
    let u = svd.u.as_ref().unwrap().column(0).into_owned();
    let vt = svd.v_t.as_ref().unwrap().row(0).into_owned();
    let mut gamma = Intertwiner::zero(gamma_space[0].dom(), gamma_space[0].cod())?;
    for (k, f) in gamma_space.iter().enumerate() {
        gamma = gamma.add(&f.scale(u[k] * crate::linalg::cr(sigma.sqrt())))?;
    }
    let mut gammabar = Intertwiner::zero(gbar_space[0].dom(), gbar_space[0].cod())?;
    for (l, g) in gbar_space.iter().enumerate() {
        gammabar = gammabar.add(&g.scale(vt[(0, l)].conj() * crate::linalg::cr(sigma.sqrt())))?;
    }

    // verify both zig-zags with the factored pair
    let zz1 = zz1_composite(&gamma, &gammabar)?.distance(&left_unit)?;
    let zz2 = {
        let ab = rel_tensor(&AlgBimodule::over_itself(&a_alg), xbar_m, tol)?;
        let left_unit_b = left_unit_witness(&ab, xbar_m)?; // X̄ → A ⊠_A X̄
        let wxb = rel_tensor(&w.module, xbar_m, tol)?;
        let step1b =
            rel_tensor_morphisms(&ab, &wxb, &gamma, &Intertwiner::identity(xbar_m.carrier()))?
                .compose(&left_unit_b)?;
        let rab = rel_associator(xbar_m, xm, xbar_m, tol)?;
        let into_right = rab.witness;
        let xbv = rel_tensor(xbar_m, &v.module, tol)?;
        let xb_b = rel_tensor(xbar_m, &AlgBimodule::over_itself(&b_alg), tol)?;
        let right_unit_b = right_unit_witness(&xb_b, xbar_m)?;
        let t = rel_tensor_morphisms(
            &xbv,
            &xb_b,
            &Intertwiner::identity(xbar_m.carrier()),
            &gammabar.adjoint(),
        )?
        .compose(&into_right)?
        .compose(&step1b)?;
        t.distance(&right_unit_b)?
    };
    Ok(RelativeSolution { gamma, gammabar, zigzag_residual: zz1.max(zz2) })
}

/// Orthonormal basis of the space of (B,A)-bimodule maps between two modules.
pub fn bimodule_map_space(
    from: &AlgBimodule,
    to: &AlgBimodule,
    tol: f64,
) -> Result<Vec<Intertwiner>> {
    let id_b = Intertwiner::identity(from.left_algebra().carrier());
    let id_a = Intertwiner::identity(from.right_algebra().carrier());
    let l1 = from.l.clone();
    let l2 = to.l.clone();
    let r1 = from.r.clone();
    let r2 = to.r.clone();
    let left = move |f: &Intertwiner| -> Result<Intertwiner> {
        let lhs = f.compose(&l1)?;
        let rhs = l2.compose(&fuse_morphisms(&id_b, f)?)?;
        lhs.add(&rhs.scale(cr(-1.0)))
    };
    let right = move |f: &Intertwiner| -> Result<Intertwiner> {
        let lhs = f.compose(&r1)?;
        let rhs = r2.compose(&fuse_morphisms(f, &id_a)?)?;
        lhs.add(&rhs.scale(cr(-1.0)))
    };
    crate::solver::solve_intertwiner_space(
        from.carrier(),
        to.carrier(),
        &[&left, &right],
        tol.max(1e-10),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::TracialAlgebra;
    use crate::frobenius::{matrix_q_system, verify_algebra};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn q2() -> FrobeniusAlgebra {
        matrix_q_system(2).unwrap()
    }

    #[test]
    fn algebra_over_itself_is_a_special_module() {
        let f = q2();
        assert!(verify_algebra(&f).unwrap().is_special(1e-10));
        let m = AlgBimodule::over_itself(&f);
        let rep = verify_module(&m).unwrap();
        assert!(rep.is_special(1e-9), "{rep:?}");
    }

    #[test]
    fn trivial_module_passes_and_p_is_identity() {
        // Remark-style: over trivial algebras any bimodule with unitor
        // actions is special, and p^1 = 1 so Y ⊠_1 X = Y ⊠ X.
        let m = TracialAlgebra::new(vec![2, 1]).unwrap();
        let n = TracialAlgebra::new(vec![2]).unwrap();
        let x = Bimodule::new(m.clone(), n.clone(), vec![vec![1, 1]]).unwrap();
        let xm = AlgBimodule::over_trivial(&x);
        assert!(verify_module(&xm).unwrap().is_special(1e-12));

        let l = TracialAlgebra::scalars();
        let y = Bimodule::new(l, m.clone(), vec![vec![1], vec![2]]).unwrap();
        let ym = AlgBimodule::over_trivial(&y);
        let p = p_projection(&xm, &ym, 1e-9).unwrap();
        assert!(p.dist_to_identity().unwrap() < 1e-12);
        let rp = rel_tensor(&xm, &ym, 1e-9).unwrap();
        assert_eq!(
            rp.module.carrier().mult_rows(),
            crate::fusion::fuse(&x, &y).unwrap().fused().mult_rows()
        );
    }

    #[test]
    fn p_is_a_projection_and_forms_agree() {
        let f = q2();
        let bm = AlgBimodule::over_itself(&f);
        let p = p_projection(&bm, &bm, 1e-9).unwrap();
        assert!(p.distance(&p.adjoint()).unwrap() < 1e-10);
        assert!(p.compose(&p).unwrap().distance(&p).unwrap() < 1e-10);
        let p2 = p_projection_alt(&bm, &bm, 1e-9).unwrap();
        assert!(p.distance(&p2).unwrap() < 1e-10);
    }

    #[test]
    fn p_for_left_algebra_factor_is_lstar_l() {
        // Y = B as a module over itself: p^B_{B⊠X} = l_X* l_X
        let f = q2();
        let bm = AlgBimodule::over_itself(&f);
        let p = p_projection(&bm, &bm, 1e-9).unwrap();
        let ll = f
            .multiplication()
            .adjoint()
            .compose(f.multiplication())
            .unwrap();
        assert!(p.distance(&ll).unwrap() < 1e-10);
    }

    #[test]
    fn trace_of_p_counts_compressed_dimension() {
        let f = q2();
        let bm = AlgBimodule::over_itself(&f);
        let p = p_projection(&bm, &bm, 1e-9).unwrap();
        let rp = rel_tensor(&bm, &bm, 1e-9).unwrap();
        // dense trace oracle: tr p = Σ n_k · rank(p_{ki}) · m_i
        let dense = p.to_dense();
        let tr: f64 = (0..dense.nrows()).map(|i| dense[(i, i)].re).sum();
        let dim: usize = rp.module.carrier().total_dim();
        assert!((tr - dim as f64).abs() < 1e-8);
    }

    #[test]
    fn unit_constraints_hold_via_action_witnesses() {
        // B ⊠_B B ≅ B via l* and r*: the witnesses are unitary module maps.
        let f = q2();
        let bm = AlgBimodule::over_itself(&f);
        let rp = rel_tensor(&bm, &bm, 1e-9).unwrap();
        let w = left_unit_witness(&rp, &bm).unwrap();
        assert!(w.adjoint().compose(&w).unwrap().dist_to_identity().unwrap() < 1e-10);
        assert!(w.compose(&w.adjoint()).unwrap().dist_to_identity().unwrap() < 1e-10);
        // intertwines the module actions
        let maps = bimodule_map_space(&bm, &rp.module, 1e-9).unwrap();
        // w: B → B ⊠_B B should lie in the bimodule-map space
        let mut residual = w.clone();
        for m in &maps {
            let coeff = inner_intertwiner(m, &residual);
            residual = residual.add(&m.scale(-coeff)).unwrap();
        }
        assert!(residual.op_norm() < 1e-9);
    }

    fn inner_intertwiner(a: &Intertwiner, b: &Intertwiner) -> num_complex::Complex64 {
        let va = crate::solver::vec_intertwiner(a);
        let vb = crate::solver::vec_intertwiner(b);
        va.dotc(&vb)
    }

    #[test]
    fn naturality_of_p_under_module_maps() {
        // (g ⊠ f) p₁ = p₂ (g ⊠ f) for bimodule maps g, f.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = q2();
        let bm = AlgBimodule::over_itself(&f);
        let maps = bimodule_map_space(&bm, &bm, 1e-9).unwrap();
        assert!(!maps.is_empty());
        let mut g = Intertwiner::zero(bm.carrier(), bm.carrier()).unwrap();
        for m in &maps {
            g = g
                .add(&m.scale(crate::linalg::c(
                    rand::Rng::random::<f64>(&mut rng),
                    rand::Rng::random::<f64>(&mut rng),
                )))
                .unwrap();
        }
        let p = p_projection(&bm, &bm, 1e-9).unwrap();
        let gf = fuse_morphisms(&g, &g).unwrap();
        let lhs = gf.compose(&p).unwrap();
        let rhs = p.compose(&gf).unwrap();
        assert!(lhs.distance(&rhs).unwrap() < 1e-9);
    }

    #[test]
    fn special_module_action_identities() {
        // (m_B ⊠ 1)(1 ⊠ l*) = l* l = (1 ⊠ l)(m_B* ⊠ 1) with associators.
        let f = q2();
        let xm = AlgBimodule::over_itself(&f);
        let b = f.carrier();
        let x = xm.carrier();
        let (id_b, id_x) = (Intertwiner::identity(b), Intertwiner::identity(x));
        let t1 = fuse_morphisms(f.multiplication(), &id_x)
            .unwrap()
            .compose(&associator(b, b, x).unwrap().adjoint())
            .unwrap()
            .compose(&fuse_morphisms(&id_b, &xm.left_action().adjoint()).unwrap())
            .unwrap();
        let t2 = xm.left_action().adjoint().compose(xm.left_action()).unwrap();
        let t3 = fuse_morphisms(&id_b, xm.left_action())
            .unwrap()
            .compose(&associator(b, b, x).unwrap())
            .unwrap()
            .compose(&fuse_morphisms(&f.multiplication().adjoint(), &id_x).unwrap())
            .unwrap();
        assert!(t1.distance(&t2).unwrap() < 1e-9);
        assert!(t3.distance(&t2).unwrap() < 1e-9);
    }

    #[test]
    fn module_map_adjoints_are_module_maps() {
        // For special modules, f is a bimodule map iff f* is.
        let f = q2();
        let bm = AlgBimodule::over_itself(&f);
        let maps = bimodule_map_space(&bm, &bm, 1e-9).unwrap();
        for m in &maps {
            let adj = m.adjoint();
            // verify the module-map equations directly for the adjoint
            let id_b = Intertwiner::identity(f.carrier());
            let lhs = adj.compose(bm.left_action()).unwrap();
            let rhs = bm
                .left_action()
                .compose(&fuse_morphisms(&id_b, &adj).unwrap())
                .unwrap();
            assert!(lhs.distance(&rhs).unwrap() < 1e-9);
        }
    }

    #[test]
    fn specialize_module_restores_specialness() {
        // rescale the actions of B-over-itself and re-specialize
        let f = q2();
        let bm = AlgBimodule::over_itself(&f);
        let l = bm.left_action().scale(cr(1.3));
        let r = bm.right_action().scale(cr(0.8));
        let broken = AlgBimodule::new(
            bm.left_algebra().clone(),
            bm.right_algebra().clone(),
            bm.carrier().clone(),
            l,
            r,
        )
        .unwrap();
        // still a module? no: unit fails; specialize_module only needs the
        // special algebras, and fixes coisometry. Build a genuine module
        // instead by transporting with an invertible bimodule map.
        let maps = bimodule_map_space(&bm, &bm, 1e-9).unwrap();
        let mut t = Intertwiner::identity(bm.carrier());
        for (k, m) in maps.iter().enumerate() {
            t = t.add(&m.scale(cr(0.4 / (k + 1) as f64))).unwrap();
        }
        let t_inv = t.inverse().unwrap();
        let id_b = Intertwiner::identity(f.carrier());
        let l2 = t
            .compose(bm.left_action())
            .unwrap()
            .compose(&fuse_morphisms(&id_b, &t_inv).unwrap())
            .unwrap();
        let r2 = t
            .compose(bm.right_action())
            .unwrap()
            .compose(&fuse_morphisms(&t_inv, &id_b).unwrap())
            .unwrap();
        let moved = AlgBimodule::new(
            bm.left_algebra().clone(),
            bm.right_algebra().clone(),
            bm.carrier().clone(),
            l2,
            r2,
        )
        .unwrap();
        let rep = verify_module(&moved).unwrap();
        assert!(rep.is_module(1e-9), "{rep:?}");
        let sp = specialize_module(&moved, 1e-9).unwrap();
        assert!(sp.symmetry_residual < 1e-9);
        let rep2 = verify_module(&sp.module).unwrap();
        assert!(rep2.is_special(1e-8), "{rep2:?}");
        let _ = broken;
    }

    #[test]
    fn relative_associator_is_unitary_module_map() {
        let f = q2();
        let bm = AlgBimodule::over_itself(&f);
        let ra = rel_associator(&bm, &bm, &bm, 1e-9).unwrap();
        assert!(ra.unitarity_residual < 1e-9);
    }

    #[test]
    fn functoriality_and_star_compat_of_relative_morphisms() {
        let f = q2();
        let bm = AlgBimodule::over_itself(&f);
        let rp = rel_tensor(&bm, &bm, 1e-9).unwrap();
        let maps = bimodule_map_space(&bm, &bm, 1e-9).unwrap();
        let g = &maps[0];
        let gf = rel_tensor_morphisms(&rp, &rp, g, g).unwrap();
        let gf2 = rel_tensor_morphisms(&rp, &rp, &g.adjoint(), &g.adjoint()).unwrap();
        assert!(gf.adjoint().distance(&gf2).unwrap() < 1e-9);
        // identities map to identities
        let idid = rel_tensor_morphisms(
            &rp,
            &rp,
            &Intertwiner::identity(bm.carrier()),
            &Intertwiner::identity(bm.carrier()),
        )
        .unwrap();
        assert!(idid.dist_to_identity().unwrap() < 1e-9);
        // naturality square with p commutes
        let p = &rp.p;
        let big = fuse_morphisms(g, g).unwrap();
        assert!(big.compose(p).unwrap().distance(&p.compose(&big).unwrap()).unwrap() < 1e-9);
        // bilinearity
        let h = &maps[maps.len() - 1];
        let sum = g.add(h).unwrap();
        let lhs = rel_tensor_morphisms(&rp, &rp, &sum, g).unwrap();
        let rhs = rel_tensor_morphisms(&rp, &rp, g, g)
            .unwrap()
            .add(&rel_tensor_morphisms(&rp, &rp, h, g).unwrap())
            .unwrap();
        assert!(lhs.distance(&rhs).unwrap() < 1e-9);
    }

    #[test]
    fn dual_module_of_trivial_module_is_conjugate_with_unitors() {
        let m = TracialAlgebra::new(vec![2]).unwrap();
        let n = TracialAlgebra::new(vec![1, 1]).unwrap();
        let x = Bimodule::new(m, n, vec![vec![1], vec![1]]).unwrap();
        let xm = AlgBimodule::over_trivial(&x);
        let sol = crate::duality::solution_from_bases(&x).unwrap();
        let dm = dual_module(&xm, &sol).unwrap();
        let rep = verify_module(&dm).unwrap();
        assert!(rep.is_module(1e-9), "{rep:?}");
        assert_eq!(dm.carrier().mult_rows(), x.conjugate().mult_rows());
    }

    #[test]
    fn rigidity_of_special_modules_constructively() {
        // B over itself is self-dual in the relative sense; the solver finds
        // the relative solution and the compressed zig-zags hold.
        let f = q2();
        let bm = AlgBimodule::over_itself(&f);
        let sol = f.self_dual_solution().unwrap();
        let dm = dual_module(&bm, &sol).unwrap();
        let rep = verify_module(&dm).unwrap();
        assert!(rep.is_module(1e-8), "{rep:?}");
        let dm_special = if rep.is_special(1e-8) {
            dm
        } else {
            specialize_module(&dm, 1e-8).unwrap().module
        };
        let rel = solve_relative_solution(&bm, &dm_special, 1e-8).unwrap();
        assert!(rel.zigzag_residual < 1e-8, "zig-zag residual {}", rel.zigzag_residual);
    }
}
