//! C*-Frobenius algebra objects in the bimodule category over one algebra:
//! verification of the axioms, specialization n = (mm*)^{1/2}, construction
//! from dual pairs, and standardization.

use crate::bimodule::{Bimodule, Intertwiner};
use crate::duality::{self, DualitySolution};
use crate::error::{Error, Result};
use crate::fusion::{associator, fuse, fuse_morphisms};
use crate::linalg::{cr, hermitian_eig};

/// An algebra object (H, m, ι) in hom(M,M): H a bimodule over one tracial
/// algebra, m: H ⊠ H → H the multiplication, ι: L²(M) → H the unit.
#[derive(Debug, Clone)]
pub struct FrobeniusAlgebra {
    h: Bimodule,
    m: Intertwiner,
    iota: Intertwiner,
}

impl FrobeniusAlgebra {
    pub fn new(h: Bimodule, m: Intertwiner, iota: Intertwiner) -> Result<Self> {
        if !h.source().same_structure(h.target()) {
            return Err(Error::structural("an algebra object lives in hom(M,M)"));
        }
        let hh = fuse(&h, &h)?.fused().clone();
        if !m.dom().same_shape(&hh) || !m.cod().same_shape(&h) {
            return Err(Error::structural("m must map H ⊠ H → H"));
        }
        let unit = Bimodule::unit(h.source());
        if !iota.dom().same_shape(&unit) || !iota.cod().same_shape(&h) {
            return Err(Error::structural("ι must map L²(M) → H"));
        }
        Ok(FrobeniusAlgebra { h, m, iota })
    }

    /// The trivial algebra L²(M) with the canonical (identity) structure.
    pub fn trivial(alg: &crate::algebra::TracialAlgebra) -> Self {
        let u = Bimodule::unit(alg);
        FrobeniusAlgebra {
            m: Intertwiner::identity(&u),
            iota: Intertwiner::identity(&u),
            h: u,
        }
    }

    pub fn carrier(&self) -> &Bimodule {
        &self.h
    }

    pub fn base(&self) -> &crate::algebra::TracialAlgebra {
        self.h.source()
    }

    pub fn multiplication(&self) -> &Intertwiner {
        &self.m
    }

    pub fn unit_map(&self) -> &Intertwiner {
        &self.iota
    }

    /// Transport along an invertible 2-morphism t: (H, t m (t⁻¹ ⊠ t⁻¹), t ι).
    /// An algebra again whenever t is a left or right module map.
    pub fn transport(&self, t: &Intertwiner) -> Result<FrobeniusAlgebra> {
        let tinv = t.inverse()?;
        let m = t
            .compose(&self.m)?
            .compose(&fuse_morphisms(&tinv, &tinv)?)?;
        let iota = t.compose(&self.iota)?;
        FrobeniusAlgebra::new(self.h.clone(), m, iota)
    }

    /// The solution (m*ι, m*ι) of the conjugate equations for (H, H).
    /// Requires mult(H) symmetric (it always is for a Frobenius algebra,
    /// being self-dual).
    pub fn self_dual_solution(&self) -> Result<DualitySolution> {
        let mi = self.m.adjoint().compose(&self.iota)?;
        DualitySolution::new(self.h.clone(), mi.clone(), mi)
    }
}

/// Residual report for the algebra axioms.
#[derive(Debug, Clone)]
pub struct AlgebraReport {
    pub unit_residual: f64,
    pub assoc_residual: f64,
    pub frobenius_residual: f64,
    pub special_residual: f64,
}

impl AlgebraReport {
    pub fn is_frobenius(&self, tol: f64) -> bool {
        self.unit_residual < tol && self.assoc_residual < tol && self.frobenius_residual < tol
    }

    pub fn is_special(&self, tol: f64) -> bool {
        self.is_frobenius(tol) && self.special_residual < tol
    }

    pub fn max_frobenius_residual(&self) -> f64 {
        self.unit_residual.max(self.assoc_residual).max(self.frobenius_residual)
    }
}

/// Check unit, associativity, Frobenius property and specialness.
pub fn verify_algebra(f: &FrobeniusAlgebra) -> Result<AlgebraReport> {
    let h = &f.h;
    let id = Intertwiner::identity(h);

    let left_unit = f.m.compose(&fuse_morphisms(&f.iota, &id)?)?;
    let right_unit = f.m.compose(&fuse_morphisms(&id, &f.iota)?)?;
    let unit_residual = left_unit
        .dist_to_identity()?
        .max(right_unit.dist_to_identity()?);

    let assoc = associator(h, h, h)?;
    let lhs = f.m.compose(&fuse_morphisms(&f.m, &id)?)?;
    let rhs = f.m.compose(&fuse_morphisms(&id, &f.m)?)?.compose(&assoc)?;
    let assoc_residual = lhs.distance(&rhs)?;

    // (1 ⊠ m)(m* ⊠ 1) = m* m = (m ⊠ 1)(1 ⊠ m*), with associators inserted
    let mm = f.m.adjoint().compose(&f.m)?;
    let t1 = fuse_morphisms(&id, &f.m)?
        .compose(&assoc)?
        .compose(&fuse_morphisms(&f.m.adjoint(), &id)?)?;
    let t3 = fuse_morphisms(&f.m, &id)?
        .compose(&assoc.adjoint())?
        .compose(&fuse_morphisms(&id, &f.m.adjoint())?)?;
    let frobenius_residual = t1.distance(&mm)?.max(t3.distance(&mm)?);

    let special_residual = f.m.compose(&f.m.adjoint())?.dist_to_identity()?;

    Ok(AlgebraReport { unit_residual, assoc_residual, frobenius_residual, special_residual })
}

/// Standardness check: whether (m*ι, m*ι) is a standard solution for (H,H).
#[derive(Debug, Clone)]
pub struct StandardCheck {
    pub conj_residual: f64,
    /// | ‖m*ι‖² − d_H |
    pub norm_gap: f64,
    pub scalar_dim: f64,
}

impl StandardCheck {
    pub fn is_standard(&self, tol: f64) -> bool {
        self.conj_residual < tol && self.norm_gap < tol
    }
}

/// Evaluate the (expensive) standardness flag of a special algebra.
pub fn check_standard(f: &FrobeniusAlgebra) -> Result<StandardCheck> {
    let sol = f.self_dual_solution()?;
    let (r1, r2) = duality::check_conjugate_equations(&sol)?;
    let d = duality::dimension(&f.h).scalar_dim;
    let norm_sq = sol.gamma_norm_sq();
    Ok(StandardCheck { conj_residual: r1.max(r2), norm_gap: (norm_sq - d).abs(), scalar_dim: d })
}

/// Prop-style specialization: n = (mm*)^{1/2},
/// F' = (H, n m (n⁻¹ ⊠ n⁻¹), n ι), with n an algebra isomorphism F → F'.
pub struct Specialized {
    pub algebra: FrobeniusAlgebra,
    pub iso: Intertwiner,
    /// min over blocks of the smallest eigenvalue of mm*.
    pub min_eigenvalue: f64,
    /// 1/‖ι‖², the proof's lower bound for min_eigenvalue.
    pub unit_bound: f64,
}

pub fn specialize(f: &FrobeniusAlgebra, tol: f64) -> Result<Specialized> {
    let report = verify_algebra(f)?;
    if !report.is_frobenius(tol.max(1e-6)) {
        return Err(Error::precondition(format!(
            "specialize needs a C*-Frobenius algebra (residuals: unit {:.2e}, assoc {:.2e}, frobenius {:.2e})",
            report.unit_residual, report.assoc_residual, report.frobenius_residual
        )));
    }
    let mm = f.m.compose(&f.m.adjoint())?;
    let mut n_blocks = Vec::new();
    let mut min_eig = f64::INFINITY;
    for j in 0..f.h.rows() {
        for i in 0..f.h.cols() {
            let b = mm.block(j, i);
            if b.nrows() > 0 {
                let (vals, _) = hermitian_eig(b);
                min_eig = min_eig.min(vals[0]);
            }
            n_blocks.push(b.clone());
        }
    }
    if min_eig < crate::linalg::POSITIVITY_FLOOR {
        return Err(Error::numerical(format!(
            "mm* has eigenvalue {min_eig:.3e}; the Frobenius precondition is violated"
        )));
    }
    let mm_int = Intertwiner::new(f.h.clone(), f.h.clone(), n_blocks)?;
    let n = intertwiner_psd_fn(&mm_int, f64::sqrt)?;
    let n_inv = intertwiner_psd_fn(&mm_int, |x| 1.0 / x.sqrt())?;
    let m_new = n.compose(&f.m)?.compose(&fuse_morphisms(&n_inv, &n_inv)?)?;
    let iota_new = n.compose(&f.iota)?;
    let algebra = FrobeniusAlgebra::new(f.h.clone(), m_new, iota_new)?;
    let unit_bound = {
        let norm = f.iota.op_norm();
        1.0 / (norm * norm)
    };
    Ok(Specialized { algebra, iso: n, min_eigenvalue: min_eig, unit_bound })
}

/// Apply a spectral function blockwise to a positive endo-intertwiner.
pub fn intertwiner_psd_fn(t: &Intertwiner, f: impl Fn(f64) -> f64) -> Result<Intertwiner> {
    let blocks = t
        .blocks()
        .iter()
        .map(|b| crate::linalg::hermitian_fn(b, &f))
        .collect();
    Intertwiner::new(t.dom().clone(), t.cod().clone(), blocks)
}

/// The algebra (X̄ ⊠ X, 1 ⊠ γ̄* ⊠ 1, γ) attached to a solution of the
/// conjugate equations. Special exactly when γ̄*γ̄ = 1.
pub fn from_dual_pair(x: &Bimodule, sol: &DualitySolution) -> Result<FrobeniusAlgebra> {
    if !sol.x().same_shape(x) {
        return Err(Error::structural("solution does not belong to this bimodule"));
    }
    let xb = &x.conjugate();
    let h = fuse(xb, x)?.fused().clone();
    let id_x = Intertwiner::identity(x);
    let id_xb = Intertwiner::identity(xb);

    // H ⊠ H = (X̄X)(X̄X) → ((X̄X)X̄)X → (X̄(XX̄))X → (X̄ L²N)X = X̄X
    let id_h = Intertwiner::identity(&h);
    let step1 = associator(&h, xb, x)?.adjoint();
    let step2 = fuse_morphisms(&associator(xb, x, xb)?, &id_x)?;
    let inner = fuse_morphisms(&id_xb, &sol.gammabar().adjoint())?;
    let step3 = fuse_morphisms(&inner, &id_x)?;
    let m = step3.compose(&step2)?.compose(&step1)?;
    let _ = id_h;
    FrobeniusAlgebra::new(h, m, sol.gamma().clone())
}

/// Result of standardizing a special algebra.
pub struct StandardizedAlgebra {
    pub algebra: FrobeniusAlgebra,
    /// The positive invertible gauge t: H → H with F″ = (H, t m (t⁻¹⊠t⁻¹), t ι).
    pub gauge: Intertwiner,
    pub report: AlgebraReport,
    pub standard: StandardCheck,
}

/// Make a special algebra standard, staying on the same carrier H.
///
/// Route: realize the extension N of F, standardize and row-normalize the
/// canonical solution (γ, γ̄) of X = L²(N), transport the resulting standard
/// special algebra X̄ ⊠ X back to H through the unitary u, and absorb the
/// remaining gauge into its positive part, so the final move is a transport
/// by a positive invertible 2-morphism of H.
pub fn standardize_algebra(f: &FrobeniusAlgebra, tol: f64) -> Result<StandardizedAlgebra> {
    let report = verify_algebra(f)?;
    if !report.is_special(tol.max(1e-7)) {
        return Err(Error::precondition(format!(
            "standardize_algebra needs a special algebra (special residual {:.2e})",
            report.special_residual
        )));
    }
    let ext = crate::realization::extension_algebra(
        f,
        crate::realization::RealizationConfig { seed: 42, tol },
    )?;
    let x = ext.standard_bimodule().clone();
    let sol = ext.solution().clone();
    let std = duality::standardize(&sol, tol)?;
    let normalized = duality::normalize_solution(&std.solution, tol.max(1e-9))?;
    let g_tot = duality::gauge_between(&sol, &normalized)?;
    let u = ext.iso_u()?;

    // ψ := (g_tot ⊠ 1_X) ∘ u : H → X̄ ⊠ X; its positive part is the gauge.
    let psi = fuse_morphisms(&g_tot, &Intertwiner::identity(&x))?.compose(&u.u)?;
    let psi_sq = psi.adjoint().compose(&psi)?;
    let gauge = intertwiner_psd_fn(&psi_sq, f64::sqrt)?;
    let algebra = f.transport(&gauge)?;
    let out_report = verify_algebra(&algebra)?;
    let standard = check_standard(&algebra)?;
    Ok(StandardizedAlgebra { algebra, gauge, report: out_report, standard })
}

/// Group algebra C[Z_n] over the scalars, with the convolution product and
/// unit δ_e. Frobenius but not special (mm* = n·1) until rescaled.
pub fn cyclic_group_algebra(n: usize) -> Result<FrobeniusAlgebra> {
    let c = crate::algebra::TracialAlgebra::scalars();
    let h = Bimodule::new(c.clone(), c.clone(), vec![vec![n]])?;
    let hh = fuse(&h, &h)?.fused().clone();
    let mut m = Intertwiner::zero(&hh, &h)?;
    for g in 0..n {
        for k in 0..n {
            m.block_mut(0, 0)[((g + k) % n, g * n + k)] = cr(1.0);
        }
    }
    let mut iota = Intertwiner::zero(&Bimodule::unit(&c), &h)?;
    iota.block_mut(0, 0)[(0, 0)] = cr(1.0);
    FrobeniusAlgebra::new(h, m, iota)
}

/// The full matrix algebra M_n(C) over the scalars as a Q-system: built from
/// X = C^n (mult [[n]] over (C,C)) with the normalized standard solution.
pub fn matrix_q_system(n: usize) -> Result<FrobeniusAlgebra> {
    let c = crate::algebra::TracialAlgebra::scalars();
    let x = Bimodule::new(c.clone(), c.clone(), vec![vec![n]])?;
    let sol = duality::canonical_standard_solution(&x)?;
    let norm = duality::normalize_solution(&sol, 1e-12)?;
    from_dual_pair(&x, &norm)
}
