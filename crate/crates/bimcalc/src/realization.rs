//! The extension construction: from a C*-Frobenius algebra (H, m, ι) over M,
//! build the concrete algebra N = {L_ξ} of left multiplications acting on
//! the dense realization of H, split it into matrix blocks, compute the
//! density operator k, the skeletal N–M bimodule X = L²(N, τ_N), and the
//! unitary u: H → X̄ ⊠ X identifying the two Frobenius algebras.
//!
//! N is carried in two certified forms at once: as concrete operators on H
//! and as an abstract tracial algebra (block sizes from the center split),
//! with the *-isomorphism between them part of the value.

use crate::algebra::{AlgebraElement, TracialAlgebra};
use crate::bimodule::{
    hat, intertwiner_from_linear_map, Bimodule, Intertwiner, Vector,
};
use crate::duality::DualitySolution;
use crate::error::{Error, Result};
use crate::frobenius::FrobeniusAlgebra;
use crate::fusion::{associator, fuse, fuse_morphisms, Fusion};
use crate::linalg::{cr, hermitian_eig, lstsq, op_norm, CMat, CVec};
use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Configuration for the (deterministic) randomized splitting steps.
#[derive(Debug, Clone, Copy)]
pub struct RealizationConfig {
    pub seed: u64,
    pub tol: f64,
}

impl Default for RealizationConfig {
    fn default() -> Self {
        RealizationConfig { seed: 42, tol: crate::linalg::DEFAULT_TOL }
    }
}

/// The concrete extension N = {L_ξ} with its certified abstract form.
pub struct Extension {
    frobenius: FrobeniusAlgebra,
    /// dense dimension of H
    h_dim: usize,
    /// L_{e_t} for the coordinate basis e_t of H
    left_ops: Vec<CMat>,
    /// minimal central projections of N as concrete operators
    central_projections: Vec<CMat>,
    /// matrix units E^α_{ij} per block, row-major within a block
    matrix_units: Vec<Vec<CMat>>,
    /// trace of E^α_{11} on H (the multiplicity weight of block α)
    unit_traces: Vec<f64>,
    n_abstract: TracialAlgebra,
    /// max residual of the *-isomorphism checks (products, adjoints)
    pub iso_residual: f64,
    /// max residual of projecting L* back into span(N)
    pub star_closure_residual: f64,
    /// k as a concrete operator and as an abstract element
    k_concrete: CMat,
    k_abstract: AlgebraElement,
    /// defining-identity residual of k and its commutation with ι(M)
    pub k_identity_residual: f64,
    pub k_commutation_residual: f64,
    /// skeletal X = L²(N) as an N–M bimodule, with the intertwiner bases
    /// S̃ (per block pair, each m_i × d_α with S̃ S̃* = δ·1)
    x: Bimodule,
    s_tilde: Vec<Vec<Vec<CMat>>>,
    /// the canonical solution (γ, γ̄) for (X, X̄)
    solution: DualitySolution,
    pub solution_residual: (f64, f64),
    /// the vector ι(Î) in H
    iota_vec: Vector,
}

/// Build the extension algebra of a C*-Frobenius algebra.
pub fn extension_algebra(f: &FrobeniusAlgebra, cfg: RealizationConfig) -> Result<Extension> {
    let rep = crate::frobenius::verify_algebra(f)?;
    if !rep.is_frobenius(cfg.tol.max(1e-6)) {
        return Err(Error::precondition(format!(
            "extension needs a C*-Frobenius algebra (max residual {:.2e})",
            rep.max_frobenius_residual()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let h = f.carrier().clone();
    let d = h.total_dim();
    let basis = h.coordinate_basis();
    let fu_hh = fuse(&h, &h)?;

    // L_{e_t}: columns are m(e_t ⊠ e_s)
    let mut left_ops = Vec::with_capacity(d);
    for e_t in &basis {
        let mut op = CMat::zeros(d, d);
        for (s, e_s) in basis.iter().enumerate() {
            let col = f
                .multiplication()
                .apply(&fu_hh.fuse_vectors(e_t, e_s)?)?
                .to_dense();
            op.set_column(s, &col);
        }
        left_ops.push(op);
    }

    // star closure: project each L* onto span{L_t}
    let span = op_span_matrix(&left_ops);
    let mut star_closure_residual: f64 = 0.0;
    for op in &left_ops {
        let target = vec_op(&op.adjoint());
        let coef = lstsq(&span, &CMat::from_column_slice(target.len(), 1, target.as_slice()));
        let recon = &span * &coef;
        let diff: f64 = (recon.column(0) - &target).norm();
        star_closure_residual = star_closure_residual.max(diff);
    }

    // center of N inside span{L_t}: commutation with every generator
    let center_coeffs = center_coefficients(&left_ops, cfg.tol)?;
    let center_dim = center_coeffs.len();

    // split the center: cluster the spectrum of a generic hermitian element
    let central_projections =
        split_center(&left_ops, &center_coeffs, &mut rng, cfg.tol, center_dim)?;

    // per block: matrix units and sizes
    let mut matrix_units = Vec::new();
    let mut unit_traces = Vec::new();
    let mut block_sizes = Vec::new();
    let mut iso_residual: f64 = 0.0;
    for p in &central_projections {
        let (units, mu, dsize, res) = build_matrix_units(&left_ops, p, &mut rng, cfg.tol)?;
        iso_residual = iso_residual.max(res);
        matrix_units.push(units);
        unit_traces.push(mu);
        block_sizes.push(dsize);
    }
    let n_abstract = TracialAlgebra::new(block_sizes.clone())?;

    let mut ext = Extension {
        frobenius: f.clone(),
        h_dim: d,
        left_ops,
        central_projections,
        matrix_units,
        unit_traces,
        n_abstract,
        iso_residual,
        star_closure_residual,
        k_concrete: CMat::zeros(d, d),
        k_abstract: TracialAlgebra::scalars().identity_element(),
        k_identity_residual: f64::NAN,
        k_commutation_residual: f64::NAN,
        x: Bimodule::unit(&TracialAlgebra::scalars()),
        s_tilde: vec![],
        solution: crate::duality::solution_from_bases(&Bimodule::unit(
            &TracialAlgebra::scalars(),
        ))?,
        solution_residual: (f64::NAN, f64::NAN),
        iota_vec: f.unit_map().apply(&hat(&f.base().identity_element()))?,
    };

    // certify the *-isomorphism on the generator basis
    let mut res = ext.iso_residual;
    for t in 0..d.min(6) {
        for s in 0..d.min(6) {
            let prod = &ext.left_ops[t] * &ext.left_ops[s];
            let lhs = ext.to_abstract(&prod)?;
            let rhs = ext
                .to_abstract(&ext.left_ops[t].clone())?
                .mul(&ext.to_abstract(&ext.left_ops[s].clone())?)?;
            res = res.max(lhs.add(&rhs.scale(cr(-1.0)))?.op_norm());
        }
        let adj = ext.left_ops[t].adjoint();
        let lhs = ext.to_abstract(&adj)?;
        let rhs = ext.to_abstract(&ext.left_ops[t].clone())?.adjoint();
        res = res.max(lhs.add(&rhs.scale(cr(-1.0)))?.op_norm());
    }
    ext.iso_residual = res;

    compute_density(&mut ext)?;
    skeletalize(&mut ext)?;
    Ok(ext)
}

impl Extension {
    pub fn frobenius(&self) -> &FrobeniusAlgebra {
        &self.frobenius
    }

    /// Block sizes of N as a tracial algebra.
    pub fn n_algebra(&self) -> &TracialAlgebra {
        &self.n_abstract
    }

    pub fn center_dim(&self) -> usize {
        self.central_projections.len()
    }

    /// dim_C N = dim_C H (the map ξ → L_ξ is injective for unital algebras).
    pub fn dim(&self) -> usize {
        self.h_dim
    }

    /// L_ξ as a dense operator on H.
    pub fn left_mult(&self, xi: &Vector) -> Result<CMat> {
        if !xi.parent().same_shape(self.frobenius.carrier()) {
            return Err(Error::structural("vector not in H"));
        }
        let coords = xi.to_dense();
        let mut op = CMat::zeros(self.h_dim, self.h_dim);
        for (t, l) in self.left_ops.iter().enumerate() {
            op += l.scale_complex(coords[t]);
        }
        Ok(op)
    }

    /// The inclusion a ↦ L_{ι(a)} as a concrete operator.
    pub fn include(&self, a: &AlgebraElement) -> Result<CMat> {
        let v = self.frobenius.unit_map().apply(&hat(a))?;
        self.left_mult(&v)
    }

    /// Whether a ↦ L_{ι(a)} is injective (iff the left action of M on H is
    /// faithful, i.e. every target block of H is supported).
    pub fn inclusion_injective(&self) -> bool {
        let h = self.frobenius.carrier();
        (0..h.rows()).all(|j| (0..h.cols()).any(|i| h.mult(j, i) > 0))
    }

    /// φ: concrete operator → abstract element (trace pairing against the
    /// matrix units).
    pub fn to_abstract(&self, op: &CMat) -> Result<AlgebraElement> {
        let mut mats = Vec::with_capacity(self.n_abstract.num_blocks());
        for (alpha, units) in self.matrix_units.iter().enumerate() {
            let dsz = self.n_abstract.block_size(alpha);
            let mut blk = CMat::zeros(dsz, dsz);
            for i in 0..dsz {
                for j in 0..dsz {
                    // coefficient of E_{ij}: Tr(E_{ji} op)/Tr(E_{jj})
                    let eji = &units[j * dsz + i];
                    let tr: C64 = (eji * op).diagonal().iter().sum();
                    blk[(i, j)] = tr / cr(self.unit_traces[alpha]);
                }
            }
            mats.push(blk);
        }
        self.n_abstract.element(mats)
    }

    /// φ⁻¹: abstract element → concrete operator.
    pub fn from_abstract(&self, a: &AlgebraElement) -> Result<CMat> {
        if !a.parent().same_structure(&self.n_abstract) {
            return Err(Error::structural("element not in the abstract extension algebra"));
        }
        let mut op = CMat::zeros(self.h_dim, self.h_dim);
        for (alpha, units) in self.matrix_units.iter().enumerate() {
            let dsz = self.n_abstract.block_size(alpha);
            let blk = a.block(alpha);
            for i in 0..dsz {
                for j in 0..dsz {
                    op += units[i * dsz + j].scale_complex(blk[(i, j)]);
                }
            }
        }
        Ok(op)
    }

    /// τ_N of a concrete operator.
    pub fn tau_n(&self, op: &CMat) -> Result<C64> {
        Ok(crate::algebra::trace(&self.to_abstract(op)?))
    }

    pub fn density_concrete(&self) -> &CMat {
        &self.k_concrete
    }

    pub fn density_abstract(&self) -> &AlgebraElement {
        &self.k_abstract
    }

    pub fn density_spectrum(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for blk in self.k_abstract.blocks() {
            let (vals, _) = hermitian_eig(blk);
            out.extend(vals);
        }
        out
    }

    /// The skeletal N–M bimodule X = L²(N, τ_N).
    pub fn standard_bimodule(&self) -> &Bimodule {
        &self.x
    }

    pub fn standard_bimodule_conjugate(&self) -> Bimodule {
        self.x.conjugate()
    }

    /// The canonical solution (γ, γ̄) for (X, X̄) built from k.
    pub fn solution(&self) -> &DualitySolution {
        &self.solution
    }

    /// Push an abstract element of N into the skeletal X = L²(N).
    pub fn vector_in_x(&self, b: &AlgebraElement) -> Result<Vector> {
        if !b.parent().same_structure(&self.n_abstract) {
            return Err(Error::structural("element not in N"));
        }
        let mut v = self.x.zero_vector();
        for alpha in 0..self.x.rows() {
            let da = self.n_abstract.block_size(alpha) as f64;
            for i in 0..self.x.cols() {
                for (beta, s) in self.s_tilde[alpha][i].iter().enumerate() {
                    // ξ[u, β, q] = (x_α S̃*)[u, q] / sqrt(d_α)
                    let img = b.block(alpha) * s.adjoint();
                    let t = v.block_mut(alpha, i);
                    for u in 0..t.n {
                        for q in 0..t.m {
                            t.set(u, beta, q, img[(u, q)] / cr(da.sqrt()));
                        }
                    }
                }
            }
        }
        Ok(v)
    }

    /// Push an abstract element of N into the skeletal X̄ (left M, right N).
    pub fn vector_in_xbar(&self, b: &AlgebraElement) -> Result<Vector> {
        if !b.parent().same_structure(&self.n_abstract) {
            return Err(Error::structural("element not in N"));
        }
        let xbar = self.x.conjugate();
        let mut v = xbar.zero_vector();
        for alpha in 0..self.x.rows() {
            let da = self.n_abstract.block_size(alpha) as f64;
            for i in 0..self.x.cols() {
                for (beta, s) in self.s_tilde[alpha][i].iter().enumerate() {
                    // ξ̄[q, β, u] = (S̃ x_α)[q, u] / sqrt(d_α)
                    let img = s * b.block(alpha);
                    let t = v.block_mut(i, alpha);
                    for q in 0..t.n {
                        for u in 0..t.m {
                            t.set(q, beta, u, img[(q, u)] / cr(da.sqrt()));
                        }
                    }
                }
            }
        }
        Ok(v)
    }

    /// The unitary u: H → X̄ ⊠ X, ξ ↦ L_ξ ⊠ k, with its residual report.
    pub fn iso_u(&self) -> Result<IsoU> {
        let xbar = self.x.conjugate();
        let fu = fuse(&xbar, &self.x)?;
        let k_x = self.vector_in_x(&self.k_abstract)?;
        let map = |v: &Vector| -> Result<Vector> {
            let l_op = self.left_mult(v)?;
            let l_abs = self.to_abstract(&l_op)?;
            fu.fuse_vectors(&self.vector_in_xbar(&l_abs)?, &k_x)
        };
        let (u, bimodularity) = intertwiner_from_linear_map(self.frobenius.carrier(), fu.fused(), map)?;
        let unitarity = u
            .adjoint()
            .compose(&u)?
            .dist_to_identity()?
            .max(u.compose(&u.adjoint())?.dist_to_identity()?);
        if unitarity > 1e-6 {
            return Err(Error::numerical(format!(
                "u is not unitary (residual {unitarity:.3e}); input algebra is broken"
            )));
        }

        // u ι = γ and the multiplication square
        let unit_residual = u.compose(self.frobenius.unit_map())?.distance(self.solution.gamma())?;
        let target = crate::frobenius::from_dual_pair(&self.x, &self.solution)?;
        let mult_residual = u
            .compose(self.frobenius.multiplication())?
            .distance(&target.multiplication().compose(&fuse_morphisms(&u, &u)?)?)?;

        Ok(IsoU {
            u,
            unitarity_residual: unitarity,
            bimodularity_residual: bimodularity,
            algebra_unit_residual: unit_residual,
            algebra_mult_residual: mult_residual,
        })
    }

    /// Specialness transfer: ‖γ̄*γ̄ − 1‖ (zero iff the input is special).
    pub fn gammabar_normalization_residual(&self) -> Result<f64> {
        self.solution
            .gammabar()
            .adjoint()
            .compose(self.solution.gammabar())?
            .dist_to_identity()
    }

    /// X as a module over (1_N, H): plain left N-action, right H-action
    /// induced through u.
    pub fn x_module(&self) -> Result<crate::modules::AlgBimodule> {
        let iso = self.iso_u()?;
        let x = &self.x;
        let xbar = self.x.conjugate();
        let id_x = Intertwiner::identity(x);
        // r_X := (γ̄* ⊠ 1_X) ∘ assoc⁻¹ ∘ (1_X ⊠ u) : X ⊠ H → X
        let r = fuse_morphisms(&self.solution.gammabar().adjoint(), &id_x)?
            .compose(&associator(x, &xbar, x)?.adjoint())?
            .compose(&fuse_morphisms(&id_x, &iso.u)?)?;
        crate::modules::AlgBimodule::new(
            FrobeniusAlgebra::trivial(&self.n_abstract),
            self.frobenius.clone(),
            x.clone(),
            Intertwiner::identity(x),
            r,
        )
    }

    /// X̄ as a module over (H, 1_N): left H-action through u.
    pub fn xbar_module(&self) -> Result<crate::modules::AlgBimodule> {
        let iso = self.iso_u()?;
        let x = &self.x;
        let xbar = self.x.conjugate();
        let id_xb = Intertwiner::identity(&xbar);
        // l_X̄ := (1_X̄ ⊠ γ̄*) ∘ assoc ∘ (u ⊠ 1_X̄) : H ⊠ X̄ → X̄
        let l = fuse_morphisms(&id_xb, &self.solution.gammabar().adjoint())?
            .compose(&associator(&xbar, x, &xbar)?)?
            .compose(&fuse_morphisms(&iso.u, &id_xb)?)?;
        crate::modules::AlgBimodule::new(
            self.frobenius.clone(),
            FrobeniusAlgebra::trivial(&self.n_abstract),
            xbar.clone(),
            l,
            Intertwiner::identity(&xbar),
        )
    }
}

/// The unitary u: H → X̄ ⊠ X with its verification residuals.
pub struct IsoU {
    pub u: Intertwiner,
    pub unitarity_residual: f64,
    pub bimodularity_residual: f64,
    pub algebra_unit_residual: f64,
    pub algebra_mult_residual: f64,
}

impl IsoU {
    pub fn max_residual(&self) -> f64 {
        self.unitarity_residual
            .max(self.bimodularity_residual)
            .max(self.algebra_unit_residual)
            .max(self.algebra_mult_residual)
    }
}

/// Independent computation of the center of the extension, via the
/// categorical description: M-M-intertwiners t: H → H with
/// t m = m (t ⊠ 1) = m (1 ⊠ t).
pub fn center_of_extension(f: &FrobeniusAlgebra, tol: f64) -> Result<Vec<Intertwiner>> {
    let h = f.carrier();
    let id = Intertwiner::identity(h);
    let m = f.multiplication().clone();
    let m2 = m.clone();
    let id2 = id.clone();
    let c1 = move |t: &Intertwiner| -> Result<Intertwiner> {
        let lhs = t.compose(&m)?;
        let rhs = m.compose(&fuse_morphisms(t, &id)?)?;
        lhs.add(&rhs.scale(cr(-1.0)))
    };
    let c2 = move |t: &Intertwiner| -> Result<Intertwiner> {
        let lhs = t.compose(&m2)?;
        let rhs = m2.compose(&fuse_morphisms(&id2, t)?)?;
        lhs.add(&rhs.scale(cr(-1.0)))
    };
    crate::solver::solve_intertwiner_space(h, h, &[&c1, &c2], tol.max(1e-10))
}

/// Density-operator report: the defining identity residual on a basis of N
/// and the commutation residual with the included copy of M.
pub struct DensityReport {
    pub identity_residual: f64,
    pub commutation_residual: f64,
    pub spectrum: Vec<f64>,
}

pub fn density_report(ext: &Extension) -> DensityReport {
    DensityReport {
        identity_residual: ext.k_identity_residual,
        commutation_residual: ext.k_commutation_residual,
        spectrum: ext.density_spectrum(),
    }
}

/// Convenience entry point: build the extension and return the density
/// operator with its report.
pub fn density_k(
    f: &FrobeniusAlgebra,
    cfg: RealizationConfig,
) -> Result<(AlgebraElement, DensityReport)> {
    let ext = extension_algebra(f, cfg)?;
    let rep = density_report(&ext);
    Ok((ext.k_abstract.clone(), rep))
}

/// Morita report for a special algebra: both invertibility relations.
pub struct MoritaReport {
    /// ‖p^H_{X ⊠ X̄} − γ̄ γ̄*‖
    pub p_formula_residual: f64,
    /// multiplicity of X ⊠_H X̄ equals that of L²(N)
    pub unit_mult_match: bool,
    /// residual of the witness unitary X ⊠_H X̄ → L²(N) (γ̄-based)
    pub unit_witness_residual: f64,
    /// u-side residuals for X̄ ⊠ X ≅ H
    pub iso_residual: f64,
    /// hom-space dimensions: End_{H,H}(H) vs center of N
    pub hom_dim_source: usize,
    pub hom_dim_target: usize,
}

impl MoritaReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.p_formula_residual < tol
            && self.unit_mult_match
            && self.unit_witness_residual < tol
            && self.iso_residual < tol
            && self.hom_dim_source == self.hom_dim_target
    }
}

pub fn morita_check(ext: &Extension, tol: f64) -> Result<MoritaReport> {
    let special = ext.gammabar_normalization_residual()?;
    if special > tol.max(1e-6) {
        return Err(Error::precondition(format!(
            "morita_check needs a special algebra (‖γ̄*γ̄ − 1‖ = {special:.3e})"
        )));
    }
    let xm = ext.x_module()?;
    let xbar_m = ext.xbar_module()?;
    let p = crate::modules::p_projection(&xm, &xbar_m, tol)?;
    let gbgb = ext
        .solution
        .gammabar()
        .compose(&ext.solution.gammabar().adjoint())?;
    let p_formula_residual = p.distance(&gbgb)?;

    let rp = crate::modules::rel_tensor(&xm, &xbar_m, tol)?;
    let unit_n = Bimodule::unit(&ext.n_abstract);
    let unit_mult_match = rp.module.carrier().mult_rows() == unit_n.mult_rows();
    // witness: s* γ̄ : L²(N) → X ⊠_H X̄ is unitary and intertwines
    let w = rp.s.adjoint().compose(ext.solution.gammabar())?;
    let mut unit_witness_residual = w
        .adjoint()
        .compose(&w)?
        .dist_to_identity()?
        .max(w.compose(&w.adjoint())?.dist_to_identity()?);
    // intertwining: compressed actions correspond to the plain unit actions
    let trivial_n = FrobeniusAlgebra::trivial(&ext.n_abstract);
    let lhs = rp
        .module
        .left_action()
        .compose(&fuse_morphisms(&Intertwiner::identity(trivial_n.carrier()), &w)?)?;
    let rhs = w.compose(&Intertwiner::identity(&unit_n))?;
    unit_witness_residual = unit_witness_residual.max(lhs.distance(&rhs)?);

    let iso = ext.iso_u()?;

    let hom_dim_source = crate::modules::bimodule_map_space(
        &crate::modules::AlgBimodule::over_itself(&ext.frobenius),
        &crate::modules::AlgBimodule::over_itself(&ext.frobenius),
        tol,
    )?
    .len();
    let hom_dim_target = ext.center_dim();

    Ok(MoritaReport {
        p_formula_residual,
        unit_mult_match,
        unit_witness_residual,
        iso_residual: iso.max_residual(),
        hom_dim_source,
        hom_dim_target,
    })
}

// ----- internal construction steps -----

trait ScaleComplex {
    fn scale_complex(&self, z: C64) -> CMat;
}

impl ScaleComplex for CMat {
    fn scale_complex(&self, z: C64) -> CMat {
        self.map(|x| x * z)
    }
}

fn vec_op(op: &CMat) -> CVec {
    CVec::from_vec(op.iter().cloned().collect())
}

fn op_span_matrix(ops: &[CMat]) -> CMat {
    let rows = ops[0].nrows() * ops[0].ncols();
    let mut m = CMat::zeros(rows, ops.len());
    for (c, op) in ops.iter().enumerate() {
        m.set_column(c, &vec_op(op));
    }
    m
}

/// Coefficient vectors (over the L-basis) spanning the center of N.
fn center_coefficients(left_ops: &[CMat], tol: f64) -> Result<Vec<CVec>> {
    let d = left_ops.len();
    let rows_per = left_ops[0].nrows() * left_ops[0].ncols();
    let mut a = CMat::zeros(rows_per * d, d);
    for (s, b_s) in left_ops.iter().enumerate() {
        for (t, b_t) in left_ops.iter().enumerate() {
            let comm = b_s * b_t - b_t * b_s;
            let v = vec_op(&comm);
            for r in 0..rows_per {
                a[(t * rows_per + r, s)] = v[r];
            }
        }
    }
    let ns = crate::linalg::nullspace(&a, tol.max(1e-10));
    Ok((0..ns.ncols()).map(|c| ns.column(c).into_owned()).collect())
}

fn op_from_coeffs(left_ops: &[CMat], coeffs: &CVec) -> CMat {
    let mut op = CMat::zeros(left_ops[0].nrows(), left_ops[0].ncols());
    for (t, l) in left_ops.iter().enumerate() {
        op += l.scale_complex(coeffs[t]);
    }
    op
}

/// Minimal central projections by clustering the spectrum of a generic
/// hermitian central element.
fn split_center(
    left_ops: &[CMat],
    center_coeffs: &[CVec],
    rng: &mut ChaCha8Rng,
    tol: f64,
    expected: usize,
) -> Result<Vec<CMat>> {
    use rand::Rng;
    let d = left_ops[0].nrows();
    for _attempt in 0..8 {
        let mut z = CMat::zeros(d, d);
        for c in center_coeffs {
            let w = crate::linalg::c(rng.random::<f64>() * 2.0 - 1.0, rng.random::<f64>() * 2.0 - 1.0);
            z += op_from_coeffs(left_ops, c).scale_complex(w);
        }
        let zh = (&z + z.adjoint()).scale(0.5);
        let (vals, vecs) = hermitian_eig(&zh);
        let scale = vals.iter().fold(1.0f64, |a, &b| a.max(b.abs()));
        let clusters = cluster(&vals, 1e-6 * scale.max(1.0));
        if clusters.len() != expected {
            continue;
        }
        let mut projections = Vec::new();
        let mut ok = true;
        for cl in &clusters {
            let mut p = CMat::zeros(d, d);
            for &idx in cl {
                let v = vecs.column(idx);
                p += v * v.adjoint();
            }
            // verify p is a projection and commutes with N
            if op_norm(&(&p * &p - &p)) > tol.max(1e-8) {
                ok = false;
                break;
            }
            for b in left_ops.iter().take(6) {
                if op_norm(&(&p * b - b * &p)) > tol.max(1e-7) {
                    ok = false;
                    break;
                }
            }
            projections.push(p);
        }
        if ok {
            return Ok(projections);
        }
    }
    Err(Error::numerical("central splitting did not stabilize"))
}

fn cluster(sorted_vals: &[f64], gap: f64) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = Vec::new();
    for (i, &v) in sorted_vals.iter().enumerate() {
        match out.last_mut() {
            Some(last) if (v - sorted_vals[*last.last().unwrap()]).abs() < gap => last.push(i),
            _ => out.push(vec![i]),
        }
    }
    out
}

/// Matrix units of one central summand P·N: returns (units row-major,
/// Tr E_11, block size, residual of the unit relations).
fn build_matrix_units(
    left_ops: &[CMat],
    p: &CMat,
    rng: &mut ChaCha8Rng,
    tol: f64,
) -> Result<(Vec<CMat>, f64, usize, f64)> {
    use rand::Rng;
    let d_h = p.nrows();
    // span of P·N
    let compressed: Vec<CMat> = left_ops.iter().map(|b| p * b).collect();
    let span = op_span_matrix(&compressed);
    let svd = span.clone().svd(true, false);
    let rank = svd
        .singular_values
        .iter()
        .filter(|&&s| s > 1e-9 * svd.singular_values.max().max(1.0))
        .count();
    let dsize_f = (rank as f64).sqrt();
    let dsize = dsize_f.round() as usize;
    if (dsize * dsize) != rank {
        return Err(Error::numerical(format!(
            "central summand has dimension {rank}, not a perfect square"
        )));
    }

    for _attempt in 0..8 {
        // generic hermitian element of P·N
        let mut g = CMat::zeros(d_h, d_h);
        for b in &compressed {
            let w = crate::linalg::c(rng.random::<f64>() * 2.0 - 1.0, rng.random::<f64>() * 2.0 - 1.0);
            g += b.scale_complex(w);
        }
        let gh = (&g + g.adjoint()).scale(0.5);
        // restrict to the range of p: eigenvectors with p v = v
        let (vals, vecs) = hermitian_eig(&gh);
        // keep eigenpairs inside the range of p (eigenvalue of p ≈ 1)
        let mut kept: Vec<(f64, CVec)> = Vec::new();
        for i in 0..vals.len() {
            let v = vecs.column(i).into_owned();
            let pv = p * &v;
            if (pv - &v).norm() < 1e-6 {
                kept.push((vals[i], v));
            }
        }
        kept.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let kvals: Vec<f64> = kept.iter().map(|(v, _)| *v).collect();
        let scale = kvals.iter().fold(1.0f64, |a, &b| a.max(b.abs()));
        let clusters = cluster(&kvals, 1e-6 * scale.max(1.0));
        if clusters.len() != dsize {
            continue;
        }
        let mu = kept.len() as f64 / dsize as f64;
        // spectral projections e_1..e_d
        let e: Vec<CMat> = clusters
            .iter()
            .map(|cl| {
                let mut proj = CMat::zeros(d_h, d_h);
                for &idx in cl {
                    let v = &kept[idx].1;
                    proj += v * v.adjoint();
                }
                proj
            })
            .collect();
        // partial isometries v_{1j} from the polar part of e_1 R e_j
        let mut r_op = CMat::zeros(d_h, d_h);
        for b in &compressed {
            let w = crate::linalg::c(rng.random::<f64>() * 2.0 - 1.0, rng.random::<f64>() * 2.0 - 1.0);
            r_op += b.scale_complex(w);
        }
        let mut v1 = vec![e[0].clone()];
        let mut fail = false;
        for ej in e.iter().skip(1) {
            let w = &e[0] * &r_op * ej;
            let wsw = w.adjoint() * &w;
            // pseudo inverse sqrt on the range of e_j
            let (vals2, vecs2) = hermitian_eig(&wsw);
            let vmax = vals2.iter().cloned().fold(0.0, f64::max);
            if vmax < 1e-10 {
                fail = true;
                break;
            }
            let mut inv_sqrt = CMat::zeros(d_h, d_h);
            for i in 0..vals2.len() {
                if vals2[i] > 1e-10 * vmax {
                    let col = vecs2.column(i);
                    inv_sqrt += (col * col.adjoint()).scale_complex(cr(1.0 / vals2[i].sqrt()));
                }
            }
            let v = &w * inv_sqrt;
            // partial isometry checks
            if op_norm(&(v.adjoint() * &v - ej)) > tol.max(1e-7)
                || op_norm(&(&v * v.adjoint() - &e[0])) > tol.max(1e-7)
            {
                fail = true;
                break;
            }
            v1.push(v);
        }
        if fail {
            continue;
        }
        // E_{ij} = v_{1i}* v_{1j}
        let mut units = Vec::with_capacity(dsize * dsize);
        for i in 0..dsize {
            for j in 0..dsize {
                units.push(v1[i].adjoint() * &v1[j]);
            }
        }
        // relations
        let mut res: f64 = 0.0;
        let mut sum = CMat::zeros(d_h, d_h);
        for i in 0..dsize {
            sum += &units[i * dsize + i];
        }
        res = res.max(op_norm(&(sum - p)));
        for i in 0..dsize.min(3) {
            for j in 0..dsize.min(3) {
                for kk in 0..dsize.min(3) {
                    for l in 0..dsize.min(3) {
                        let prod = &units[i * dsize + j] * &units[kk * dsize + l];
                        let expect = if j == kk {
                            units[i * dsize + l].clone()
                        } else {
                            CMat::zeros(d_h, d_h)
                        };
                        res = res.max(op_norm(&(prod - expect)));
                    }
                }
            }
        }
        if res > tol.max(1e-7) {
            continue;
        }
        let mu_exact: f64 = units[0].diagonal().iter().map(|z| z.re).sum();
        let _ = mu;
        return Ok((units, mu_exact, dsize, res));
    }
    Err(Error::numerical("matrix-unit construction did not stabilize"))
}

/// Solve τ_N(k² b) = ⟨ι(Î), b ι(Î)⟩ for k² ∈ N, then k := sqrt.
fn compute_density(ext: &mut Extension) -> Result<()> {
    let d = ext.h_dim;
    let iota = ext.iota_vec.to_dense();
    // Gram system over the L-basis
    let mut g = CMat::zeros(d, d);
    let mut rhs = CVec::zeros(d);
    for t in 0..d {
        for s in 0..d {
            g[(t, s)] = ext.tau_n(&(&ext.left_ops[s] * &ext.left_ops[t]))?;
        }
        let bv = &ext.left_ops[t] * &iota;
        rhs[t] = iota.dotc(&bv);
    }
    let coef = lstsq(&g, &CMat::from_column_slice(d, 1, rhs.as_slice()));
    let k2 = op_from_coeffs(&ext.left_ops, &coef.column(0).into_owned());
    let k2h = (&k2 + k2.adjoint()).scale(0.5);
    let k2_abs = ext.to_abstract(&k2h)?;
    // positive invertible sqrt blockwise
    let mut k_blocks = Vec::new();
    for blk in k2_abs.blocks() {
        k_blocks.push(crate::linalg::psd_sqrt_invertible(blk).map_err(|_| {
            Error::numerical("density operator k² is not positive invertible; ι(Î) fails to be separating")
        })?);
    }
    let k_abs = ext.n_abstract.element(k_blocks)?;
    let k_conc = ext.from_abstract(&k_abs)?;

    // residuals: defining identity on the basis, commutation with ι(M)
    let mut ident: f64 = 0.0;
    let ksq = &k_conc * &k_conc;
    for t in 0..d {
        let lhs = ext.tau_n(&(&ksq * &ext.left_ops[t]))?;
        let bv = &ext.left_ops[t] * &iota;
        let r = iota.dotc(&bv);
        ident = ident.max((lhs - r).norm());
    }
    let mut comm: f64 = 0.0;
    for a in ext.frobenius.base().matrix_unit_basis() {
        let inc = ext.include(&a)?;
        comm = comm.max(op_norm(&(&k_conc * &inc - &inc * &k_conc)));
    }
    ext.k_concrete = k_conc;
    ext.k_abstract = k_abs;
    ext.k_identity_residual = ident;
    ext.k_commutation_residual = comm;
    Ok(())
}

/// Skeletalize X = L²(N) over (N_abs, M) and build (γ, γ̄).
fn skeletalize(ext: &mut Extension) -> Result<()> {
    let m_alg = ext.frobenius.base().clone();
    let s_n = ext.n_abstract.num_blocks();
    let s_m = m_alg.num_blocks();

    // representation ρ_α: M → M_{d_α}, a ↦ φ(L_{ι(a)})_α
    let m_units = m_alg.matrix_unit_basis();
    let mut rho: Vec<Vec<CMat>> = Vec::with_capacity(s_n);
    for alpha in 0..s_n {
        let mut per_unit = Vec::new();
        for a in &m_units {
            let inc = ext.include(a)?;
            per_unit.push(ext.to_abstract(&inc)?.block(alpha).clone());
        }
        rho.push(per_unit);
    }

    // intertwiner spaces Hom_{M_i}(C^{m_i}, (C^{d_α}, ρ_α|M_i)):
    // S (m_i × d_α) with a S = S ρ_α(a) for all a ∈ M_i
    let mut mult = vec![0usize; s_n * s_m];
    let mut s_tilde: Vec<Vec<Vec<CMat>>> = Vec::with_capacity(s_n);
    // block offset of M_i's units within the matrix_unit_basis list
    let mut unit_offset = vec![0usize; s_m];
    {
        let mut off = 0;
        for i in 0..s_m {
            unit_offset[i] = off;
            off += m_alg.block_size(i) * m_alg.block_size(i);
        }
    }
    for alpha in 0..s_n {
        let da = ext.n_abstract.block_size(alpha);
        let mut per_i = Vec::with_capacity(s_m);
        for i in 0..s_m {
            let mi = m_alg.block_size(i);
            // unknowns: S entries (mi × da); constraints per matrix unit a
            let mut a_mat = CMat::zeros(mi * da * mi * mi, mi * da);
            let mut row = 0;
            for (u_idx, _) in (0..mi * mi).enumerate() {
                let a_unit = &m_units[unit_offset[i] + u_idx];
                let a_blk = a_unit.block(i);
                let r_blk = &rho[alpha][unit_offset[i] + u_idx];
                // (aS − Sρ(a))[r,c] = Σ_w a[r,w]S[w,c] − Σ_w S[r,w]ρ[w,c]
                for r in 0..mi {
                    for c in 0..da {
                        for w in 0..mi {
                            a_mat[(row, w * da + c)] += a_blk[(r, w)];
                        }
                        for w in 0..da {
                            a_mat[(row, r * da + w)] -= r_blk[(w, c)];
                        }
                        row += 1;
                    }
                }
            }
            let ns = crate::linalg::nullspace(&a_mat, 1e-10);
            let c_ai = ns.ncols();
            mult[alpha * s_m + i] = c_ai;
            // orthonormalize w.r.t. (S,T) ↦ tr(S T*)/m_i so S̃ S̃* = δ·1
            let mut basis: Vec<CMat> = (0..c_ai)
                .map(|col| {
                    let v = ns.column(col);
                    CMat::from_fn(mi, da, |r, c| v[r * da + c])
                })
                .collect();
            for b_idx in 0..basis.len() {
                for prev in 0..b_idx {
                    let coeff = {
                        let t: C64 = (&basis[b_idx] * basis[prev].adjoint()).diagonal().iter().sum();
                        t / cr(mi as f64)
                    };
                    let sub = basis[prev].scale_complex(coeff);
                    basis[b_idx] -= sub;
                }
                let norm: f64 = {
                    let t: C64 = (&basis[b_idx] * basis[b_idx].adjoint()).diagonal().iter().sum();
                    (t.re / mi as f64).max(0.0).sqrt()
                };
                if norm < 1e-10 {
                    return Err(Error::numerical("intertwiner basis degenerated"));
                }
                basis[b_idx] = basis[b_idx].scale_complex(cr(1.0 / norm));
            }
            per_i.push(basis);
        }
        // consistency: d_α = Σ_i c_{αi} m_i
        let total: usize = (0..s_m).map(|i| mult[alpha * s_m + i] * m_alg.block_size(i)).sum();
        if total != da {
            return Err(Error::numerical(format!(
                "representation of M on block {alpha} does not fill it ({total} of {da})"
            )));
        }
        s_tilde.push(per_i);
    }

    let x = Bimodule::from_flat_mult(m_alg.clone(), ext.n_abstract.clone(), mult)?;
    ext.x = x;
    ext.s_tilde = s_tilde;

    // γ(a) := k ⊠ L_{ι(a)}, as an intertwiner L²(M) → X̄ ⊠ X
    let xbar = ext.x.conjugate();
    let fu: Fusion = fuse(&xbar, &ext.x)?;
    let k_abs = ext.k_abstract.clone();
    let iota_map = ext.frobenius.unit_map().clone();
    let gamma_map = |v: &Vector| -> Result<Vector> {
        // v ∈ L²(M); interpret as an element, include into N, fuse with k
        let a = crate::bimodule::unhat(v)?;
        let inc = ext.to_abstract(&ext.include(&a)?)?;
        fu.fuse_vectors(&ext.vector_in_xbar(&k_abs)?, &ext.vector_in_x(&inc)?)
    };
    let unit_m = Bimodule::unit(&m_alg);
    let (gamma, gamma_res) = intertwiner_from_linear_map(&unit_m, fu.fused(), gamma_map)?;
    let _ = iota_map;

    // γ̄*: X ⊠ X̄ → L²(N), b₁ ⊠ b₂ ↦ b₁ k⁻¹ b₂, assembled by least squares
    let fub = fuse(&ext.x, &xbar)?;
    let k_inv_blocks: Vec<CMat> = ext
        .k_abstract
        .blocks()
        .iter()
        .map(crate::linalg::psd_inv)
        .collect::<Result<_>>()?;
    let k_inv = ext.n_abstract.element(k_inv_blocks)?;
    let n_units = ext.n_abstract.matrix_unit_basis();
    let coords = crate::solver::coordinate_intertwiners(fub.fused(), &Bimodule::unit(&ext.n_abstract));
    let mut rows = 0usize;
    let mut mats: Vec<CVec> = Vec::new();
    let mut target: Vec<C64> = Vec::new();
    for b1 in &n_units {
        for b2 in &n_units {
            let w = fub.fuse_vectors(&ext.vector_in_x(b1)?, &ext.vector_in_xbar(b2)?)?;
            let expect = hat(&b1.mul(&k_inv)?.mul(b2)?);
            let expect_dense = expect.to_dense();
            let mut these: Vec<CVec> = Vec::with_capacity(coords.len());
            for e in &coords {
                these.push(e.apply(&w)?.to_dense());
            }
            rows += expect_dense.len();
            for (ci, t) in these.into_iter().enumerate() {
                if mats.len() <= ci {
                    mats.push(CVec::zeros(0));
                }
                let mut old = mats[ci].iter().cloned().collect::<Vec<_>>();
                old.extend(t.iter().cloned());
                mats[ci] = CVec::from_vec(old);
            }
            target.extend(expect_dense.iter().cloned());
        }
    }
    let mut a_mat = CMat::zeros(rows, coords.len());
    for (ci, col) in mats.iter().enumerate() {
        for r in 0..rows {
            a_mat[(r, ci)] = col[r];
        }
    }
    let coef = lstsq(&a_mat, &CMat::from_column_slice(rows, 1, &target));
    let mut gbar_adj = Intertwiner::zero(fub.fused(), &Bimodule::unit(&ext.n_abstract))?;
    for (ci, e) in coords.iter().enumerate() {
        gbar_adj = gbar_adj.add(&e.scale(coef[(ci, 0)]))?;
    }
    let resid = op_norm(&(&a_mat * &coef - CMat::from_column_slice(rows, 1, &target)));
    let gammabar = gbar_adj.adjoint();

    let sol = DualitySolution::new(ext.x.clone(), gamma, gammabar)?;
    let (r1, r2) = crate::duality::check_conjugate_equations(&sol)?;
    ext.solution_residual = (r1.max(gamma_res), r2.max(resid));
    if r1.max(r2) > 1e-6 {
        return Err(Error::numerical(format!(
            "canonical solution of the extension fails the conjugate equations ({r1:.2e}, {r2:.2e})"
        )));
    }
    ext.solution = sol;
    Ok(())
}
