//! Conjugate equations, connectedness, standard solutions and dimension.
//!
//! A solution for X ∈ hom(M,N) with conjugate X̄ is a pair of intertwiners
//! γ: L²(M) → X̄ ⊠ X and γ̄: L²(N) → X ⊠ X̄ satisfying the two zig-zag
//! identities. Standard solutions minimize ‖γ‖·‖γ̄‖ per connected component;
//! in skeletal normal form they have closed form: the multiplicity-diagonal
//! family with weights sqrt(w_j / v_i) from the top singular pair of the
//! multiplicity matrix restricted to the component. An independent convex
//! descent over per-summand log-weights double-checks the optimal value.

use crate::bimodule::{Bimodule, Intertwiner};
use crate::error::{Error, Result};
use crate::fusion::{associator, fuse, fuse_morphisms};
use crate::linalg::{cr, CMat};

/// A solution of the conjugate equations for (X, X̄).
#[derive(Debug, Clone)]
pub struct DualitySolution {
    x: Bimodule,
    xbar: Bimodule,
    gamma: Intertwiner,
    gammabar: Intertwiner,
}

impl DualitySolution {
    pub fn new(x: Bimodule, gamma: Intertwiner, gammabar: Intertwiner) -> Result<Self> {
        let xbar = x.conjugate();
        let xbx = fuse(&xbar, &x)?.fused().clone();
        let xxb = fuse(&x, &xbar)?.fused().clone();
        if !gamma.dom().same_shape(&Bimodule::unit(x.source())) || !gamma.cod().same_shape(&xbx) {
            return Err(Error::structural("gamma must map L²(M) → X̄ ⊠ X"));
        }
        if !gammabar.dom().same_shape(&Bimodule::unit(x.target())) || !gammabar.cod().same_shape(&xxb)
        {
            return Err(Error::structural("gammabar must map L²(N) → X ⊠ X̄"));
        }
        Ok(DualitySolution { x, xbar, gamma, gammabar })
    }

    pub fn x(&self) -> &Bimodule {
        &self.x
    }

    pub fn xbar(&self) -> &Bimodule {
        &self.xbar
    }

    pub fn gamma(&self) -> &Intertwiner {
        &self.gamma
    }

    pub fn gammabar(&self) -> &Intertwiner {
        &self.gammabar
    }

    /// ‖γ‖² = ‖γ*γ‖.
    pub fn gamma_norm_sq(&self) -> f64 {
        self.gamma.adjoint().compose(&self.gamma).unwrap().op_norm()
    }

    pub fn gammabar_norm_sq(&self) -> f64 {
        self.gammabar.adjoint().compose(&self.gammabar).unwrap().op_norm()
    }

    /// Gauge action: ((t ⊠ 1)γ, (1 ⊠ (t⁻¹)*)γ̄) for invertible t: X̄ → X̄.
    pub fn gauge(&self, t: &Intertwiner) -> Result<DualitySolution> {
        let tinv = t.inverse()?;
        let g = fuse_morphisms(t, &Intertwiner::identity(&self.x))?.compose(&self.gamma)?;
        let gb = fuse_morphisms(&Intertwiner::identity(&self.x), &tinv.adjoint())?
            .compose(&self.gammabar)?;
        DualitySolution::new(self.x.clone(), g, gb)
    }
}

/// Residuals (r₁, r₂) of the two zig-zag identities, in operator norm.
pub fn check_conjugate_equations(sol: &DualitySolution) -> Result<(f64, f64)> {
    let x = &sol.x;
    let xb = &sol.xbar;
    let id_x = Intertwiner::identity(x);
    let id_xb = Intertwiner::identity(xb);

    // (γ̄* ⊠ 1_X) ∘ assoc⁻¹ ∘ (1_X ⊠ γ) = 1_X
    let t1 = fuse_morphisms(&sol.gammabar.adjoint(), &id_x)?
        .compose(&associator(x, xb, x)?.adjoint())?
        .compose(&fuse_morphisms(&id_x, &sol.gamma)?)?;
    let r1 = t1.dist_to_identity()?;

    // (1_X̄ ⊠ γ̄*) ∘ assoc ∘ (γ ⊠ 1_X̄) = 1_X̄
    let t2 = fuse_morphisms(&id_xb, &sol.gammabar.adjoint())?
        .compose(&associator(xb, x, xb)?)?
        .compose(&fuse_morphisms(&sol.gamma, &id_xb)?)?;
    let r2 = t2.dist_to_identity()?;
    Ok((r1, r2))
}

/// Helper: skeletal solution with multiplicity-diagonal weights c_{ji}
/// (and conjugate weights 1/c_{ji}), covering both the basis solution and
/// every standard solution.
fn diagonal_solution(x: &Bimodule, weight: impl Fn(usize, usize) -> f64) -> Result<DualitySolution> {
    let xbar = x.conjugate();
    let fu_bx = fuse(&xbar, x)?;
    let fu_xb = fuse(x, &xbar)?;
    let m_alg = x.source();
    let n_alg = x.target();

    let mut gamma = Intertwiner::zero(&Bimodule::unit(m_alg), fu_bx.fused())?;
    for i in 0..x.cols() {
        for j in 0..x.rows() {
            let k = x.mult(j, i);
            if k == 0 {
                continue;
            }
            let w = weight(j, i);
            for a in 0..k {
                let row = fu_bx.mult_index(i, i, j, a, a);
                gamma.block_mut(i, i)[(row, 0)] = cr(w);
            }
        }
    }

    let mut gammabar = Intertwiner::zero(&Bimodule::unit(n_alg), fu_xb.fused())?;
    for j in 0..x.rows() {
        for i in 0..x.cols() {
            let k = x.mult(j, i);
            if k == 0 {
                continue;
            }
            let w = 1.0 / weight(j, i);
            for a in 0..k {
                let row = fu_xb.mult_index(j, j, i, a, a);
                gammabar.block_mut(j, j)[(row, 0)] = cr(w);
            }
        }
    }
    DualitySolution::new(x.clone(), gamma, gammabar)
}

/// Solution of the conjugate equations built from a left and a right basis
/// (γ(a) = Σ ξ̄_t ⊠ ξ_t a, γ̄(b) = Σ (b β_t) ⊠ β̄_t). For the canonical
/// slice bases this reduces to the diagonal weights sqrt(m_i / n_j).
pub fn solution_from_bases(x: &Bimodule) -> Result<DualitySolution> {
    if x.is_zero() {
        return Err(Error::precondition("no dual for zero 1-morphism"));
    }
    let m_alg = x.source().clone();
    let n_alg = x.target().clone();
    diagonal_solution(x, |j, i| {
        (m_alg.block_size(i) as f64 / n_alg.block_size(j) as f64).sqrt()
    })
}

/// Connected components of the support graph of mult(X): rows and columns
/// are vertices, nonzero entries are edges. Returns, per component, the
/// supported sub-bimodule together with its embedding isometry.
pub fn connected_components(x: &Bimodule) -> Vec<(Bimodule, Intertwiner)> {
    let comps = support_components(x);
    comps
        .iter()
        .map(|entries| {
            let mut mult = vec![0usize; x.rows() * x.cols()];
            for &(j, i) in entries {
                mult[j * x.cols() + i] = x.mult(j, i);
            }
            let sub =
                Bimodule::from_flat_mult(x.source().clone(), x.target().clone(), mult).unwrap();
            let mut iso = Intertwiner::zero(&sub, x).unwrap();
            for &(j, i) in entries {
                let k = x.mult(j, i);
                let mut m = CMat::zeros(k, k);
                for a in 0..k {
                    m[(a, a)] = cr(1.0);
                }
                *iso.block_mut(j, i) = m;
            }
            (sub, iso)
        })
        .collect()
}

pub fn is_connected(x: &Bimodule) -> bool {
    !x.is_zero() && support_components(x).len() == 1
}

/// Entry sets of the support components (union-find over rows and columns).
pub fn support_components(x: &Bimodule) -> Vec<Vec<(usize, usize)>> {
    let rows = x.rows();
    let cols = x.cols();
    let mut parent: Vec<usize> = (0..rows + cols).collect();
    fn find(parent: &mut Vec<usize>, a: usize) -> usize {
        let mut a = a;
        while parent[a] != a {
            parent[a] = parent[parent[a]];
            a = parent[a];
        }
        a
    }
    for j in 0..rows {
        for i in 0..cols {
            if x.mult(j, i) > 0 {
                let (ra, rb) = (find(&mut parent, j), find(&mut parent, rows + i));
                parent[ra] = rb;
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<(usize, usize)>> = Default::default();
    for j in 0..rows {
        for i in 0..cols {
            if x.mult(j, i) > 0 {
                let r = find(&mut parent, j);
                groups.entry(r).or_default().push((j, i));
            }
        }
    }
    groups.into_values().collect()
}

/// Matrix and scalar dimension of a bimodule.
#[derive(Debug, Clone)]
pub struct DimensionData {
    pub matrix_dim: Vec<Vec<f64>>,
    pub scalar_dim: f64,
    /// Per-component scalar dimensions (spectral norm of the component's
    /// multiplicity submatrix); scalar_dim is their maximum.
    pub component_dims: Vec<f64>,
}

/// D(X) = mult(X); d_X = max over connected components of the spectral norm.
pub fn dimension(x: &Bimodule) -> DimensionData {
    let matrix_dim = x
        .mult_rows()
        .iter()
        .map(|r| r.iter().map(|&k| k as f64).collect())
        .collect();
    let comps = support_components(x);
    let component_dims: Vec<f64> = comps.iter().map(|c| component_norm(x, c)).collect();
    let scalar_dim = component_dims.iter().cloned().fold(0.0, f64::max);
    DimensionData { matrix_dim, scalar_dim, component_dims }
}

fn component_norm(x: &Bimodule, entries: &[(usize, usize)]) -> f64 {
    let mut m = nalgebra::DMatrix::<f64>::zeros(x.rows(), x.cols());
    for &(j, i) in entries {
        m[(j, i)] = x.mult(j, i) as f64;
    }
    let (sigma, _, _) = crate::linalg::real::top_singular_triple(&m);
    sigma
}

/// The canonical standard solution: per component, weights sqrt(w_j / v_i)
/// from the top singular pair (k v = d w, kᵀ w = d v) of the component's
/// multiplicity submatrix.
pub fn canonical_standard_solution(x: &Bimodule) -> Result<DualitySolution> {
    if x.is_zero() {
        return Err(Error::precondition("no dual for zero 1-morphism"));
    }
    let comps = support_components(x);
    let mut weights = vec![vec![1.0; x.cols()]; x.rows()];
    for entries in &comps {
        let mut m = nalgebra::DMatrix::<f64>::zeros(x.rows(), x.cols());
        for &(j, i) in entries {
            m[(j, i)] = x.mult(j, i) as f64;
        }
        let (_, u, v) = crate::linalg::real::top_singular_triple(&m);
        for &(j, i) in entries {
            // u is supported on the component's rows, v on its columns;
            // connectedness of the component makes the entries positive.
            weights[j][i] = (u[j] / v[i]).sqrt();
        }
    }
    diagonal_solution(x, |j, i| weights[j][i])
}

/// The comparison gauge t: X̄ → X̄ with (t ⊠ 1_X) ω = γ_to, computed as
/// (1_X̄ ⊠ ω̄*) ∘ assoc ∘ (γ_to ⊠ 1_X̄).
pub fn gauge_between(from: &DualitySolution, to: &DualitySolution) -> Result<Intertwiner> {
    if !from.x.same_shape(&to.x) {
        return Err(Error::structural("solutions are for different bimodules"));
    }
    let x = &from.x;
    let xb = &from.xbar;
    fuse_morphisms(&Intertwiner::identity(xb), &from.gammabar.adjoint())?
        .compose(&associator(xb, x, xb)?)?
        .compose(&fuse_morphisms(&to.gamma, &Intertwiner::identity(xb))?)
}

/// Result of standardization.
#[derive(Debug, Clone)]
pub struct Standardized {
    pub solution: DualitySolution,
    /// The invertible gauge t with (t ⊠ 1) ω = γ_std, (1 ⊠ (t⁻¹)*) ω̄ = γ̄_std.
    pub gauge: Intertwiner,
    /// Residual of the transported pair against the returned solution.
    pub transport_residual: f64,
}

/// Standardize a solution: returns the standard solution in the gauge orbit
/// of the input together with the gauge that maps the input onto it.
pub fn standardize(sol: &DualitySolution, tol: f64) -> Result<Standardized> {
    let (r1, r2) = check_conjugate_equations(sol)?;
    if r1 > tol.max(1e-6) || r2 > tol.max(1e-6) {
        return Err(Error::precondition(format!(
            "standardize needs a solution of the conjugate equations (residuals {r1:.3e}, {r2:.3e})"
        )));
    }
    let std_sol = canonical_standard_solution(&sol.x)?;
    let t = gauge_between(sol, &std_sol)?;
    let transported = sol.gauge(&t)?;
    let res_g = transported.gamma.distance(&std_sol.gamma)?;
    let res_gb = transported.gammabar.distance(&std_sol.gammabar)?;
    Ok(Standardized { solution: std_sol, gauge: t, transport_residual: res_g.max(res_gb) })
}

/// Rescale a solution per connected component so that γ̄*γ̄ = 1 exactly
/// (the normalization with full target support). Errors if some target
/// block is not supported or γ̄*γ̄ is not scalar per component.
pub fn normalize_solution(sol: &DualitySolution, tol: f64) -> Result<DualitySolution> {
    let x = &sol.x;
    let comps = support_components(x);
    let gbg = sol.gammabar.adjoint().compose(&sol.gammabar)?;
    // component of each row / column
    let mut row_comp = vec![usize::MAX; x.rows()];
    let mut col_comp = vec![usize::MAX; x.cols()];
    for (c, entries) in comps.iter().enumerate() {
        for &(j, i) in entries {
            row_comp[j] = c;
            col_comp[i] = c;
        }
    }
    if row_comp.iter().any(|&c| c == usize::MAX) {
        return Err(Error::precondition(
            "normalization needs every target block supported (f_j ⊠ X ≠ 0)",
        ));
    }
    let mut comp_scale = vec![f64::NAN; comps.len()];
    for j in 0..x.rows() {
        let v = gbg.block(j, j)[(0, 0)];
        if v.im.abs() > tol || v.re <= 0.0 {
            return Err(Error::numerical("γ̄*γ̄ is not positive scalar on a unit block"));
        }
        let c = row_comp[j];
        if comp_scale[c].is_nan() {
            comp_scale[c] = v.re;
        } else if (comp_scale[c] - v.re).abs() > tol * comp_scale[c].max(1.0) {
            return Err(Error::numerical(
                "γ̄*γ̄ is not constant across the rows of a connected component",
            ));
        }
    }
    let mut gamma = sol.gamma.clone();
    for i in 0..x.cols() {
        if col_comp[i] == usize::MAX {
            continue;
        }
        let s = cr(comp_scale[col_comp[i]].sqrt());
        let b = gamma.block_mut(i, i);
        *b = b.map(|z| z * s);
    }
    let mut gammabar = sol.gammabar.clone();
    for j in 0..x.rows() {
        let s = cr(1.0 / comp_scale[row_comp[j]].sqrt());
        let b = gammabar.block_mut(j, j);
        *b = b.map(|z| z * s);
    }
    DualitySolution::new(x.clone(), gamma, gammabar)
}

/// Independent variational oracle: minimize the product of the two
/// largest-eigenvalue functionals over per-summand log-weights by
/// (sub)gradient descent, per connected component. Returns the per-component
/// minima of ‖γ‖²‖γ̄‖² (i.e. d² at the optimum) found from the given start.
pub fn descent_oracle(x: &Bimodule, seed: u64, iters: usize) -> Vec<f64> {
    use rand::Rng;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let comps = support_components(x);
    let mut out = Vec::new();
    for entries in &comps {
        // summands: one weight per (j, i, copy)
        let mut summands = Vec::new();
        for &(j, i) in entries {
            for _ in 0..x.mult(j, i) {
                summands.push((j, i));
            }
        }
        let n = summands.len();
        let mut logw: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
        let f = |lw: &[f64]| -> (f64, usize, usize) {
            let mut a = std::collections::BTreeMap::<usize, f64>::new();
            let mut b = std::collections::BTreeMap::<usize, f64>::new();
            for (t, &(j, i)) in summands.iter().enumerate() {
                *a.entry(i).or_insert(0.0) += (2.0 * lw[t]).exp();
                *b.entry(j).or_insert(0.0) += (-2.0 * lw[t]).exp();
            }
            let (i_star, a_max) = a.iter().fold((0, 0.0), |acc, (&k, &v)| if v > acc.1 { (k, v) } else { acc });
            let (j_star, b_max) = b.iter().fold((0, 0.0), |acc, (&k, &v)| if v > acc.1 { (k, v) } else { acc });
            (a_max * b_max, i_star, j_star)
        };
        let mut best = f(&logw).0;
        let mut step = 0.25;
        for it in 0..iters {
            let (val, i_star, j_star) = f(&logw);
            if val < best {
                best = val;
            }
            // subgradient of log F at the active maxima
            let mut grad = vec![0.0; n];
            let mut a_sum = 0.0;
            let mut b_sum = 0.0;
            for (t, &(j, i)) in summands.iter().enumerate() {
                if i == i_star {
                    a_sum += (2.0 * logw[t]).exp();
                }
                if j == j_star {
                    b_sum += (-2.0 * logw[t]).exp();
                }
            }
            for (t, &(j, i)) in summands.iter().enumerate() {
                if i == i_star {
                    grad[t] += 2.0 * (2.0 * logw[t]).exp() / a_sum;
                }
                if j == j_star {
                    grad[t] -= 2.0 * (-2.0 * logw[t]).exp() / b_sum;
                }
            }
            for t in 0..n {
                logw[t] -= step * grad[t];
            }
            if it % 50 == 49 {
                step *= 0.7;
            }
        }
        out.push(best.min(f(&logw).0));
    }
    out
}

/// Build an arbitrary (generally non-standard) solution by applying a random
/// invertible gauge to the canonical standard solution.
pub fn random_solution(x: &Bimodule, rng: &mut impl rand::Rng) -> Result<DualitySolution> {
    let std_sol = canonical_standard_solution(x)?;
    let xb = x.conjugate();
    let mut t = Intertwiner::identity(&xb);
    for j in 0..xb.rows() {
        for i in 0..xb.cols() {
            let k = xb.mult(j, i);
            if k > 0 {
                *t.block_mut(j, i) = crate::linalg::random_invertible(rng, k);
            }
        }
    }
    std_sol.gauge(&t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::TracialAlgebra;
    use crate::bimodule::{act_right, hat, m_valued_inner, n_valued_inner, unhat};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn unit_bimodule_has_trivial_solution() {
        let m = TracialAlgebra::new(vec![2, 1]).unwrap();
        let u = Bimodule::unit(&m);
        let sol = solution_from_bases(&u).unwrap();
        let (r1, r2) = check_conjugate_equations(&sol).unwrap();
        assert!(r1 < 1e-12 && r2 < 1e-12);
    }

    #[test]
    fn basis_solution_passes_conjugate_equations() {
        let m = TracialAlgebra::new(vec![2, 1]).unwrap();
        let n = TracialAlgebra::new(vec![1, 3]).unwrap();
        let x = Bimodule::new(m, n, vec![vec![1, 1], vec![2, 0]]).unwrap();
        let sol = solution_from_bases(&x).unwrap();
        let (r1, r2) = check_conjugate_equations(&sol).unwrap();
        assert!(r1 < 1e-10 && r2 < 1e-10, "r1 {r1} r2 {r2}");
    }

    #[test]
    fn basis_solution_matches_brute_force_summation() {
        // Oracle: literal Eq-style summation of ξ̄_t ⊠ (ξ_t a) over the
        // canonical left basis, compared entry-wise with the closed form.
        let m = TracialAlgebra::new(vec![2, 1]).unwrap();
        let n = TracialAlgebra::new(vec![3]).unwrap();
        let x = Bimodule::new(m.clone(), n.clone(), vec![vec![2, 1]]).unwrap();
        let sol = solution_from_bases(&x).unwrap();
        let fu = fuse(&x.conjugate(), &x).unwrap();
        for a in m.matrix_unit_basis() {
            let mut acc = fu.fused().zero_vector();
            for xi in x.left_basis() {
                let term = fu
                    .fuse_vectors(&xi.conjugate(), &act_right(&xi, &a).unwrap())
                    .unwrap();
                acc = acc.add(&term).unwrap();
            }
            let lhs = sol.gamma.apply(&hat(&a)).unwrap();
            assert!(lhs.add(&acc.scale(cr(-1.0))).unwrap().norm() < 1e-11);
        }
        // γ̄ against the right-basis summation
        let fub = fuse(&x, &x.conjugate()).unwrap();
        for b in n.matrix_unit_basis() {
            let mut acc = fub.fused().zero_vector();
            for beta in x.right_basis() {
                let term = fub
                    .fuse_vectors(
                        &crate::bimodule::act_left(&b, &beta).unwrap(),
                        &beta.conjugate(),
                    )
                    .unwrap();
                acc = acc.add(&term).unwrap();
            }
            let lhs = sol.gammabar.apply(&hat(&b)).unwrap();
            assert!(lhs.add(&acc.scale(cr(-1.0))).unwrap().norm() < 1e-11);
        }
    }

    #[test]
    fn basis_solution_adjoint_identities() {
        // γ*(ξ̄ ⊠ β) = ⟨ξ,β⟩_M and γ̄*(β ⊠ ξ̄) = _N⟨β,ξ⟩
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = TracialAlgebra::new(vec![2]).unwrap();
        let n = TracialAlgebra::new(vec![1, 2]).unwrap();
        let x = Bimodule::new(m.clone(), n.clone(), vec![vec![1], vec![1]]).unwrap();
        let sol = solution_from_bases(&x).unwrap();
        let fu = fuse(&x.conjugate(), &x).unwrap();
        let fub = fuse(&x, &x.conjugate()).unwrap();
        for _ in 0..5 {
            let xi = x.random_vector(&mut rng);
            let beta = x.random_vector(&mut rng);
            let lhs = sol
                .gamma
                .adjoint()
                .apply(&fu.fuse_vectors(&xi.conjugate(), &beta).unwrap())
                .unwrap();
            let rhs = hat(&m_valued_inner(&xi, &beta).unwrap());
            assert!(lhs.add(&rhs.scale(cr(-1.0))).unwrap().norm() < 1e-11);

            let lhs2 = sol
                .gammabar
                .adjoint()
                .apply(&fub.fuse_vectors(&beta, &xi.conjugate()).unwrap())
                .unwrap();
            let rhs2 = hat(&n_valued_inner(&beta, &xi).unwrap());
            assert!(lhs2.add(&rhs2.scale(cr(-1.0))).unwrap().norm() < 1e-11);
        }
    }

    #[test]
    fn gamma_star_gamma_for_row_vector_bimodule() {
        // X = C² as a bimodule from M₂ (right-acting source) to C:
        // the basis solution has γ*γ = 2·1 in the tracial-state convention.
        let m2 = TracialAlgebra::factor(2);
        let c = TracialAlgebra::scalars();
        let x = Bimodule::new(m2.clone(), c, vec![vec![1]]).unwrap();
        let sol = solution_from_bases(&x).unwrap();
        let (r1, r2) = check_conjugate_equations(&sol).unwrap();
        assert!(r1 < 1e-12 && r2 < 1e-12);
        let gg = sol.gamma.adjoint().compose(&sol.gamma).unwrap();
        let el = unhat(&gg.apply(&hat(&m2.identity_element())).unwrap()).unwrap();
        let diff = el
            .add(&m2.identity_element().scale(cr(-2.0)))
            .unwrap()
            .op_norm();
        assert!(diff < 1e-12, "γ*γ should be 2·1, off by {diff}");
    }

    #[test]
    fn corrupting_gamma_is_detected() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = TracialAlgebra::new(vec![2]).unwrap();
        let n = TracialAlgebra::new(vec![2]).unwrap();
        let x = Bimodule::new(m, n, vec![vec![2]]).unwrap();
        let sol = solution_from_bases(&x).unwrap();
        let mut bad_gamma = sol.gamma.clone();
        for j in 0..1 {
            let b = bad_gamma.block_mut(j, j);
            *b = b.map(|z| {
                z * cr(1.1)
                    + crate::linalg::c(0.1 * rng.random::<f64>(), 0.1 * rng.random::<f64>())
            });
        }
        let bad = DualitySolution::new(x, bad_gamma, sol.gammabar.clone()).unwrap();
        let (r1, r2) = check_conjugate_equations(&bad).unwrap();
        assert!(r1.max(r2) > 1e-3);
    }

    #[test]
    fn connectivity_examples() {
        let c = TracialAlgebra::scalars();
        let c2 = TracialAlgebra::new(vec![1, 1]).unwrap();
        let x = Bimodule::new(c2.clone(), c.clone(), vec![vec![1, 1]]).unwrap();
        assert!(is_connected(&x));
        let y = Bimodule::new(c2.clone(), c2.clone(), vec![vec![1, 0], vec![0, 1]]).unwrap();
        assert!(!is_connected(&y));
        let comps = connected_components(&y);
        assert_eq!(comps.len(), 2);
        for (sub, iso) in &comps {
            assert!(iso.adjoint().compose(iso).unwrap().dist_to_identity().unwrap() < 1e-15);
            assert_eq!(sub.mult_rows().iter().flatten().sum::<usize>(), 1);
        }
    }

    #[test]
    fn connectivity_matches_union_find_oracle_on_random_sparse() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..30 {
            let rows = rng.random_range(1..4usize);
            let cols = rng.random_range(1..4usize);
            let m = TracialAlgebra::new(vec![1; cols]).unwrap();
            let n = TracialAlgebra::new(vec![1; rows]).unwrap();
            let mult: Vec<Vec<usize>> = (0..rows)
                .map(|_| (0..cols).map(|_| usize::from(rng.random::<f64>() < 0.4)).collect())
                .collect();
            let x = Bimodule::new(m, n, mult.clone()).unwrap();
            // brute-force reachability oracle on the bipartite graph
            let mut edges = vec![];
            for (j, row) in mult.iter().enumerate() {
                for (i, &k) in row.iter().enumerate() {
                    if k > 0 {
                        edges.push((j, rows + i));
                    }
                }
            }
            let mut labels: Vec<usize> = (0..rows + cols).collect();
            loop {
                let mut changed = false;
                for &(a, b) in &edges {
                    let m = labels[a].min(labels[b]);
                    if labels[a] != m || labels[b] != m {
                        labels[a] = m;
                        labels[b] = m;
                        changed = true;
                    }
                }
                if !changed {
                    break;
                }
            }
            let mut classes: std::collections::BTreeSet<usize> = Default::default();
            for (j, row) in mult.iter().enumerate() {
                for (i, &k) in row.iter().enumerate() {
                    if k > 0 {
                        let _ = i;
                        classes.insert(labels[j]);
                    }
                }
            }
            assert_eq!(support_components(&x).len(), classes.len());
        }
    }

    #[test]
    fn standard_solution_of_column_bimodule_has_dimension_sqrt2() {
        // X with mult [[1],[1]] over M = C, N = C ⊕ C: d_X = √2.
        let c = TracialAlgebra::scalars();
        let c2 = TracialAlgebra::new(vec![1, 1]).unwrap();
        let x = Bimodule::new(c, c2, vec![vec![1], vec![1]]).unwrap();
        let d = dimension(&x);
        assert!((d.scalar_dim - 2f64.sqrt()).abs() < 1e-12);
        let sol = canonical_standard_solution(&x).unwrap();
        let (r1, r2) = check_conjugate_equations(&sol).unwrap();
        assert!(r1 < 1e-12 && r2 < 1e-12);
        assert!((sol.gamma_norm_sq() - 2f64.sqrt()).abs() < 1e-12);
        assert!((sol.gammabar_norm_sq() - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn dimension_of_unit_is_one() {
        let m = TracialAlgebra::new(vec![2, 3]).unwrap();
        let d = dimension(&Bimodule::unit(&m));
        assert_eq!(d.scalar_dim, 1.0);
        assert_eq!(d.matrix_dim, vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
    }

    #[test]
    fn standardize_is_idempotent_up_to_unitary() {
        let m = TracialAlgebra::new(vec![2, 1]).unwrap();
        let n = TracialAlgebra::new(vec![2]).unwrap();
        let x = Bimodule::new(m, n, vec![vec![1, 2]]).unwrap();
        let std1 = canonical_standard_solution(&x).unwrap();
        let out = standardize(&std1, 1e-9).unwrap();
        assert!(out.transport_residual < 1e-10);
        assert!((out.solution.gamma_norm_sq() - std1.gamma_norm_sq()).abs() < 1e-10);
        // gauge is unitary in this case
        let t = &out.gauge;
        assert!(t.adjoint().compose(t).unwrap().dist_to_identity().unwrap() < 1e-10);
    }

    #[test]
    fn standardize_reaches_the_variational_minimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let m = TracialAlgebra::new(vec![1, 2]).unwrap();
        let n = TracialAlgebra::new(vec![2]).unwrap();
        let x = Bimodule::new(m, n, vec![vec![2, 1]]).unwrap();
        let sol = random_solution(&x, &mut rng).unwrap();
        let (r1, r2) = check_conjugate_equations(&sol).unwrap();
        assert!(r1 < 1e-9 && r2 < 1e-9);
        let out = standardize(&sol, 1e-9).unwrap();
        assert!(out.transport_residual < 1e-8, "residual {}", out.transport_residual);
        let d = dimension(&x).scalar_dim;
        assert!((out.solution.gamma_norm_sq() - d).abs() < 1e-9);
        assert!((out.solution.gammabar_norm_sq() - d).abs() < 1e-9);
        // the input solution's norm product dominates d
        assert!(sol.gamma_norm_sq().sqrt() * sol.gammabar_norm_sq().sqrt() >= d - 1e-9);
    }

    #[test]
    fn uniqueness_up_to_unitary_gauge() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let m = TracialAlgebra::new(vec![2]).unwrap();
        let n = TracialAlgebra::new(vec![1, 1]).unwrap();
        let x = Bimodule::new(m, n, vec![vec![1], vec![2]]).unwrap();
        let s1 = standardize(&random_solution(&x, &mut rng).unwrap(), 1e-9).unwrap();
        let s2 = standardize(&random_solution(&x, &mut rng).unwrap(), 1e-9).unwrap();
        let u = gauge_between(&s1.solution, &s2.solution).unwrap();
        assert!(u.adjoint().compose(&u).unwrap().dist_to_identity().unwrap() < 1e-9);
        let moved = s1.solution.gauge(&u).unwrap();
        assert!(moved.gamma.distance(&s2.solution.gamma).unwrap() < 1e-9);
    }

    #[test]
    fn descent_oracle_agrees_with_spectral_norm() {
        let m = TracialAlgebra::new(vec![1, 2]).unwrap();
        let n = TracialAlgebra::new(vec![2, 1]).unwrap();
        let x = Bimodule::new(m, n, vec![vec![2, 1], vec![1, 1]]).unwrap();
        let d = dimension(&x).scalar_dim;
        let mins = descent_oracle(&x, 11, 2500);
        assert_eq!(mins.len(), 1);
        assert!((mins[0] - d * d).abs() < 1e-5 * d * d, "oracle {} vs d² {}", mins[0], d * d);
    }

    #[test]
    fn normalized_solution_has_unital_gammabar() {
        let c = TracialAlgebra::scalars();
        let c2 = TracialAlgebra::new(vec![1, 1]).unwrap();
        let x = Bimodule::new(c, c2, vec![vec![1], vec![1]]).unwrap();
        let sol = canonical_standard_solution(&x).unwrap();
        let norm = normalize_solution(&sol, 1e-10).unwrap();
        let gbg = norm.gammabar.adjoint().compose(&norm.gammabar).unwrap();
        assert!(gbg.dist_to_identity().unwrap() < 1e-9);
        let (r1, r2) = check_conjugate_equations(&norm).unwrap();
        assert!(r1 < 1e-10 && r2 < 1e-10);
    }

    #[test]
    fn standard_solution_of_direct_sum_restricts_to_summands() {
        // disconnected X: the standard solution restricted to a component's
        // blocks equals that component's standard solution
        let c2 = TracialAlgebra::new(vec![1, 1]).unwrap();
        let c2b = TracialAlgebra::new(vec![2, 1]).unwrap();
        let x = Bimodule::new(c2.clone(), c2b.clone(), vec![vec![2, 0], vec![0, 1]]).unwrap();
        let whole = canonical_standard_solution(&x).unwrap();
        for (sub, iso) in connected_components(&x) {
            let part = canonical_standard_solution(&sub).unwrap();
            // restrict γ of the whole by compressing with the embedding on
            // both conjugate legs: (ῑ* ⊠ ι*) γ_whole restricted to the
            // component equals γ_part
            let emb = fuse_morphisms(&iso.conjugate(), &iso).unwrap();
            let restricted = emb.adjoint().compose(whole.gamma()).unwrap();
            // compare on the sub-bimodule's support: same gauge by
            // construction, so equality holds entrywise
            let diff = restricted.distance(part.gamma()).unwrap();
            assert!(diff < 1e-12, "component restriction differs by {diff}");
        }
    }

    #[test]
    fn zero_bimodule_has_no_dual() {
        let c = TracialAlgebra::scalars();
        let z = Bimodule::zero(c.clone(), c);
        assert!(solution_from_bases(&z).is_err());
        assert_eq!(dimension(&z).scalar_dim, 0.0);
    }
}
