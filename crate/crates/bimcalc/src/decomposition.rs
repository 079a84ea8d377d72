//! Decomposition of finitely presented bicategories and the assembled
//! realization Φ.
//!
//! A presentation lists tracial algebras as objects and generating bimodules
//! per ordered pair. Presentations are closed under conjugates and fusion up
//! to a configurable depth before any audit runs; morphisms are tracked at
//! the level of their multiplicity matrices (the skeletal isomorphism
//! classes). The pipeline: unit summands and their equivalence relation,
//! a normalized connected generator per object, the Θ bifunctor into special
//! bimodules over the base corner, extension algebras as realization
//! targets, and hom-dimension tables certifying local full faithfulness.

use crate::algebra::TracialAlgebra;
use crate::bimodule::{Bimodule, Intertwiner};
use crate::duality::{self, DualitySolution};
use crate::error::{Error, Result};
use crate::frobenius::FrobeniusAlgebra;
use crate::fusion::{fuse, fuse_morphisms, rebracket, FuseTree};
use crate::linalg::cr;
use crate::modules::{
    bimodule_map_space, p_projection, rel_tensor, rel_tensor_morphisms, AlgBimodule,
    RelativeProduct,
};
use crate::realization::{extension_algebra, Extension, RealizationConfig};
use std::collections::BTreeSet;

/// A finitely presented bicategory: objects and generating 1-morphisms.
#[derive(Debug, Clone)]
pub struct BicategoryPresentation {
    objects: Vec<TracialAlgebra>,
    /// generators[target][source]
    generators: Vec<Vec<Vec<Bimodule>>>,
}

impl BicategoryPresentation {
    pub fn new(objects: Vec<TracialAlgebra>) -> Self {
        let n = objects.len();
        BicategoryPresentation {
            objects,
            generators: vec![vec![vec![]; n]; n],
        }
    }

    pub fn add_generator(&mut self, source: usize, target: usize, x: Bimodule) -> Result<()> {
        if source >= self.objects.len() || target >= self.objects.len() {
            return Err(Error::structural("object index out of range"));
        }
        if !x.source().same_structure(&self.objects[source])
            || !x.target().same_structure(&self.objects[target])
        {
            return Err(Error::structural("generator does not match its hom pair"));
        }
        self.generators[target][source].push(x);
        Ok(())
    }

    pub fn objects(&self) -> &[TracialAlgebra] {
        &self.objects
    }

    /// Close under units, conjugates and fusion up to `depth` factors.
    pub fn closure(&self, depth: usize) -> GeneratedHoms {
        let n = self.objects.len();
        let mut seen: Vec<Vec<BTreeSet<Vec<usize>>>> = vec![vec![BTreeSet::new(); n]; n];
        let mut homs: Vec<Vec<Vec<Bimodule>>> = vec![vec![vec![]; n]; n];
        let push = |homs: &mut Vec<Vec<Vec<Bimodule>>>,
                        seen: &mut Vec<Vec<BTreeSet<Vec<usize>>>>,
                        t: usize,
                        s: usize,
                        x: Bimodule| {
            if x.is_zero() {
                return;
            }
            let key: Vec<usize> = x.mult_rows().into_iter().flatten().collect();
            if seen[t][s].insert(key) {
                homs[t][s].push(x);
            }
        };
        // units
        for (o, alg) in self.objects.iter().enumerate() {
            push(&mut homs, &mut seen, o, o, Bimodule::unit(alg));
        }
        // generators and conjugates: one-step morphisms
        let mut level: Vec<(usize, usize, Bimodule)> = Vec::new();
        for t in 0..n {
            for s in 0..n {
                for g in &self.generators[t][s] {
                    level.push((t, s, g.clone()));
                    level.push((s, t, g.conjugate()));
                }
            }
        }
        let one_step = level.clone();
        for (t, s, x) in &level {
            push(&mut homs, &mut seen, *t, *s, x.clone());
        }
        // fusion words up to depth
        for _ in 2..=depth.max(1) {
            let mut next = Vec::new();
            for (t, mid, y) in &level {
                for (mid2, s, x) in &one_step {
                    if mid == mid2 {
                        if let Ok(f) = fuse(y, x) {
                            next.push((*t, *s, f.fused().clone()));
                        }
                    }
                }
            }
            for (t, s, x) in &next {
                push(&mut homs, &mut seen, *t, *s, x.clone());
            }
            level = next;
        }
        GeneratedHoms { objects: self.objects.clone(), homs }
    }
}

/// The generated 1-morphisms (as skeletal isomorphism classes) per hom pair.
pub struct GeneratedHoms {
    objects: Vec<TracialAlgebra>,
    homs: Vec<Vec<Vec<Bimodule>>>,
}

impl GeneratedHoms {
    pub fn objects(&self) -> &[TracialAlgebra] {
        &self.objects
    }

    pub fn hom(&self, source: usize, target: usize) -> &[Bimodule] {
        &self.homs[target][source]
    }
}

/// Corner supports and indecomposable components of one hom(M,M).
#[derive(Debug, Clone)]
pub struct ComponentGrid {
    /// support[i][j]: some generated morphism has a nonzero (i,j) corner
    pub support: Vec<Vec<bool>>,
    /// partition of the blocks of M into indecomposable components
    pub components: Vec<Vec<usize>>,
}

pub fn component_grid(gen: &GeneratedHoms, object: usize) -> ComponentGrid {
    let s = gen.objects[object].num_blocks();
    let mut support = vec![vec![false; s]; s];
    for x in gen.hom(object, object) {
        for i in 0..s {
            for j in 0..s {
                if x.mult(i, j) > 0 {
                    support[i][j] = true;
                }
            }
        }
    }
    // union-find over blocks
    let mut parent: Vec<usize> = (0..s).collect();
    fn find(p: &mut Vec<usize>, a: usize) -> usize {
        let mut a = a;
        while p[a] != a {
            p[a] = p[p[a]];
            a = p[a];
        }
        a
    }
    for i in 0..s {
        for j in 0..s {
            if support[i][j] {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                parent[a] = b;
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for i in 0..s {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(i);
    }
    ComponentGrid { support, components: groups.into_values().collect() }
}

/// A simple unit summand: one central projection of one object.
pub type UnitSummand = (usize, usize);

/// The equivalence relation on unit summands, with the Λ-level partition.
#[derive(Debug, Clone)]
pub struct SimPartition {
    /// classes of simple summands (object, block)
    pub classes: Vec<Vec<UnitSummand>>,
    /// Λ elements: per object, the indecomposable-component block sets
    pub lambda: Vec<(usize, Vec<usize>)>,
    /// Remark-style check: each Λ element lies in one class, and two Λ
    /// elements of the same object never share a class.
    pub lambda_consistent: bool,
}

pub fn sim_relation(gen: &GeneratedHoms) -> SimPartition {
    // global union-find over (object, block)
    let offsets: Vec<usize> = {
        let mut o = vec![0usize];
        for alg in &gen.objects {
            o.push(o.last().unwrap() + alg.num_blocks());
        }
        o
    };
    let total = *offsets.last().unwrap();
    let mut parent: Vec<usize> = (0..total).collect();
    fn find(p: &mut Vec<usize>, a: usize) -> usize {
        let mut a = a;
        while p[a] != a {
            p[a] = p[p[a]];
            a = p[a];
        }
        a
    }
    let n = gen.objects.len();
    for t in 0..n {
        for s in 0..n {
            for x in gen.hom(s, t) {
                for j in 0..x.rows() {
                    for i in 0..x.cols() {
                        if x.mult(j, i) > 0 {
                            let a = find(&mut parent, offsets[t] + j);
                            let b = find(&mut parent, offsets[s] + i);
                            parent[a] = b;
                        }
                    }
                }
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<UnitSummand>> = Default::default();
    for o in 0..n {
        for b in 0..gen.objects[o].num_blocks() {
            let r = find(&mut parent, offsets[o] + b);
            groups.entry(r).or_default().push((o, b));
        }
    }
    let classes: Vec<Vec<UnitSummand>> = groups.into_values().collect();

    let mut lambda = Vec::new();
    for o in 0..n {
        let grid = component_grid(gen, o);
        for comp in grid.components {
            lambda.push((o, comp));
        }
    }
    // consistency: a Λ element sits inside one class; two Λ elements of one
    // object sit in different classes
    let class_of = |u: UnitSummand| classes.iter().position(|c| c.contains(&u));
    let mut lambda_consistent = true;
    for (o, blocks) in &lambda {
        let cls: BTreeSet<_> = blocks.iter().map(|&b| class_of((*o, b))).collect();
        if cls.len() != 1 {
            lambda_consistent = false;
        }
    }
    for (idx, (o1, b1)) in lambda.iter().enumerate() {
        for (o2, b2) in lambda.iter().skip(idx + 1) {
            if o1 == o2 && class_of((*o1, b1[0])) == class_of((*o2, b2[0])) {
                lambda_consistent = false;
            }
        }
    }
    SimPartition { classes, lambda, lambda_consistent }
}

/// A connected generator with full target support and normalized solution.
pub struct NormalizedGenerator {
    pub x: Bimodule,
    pub sol: DualitySolution,
}

/// Lemma-style construction: corner X₀ of some generated morphism in
/// hom(M,N), connectors Y_j within hom(N,N), X = ⊕_j Y_j ⊠ X₀;
/// solution standardized and rescaled so that γ̄*γ̄ = 1.
pub fn choose_normalized_generator(
    gen: &GeneratedHoms,
    base: usize,
    target: usize,
) -> Result<NormalizedGenerator> {
    if base == target {
        let x = Bimodule::unit(&gen.objects[base]);
        let sol = duality::solution_from_bases(&x)?;
        return Ok(NormalizedGenerator { x, sol });
    }
    let candidates = gen.hom(base, target);
    let x_prime = candidates
        .iter()
        .find(|x| !x.is_zero())
        .ok_or_else(|| Error::precondition(format!("hom({base},{target}) is zero")))?;
    // first nonzero corner
    let (mut j1, mut i1, mut k0) = (0, 0, 0);
    'outer: for j in 0..x_prime.rows() {
        for i in 0..x_prime.cols() {
            if x_prime.mult(j, i) > 0 {
                j1 = j;
                i1 = i;
                k0 = x_prime.mult(j, i);
                break 'outer;
            }
        }
    }
    // connectors: for each block j of the target, a corner (j, j1) of some
    // generated endomorphism
    let s_n = gen.objects[target].num_blocks();
    let mut connector = vec![0usize; s_n];
    for j in 0..s_n {
        let found = gen
            .hom(target, target)
            .iter()
            .filter_map(|y| {
                let k = y.mult(j, j1);
                (k > 0).then_some(k)
            })
            .min();
        connector[j] = found.ok_or_else(|| {
            Error::precondition(format!(
                "hom({target},{target}) is not indecomposable: no generated morphism connects block {j} to block {j1}"
            ))
        })?;
    }
    // X = ⊕_j Y_j ⊠ X₀: supported on column i1 with entries k'_j · k0
    let mut mult = vec![vec![0usize; gen.objects[base].num_blocks()]; s_n];
    for j in 0..s_n {
        mult[j][i1] = connector[j] * k0;
    }
    let x = Bimodule::new(gen.objects[base].clone(), gen.objects[target].clone(), mult)?;
    if !duality::is_connected(&x) {
        return Err(Error::numerical("constructed generator is not connected"));
    }
    let std_sol = duality::canonical_standard_solution(&x)?;
    let sol = duality::normalize_solution(&std_sol, 1e-10)?;
    Ok(NormalizedGenerator { x, sol })
}

/// Per-object data of the Θ bifunctor.
pub struct ThetaObject {
    pub x: Bimodule,
    pub sol: DualitySolution,
    pub algebra: FrobeniusAlgebra,
}

/// The Θ bifunctor into special bimodules over the base object's corner.
pub struct Theta {
    base: usize,
    data: Vec<Option<ThetaObject>>,
}

impl Theta {
    /// Build Θ for every object reachable from the base (hom(base, N) ≠ 0).
    pub fn build(gen: &GeneratedHoms, base: usize) -> Result<Theta> {
        let mut data = Vec::with_capacity(gen.objects.len());
        for obj in 0..gen.objects.len() {
            match choose_normalized_generator(gen, base, obj) {
                Ok(ng) => {
                    let algebra = crate::frobenius::from_dual_pair(&ng.x, &ng.sol)?;
                    data.push(Some(ThetaObject { x: ng.x, sol: ng.sol, algebra }));
                }
                Err(Error::Precondition(_)) => data.push(None),
                Err(e) => return Err(e),
            }
        }
        Ok(Theta { base, data })
    }

    pub fn base(&self) -> usize {
        self.base
    }

    pub fn object(&self, obj: usize) -> Result<&ThetaObject> {
        self.data[obj]
            .as_ref()
            .ok_or_else(|| Error::precondition(format!("object {obj} is not reachable from the base")))
    }

    /// Θ on 1-morphisms: Y ∈ hom(src, tgt) ↦ (X̄_tgt ⊠ Y) ⊠ X_src as a
    /// (Θ(tgt), Θ(src))-bimodule with actions induced by γ̄*.
    pub fn morphism(&self, y: &Bimodule, src: usize, tgt: usize) -> Result<AlgBimodule> {
        let ds = self.object(src)?;
        let dt = self.object(tgt)?;
        let xbar_t = dt.x.conjugate();
        let carrier = FuseTree::left_comb(&[xbar_t.clone(), y.clone(), ds.x.clone()])?;
        let carrier_bim = carrier.bimodule()?;

        // left action of Θ(tgt): factors [X̄_t, X_t, X̄_t, Y, X_s]
        let l = {
            let from = FuseTree::node(
                FuseTree::node(FuseTree::leaf(&xbar_t), FuseTree::leaf(&dt.x)),
                carrier.clone(),
            );
            let grouped = FuseTree::node(
                FuseTree::node(
                    FuseTree::node(
                        FuseTree::leaf(&xbar_t),
                        FuseTree::node(FuseTree::leaf(&dt.x), FuseTree::leaf(&xbar_t)),
                    ),
                    FuseTree::leaf(y),
                ),
                FuseTree::leaf(&ds.x),
            );
            let w = rebracket(&from, &grouped)?;
            let collapse = fuse_morphisms(
                &fuse_morphisms(
                    &fuse_morphisms(
                        &Intertwiner::identity(&xbar_t),
                        &dt.sol.gammabar().adjoint(),
                    )?,
                    &Intertwiner::identity(y),
                )?,
                &Intertwiner::identity(&ds.x),
            )?;
            collapse.compose(&w)?
        };

        // right action of Θ(src): factors [X̄_t, Y, X_s, X̄_s, X_s]
        let r = {
            let xbar_s = ds.x.conjugate();
            let from = FuseTree::node(
                carrier.clone(),
                FuseTree::node(FuseTree::leaf(&xbar_s), FuseTree::leaf(&ds.x)),
            );
            let head = FuseTree::node(FuseTree::leaf(&xbar_t), FuseTree::leaf(y));
            let grouped = FuseTree::node(
                FuseTree::node(
                    head.clone(),
                    FuseTree::node(FuseTree::leaf(&ds.x), FuseTree::leaf(&xbar_s)),
                ),
                FuseTree::leaf(&ds.x),
            );
            let w = rebracket(&from, &grouped)?;
            let collapse = fuse_morphisms(
                &fuse_morphisms(
                    &Intertwiner::identity(&head.bimodule()?),
                    &ds.sol.gammabar().adjoint(),
                )?,
                &Intertwiner::identity(&ds.x),
            )?;
            collapse.compose(&w)?
        };

        AlgBimodule::new(dt.algebra.clone(), ds.algebra.clone(), carrier_bim, l, r)
    }

    /// Θ on 2-morphisms: t ↦ (1_{X̄_tgt} ⊠ t) ⊠ 1_{X_src}.
    pub fn two_morphism(&self, t: &Intertwiner, src: usize, tgt: usize) -> Result<Intertwiner> {
        let ds = self.object(src)?;
        let dt = self.object(tgt)?;
        let xbar_t = dt.x.conjugate();
        fuse_morphisms(
            &fuse_morphisms(&Intertwiner::identity(&xbar_t), t)?,
            &Intertwiner::identity(&ds.x),
        )
    }

    /// Composition witness: the unitary Θ(Z ⊠ Y) → Θ(Z) ⊠_{Θ(mid)} Θ(Y),
    /// together with the residual of the embedded projection formula.
    pub fn composition_witness(
        &self,
        z: &Bimodule,
        y: &Bimodule,
        src: usize,
        mid: usize,
        tgt: usize,
        tol: f64,
    ) -> Result<(Intertwiner, RelativeProduct, f64)> {
        let dm = self.object(mid)?;
        let dt = self.object(tgt)?;
        let ds = self.object(src)?;
        let zy = fuse(z, y)?.fused().clone();
        let theta_zy = self.morphism(&zy, src, tgt)?;
        let theta_z = self.morphism(z, mid, tgt)?;
        let theta_y = self.morphism(y, src, mid)?;
        let rp = rel_tensor(&theta_z, &theta_y, tol)?;

        let xbar_t = dt.x.conjugate();
        let xbar_m = dm.x.conjugate();
        // v: Θ(Z⊠Y) → Θ(Z) ⊠ Θ(Y): rebracket, insert γ̄_mid, rebracket.
        let from = FuseTree::node(
            FuseTree::node(
                FuseTree::leaf(&xbar_t),
                FuseTree::node(FuseTree::leaf(z), FuseTree::leaf(y)),
            ),
            FuseTree::leaf(&ds.x),
        );
        let pre = FuseTree::node(
            FuseTree::node(FuseTree::leaf(&xbar_t), FuseTree::leaf(z)),
            FuseTree::node(FuseTree::leaf(y), FuseTree::leaf(&ds.x)),
        );
        let w1 = rebracket(&from, &pre)?;
        let head = pre.factors();
        let head_bim = FuseTree::left_comb(&head[..2])?.bimodule()?;
        let tail_bim = {
            let t = FuseTree::node(FuseTree::leaf(y), FuseTree::leaf(&ds.x));
            t.bimodule()?
        };
        let insert = fuse_morphisms(
            &fuse_morphisms(&Intertwiner::identity(&head_bim), dm.sol.gammabar())?,
            &Intertwiner::identity(&tail_bim),
        )?;
        let post = FuseTree::node(
            FuseTree::node(
                FuseTree::node(FuseTree::leaf(&xbar_t), FuseTree::leaf(z)),
                FuseTree::node(FuseTree::leaf(&dm.x), FuseTree::leaf(&xbar_m)),
            ),
            FuseTree::node(FuseTree::leaf(y), FuseTree::leaf(&ds.x)),
        );
        let target_tree = FuseTree::node(
            FuseTree::left_comb(&[xbar_t.clone(), z.clone(), dm.x.clone()])?,
            FuseTree::left_comb(&[xbar_m.clone(), y.clone(), ds.x.clone()])?,
        );
        let w2 = rebracket(&post, &target_tree)?;
        let v = w2.compose(&insert)?.compose(&w1)?;

        // v is an isometry with range p^{Θ(mid)}
        let p = p_projection(&theta_z, &theta_y, tol)?;
        let range_residual = v
            .compose(&v.adjoint())?
            .distance(&p)?
            .max(v.adjoint().compose(&v)?.dist_to_identity()?);
        let witness = rp.s.adjoint().compose(&v)?;
        let _ = theta_zy;
        Ok((witness, rp, range_residual))
    }
}

/// Audit report for Θ over a generated presentation.
#[derive(Debug, Clone)]
pub struct ThetaAudit {
    /// (src, tgt, dim hom_B, dim hom_sBMod) per generated pair
    pub hom_dims: Vec<(usize, usize, usize, usize)>,
    pub hom_dims_match: bool,
    pub module_residual: f64,
    pub composition_residual: f64,
    pub unit_residual: f64,
    pub injectivity_ok: bool,
}

/// Run the full-faithfulness and bifunctoriality audit of Θ on the
/// generated morphisms.
pub fn theta_audit(gen: &GeneratedHoms, theta: &Theta, tol: f64) -> Result<ThetaAudit> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
    let n = gen.objects.len();
    let mut hom_dims = Vec::new();
    let mut module_residual: f64 = 0.0;
    let mut injectivity_ok = true;
    for src in 0..n {
        for tgt in 0..n {
            if theta.data[src].is_none() || theta.data[tgt].is_none() {
                continue;
            }
            let morphisms = gen.hom(src, tgt);
            let mut images: Vec<AlgBimodule> = Vec::new();
            for x in morphisms {
                let img = theta.morphism(x, src, tgt)?;
                let rep = crate::modules::verify_module(&img)?;
                module_residual = module_residual.max(
                    rep.left_assoc
                        .max(rep.right_assoc)
                        .max(rep.unit)
                        .max(rep.commute)
                        .max(rep.special_left)
                        .max(rep.special_right),
                );
                images.push(img);
            }
            for (a, x) in morphisms.iter().enumerate() {
                for (b, y) in morphisms.iter().enumerate() {
                    let before = crate::solver::hom_dim(x, y);
                    let after = bimodule_map_space(&images[a], &images[b], tol)?.len();
                    hom_dims.push((src, tgt, before, after));
                }
                // injectivity of t ↦ 1 ⊠ t ⊠ 1 on a random 2-morphism
                if crate::solver::hom_dim(x, x) > 0 {
                    let mut t = Intertwiner::zero(x, x)?;
                    for jj in 0..x.rows() {
                        for ii in 0..x.cols() {
                            let k = x.mult(jj, ii);
                            if k > 0 {
                                *t.block_mut(jj, ii) = crate::linalg::random_cmat(&mut rng, k, k);
                            }
                        }
                    }
                    let img = theta.two_morphism(&t, src, tgt)?;
                    if t.op_norm() > 1e-9 && img.op_norm() < 1e-12 {
                        injectivity_ok = false;
                    }
                }
            }
        }
    }
    let hom_dims_match = hom_dims.iter().all(|&(_, _, b, a)| a == b);

    // composition and unit preservation on sampled triples
    let mut composition_residual: f64 = 0.0;
    let mut unit_residual: f64 = 0.0;
    for src in 0..n {
        for mid in 0..n {
            for tgt in 0..n {
                if theta.data[src].is_none() || theta.data[mid].is_none() || theta.data[tgt].is_none()
                {
                    continue;
                }
                let zs = gen.hom(mid, tgt);
                let ys = gen.hom(src, mid);
                if let (Some(z), Some(y)) = (zs.first(), ys.first()) {
                    let (w, _rp, res) = theta.composition_witness(z, y, src, mid, tgt, tol)?;
                    composition_residual = composition_residual.max(res).max(
                        w.adjoint()
                            .compose(&w)?
                            .dist_to_identity()?
                            .max(w.compose(&w.adjoint())?.dist_to_identity()?),
                    );
                }
            }
        }
    }
    for obj in 0..n {
        if theta.data[obj].is_none() {
            continue;
        }
        let unit = Bimodule::unit(&gen.objects[obj]);
        let img = theta.morphism(&unit, obj, obj)?;
        let as_alg = AlgBimodule::over_itself(&theta.object(obj)?.algebra);
        unit_residual = unit_residual
            .max(img.left_action().distance(as_alg.left_action())?)
            .max(img.right_action().distance(as_alg.right_action())?);
    }
    Ok(ThetaAudit {
        hom_dims,
        hom_dims_match,
        module_residual,
        composition_residual,
        unit_residual,
        injectivity_ok,
    })
}

/// One realized ∼-class: corner presentation, Θ, and extension targets.
pub struct ClassPipeline {
    /// class members as (object, blocks) with blocks sorted
    pub members: Vec<(usize, Vec<usize>)>,
    pub base_object: usize,
    /// restricted corner objects, indexed by original object id
    pub corner_objects: Vec<Option<TracialAlgebra>>,
    pub theta: Theta,
    pub corner_gen: GeneratedHoms,
    /// per original object id: the extension of Θ(object)
    pub extensions: Vec<Option<Extension>>,
}

/// The assembled realization report.
pub struct RealizationReport {
    pub partition: SimPartition,
    pub class_bases: Vec<usize>,
    /// per object: block sizes of Φ(object)
    pub targets: Vec<Vec<usize>>,
    /// (src, tgt, mult of X, mult of Y, dim before, dim after)
    pub hom_tables: Vec<HomTableEntry>,
    pub tables_match: bool,
    pub theta_audits: Vec<ThetaAudit>,
    pub functoriality_residual: f64,
    pub max_residual: f64,
}

#[derive(Debug, Clone)]
pub struct HomTableEntry {
    pub source: usize,
    pub target: usize,
    pub x_mult: Vec<Vec<usize>>,
    pub y_mult: Vec<Vec<usize>>,
    pub dim_before: usize,
    pub dim_after: usize,
}

impl RealizationReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.partition.lambda_consistent
            && self.tables_match
            && self.theta_audits.iter().all(|a| {
                a.hom_dims_match
                    && a.injectivity_ok
                    && a.module_residual < tol
                    && a.composition_residual < tol
                    && a.unit_residual < tol
            })
            && self.functoriality_residual < tol
            && self.max_residual < tol
    }
}

/// Corner-restrict an algebra to a block subset.
fn restrict_algebra(alg: &TracialAlgebra, blocks: &[usize]) -> TracialAlgebra {
    TracialAlgebra::new(blocks.iter().map(|&b| alg.block_size(b)).collect()).unwrap()
}

/// Corner-restrict a bimodule to row/column block subsets.
fn restrict_bimodule(
    x: &Bimodule,
    src_blocks: &[usize],
    tgt_blocks: &[usize],
    src_alg: &TracialAlgebra,
    tgt_alg: &TracialAlgebra,
) -> Bimodule {
    let mult: Vec<Vec<usize>> = tgt_blocks
        .iter()
        .map(|&j| src_blocks.iter().map(|&i| x.mult(j, i)).collect())
        .collect();
    Bimodule::new(src_alg.clone(), tgt_alg.clone(), mult).unwrap()
}

/// Run the full realization pipeline Φ on a presentation.
pub fn phi_realize(
    pres: &BicategoryPresentation,
    depth: usize,
    cfg: RealizationConfig,
) -> Result<RealizationReport> {
    let gen = pres.closure(depth);
    let partition = sim_relation(&gen);
    if !partition.lambda_consistent {
        let offender = partition
            .lambda
            .iter()
            .map(|(o, blocks)| format!("object {o} blocks {blocks:?}"))
            .collect::<Vec<_>>()
            .join("; ");
        return Err(Error::numerical(format!(
            "unit-summand partition contradicts the indecomposable components (Λ elements: {offender}); increase the closure depth"
        )));
    }
    let n_obj = pres.objects.len();
    let mut max_residual: f64 = 0.0;

    // group Λ elements per class
    let class_of = |u: UnitSummand| {
        partition
            .classes
            .iter()
            .position(|c| c.contains(&u))
            .expect("summand in some class")
    };
    let n_classes = partition.classes.len();
    let mut class_members: Vec<Vec<(usize, Vec<usize>)>> = vec![vec![]; n_classes];
    for (o, blocks) in &partition.lambda {
        class_members[class_of((*o, blocks[0]))].push((*o, blocks.clone()));
    }

    let mut pipelines: Vec<ClassPipeline> = Vec::new();
    let mut theta_audits = Vec::new();
    for members in &class_members {
        let base_object = members.iter().map(|(o, _)| *o).min().unwrap();
        // corner-restricted generated homs
        let mut corner_objects: Vec<Option<TracialAlgebra>> = vec![None; n_obj];
        let mut blocks_of: Vec<Vec<usize>> = vec![vec![]; n_obj];
        for (o, blocks) in members {
            corner_objects[*o] = Some(restrict_algebra(&pres.objects[*o], blocks));
            blocks_of[*o] = blocks.clone();
        }
        let member_ids: Vec<usize> = members.iter().map(|(o, _)| *o).collect();
        let sub_objects: Vec<TracialAlgebra> = member_ids
            .iter()
            .map(|&o| corner_objects[o].clone().unwrap())
            .collect();
        let mut homs: Vec<Vec<Vec<Bimodule>>> =
            vec![vec![vec![]; sub_objects.len()]; sub_objects.len()];
        let mut seen: Vec<Vec<BTreeSet<Vec<usize>>>> =
            vec![vec![BTreeSet::new(); sub_objects.len()]; sub_objects.len()];
        for (ti, &t) in member_ids.iter().enumerate() {
            for (si, &s) in member_ids.iter().enumerate() {
                for x in gen.hom(s, t) {
                    let r = restrict_bimodule(
                        x,
                        &blocks_of[s],
                        &blocks_of[t],
                        &sub_objects[si],
                        &sub_objects[ti],
                    );
                    if r.is_zero() {
                        continue;
                    }
                    let key: Vec<usize> = r.mult_rows().into_iter().flatten().collect();
                    if seen[ti][si].insert(key) {
                        homs[ti][si].push(r);
                    }
                }
            }
        }
        let corner_gen = GeneratedHoms { objects: sub_objects.clone(), homs };
        let base_sub = member_ids.iter().position(|&o| o == base_object).unwrap();
        let theta = Theta::build(&corner_gen, base_sub)?;
        let audit = theta_audit(&corner_gen, &theta, cfg.tol)?;
        max_residual = max_residual
            .max(audit.module_residual)
            .max(audit.composition_residual)
            .max(audit.unit_residual);
        theta_audits.push(audit);

        let mut extensions: Vec<Option<Extension>> = (0..n_obj).map(|_| None).collect();
        for (idx, &o) in member_ids.iter().enumerate() {
            let alg = &theta.object(idx)?.algebra;
            let ext = extension_algebra(alg, cfg)?;
            max_residual = max_residual
                .max(ext.star_closure_residual)
                .max(ext.iso_residual)
                .max(ext.k_identity_residual)
                .max(ext.k_commutation_residual);
            extensions[o] = Some(ext);
        }
        pipelines.push(ClassPipeline {
            members: members.clone(),
            base_object,
            corner_objects,
            theta,
            corner_gen,
            extensions,
        });
    }

    // Φ on objects: concatenate target blocks over classes, class order fixed
    let mut targets: Vec<Vec<usize>> = vec![vec![]; n_obj];
    for pipe in &pipelines {
        for (o, _) in &pipe.members {
            let ext = pipe.extensions[*o].as_ref().unwrap();
            targets[*o].extend(ext.n_algebra().block_sizes());
        }
    }

    // Φ on generated morphisms per class corner, with hom tables
    let mut hom_tables = Vec::new();
    let mut functoriality_residual: f64 = 0.0;
    for s in 0..n_obj {
        for t in 0..n_obj {
            let morphisms = gen.hom(s, t);
            if morphisms.is_empty() {
                continue;
            }
            // transported multiplicity per morphism: block sum over classes
            let mut transported: Vec<Vec<Vec<usize>>> = Vec::new();
            for x in morphisms {
                let mut rows_total: Vec<Vec<usize>> = vec![];
                for pipe in &pipelines {
                    let (Some(ext_t), Some(ext_s)) =
                        (pipe.extensions[t].as_ref(), pipe.extensions[s].as_ref())
                    else {
                        continue;
                    };
                    let si = pipe.members.iter().position(|(o, _)| *o == s).unwrap();
                    let ti = pipe.members.iter().position(|(o, _)| *o == t).unwrap();
                    let x_corner = restrict_bimodule(
                        x,
                        &pipe.members[si].1,
                        &pipe.members[ti].1,
                        pipe.corner_objects[s].as_ref().unwrap(),
                        pipe.corner_objects[t].as_ref().unwrap(),
                    );
                    let (phi_x, res) = transport_through_class(pipe, &x_corner, si, ti, ext_s, ext_t, cfg.tol)?;
                    max_residual = max_residual.max(res);
                    rows_total = block_diag_extend(rows_total, phi_x.carrier().mult_rows());
                }
                transported.push(rows_total);
            }
            for (a, x) in morphisms.iter().enumerate() {
                for (b, y) in morphisms.iter().enumerate() {
                    let before = crate::solver::hom_dim(x, y);
                    let after: usize = transported[a]
                        .iter()
                        .flatten()
                        .zip(transported[b].iter().flatten())
                        .map(|(ka, kb)| ka * kb)
                        .sum();
                    hom_tables.push(HomTableEntry {
                        source: s,
                        target: t,
                        x_mult: x.mult_rows(),
                        y_mult: y.mult_rows(),
                        dim_before: before,
                        dim_after: after,
                    });
                }
            }
        }
    }
    // functoriality of Φ on 2-morphisms: sampled within the first class
    if let Some(pipe) = pipelines.first() {
        functoriality_residual = phi_two_morphism_audit(pipe, cfg.tol)?;
        max_residual = max_residual.max(functoriality_residual);
    }

    let tables_match = hom_tables.iter().all(|e| e.dim_before == e.dim_after);
    let class_bases = pipelines.iter().map(|p| p.base_object).collect();
    Ok(RealizationReport {
        partition,
        class_bases,
        targets,
        hom_tables,
        tables_match,
        theta_audits,
        functoriality_residual,
        max_residual,
    })
}

/// Transport a corner morphism through one class pipeline:
/// Φ_κ(X) = (L²(N_tgt) ⊠_{Θ(tgt)} Θ(X)) ⊠_{Θ(src)} conj L²(N_src).
fn transport_through_class(
    pipe: &ClassPipeline,
    x_corner: &Bimodule,
    src_idx: usize,
    tgt_idx: usize,
    ext_s: &Extension,
    ext_t: &Extension,
    tol: f64,
) -> Result<(AlgBimodule, f64)> {
    let theta_x = pipe.theta.morphism(x_corner, src_idx, tgt_idx)?;
    let x_mod_t = ext_t.x_module()?;
    let inner = rel_tensor(&x_mod_t, &theta_x, tol)?;
    let xbar_mod_s = ext_s.xbar_module()?;
    let outer = rel_tensor(&inner.module, &xbar_mod_s, tol)?;
    let rep = crate::modules::verify_module(&outer.module)?;
    let res = rep
        .left_assoc
        .max(rep.right_assoc)
        .max(rep.unit)
        .max(rep.commute)
        .max(rep.special_left)
        .max(rep.special_right);
    Ok((outer.module, res))
}

/// Φ on 2-morphisms: verify composition, adjoints and linearity transport
/// within the first class on a sampled generated morphism.
fn phi_two_morphism_audit(pipe: &ClassPipeline, tol: f64) -> Result<f64> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
    let gen = &pipe.corner_gen;
    let mut worst: f64 = 0.0;
    'outer: for s in 0..gen.objects.len() {
        for t in 0..gen.objects.len() {
            let morphisms = gen.hom(s, t);
            let Some(x) = morphisms.first() else { continue };
            if pipe.theta.data[s].is_none() || pipe.theta.data[t].is_none() {
                continue;
            }
            let obj_s = pipe.members[s].0;
            let obj_t = pipe.members[t].0;
            let (Some(ext_s), Some(ext_t)) =
                (pipe.extensions[obj_s].as_ref(), pipe.extensions[obj_t].as_ref())
            else {
                continue;
            };
            // transport machinery for X
            let theta_x = pipe.theta.morphism(x, s, t)?;
            let x_mod_t = ext_t.x_module()?;
            let inner = rel_tensor(&x_mod_t, &theta_x, tol)?;
            let xbar_mod_s = ext_s.xbar_module()?;
            let outer = rel_tensor(&inner.module, &xbar_mod_s, tol)?;

            let phi_of = |f: &Intertwiner| -> Result<Intertwiner> {
                let th = pipe.theta.two_morphism(f, s, t)?;
                let step = rel_tensor_morphisms(
                    &inner,
                    &inner,
                    &Intertwiner::identity(x_mod_t.carrier()),
                    &th,
                )?;
                rel_tensor_morphisms(
                    &outer,
                    &outer,
                    &step,
                    &Intertwiner::identity(xbar_mod_s.carrier()),
                )
            };
            // random endomorphisms of X
            let mut f = Intertwiner::zero(x, x)?;
            let mut g = Intertwiner::zero(x, x)?;
            for jj in 0..x.rows() {
                for ii in 0..x.cols() {
                    let k = x.mult(jj, ii);
                    if k > 0 {
                        *f.block_mut(jj, ii) = crate::linalg::random_cmat(&mut rng, k, k);
                        *g.block_mut(jj, ii) = crate::linalg::random_cmat(&mut rng, k, k);
                    }
                }
            }
            let pf = phi_of(&f)?;
            let pg = phi_of(&g)?;
            let comp = phi_of(&g.compose(&f)?)?;
            worst = worst.max(comp.distance(&pg.compose(&pf)?)?);
            let adj = phi_of(&f.adjoint())?;
            worst = worst.max(adj.distance(&pf.adjoint())?);
            let lin = phi_of(&f.add(&g.scale(cr(0.5)))?)?;
            worst = worst.max(lin.distance(&pf.add(&pg.scale(cr(0.5)))?)?);
            break 'outer;
        }
    }
    Ok(worst)
}

fn block_diag_extend(acc: Vec<Vec<usize>>, next: Vec<Vec<usize>>) -> Vec<Vec<usize>> {
    if acc.is_empty() {
        return next;
    }
    if next.is_empty() {
        return acc;
    }
    let acc_cols = acc[0].len();
    let next_cols = next[0].len();
    let mut out = Vec::new();
    for row in &acc {
        let mut r = row.clone();
        r.extend(std::iter::repeat(0).take(next_cols));
        out.push(r);
    }
    for row in &next {
        let mut r = vec![0; acc_cols];
        r.extend(row.iter().cloned());
        out.push(r);
    }
    out
}
