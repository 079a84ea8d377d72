//! File formats and the command layer behind the `bimcalc` CLI.
//!
//! Everything is JSON with explicit complex pairs [re, im]; maps are keyed
//! with sorted keys so reruns with the same inputs and seed are
//! byte-identical. A manifest names the input files, the operation kind and
//! the tolerance/seed overrides; commands read a manifest, run the wrapped
//! operation and emit serialized artifacts plus a machine-readable report.

use crate::algebra::{AlgebraElement, TracialAlgebra};
use crate::bimodule::{Bimodule, Intertwiner};
use crate::duality::DualitySolution;
use crate::error::{Error, Result};
use crate::frobenius::FrobeniusAlgebra;
use crate::linalg::CMat;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

pub type MatrixData = Vec<Vec<[f64; 2]>>;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AlgebraFile {
    pub blocks: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ElementFile {
    pub algebra: AlgebraFile,
    pub mats: Vec<MatrixData>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BimoduleFile {
    pub source: AlgebraFile,
    pub target: AlgebraFile,
    pub mult: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IntertwinerFile {
    pub dom: BimoduleFile,
    pub cod: BimoduleFile,
    /// per-block complex matrices keyed by "j,i"
    pub blocks: BTreeMap<String, MatrixData>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PresentationFile {
    pub objects: Vec<AlgebraFile>,
    pub generators: Vec<GeneratorEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeneratorEntry {
    pub source: usize,
    pub target: usize,
    pub mult: Vec<Vec<usize>>,
}

/// The manifest tying inputs together.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: u32,
    pub kind: String,
    #[serde(default)]
    pub refs: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<usize>,
}

pub const SCHEMA_VERSION: u32 = 1;

// ----- conversions -----

pub fn algebra_to_file(a: &TracialAlgebra) -> AlgebraFile {
    AlgebraFile {
        blocks: a.block_sizes().to_vec(),
        labels: a.labels().map(|l| l.to_vec()),
    }
}

pub fn algebra_from_file(f: &AlgebraFile) -> Result<TracialAlgebra> {
    match &f.labels {
        Some(l) => TracialAlgebra::with_labels(f.blocks.clone(), l.clone()),
        None => TracialAlgebra::new(f.blocks.clone()),
    }
}

fn mat_to_data(m: &CMat) -> MatrixData {
    (0..m.nrows())
        .map(|r| (0..m.ncols()).map(|c| [m[(r, c)].re, m[(r, c)].im]).collect())
        .collect()
}

fn mat_from_data(d: &MatrixData, rows: usize, cols: usize) -> Result<CMat> {
    if d.len() != rows || d.iter().any(|r| r.len() != cols) {
        return Err(Error::Parse(format!("matrix data is not {rows}x{cols}")));
    }
    Ok(CMat::from_fn(rows, cols, |r, c| {
        num_complex::Complex64::new(d[r][c][0], d[r][c][1])
    }))
}

pub fn element_to_file(a: &AlgebraElement) -> ElementFile {
    ElementFile {
        algebra: algebra_to_file(a.parent()),
        mats: a.blocks().iter().map(mat_to_data).collect(),
    }
}

pub fn element_from_file(f: &ElementFile) -> Result<AlgebraElement> {
    let alg = algebra_from_file(&f.algebra)?;
    let mats = f
        .mats
        .iter()
        .zip(alg.block_sizes())
        .map(|(d, &m)| mat_from_data(d, m, m))
        .collect::<Result<Vec<_>>>()?;
    alg.element(mats)
}

pub fn bimodule_to_file(x: &Bimodule) -> BimoduleFile {
    BimoduleFile {
        source: algebra_to_file(x.source()),
        target: algebra_to_file(x.target()),
        mult: x.mult_rows(),
    }
}

pub fn bimodule_from_file(f: &BimoduleFile) -> Result<Bimodule> {
    Bimodule::new(
        algebra_from_file(&f.source)?,
        algebra_from_file(&f.target)?,
        f.mult.clone(),
    )
}

pub fn intertwiner_to_file(t: &Intertwiner) -> IntertwinerFile {
    let mut blocks = BTreeMap::new();
    for j in 0..t.dom().rows() {
        for i in 0..t.dom().cols() {
            let b = t.block(j, i);
            if b.nrows() * b.ncols() > 0 {
                blocks.insert(format!("{j},{i}"), mat_to_data(b));
            }
        }
    }
    IntertwinerFile {
        dom: bimodule_to_file(t.dom()),
        cod: bimodule_to_file(t.cod()),
        blocks,
    }
}

pub fn intertwiner_from_file(f: &IntertwinerFile) -> Result<Intertwiner> {
    let dom = bimodule_from_file(&f.dom)?;
    let cod = bimodule_from_file(&f.cod)?;
    let mut t = Intertwiner::zero(&dom, &cod)?;
    for (key, data) in &f.blocks {
        let parts: Vec<&str> = key.split(',').collect();
        if parts.len() != 2 {
            return Err(Error::Parse(format!("bad block key {key:?}")));
        }
        let j: usize = parts[0].trim().parse().map_err(|_| Error::Parse(format!("bad block key {key:?}")))?;
        let i: usize = parts[1].trim().parse().map_err(|_| Error::Parse(format!("bad block key {key:?}")))?;
        if j >= dom.rows() || i >= dom.cols() {
            return Err(Error::Parse(format!("block key {key:?} out of range")));
        }
        *t.block_mut(j, i) = mat_from_data(data, cod.mult(j, i), dom.mult(j, i))?;
    }
    Ok(t)
}

pub fn presentation_from_file(
    f: &PresentationFile,
) -> Result<crate::decomposition::BicategoryPresentation> {
    let objects = f
        .objects
        .iter()
        .map(algebra_from_file)
        .collect::<Result<Vec<_>>>()?;
    let mut pres = crate::decomposition::BicategoryPresentation::new(objects.clone());
    for g in &f.generators {
        if g.source >= objects.len() || g.target >= objects.len() {
            return Err(Error::Parse("generator object index out of range".into()));
        }
        let x = Bimodule::new(objects[g.source].clone(), objects[g.target].clone(), g.mult.clone())?;
        pres.add_generator(g.source, g.target, x)?;
    }
    Ok(pres)
}

// ----- manifest loading -----

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Parse(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub struct LoadedManifest {
    pub manifest: Manifest,
    pub dir: PathBuf,
}

pub fn load_manifest(path: &Path) -> Result<LoadedManifest> {
    let manifest: Manifest = read_json(path)?;
    if manifest.schema != SCHEMA_VERSION {
        return Err(Error::Parse(format!(
            "unsupported schema version {} (supported: {SCHEMA_VERSION})",
            manifest.schema
        )));
    }
    let dir = path.parent().unwrap_or_else(|| Path::new(".")).to_path_buf();
    Ok(LoadedManifest { manifest, dir })
}

impl LoadedManifest {
    pub fn resolve(&self, name: &str) -> Result<PathBuf> {
        let rel = self
            .manifest
            .refs
            .get(name)
            .ok_or_else(|| Error::Parse(format!("manifest is missing the {name:?} reference")))?;
        Ok(self.dir.join(rel))
    }

    pub fn bimodule(&self, name: &str) -> Result<Bimodule> {
        bimodule_from_file(&read_json(&self.resolve(name)?)?)
    }

    pub fn intertwiner(&self, name: &str) -> Result<Intertwiner> {
        intertwiner_from_file(&read_json(&self.resolve(name)?)?)
    }

    pub fn algebra(&self, name: &str) -> Result<TracialAlgebra> {
        algebra_from_file(&read_json(&self.resolve(name)?)?)
    }

    pub fn frobenius(&self) -> Result<FrobeniusAlgebra> {
        let h = self.bimodule("h")?;
        let m = self.intertwiner("multiplication")?;
        let iota = self.intertwiner("unit")?;
        FrobeniusAlgebra::new(h, m, iota)
    }

    pub fn solution(&self) -> Result<DualitySolution> {
        let x = self.bimodule("x")?;
        let gamma = self.intertwiner("gamma")?;
        let gammabar = self.intertwiner("gammabar")?;
        DualitySolution::new(x, gamma, gammabar)
    }
}

/// Write a Frobenius algebra as (manifest, bimodule, two intertwiners).
pub fn write_frobenius(dir: &Path, stem: &str, f: &FrobeniusAlgebra, tol: f64, seed: u64) -> Result<PathBuf> {
    write_json(&dir.join(format!("{stem}.h.json")), &bimodule_to_file(f.carrier()))?;
    write_json(
        &dir.join(format!("{stem}.m.json")),
        &intertwiner_to_file(f.multiplication()),
    )?;
    write_json(
        &dir.join(format!("{stem}.iota.json")),
        &intertwiner_to_file(f.unit_map()),
    )?;
    let manifest = Manifest {
        schema: SCHEMA_VERSION,
        kind: "frobenius".into(),
        refs: [
            ("h".to_string(), format!("{stem}.h.json")),
            ("multiplication".to_string(), format!("{stem}.m.json")),
            ("unit".to_string(), format!("{stem}.iota.json")),
        ]
        .into_iter()
        .collect(),
        tol: Some(tol),
        seed: Some(seed),
        depth: None,
    };
    let path = dir.join(format!("{stem}.manifest.json"));
    write_json(&path, &manifest)?;
    Ok(path)
}

/// Write a duality solution as (manifest, bimodule, two intertwiners).
pub fn write_solution(dir: &Path, stem: &str, sol: &DualitySolution, tol: f64, seed: u64) -> Result<PathBuf> {
    write_json(&dir.join(format!("{stem}.x.json")), &bimodule_to_file(sol.x()))?;
    write_json(
        &dir.join(format!("{stem}.gamma.json")),
        &intertwiner_to_file(sol.gamma()),
    )?;
    write_json(
        &dir.join(format!("{stem}.gammabar.json")),
        &intertwiner_to_file(sol.gammabar()),
    )?;
    let manifest = Manifest {
        schema: SCHEMA_VERSION,
        kind: "solution".into(),
        refs: [
            ("x".to_string(), format!("{stem}.x.json")),
            ("gamma".to_string(), format!("{stem}.gamma.json")),
            ("gammabar".to_string(), format!("{stem}.gammabar.json")),
        ]
        .into_iter()
        .collect(),
        tol: Some(tol),
        seed: Some(seed),
        depth: None,
    };
    let path = dir.join(format!("{stem}.manifest.json"));
    write_json(&path, &manifest)?;
    Ok(path)
}

// ----- command layer -----

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    Json,
}

#[derive(Debug, Clone, Copy)]
pub struct CommandOptions {
    pub tol: f64,
    pub seed: u64,
    pub depth: usize,
    pub format: ReportFormat,
}

impl Default for CommandOptions {
    fn default() -> Self {
        CommandOptions {
            tol: crate::linalg::DEFAULT_TOL,
            seed: 42,
            depth: 3,
            format: ReportFormat::Text,
        }
    }
}

/// Exit status of a command: 0 pass, 1 residual failure, 2 parse error
/// (parse errors surface as Err before a report exists).
pub struct CommandOutcome {
    pub passed: bool,
    pub report_json: serde_json::Value,
    pub summary: String,
}

impl CommandOutcome {
    pub fn exit_code(&self) -> i32 {
        if self.passed {
            0
        } else {
            1
        }
    }

    pub fn render(&self, format: ReportFormat) -> String {
        match format {
            ReportFormat::Json => serde_json::to_string_pretty(&self.report_json).unwrap(),
            ReportFormat::Text => self.summary.clone(),
        }
    }
}

fn effective(manifest: &Manifest, opts: &CommandOptions) -> CommandOptions {
    CommandOptions {
        tol: manifest.tol.unwrap_or(opts.tol),
        seed: manifest.seed.unwrap_or(opts.seed),
        depth: manifest.depth.unwrap_or(opts.depth),
        format: opts.format,
    }
}

pub fn cmd_verify(path: &Path, opts: &CommandOptions) -> Result<CommandOutcome> {
    let loaded = load_manifest(path)?;
    let eff = effective(&loaded.manifest, opts);
    match loaded.manifest.kind.as_str() {
        "algebra" => {
            let alg = loaded.algebra("algebra")?;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(eff.seed);
            use rand::SeedableRng;
            let _ = &mut rng;
            // structural invariants: central projections resolve the identity
            let ps = alg.minimal_central_projections();
            let mut sum = alg.zero_element();
            for p in &ps {
                sum = sum.add(&p.as_element())?;
            }
            let resid = sum.add(&alg.identity_element().scale(crate::linalg::cr(-1.0)))?.op_norm();
            let passed = resid == 0.0;
            Ok(CommandOutcome {
                passed,
                report_json: serde_json::json!({
                    "kind": "algebra",
                    "blocks": alg.block_sizes(),
                    "projection_sum_residual": resid,
                    "passed": passed,
                }),
                summary: format!(
                    "algebra {:?}: projection sum residual {resid:.2e} -> {}",
                    alg.block_sizes(),
                    if passed { "pass" } else { "FAIL" }
                ),
            })
        }
        "bimodule" => {
            let x = loaded.bimodule("bimodule")?;
            // reproducing identities of the canonical bases on random vectors
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(eff.seed);
            let mut worst: f64 = 0.0;
            for _ in 0..5 {
                let v = x.random_vector(&mut rng);
                let mut acc = x.zero_vector();
                for b in x.right_basis() {
                    let coeff = crate::bimodule::m_valued_inner(&b, &v)?;
                    acc = acc.add(&crate::bimodule::act_right(&b, &coeff)?)?;
                }
                worst = worst.max(acc.add(&v.scale(crate::linalg::cr(-1.0)))?.norm());
            }
            let passed = worst < eff.tol.max(1e-9);
            Ok(CommandOutcome {
                passed,
                report_json: serde_json::json!({
                    "kind": "bimodule",
                    "mult": x.mult_rows(),
                    "reproducing_residual": worst,
                    "passed": passed,
                }),
                summary: format!(
                    "bimodule mult {:?}: reproducing residual {worst:.2e} -> {}",
                    x.mult_rows(),
                    if passed { "pass" } else { "FAIL" }
                ),
            })
        }
        "frobenius" => {
            let f = loaded.frobenius()?;
            let rep = crate::frobenius::verify_algebra(&f)?;
            let tol = eff.tol.max(1e-9);
            let passed = rep.is_frobenius(tol);
            let mut failing = Vec::new();
            if rep.unit_residual >= tol {
                failing.push("unit");
            }
            if rep.assoc_residual >= tol {
                failing.push("associativity");
            }
            if rep.frobenius_residual >= tol {
                failing.push("frobenius");
            }
            Ok(CommandOutcome {
                passed,
                report_json: serde_json::json!({
                    "kind": "frobenius",
                    "unit_residual": rep.unit_residual,
                    "assoc_residual": rep.assoc_residual,
                    "frobenius_residual": rep.frobenius_residual,
                    "special_residual": rep.special_residual,
                    "special": rep.special_residual < tol,
                    "failing_axioms": failing,
                    "passed": passed,
                }),
                summary: format!(
                    "frobenius: unit {:.2e}, assoc {:.2e}, frobenius {:.2e}, special {:.2e} -> {}{}",
                    rep.unit_residual,
                    rep.assoc_residual,
                    rep.frobenius_residual,
                    rep.special_residual,
                    if passed { "pass" } else { "FAIL" },
                    if failing.is_empty() {
                        String::new()
                    } else {
                        format!(" (failing: {})", failing.join(", "))
                    }
                ),
            })
        }
        "solution" => {
            let sol = loaded.solution()?;
            let (r1, r2) = crate::duality::check_conjugate_equations(&sol)?;
            let tol = eff.tol.max(1e-9);
            let passed = r1 < tol && r2 < tol;
            Ok(CommandOutcome {
                passed,
                report_json: serde_json::json!({
                    "kind": "solution",
                    "zigzag_residuals": [r1, r2],
                    "passed": passed,
                }),
                summary: format!(
                    "conjugate equations: residuals ({r1:.2e}, {r2:.2e}) -> {}",
                    if passed { "pass" } else { "FAIL" }
                ),
            })
        }
        other => Err(Error::Parse(format!("unknown manifest kind {other:?} for verify"))),
    }
}

pub fn cmd_specialize(path: &Path, out: &Path, opts: &CommandOptions) -> Result<CommandOutcome> {
    let loaded = load_manifest(path)?;
    let eff = effective(&loaded.manifest, opts);
    if loaded.manifest.kind != "frobenius" {
        return Err(Error::Parse("specialize expects a frobenius manifest".into()));
    }
    let f = loaded.frobenius()?;
    let sp = crate::frobenius::specialize(&f, eff.tol)?;
    std::fs::create_dir_all(out)?;
    write_frobenius(out, "specialized", &sp.algebra, eff.tol, eff.seed)?;
    write_json(&out.join("specialized.iso.json"), &intertwiner_to_file(&sp.iso))?;
    let rep = crate::frobenius::verify_algebra(&sp.algebra)?;
    let passed = rep.is_special(eff.tol.max(1e-9));
    Ok(CommandOutcome {
        passed,
        report_json: serde_json::json!({
            "kind": "specialize",
            "special_residual": rep.special_residual,
            "min_eigenvalue": sp.min_eigenvalue,
            "unit_bound": sp.unit_bound,
            "passed": passed,
        }),
        summary: format!(
            "specialize: mm* residual {:.2e}, min eig {:.4} ≥ bound {:.4} -> {}",
            rep.special_residual,
            sp.min_eigenvalue,
            sp.unit_bound,
            if passed { "pass" } else { "FAIL" }
        ),
    })
}

pub fn cmd_standardize(path: &Path, out: &Path, opts: &CommandOptions) -> Result<CommandOutcome> {
    let loaded = load_manifest(path)?;
    let eff = effective(&loaded.manifest, opts);
    std::fs::create_dir_all(out)?;
    match loaded.manifest.kind.as_str() {
        "frobenius" => {
            let f = loaded.frobenius()?;
            let outcome = crate::frobenius::standardize_algebra(&f, eff.tol)?;
            write_frobenius(out, "standardized", &outcome.algebra, eff.tol, eff.seed)?;
            write_json(
                &out.join("standardized.gauge.json"),
                &intertwiner_to_file(&outcome.gauge),
            )?;
            let passed = outcome.standard.is_standard(eff.tol.max(1e-7) * 10.0);
            Ok(CommandOutcome {
                passed,
                report_json: serde_json::json!({
                    "kind": "standardize",
                    "norm_gap": outcome.standard.norm_gap,
                    "conj_residual": outcome.standard.conj_residual,
                    "scalar_dim": outcome.standard.scalar_dim,
                    "passed": passed,
                }),
                summary: format!(
                    "standardize: d = {:.6}, norm gap {:.2e} -> {}",
                    outcome.standard.scalar_dim,
                    outcome.standard.norm_gap,
                    if passed { "pass" } else { "FAIL" }
                ),
            })
        }
        "solution" => {
            let sol = loaded.solution()?;
            let std = crate::duality::standardize(&sol, eff.tol)?;
            write_solution(out, "standardized", &std.solution, eff.tol, eff.seed)?;
            write_json(&out.join("standardized.gauge.json"), &intertwiner_to_file(&std.gauge))?;
            let passed = std.transport_residual < eff.tol.max(1e-8) * 10.0;
            Ok(CommandOutcome {
                passed,
                report_json: serde_json::json!({
                    "kind": "standardize",
                    "transport_residual": std.transport_residual,
                    "gamma_norm_sq": std.solution.gamma_norm_sq(),
                    "passed": passed,
                }),
                summary: format!(
                    "standardize: ‖γ‖² = {:.6}, transport residual {:.2e} -> {}",
                    std.solution.gamma_norm_sq(),
                    std.transport_residual,
                    if passed { "pass" } else { "FAIL" }
                ),
            })
        }
        other => Err(Error::Parse(format!("unknown manifest kind {other:?} for standardize"))),
    }
}

pub fn cmd_fuse(path: &Path, out: &Path, opts: &CommandOptions) -> Result<CommandOutcome> {
    let loaded = load_manifest(path)?;
    let eff = effective(&loaded.manifest, opts);
    if loaded.manifest.kind != "fuse" {
        return Err(Error::Parse("fuse expects a fuse manifest with left/right refs".into()));
    }
    let left = loaded.bimodule("left")?;
    let right = loaded.bimodule("right")?;
    let fused = crate::fusion::fuse(&left, &right)?;
    let oracle = crate::gram::fuse_gram_oracle(&left, &right, crate::exec::Parallelism::Auto)?;
    let eq = oracle.check_equivalence()?;
    std::fs::create_dir_all(out)?;
    write_json(&out.join("fused.json"), &bimodule_to_file(fused.fused()))?;
    let passed = eq.passes(eff.tol.max(1e-9));
    Ok(CommandOutcome {
        passed,
        report_json: serde_json::json!({
            "kind": "fuse",
            "mult": fused.fused().mult_rows(),
            "gram_dim": oracle.dim(),
            "skeletal_dim": oracle.skeletal_dim(),
            "iso_residual": eq.iso_residual,
            "action_residual": eq.act_residual,
            "passed": passed,
        }),
        summary: format!(
            "fuse: mult {:?}, gram dim {} vs skeletal {}, residuals ({:.2e}, {:.2e}) -> {}",
            fused.fused().mult_rows(),
            oracle.dim(),
            oracle.skeletal_dim(),
            eq.iso_residual,
            eq.act_residual,
            if passed { "pass" } else { "FAIL" }
        ),
    })
}

pub fn cmd_realize(path: &Path, out: &Path, opts: &CommandOptions) -> Result<CommandOutcome> {
    let loaded = load_manifest(path)?;
    let eff = effective(&loaded.manifest, opts);
    if loaded.manifest.kind != "frobenius" {
        return Err(Error::Parse("realize expects a frobenius manifest".into()));
    }
    let f = loaded.frobenius()?;
    let ext = crate::realization::extension_algebra(
        &f,
        crate::realization::RealizationConfig { seed: eff.seed, tol: eff.tol },
    )?;
    let iso = ext.iso_u()?;
    std::fs::create_dir_all(out)?;
    write_json(&out.join("extension.x.json"), &bimodule_to_file(ext.standard_bimodule()))?;
    write_solution(out, "extension.solution", ext.solution(), eff.tol, eff.seed)?;
    let (r1, r2) = ext.solution_residual;
    let tol = eff.tol.max(1e-8);
    let passed = ext.star_closure_residual < tol
        && ext.iso_residual < tol
        && ext.k_identity_residual < tol
        && ext.k_commutation_residual < tol
        && iso.max_residual() < tol
        && r1 < tol
        && r2 < tol;
    let report = serde_json::json!({
        "kind": "realize",
        "n_blocks": ext.n_algebra().block_sizes(),
        "dim_n": ext.dim(),
        "center_dim": ext.center_dim(),
        "inclusion_injective": ext.inclusion_injective(),
        "k_spectrum": ext.density_spectrum(),
        "residuals": {
            "star_closure": ext.star_closure_residual,
            "abstract_iso": ext.iso_residual,
            "k_identity": ext.k_identity_residual,
            "k_commutation": ext.k_commutation_residual,
            "solution": [r1, r2],
            "iso_u": iso.max_residual(),
        },
        "x_mult": ext.standard_bimodule().mult_rows(),
        "passed": passed,
    });
    write_json(&out.join("extension.report.json"), &report)?;
    Ok(CommandOutcome {
        passed,
        report_json: report,
        summary: format!(
            "realize: dim N = {}, blocks {:?}, center dim {}, X mult {:?} -> {}",
            ext.dim(),
            ext.n_algebra().block_sizes(),
            ext.center_dim(),
            ext.standard_bimodule().mult_rows(),
            if passed { "pass" } else { "FAIL" }
        ),
    })
}

pub fn cmd_decompose(path: &Path, out: &Path, opts: &CommandOptions) -> Result<CommandOutcome> {
    let loaded = load_manifest(path)?;
    let eff = effective(&loaded.manifest, opts);
    if loaded.manifest.kind != "presentation" {
        return Err(Error::Parse("decompose expects a presentation manifest".into()));
    }
    let pres_file: PresentationFile = read_json(&loaded.resolve("presentation")?)?;
    let pres = presentation_from_file(&pres_file)?;
    let report = crate::decomposition::phi_realize(
        &pres,
        eff.depth,
        crate::realization::RealizationConfig { seed: eff.seed, tol: eff.tol },
    )?;
    std::fs::create_dir_all(out)?;
    let passed = report.passes(eff.tol.max(1e-7));
    let json = serde_json::json!({
        "kind": "decompose",
        "classes": report.partition.classes,
        "lambda": report.partition.lambda,
        "class_bases": report.class_bases,
        "targets": report.targets,
        "hom_tables": report
            .hom_tables
            .iter()
            .map(|e| serde_json::json!({
                "source": e.source,
                "target": e.target,
                "x_mult": e.x_mult,
                "y_mult": e.y_mult,
                "dim_before": e.dim_before,
                "dim_after": e.dim_after,
            }))
            .collect::<Vec<_>>(),
        "tables_match": report.tables_match,
        "max_residual": report.max_residual,
        "passed": passed,
    });
    write_json(&out.join("partition.json"), &json)?;
    Ok(CommandOutcome {
        passed,
        report_json: json,
        summary: format!(
            "decompose: {} class(es), targets {:?}, tables {} -> {}",
            report.partition.classes.len(),
            report.targets,
            if report.tables_match { "match" } else { "MISMATCH" },
            if passed { "pass" } else { "FAIL" }
        ),
    })
}
