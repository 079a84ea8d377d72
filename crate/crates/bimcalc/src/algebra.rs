//! Finite-dimensional tracial *-algebras: finite direct sums of complex
//! matrix blocks ⊕_i M_{m_i}(C) carrying the trace τ(⊕ a_i) = Σ_i tr(a_i)/m_i
//! (the tracial state of each block, summed). These are the desk-scale
//! stand-ins for finite direct sums of II₁ factors; every inner product
//! downstream inherits this normalization.

use crate::error::{Error, Result};
use crate::linalg::{cr, identity, op_norm, CMat};
use num_complex::Complex64 as C64;

/// A finite direct sum of matrix blocks with the block-wise tracial state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TracialAlgebra {
    blocks: Vec<usize>,
    labels: Option<Vec<String>>,
}

impl TracialAlgebra {
    pub fn new(blocks: Vec<usize>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::structural("algebra needs at least one block"));
        }
        if blocks.iter().any(|&m| m == 0) {
            return Err(Error::structural("matrix block sizes must be positive"));
        }
        Ok(TracialAlgebra { blocks, labels: None })
    }

    pub fn with_labels(blocks: Vec<usize>, labels: Vec<String>) -> Result<Self> {
        if labels.len() != blocks.len() {
            return Err(Error::structural("one label per block"));
        }
        let mut a = Self::new(blocks)?;
        a.labels = Some(labels);
        Ok(a)
    }

    /// Shorthand for the one-block algebra M_m(C); `scalars()` is M_1 = C.
    pub fn factor(m: usize) -> Self {
        Self::new(vec![m]).unwrap()
    }

    pub fn scalars() -> Self {
        Self::factor(1)
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn block_sizes(&self) -> &[usize] {
        &self.blocks
    }

    pub fn block_size(&self, i: usize) -> usize {
        self.blocks[i]
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    /// Total vector-space dimension Σ m_i².
    pub fn dim(&self) -> usize {
        self.blocks.iter().map(|m| m * m).sum()
    }

    /// Compatibility for "same parent" checks: block structure must agree.
    pub fn same_structure(&self, other: &TracialAlgebra) -> bool {
        self.blocks == other.blocks
    }

    pub fn identity_element(&self) -> AlgebraElement {
        AlgebraElement {
            parent: self.clone(),
            mats: self.blocks.iter().map(|&m| identity(m)).collect(),
        }
    }

    pub fn zero_element(&self) -> AlgebraElement {
        AlgebraElement {
            parent: self.clone(),
            mats: self.blocks.iter().map(|&m| CMat::zeros(m, m)).collect(),
        }
    }

    /// Element supported on one block.
    pub fn element_in_block(&self, i: usize, mat: CMat) -> Result<AlgebraElement> {
        if i >= self.blocks.len() {
            return Err(Error::structural("block index out of range"));
        }
        if mat.nrows() != self.blocks[i] || mat.ncols() != self.blocks[i] {
            return Err(Error::structural(format!(
                "block {} expects a {}x{} matrix",
                i, self.blocks[i], self.blocks[i]
            )));
        }
        let mut e = self.zero_element();
        e.mats[i] = mat;
        Ok(e)
    }

    pub fn element(&self, mats: Vec<CMat>) -> Result<AlgebraElement> {
        if mats.len() != self.blocks.len() {
            return Err(Error::structural("one matrix per block"));
        }
        for (i, m) in mats.iter().enumerate() {
            if m.nrows() != self.blocks[i] || m.ncols() != self.blocks[i] {
                return Err(Error::structural(format!(
                    "block {} expects a {}x{} matrix, got {}x{}",
                    i,
                    self.blocks[i],
                    self.blocks[i],
                    m.nrows(),
                    m.ncols()
                )));
            }
        }
        Ok(AlgebraElement { parent: self.clone(), mats })
    }

    /// The minimal central projections p_1, ..., p_s, ordered as the blocks.
    pub fn minimal_central_projections(&self) -> Vec<CentralProjection> {
        (0..self.blocks.len())
            .map(|i| CentralProjection { parent: self.clone(), block: i })
            .collect()
    }

    /// Linear basis given by matrix units of every block, in block order,
    /// row-major within a block.
    pub fn matrix_unit_basis(&self) -> Vec<AlgebraElement> {
        let mut out = Vec::with_capacity(self.dim());
        for (i, &m) in self.blocks.iter().enumerate() {
            for p in 0..m {
                for q in 0..m {
                    let mut mat = CMat::zeros(m, m);
                    mat[(p, q)] = cr(1.0);
                    out.push(self.element_in_block(i, mat).unwrap());
                }
            }
        }
        out
    }
}

/// An element of a [`TracialAlgebra`]: one m_i x m_i matrix per block.
#[derive(Debug, Clone)]
pub struct AlgebraElement {
    parent: TracialAlgebra,
    mats: Vec<CMat>,
}

impl AlgebraElement {
    pub fn parent(&self) -> &TracialAlgebra {
        &self.parent
    }

    pub fn block(&self, i: usize) -> &CMat {
        &self.mats[i]
    }

    pub fn blocks(&self) -> &[CMat] {
        &self.mats
    }

    pub fn adjoint(&self) -> AlgebraElement {
        AlgebraElement {
            parent: self.parent.clone(),
            mats: self.mats.iter().map(|m| m.adjoint()).collect(),
        }
    }

    pub fn mul(&self, other: &AlgebraElement) -> Result<AlgebraElement> {
        self.check_parent(other)?;
        Ok(AlgebraElement {
            parent: self.parent.clone(),
            mats: self
                .mats
                .iter()
                .zip(&other.mats)
                .map(|(a, b)| a * b)
                .collect(),
        })
    }

    pub fn add(&self, other: &AlgebraElement) -> Result<AlgebraElement> {
        self.check_parent(other)?;
        Ok(AlgebraElement {
            parent: self.parent.clone(),
            mats: self
                .mats
                .iter()
                .zip(&other.mats)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    pub fn scale(&self, z: C64) -> AlgebraElement {
        AlgebraElement {
            parent: self.parent.clone(),
            mats: self.mats.iter().map(|m| m.map(|x| x * z)).collect(),
        }
    }

    /// Operator norm: max over blocks.
    pub fn op_norm(&self) -> f64 {
        self.mats.iter().map(op_norm).fold(0.0, f64::max)
    }

    /// ‖a‖₂ = sqrt(τ(a*a)).
    pub fn l2_norm(&self) -> f64 {
        trace(&self.adjoint().mul(self).unwrap()).re.max(0.0).sqrt()
    }

    fn check_parent(&self, other: &AlgebraElement) -> Result<()> {
        if !self.parent.same_structure(&other.parent) {
            return Err(Error::structural("algebra elements have different parents"));
        }
        Ok(())
    }
}

/// The minimal central projection p_i (the identity of block i).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CentralProjection {
    parent: TracialAlgebra,
    block: usize,
}

impl CentralProjection {
    pub fn block_index(&self) -> usize {
        self.block
    }

    pub fn as_element(&self) -> AlgebraElement {
        self.parent
            .element_in_block(self.block, identity(self.parent.block_size(self.block)))
            .unwrap()
    }
}

/// τ(a) = Σ_i tr(a_i)/m_i. The unique family of tracial states, summed;
/// note τ(I) equals the number of blocks.
pub fn trace(a: &AlgebraElement) -> C64 {
    let mut acc = C64::ZERO;
    for (i, m) in a.mats.iter().enumerate() {
        let t: C64 = (0..m.nrows()).map(|p| m[(p, p)]).sum();
        acc += t / cr(a.parent.block_size(i) as f64);
    }
    acc
}

/// GNS inner product ⟨a, b⟩ = τ(a* b), linear in the second argument.
pub fn l2_inner(a: &AlgebraElement, b: &AlgebraElement) -> Result<C64> {
    Ok(trace(&a.adjoint().mul(b)?))
}
