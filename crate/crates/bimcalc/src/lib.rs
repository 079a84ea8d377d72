//! bimcalc: a numerical engine for finite bimodules over multi-matrix
//! tracial *-algebras — the desk-scale stand-in for finite direct sums of
//! II₁ factors.
//!
//! The engine works with bimodules in skeletal normal form (multiplicity
//! matrices plus canonical leg ordering) and provides:
//!
//! - trace-valued inner products, bases, conjugates and Connes fusion
//!   (skeletal fast path plus a Gram-quotient oracle),
//! - conjugate equations, connected components, standard solutions and
//!   matrix/scalar dimension,
//! - C*-Frobenius algebras: verification, specialization, standardization,
//!   construction from dual pairs,
//! - bimodules over Frobenius algebras, the projection p^B and the relative
//!   tensor product,
//! - the extension construction: the concrete algebra N = {L_ξ}, its center,
//!   the density operator k, the bimodule L²(N) and the unitary H ≅ X̄ ⊠ X,
//! - decomposition of finitely presented bicategories: unit summands, the
//!   equivalence relation on them, the Θ bifunctor and the assembled
//!   realization Φ with hom-dimension certificates.
//!
//! All values are immutable after construction and every operation is pure,
//! so concurrent use is safe. Batch entry points accept an execution mode;
//! data-parallel paths are enabled by the `parallel` feature (default).

pub mod algebra;
pub mod bimodule;
pub mod decomposition;
pub mod duality;
pub mod error;
pub mod exec;
pub mod frobenius;
pub mod fusion;
pub mod gram;
pub mod io;
pub mod linalg;
pub mod modules;
pub mod realization;
pub mod solver;

pub use algebra::{l2_inner, trace, AlgebraElement, CentralProjection, TracialAlgebra};
pub use bimodule::{
    act, act_left, act_right, hat, m_valued_inner, n_valued_inner, unhat, Bimodule, Intertwiner,
    Vector,
};
pub use error::{Error, Result};
pub use exec::Parallelism;
pub use linalg::DEFAULT_TOL;
