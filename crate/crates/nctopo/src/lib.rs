//! Finite noncommutative topologies and their commutative shadows.
//!
//! The crate works with finite carriers only: every statement is decided by
//! exhaustive enumeration. Linear algebra for presheaves and subspace lattices
//! runs over exact rationals by default, but the kernel in [`linalg`] is generic
//! over any [`Scalar`].

pub mod completion;
pub mod dynamics;
pub mod fixtures;
pub mod hilbert;
pub mod linalg;
pub mod order;
pub mod random;
pub mod sheaves;
pub mod space;
pub mod spectral;

mod scalar;

pub use scalar::Scalar;

/// Exact rationals used throughout the sheaf and subspace code.
pub type Rational = num_rational::BigRational;
/// Small exact rationals, handy for tests that never overflow.
pub type SmallRational = num_rational::Ratio<i64>;

pub type QMatrix = linalg::Matrix<Rational>;
pub type Matrix64 = linalg::Matrix<f64>;
pub type Matrix32 = linalg::Matrix<f32>;

pub use order::{AxiomReport, Elem, SkewTopology, Status};

/// Build a rational from a pair of machine integers.
pub fn q(num: i64, den: i64) -> Rational {
    Rational::new(num.into(), den.into())
}

/// Build an integral rational.
pub fn qi(n: i64) -> Rational {
    Rational::from_integer(n.into())
}

/// A rational matrix from row-major machine integers.
pub fn int_matrix(rows: usize, cols: usize, entries: &[i64]) -> QMatrix {
    assert_eq!(entries.len(), rows * cols, "entry count");
    QMatrix::from_fn(rows, cols, |r, c| qi(entries[r * cols + c]))
}

/// Outcome of a certified property that carries a readable witness on failure.
#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize)]
pub struct Check {
    pub holds: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<String>,
}

impl Check {
    pub fn ok() -> Check {
        Check { holds: true, witness: None }
    }

    pub fn fail(witness: impl Into<String>) -> Check {
        Check { holds: false, witness: Some(witness.into()) }
    }

    /// Holds exactly when no witness was found.
    pub fn from_witness(w: Option<String>) -> Check {
        match w {
            None => Check::ok(),
            Some(w) => Check::fail(w),
        }
    }
}

/// Serializers writing rationals as strings such as `"3/2"`.
pub mod qser {
    use serde::ser::{SerializeSeq, Serializer};

    use crate::Rational;

    pub fn one<S: Serializer>(x: &Rational, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&x.to_string())
    }

    pub fn many<S: Serializer>(xs: &[Rational], s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(xs.len()))?;
        for x in xs {
            seq.serialize_element(&x.to_string())?;
        }
        seq.end()
    }

    /// `None` is written as `"inf"`.
    pub fn place<S: Serializer>(x: &Option<Rational>, s: S) -> Result<S::Ok, S::Error> {
        match x {
            Some(x) => s.serialize_str(&x.to_string()),
            None => s.serialize_str("inf"),
        }
    }
}
