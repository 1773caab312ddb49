use std::fmt::Debug;

use num_traits::{NumOps, One, Zero};

/// Field elements usable by the row-reduction kernel.
///
/// Exact types report zero exactly; floating types use a small tolerance so
/// that rank and nullspace computations stay meaningful.
pub trait Scalar: Clone + Debug + PartialEq + Zero + One + NumOps + std::ops::Neg<Output = Self> {
    fn is_negligible(&self) -> bool;
}

impl Scalar for num_rational::BigRational {
    fn is_negligible(&self) -> bool {
        self.is_zero()
    }
}

impl Scalar for num_rational::Ratio<i64> {
    fn is_negligible(&self) -> bool {
        self.is_zero()
    }
}

impl Scalar for f64 {
    fn is_negligible(&self) -> bool {
        self.abs() < 1e-9
    }
}

impl Scalar for f32 {
    fn is_negligible(&self) -> bool {
        self.abs() < 1e-5
    }
}
