//! Floating-point abstraction shared by every numeric module.
//!
//! All signal, RBM and network math is written against [`Scalar`], so the
//! same code runs in `f32` (fast experiments) and `f64` (oracle tests and
//! gradient audits).

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive, ToPrimitive};

/// A real floating-point type usable in every numeric kernel of the crate.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + LinalgScalar
    + ScalarOperand
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Width in bytes of the little-endian encoding.
    const BYTES: usize;
    /// Type tag written into binary containers.
    const TAG: u8;

    /// Lossy conversion from `f64`; panics only on NaN-to-integer style
    /// failures, which cannot happen for float targets.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 converts to every float type")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("float converts to f64")
    }

    fn write_le(self, out: &mut Vec<u8>);

    /// Decodes from exactly `Self::BYTES` bytes.
    fn read_le(bytes: &[u8]) -> Self;

    fn sigmoid(self) -> Self {
        Self::one() / (Self::one() + (-self).exp())
    }
}

impl Scalar for f32 {
    const BYTES: usize = 4;
    const TAG: u8 = 4;

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes.try_into().expect("4-byte slice"))
    }
}

impl Scalar for f64 {
    const BYTES: usize = 8;
    const TAG: u8 = 8;

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes.try_into().expect("8-byte slice"))
    }
}
