//! Scalar abstraction shared by the physics kernel.

use nalgebra::RealField;
use num_complex::Complex;
use num_traits::{FromPrimitive, ToPrimitive};

/// Real floating-point scalar the propagators, schedules and filter
/// functions are generic over. Implemented for `f32` and `f64`.
pub trait Real:
    RealField + Copy + FromPrimitive + ToPrimitive + Default + Send + Sync + 'static
{
    /// Lossy conversion from an `f64` literal.
    fn lit(x: f64) -> Self;

    /// Lossy conversion to `f64`.
    fn to_f64_lossy(self) -> f64;
}

macro_rules! impl_real {
    ($t:ty) => {
        impl Real for $t {
            #[inline(always)]
            fn lit(x: f64) -> Self {
                x as $t
            }

            #[inline(always)]
            fn to_f64_lossy(self) -> f64 {
                self as f64
            }
        }
    };
}

impl_real!(f32);
impl_real!(f64);

/// Complex amplitude over a [`Real`] scalar.
pub type Cplx<T> = Complex<T>;

/// `e^{i x}`.
#[inline]
pub fn cis<T: Real>(x: T) -> Cplx<T> {
    Complex::new(x.cos(), x.sin())
}

/// `|z|`.
#[inline]
pub fn modulus<T: Real>(z: Cplx<T>) -> T {
    z.re.hypot(z.im)
}

/// `arg z` in `(-π, π]`.
#[inline]
pub fn argument<T: Real>(z: Cplx<T>) -> T {
    z.im.atan2(z.re)
}

/// Wraps an angle into `[0, 2π)`.
pub fn wrap_positive<T: Real>(x: T) -> T {
    let two_pi = T::two_pi();
    let mut r = x % two_pi;
    if r < T::zero() {
        r += two_pi;
    }
    if r >= two_pi {
        r -= two_pi;
    }
    r
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_signed<T: Real>(x: T) -> T {
    let r = wrap_positive(x);
    if r > T::pi() {
        r - T::two_pi()
    } else {
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wraps_into_range() {
        let tau = std::f64::consts::TAU;
        assert!((wrap_positive(-0.5) - (tau - 0.5)).abs() < 1e-15);
        assert!((wrap_positive(tau + 0.25) - 0.25).abs() < 1e-15);
        assert!((wrap_signed(3.0 * std::f64::consts::PI / 2.0) + std::f64::consts::FRAC_PI_2).abs() < 1e-15);
        assert_eq!(wrap_signed(std::f64::consts::PI), std::f64::consts::PI);
        assert!((wrap_signed(-1.0f32) + 1.0).abs() < 1e-6);
    }
}
