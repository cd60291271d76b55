use std::fmt::{Debug, Display};

/// Floating-point scalar the numeric kernels are generic over.
///
/// The only members beyond the `num-traits` bundle are the GEMM hooks, which
/// dispatch to the `matrixmultiply` kernels for the matching precision.
pub trait Scalar:
    num_traits::Float
    + num_traits::FromPrimitive
    + num_traits::ToPrimitive
    + num_traits::NumAssignOps
    + std::iter::Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// C <- alpha * A(m x k) * B(k x n) + beta * C, all row-major contiguous.
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        b: &[Self],
        beta: Self,
        c: &mut [Self],
    );

    /// Same contraction with A supplied transposed, i.e. A is stored k x m.
    fn gemm_at(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        b: &[Self],
        beta: Self,
        c: &mut [Self],
    );

    /// Same contraction with B supplied transposed, i.e. B is stored n x k.
    fn gemm_bt(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        b: &[Self],
        beta: Self,
        c: &mut [Self],
    );

    /// Lossy conversion from `f64` (named to avoid colliding with
    /// `FromPrimitive::from_f64`).
    fn from_f64v(v: f64) -> Self {
        num_traits::FromPrimitive::from_f64(v).unwrap()
    }

    fn to_f64v(self) -> f64 {
        num_traits::ToPrimitive::to_f64(&self).unwrap()
    }
}

macro_rules! impl_scalar {
    ($t:ty, $gemm:path) => {
        impl Scalar for $t {
            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: &[Self],
                b: &[Self],
                beta: Self,
                c: &mut [Self],
            ) {
                assert_eq!(a.len(), m * k, "gemm: A size");
                assert_eq!(b.len(), k * n, "gemm: B size");
                assert_eq!(c.len(), m * n, "gemm: C size");
                unsafe {
                    $gemm(
                        m,
                        k,
                        n,
                        alpha,
                        a.as_ptr(),
                        k as isize,
                        1,
                        b.as_ptr(),
                        n as isize,
                        1,
                        beta,
                        c.as_mut_ptr(),
                        n as isize,
                        1,
                    );
                }
            }

            fn gemm_at(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: &[Self],
                b: &[Self],
                beta: Self,
                c: &mut [Self],
            ) {
                assert_eq!(a.len(), k * m, "gemm_at: A size");
                assert_eq!(b.len(), k * n, "gemm_at: B size");
                assert_eq!(c.len(), m * n, "gemm_at: C size");
                unsafe {
                    $gemm(
                        m,
                        k,
                        n,
                        alpha,
                        a.as_ptr(),
                        1,
                        m as isize,
                        b.as_ptr(),
                        n as isize,
                        1,
                        beta,
                        c.as_mut_ptr(),
                        n as isize,
                        1,
                    );
                }
            }

            fn gemm_bt(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: &[Self],
                b: &[Self],
                beta: Self,
                c: &mut [Self],
            ) {
                assert_eq!(a.len(), m * k, "gemm_bt: A size");
                assert_eq!(b.len(), n * k, "gemm_bt: B size");
                assert_eq!(c.len(), m * n, "gemm_bt: C size");
                unsafe {
                    $gemm(
                        m,
                        k,
                        n,
                        alpha,
                        a.as_ptr(),
                        k as isize,
                        1,
                        b.as_ptr(),
                        1,
                        k as isize,
                        beta,
                        c.as_mut_ptr(),
                        n as isize,
                        1,
                    );
                }
            }
        }
    };
}

impl_scalar!(f32, matrixmultiply::sgemm);
impl_scalar!(f64, matrixmultiply::dgemm);
