//! Minimal convolutional network machinery: dense GEMM, im2col geometry,
//! strided convolution, transposed convolution, a U-Net and Adam.
//!
//! Activations are stored channel-major over the whole batch (`[C][N][H][W]`)
//! so every layer is a single matrix product with the batch folded into the
//! column dimension, and skip concatenation is plain vector appending.

mod adam;
mod unet;

pub use adam::Adam;
pub use unet::{LayerKind, LayerSpec, ModelConfig, ParamLayout, Tape, TensorSpec, UNet};

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Mul, Sub};

/// Floating-point element type of a network.
pub trait Scalar:
    Copy
    + Default
    + PartialOrd
    + Debug
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + AddAssign
{
    const ZERO: Self;
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;

    /// `C = alpha · op(A) · op(B) + beta · C` on raw strided storage.
    ///
    /// # Safety
    /// Pointers and strides must describe valid, non-aliasing matrices.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );
}

impl Scalar for f32 {
    const ZERO: Self = 0.0;
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

impl Scalar for f64 {
    const ZERO: Self = 0.0;
    fn from_f64(v: f64) -> Self {
        v
    }
    fn to_f64(self) -> f64 {
        self
    }
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

/// Row-major `C (m×n) = op(A) · op(B) + beta · C`. `A` is stored `m×k`
/// (or `k×m` when `trans_a`), `B` is stored `k×n` (or `n×k` when `trans_b`).
#[allow(clippy::too_many_arguments)]
pub fn gemm<T: Scalar>(
    trans_a: bool,
    trans_b: bool,
    m: usize,
    n: usize,
    k: usize,
    a: &[T],
    b: &[T],
    beta: T,
    c: &mut [T],
) {
    assert_eq!(a.len(), m * k, "gemm: A has wrong size");
    assert_eq!(b.len(), k * n, "gemm: B has wrong size");
    assert_eq!(c.len(), m * n, "gemm: C has wrong size");
    let (rsa, csa) = if trans_a {
        (1, m as isize)
    } else {
        (k as isize, 1)
    };
    let (rsb, csb) = if trans_b {
        (1, k as isize)
    } else {
        (n as isize, 1)
    };
    // SAFETY: sizes are checked above; `c` is a unique borrow.
    unsafe {
        T::gemm_raw(
            m,
            k,
            n,
            T::from_f64(1.0),
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        )
    }
}

/// Geometry of a stride-`s` convolution from a `[c][n][h][w]` tensor to
/// `[..][n][ho][wo]`. The same geometry drives the transposed convolution in
/// the opposite direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub c: usize,
    pub n: usize,
    pub h: usize,
    pub w: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub ho: usize,
    pub wo: usize,
}

impl ConvGeom {
    pub fn new(
        c: usize,
        n: usize,
        h: usize,
        w: usize,
        k: usize,
        stride: usize,
        pad: usize,
    ) -> Self {
        let ho = (h + 2 * pad - k) / stride + 1;
        let wo = (w + 2 * pad - k) / stride + 1;
        Self {
            c,
            n,
            h,
            w,
            k,
            stride,
            pad,
            ho,
            wo,
        }
    }

    pub fn col_rows(&self) -> usize {
        self.c * self.k * self.k
    }

    pub fn col_cols(&self) -> usize {
        self.n * self.ho * self.wo
    }

    /// Source pixel of output `(oy, ox)` under kernel tap `(ky, kx)`.
    #[inline]
    fn source(&self, o: usize, kk: usize, size: usize) -> Option<usize> {
        let p = (o * self.stride + kk) as isize - self.pad as isize;
        (p >= 0 && (p as usize) < size).then_some(p as usize)
    }

    /// `[c][n][h][w]` → `[(c, ky, kx)][(n, oy, ox)]`.
    pub fn im2col<T: Scalar>(&self, x: &[T], cols: &mut [T]) {
        assert_eq!(x.len(), self.c * self.n * self.h * self.w);
        assert_eq!(cols.len(), self.col_rows() * self.col_cols());
        let ncols = self.col_cols();
        let plane = self.h * self.w;
        for c in 0..self.c {
            for ky in 0..self.k {
                for kx in 0..self.k {
                    let row = (c * self.k + ky) * self.k + kx;
                    let dst = &mut cols[row * ncols..(row + 1) * ncols];
                    for b in 0..self.n {
                        let src = &x[(c * self.n + b) * plane..][..plane];
                        for oy in 0..self.ho {
                            let out = &mut dst[(b * self.ho + oy) * self.wo..][..self.wo];
                            match self.source(oy, ky, self.h) {
                                None => out.fill(T::ZERO),
                                Some(iy) => {
                                    for (ox, o) in out.iter_mut().enumerate() {
                                        *o = match self.source(ox, kx, self.w) {
                                            Some(ix) => src[iy * self.w + ix],
                                            None => T::ZERO,
                                        };
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    /// Adjoint of [`ConvGeom::im2col`]: scatter-adds columns back into `x`
    /// (which is overwritten).
    pub fn col2im<T: Scalar>(&self, cols: &[T], x: &mut [T]) {
        assert_eq!(x.len(), self.c * self.n * self.h * self.w);
        assert_eq!(cols.len(), self.col_rows() * self.col_cols());
        x.fill(T::ZERO);
        let ncols = self.col_cols();
        let plane = self.h * self.w;
        for c in 0..self.c {
            for ky in 0..self.k {
                for kx in 0..self.k {
                    let row = (c * self.k + ky) * self.k + kx;
                    let src = &cols[row * ncols..(row + 1) * ncols];
                    for b in 0..self.n {
                        let dst = &mut x[(c * self.n + b) * plane..][..plane];
                        for oy in 0..self.ho {
                            let Some(iy) = self.source(oy, ky, self.h) else {
                                continue;
                            };
                            let inp = &src[(b * self.ho + oy) * self.wo..][..self.wo];
                            for (ox, &v) in inp.iter().enumerate() {
                                if let Some(ix) = self.source(ox, kx, self.w) {
                                    dst[iy * self.w + ix] += v;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}
