//! Dense loops behind the differentiable ops. All matrices are row-major
//! slices; every routine accumulates into `out`.

/// `out[m x n] += A[m x k] * B[k x n]`, with each operand given as a slice
/// plus (row, column) strides.
fn gemm_acc(
    (m, k, n): (usize, usize, usize),
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    out: &mut [f64],
) {
    if m == 0 || k == 0 || n == 0 {
        return;
    }
    assert!(a.len() > (m - 1) * rsa + (k - 1) * csa, "lhs too short");
    assert!(b.len() > (k - 1) * rsb + (n - 1) * csb, "rhs too short");
    assert!(out.len() >= m * n, "output too short");
    // SAFETY: the asserts above keep every strided access in bounds, and
    // `out` cannot alias the shared borrows `a` and `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            1.0,
            out.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// `out[m x n] += a[m x k] * b[k x n]`
pub(crate) fn matmul_acc(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    gemm_acc((m, k, n), a, (k, 1), b, (n, 1), out);
}

/// `out[m x n] += a[m x k] * b[n x k]^T`
pub(crate) fn matmul_nt_acc(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    gemm_acc((m, k, n), a, (k, 1), b, (1, k), out);
}

/// `out[m x n] += a[k x m]^T * b[k x n]`
pub(crate) fn matmul_tn_acc(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    gemm_acc((m, k, n), a, (1, m), b, (n, 1), out);
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    // four partial sums let the compiler vectorize
    let mut acc = [0.0; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        for l in 0..4 {
            acc[l] += a[c * 4 + l] * b[c * 4 + l];
        }
    }
    let mut tail = 0.0;
    for i in chunks * 4..a.len() {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Geometry of a square-kernel 2-D convolution over one `C x H x W` image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeom {
    pub fn new(channels: usize, height: usize, width: usize, kernel: usize, stride: usize, pad: usize) -> Option<Self> {
        if stride == 0 || kernel == 0 || height + 2 * pad < kernel || width + 2 * pad < kernel {
            return None;
        }
        Some(Self {
            channels,
            height,
            width,
            kernel,
            stride,
            pad,
            out_h: (height + 2 * pad - kernel) / stride + 1,
            out_w: (width + 2 * pad - kernel) / stride + 1,
        })
    }

    /// Rows of the unfolded matrix: `C * k * k`.
    pub fn patch_len(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    /// Columns of the unfolded matrix: output positions.
    pub fn positions(&self) -> usize {
        self.out_h * self.out_w
    }

    /// Calls `f(dst, src, len)` for every run of in-bounds taps sharing a
    /// kernel offset and output row: `len` consecutive column entries from
    /// `dst` read the input at `src, src + stride, ...`. Columns are indexed
    /// in a matrix whose rows are `row_stride` long and whose entries for
    /// this image start at `offset`.
    fn for_each_run(&self, row_stride: usize, offset: usize, mut f: impl FnMut(usize, usize, usize)) {
        let (k, s, pad) = (self.kernel, self.stride, self.pad);
        for c in 0..self.channels {
            for ky in 0..k {
                for kx in 0..k {
                    let q = (c * k + ky) * k + kx;
                    let lo = if kx >= pad { 0 } else { (pad - kx).div_ceil(s) };
                    let hi = if self.width + pad > kx {
                        self.out_w.min((self.width + pad - kx - 1) / s + 1)
                    } else {
                        0
                    };
                    if lo >= hi {
                        continue;
                    }
                    for oy in 0..self.out_h {
                        let iy = (oy * s + ky) as isize - pad as isize;
                        if iy < 0 || iy >= self.height as isize {
                            continue;
                        }
                        let src = (c * self.height + iy as usize) * self.width + lo * s + kx - pad;
                        f(q * row_stride + offset + oy * self.out_w + lo, src, hi - lo);
                    }
                }
            }
        }
    }

    /// Unfolds one image into columns `offset..offset + out_h * out_w` of a
    /// `(C k k) x row_stride` matrix. Padding taps are left untouched, so
    /// `cols` must start zeroed.
    pub fn im2col(&self, image: &[f64], cols: &mut [f64], row_stride: usize, offset: usize) {
        let s = self.stride;
        self.for_each_run(row_stride, offset, |dst, src, len| {
            if s == 1 {
                cols[dst..dst + len].copy_from_slice(&image[src..src + len]);
            } else {
                for (j, c) in cols[dst..dst + len].iter_mut().enumerate() {
                    *c = image[src + j * s];
                }
            }
        });
    }

    /// Adjoint of [`im2col`](Self::im2col): scatters `cols` back, accumulating.
    pub fn col2im_acc(&self, cols: &[f64], image: &mut [f64], row_stride: usize, offset: usize) {
        let s = self.stride;
        self.for_each_run(row_stride, offset, |dst, src, len| {
            for (j, c) in cols[dst..dst + len].iter().enumerate() {
                image[src + j * s] += c;
            }
        });
    }
}
