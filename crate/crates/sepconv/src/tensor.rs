//! Dense containers and the im2col lowering.
//!
//! [`Tensor3`] is a multichannel 2-D image stored row-major with the channel
//! index fastest: `index(y, x, c) = (y * width + x) * channels + c`. That
//! layout makes every im2col patch a sequence of contiguous channel reads and
//! keeps the group axis innermost for the grouped kernels.
//!
//! All operations here are valid-mode (no padding, stride 1) and pure; the
//! containers are immutable from the caller's perspective once built.

use thiserror::Error;

use crate::arith::Arith;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ShapeError {
    #[error("data length {got} does not match shape {expect}")]
    DataLength { expect: usize, got: usize },
    #[error("filter {kh}x{kw} exceeds image {height}x{width}")]
    FilterTooLarge {
        kh: usize,
        kw: usize,
        height: usize,
        width: usize,
    },
    #[error("matrix product needs lhs.cols == rhs.rows, got {lhs_cols} vs {rhs_rows}")]
    MatmulMismatch { lhs_cols: usize, rhs_rows: usize },
    #[error("column matrix is {rows}x{cols}, expected {expect_rows}x{expect_cols}")]
    ColumnShape {
        rows: usize,
        cols: usize,
        expect_rows: usize,
        expect_cols: usize,
    },
    #[error("image has {image} channels, layer expects {layer}")]
    ChannelMismatch { image: usize, layer: usize },
    #[error("zero-sized dimension is not allowed")]
    EmptyDimension,
}

/// Multichannel 2-D image: `height` rows, `width` cols, `channels` values per
/// pixel, channel index fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self, ShapeError> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(ShapeError::EmptyDimension);
        }
        let expect = height * width * channels;
        if data.len() != expect {
            return Err(ShapeError::DataLength {
                expect,
                got: data.len(),
            });
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
            data: vec![0.0; height * width * channels],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline(always)]
    pub fn index(&self, y: usize, x: usize, c: usize) -> usize {
        (y * self.width + x) * self.channels + c
    }

    #[inline(always)]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[self.index(y, x, c)]
    }

    #[inline(always)]
    pub fn set(&mut self, y: usize, x: usize, c: usize, v: f64) {
        let i = self.index(y, x, c);
        self.data[i] = v;
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Elementwise map into a new tensor of the same shape.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix2 {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix2 {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, ShapeError> {
        if data.len() != rows * cols {
            return Err(ShapeError::DataLength {
                expect: rows * cols,
                got: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline(always)]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline(always)]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    /// `self * rhs` with a fixed i-k-j loop order, so summation order (and
    /// therefore the bit pattern of the result) is identical on every run.
    pub fn matmul(&self, rhs: &Matrix2) -> Result<Matrix2, ShapeError> {
        if self.cols != rhs.rows {
            return Err(ShapeError::MatmulMismatch {
                lhs_cols: self.cols,
                rhs_rows: rhs.rows,
            });
        }
        let data = matmul_core::<f64>(&self.data, self.rows, self.cols, &rhs.data, rhs.cols);
        Ok(Matrix2 {
            rows: self.rows,
            cols: rhs.cols,
            data,
        })
    }
}

/// i-k-j product. The k == 0 pass writes `a*b` directly, so each output
/// element accumulates exactly `inner - 1` additions.
pub(crate) fn matmul_core<T: Arith>(
    a: &[f64],
    a_rows: usize,
    inner: usize,
    b: &[f64],
    b_cols: usize,
) -> Vec<f64> {
    let mut out: Vec<T> = vec![T::from_f64(0.0); a_rows * b_cols];
    for i in 0..a_rows {
        let out_row = i * b_cols;
        for k in 0..inner {
            let a_ik = T::from_f64(a[i * inner + k]);
            let b_row = k * b_cols;
            if k == 0 {
                for j in 0..b_cols {
                    out[out_row + j] = a_ik.mul(T::from_f64(b[b_row + j]));
                }
            } else {
                for j in 0..b_cols {
                    out[out_row + j] = out[out_row + j].add(a_ik.mul(T::from_f64(b[b_row + j])));
                }
            }
        }
    }
    out.into_iter().map(Arith::to_f64).collect()
}

/// Lowers the image into a patch matrix so valid convolution becomes one
/// matrix product.
///
/// Row `r` holds the receptive field of output pixel `r` (row-major over the
/// `(height-kh+1) x (width-kw+1)` output grid); columns are ordered
/// `(dy, dx, c)` with the channel fastest.
pub fn im2col(image: &Tensor3, kh: usize, kw: usize) -> Result<Matrix2, ShapeError> {
    let (n, m, c) = (image.height(), image.width(), image.channels());
    if kh > n || kw > m || kh == 0 || kw == 0 {
        return Err(ShapeError::FilterTooLarge {
            kh,
            kw,
            height: n,
            width: m,
        });
    }
    let out_h = n - kh + 1;
    let out_w = m - kw + 1;
    let cols = kh * kw * c;
    let mut data = Vec::with_capacity(out_h * out_w * cols);
    let src = image.data();
    for oy in 0..out_h {
        for ox in 0..out_w {
            for dy in 0..kh {
                // (dy, dx, 0..c) is contiguous in the source row.
                let start = ((oy + dy) * m + ox) * c;
                data.extend_from_slice(&src[start..start + kw * c]);
            }
        }
    }
    Matrix2::new(out_h * out_w, cols, data)
}

/// Adjoint of [`im2col`]: scatter-adds every patch entry back onto the pixel
/// it was read from, so `<im2col(x), y> == <x, col2im(y)>` for all `x`, `y`.
pub fn col2im_accumulate(
    cols: &Matrix2,
    height: usize,
    width: usize,
    channels: usize,
    kh: usize,
    kw: usize,
) -> Result<Tensor3, ShapeError> {
    if kh > height || kw > width || kh == 0 || kw == 0 {
        return Err(ShapeError::FilterTooLarge {
            kh,
            kw,
            height,
            width,
        });
    }
    let out_h = height - kh + 1;
    let out_w = width - kw + 1;
    let expect_cols = kh * kw * channels;
    if cols.rows() != out_h * out_w || cols.cols() != expect_cols {
        return Err(ShapeError::ColumnShape {
            rows: cols.rows(),
            cols: cols.cols(),
            expect_rows: out_h * out_w,
            expect_cols,
        });
    }
    let mut image = Tensor3::zeros(height, width, channels);
    let dst = image.data_mut();
    let src = cols.data();
    for oy in 0..out_h {
        for ox in 0..out_w {
            let row = (oy * out_w + ox) * expect_cols;
            for dy in 0..kh {
                let col_start = row + dy * kw * channels;
                let img_start = ((oy + dy) * width + ox) * channels;
                for off in 0..kw * channels {
                    dst[img_start + off] += src[col_start + off];
                }
            }
        }
    }
    Ok(image)
}
