//! Multi-dimensional FFTs over `ndarray` grids.
//!
//! Spectra use standard DFT ordering: the DC term sits at index 0 on every
//! axis and negative frequencies occupy the upper half. Forward transforms
//! are unnormalized; inverse transforms divide by the element count.

use ndarray::{Array2, Array3};
use num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};
use std::sync::Arc;

/// Transforms every lane along `axis` of a standard-layout buffer. Strided
/// axes are handled block by block: each block of lanes is transposed into a
/// contiguous scratch buffer, transformed in one batched call, and copied back.
fn transform_axis(data: &mut [Complex64], shape: &[usize], axis: usize, fft: &Arc<dyn Fft<f64>>) {
    let n = shape[axis];
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
    if inner == 1 {
        fft.process_with_scratch(data, &mut scratch);
        return;
    }
    let block = n * inner;
    let mut buf = vec![Complex64::default(); block];
    for chunk in data.chunks_exact_mut(block) {
        for k in 0..n {
            for i in 0..inner {
                buf[i * n + k] = chunk[k * inner + i];
            }
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        for k in 0..n {
            for i in 0..inner {
                chunk[k * inner + i] = buf[i * n + k];
            }
        }
    }
    debug_assert_eq!(data.len(), outer * block);
}

fn run_nd<D: ndarray::Dimension>(data: &mut ndarray::Array<Complex64, D>, direction: FftDirection) {
    if data.is_empty() {
        return;
    }
    if !data.is_standard_layout() {
        *data = data.as_standard_layout().into_owned();
    }
    let shape = data.shape().to_vec();
    let slice = data.as_slice_mut().expect("standard layout");
    let mut planner = FftPlanner::new();
    for (axis, &n) in shape.iter().enumerate() {
        let fft = planner.plan_fft(n, direction);
        transform_axis(slice, &shape, axis, &fft);
    }
    if direction == FftDirection::Inverse {
        let scale = 1.0 / slice.len() as f64;
        slice.iter_mut().for_each(|v| *v *= scale);
    }
}

pub fn fft2(data: &mut Array2<Complex64>) {
    run_nd(data, FftDirection::Forward);
}

pub fn ifft2(data: &mut Array2<Complex64>) {
    run_nd(data, FftDirection::Inverse);
}

pub fn fft3(data: &mut Array3<Complex64>) {
    run_nd(data, FftDirection::Forward);
}

pub fn ifft3(data: &mut Array3<Complex64>) {
    run_nd(data, FftDirection::Inverse);
}

/// Signed frequency of DFT bin `index` on an axis of length `n`, in cycles per sample.
#[inline]
pub fn bin_frequency(index: usize, n: usize) -> f64 {
    let i = index as i64;
    let n_i = n as i64;
    let signed = if i >= (n_i + 1) / 2 { i - n_i } else { i };
    signed as f64 / n as f64
}

/// Rolls a grid so that the element at `n/2` on every axis moves to index 0.
pub fn ifftshift2<T: Clone>(data: &Array2<T>) -> Array2<T> {
    let (h, w) = data.dim();
    Array2::from_shape_fn((h, w), |(r, c)| data[[(r + h / 2) % h, (c + w / 2) % w]].clone())
}

/// Inverse of [`ifftshift2`].
pub fn fftshift2<T: Clone>(data: &Array2<T>) -> Array2<T> {
    let (h, w) = data.dim();
    Array2::from_shape_fn((h, w), |(r, c)| {
        data[[(r + h - h / 2) % h, (c + w - w / 2) % w]].clone()
    })
}

pub fn ifftshift3<T: Clone>(data: &Array3<T>) -> Array3<T> {
    let (a, b, c) = data.dim();
    Array3::from_shape_fn((a, b, c), |(i, j, k)| {
        data[[(i + a / 2) % a, (j + b / 2) % b, (k + c / 2) % c]].clone()
    })
}

pub fn fftshift3<T: Clone>(data: &Array3<T>) -> Array3<T> {
    let (a, b, c) = data.dim();
    Array3::from_shape_fn((a, b, c), |(i, j, k)| {
        data[[(i + a - a / 2) % a, (j + b - b / 2) % b, (k + c - c / 2) % c]].clone()
    })
}
