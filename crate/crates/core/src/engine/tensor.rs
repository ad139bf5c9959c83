use std::fmt;

use super::{EngineError, Real};

/// Dense `(batch, channels, height, width)` array in row-major order.
#[derive(Clone, PartialEq)]
pub struct Tensor<T> {
    shape: [usize; 4],
    data: Vec<T>,
}

impl<T: fmt::Debug> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("len", &self.data.len())
            .finish()
    }
}

impl<T: Real> Tensor<T> {
    pub fn zeros(shape: [usize; 4]) -> Self {
        Self {
            shape,
            data: vec![T::zero(); shape.iter().product()],
        }
    }

    pub fn from_vec(shape: [usize; 4], data: Vec<T>) -> Result<Self, EngineError> {
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(EngineError::ShapeMismatch(format!(
                "shape {shape:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn from_fn(shape: [usize; 4], mut f: impl FnMut(usize) -> T) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: (0..n).map(&mut f).collect(),
        }
    }

    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    pub fn channels(&self) -> usize {
        self.shape[1]
    }

    pub fn height(&self) -> usize {
        self.shape[2]
    }

    pub fn width(&self) -> usize {
        self.shape[3]
    }

    pub fn plane_len(&self) -> usize {
        self.shape[2] * self.shape[3]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    fn offset(&self, b: usize, c: usize, y: usize, x: usize) -> usize {
        ((b * self.shape[1] + c) * self.shape[2] + y) * self.shape[3] + x
    }

    pub fn at(&self, b: usize, c: usize, y: usize, x: usize) -> T {
        self.data[self.offset(b, c, y, x)]
    }

    pub fn set(&mut self, b: usize, c: usize, y: usize, x: usize, v: T) {
        let i = self.offset(b, c, y, x);
        self.data[i] = v;
    }

    pub fn plane(&self, b: usize, c: usize) -> &[T] {
        let n = self.plane_len();
        let start = (b * self.shape[1] + c) * n;
        &self.data[start..start + n]
    }

    pub fn plane_mut(&mut self, b: usize, c: usize) -> &mut [T] {
        let n = self.plane_len();
        let start = (b * self.shape[1] + c) * n;
        &mut self.data[start..start + n]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape,
            data: self.data.iter().map(|v| f(*v)).collect(),
        }
    }

    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape,
            data: self
                .data
                .iter()
                .map(|v| U::from_f64(v.to_f64().expect("finite")).expect("finite"))
                .collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn add_assign(&mut self, other: &Tensor<T>) -> Result<(), EngineError> {
        if self.shape != other.shape {
            return Err(EngineError::ShapeMismatch(format!(
                "cannot add {:?} to {:?}",
                other.shape, self.shape
            )));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + *b;
        }
        Ok(())
    }
}

/// Stacks tensors along the channel axis in the given order.
pub fn concat_channels<T: Real>(xs: &[&Tensor<T>]) -> Result<Tensor<T>, EngineError> {
    let first = xs
        .first()
        .ok_or_else(|| EngineError::ShapeMismatch("nothing to concatenate".into()))?;
    let [b, _, h, w] = first.shape();
    if xs.iter().any(|t| t.batch() != b || t.height() != h || t.width() != w) {
        return Err(EngineError::ShapeMismatch(
            "concatenated tensors must share batch and spatial size".into(),
        ));
    }
    let channels: usize = xs.iter().map(|t| t.channels()).sum();
    let mut data = Vec::with_capacity(b * channels * h * w);
    for bi in 0..b {
        for t in xs {
            let n = t.channels() * h * w;
            data.extend_from_slice(&t.data()[bi * n..(bi + 1) * n]);
        }
    }
    Tensor::from_vec([b, channels, h, w], data)
}

/// Inverse of [`concat_channels`]: cuts a tensor into channel groups.
pub fn split_channels<T: Real>(t: &Tensor<T>, widths: &[usize]) -> Result<Vec<Tensor<T>>, EngineError> {
    let [b, c, h, w] = t.shape();
    if widths.iter().sum::<usize>() != c {
        return Err(EngineError::ShapeMismatch(format!(
            "split widths {widths:?} do not sum to {c} channels"
        )));
    }
    let mut parts: Vec<Vec<T>> = widths.iter().map(|wd| Vec::with_capacity(b * wd * h * w)).collect();
    let stride = c * h * w;
    for bi in 0..b {
        let mut start = bi * stride;
        for (part, wd) in parts.iter_mut().zip(widths) {
            let n = wd * h * w;
            part.extend_from_slice(&t.data()[start..start + n]);
            start += n;
        }
    }
    parts
        .into_iter()
        .zip(widths)
        .map(|(data, wd)| Tensor::from_vec([b, *wd, h, w], data))
        .collect()
}
