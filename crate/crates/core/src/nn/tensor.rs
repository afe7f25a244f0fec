use super::NnError;

/// Dense `batch × channels × height × width` activations, row-major planes.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor4 {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl Tensor4 {
    pub fn new(n: usize, c: usize, h: usize, w: usize, data: Vec<f64>) -> Result<Self, NnError> {
        if data.len() != n * c * h * w {
            return Err(NnError::ShapeMismatch(format!(
                "{} values for {n}x{c}x{h}x{w}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(NnError::NonFinite);
        }
        Ok(Self { n, c, h, w, data })
    }

    pub fn zeros(n: usize, c: usize, h: usize, w: usize) -> Self {
        Self {
            n,
            c,
            h,
            w,
            data: vec![0.0; n * c * h * w],
        }
    }

    pub fn shape(&self) -> [usize; 4] {
        [self.n, self.c, self.h, self.w]
    }

    pub fn plane_len(&self) -> usize {
        self.h * self.w
    }

    #[inline]
    pub fn plane(&self, n: usize, c: usize) -> &[f64] {
        let p = self.plane_len();
        let o = (n * self.c + c) * p;
        &self.data[o..o + p]
    }

    #[inline]
    pub fn plane_mut(&mut self, n: usize, c: usize) -> &mut [f64] {
        let p = self.plane_len();
        let o = (n * self.c + c) * p;
        &mut self.data[o..o + p]
    }

    /// Stacks single-sample tensors along the batch axis.
    pub fn concat_batch(items: &[Tensor4]) -> Result<Tensor4, NnError> {
        let first = items
            .first()
            .ok_or_else(|| NnError::ShapeMismatch("empty batch".into()))?;
        let [_, c, h, w] = first.shape();
        let mut data = Vec::with_capacity(items.iter().map(|t| t.data.len()).sum());
        let mut n = 0;
        for t in items {
            if t.c != c || t.h != h || t.w != w {
                return Err(NnError::ShapeMismatch(format!(
                    "batch item {:?} vs {:?}",
                    t.shape(),
                    first.shape()
                )));
            }
            n += t.n;
            data.extend_from_slice(&t.data);
        }
        Ok(Tensor4 { n, c, h, w, data })
    }
}
