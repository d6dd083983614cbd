use super::RlError;

/// Dense `f x m x n` array (features x assets x intervals), row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    f: usize,
    m: usize,
    n: usize,
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(f: usize, m: usize, n: usize) -> Self {
        Self { f, m, n, data: vec![0.0; f * m * n] }
    }

    pub fn from_vec(f: usize, m: usize, n: usize, data: Vec<f64>) -> Result<Self, RlError> {
        if data.len() != f * m * n {
            return Err(RlError::Shape(format!("{} values for {f}x{m}x{n}", data.len())));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(RlError::NonFinite);
        }
        Ok(Self { f, m, n, data })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.f, self.m, self.n)
    }

    #[inline]
    fn offset(&self, fi: usize, mi: usize, ni: usize) -> usize {
        debug_assert!(fi < self.f && mi < self.m && ni < self.n);
        (fi * self.m + mi) * self.n + ni
    }

    pub fn get(&self, fi: usize, mi: usize, ni: usize) -> f64 {
        self.data[self.offset(fi, mi, ni)]
    }

    pub fn set(&mut self, fi: usize, mi: usize, ni: usize, v: f64) {
        let o = self.offset(fi, mi, ni);
        self.data[o] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}
