use crate::scalar::Scalar;

/// 2×3 affine matrix on normalized coordinates (output → source).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AffineTransform<T> {
    m: [[T; 3]; 2],
}

impl<T: Scalar> Default for AffineTransform<T> {
    fn default() -> Self {
        Self::identity()
    }
}

impl<T: Scalar> AffineTransform<T> {
    pub fn new(m: [[T; 3]; 2]) -> Self {
        Self { m }
    }

    pub fn from_f64(m: [[f64; 3]; 2]) -> Self {
        Self { m: m.map(|row| row.map(T::lit)) }
    }

    pub fn identity() -> Self {
        let (o, z) = (T::one(), T::zero());
        Self { m: [[o, z, z], [z, o, z]] }
    }

    /// Grid rotation by `radians` in the `[[c, s], [-s, c]]` orientation.
    pub fn rotation(radians: T) -> Self {
        let (s, c) = radians.sin_cos();
        let z = T::zero();
        Self { m: [[c, s, z], [-s, c, z]] }
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> T {
        self.m[row][col]
    }

    pub fn rows(&self) -> [[T; 3]; 2] {
        self.m
    }

    /// Transform that applies `self` to an image and then `next`.
    ///
    /// With backward warping the composite samples `self(next(p))`, i.e. the
    /// homogeneous product `self · next`.
    pub fn compose(&self, next: &AffineTransform<T>) -> AffineTransform<T> {
        let a = &self.m;
        let b = &next.m;
        let mut out = [[T::zero(); 3]; 2];
        for (r, row) in out.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                let mut s = a[r][0] * b[0][c] + a[r][1] * b[1][c];
                if c == 2 {
                    s += a[r][2];
                }
                *v = s;
            }
        }
        AffineTransform { m: out }
    }

    #[inline]
    pub fn apply(&self, x: T, y: T) -> (T, T) {
        let m = &self.m;
        (m[0][0] * x + m[0][1] * y + m[0][2], m[1][0] * x + m[1][1] * y + m[1][2])
    }

    pub fn determinant(&self) -> T {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }

    /// Inverse map, or `None` for a singular linear part.
    pub fn inverse(&self) -> Option<Self> {
        let det = self.determinant();
        if det == T::zero() || !det.is_finite() {
            return None;
        }
        let [[a, b, tx], [c, d, ty]] = self.m;
        let ia = d / det;
        let ib = -b / det;
        let ic = -c / det;
        let id = a / det;
        Some(Self { m: [[ia, ib, -(ia * tx + ib * ty)], [ic, id, -(ic * tx + id * ty)]] })
    }

    pub fn is_finite(&self) -> bool {
        self.m.iter().flatten().all(|v| v.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.m
            .iter()
            .flatten()
            .zip(other.m.iter().flatten())
            .map(|(&a, &b)| (a - b).abs())
            .fold(T::zero(), T::max)
    }

    pub fn approx_eq(&self, other: &Self, tol: T) -> bool {
        self.max_abs_diff(other) <= tol
    }

    pub fn cast<U: Scalar>(&self) -> AffineTransform<U> {
        AffineTransform { m: self.m.map(|row| row.map(|v| U::lit(v.to_f64_lossy()))) }
    }
}
