//! Quaternion arithmetic and the split vector layout shared by every layer.
//!
//! A vector of `N` quaternions is stored as `4N` reals: all real parts first,
//! then all `i` parts, then `j`, then `k`.

use std::ops::{Add, Mul, Neg, Sub};

use crate::error::{Error, Result};

/// `r + x·i + y·j + z·k`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Quaternion {
    pub r: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Quaternion {
    pub const ZERO: Quaternion = Quaternion::new(0.0, 0.0, 0.0, 0.0);
    pub const ONE: Quaternion = Quaternion::new(1.0, 0.0, 0.0, 0.0);
    pub const I: Quaternion = Quaternion::new(0.0, 1.0, 0.0, 0.0);
    pub const J: Quaternion = Quaternion::new(0.0, 0.0, 1.0, 0.0);
    pub const K: Quaternion = Quaternion::new(0.0, 0.0, 0.0, 1.0);

    pub const fn new(r: f64, x: f64, y: f64, z: f64) -> Self {
        Self { r, x, y, z }
    }

    pub fn from_array(c: [f64; 4]) -> Self {
        Self::new(c[0], c[1], c[2], c[3])
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.r, self.x, self.y, self.z]
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|c| c.is_finite())
    }

    pub fn conjugate(self) -> Self {
        Self::new(self.r, -self.x, -self.y, -self.z)
    }

    pub fn norm_squared(self) -> f64 {
        self.r * self.r + self.x * self.x + self.y * self.y + self.z * self.z
    }

    pub fn norm(self) -> f64 {
        self.norm_squared().sqrt()
    }

    /// Hamilton product `self ⊗ rhs`.
    pub fn hamilton(self, rhs: Self) -> Self {
        hamilton_product(self, rhs)
    }

    /// Matrix `M` with `M · [r2, x2, y2, z2]ᵀ = self ⊗ q2`, rows in `r, x, y, z` order.
    pub fn left_mul_matrix(self) -> [[f64; 4]; 4] {
        let Self { r, x, y, z } = self;
        [[r, -x, -y, -z], [x, r, -z, y], [y, z, r, -x], [z, -y, x, r]]
    }
}

/// The Hamilton product `q1 ⊗ q2`.
pub fn hamilton_product(q1: Quaternion, q2: Quaternion) -> Quaternion {
    let Quaternion { r: r1, x: x1, y: y1, z: z1 } = q1;
    let Quaternion { r: r2, x: x2, y: y2, z: z2 } = q2;
    Quaternion {
        r: r1 * r2 - x1 * x2 - y1 * y2 - z1 * z2,
        x: r1 * x2 + x1 * r2 + y1 * z2 - z1 * y2,
        y: r1 * y2 - x1 * z2 + y1 * r2 + z1 * x2,
        z: r1 * z2 + x1 * y2 - y1 * x2 + z1 * r2,
    }
}

/// Sign and source component of block `(row, col)` of the left-multiplication
/// matrix, where components are indexed `r=0, x=1, y=2, z=3`.
///
/// `left_mul_matrix(q)[row][col] == sign * q[component]`.
pub const fn left_mul_pattern(row: usize, col: usize) -> (f64, usize) {
    const PATTERN: [[(f64, usize); 4]; 4] = [
        [(1.0, 0), (-1.0, 1), (-1.0, 2), (-1.0, 3)],
        [(1.0, 1), (1.0, 0), (-1.0, 3), (1.0, 2)],
        [(1.0, 2), (1.0, 3), (1.0, 0), (-1.0, 1)],
        [(1.0, 3), (-1.0, 2), (1.0, 1), (1.0, 0)],
    ];
    PATTERN[row][col]
}

impl Mul for Quaternion {
    type Output = Quaternion;

    fn mul(self, rhs: Self) -> Self {
        hamilton_product(self, rhs)
    }
}

impl Add for Quaternion {
    type Output = Quaternion;

    fn add(self, rhs: Self) -> Self {
        Self::new(self.r + rhs.r, self.x + rhs.x, self.y + rhs.y, self.z + rhs.z)
    }
}

impl Sub for Quaternion {
    type Output = Quaternion;

    fn sub(self, rhs: Self) -> Self {
        Self::new(self.r - rhs.r, self.x - rhs.x, self.y - rhs.y, self.z - rhs.z)
    }
}

impl Neg for Quaternion {
    type Output = Quaternion;

    fn neg(self) -> Self {
        Self::new(-self.r, -self.x, -self.y, -self.z)
    }
}

/// `N` quaternions in split layout.
#[derive(Clone, Debug, PartialEq)]
pub struct QuaternionVector {
    components: Vec<f64>,
}

impl QuaternionVector {
    pub fn zeros(n_quats: usize) -> Self {
        Self { components: vec![0.0; 4 * n_quats] }
    }

    /// Wraps a split-layout buffer. Fails if the length is not a multiple of four.
    pub fn from_components(components: Vec<f64>) -> Result<Self> {
        if !components.len().is_multiple_of(4) {
            return Err(Error::MalformedVector { len: components.len() });
        }
        Ok(Self { components })
    }

    pub fn n_quats(&self) -> usize {
        self.components.len() / 4
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn components(&self) -> &[f64] {
        &self.components
    }

    pub fn components_mut(&mut self) -> &mut [f64] {
        &mut self.components
    }

    pub fn into_components(self) -> Vec<f64> {
        self.components
    }

    pub fn get(&self, n: usize) -> Quaternion {
        let q = self.n_quats();
        let c = &self.components;
        Quaternion::new(c[n], c[q + n], c[2 * q + n], c[3 * q + n])
    }

    pub fn set(&mut self, n: usize, value: Quaternion) {
        let q = self.n_quats();
        let c = &mut self.components;
        c[n] = value.r;
        c[q + n] = value.x;
        c[2 * q + n] = value.y;
        c[3 * q + n] = value.z;
    }

    pub fn iter(&self) -> impl Iterator<Item = Quaternion> + '_ {
        (0..self.n_quats()).map(move |n| self.get(n))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { components: self.components.iter().map(|&v| f(v)).collect() }
    }

    pub fn is_finite(&self) -> bool {
        self.components.iter().all(|v| v.is_finite())
    }
}

/// Packs quaternions into split layout.
pub fn pack_split(quats: &[Quaternion]) -> QuaternionVector {
    let mut v = QuaternionVector::zeros(quats.len());
    for (n, q) in quats.iter().enumerate() {
        v.set(n, *q);
    }
    v
}

/// Inverse of [`pack_split`].
pub fn unpack_split(v: &QuaternionVector) -> Vec<Quaternion> {
    v.iter().collect()
}

/// Reads a raw split-layout buffer into quaternions.
pub fn unpack_split_slice(components: &[f64]) -> Result<Vec<Quaternion>> {
    let v = QuaternionVector::from_components(components.to_vec())?;
    Ok(unpack_split(&v))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(r: f64, x: f64, y: f64, z: f64) -> Quaternion {
        Quaternion::new(r, x, y, z)
    }

    #[test]
    fn identity_element() {
        let a = q(0.3, -1.2, 4.0, 2.5);
        assert_eq!(Quaternion::ONE * a, a);
        assert_eq!(a * Quaternion::ONE, a);
    }

    #[test]
    fn unit_basis_rules() {
        assert_eq!(Quaternion::I * Quaternion::J, Quaternion::K);
        assert_eq!(Quaternion::J * Quaternion::I, -Quaternion::K);
        assert_eq!(Quaternion::J * Quaternion::K, Quaternion::I);
        assert_eq!(Quaternion::K * Quaternion::I, Quaternion::J);
        let minus_one = -Quaternion::ONE;
        assert_eq!(Quaternion::I * Quaternion::I, minus_one);
        assert_eq!(Quaternion::J * Quaternion::J, minus_one);
        assert_eq!(Quaternion::K * Quaternion::K, minus_one);
        assert_eq!(Quaternion::I * Quaternion::J * Quaternion::K, minus_one);
    }

    #[test]
    fn worked_product() {
        // Expanded by hand:
        // r = 5 - 12 - 21 - 32 = -60
        // x = 6 + 10 + 24 - 28 = 12
        // y = 7 - 16 + 15 + 24 = 30
        // z = 8 + 14 - 18 + 20 = 24
        assert_eq!(q(1., 2., 3., 4.) * q(5., 6., 7., 8.), q(-60., 12., 30., 24.));
    }

    #[test]
    fn conjugate_and_norm() {
        assert_eq!(q(1., 2., 3., 4.).conjugate(), q(1., -2., -3., -4.));
        assert_eq!(q(1., 1., 1., 1.).norm(), 2.0);
        assert_eq!(Quaternion::ZERO.norm(), 0.0);
        let a = q(1., 2., 3., 4.);
        assert_eq!(a * a.conjugate(), q(30., 0., 0., 0.));
    }

    #[test]
    fn left_mul_matrix_of_one_is_identity() {
        let m = Quaternion::ONE.left_mul_matrix();
        for (i, row) in m.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                assert_eq!(*v, if i == j { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn left_mul_pattern_matches_matrix() {
        let a = q(0.7, -1.1, 2.3, 0.4);
        let m = a.left_mul_matrix();
        let c = a.to_array();
        for (row, mrow) in m.iter().enumerate() {
            for (col, v) in mrow.iter().enumerate() {
                let (sign, comp) = left_mul_pattern(row, col);
                assert_eq!(*v, sign * c[comp]);
            }
        }
    }

    #[test]
    fn split_layout() {
        let v = pack_split(&[q(1., 2., 3., 4.), q(5., 6., 7., 8.)]);
        assert_eq!(v.components(), &[1., 5., 2., 6., 3., 7., 4., 8.]);
        assert_eq!(pack_split(&[Quaternion::ZERO; 3]).components(), &[0.0; 12]);
    }

    #[test]
    fn malformed_vector() {
        assert!(matches!(QuaternionVector::from_components(vec![0.0; 6]), Err(Error::MalformedVector { len: 6 })));
        assert!(unpack_split_slice(&[1.0; 7]).is_err());
    }
}
