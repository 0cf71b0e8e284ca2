//! The elliptic group `E_p(a, b)`: short Weierstrass curves `y^2 = x^3 + ax + b`
//! over GF(p) with affine chord-and-tangent arithmetic.

use std::fmt;

use thiserror::Error;

use crate::field::{FieldElement, FieldError, Prime};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CurveError {
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("singular curve: 4a^3 + 27b^2 = 0 mod {p} for a={a}, b={b}")]
    SingularCurve { p: u32, a: u32, b: u32 },
    #[error("point {0} is not on the curve")]
    OffCurveInput(EcPoint),
    #[error("base point must be an affine point of the curve")]
    InvalidBasePoint,
}

/// A point of `E_p(a, b)`: either the identity `O` or an affine pair.
///
/// Coordinates are canonical residues of the owning curve's prime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EcPoint {
    Affine { x: u32, y: u32 },
    Infinity,
}

impl EcPoint {
    pub fn affine(x: u32, y: u32) -> Self {
        EcPoint::Affine { x, y }
    }

    pub fn is_infinity(self) -> bool {
        matches!(self, EcPoint::Infinity)
    }

    pub fn coords(self) -> Option<(u32, u32)> {
        match self {
            EcPoint::Affine { x, y } => Some((x, y)),
            EcPoint::Infinity => None,
        }
    }
}

impl fmt::Display for EcPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EcPoint::Affine { x, y } => write!(f, "({x}, {y})"),
            EcPoint::Infinity => f.write_str("O"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CurveParams {
    p: Prime,
    a: u32,
    b: u32,
}

impl CurveParams {
    /// Validates the nonsingularity condition `4a^3 + 27b^2 != 0 (mod p)`.
    pub fn new(p: Prime, a: FieldElement, b: FieldElement) -> Result<Self, CurveError> {
        for coeff in [a, b] {
            if coeff.modulus() != p {
                return Err(FieldError::ModulusMismatch {
                    left: p.get(),
                    right: coeff.modulus().get(),
                }
                .into());
            }
        }
        let (a, b) = (a.value(), b.value());
        let a3 = p.mul(p.mul(a, a), a);
        let b2 = p.mul(b, b);
        let disc = p.add(p.mul(p.reduce(4), a3), p.mul(p.reduce(27), b2));
        if disc == 0 {
            return Err(CurveError::SingularCurve { p: p.get(), a, b });
        }
        Ok(CurveParams { p, a, b })
    }

    /// Convenience constructor from plain integers.
    pub fn from_u64(p: u64, a: u64, b: u64) -> Result<Self, CurveError> {
        let p = Prime::new(p)?;
        Self::new(p, p.element(a)?, p.element(b)?)
    }

    pub fn prime(&self) -> Prime {
        self.p
    }

    pub fn a(&self) -> u32 {
        self.a
    }

    pub fn b(&self) -> u32 {
        self.b
    }

    /// Right-hand side `x^3 + ax + b` for a canonical `x`.
    pub(crate) fn rhs(&self, x: u32) -> u32 {
        let p = self.p;
        let x3 = p.mul(p.mul(x, x), x);
        p.add(p.add(x3, p.mul(self.a, x)), self.b)
    }

    pub fn is_on_curve(&self, pt: EcPoint) -> bool {
        match pt {
            EcPoint::Infinity => true,
            EcPoint::Affine { x, y } => {
                let p = self.p.get();
                x < p && y < p && self.p.mul(y, y) == self.rhs(x)
            }
        }
    }

    fn check(&self, pt: EcPoint) -> Result<(), CurveError> {
        if self.is_on_curve(pt) {
            Ok(())
        } else {
            Err(CurveError::OffCurveInput(pt))
        }
    }

    /// Every point of the group: for each `x` in ascending order, the `y`
    /// values found by scanning the field, then `O` last.
    pub fn enumerate_points(&self) -> Vec<EcPoint> {
        let mut points: Vec<EcPoint> = (0..self.p.get())
            .flat_map(|x| {
                self.p
                    .sqrt_scan(self.rhs(x))
                    .into_iter()
                    .map(move |y| EcPoint::Affine { x, y })
            })
            .collect();
        points.push(EcPoint::Infinity);
        points
    }

    pub fn negate(&self, pt: EcPoint) -> EcPoint {
        match pt {
            EcPoint::Infinity => EcPoint::Infinity,
            EcPoint::Affine { x, y } => EcPoint::Affine { x, y: self.p.neg(y) },
        }
    }

    pub fn add(&self, lhs: EcPoint, rhs: EcPoint) -> Result<EcPoint, CurveError> {
        self.check(lhs)?;
        self.check(rhs)?;
        Ok(self.add_unchecked(lhs, rhs))
    }

    pub fn double(&self, pt: EcPoint) -> Result<EcPoint, CurveError> {
        self.check(pt)?;
        Ok(self.double_unchecked(pt))
    }

    /// `k * pt` by left-to-right double-and-add.
    pub fn scalar_mult(&self, k: u64, pt: EcPoint) -> Result<EcPoint, CurveError> {
        self.check(pt)?;
        Ok(self.mul_unchecked(k, pt))
    }

    pub(crate) fn add_unchecked(&self, lhs: EcPoint, rhs: EcPoint) -> EcPoint {
        let p = self.p;
        match (lhs, rhs) {
            (EcPoint::Infinity, q) | (q, EcPoint::Infinity) => q,
            (EcPoint::Affine { x: x1, y: y1 }, EcPoint::Affine { x: x2, y: y2 }) => {
                if x1 == x2 {
                    if p.add(y1, y2) == 0 {
                        return EcPoint::Infinity;
                    }
                    return self.double_unchecked(lhs);
                }
                let num = p.sub(y2, y1);
                let den = p.inv(p.sub(x2, x1)).expect("x1 != x2");
                let slope = p.mul(num, den);
                let x3 = p.sub(p.sub(p.mul(slope, slope), x1), x2);
                let y3 = p.sub(p.mul(slope, p.sub(x1, x3)), y1);
                EcPoint::Affine { x: x3, y: y3 }
            }
        }
    }

    pub(crate) fn double_unchecked(&self, pt: EcPoint) -> EcPoint {
        let p = self.p;
        match pt {
            EcPoint::Infinity => EcPoint::Infinity,
            EcPoint::Affine { y: 0, .. } => EcPoint::Infinity,
            EcPoint::Affine { x, y } => {
                let num = p.add(p.mul(p.reduce(3), p.mul(x, x)), self.a);
                let den = p.inv(p.add(y, y)).expect("y != 0 and p odd");
                let slope = p.mul(num, den);
                let x3 = p.sub(p.mul(slope, slope), p.add(x, x));
                let y3 = p.sub(p.mul(slope, p.sub(x, x3)), y);
                EcPoint::Affine { x: x3, y: y3 }
            }
        }
    }

    pub(crate) fn mul_unchecked(&self, k: u64, pt: EcPoint) -> EcPoint {
        if k == 0 {
            return EcPoint::Infinity;
        }
        let mut acc = EcPoint::Infinity;
        for bit in (0..64 - k.leading_zeros()).rev() {
            acc = self.double_unchecked(acc);
            if (k >> bit) & 1 == 1 {
                acc = self.add_unchecked(acc, pt);
            }
        }
        acc
    }
}

impl fmt::Display for CurveParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "E_{}({}, {})", self.p, self.a, self.b)
    }
}

/// A curve together with a base point `G` and the order of `G`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DomainParams {
    curve: CurveParams,
    generator: EcPoint,
    order: u64,
}

impl DomainParams {
    /// Builds domain parameters, computing the order of `G` by adding `G` to
    /// itself until the identity is reached.
    pub fn new(curve: CurveParams, generator: EcPoint) -> Result<Self, CurveError> {
        if generator.is_infinity() || !curve.is_on_curve(generator) {
            return Err(CurveError::InvalidBasePoint);
        }
        let mut order = 1u64;
        let mut acc = generator;
        while !acc.is_infinity() {
            acc = curve.add_unchecked(acc, generator);
            order += 1;
        }
        Ok(DomainParams { curve, generator, order })
    }

    pub fn from_u64(p: u64, a: u64, b: u64, gx: u32, gy: u32) -> Result<Self, CurveError> {
        Self::new(CurveParams::from_u64(p, a, b)?, EcPoint::affine(gx, gy))
    }

    pub fn curve(&self) -> &CurveParams {
        &self.curve
    }

    pub fn generator(&self) -> EcPoint {
        self.generator
    }

    pub fn order(&self) -> u64 {
        self.order
    }
}
