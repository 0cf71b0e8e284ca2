//! Arithmetic in the prime field GF(p) for small primes (p < 2^31).
//!
//! Every product of two canonical residues fits in a `u64`, so no operation
//! ever needs wide or big-integer intermediates.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FieldError {
    #[error("{0} is not a prime in [3, 2^31)")]
    NotPrime(u64),
    #[error("operands belong to different fields (p={left} vs p={right})")]
    ModulusMismatch { left: u32, right: u32 },
    #[error("zero has no multiplicative inverse")]
    NoInverse,
    #[error("value {value} is not a canonical residue mod {p}")]
    NotCanonical { value: u64, p: u32 },
}

/// An odd prime modulus below 2^31.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Prime(u32);

impl Prime {
    pub const MAX: u32 = (1 << 31) - 1;

    pub fn new(p: u64) -> Result<Self, FieldError> {
        if !(3..=Self::MAX as u64).contains(&p) || !is_prime(p) {
            return Err(FieldError::NotPrime(p));
        }
        Ok(Prime(p as u32))
    }

    pub fn get(self) -> u32 {
        self.0
    }

    /// Reduces an arbitrary integer into `[0, p)`.
    pub fn reduce(self, v: u64) -> u32 {
        (v % self.0 as u64) as u32
    }

    pub fn element(self, value: u64) -> Result<FieldElement, FieldError> {
        if value >= self.0 as u64 {
            return Err(FieldError::NotCanonical { value, p: self.0 });
        }
        Ok(FieldElement { value: value as u32, p: self })
    }

    // Raw residue arithmetic. Inputs must already be canonical.

    pub(crate) fn add(self, a: u32, b: u32) -> u32 {
        ((a as u64 + b as u64) % self.0 as u64) as u32
    }

    pub(crate) fn sub(self, a: u32, b: u32) -> u32 {
        ((a as u64 + self.0 as u64 - b as u64) % self.0 as u64) as u32
    }

    pub(crate) fn neg(self, a: u32) -> u32 {
        if a == 0 {
            0
        } else {
            self.0 - a
        }
    }

    pub(crate) fn mul(self, a: u32, b: u32) -> u32 {
        ((a as u64 * b as u64) % self.0 as u64) as u32
    }

    pub(crate) fn inv(self, a: u32) -> Result<u32, FieldError> {
        ext_euclid_inverse(a, self.0).map(|(inv, _)| inv)
    }

    /// Every `y` in `[0, p)` with `y^2 = a`, found by scanning the whole field.
    pub(crate) fn sqrt_scan(self, a: u32) -> Vec<u32> {
        (0..self.0).filter(|&y| self.mul(y, y) == a).collect()
    }

    /// Euler's criterion.
    pub(crate) fn is_square(self, a: u32) -> bool {
        a == 0 || self.pow(a, (self.0 as u64 - 1) / 2) == 1
    }

    pub(crate) fn pow(self, base: u32, mut exp: u64) -> u32 {
        let mut acc = 1u32;
        let mut b = base;
        while exp > 0 {
            if exp & 1 == 1 {
                acc = self.mul(acc, b);
            }
            b = self.mul(b, b);
            exp >>= 1;
        }
        acc
    }

    /// Square roots of `a` by Tonelli-Shanks, returned ascending. Matches
    /// [`Prime::sqrt_scan`] exactly but runs in `O(log^2 p)`.
    pub(crate) fn sqrt_fast(self, a: u32) -> Vec<u32> {
        let p = self.0;
        if a == 0 {
            return vec![0];
        }
        if !self.is_square(a) {
            return Vec::new();
        }
        let root = if p % 4 == 3 {
            self.pow(a, (p as u64 + 1) / 4)
        } else {
            // p - 1 = q * 2^s with q odd
            let mut q = p as u64 - 1;
            let mut s = 0u32;
            while q.is_multiple_of(2) {
                q /= 2;
                s += 1;
            }
            let z = (2..p).find(|&z| !self.is_square(z)).expect("odd prime has a non-residue");
            let mut m = s;
            let mut c = self.pow(z, q);
            let mut t = self.pow(a, q);
            let mut r = self.pow(a, q.div_ceil(2));
            while t != 1 {
                let mut i = 0;
                let mut t2 = t;
                while t2 != 1 {
                    t2 = self.mul(t2, t2);
                    i += 1;
                }
                let b = self.pow(c, 1u64 << (m - i - 1));
                m = i;
                c = self.mul(b, b);
                t = self.mul(t, c);
                r = self.mul(r, b);
            }
            r
        };
        let other = p - root;
        vec![root.min(other), root.max(other)]
    }
}

impl fmt::Display for Prime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    if n.is_multiple_of(2) {
        return n == 2;
    }
    let mut d = 3u64;
    while d * d <= n {
        if n.is_multiple_of(d) {
            return false;
        }
        d += 2;
    }
    true
}

/// Modular inverse by the extended Euclidean algorithm, with the Bezout
/// coefficient kept reduced mod `p` at every step.
///
/// Returns the inverse together with the largest intermediate value seen,
/// which is always below `p`.
pub(crate) fn ext_euclid_inverse(a: u32, p: u32) -> Result<(u32, u32), FieldError> {
    let a = a % p;
    if a == 0 {
        return Err(FieldError::NoInverse);
    }
    let p64 = p as u64;
    // invariant: r_i = t_i * a (mod p)
    let (mut r0, mut r1) = (p as u64, a as u64);
    let (mut t0, mut t1) = (0u64, 1u64);
    let mut peak = a;
    while r1 != 0 {
        let q = r0 / r1;
        let r2 = r0 - q * r1;
        let t2 = (t0 + p64 - (q % p64) * t1 % p64) % p64;
        r0 = r1;
        r1 = r2;
        t0 = t1;
        t1 = t2;
        peak = peak.max(r1 as u32).max(t1 as u32);
    }
    debug_assert_eq!(r0, 1, "p is prime so gcd(a, p) = 1");
    Ok((t0 as u32, peak))
}

/// A canonical residue in `[0, p)` tagged with its modulus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FieldElement {
    value: u32,
    p: Prime,
}

// fallible: operands from different fields are an error
#[allow(clippy::should_implement_trait)]
impl FieldElement {
    pub fn value(self) -> u32 {
        self.value
    }

    pub fn modulus(self) -> Prime {
        self.p
    }

    fn same_field(self, other: FieldElement) -> Result<Prime, FieldError> {
        if self.p != other.p {
            return Err(FieldError::ModulusMismatch {
                left: self.p.0,
                right: other.p.0,
            });
        }
        Ok(self.p)
    }

    pub fn add(self, other: FieldElement) -> Result<FieldElement, FieldError> {
        let p = self.same_field(other)?;
        Ok(FieldElement { value: p.add(self.value, other.value), p })
    }

    pub fn sub(self, other: FieldElement) -> Result<FieldElement, FieldError> {
        let p = self.same_field(other)?;
        Ok(FieldElement { value: p.sub(self.value, other.value), p })
    }

    pub fn mul(self, other: FieldElement) -> Result<FieldElement, FieldError> {
        let p = self.same_field(other)?;
        Ok(FieldElement { value: p.mul(self.value, other.value), p })
    }

    pub fn neg(self) -> FieldElement {
        FieldElement { value: self.p.neg(self.value), p: self.p }
    }

    pub fn inv(self) -> Result<FieldElement, FieldError> {
        Ok(FieldElement { value: self.p.inv(self.value)?, p: self.p })
    }

    /// All square roots of `self`, found by trying every `y` in the field.
    pub fn sqrt_scan(self) -> Vec<FieldElement> {
        self.p
            .sqrt_scan(self.value)
            .into_iter()
            .map(|value| FieldElement { value, p: self.p })
            .collect()
    }
}

impl fmt::Display for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (mod {})", self.value, self.p)
    }
}
