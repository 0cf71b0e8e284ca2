//! EC-ElGamal over a [`DomainParams`] group, plus Koblitz-style message
//! encoding of small integers into curve points.

use rand::Rng;
use thiserror::Error;

use crate::curve::{CurveError, DomainParams, EcPoint};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CryptoError {
    #[error(transparent)]
    Curve(#[from] CurveError),
    #[error("scalar {scalar} outside [1, {order})")]
    ScalarOutOfRange { scalar: u64, order: u64 },
    #[error("message {message} outside [0, {max}]")]
    MessageOutOfRange { message: u64, max: u64 },
    #[error("no x in [{start}, {end}) gives a point for message {message}")]
    EncodingFailed { message: u64, start: u64, end: u64 },
    #[error("the point at infinity carries no message")]
    NotAMessagePoint,
    #[error("padding factor must be at least 2 (got {0})")]
    BadPadding(u32),
    #[error("padding factor {k_pad} leaves no encodable messages mod {p}")]
    EmptyMessageSpace { k_pad: u32, p: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KeyPair {
    private_scalar: u64,
    public_point: EcPoint,
}

impl KeyPair {
    pub fn private_scalar(&self) -> u64 {
        self.private_scalar
    }

    pub fn public_point(&self) -> EcPoint {
        self.public_point
    }
}

/// `(kG, P_m + kP_B)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Ciphertext {
    pub c1: EcPoint,
    pub c2: EcPoint,
}

/// Message window parameters: message `m` maps to some `x` in
/// `[m * k_pad, (m + 1) * k_pad)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncodingParams {
    k_pad: u32,
    max_message: u64,
}

impl EncodingParams {
    pub const DEFAULT_PAD: u32 = 20;

    pub fn new(k_pad: u32, domain: &DomainParams) -> Result<Self, CryptoError> {
        if k_pad < 2 {
            return Err(CryptoError::BadPadding(k_pad));
        }
        let p = domain.curve().prime().get();
        let slots = ((p - 1) / k_pad) as u64;
        if slots == 0 {
            return Err(CryptoError::EmptyMessageSpace { k_pad, p });
        }
        Ok(EncodingParams { k_pad, max_message: slots - 1 })
    }

    pub fn k_pad(&self) -> u32 {
        self.k_pad
    }

    pub fn max_message(&self) -> u64 {
        self.max_message
    }
}

fn check_scalar(scalar: u64, domain: &DomainParams) -> Result<(), CryptoError> {
    if scalar == 0 || scalar >= domain.order() {
        return Err(CryptoError::ScalarOutOfRange { scalar, order: domain.order() });
    }
    Ok(())
}

pub fn keygen(domain: &DomainParams, private_scalar: u64) -> Result<KeyPair, CryptoError> {
    check_scalar(private_scalar, domain)?;
    let public_point = domain.curve().scalar_mult(private_scalar, domain.generator())?;
    Ok(KeyPair { private_scalar, public_point })
}

/// Uniform scalar in `[1, order)`.
pub fn random_scalar<R: Rng + ?Sized>(domain: &DomainParams, rng: &mut R) -> u64 {
    rng.random_range(1..domain.order())
}

pub fn encode_message(
    message: u64,
    domain: &DomainParams,
    enc: &EncodingParams,
) -> Result<EcPoint, CryptoError> {
    if message > enc.max_message {
        return Err(CryptoError::MessageOutOfRange { message, max: enc.max_message });
    }
    let curve = domain.curve();
    let p = curve.prime();
    let start = message * enc.k_pad as u64;
    let end = start + enc.k_pad as u64;
    for x in start..end {
        let x = x as u32;
        // smaller root is the canonical y
        if let Some(&y) = p.sqrt_fast(curve.rhs(x)).first() {
            return Ok(EcPoint::Affine { x, y });
        }
    }
    Err(CryptoError::EncodingFailed { message, start, end })
}

pub fn decode_message(point: EcPoint, enc: &EncodingParams) -> Result<u64, CryptoError> {
    match point {
        EcPoint::Affine { x, .. } => Ok(x as u64 / enc.k_pad as u64),
        EcPoint::Infinity => Err(CryptoError::NotAMessagePoint),
    }
}

pub fn encrypt(
    message_point: EcPoint,
    recipient_public: EcPoint,
    ephemeral: u64,
    domain: &DomainParams,
) -> Result<Ciphertext, CryptoError> {
    check_scalar(ephemeral, domain)?;
    let curve = domain.curve();
    let c1 = curve.scalar_mult(ephemeral, domain.generator())?;
    let mask = curve.scalar_mult(ephemeral, recipient_public)?;
    let c2 = curve.add(message_point, mask)?;
    Ok(Ciphertext { c1, c2 })
}

pub fn decrypt(keys: &KeyPair, ct: &Ciphertext, domain: &DomainParams) -> Result<EcPoint, CryptoError> {
    let curve = domain.curve();
    let shared = curve.scalar_mult(keys.private_scalar, ct.c1)?;
    Ok(curve.add(ct.c2, curve.negate(shared))?)
}
