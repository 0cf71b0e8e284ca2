//! Privacy-preserving collection and mining of distributed records:
//! prime-field and elliptic-curve arithmetic, EC-ElGamal transport of
//! quantized values to a warehouse, ETL, noise perturbation and Apriori
//! rule mining with an accuracy experiment.

pub mod config;
pub mod curve;
pub mod elgamal;
pub mod etl;
pub mod field;
pub mod mining;
mod par;
pub mod perturb;
pub mod pipeline;
pub mod transport;

use sha2::{Digest, Sha256};

/// Derives an independent 64-bit seed for one named use of the global seed,
/// e.g. `derive_seed("perturb", seed, "age")`.
pub fn derive_seed(label: &str, seed: u64, part: &str) -> u64 {
    let digest = Sha256::new()
        .chain_update(label.as_bytes())
        .chain_update(seed.to_le_bytes())
        .chain_update(part.as_bytes())
        .finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}
