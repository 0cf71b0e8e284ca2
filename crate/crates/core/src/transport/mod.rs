//! Source-to-warehouse transfer: datasets are encrypted cell by cell under
//! the warehouse public key, framed, and shipped as files or over TCP.

mod codec;
mod net;

pub use codec::{read_frame, read_stream_frame, write_frame, write_stream_frame, FRAME_MAGIC, FRAME_VERSION};
pub use net::{send_batches, Delivery, FileDropBox, ReceivedFrame, StreamReceiver};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::curve::{DomainParams, EcPoint};
use crate::elgamal::{self, Ciphertext, CryptoError, EncodingParams, KeyPair};
use crate::etl::{Dataset, EtlError, Record, Schema};
use crate::par::maybe_par_iter;
#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Error)]
pub enum TransportError {
    #[error(transparent)]
    Crypto(#[from] CryptoError),
    #[error(transparent)]
    Etl(#[from] EtlError),
    #[error("bad frame magic")]
    BadMagic,
    #[error("unsupported frame version {0}")]
    UnsupportedVersion(u8),
    #[error("frame truncated")]
    TruncatedFrame,
    #[error("{0} unexpected bytes after frame checksum")]
    TrailingBytes(usize),
    #[error("frame checksum mismatch (stored {stored:#010x}, computed {computed:#010x})")]
    ChecksumMismatch { stored: u32, computed: u32 },
    #[error("invalid point encoding (tag {0:#04x})")]
    BadPoint(u8),
    #[error("invalid UTF-8 in frame")]
    InvalidUtf8,
    #[error("{0} does not fit the frame format")]
    FieldTooLarge(&'static str),
    #[error("frame curve {found} differs from the warehouse domain {expected}")]
    DomainMismatch { expected: CurveDescriptor, found: CurveDescriptor },
    #[error("batch shape ({confidential} confidential, {categorical} categorical) does not match the schema")]
    ShapeMismatch { confidential: usize, categorical: usize },
    #[error("connection to {addr} refused: {source}")]
    ConnectionRefused { addr: String, source: std::io::Error },
    #[error("incomplete delivery from {source_id}: {reason}")]
    IncompleteDelivery { source_id: String, reason: String },
    #[error("I/O failure: {0}")]
    Io(#[from] std::io::Error),
}

/// The curve and base point as carried in a frame header.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CurveDescriptor {
    pub p: u32,
    pub a: u32,
    pub b: u32,
    pub gx: u32,
    pub gy: u32,
}

impl CurveDescriptor {
    pub fn of(domain: &DomainParams) -> Self {
        let c = domain.curve();
        let (gx, gy) = domain.generator().coords().expect("generator is affine");
        CurveDescriptor { p: c.prime().get(), a: c.a(), b: c.b(), gx, gy }
    }
}

impl std::fmt::Display for CurveDescriptor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "E_{}({}, {}) G=({}, {})", self.p, self.a, self.b, self.gx, self.gy)
    }
}

/// What a source knows before sending: who it is, the group, the
/// warehouse key and the shape of its data.
#[derive(Debug, Clone)]
pub struct SourceManifest {
    pub source_id: String,
    pub domain: DomainParams,
    pub recipient_public: EcPoint,
    pub schema: Schema,
    pub record_count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncryptedRow {
    pub ciphertexts: Vec<Ciphertext>,
    pub categorical: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncryptedBatch {
    pub source_id: String,
    pub curve: CurveDescriptor,
    pub confidential_count: usize,
    pub categorical_count: usize,
    pub rows: Vec<EncryptedRow>,
}

/// Generator for the ephemeral scalars of row `row` of `source_id`. Each
/// row gets its own ChaCha stream so rows can be encrypted in any order.
pub fn ephemeral_rng(seed: u64, source_id: &str, row: u64) -> ChaCha8Rng {
    let key: [u8; 32] = Sha256::new()
        .chain_update(b"ephemeral")
        .chain_update(seed.to_le_bytes())
        .chain_update(source_id.as_bytes())
        .finalize()
        .into();
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(row);
    rng
}

/// Encrypts every confidential cell with a fresh ephemeral scalar.
///
/// Cells are quantized with their attribute's scale and offset first. A
/// missing cell is sent as the encryption of the identity point, which the
/// warehouse decodes back to a missing value.
pub fn encrypt_batch(
    data: &Dataset,
    manifest: &SourceManifest,
    enc: &EncodingParams,
    seed: u64,
) -> Result<EncryptedBatch, TransportError> {
    let domain = &manifest.domain;
    if !domain.curve().is_on_curve(manifest.recipient_public) {
        return Err(CryptoError::Curve(crate::curve::CurveError::OffCurveInput(manifest.recipient_public)).into());
    }
    let schema = data.schema();
    let attrs = schema.confidential();
    let indexed: Vec<(usize, &Record)> = data.rows().iter().enumerate().collect();
    let rows = maybe_par_iter!(indexed)
        .map(|&(i, record)| -> Result<EncryptedRow, TransportError> {
            let mut rng = ephemeral_rng(seed, &manifest.source_id, i as u64);
            let ciphertexts = record
                .confidential
                .iter()
                .zip(attrs)
                .map(|(cell, attr)| {
                    let point = match cell {
                        Some(v) => elgamal::encode_message(attr.quantize(*v, enc.max_message())?, domain, enc)?,
                        None => EcPoint::Infinity,
                    };
                    let k = elgamal::random_scalar(domain, &mut rng);
                    Ok(elgamal::encrypt(point, manifest.recipient_public, k, domain)?)
                })
                .collect::<Result<Vec<_>, TransportError>>()?;
            Ok(EncryptedRow { ciphertexts, categorical: record.categorical.clone() })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(EncryptedBatch {
        source_id: manifest.source_id.clone(),
        curve: CurveDescriptor::of(domain),
        confidential_count: attrs.len(),
        categorical_count: schema.categorical().len(),
        rows,
    })
}

/// Decrypts and decodes a batch back into a dataset tagged with the batch's
/// source id. Row order is preserved.
pub fn decrypt_batch(
    batch: &EncryptedBatch,
    keys: &KeyPair,
    domain: &DomainParams,
    enc: &EncodingParams,
    schema: &Schema,
) -> Result<Dataset, TransportError> {
    let expected = CurveDescriptor::of(domain);
    if batch.curve != expected {
        return Err(TransportError::DomainMismatch { expected, found: batch.curve });
    }
    let shape_ok = batch.confidential_count == schema.confidential().len()
        && batch.categorical_count == schema.categorical().len()
        && batch
            .rows
            .iter()
            .all(|r| r.ciphertexts.len() == batch.confidential_count && r.categorical.len() == batch.categorical_count);
    if !shape_ok {
        return Err(TransportError::ShapeMismatch {
            confidential: batch.confidential_count,
            categorical: batch.categorical_count,
        });
    }
    let attrs = schema.confidential();
    let rows = maybe_par_iter!(batch.rows)
        .map(|row| -> Result<Record, TransportError> {
            let confidential = row
                .ciphertexts
                .iter()
                .zip(attrs)
                .map(|(ct, attr)| match elgamal::decrypt(keys, ct, domain)? {
                    EcPoint::Infinity => Ok(None),
                    point => Ok(Some(attr.dequantize(elgamal::decode_message(point, enc)?))),
                })
                .collect::<Result<Vec<_>, TransportError>>()?;
            Ok(Record { confidential, categorical: row.categorical.clone() })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Dataset::new(schema.clone(), rows, vec![batch.source_id.clone()])?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elgamal::keygen;
    use crate::etl::ConfidentialAttr;

    pub(crate) fn small_domain() -> DomainParams {
        DomainParams::from_u64(197, 2, 6, 0, 20).unwrap()
    }

    pub(crate) fn fixture() -> (DomainParams, EncodingParams, KeyPair, Dataset) {
        let domain = small_domain();
        let enc = EncodingParams::new(4, &domain).unwrap();
        let keys = keygen(&domain, 101).unwrap();
        let mut a = ConfidentialAttr::new("a");
        a.scale = 1.0;
        let mut b = ConfidentialAttr::new("b");
        b.scale = 10.0;
        let schema = Schema::new(vec![a, b], vec!["tag".into()]).unwrap();
        let rows = (0..12)
            .map(|i| Record::new(vec![(i * 3 % 40) as f64, (3 * i) as f64 / 10.0], vec![format!("t{i}")]))
            .collect();
        let data = Dataset::new(schema, rows, vec!["S1".into()]).unwrap();
        (domain, enc, keys, data)
    }

    fn manifest(domain: DomainParams, keys: &KeyPair, data: &Dataset) -> SourceManifest {
        SourceManifest {
            source_id: "S1".into(),
            domain,
            recipient_public: keys.public_point(),
            schema: data.schema().clone(),
            record_count: data.len(),
        }
    }

    #[test]
    fn roundtrip_and_arity() {
        let (domain, enc, keys, data) = fixture();
        let m = manifest(domain, &keys, &data);
        let batch = encrypt_batch(&data, &m, &enc, 5).unwrap();
        assert_eq!(batch.rows.len(), 12);
        assert!(batch.rows.iter().all(|r| r.ciphertexts.len() == 2));
        let back = decrypt_batch(&batch, &keys, &domain, &enc, data.schema()).unwrap();
        assert_eq!(back.rows(), data.rows());
        assert_eq!(back.provenance(), ["S1"]);
        // same seed, same ciphertexts
        assert_eq!(batch, encrypt_batch(&data, &m, &enc, 5).unwrap());
        assert_ne!(batch, encrypt_batch(&data, &m, &enc, 6).unwrap());
    }

    #[test]
    fn empty_dataset() {
        let (domain, enc, keys, data) = fixture();
        let empty = Dataset::empty(data.schema().clone());
        let batch = encrypt_batch(&empty, &manifest(domain, &keys, &data), &enc, 1).unwrap();
        assert!(batch.rows.is_empty());
        let back = decrypt_batch(&batch, &keys, &domain, &enc, data.schema()).unwrap();
        assert!(back.is_empty());
    }

    #[test]
    fn missing_cells_survive_transfer() {
        let (domain, enc, keys, data) = fixture();
        let mut rows = data.rows().to_vec();
        rows[2].confidential[0] = None;
        let data = Dataset::new(data.schema().clone(), rows, vec!["S1".into()]).unwrap();
        let batch = encrypt_batch(&data, &manifest(domain, &keys, &data), &enc, 1).unwrap();
        let back = decrypt_batch(&batch, &keys, &domain, &enc, data.schema()).unwrap();
        assert_eq!(back.rows(), data.rows());
    }

    #[test]
    fn out_of_range_cell_is_rejected() {
        let (domain, enc, keys, data) = fixture();
        let mut rows = data.rows().to_vec();
        rows[0].confidential[0] = Some(49.0); // max_message is 48 with k_pad=4
        let data = Dataset::new(data.schema().clone(), rows, vec![]).unwrap();
        let err = encrypt_batch(&data, &manifest(domain, &keys, &data), &enc, 1).unwrap_err();
        assert!(matches!(err, TransportError::Etl(EtlError::QuantizeOutOfRange { .. })));
    }

    #[test]
    fn wrong_key_garbles_some_cell() {
        let (domain, enc, keys, data) = fixture();
        let batch = encrypt_batch(&data, &manifest(domain, &keys, &data), &enc, 3).unwrap();
        for wrong in (1..domain.order()).filter(|&n| n != keys.private_scalar()) {
            let wrong_keys = keygen(&domain, wrong).unwrap();
            if let Ok(out) = decrypt_batch(&batch, &wrong_keys, &domain, &enc, data.schema()) {
                assert_ne!(out.rows(), data.rows(), "key {wrong}");
            }
        }
    }

    #[test]
    fn domain_and_shape_checks() {
        let (domain, enc, keys, data) = fixture();
        let batch = encrypt_batch(&data, &manifest(domain, &keys, &data), &enc, 3).unwrap();
        let other = DomainParams::from_u64(197, 3, 25, 0, 5).unwrap();
        assert!(matches!(
            decrypt_batch(&batch, &keys, &other, &enc, data.schema()),
            Err(TransportError::DomainMismatch { .. })
        ));
        let narrow = Schema::new(vec![ConfidentialAttr::new("a")], vec!["tag".into()]).unwrap();
        assert!(matches!(
            decrypt_batch(&batch, &keys, &domain, &enc, &narrow),
            Err(TransportError::ShapeMismatch { .. })
        ));
    }
}
