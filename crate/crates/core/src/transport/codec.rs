//! Binary frame layout (all integers big-endian):
//!
//! ```text
//! "ECP1" | version u8 | id_len u8 | id bytes | p a b Gx Gy (u32 each)
//! | n_conf u8 | n_cat u8 | n_rows u32
//! | rows: n_conf x (tag c1.x c1.y tag c2.x c2.y), n_cat x (len u16, utf8)
//! | crc32 u32
//! ```
//!
//! Point tags are `0x00` for the identity (coordinates written as zero) and
//! `0x04` for affine points. The CRC-32 covers every byte before it. In
//! stream mode each frame is additionally prefixed by its length as a u32.

use std::io::{self, Read, Write};

use super::{CurveDescriptor, EncryptedBatch, EncryptedRow, TransportError};
use crate::curve::EcPoint;
use crate::elgamal::Ciphertext;

pub const FRAME_MAGIC: &[u8; 4] = b"ECP1";
pub const FRAME_VERSION: u8 = 1;

const TAG_INFINITY: u8 = 0x00;
const TAG_AFFINE: u8 = 0x04;

fn put_point(out: &mut Vec<u8>, pt: EcPoint) {
    let (tag, x, y) = match pt {
        EcPoint::Infinity => (TAG_INFINITY, 0, 0),
        EcPoint::Affine { x, y } => (TAG_AFFINE, x, y),
    };
    out.push(tag);
    out.extend_from_slice(&x.to_be_bytes());
    out.extend_from_slice(&y.to_be_bytes());
}

pub fn write_frame(batch: &EncryptedBatch) -> Result<Vec<u8>, TransportError> {
    let id = batch.source_id.as_bytes();
    let id_len = u8::try_from(id.len()).map_err(|_| TransportError::FieldTooLarge("source id"))?;
    let n_conf = u8::try_from(batch.confidential_count).map_err(|_| TransportError::FieldTooLarge("confidential attribute count"))?;
    let n_cat = u8::try_from(batch.categorical_count).map_err(|_| TransportError::FieldTooLarge("categorical attribute count"))?;
    let n_rows = u32::try_from(batch.rows.len()).map_err(|_| TransportError::FieldTooLarge("row count"))?;
    if n_rows > 0 && n_conf == 0 && n_cat == 0 {
        return Err(TransportError::ShapeMismatch { confidential: 0, categorical: 0 });
    }

    let mut out = Vec::with_capacity(64 + batch.rows.len() * (18 * batch.confidential_count + 8 * batch.categorical_count));
    out.extend_from_slice(FRAME_MAGIC);
    out.push(FRAME_VERSION);
    out.push(id_len);
    out.extend_from_slice(id);
    let c = &batch.curve;
    for v in [c.p, c.a, c.b, c.gx, c.gy] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.push(n_conf);
    out.push(n_cat);
    out.extend_from_slice(&n_rows.to_be_bytes());
    for row in &batch.rows {
        if row.ciphertexts.len() != batch.confidential_count || row.categorical.len() != batch.categorical_count {
            return Err(TransportError::ShapeMismatch {
                confidential: row.ciphertexts.len(),
                categorical: row.categorical.len(),
            });
        }
        for ct in &row.ciphertexts {
            put_point(&mut out, ct.c1);
            put_point(&mut out, ct.c2);
        }
        for cell in &row.categorical {
            let len = u16::try_from(cell.len()).map_err(|_| TransportError::FieldTooLarge("categorical cell"))?;
            out.extend_from_slice(&len.to_be_bytes());
            out.extend_from_slice(cell.as_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_be_bytes());
    Ok(out)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], TransportError> {
        let end = self.pos.checked_add(n).ok_or(TransportError::TruncatedFrame)?;
        let slice = self.buf.get(self.pos..end).ok_or(TransportError::TruncatedFrame)?;
        self.pos = end;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8, TransportError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, TransportError> {
        Ok(u16::from_be_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, TransportError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn string(&mut self, n: usize) -> Result<String, TransportError> {
        let bytes = self.take(n)?;
        std::str::from_utf8(bytes).map(str::to_owned).map_err(|_| TransportError::InvalidUtf8)
    }

    fn point(&mut self) -> Result<EcPoint, TransportError> {
        let tag = self.u8()?;
        let (x, y) = (self.u32()?, self.u32()?);
        match tag {
            TAG_AFFINE => Ok(EcPoint::Affine { x, y }),
            TAG_INFINITY if x == 0 && y == 0 => Ok(EcPoint::Infinity),
            other => Err(TransportError::BadPoint(other)),
        }
    }
}

/// Reads the source id from the start of a (possibly partial) frame.
pub(crate) fn peek_source_id(buf: &[u8]) -> Option<String> {
    if buf.get(..4)? != FRAME_MAGIC {
        return None;
    }
    let len = *buf.get(5)? as usize;
    std::str::from_utf8(buf.get(6..6 + len)?).ok().map(str::to_owned)
}

pub fn read_frame(buf: &[u8]) -> Result<EncryptedBatch, TransportError> {
    let mut cur = Cursor { buf, pos: 0 };
    let magic_len = buf.len().min(4);
    if buf[..magic_len] != FRAME_MAGIC[..magic_len] {
        return Err(TransportError::BadMagic);
    }
    cur.take(4)?;
    let version = cur.u8()?;
    if version != FRAME_VERSION {
        return Err(TransportError::UnsupportedVersion(version));
    }
    let id_len = cur.u8()? as usize;
    let source_id = cur.string(id_len)?;
    let curve = CurveDescriptor { p: cur.u32()?, a: cur.u32()?, b: cur.u32()?, gx: cur.u32()?, gy: cur.u32()? };
    let n_conf = cur.u8()? as usize;
    let n_cat = cur.u8()? as usize;
    let n_rows = cur.u32()? as usize;

    // rows without columns would carry no bytes, so their count could not be
    // checked against the frame length
    if n_rows > 0 && n_conf + n_cat == 0 {
        return Err(TransportError::ShapeMismatch { confidential: 0, categorical: 0 });
    }
    // each row needs at least this many bytes; reject absurd counts before allocating
    let min_row = 18 * n_conf + 2 * n_cat;
    if n_rows.saturating_mul(min_row) > buf.len() {
        return Err(TransportError::TruncatedFrame);
    }
    let mut rows = Vec::with_capacity(n_rows);
    for _ in 0..n_rows {
        let ciphertexts = (0..n_conf)
            .map(|_| Ok(Ciphertext { c1: cur.point()?, c2: cur.point()? }))
            .collect::<Result<Vec<_>, TransportError>>()?;
        let categorical = (0..n_cat)
            .map(|_| {
                let len = cur.u16()? as usize;
                cur.string(len)
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(EncryptedRow { ciphertexts, categorical });
    }

    let body_end = cur.pos;
    let stored = cur.u32()?;
    if cur.pos != buf.len() {
        return Err(TransportError::TrailingBytes(buf.len() - cur.pos));
    }
    let computed = crc32fast::hash(&buf[..body_end]);
    if stored != computed {
        return Err(TransportError::ChecksumMismatch { stored, computed });
    }
    Ok(EncryptedBatch { source_id, curve, confidential_count: n_conf, categorical_count: n_cat, rows })
}

pub fn write_stream_frame<W: Write>(out: &mut W, frame: &[u8]) -> io::Result<()> {
    let len = u32::try_from(frame.len()).map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "frame too large"))?;
    out.write_all(&len.to_be_bytes())?;
    out.write_all(frame)
}

/// Reads one length-prefixed frame. `Ok(None)` means the stream ended
/// cleanly on a frame boundary. On a short read the bytes received so far
/// are returned in the error's `partial` slot.
pub fn read_stream_frame<R: Read>(input: &mut R) -> Result<Option<Vec<u8>>, (io::Error, Vec<u8>)> {
    let mut len_buf = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        match input.read(&mut len_buf[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => return Err((io::ErrorKind::UnexpectedEof.into(), Vec::new())),
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err((e, Vec::new())),
        }
    }
    let len = u32::from_be_bytes(len_buf) as usize;
    let mut frame = Vec::with_capacity(len.min(1 << 20));
    let read = input.take(len as u64).read_to_end(&mut frame);
    match read {
        Ok(n) if n == len => Ok(Some(frame)),
        Ok(_) => Err((io::ErrorKind::UnexpectedEof.into(), frame)),
        Err(e) => Err((e, frame)),
    }
}
