//! Length-prefixed framing: a 4-byte big-endian length, then canonical document bytes.

use std::io::{self, Read, Write};

use crate::document::{self, Document};
use crate::error::{Error, Result};

/// Frames larger than this are refused in both directions.
pub const MAX_FRAME_LEN: usize = 16 * 1024 * 1024;

pub fn write_frame<W: Write + ?Sized>(w: &mut W, doc: &Document) -> Result<()> {
    let body = doc.canonical_bytes();
    if body.len() > MAX_FRAME_LEN {
        return Err(Error::Protocol(format!("frame of {} bytes exceeds limit", body.len())));
    }
    w.write_all(&(body.len() as u32).to_be_bytes())?;
    w.write_all(&body)?;
    w.flush()?;
    Ok(())
}

/// Reads one frame. `Ok(None)` on a clean end of stream before a header.
pub fn read_frame<R: Read + ?Sized>(r: &mut R) -> Result<Option<Document>> {
    let mut header = [0u8; 4];
    let mut filled = 0;
    while filled < header.len() {
        match r.read(&mut header[filled..]) {
            Ok(0) if filled == 0 => return Ok(None),
            Ok(0) => return Err(Error::Io(io::ErrorKind::UnexpectedEof.into())),
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let len = u32::from_be_bytes(header) as usize;
    if len > MAX_FRAME_LEN {
        return Err(Error::Protocol(format!("frame of {len} bytes exceeds limit")));
    }
    let mut body = vec![0u8; len];
    r.read_exact(&mut body)?;
    document::parse_json(&body)
        .map(Some)
        .map_err(|e| Error::Protocol(e.to_string()))
}
