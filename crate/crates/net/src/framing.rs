//! Length-prefixed JSON frames: 4-byte big-endian length followed by the
//! UTF-8 JSON payload. Debuggable on the wire and byte-exact in golden
//! transcripts.

use std::io::{Read, Write};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{NetError, Result};

/// Upper bound on a frame payload; everything this protocol sends is tiny.
pub const MAX_FRAME: usize = 1 << 20;

pub fn write_frame<W: Write>(w: &mut W, payload: &[u8]) -> Result<()> {
    if payload.len() > MAX_FRAME {
        return Err(NetError::FrameTooLarge(payload.len()));
    }
    w.write_all(&(payload.len() as u32).to_be_bytes())?;
    w.write_all(payload)?;
    w.flush()?;
    Ok(())
}

pub fn read_frame<R: Read>(r: &mut R) -> Result<Vec<u8>> {
    let mut len_buf = [0u8; 4];
    if let Err(e) = r.read_exact(&mut len_buf) {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            return Err(NetError::Disconnected("eof on frame length".into()));
        }
        return Err(e.into());
    }
    let len = u32::from_be_bytes(len_buf) as usize;
    if len > MAX_FRAME {
        return Err(NetError::FrameTooLarge(len));
    }
    let mut payload = vec![0u8; len];
    if let Err(e) = r.read_exact(&mut payload) {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            return Err(NetError::Disconnected("eof inside frame".into()));
        }
        return Err(e.into());
    }
    Ok(payload)
}

pub fn send<W: Write, T: Serialize>(w: &mut W, msg: &T) -> Result<()> {
    let payload = serde_json::to_vec(msg)?;
    write_frame(w, &payload)
}

pub fn recv<R: Read, T: DeserializeOwned>(r: &mut R) -> Result<T> {
    let payload = read_frame(r)?;
    Ok(serde_json::from_slice(&payload)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn oversized_frames_are_rejected() {
        let mut buf = Vec::new();
        assert!(matches!(
            write_frame(&mut buf, &vec![0u8; MAX_FRAME + 1]),
            Err(NetError::FrameTooLarge(_))
        ));
    }

    #[test]
    fn truncated_stream_reports_disconnect() {
        let bytes = 5u32.to_be_bytes();
        let mut cursor = std::io::Cursor::new(bytes.to_vec());
        assert!(matches!(read_frame(&mut cursor), Err(NetError::Disconnected(_))));
    }

    proptest! {
        #[test]
        fn frames_roundtrip(payloads in proptest::collection::vec(
            proptest::collection::vec(any::<u8>(), 0..512), 1..8)
        ) {
            let mut buf = Vec::new();
            for p in &payloads {
                write_frame(&mut buf, p).unwrap();
            }
            let mut cursor = std::io::Cursor::new(buf);
            for p in &payloads {
                let back = read_frame(&mut cursor).unwrap();
                prop_assert_eq!(&back, p);
            }
        }
    }
}
