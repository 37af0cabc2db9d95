use tokio::io::{AsyncRead, AsyncReadExt};

use super::{FrameHeader, WireError, HEADER_LEN};

#[derive(Debug, thiserror::Error)]
pub enum ReadFrameError {
    #[error("stream io: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed frame: {0}")]
    Wire(#[from] WireError),
}

/// Reads one sealed frame from a byte stream. Returns `Ok(None)` on a clean
/// end of stream between frames.
pub async fn read_frame<R: AsyncRead + Unpin>(r: &mut R) -> Result<Option<Vec<u8>>, ReadFrameError> {
    let mut head = [0u8; HEADER_LEN];
    let mut got = 0;
    while got < HEADER_LEN {
        let n = r.read(&mut head[got..]).await?;
        if n == 0 {
            if got == 0 {
                return Ok(None);
            }
            return Err(std::io::Error::from(std::io::ErrorKind::UnexpectedEof).into());
        }
        got += n;
    }
    let header = FrameHeader::parse(&head)?;
    let mut frame = vec![0u8; header.frame_len()];
    frame[..HEADER_LEN].copy_from_slice(&head);
    r.read_exact(&mut frame[HEADER_LEN..]).await?;
    Ok(Some(frame))
}

/// Length of the complete frame at the start of `buf`, if one is fully
/// buffered.
pub fn buffered_frame_len(buf: &[u8]) -> Option<usize> {
    let header = FrameHeader::parse(buf).ok()?;
    (buf.len() >= header.frame_len()).then(|| header.frame_len())
}
