//! Sequence numbers for center-to-device frames.
//!
//! These share the device key with device-originated frames, so a nonce must
//! never repeat across restarts. Seqs are handed out from a block whose upper
//! bound is persisted before any seq in it is used.

use std::fs::{File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::Path;

use gridmon_core::wire::CENTER_SEQ_BIT;

const BLOCK: u64 = 1024;

pub(crate) struct TxLease {
    file: File,
    next: u64,
    reserved: u64,
}

impl TxLease {
    pub(crate) fn open(path: &Path) -> std::io::Result<Self> {
        let mut file = OpenOptions::new()
            .read(true)
            .write(true)
            .create(true)
            .truncate(false)
            .open(path)?;
        let mut b = Vec::new();
        file.read_to_end(&mut b)?;
        let reserved = if b.len() >= 8 {
            u64::from_be_bytes(b[..8].try_into().unwrap())
        } else {
            0
        };
        Ok(TxLease {
            file,
            next: reserved,
            reserved,
        })
    }

    /// Next seq with the center bit set.
    pub(crate) fn next(&mut self) -> std::io::Result<u64> {
        if self.next >= self.reserved {
            let upto = self.next + BLOCK;
            self.file.seek(SeekFrom::Start(0))?;
            self.file.write_all(&upto.to_be_bytes())?;
            self.file.sync_data()?;
            self.reserved = upto;
        }
        let s = self.next;
        self.next += 1;
        Ok(CENTER_SEQ_BIT | s)
    }
}
