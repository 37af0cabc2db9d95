use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

/// 128-bit pre-shared device key.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct DeviceKey(pub [u8; 16]);

impl fmt::Debug for DeviceKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("DeviceKey(..)")
    }
}

impl DeviceKey {
    pub fn from_hex(s: &str) -> Option<Self> {
        let mut k = [0u8; 16];
        hex::decode_to_slice(s.trim(), &mut k).ok()?;
        Some(DeviceKey(k))
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum KeyFileError {
    #[error("key file io: {0}")]
    Io(#[from] std::io::Error),
    #[error("key file line {line}: {reason}")]
    Malformed { line: usize, reason: &'static str },
}

/// Device keys, as loaded from a `device_id<TAB>hex-key` file.
#[derive(Debug, Clone, Default)]
pub struct KeyRing {
    keys: HashMap<u32, DeviceKey>,
}

impl KeyRing {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, device_id: u32, key: DeviceKey) {
        self.keys.insert(device_id, key);
    }

    pub fn get(&self, device_id: u32) -> Option<DeviceKey> {
        self.keys.get(&device_id).copied()
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    /// Blank lines and `#` comments are skipped.
    pub fn parse<R: Read>(reader: R) -> Result<Self, KeyFileError> {
        let mut ring = KeyRing::new();
        for (idx, line) in BufReader::new(reader).lines().enumerate() {
            let line = line?;
            let line_no = idx + 1;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let (id, key) = t.split_once('\t').ok_or(KeyFileError::Malformed {
                line: line_no,
                reason: "expected device_id<TAB>key",
            })?;
            let id: u32 = id.trim().parse().map_err(|_| KeyFileError::Malformed {
                line: line_no,
                reason: "bad device id",
            })?;
            let key = DeviceKey::from_hex(key).ok_or(KeyFileError::Malformed {
                line: line_no,
                reason: "key must be 32 hex digits",
            })?;
            ring.insert(id, key);
        }
        Ok(ring)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, KeyFileError> {
        Self::parse(std::fs::File::open(path)?)
    }

    /// Serializes in key-file format, ordered by device id.
    pub fn to_tsv(&self) -> String {
        let mut ids: Vec<_> = self.keys.keys().copied().collect();
        ids.sort_unstable();
        ids.iter()
            .map(|id| format!("{id}\t{}\n", self.keys[id].to_hex()))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_key_file() {
        let text = "# fleet\n7\t000102030405060708090a0b0c0d0e0f\n\n8\tffffffffffffffffffffffffffffffff\n";
        let ring = KeyRing::parse(text.as_bytes()).unwrap();
        assert_eq!(ring.len(), 2);
        assert_eq!(ring.get(7).unwrap().0[15], 0x0f);
        assert!(ring.get(9).is_none());
        assert_eq!(KeyRing::parse(ring.to_tsv().as_bytes()).unwrap().get(8), ring.get(8));
    }

    #[test]
    fn malformed_lines() {
        assert!(matches!(
            KeyRing::parse("7 0011".as_bytes()),
            Err(KeyFileError::Malformed { line: 1, .. })
        ));
        assert!(matches!(
            KeyRing::parse("x\t000102030405060708090a0b0c0d0e0f".as_bytes()),
            Err(KeyFileError::Malformed { line: 1, .. })
        ));
        assert!(matches!(
            KeyRing::parse("1\t0001".as_bytes()),
            Err(KeyFileError::Malformed { line: 1, .. })
        ));
    }

    #[test]
    fn debug_hides_key() {
        assert_eq!(format!("{:?}", DeviceKey([1; 16])), "DeviceKey(..)");
    }
}
