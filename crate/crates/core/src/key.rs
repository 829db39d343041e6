//! 256-bit secret keys and the keyed byte streams every derivation draws from.
//!
//! Stream construction: ChaCha20 seeded with
//! `SHA-256("hai-stream-v1" || len(tag) || tag || key)`. The tag gives domain
//! separation between the position sample, the output order, the mask, the
//! projection and the per-class permutations; every tag also encodes the
//! dimensions it is used for, so changing `n_in` or `n_out` yields unrelated
//! streams.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const KEY_BYTES: usize = 32;
pub const MAX_TAG_BYTES: usize = 16;

const STREAM_DOMAIN: &[u8] = b"hai-stream-v1";

#[derive(Clone, PartialEq, Eq)]
pub struct SecretKey([u8; KEY_BYTES]);

impl SecretKey {
    pub fn new(bytes: [u8; KEY_BYTES]) -> Result<Self> {
        if bytes.iter().all(|b| *b == 0) {
            return Err(Error::InvalidKey("all-zero key".into()));
        }
        Ok(Self(bytes))
    }

    pub fn from_slice(bytes: &[u8]) -> Result<Self> {
        let arr: [u8; KEY_BYTES] = bytes.try_into().map_err(|_| {
            Error::InvalidKey(format!("expected {KEY_BYTES} bytes, got {}", bytes.len()))
        })?;
        Self::new(arr)
    }

    /// Fresh key from the thread-local CSPRNG, which is seeded by the OS.
    pub fn generate() -> Self {
        let mut rng = rand::rng();
        loop {
            let mut bytes = [0u8; KEY_BYTES];
            rng.fill(&mut bytes);
            if let Ok(k) = Self::new(bytes) {
                return k;
            }
        }
    }

    /// Deterministic key for experiments: the `index`-th key of a seeded family.
    pub fn from_seed(seed: u64, index: u64) -> Self {
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(index);
        loop {
            let mut bytes = [0u8; KEY_BYTES];
            rng.fill_bytes(&mut bytes);
            if let Ok(k) = Self::new(bytes) {
                return k;
            }
        }
    }

    pub fn as_bytes(&self) -> &[u8; KEY_BYTES] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.len() != 2 * KEY_BYTES {
            return Err(Error::InvalidKey(format!(
                "expected {} hex characters, got {}",
                2 * KEY_BYTES,
                s.len()
            )));
        }
        let bytes = hex::decode(s).map_err(|e| Error::InvalidKey(e.to_string()))?;
        Self::from_slice(&bytes)
    }

    /// Key with bit `bit` (0 = MSB of byte 0) flipped. Errors if the result is all-zero.
    pub fn with_bit_flipped(&self, bit: usize) -> Result<Self> {
        let mut b = self.0;
        b[bit / 8] ^= 0x80 >> (bit % 8);
        Self::new(b)
    }
}

impl fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SecretKey(<redacted>)")
    }
}

/// A key read from disk, plus whether the file mode was looser than owner-read-only.
#[derive(Debug)]
pub struct KeyFile {
    pub key: SecretKey,
    pub insecure_mode: bool,
}

/// Key file format: 64 lowercase hex characters followed by a newline.
pub fn read_key_file(path: &Path) -> Result<KeyFile> {
    let text = fs::read_to_string(path)?;
    let body = text.strip_suffix('\n').unwrap_or(&text);
    if body.len() != 2 * KEY_BYTES || body.contains(char::is_whitespace) {
        return Err(Error::InvalidKey(format!(
            "{}: expected 64 hex characters and a newline",
            path.display()
        )));
    }
    let key = SecretKey::from_hex(body)?;
    Ok(KeyFile {
        key,
        insecure_mode: mode_is_loose(path)?,
    })
}

#[cfg(unix)]
fn mode_is_loose(path: &Path) -> Result<bool> {
    use std::os::unix::fs::PermissionsExt;
    let mode = fs::metadata(path)?.permissions().mode() & 0o777;
    Ok(mode != 0o400)
}

#[cfg(not(unix))]
fn mode_is_loose(_: &Path) -> Result<bool> {
    Ok(false)
}

/// Write `key` to `path` with mode 0400. Refuses to overwrite unless `force`.
pub fn write_key_file(path: &Path, key: &SecretKey, force: bool) -> Result<()> {
    if path.exists() {
        if !force {
            return Err(Error::Io(std::io::Error::new(
                std::io::ErrorKind::AlreadyExists,
                format!("{} already exists", path.display()),
            )));
        }
        // a 0400 file cannot be truncated in place
        fs::remove_file(path)?;
    }
    let mut opts = fs::OpenOptions::new();
    opts.write(true).create_new(true);
    #[cfg(unix)]
    {
        use std::os::unix::fs::OpenOptionsExt;
        opts.mode(0o400);
    }
    let mut f = opts.open(path)?;
    writeln!(f, "{}", key.to_hex())?;
    Ok(())
}

fn check_tag(tag: &[u8]) -> Result<()> {
    if tag.is_empty() {
        return Err(Error::param("domain tag must be non-empty"));
    }
    if tag.len() > MAX_TAG_BYTES {
        return Err(Error::param(format!(
            "domain tag of {} bytes exceeds {MAX_TAG_BYTES}",
            tag.len()
        )));
    }
    Ok(())
}

/// Seeded ChaCha20 generator for `(key, tag)`.
pub(crate) fn keyed_rng(key: &SecretKey, tag: &[u8]) -> Result<ChaCha20Rng> {
    check_tag(tag)?;
    let mut h = Sha256::new();
    h.update(STREAM_DOMAIN);
    h.update([tag.len() as u8]);
    h.update(tag);
    h.update(key.0);
    let seed: [u8; 32] = h.finalize().into();
    Ok(ChaCha20Rng::from_seed(seed))
}

/// Build a tag from an ASCII label and big-endian u32 parameters.
pub(crate) fn tag(label: &str, params: &[u32]) -> Vec<u8> {
    let mut t = label.as_bytes().to_vec();
    for p in params {
        t.extend_from_slice(&p.to_be_bytes());
    }
    t
}

/// `length` pseudorandom bytes determined by `(key, domain_tag)`.
pub fn derive_stream(key: &SecretKey, domain_tag: &[u8], length: usize) -> Result<Vec<u8>> {
    if length == 0 {
        return Err(Error::param("stream length must be at least 1"));
    }
    let mut rng = keyed_rng(key, domain_tag)?;
    let mut out = vec![0u8; length];
    rng.fill_bytes(&mut out);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key() -> SecretKey {
        SecretKey::from_seed(7, 0)
    }

    #[test]
    fn zero_key_rejected() {
        assert!(SecretKey::new([0; 32]).is_err());
        assert!(SecretKey::from_slice(&[1; 31]).is_err());
    }

    #[test]
    fn stream_is_deterministic_and_domain_separated() {
        let k = key();
        let a = derive_stream(&k, b"mask", 8).unwrap();
        assert_eq!(a, derive_stream(&k, b"mask", 8).unwrap());
        assert_ne!(a, derive_stream(&k, b"perm", 8).unwrap());
        // prefix property: longer requests extend shorter ones
        assert_eq!(&derive_stream(&k, b"mask", 32).unwrap()[..8], &a[..]);
    }

    #[test]
    fn stream_argument_errors() {
        let k = key();
        assert!(derive_stream(&k, b"mask", 0).is_err());
        assert!(derive_stream(&k, b"", 4).is_err());
        assert!(derive_stream(&k, &[b'x'; 17], 4).is_err());
        assert!(derive_stream(&k, &[b'x'; 16], 4).is_ok());
    }

    #[test]
    fn hex_round_trip() {
        let k = key();
        assert_eq!(SecretKey::from_hex(&k.to_hex()).unwrap(), k);
        assert!(SecretKey::from_hex("zz").is_err());
        assert_eq!(format!("{k:?}"), "SecretKey(<redacted>)");
    }

    #[test]
    fn key_file_round_trip_and_mode() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("k.key");
        let k = SecretKey::generate();
        write_key_file(&path, &k, false).unwrap();
        assert_eq!(fs::metadata(&path).unwrap().len(), 65);
        let kf = read_key_file(&path).unwrap();
        assert_eq!(kf.key, k);
        assert!(!kf.insecure_mode);
        assert!(write_key_file(&path, &k, false).is_err());
        write_key_file(&path, &SecretKey::generate(), true).unwrap();
        assert_ne!(read_key_file(&path).unwrap().key, k);

        #[cfg(unix)]
        {
            use std::os::unix::fs::PermissionsExt;
            fs::set_permissions(&path, fs::Permissions::from_mode(0o644)).unwrap();
            assert!(read_key_file(&path).unwrap().insecure_mode);
        }
    }

    #[test]
    fn key_file_rejects_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.key");
        fs::write(&path, "abc\n").unwrap();
        assert!(read_key_file(&path).is_err());
    }
}
