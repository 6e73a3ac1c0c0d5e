//! Binary sample cache.
//!
//! Little-endian layout: magic `PCSS`, `u32` version, `u32` S, N, K, `f64`
//! noise power (mW), then `S·N·K` channel entries and `S·N·K` beamformer
//! entries, each an `(re, im)` pair of `f64`, sample-major, user-major,
//! antenna-minor.

use std::fs;
use std::io::Write;
use std::path::Path;

use num_complex::Complex64;

use crate::rates::{RateError, SampleSet};

pub const MAGIC: &[u8; 4] = b"PCSS";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 * 4 + 8;

#[derive(Debug, thiserror::Error)]
pub enum CacheError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("not a sample cache (bad magic)")]
    BadMagic,
    #[error("unsupported sample cache version {0} (expected {VERSION})")]
    UnsupportedVersion(u32),
    #[error("sample cache truncated: expected {expected} bytes, found {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("sample cache has {0} trailing bytes")]
    TrailingBytes(usize),
    #[error("dimensions too large for the cache format")]
    TooLarge,
    #[error("cached samples are invalid: {0}")]
    Invalid(#[from] RateError),
}

/// Serializes to the in-memory cache layout.
pub fn encode_sample_set(set: &SampleSet) -> Result<Vec<u8>, CacheError> {
    let dims = [set.sample_count(), set.users(), set.antennas()];
    let mut out = Vec::with_capacity(HEADER_LEN + 32 * set.channels().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for d in dims {
        let d = u32::try_from(d).map_err(|_| CacheError::TooLarge)?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    out.extend_from_slice(&set.noise_power().to_le_bytes());
    for z in set.channels().iter().chain(set.beamformers()) {
        out.extend_from_slice(&z.re.to_le_bytes());
        out.extend_from_slice(&z.im.to_le_bytes());
    }
    Ok(out)
}

fn u32_at(bytes: &[u8], offset: usize) -> u32 {
    u32::from_le_bytes(bytes[offset..offset + 4].try_into().expect("4 bytes"))
}

fn f64_at(bytes: &[u8], offset: usize) -> f64 {
    f64::from_le_bytes(bytes[offset..offset + 8].try_into().expect("8 bytes"))
}

/// Parses the cache layout; nothing is returned unless the whole buffer is
/// consistent and the samples validate.
pub fn decode_sample_set(bytes: &[u8]) -> Result<SampleSet, CacheError> {
    if bytes.len() < 8 {
        return Err(CacheError::Truncated {
            expected: HEADER_LEN,
            actual: bytes.len(),
        });
    }
    if &bytes[..4] != MAGIC {
        return Err(CacheError::BadMagic);
    }
    let version = u32_at(bytes, 4);
    if version != VERSION {
        return Err(CacheError::UnsupportedVersion(version));
    }
    if bytes.len() < HEADER_LEN {
        return Err(CacheError::Truncated {
            expected: HEADER_LEN,
            actual: bytes.len(),
        });
    }
    let (s, n, k) = (
        u32_at(bytes, 8) as usize,
        u32_at(bytes, 12) as usize,
        u32_at(bytes, 16) as usize,
    );
    let noise = f64_at(bytes, 20);
    let entries = s
        .checked_mul(n)
        .and_then(|x| x.checked_mul(k))
        .ok_or(CacheError::TooLarge)?;
    let expected = entries
        .checked_mul(32)
        .and_then(|x| x.checked_add(HEADER_LEN))
        .ok_or(CacheError::TooLarge)?;
    if bytes.len() < expected {
        return Err(CacheError::Truncated {
            expected,
            actual: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(CacheError::TrailingBytes(bytes.len() - expected));
    }
    let read = |start: usize| -> Vec<Complex64> {
        (0..entries)
            .map(|i| {
                let o = start + 16 * i;
                Complex64::new(f64_at(bytes, o), f64_at(bytes, o + 8))
            })
            .collect()
    };
    let channels = read(HEADER_LEN);
    let beamformers = read(HEADER_LEN + 16 * entries);
    Ok(SampleSet::new(n, k, noise, channels, beamformers)?)
}

pub fn write_sample_cache(set: &SampleSet, path: &Path) -> Result<(), CacheError> {
    let io = |source| CacheError::Io {
        path: path.display().to_string(),
        source,
    };
    let bytes = encode_sample_set(set)?;
    let mut file = fs::File::create(path).map_err(io)?;
    file.write_all(&bytes).map_err(io)?;
    file.sync_all().map_err(io)
}

pub fn read_sample_cache(path: &Path) -> Result<SampleSet, CacheError> {
    let bytes = fs::read(path).map_err(|source| CacheError::Io {
        path: path.display().to_string(),
        source,
    })?;
    decode_sample_set(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_set() -> SampleSet {
        let c = Complex64::new;
        let channels = vec![
            c(1.0, 0.5), c(-0.25, 2.0), c(0.3, 0.0), c(0.0, -1.0),
            c(0.7, 0.1), c(1.5, -0.5), c(-2.0, 0.25), c(0.125, 0.375),
        ];
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let beamformers = vec![
            c(r, 0.0), c(0.0, r), c(1.0, 0.0), c(0.0, 0.0),
            c(0.0, 1.0), c(0.0, 0.0), c(0.6, 0.0), c(0.0, 0.8),
        ];
        SampleSet::new(2, 2, 0.5, channels, beamformers).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let set = small_set();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("samples.pcss");
        write_sample_cache(&set, &path).unwrap();
        let back = read_sample_cache(&path).unwrap();
        assert_eq!(back, set);
        let bits = |s: &SampleSet| -> Vec<u64> {
            s.channels()
                .iter()
                .chain(s.beamformers())
                .flat_map(|z| [z.re.to_bits(), z.im.to_bits()])
                .collect()
        };
        assert_eq!(bits(&back), bits(&set));
        assert_eq!(back.noise_power().to_bits(), set.noise_power().to_bits());
    }

    #[test]
    fn header_layout() {
        let bytes = encode_sample_set(&small_set()).unwrap();
        assert_eq!(&bytes[..4], b"PCSS");
        assert_eq!(u32_at(&bytes, 4), 1);
        assert_eq!((u32_at(&bytes, 8), u32_at(&bytes, 12), u32_at(&bytes, 16)), (2, 2, 2));
        assert_eq!(f64_at(&bytes, 20), 0.5);
        assert_eq!(bytes.len(), 28 + 2 * 8 * 16);
        assert_eq!(f64_at(&bytes, 28), 1.0);
        assert_eq!(f64_at(&bytes, 36), 0.5);
    }

    #[test]
    fn truncated_file_is_rejected() {
        let bytes = encode_sample_set(&small_set()).unwrap();
        for cut in [0, 3, 10, 27, 100, bytes.len() - 1] {
            assert!(
                matches!(decode_sample_set(&bytes[..cut]), Err(CacheError::Truncated { .. })),
                "cut at {cut}"
            );
        }
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(matches!(decode_sample_set(&extra), Err(CacheError::TrailingBytes(1))));
    }

    #[test]
    fn version_and_magic_are_checked() {
        let mut bytes = encode_sample_set(&small_set()).unwrap();
        bytes[4..8].copy_from_slice(&2u32.to_le_bytes());
        assert!(matches!(decode_sample_set(&bytes), Err(CacheError::UnsupportedVersion(2))));
        bytes[0] = b'X';
        assert!(matches!(decode_sample_set(&bytes), Err(CacheError::BadMagic)));
    }

    #[test]
    fn invalid_samples_are_rejected() {
        let mut bytes = encode_sample_set(&small_set()).unwrap();
        // first beamformer entry no longer unit norm
        let o = 28 + 8 * 16;
        bytes[o..o + 8].copy_from_slice(&3.0f64.to_le_bytes());
        assert!(matches!(decode_sample_set(&bytes), Err(CacheError::Invalid(_))));
        let mut bytes = encode_sample_set(&small_set()).unwrap();
        bytes[20..28].copy_from_slice(&(-1.0f64).to_le_bytes());
        assert!(matches!(decode_sample_set(&bytes), Err(CacheError::Invalid(_))));
    }

    #[test]
    fn missing_file_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            read_sample_cache(&dir.path().join("none.pcss")),
            Err(CacheError::Io { .. })
        ));
    }
}
