//! Bit supplies for the two parties and per-flip streams for the physics.
//!
//! A [`BitSource`] is either a pre-stored file of random bytes, read
//! MSB-first and never rewound, or a seeded ChaCha20 keystream. The seeded
//! variant is addressable: bit `i` of stream `s` is fixed by `(seed, s, i)`,
//! so skipping ahead is O(1) and sweeps can split work across threads
//! without changing results.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{RngCore, SeedableRng};
use rand_chacha::{ChaCha20Rng, ChaCha8Rng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qubit_states::StateLabel;

/// Stream ids carved out of one seed.
pub mod stream {
    pub const ALICE: u64 = 1;
    pub const BOB: u64 = 2;
    /// Physics stream of flip `f` is `PHYSICS_BASE + f`.
    pub const PHYSICS_BASE: u64 = 1 << 32;
}

/// Physics randomness for a single flip.
pub type PhysicsRng = ChaCha8Rng;

pub fn physics_rng(seed: u64, flip: u64) -> PhysicsRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream::PHYSICS_BASE.wrapping_add(flip));
    rng
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum BitSourceSpec {
    File(PathBuf),
    Seeded { seed: u64, stream: u64 },
}

#[derive(Debug, Clone)]
enum Backing {
    File { path: PathBuf, bytes: Vec<u8> },
    Seeded { seed: u64, stream: u64, rng: Box<ChaCha20Rng>, word: Option<(u64, u32)> },
}

#[derive(Debug, Clone)]
pub struct BitSource {
    backing: Backing,
    consumed: u64,
}

pub fn open_bit_source(spec: &BitSourceSpec) -> Result<BitSource> {
    match spec {
        BitSourceSpec::File(path) => BitSource::from_file(path),
        BitSourceSpec::Seeded { seed, stream } => Ok(BitSource::seeded(*seed, *stream)),
    }
}

impl BitSource {
    pub fn seeded(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        BitSource { backing: Backing::Seeded { seed, stream, rng: Box::new(rng), word: None }, consumed: 0 }
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path)?;
        if bytes.is_empty() {
            return Err(Error::Io(std::io::Error::new(
                std::io::ErrorKind::UnexpectedEof,
                format!("random file {} is empty", path.display()),
            )));
        }
        Ok(BitSource { backing: Backing::File { path: path.to_path_buf(), bytes }, consumed: 0 })
    }

    /// In-memory bytes, consumed like a file.
    pub fn from_bytes(bytes: Vec<u8>) -> Self {
        BitSource { backing: Backing::File { path: PathBuf::from("<memory>"), bytes }, consumed: 0 }
    }

    pub fn bits_consumed(&self) -> u64 {
        self.consumed
    }

    /// Bits left, or `None` for an unbounded seeded stream.
    pub fn remaining(&self) -> Option<u64> {
        match &self.backing {
            Backing::File { bytes, .. } => Some(bytes.len() as u64 * 8 - self.consumed),
            Backing::Seeded { .. } => None,
        }
    }

    pub fn describe(&self) -> String {
        match &self.backing {
            Backing::File { path, .. } => format!("file:{}", path.display()),
            Backing::Seeded { seed, stream, .. } => format!("seed:{seed}/stream:{stream}"),
        }
    }

    /// Fails without consuming anything if fewer than `n` bits remain.
    pub fn ensure_available(&self, n: u64) -> Result<()> {
        match self.remaining() {
            Some(left) if left < n => Err(Error::EntropyExhausted { consumed: self.consumed }),
            _ => Ok(()),
        }
    }

    pub fn draw_bit(&mut self) -> Result<u8> {
        self.ensure_available(1)?;
        let bit = self.bit_at(self.consumed);
        self.consumed += 1;
        Ok(bit)
    }

    /// Next `n` bits, all or nothing.
    pub fn draw_bits(&mut self, n: usize) -> Result<Vec<u8>> {
        if n == 0 {
            return Err(Error::domain("draw_bits needs n >= 1"));
        }
        self.ensure_available(n as u64)?;
        let start = self.consumed;
        let bits = (0..n as u64).map(|i| self.bit_at(start + i)).collect();
        self.consumed += n as u64;
        Ok(bits)
    }

    /// Advances past `n` bits without reading them.
    pub fn skip_bits(&mut self, n: u64) -> Result<()> {
        self.ensure_available(n)?;
        self.consumed += n;
        Ok(())
    }

    /// First bit is the basis, second the encoded value.
    pub fn draw_state_choice(&mut self) -> Result<StateLabel> {
        self.ensure_available(2)?;
        let basis = self.draw_bit()?;
        let bit = self.draw_bit()?;
        Ok(StateLabel { basis, bit })
    }

    /// `n` consecutive state choices, all or nothing.
    pub fn draw_state_choices(&mut self, n: u64) -> Result<Vec<StateLabel>> {
        self.ensure_available(2 * n)?;
        (0..n).map(|_| self.draw_state_choice()).collect()
    }

    fn bit_at(&mut self, pos: u64) -> u8 {
        match &mut self.backing {
            Backing::File { bytes, .. } => (bytes[(pos / 8) as usize] >> (7 - pos % 8)) & 1,
            Backing::Seeded { rng, word, .. } => {
                let idx = pos / 32;
                let w = match *word {
                    Some((i, w)) if i == idx => w,
                    Some((i, _)) if i + 1 == idx => rng.next_u32(),
                    _ => {
                        rng.set_word_pos(idx as u128);
                        rng.next_u32()
                    }
                };
                *word = Some((idx, w));
                ((w >> (31 - pos % 32)) & 1) as u8
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn msb_first() {
        let mut src = BitSource::from_bytes(vec![0xA5]);
        assert_eq!(src.draw_bits(8).unwrap(), vec![1, 0, 1, 0, 0, 1, 0, 1]);
    }

    #[test]
    fn exhaustion_is_explicit() {
        let mut src = BitSource::from_bytes(vec![0xFF]);
        for _ in 0..8 {
            src.draw_bit().unwrap();
        }
        match src.draw_bit() {
            Err(Error::EntropyExhausted { consumed }) => assert_eq!(consumed, 8),
            other => panic!("expected exhaustion, got {other:?}"),
        }
        assert_eq!(src.bits_consumed(), 8);
    }

    #[test]
    fn partial_draw_consumes_nothing() {
        let mut src = BitSource::from_bytes(vec![0x0F]);
        src.draw_bits(5).unwrap();
        assert!(src.draw_bits(4).is_err());
        assert_eq!(src.bits_consumed(), 5);
        assert_eq!(src.draw_bits(3).unwrap(), vec![1, 1, 1]);
    }

    #[test]
    fn zero_draw_rejected() {
        assert!(BitSource::seeded(1, 1).draw_bits(0).is_err());
    }

    #[test]
    fn zero_file_gives_first_label() {
        let mut src = BitSource::from_bytes(vec![0; 16]);
        for _ in 0..64 {
            assert_eq!(src.draw_state_choice().unwrap(), StateLabel { basis: 0, bit: 0 });
        }
    }

    #[test]
    fn label_mapping() {
        let mut src = BitSource::from_bytes(vec![0b1000_0000]);
        assert_eq!(src.draw_state_choice().unwrap(), StateLabel { basis: 1, bit: 0 });
    }

    #[test]
    fn file_source_errors() {
        assert!(matches!(BitSource::from_file("/nonexistent/qrng.bin"), Err(Error::Io(_))));
        let dir = std::env::temp_dir().join(format!("qscf-empty-{}", std::process::id()));
        fs::write(&dir, b"").unwrap();
        assert!(BitSource::from_file(&dir).is_err());
        fs::remove_file(&dir).unwrap();
    }

    #[test]
    fn seeded_is_reproducible_and_addressable() {
        let mut a = BitSource::seeded(42, stream::ALICE);
        let mut b = BitSource::seeded(42, stream::ALICE);
        let xs = a.draw_bits(1000).unwrap();
        assert_eq!(xs, b.draw_bits(1000).unwrap());

        let mut c = BitSource::seeded(42, stream::ALICE);
        c.skip_bits(777).unwrap();
        assert_eq!(c.draw_bits(223).unwrap(), xs[777..].to_vec());
        assert_eq!(c.bits_consumed(), 1000);

        let mut other = BitSource::seeded(42, stream::BOB);
        assert_ne!(other.draw_bits(1000).unwrap(), xs);
    }

    #[test]
    fn seeded_mean() {
        let mut src = BitSource::seeded(9, stream::BOB);
        let n = 1_000_000usize;
        let ones: u64 = src.draw_bits(n).unwrap().iter().map(|&b| b as u64).sum();
        let sigma = (0.25 / n as f64).sqrt();
        assert!((ones as f64 / n as f64 - 0.5).abs() < 4.0 * sigma);
        assert_eq!(src.bits_consumed(), n as u64);
    }

    #[test]
    fn seeded_label_frequencies() {
        let mut src = BitSource::seeded(3, stream::ALICE);
        let n = 4_000_000u64;
        let mut counts = [0u64; 4];
        for l in src.draw_state_choices(n).unwrap() {
            counts[l.index()] += 1;
        }
        let sigma = (0.25 * 0.75 / n as f64).sqrt();
        for c in counts {
            assert!((c as f64 / n as f64 - 0.25).abs() < 4.0 * sigma, "{counts:?}");
        }
    }

    #[test]
    fn physics_streams_differ_per_flip() {
        let mut r0 = physics_rng(1, 0);
        let mut r0b = physics_rng(1, 0);
        let mut r1 = physics_rng(1, 1);
        let x = r0.next_u64();
        assert_eq!(x, r0b.next_u64());
        assert_ne!(x, r1.next_u64());
    }
}
