//! ±1 payloads and their on-disk forms: bit text ('1' → +1, '0' → −1) and
//! plain PBM (P1) logos where a black pixel is +1, rows stored top to bottom.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PayloadOrigin {
    Random,
    Logo { rows: usize, cols: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Payload {
    bits: Vec<i8>,
    origin: PayloadOrigin,
}

impl Payload {
    pub fn new(bits: Vec<i8>) -> Result<Self> {
        if bits.is_empty() {
            return Err(Error::Payload("payload is empty".into()));
        }
        if let Some(b) = bits.iter().find(|b| b.abs() != 1) {
            return Err(Error::Payload(format!("payload symbol {b} is not ±1")));
        }
        Ok(Self {
            bits,
            origin: PayloadOrigin::Random,
        })
    }

    pub fn logo(bits: Vec<i8>, rows: usize, cols: usize) -> Result<Self> {
        if rows * cols != bits.len() {
            return Err(Error::Shape(format!(
                "{rows}x{cols} logo needs {} bits, got {}",
                rows * cols,
                bits.len()
            )));
        }
        let mut p = Self::new(bits)?;
        p.origin = PayloadOrigin::Logo { rows, cols };
        Ok(p)
    }

    /// Uniform random ±1 payload from a seed.
    pub fn random(len: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        Self::new((0..len).map(|_| if rng.gen::<bool>() { 1 } else { -1 }).collect())
    }

    pub fn bits(&self) -> &[i8] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn origin(&self) -> PayloadOrigin {
        self.origin
    }

    /// Re-labels the payload as a logo of the given shape.
    pub fn with_logo_dims(mut self, rows: usize, cols: usize) -> Result<Self> {
        if rows * cols != self.bits.len() {
            return Err(Error::Shape(format!(
                "{rows}x{cols} does not match {} bits",
                self.bits.len()
            )));
        }
        self.origin = PayloadOrigin::Logo { rows, cols };
        Ok(self)
    }

    pub fn negated(&self) -> Self {
        Self {
            bits: self.bits.iter().map(|b| -b).collect(),
            origin: self.origin,
        }
    }

    pub fn parse_bit_text(text: &str) -> Result<Self> {
        let mut bits = Vec::new();
        for ch in text.chars() {
            match ch {
                '1' => bits.push(1),
                '0' => bits.push(-1),
                c if c.is_whitespace() => {}
                c => return Err(Error::Payload(format!("unexpected character '{c}' in bit text"))),
            }
        }
        Self::new(bits)
    }

    pub fn to_bit_text(&self) -> String {
        let mut s: String = self.bits.iter().map(|&b| if b > 0 { '1' } else { '0' }).collect();
        s.push('\n');
        s
    }

    pub fn parse_pbm(text: &str) -> Result<Self> {
        let mut tokens = Vec::new();
        for line in text.lines() {
            let line = line.split('#').next().unwrap_or("");
            tokens.extend(line.split_whitespace());
        }
        let mut it = tokens.into_iter();
        if it.next() != Some("P1") {
            return Err(Error::Payload("not a plain PBM (missing P1 magic)".into()));
        }
        let mut dim = || -> Result<usize> {
            it.next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| Error::Payload("bad PBM dimensions".into()))
        };
        let cols = dim()?;
        let rows = dim()?;
        // Pixels may be packed without separators in plain PBM.
        let rest: String = it.collect();
        let mut bits = Vec::with_capacity(rows * cols);
        for ch in rest.chars() {
            match ch {
                '1' => bits.push(1),
                '0' => bits.push(-1),
                c => return Err(Error::Payload(format!("unexpected PBM pixel '{c}'"))),
            }
        }
        if bits.len() != rows * cols {
            return Err(Error::Payload(format!(
                "PBM declares {cols}x{rows} but holds {} pixels",
                bits.len()
            )));
        }
        Self::logo(bits, rows, cols)
    }

    pub fn to_pbm(&self) -> Result<String> {
        let PayloadOrigin::Logo { rows, cols } = self.origin else {
            return Err(Error::Shape("payload has no logo dimensions".into()));
        };
        Ok(render_pbm(&self.bits, rows, cols))
    }

    /// Loads a payload file, PBM if it starts with the P1 magic, bit text otherwise.
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        if text.trim_start().starts_with("P1") {
            Self::parse_pbm(&text)
        } else {
            Self::parse_bit_text(&text)
        }
    }

    /// Writes PBM for logos, bit text otherwise.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = match self.origin {
            PayloadOrigin::Logo { .. } => self.to_pbm()?,
            PayloadOrigin::Random => self.to_bit_text(),
        };
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Plain PBM text for a row-major ±1 bitmap, +1 → black.
pub fn render_pbm(bits: &[i8], rows: usize, cols: usize) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "P1\n{cols} {rows}");
    for row in bits.chunks(cols.max(1)) {
        let line: Vec<&str> = row.iter().map(|&b| if b > 0 { "1" } else { "0" }).collect();
        let _ = writeln!(s, "{}", line.join(" "));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bit_text_mapping() {
        let p = Payload::parse_bit_text("10 1\n0").unwrap();
        assert_eq!(p.bits(), &[1, -1, 1, -1]);
        assert_eq!(p.to_bit_text(), "1010\n");
        assert!(Payload::parse_bit_text("102").is_err());
        assert!(Payload::parse_bit_text("  \n").is_err());
    }

    #[test]
    fn pbm_black_is_plus_one() {
        let text = "P1\n# logo\n3 2\n1 0 1\n0 0 1\n";
        let p = Payload::parse_pbm(text).unwrap();
        assert_eq!(p.bits(), &[1, -1, 1, -1, -1, 1]);
        assert_eq!(p.origin(), PayloadOrigin::Logo { rows: 2, cols: 3 });
        assert_eq!(p.to_pbm().unwrap(), "P1\n3 2\n1 0 1\n0 0 1\n");
        // packed pixels
        let q = Payload::parse_pbm("P1 3 2 101001").unwrap();
        assert_eq!(p, q);
        assert!(Payload::parse_pbm("P1 3 2 1010").is_err());
        assert!(Payload::parse_pbm("P4 3 2").is_err());
    }

    #[test]
    fn validation() {
        assert!(Payload::new(vec![]).is_err());
        assert!(Payload::new(vec![1, 0]).is_err());
        assert!(Payload::logo(vec![1; 5], 2, 3).is_err());
        let r = Payload::random(64, 3).unwrap();
        assert_eq!(r, Payload::random(64, 3).unwrap());
        assert_ne!(r, Payload::random(64, 4).unwrap());
        assert_eq!(r.negated().negated(), r);
    }
}
