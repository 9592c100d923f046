//! Carry-less range coder (Subbotin) over 16-bit cumulative frequencies.

use crate::error::{Error, Result};

/// Precision of cumulative frequencies: every model sums to `1 << FREQ_BITS`.
pub const FREQ_BITS: u32 = 16;
pub const TOTAL_FREQ: u32 = 1 << FREQ_BITS;

const TOP: u32 = 1 << 24;
const BOT: u32 = 1 << 16;

/// Encoder state: `low` and `range` are 32-bit and wrap.
#[derive(Clone, Debug)]
pub struct RangeEncoder {
    low: u32,
    range: u32,
    out: Vec<u8>,
}

impl Default for RangeEncoder {
    fn default() -> Self {
        Self::new()
    }
}

impl RangeEncoder {
    pub fn new() -> Self {
        RangeEncoder { low: 0, range: u32::MAX, out: Vec::new() }
    }

    /// Codes the interval `[cum, cum + freq)` out of [`TOTAL_FREQ`].
    pub fn encode(&mut self, cum: u32, freq: u32) {
        debug_assert!(freq > 0 && cum + freq <= TOTAL_FREQ);
        self.range >>= FREQ_BITS;
        self.low = self.low.wrapping_add(cum.wrapping_mul(self.range));
        self.range = self.range.wrapping_mul(freq);
        self.normalize();
    }

    fn normalize(&mut self) {
        loop {
            if (self.low ^ self.low.wrapping_add(self.range)) >= TOP {
                if self.range >= BOT {
                    break;
                }
                self.range = self.low.wrapping_neg() & (BOT - 1);
            }
            self.out.push((self.low >> 24) as u8);
            self.low <<= 8;
            self.range <<= 8;
        }
    }

    pub fn bytes_written(&self) -> usize {
        self.out.len()
    }

    /// Flushes the four state bytes and returns the payload.
    pub fn finish(mut self) -> Vec<u8> {
        for _ in 0..4 {
            self.out.push((self.low >> 24) as u8);
            self.low <<= 8;
        }
        self.out
    }
}

#[derive(Clone, Debug)]
pub struct RangeDecoder<'a> {
    low: u32,
    range: u32,
    code: u32,
    data: &'a [u8],
    pos: usize,
}

impl<'a> RangeDecoder<'a> {
    pub fn new(data: &'a [u8]) -> Result<Self> {
        let mut d = RangeDecoder { low: 0, range: u32::MAX, code: 0, data, pos: 0 };
        for _ in 0..4 {
            d.code = (d.code << 8) | d.next_byte()? as u32;
        }
        Ok(d)
    }

    fn next_byte(&mut self) -> Result<u8> {
        let b = *self
            .data
            .get(self.pos)
            .ok_or_else(|| Error::Stream(format!("range decoder read past the end of a {}-byte payload", self.data.len())))?;
        self.pos += 1;
        Ok(b)
    }

    /// Cumulative frequency of the next symbol. Must be followed by [`Self::consume`].
    pub fn target(&mut self) -> Result<u32> {
        self.range >>= FREQ_BITS;
        let t = self.code.wrapping_sub(self.low) / self.range;
        if t >= TOTAL_FREQ {
            return Err(Error::Stream("corrupt range-coded payload".into()));
        }
        Ok(t)
    }

    pub fn consume(&mut self, cum: u32, freq: u32) -> Result<()> {
        self.low = self.low.wrapping_add(cum.wrapping_mul(self.range));
        self.range = self.range.wrapping_mul(freq);
        loop {
            if (self.low ^ self.low.wrapping_add(self.range)) >= TOP {
                if self.range >= BOT {
                    break;
                }
                self.range = self.low.wrapping_neg() & (BOT - 1);
            }
            self.code = (self.code << 8) | self.next_byte()? as u32;
            self.low <<= 8;
            self.range <<= 8;
        }
        Ok(())
    }

    /// True once every byte of the payload has been consumed.
    pub fn is_exhausted(&self) -> bool {
        self.pos == self.data.len()
    }

    pub fn position(&self) -> usize {
        self.pos
    }
}
