//! Carry-propagating 32-bit range coder (LZMA-style byte output).

use super::SymbolModel;

const TOP: u32 = 1 << 24;

pub struct RangeEncoder {
    low: u64,
    range: u32,
    cache: u8,
    pending: u64,
    out: Vec<u8>,
}

impl Default for RangeEncoder {
    fn default() -> Self {
        Self::new()
    }
}

impl RangeEncoder {
    pub fn new() -> Self {
        RangeEncoder { low: 0, range: u32::MAX, cache: 0, pending: 1, out: Vec::new() }
    }

    /// Narrows to `[start, start + size)` out of `2^bits`.
    pub fn encode(&mut self, start: u32, size: u32, bits: u32) {
        debug_assert!(size > 0 && (start as u64 + size as u64) <= 1 << bits);
        let r = self.range >> bits;
        self.low += r as u64 * start as u64;
        self.range = r * size;
        while self.range < TOP {
            self.range <<= 8;
            self.shift_low();
        }
    }

    pub fn encode_slot(&mut self, model: &SymbolModel, slot: usize) {
        self.encode(model.start(slot), model.frequency(slot), model.precision());
    }

    /// `bits ≤ 16` raw bits, uniformly weighted.
    pub fn encode_raw(&mut self, value: u32, bits: u32) {
        self.encode(value & ((1 << bits) - 1), 1, bits);
    }

    fn shift_low(&mut self) {
        if self.low < 0xFF00_0000 || self.low >= 1 << 32 {
            let carry = (self.low >> 32) as u8;
            let mut byte = self.cache;
            loop {
                self.out.push(byte.wrapping_add(carry));
                byte = 0xFF;
                self.pending -= 1;
                if self.pending == 0 {
                    break;
                }
            }
            self.cache = (self.low >> 24) as u8;
        }
        self.pending += 1;
        self.low = (self.low & 0x00FF_FFFF) << 8;
    }

    /// Emits the shortest byte string that still identifies the final
    /// interval when the decoder reads zeros past the end.
    pub fn finish(mut self) -> Vec<u8> {
        let end = self.low + self.range as u64;
        for k in (0..=32).rev() {
            let v = (self.low + (1u64 << k) - 1) >> k << k;
            if v < end {
                self.low = v;
                break;
            }
        }
        for _ in 0..5 {
            self.shift_low();
        }
        // the first byte only ever carries the (impossible) overflow of the
        // initial interval
        let mut out = self.out.split_off(1);
        while out.last() == Some(&0) {
            out.pop();
        }
        out
    }
}

pub struct RangeDecoder<'a> {
    input: &'a [u8],
    pos: usize,
    code: u32,
    range: u32,
}

impl<'a> RangeDecoder<'a> {
    pub fn new(input: &'a [u8]) -> Self {
        let mut d = RangeDecoder { input, pos: 0, code: 0, range: u32::MAX };
        for _ in 0..4 {
            d.code = (d.code << 8) | d.next_byte() as u32;
        }
        d
    }

    fn next_byte(&mut self) -> u8 {
        let b = self.input.get(self.pos).copied().unwrap_or(0);
        self.pos += 1;
        b
    }

    /// Current target in `[0, 2^bits)`; must be followed by [`Self::consume`].
    fn target(&mut self, bits: u32) -> (u32, u32) {
        let r = self.range >> bits;
        // corrupt input can point past the table; clamp instead of panicking
        ((self.code / r).min((1 << bits) - 1), r)
    }

    fn consume(&mut self, r: u32, start: u32, size: u32) {
        self.code = self.code.wrapping_sub(r.wrapping_mul(start));
        self.range = r.wrapping_mul(size);
        while self.range < TOP {
            self.code = (self.code << 8) | self.next_byte() as u32;
            self.range <<= 8;
        }
    }

    pub fn decode_slot(&mut self, model: &SymbolModel) -> usize {
        let (t, r) = self.target(model.precision());
        let slot = model.find(t);
        self.consume(r, model.start(slot), model.frequency(slot));
        slot
    }

    pub fn decode_raw(&mut self, bits: u32) -> u32 {
        let (t, r) = self.target(bits);
        self.consume(r, t, 1);
        t
    }
}
