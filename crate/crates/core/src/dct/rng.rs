/// Multiplier of the 64-bit linear congruential state update.
pub const PCG_MULTIPLIER: u64 = 6_364_136_223_846_793_005;
/// Stream selector used by [`SeededRng::new`]; yields increment `1442695040888963407`.
pub const PCG_DEFAULT_STREAM: u64 = 721_347_520_444_481_703;

/// PCG32 (XSH-RR, 64-bit state, 32-bit output).
///
/// Seeding follows the reference `pcg32_srandom_r`: zero the state, step once,
/// add the seed, step again. Bits are handed out least-significant first,
/// 32 per drawn word, so a given seed yields the same bit stream on every
/// platform.
#[derive(Clone, Debug)]
pub struct SeededRng {
    state: u64,
    increment: u64,
    word: u32,
    bits_left: u32,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, PCG_DEFAULT_STREAM)
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut rng = SeededRng { state: 0, increment: (stream << 1) | 1, word: 0, bits_left: 0 };
        rng.step();
        rng.state = rng.state.wrapping_add(seed);
        rng.step();
        rng
    }

    fn step(&mut self) {
        self.state = self.state.wrapping_mul(PCG_MULTIPLIER).wrapping_add(self.increment);
    }

    pub fn next_u32(&mut self) -> u32 {
        let old = self.state;
        self.step();
        let xorshifted = (((old >> 18) ^ old) >> 27) as u32;
        let rot = (old >> 59) as u32;
        xorshifted.rotate_right(rot)
    }

    pub fn next_bit(&mut self) -> bool {
        if self.bits_left == 0 {
            self.word = self.next_u32();
            self.bits_left = 32;
        }
        let bit = self.word & 1 == 1;
        self.word >>= 1;
        self.bits_left -= 1;
        bit
    }
}
