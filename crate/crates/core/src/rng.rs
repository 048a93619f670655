//! Counter-based random streams. A stream is identified by
//! `(seed, chain, sweep, stage, cell)`, so results do not depend on the order
//! in which cells are processed.

use rand::RngCore;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Identifies one stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct StreamId {
    pub seed: u64,
    pub chain: u64,
    pub sweep: u64,
    pub stage: u64,
    pub cell: u64,
}

impl StreamId {
    pub fn key(&self) -> u64 {
        let mut k = mix64(self.seed.wrapping_add(GOLDEN));
        for part in [self.chain, self.sweep, self.stage, self.cell] {
            k = mix64(k ^ part.wrapping_mul(GOLDEN).wrapping_add(0x632B_E59B_D9B4_E019));
        }
        k
    }
}

/// splitmix64 output function over a keyed counter.
#[derive(Clone, Debug)]
pub struct CounterRng {
    key: u64,
    counter: u64,
}

impl CounterRng {
    pub fn new(id: StreamId) -> Self {
        CounterRng { key: id.key(), counter: 0 }
    }

    pub fn from_parts(seed: u64, chain: u64, sweep: u64, stage: u64, cell: u64) -> Self {
        Self::new(StreamId { seed, chain, sweep, stage, cell })
    }

    pub fn counter(&self) -> u64 {
        self.counter
    }
}

impl RngCore for CounterRng {
    #[inline]
    fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix64(self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN)))
    }

    #[inline]
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(8) {
            let v = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&v[..chunk.len()]);
        }
    }
}
