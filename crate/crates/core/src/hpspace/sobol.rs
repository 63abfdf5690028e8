//! Owen-scrambled Sobol sequence over a handful of dimensions.
//!
//! Direction numbers are the first rows of the Joe & Kuo `new-joe-kuo-6.21201`
//! table. Scrambling is the hash-based nested-uniform approximation: bit-reverse,
//! apply a Laine-Karras style permutation keyed by a per-dimension seed, and
//! reverse back. Each dimension gets an independent scramble derived from the
//! caller's seed, so different seeds give statistically independent sequences
//! that keep the (t, m, s)-net structure.

use crate::seeds;

/// Number of dimensions with built-in direction numbers.
pub const MAX_DIMS: usize = 8;

// (degree s, coefficient a, initial m values) for dimensions 1.. (dimension 0
// is the van der Corput sequence).
const PRIMITIVES: [(u32, u32, &[u32]); MAX_DIMS - 1] = [
    (1, 0, &[1]),
    (2, 1, &[1, 3]),
    (3, 1, &[1, 3, 1]),
    (3, 2, &[1, 1, 1]),
    (4, 1, &[1, 1, 3, 3]),
    (4, 4, &[1, 3, 5, 13]),
    (5, 2, &[1, 1, 5, 5, 17]),
];

fn direction_numbers(dim: usize) -> [u32; 32] {
    let mut v = [0u32; 32];
    if dim == 0 {
        for (i, vi) in v.iter_mut().enumerate() {
            *vi = 1 << (31 - i);
        }
        return v;
    }
    let (s, a, m) = PRIMITIVES[dim - 1];
    let s = s as usize;
    for i in 0..s {
        v[i] = m[i] << (31 - i);
    }
    for i in s..32 {
        let mut x = v[i - s] ^ (v[i - s] >> s);
        for k in 1..s {
            if (a >> (s - 1 - k)) & 1 == 1 {
                x ^= v[i - k];
            }
        }
        v[i] = x;
    }
    v
}

#[inline]
fn lk_permute(mut n: u32, key: u32) -> u32 {
    n = n.wrapping_add(key);
    n ^= n.wrapping_mul(0x6c50_b47c);
    n ^= n.wrapping_mul(0xb82f_1e52);
    n ^= n.wrapping_mul(0xc7af_e638);
    n ^= n.wrapping_mul(0x8d22_f6e6);
    n
}

#[inline]
fn owen_scramble(x: u32, key: u32) -> u32 {
    lk_permute(x.reverse_bits(), key).reverse_bits()
}

/// A seeded scrambled Sobol generator over `dims` dimensions.
#[derive(Debug, Clone)]
pub struct ScrambledSobol {
    directions: Vec<[u32; 32]>,
    keys: Vec<u32>,
}

impl ScrambledSobol {
    /// # Panics
    /// If `dims` exceeds [`MAX_DIMS`].
    pub fn new(dims: usize, seed: u64) -> Self {
        assert!(dims <= MAX_DIMS, "at most {MAX_DIMS} Sobol dimensions");
        Self {
            directions: (0..dims).map(direction_numbers).collect(),
            keys: (0..dims)
                .map(|d| seeds::derive(seed, "sobol-scramble", d as u64) as u32)
                .collect(),
        }
    }

    pub fn dims(&self) -> usize {
        self.directions.len()
    }

    /// Unscrambled 32-bit Sobol integer for `index` in dimension `dim`.
    pub fn raw(&self, index: u32, dim: usize) -> u32 {
        let v = &self.directions[dim];
        let mut x = 0u32;
        let mut n = index;
        let mut bit = 0;
        while n != 0 {
            if n & 1 == 1 {
                x ^= v[bit];
            }
            n >>= 1;
            bit += 1;
        }
        x
    }

    /// Coordinate in `[0, 1)` for sample `index`, dimension `dim`.
    pub fn coordinate(&self, index: u32, dim: usize) -> f64 {
        let x = owen_scramble(self.raw(index, dim), self.keys[dim]);
        // Centre within the 2^-32 cell so log-mapping never sees exactly 0.
        (f64::from(x) + 0.5) * (1.0 / 4_294_967_296.0)
    }

    pub fn point(&self, index: u32) -> Vec<f64> {
        (0..self.dims()).map(|d| self.coordinate(index, d)).collect()
    }
}
