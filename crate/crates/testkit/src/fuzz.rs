//! Byte-level mutations of valid encodings.

use rand::Rng;

/// Returns a copy of `data` that differs from it.
pub fn mutate<R: Rng>(rng: &mut R, data: &[u8]) -> Vec<u8> {
    loop {
        let mut out = data.to_vec();
        match rng.gen_range(0..6) {
            0 if !out.is_empty() => {
                let i = rng.gen_range(0..out.len());
                out[i] ^= 1 << rng.gen_range(0..8);
            }
            1 if !out.is_empty() => {
                let i = rng.gen_range(0..out.len());
                out[i] = rng.gen();
            }
            2 => {
                let i = rng.gen_range(0..=out.len());
                out.insert(i, rng.gen());
            }
            3 if !out.is_empty() => {
                out.remove(rng.gen_range(0..out.len()));
            }
            4 if !out.is_empty() => out.truncate(rng.gen_range(0..out.len())),
            5 => {
                // splice a short random run somewhere
                let i = rng.gen_range(0..=out.len());
                let n = rng.gen_range(1..6);
                for _ in 0..n {
                    out.insert(i, rng.gen());
                }
            }
            _ => continue,
        }
        if out != data {
            return out;
        }
    }
}

/// Tally of a decoder fuzz run.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct FuzzTally {
    pub cases: usize,
    pub panics: usize,
    pub false_accepts: usize,
}

impl FuzzTally {
    pub fn clean(&self) -> bool {
        self.panics == 0 && self.false_accepts == 0
    }
}

/// Feeds `cases` mutations of `seeds` to `accepts`, which returns true
/// when the decoder wrongly accepts a mutated input. Panics are caught
/// and counted.
pub fn fuzz<R: Rng>(
    rng: &mut R,
    seeds: &[Vec<u8>],
    cases: usize,
    accepts: impl Fn(&[u8]) -> bool + std::panic::RefUnwindSafe,
) -> FuzzTally {
    let mut tally = FuzzTally::default();
    for i in 0..cases {
        let m = mutate(rng, &seeds[i % seeds.len()]);
        tally.cases += 1;
        match std::panic::catch_unwind(|| accepts(&m)) {
            Ok(true) => tally.false_accepts += 1,
            Ok(false) => {}
            Err(_) => tally.panics += 1,
        }
    }
    tally
}
