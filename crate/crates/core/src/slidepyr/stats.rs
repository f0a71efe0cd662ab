use crate::error::{Error, Result};

/// Per-RGB-channel mean and population standard deviation in `[0, 1]` units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelStats {
    pub mean: [f64; 3],
    pub std: [f64; 3],
}

/// Exact integer accumulator over 8-bit RGB pixels; the result does not
/// depend on the order tiles are fed in.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ChannelAccumulator {
    count: u64,
    sum: [u64; 3],
    sum_sq: [u128; 3],
}

impl ChannelAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_pixels(&mut self, rgb: &[u8]) {
        let mut sum = [0u64; 3];
        let mut sq = [0u64; 3];
        for p in rgb.chunks_exact(3) {
            for c in 0..3 {
                let v = p[c] as u64;
                sum[c] += v;
                sq[c] += v * v;
            }
        }
        self.count += (rgb.len() / 3) as u64;
        for c in 0..3 {
            self.sum[c] += sum[c];
            self.sum_sq[c] += sq[c] as u128;
        }
    }

    pub fn merge(&mut self, other: &ChannelAccumulator) {
        self.count += other.count;
        for c in 0..3 {
            self.sum[c] += other.sum[c];
            self.sum_sq[c] += other.sum_sq[c];
        }
    }

    pub fn finish(&self) -> Result<ChannelStats> {
        if self.count == 0 {
            return Err(Error::Config("channel statistics need at least one tile".into()));
        }
        let n = self.count as u128;
        let scale = self.count as f64 * 255.0;
        let mut mean = [0.0; 3];
        let mut std = [0.0; 3];
        for c in 0..3 {
            let s = self.sum[c] as u128;
            let spread = n * self.sum_sq[c] - s * s;
            mean[c] = self.sum[c] as f64 / scale;
            std[c] = libm::sqrt(spread as f64) / scale;
            if spread == 0 {
                return Err(Error::Config(alloc::format!(
                    "channel {c} has zero standard deviation over the training tiles"
                )));
            }
        }
        Ok(ChannelStats { mean, std })
    }
}

/// Channel statistics over a set of training tiles given as raw RGB buffers.
pub fn compute_channel_stats<'a, I>(tiles: I) -> Result<ChannelStats>
where
    I: IntoIterator<Item = &'a [u8]>,
{
    let mut acc = ChannelAccumulator::new();
    for t in tiles {
        acc.add_pixels(t);
    }
    acc.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn single_gray_tile_is_degenerate() {
        let gray = vec![128u8; 16 * 3];
        match compute_channel_stats([gray.as_slice()]) {
            Err(Error::Config(_)) => {}
            other => panic!("{other:?}"),
        }
        let mut acc = ChannelAccumulator::new();
        acc.add_pixels(&gray);
        assert_eq!(acc.sum[0] as f64 / (16.0 * 255.0), 128.0 / 255.0);
    }

    #[test]
    fn black_and_white_tiles() {
        let black = vec![0u8; 64 * 3];
        let white = vec![255u8; 64 * 3];
        let s = compute_channel_stats([black.as_slice(), white.as_slice()]).unwrap();
        assert_eq!(s.mean, [0.5; 3]);
        assert_eq!(s.std, [0.5; 3]);
        let r = compute_channel_stats([white.as_slice(), black.as_slice()]).unwrap();
        assert_eq!(s, r);
    }

    #[test]
    fn empty_is_error() {
        assert!(compute_channel_stats(core::iter::empty::<&[u8]>()).is_err());
    }
}
