use serde::{Deserialize, Serialize};

use super::manifest::Manifest;
use crate::error::{Error, Result};
use crate::metrics::plcc;

/// Fixed-width bins starting at `start`. Values outside the covered range are
/// counted in the first or last bin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub start: f64,
    pub bin_width: f64,
    pub counts: Vec<u64>,
}

impl Histogram {
    fn new(start: f64, bin_width: f64, bins: usize) -> Self {
        Histogram {
            start,
            bin_width,
            counts: vec![0; bins],
        }
    }

    pub fn bin_of(&self, v: f64) -> usize {
        // the small offset keeps values such as 0.75 out of the bin below
        let i = ((v - self.start) / self.bin_width + 1e-9).floor();
        (i.max(0.0) as usize).min(self.counts.len() - 1)
    }

    fn add(&mut self, v: f64) {
        let i = self.bin_of(v);
        self.counts[i] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// `[lo, hi)` of bin `i`.
    pub fn bin_range(&self, i: usize) -> (f64, f64) {
        let lo = self.start + i as f64 * self.bin_width;
        (lo, lo + self.bin_width)
    }

    /// Index of the fullest bin (first one on ties).
    pub fn peak(&self) -> usize {
        let max = self.counts.iter().copied().max().unwrap_or(0);
        self.counts.iter().position(|&c| c == max).unwrap_or(0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub n: usize,
    pub width_hist: Histogram,
    pub height_hist: Histogram,
    /// Width / height.
    pub ratio_hist: Histogram,
    pub area_hist: Histogram,
    /// Pearson correlation of width and height; `None` when either is constant.
    pub wh_correlation: Option<f64>,
}

pub fn dataset_stats(m: &Manifest) -> Result<StatsReport> {
    if m.is_empty() {
        return Err(Error::invalid("dataset_stats needs a non-empty manifest"));
    }
    let mut width_hist = Histogram::new(0.0, 16.0, 64);
    let mut height_hist = Histogram::new(0.0, 16.0, 64);
    let mut ratio_hist = Histogram::new(0.05, 0.1, 20);
    let mut area_hist = Histogram::new(0.0, 2048.0, 64);
    let mut ws = Vec::with_capacity(m.len());
    let mut hs = Vec::with_capacity(m.len());
    for s in m.samples() {
        let (w, h) = (s.width as f64, s.height as f64);
        width_hist.add(w);
        height_hist.add(h);
        ratio_hist.add(w / h);
        area_hist.add(w * h);
        ws.push(w);
        hs.push(h);
    }
    let wh_correlation = if m.len() >= 2 { plcc(&ws, &hs).ok() } else { None };
    Ok(StatsReport {
        n: m.len(),
        width_hist,
        height_hist,
        ratio_hist,
        area_hist,
        wh_correlation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Degradation, Sample};

    fn manifest(dims: &[(usize, usize)]) -> Manifest {
        let samples = dims
            .iter()
            .enumerate()
            .map(|(i, &(width, height))| Sample {
                path: format!("{i}.png"),
                mos: 1.0,
                width,
                height,
                degradation: Degradation::NONE,
            })
            .collect();
        Manifest::new(samples, None, ".").unwrap()
    }

    #[test]
    fn single_square_image() {
        let r = dataset_stats(&manifest(&[(100, 100)])).unwrap();
        for h in [&r.width_hist, &r.height_hist, &r.ratio_hist, &r.area_hist] {
            assert_eq!(h.total(), 1);
            assert_eq!(h.counts.iter().filter(|&&c| c > 0).count(), 1);
        }
        let (lo, hi) = r.ratio_hist.bin_range(r.ratio_hist.peak());
        assert!(lo <= 1.0 && 1.0 < hi);
        assert_eq!(r.wh_correlation, None);
    }

    #[test]
    fn bin_edges_are_half_open() {
        let h = Histogram::new(0.05, 0.1, 20);
        assert_eq!(h.bin_of(0.75), 7);
        assert_eq!(h.bin_of(0.7499), 6);
        assert_eq!(h.bin_of(0.65), 6);
        assert_eq!(h.bin_of(-3.0), 0);
        assert_eq!(h.bin_of(9.0), 19);
    }

    #[test]
    fn empty_is_rejected() {
        assert!(dataset_stats(&manifest(&[])).is_err());
    }
}
