use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub bins: Vec<HistogramBin>,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub count: usize,
}

impl Histogram {
    /// `bin_lo,bin_hi,count` rows followed by a `# mean=.. std=.. n=..` summary line.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("bin_lo,bin_hi,count\n");
        for b in &self.bins {
            s.push_str(&format!("{:.6},{:.6},{}\n", b.lo, b.hi, b.count));
        }
        s.push_str(&format!(
            "# mean={:.6} std={:.6} n={}\n",
            self.mean, self.std, self.count
        ));
        s
    }
}

/// Fixed-width bins aligned to multiples of `bin_width`, plus mean and std.
pub fn reward_histogram(scores: &[f64], bin_width: f64) -> Result<Histogram> {
    if !(bin_width > 0.0) || !bin_width.is_finite() {
        return Err(Error::config("analysis.bin_width", "must be positive"));
    }
    if scores.is_empty() {
        return Err(Error::input("no scores to histogram"));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::input("non-finite score"));
    }
    let n = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / n;
    let std = (scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n).sqrt();
    let index = |s: f64| (s / bin_width).floor() as i64;
    let lo = scores.iter().map(|&s| index(s)).min().unwrap();
    let hi = scores.iter().map(|&s| index(s)).max().unwrap();
    let mut bins: Vec<HistogramBin> = (lo..=hi)
        .map(|i| HistogramBin {
            lo: i as f64 * bin_width,
            hi: (i + 1) as f64 * bin_width,
            count: 0,
        })
        .collect();
    for &s in scores {
        bins[(index(s) - lo) as usize].count += 1;
    }
    Ok(Histogram {
        bins,
        mean,
        std,
        count: scores.len(),
    })
}
