use alloc::vec;
use alloc::vec::Vec;

const CLIP: f64 = 10.0;

/// Running mean and variance of observations; frozen while a rollout or an
/// evaluation is in progress.
#[derive(Debug, Clone, PartialEq)]
pub struct ObsNormalizer {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub count: f64,
}

impl ObsNormalizer {
    pub fn new(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            var: vec![1.0; dim],
            count: 1e-4,
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Merge the moments of `rows` (row-major, `dim` columns).
    pub fn update(&mut self, rows: &[f64]) {
        let dim = self.dim();
        if dim == 0 || rows.is_empty() {
            return;
        }
        let n = (rows.len() / dim) as f64;
        for j in 0..dim {
            let col = rows.iter().skip(j).step_by(dim);
            let mean = col.clone().sum::<f64>() / n;
            let var = col.map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
            let delta = mean - self.mean[j];
            let total = self.count + n;
            let m2 = self.var[j] * self.count + var * n + delta * delta * self.count * n / total;
            self.mean[j] += delta * n / total;
            self.var[j] = m2 / total;
        }
        self.count += n;
    }

    pub fn normalize_into(&self, obs: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(
            obs.iter()
                .enumerate()
                .map(|(j, x)| ((x - self.mean[j]) / libm::sqrt(self.var[j] + 1e-8)).clamp(-CLIP, CLIP)),
        );
    }
}
