//! Piecewise-linear terrain height profiles.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::error::{Error, Result};

/// Height profile `h(x)` through sorted samples, held constant beyond the ends.
#[derive(Debug, Clone, PartialEq)]
pub struct Terrain {
    xs: Vec<f64>,
    hs: Vec<f64>,
}

impl Default for Terrain {
    fn default() -> Self {
        Terrain::flat(0.0)
    }
}

impl Terrain {
    pub fn flat(height: f64) -> Self {
        Terrain {
            xs: vec![0.0],
            hs: vec![height],
        }
    }

    pub fn from_samples(xs: Vec<f64>, hs: Vec<f64>) -> Result<Self> {
        if xs.is_empty() || xs.len() != hs.len() {
            return Err(Error::validation("terrain samples must be non-empty and of equal length"));
        }
        if xs.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::validation("terrain x samples must be strictly increasing"));
        }
        if xs.iter().chain(&hs).any(|v| !v.is_finite()) {
            return Err(Error::validation("terrain samples must be finite"));
        }
        Ok(Terrain { xs, hs })
    }

    pub fn samples(&self) -> (&[f64], &[f64]) {
        (&self.xs, &self.hs)
    }

    fn segment(&self, x: f64) -> Option<usize> {
        if self.xs.len() < 2 || x <= self.xs[0] || x >= self.xs[self.xs.len() - 1] {
            return None;
        }
        // partition_point gives the first sample strictly greater than x.
        Some(self.xs.partition_point(|&xi| xi <= x) - 1)
    }

    pub fn height(&self, x: f64) -> f64 {
        match self.segment(x) {
            None if x <= self.xs[0] => self.hs[0],
            None => self.hs[self.hs.len() - 1],
            Some(i) => {
                let t = (x - self.xs[i]) / (self.xs[i + 1] - self.xs[i]);
                self.hs[i] + t * (self.hs[i + 1] - self.hs[i])
            }
        }
    }

    pub fn slope(&self, x: f64) -> f64 {
        match self.segment(x) {
            None => 0.0,
            Some(i) => (self.hs[i + 1] - self.hs[i]) / (self.xs[i + 1] - self.xs[i]),
        }
    }

    /// Unit surface normal at `x`.
    pub fn normal(&self, x: f64) -> [f64; 2] {
        let s = self.slope(x);
        let n = (1.0 + s * s).sqrt();
        [-s / n, 1.0 / n]
    }
}

/// Terrain as written in model and scenario documents.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TerrainDoc {
    Flat {
        #[serde(default)]
        height: f64,
    },
    Profile {
        x: Vec<f64>,
        height: Vec<f64>,
    },
    /// Flat until `start`, then rising at `grade` (rise over run) for `length`
    /// metres, then flat again.
    Slope {
        start: f64,
        grade: f64,
        length: f64,
    },
    /// Uniform random heights in `[-amplitude, amplitude]` every `spacing`
    /// metres between `start` and `start + length`.
    Rough {
        start: f64,
        length: f64,
        spacing: f64,
        amplitude: f64,
        seed: u64,
    },
    /// A single step of `height` at `start`.
    Step {
        start: f64,
        height: f64,
    },
}

impl Default for TerrainDoc {
    fn default() -> Self {
        TerrainDoc::Flat { height: 0.0 }
    }
}

impl TerrainDoc {
    pub fn build(&self) -> Result<Terrain> {
        match self {
            TerrainDoc::Flat { height } => Ok(Terrain::flat(*height)),
            TerrainDoc::Profile { x, height } => Terrain::from_samples(x.clone(), height.clone()),
            TerrainDoc::Slope { start, grade, length } => {
                if !(*length > 0.0) {
                    return Err(Error::validation("slope length must be positive"));
                }
                Terrain::from_samples(vec![*start, start + length], vec![0.0, grade * length])
            }
            TerrainDoc::Rough {
                start,
                length,
                spacing,
                amplitude,
                seed,
            } => {
                if !(*spacing > 0.0 && *length > 0.0 && *amplitude >= 0.0) {
                    return Err(Error::validation("rough terrain needs positive spacing/length and amplitude ≥ 0"));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let n = (length / spacing).ceil() as usize;
                let mut xs = Vec::with_capacity(n + 1);
                let mut hs = Vec::with_capacity(n + 1);
                for i in 0..=n {
                    xs.push(start + i as f64 * spacing);
                    let h = if i == 0 || i == n {
                        0.0
                    } else {
                        rng.random_range(-amplitude..=*amplitude)
                    };
                    hs.push(h);
                }
                Terrain::from_samples(xs, hs)
            }
            TerrainDoc::Step { start, height } => {
                Terrain::from_samples(vec![*start, start + 0.01], vec![0.0, *height])
            }
        }
    }
}
