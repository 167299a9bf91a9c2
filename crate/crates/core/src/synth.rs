//! Two-view synthetic classification data.
//!
//! Every random draw comes from one ChaCha20 stream seeded with
//! `SynthConfig::seed`, consumed in this fixed order:
//!
//! 1. latent `Z`, row-major, class 0 rows first (mean `+0.5`) then class 1
//!    (mean `-0.5`);
//! 2. for each view: its extra block, row-major, the `+1` rows first, then a
//!    Fisher–Yates shuffle assigning extra rows to samples;
//! 3. for each view: additive noise, row-major.
//!
//! Gaussians use the Box–Muller transform on `u1 = 1 - U[0,1)`, `u2 = U[0,1)`,
//! emitting the cosine branch then the sine branch. The train/test split uses
//! the same seed on a separate ChaCha20 stream (see [`stratified_split`]).

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::data_io::stratified_split;
use crate::error::{MeibError, Result};
use crate::linalg::DenseMatrix;
use crate::model::MultiViewBatch;

/// Standard normal sampler over any RNG, caching the second Box–Muller value.
pub struct BoxMuller<R> {
    rng: R,
    spare: Option<f64>,
}

impl<R: Rng> BoxMuller<R> {
    pub fn new(rng: R) -> Self {
        Self { rng, spare: None }
    }

    pub fn sample(&mut self) -> f64 {
        if let Some(v) = self.spare.take() {
            return v;
        }
        let u1 = 1.0 - self.rng.random::<f64>();
        let u2 = self.rng.random::<f64>();
        let radius = (-2.0 * u1.ln()).sqrt();
        let angle = std::f64::consts::TAU * u2;
        self.spare = Some(radius * angle.sin());
        radius * angle.cos()
    }

    pub fn rng_mut(&mut self) -> &mut R {
        &mut self.rng
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    /// Samples per class. The extra-feature groups hold `round(2s/3)` and
    /// `round(s/3)` rows, which is exact when `s` is divisible by 3.
    pub s: usize,
    pub latent_dim: usize,
    pub extra_dim: usize,
    /// Noise factor `a`; the noise level of a view is `a * max|clean view|`.
    pub noise_factor: f64,
    pub seed: u64,
    pub train_fraction: f64,
    /// Treat the noise level as a variance (std = √t) rather than a std.
    pub noise_is_variance: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            s: 500,
            latent_dim: 20,
            extra_dim: 5,
            noise_factor: 0.0,
            seed: 0,
            train_fraction: 0.8,
            noise_is_variance: true,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.s < 2 {
            return Err(MeibError::Parameter(format!(
                "need at least 2 samples per class, got {}",
                self.s
            )));
        }
        if self.latent_dim == 0 || self.extra_dim == 0 {
            return Err(MeibError::Parameter("latent and extra dimensions must be at least 1".into()));
        }
        if !(self.noise_factor >= 0.0) || !self.noise_factor.is_finite() {
            return Err(MeibError::Parameter(format!(
                "noise factor must be finite and >= 0, got {}",
                self.noise_factor
            )));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(MeibError::Parameter(format!(
                "train fraction must lie in (0, 1), got {}",
                self.train_fraction
            )));
        }
        Ok(())
    }

    pub fn view_dim(&self) -> usize {
        self.latent_dim + self.extra_dim
    }
}

/// Every intermediate of one generation run, before splitting.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthParts {
    pub latent: DenseMatrix,
    /// Extra blocks after the row permutation, one per view.
    pub extras: [DenseMatrix; 2],
    pub clean: [DenseMatrix; 2],
    pub noise_levels: [f64; 2],
    pub noisy: [DenseMatrix; 2],
    /// `s` zeros followed by `s` ones.
    pub labels: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthDataset {
    pub train: MultiViewBatch,
    pub test: MultiViewBatch,
    pub provenance: SynthConfig,
}

/// `a * max|v|` over all entries.
pub fn noise_level(clean_view: &DenseMatrix, a: f64) -> Result<f64> {
    if clean_view.data().is_empty() {
        return Err(MeibError::Empty("view for noise level".into()));
    }
    Ok(a * clean_view.max_abs())
}

/// Rows drawn around `+1` for the first and second view: `2s/3` and `s/3`,
/// rounded to the nearest integer.
pub fn extra_group_sizes(s: usize) -> (usize, usize) {
    ((2 * s + 1) / 3, (s + 1) / 3)
}

fn gaussian_rows(
    g: &mut BoxMuller<ChaCha20Rng>,
    rows: usize,
    cols: usize,
    mean_of_row: impl Fn(usize) -> f64,
) -> DenseMatrix {
    let mut data = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        let mu = mean_of_row(r);
        for _ in 0..cols {
            data.push(mu + g.sample());
        }
    }
    DenseMatrix::new(rows, cols, data).expect("length matches shape")
}

fn extra_block(g: &mut BoxMuller<ChaCha20Rng>, total: usize, positive: usize, dim: usize) -> DenseMatrix {
    let block = gaussian_rows(g, total, dim, |r| if r < positive { 1.0 } else { -1.0 });
    let mut order: Vec<usize> = (0..total).collect();
    order.shuffle(g.rng_mut());
    block.select_rows(&order)
}

fn add_noise(g: &mut BoxMuller<ChaCha20Rng>, clean: &DenseMatrix, std: f64) -> DenseMatrix {
    if std == 0.0 {
        return clean.clone();
    }
    let data = clean.data().iter().map(|v| v + std * g.sample()).collect();
    DenseMatrix::new(clean.rows(), clean.cols(), data).expect("length matches shape")
}

pub fn generate_parts(cfg: &SynthConfig) -> Result<SynthParts> {
    cfg.validate()?;
    let s = cfg.s;
    let n = 2 * s;
    let mut g = BoxMuller::new(ChaCha20Rng::seed_from_u64(cfg.seed));

    let latent = gaussian_rows(&mut g, n, cfg.latent_dim, |r| if r < s { 0.5 } else { -0.5 });
    let extras = [
        extra_block(&mut g, n, extra_group_sizes(s).0, cfg.extra_dim),
        extra_block(&mut g, n, extra_group_sizes(s).1, cfg.extra_dim),
    ];
    let d1 = DenseMatrix::hconcat(&[&latent, &extras[0]])?;
    let d2 = DenseMatrix::hconcat(&[&latent, &extras[1]])?;
    let clean = [
        d1.map(|v| v.tanh().tanh() + 0.1),
        d2.map(|v| 1.0 / (1.0 + (-v).exp()) - 0.5),
    ];
    let noise_levels = [
        noise_level(&clean[0], cfg.noise_factor)?,
        noise_level(&clean[1], cfg.noise_factor)?,
    ];
    let std_of = |t: f64| if cfg.noise_is_variance { t.sqrt() } else { t };
    let noisy = [
        add_noise(&mut g, &clean[0], std_of(noise_levels[0])),
        add_noise(&mut g, &clean[1], std_of(noise_levels[1])),
    ];
    let labels = (0..n).map(|r| usize::from(r >= s)).collect();
    Ok(SynthParts {
        latent,
        extras,
        clean,
        noise_levels,
        noisy,
        labels,
    })
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthDataset> {
    let parts = generate_parts(cfg)?;
    let [x1, x2] = parts.noisy;
    let all = MultiViewBatch::new(vec![x1, x2], parts.labels)?;
    let (train, test) = stratified_split(&all, cfg.train_fraction, cfg.seed)?;
    Ok(SynthDataset {
        train,
        test,
        provenance: cfg.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(a: f64) -> SynthConfig {
        SynthConfig {
            s: 30,
            noise_factor: a,
            seed: 7,
            ..Default::default()
        }
    }

    #[test]
    fn zero_noise_leaves_clean_views() {
        let p = generate_parts(&small(0.0)).unwrap();
        assert_eq!(p.noisy, p.clean);
        assert_eq!(p.noise_levels, [0.0, 0.0]);
    }

    #[test]
    fn extra_group_sizes_round() {
        for (s, sizes) in [(500usize, (333usize, 167usize)), (50, (33, 17)), (300, (200, 100)), (1000, (667, 333))] {
            assert_eq!(extra_group_sizes(s), sizes);
        }
        let d = generate(&SynthConfig { s: 50, ..Default::default() }).unwrap();
        assert_eq!(d.train.len() + d.test.len(), 100);
    }

    #[test]
    fn three_hundred_per_class_shapes() {
        let cfg = SynthConfig {
            s: 300,
            noise_factor: 0.5,
            ..Default::default()
        };
        let p = generate_parts(&cfg).unwrap();
        assert_eq!(p.noisy[0].shape(), (600, 25));
        assert_eq!(p.noisy[1].shape(), (600, 25));
        let d = generate(&cfg).unwrap();
        assert_eq!(d.train.len(), 480);
        assert_eq!(d.test.len(), 120);
        assert_eq!(d.train.labels.iter().filter(|&&l| l == 0).count(), 240);
        assert_eq!(d.test.labels.iter().filter(|&&l| l == 1).count(), 60);
    }

    #[test]
    fn latent_means_follow_classes() {
        let cfg = SynthConfig {
            s: 3000,
            ..Default::default()
        };
        let p = generate_parts(&cfg).unwrap();
        let bound = 3.0 / (3000f64).sqrt();
        let class0 = p.latent.select_rows(&(0..3000).collect::<Vec<_>>());
        let class1 = p.latent.select_rows(&(3000..6000).collect::<Vec<_>>());
        for (block, target) in [(class0, 0.5), (class1, -0.5)] {
            for m in block.column_sums() {
                assert!((m / 3000.0 - target).abs() < bound);
            }
        }
    }

    #[test]
    fn extra_groups_have_requested_sizes() {
        let cfg = SynthConfig {
            s: 300,
            ..Default::default()
        };
        let p = generate_parts(&cfg).unwrap();
        for (block, positive) in p.extras.iter().zip([200usize, 100]) {
            // Row means of N(±1, I) with 5 columns are separated by sign
            // for nearly every row, so count via the row mean sign.
            let pos = (0..600)
                .filter(|&r| block.row(r).iter().sum::<f64>() > 0.0)
                .count();
            assert!((pos as i64 - positive as i64).abs() < 30, "{pos} vs {positive}");
            let first_half = (0..300)
                .filter(|&r| block.row(r).iter().sum::<f64>() > 0.0)
                .count();
            // Independent of labels: the +1 rows are spread over both classes.
            assert!(first_half > positive / 4 && first_half < positive * 3 / 4);
        }
    }

    #[test]
    fn clean_views_respect_ranges() {
        let p = generate_parts(&small(1.0)).unwrap();
        assert!(p.clean[0].data().iter().all(|&v| v > -0.9 && v < 1.1));
        assert!(p.clean[1].data().iter().all(|&v| v > -0.5 && v < 0.5));
        assert!(p.noise_levels[0] <= 1.1);
    }

    #[test]
    fn noise_level_matches_max_abs() {
        let m = DenseMatrix::from_rows(&[vec![0.3, -1.7], vec![1.2, 0.0]]).unwrap();
        assert_eq!(noise_level(&m, 0.0).unwrap(), 0.0);
        assert_eq!(noise_level(&m, 2.0).unwrap(), 3.4);
        assert!(noise_level(&DenseMatrix::zeros(0, 0), 1.0).is_err());
    }

    #[test]
    fn noise_has_requested_variance() {
        let cfg = SynthConfig {
            s: 600,
            noise_factor: 1.0,
            ..Default::default()
        };
        let p = generate_parts(&cfg).unwrap();
        for v in 0..2 {
            let diff = p.noisy[v].sub(&p.clean[v]).unwrap();
            let n = diff.data().len() as f64;
            let var = diff.data().iter().map(|d| d * d).sum::<f64>() / n;
            assert!((var - p.noise_levels[v]).abs() < 0.05 * p.noise_levels[v]);
        }
    }

    #[test]
    fn identical_configs_give_identical_data() {
        assert_eq!(generate(&small(0.6)).unwrap(), generate(&small(0.6)).unwrap());
        let other = SynthConfig {
            seed: 8,
            ..small(0.6)
        };
        assert_ne!(generate(&small(0.6)).unwrap(), generate(&other).unwrap());
    }

    #[test]
    fn rejects_bad_configs() {
        for cfg in [
            SynthConfig { s: 1, ..small(0.0) },
            SynthConfig { s: 0, ..small(0.0) },
            SynthConfig { extra_dim: 0, ..small(0.0) },
            SynthConfig { train_fraction: 1.0, ..small(0.0) },
            SynthConfig { noise_factor: -0.1, ..small(0.0) },
        ] {
            assert!(matches!(generate(&cfg), Err(MeibError::Parameter(_))));
        }
    }
}
