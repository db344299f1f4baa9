//! Per-(engine, category) page size models.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use crate::design::SearchCategory;
use crate::seed;

/// Smallest page a generator will ask for.
pub const MIN_PAGE_BYTES: usize = 1024;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "model")]
pub enum SizeModel {
    /// Every page has exactly `bytes` bytes.
    Deterministic { bytes: usize },
    /// Log-normal page sizes with the given arithmetic mean and log-space sigma.
    Noisy { mean_bytes: usize, sigma: f64 },
}

impl SizeModel {
    pub fn mean_bytes(&self) -> usize {
        match *self {
            SizeModel::Deterministic { bytes } => bytes,
            SizeModel::Noisy { mean_bytes, .. } => mean_bytes,
        }
    }
}

/// Built-in page size for an engine and category.
///
/// Relative magnitudes are loosely based on observed result page weights:
/// image and video sections are heavier than text and news.
pub fn default_model(engine_id: &str, category: SearchCategory) -> SizeModel {
    use SearchCategory::*;
    let kb = match (engine_id, category) {
        ("google", Text) => 48,
        ("google", News) => 40,
        ("google", Images) => 96,
        ("google", Videos) => 56,
        ("bing", Text) => 36,
        ("bing", News) => 28,
        ("bing", Images) => 64,
        ("bing", Videos) => 44,
        ("duckduckgo", _) => 24,
        ("yahoo", Images) | ("yahoo", Videos) => 52,
        ("yahoo", _) => 32,
        ("yandex", Images) | ("yandex", Videos) => 72,
        ("yandex", _) => 44,
        ("baidu", Images) | ("baidu", Videos) => 60,
        ("baidu", _) => 30,
        (_, Images) | (_, Videos) => 48,
        _ => 32,
    };
    SizeModel::Deterministic { bytes: kb * 1024 }
}

/// Size overrides keyed by engine id, then category. Missing entries fall back
/// to an engine-wide default, then to [`default_model`].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SizeTable {
    #[serde(default)]
    pub default: Option<SizeModel>,
    #[serde(default)]
    pub engines: BTreeMap<String, EngineSizes>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EngineSizes {
    #[serde(default)]
    pub default: Option<SizeModel>,
    #[serde(default)]
    pub categories: BTreeMap<SearchCategory, SizeModel>,
}

impl SizeTable {
    pub fn uniform(model: SizeModel) -> Self {
        SizeTable {
            default: Some(model),
            engines: BTreeMap::new(),
        }
    }

    pub fn set(&mut self, engine: &str, category: SearchCategory, model: SizeModel) {
        self.engines
            .entry(engine.to_string())
            .or_default()
            .categories
            .insert(category, model);
    }

    pub fn model(&self, engine: &str, category: SearchCategory) -> SizeModel {
        let per_engine = self.engines.get(engine);
        per_engine
            .and_then(|e| e.categories.get(&category).copied())
            .or_else(|| per_engine.and_then(|e| e.default))
            .or(self.default)
            .unwrap_or_else(|| default_model(engine, category))
    }
}

/// Deterministic page-size generator for one engine and category.
#[derive(Clone, Debug)]
pub struct SizeGenerator {
    engine: String,
    category: SearchCategory,
    model: SizeModel,
    seed: u64,
}

impl SizeGenerator {
    pub fn model(&self) -> SizeModel {
        self.model
    }

    /// Byte size of page `page_index` for `query`. Same inputs, same size.
    pub fn size_for(&self, query: &str, page_index: u32) -> usize {
        match self.model {
            SizeModel::Deterministic { bytes } => bytes,
            SizeModel::Noisy { mean_bytes, sigma } => {
                let mut rng = seed::rng(
                    self.seed,
                    &[
                        b"size",
                        self.engine.as_bytes(),
                        self.category.as_str().as_bytes(),
                        query.as_bytes(),
                        &page_index.to_le_bytes(),
                    ],
                );
                sample_lognormal(&mut rng, mean_bytes as f64, sigma)
            }
        }
    }

    /// `n` independent draws, for checking the generator itself.
    pub fn samples(&self, n: usize) -> Vec<usize> {
        (0..n)
            .map(|i| self.size_for(&format!("sample-{i}"), 1))
            .collect()
    }
}

fn sample_lognormal<R: Rng>(rng: &mut R, mean: f64, sigma: f64) -> usize {
    if sigma <= 0.0 {
        return (mean.round() as usize).max(MIN_PAGE_BYTES);
    }
    // Arithmetic mean m of a log-normal is exp(mu + sigma^2 / 2).
    let mu = mean.ln() - sigma * sigma / 2.0;
    let dist = LogNormal::new(mu, sigma).expect("sigma is finite and positive");
    (dist.sample(rng).round() as usize).max(MIN_PAGE_BYTES)
}

pub fn size_model(engine: &str, category: SearchCategory, model: SizeModel, seed: u64) -> SizeGenerator {
    SizeGenerator {
        engine: engine.to_string(),
        category,
        model,
        seed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_is_constant() {
        let g = size_model("google", SearchCategory::Text, SizeModel::Deterministic { bytes: 200 * 1024 }, 7);
        assert!(g.samples(50).iter().all(|&s| s == 204_800));
    }

    #[test]
    fn noisy_mean_within_three_standard_errors() {
        let mean = 200.0 * 1024.0;
        let g = size_model(
            "google",
            SearchCategory::Text,
            SizeModel::Noisy { mean_bytes: mean as usize, sigma: 0.2 },
            42,
        );
        let xs: Vec<f64> = g.samples(1000).into_iter().map(|s| s as f64).collect();
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        let se = (var / n).sqrt();
        assert!((m - mean).abs() <= 3.0 * se, "mean {m} vs {mean}, se {se}");
    }

    #[test]
    fn different_means_differ() {
        let a = size_model("a", SearchCategory::Text, SizeModel::Noisy { mean_bytes: 50_000, sigma: 0.2 }, 1);
        let b = size_model("b", SearchCategory::Text, SizeModel::Noisy { mean_bytes: 150_000, sigma: 0.2 }, 1);
        let ma: usize = a.samples(200).iter().sum::<usize>() / 200;
        let mb: usize = b.samples(200).iter().sum::<usize>() / 200;
        assert!(mb > 2 * ma, "{ma} {mb}");
    }

    #[test]
    fn same_seed_same_sizes() {
        let m = SizeModel::Noisy { mean_bytes: 10_000, sigma: 0.5 };
        let a = size_model("x", SearchCategory::Images, m, 9);
        let b = size_model("x", SearchCategory::Images, m, 9);
        assert_eq!(a.samples(20), b.samples(20));
        assert_ne!(a.samples(20), size_model("x", SearchCategory::Images, m, 10).samples(20));
    }

    #[test]
    fn table_fallbacks() {
        let mut t = SizeTable::default();
        assert_eq!(t.model("google", SearchCategory::Text), default_model("google", SearchCategory::Text));
        t.default = Some(SizeModel::Deterministic { bytes: 5000 });
        assert_eq!(t.model("google", SearchCategory::Text), SizeModel::Deterministic { bytes: 5000 });
        t.set("google", SearchCategory::Text, SizeModel::Deterministic { bytes: 7000 });
        assert_eq!(t.model("google", SearchCategory::Text), SizeModel::Deterministic { bytes: 7000 });
        assert_eq!(t.model("google", SearchCategory::News), SizeModel::Deterministic { bytes: 5000 });
    }
}
