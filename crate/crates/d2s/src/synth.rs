//! Seeded synthetic corpus with planted cross-modal structure.
//!
//! Every term belongs to a latent topic (or to a small set of background
//! terms shared by all topics) and has a vector near its topic's vector.
//! Each image draws a topic mixture and a handful of salient terms; its
//! dense vector is the normalized sum of those vectors. Captions sample
//! words from the salient terms, the topic mixture, and the background, and
//! their dense vectors blend the image content with the words actually
//! used. Gaussian noise scaled by `noise` perturbs both sides.

use std::collections::BTreeSet;

use d2s_core::DenseMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal, WeightedIndex};

use crate::error::{Error, Result};
use crate::formats::{CaptionRecord, DenseStore, Split, SplitManifest, Vocabulary};

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub images: usize,
    pub captions_per_image: usize,
    pub dim: usize,
    pub vocab_size: usize,
    pub caption_len: usize,
    /// Standard deviation of the isotropic noise added to unit content
    /// vectors, per unit of norm.
    pub noise: f64,
    pub topics: usize,
    pub topics_per_image: usize,
    pub salient_terms: usize,
    pub background_terms: usize,
    /// Probability that a caption word is a background term.
    pub background_rate: f64,
    /// Probability that a non-background caption word is a salient term of
    /// the image rather than a draw from its topic mixture.
    pub salient_rate: f64,
    /// Weight of the caption's own words in its dense vector.
    pub word_weight: f64,
    /// Spread of term vectors around their topic vector.
    pub term_spread: f64,
    /// Norm of every dense vector.
    pub scale: f64,
    pub valid_images: usize,
    pub test_images: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            images: 1000,
            captions_per_image: 3,
            dim: 64,
            vocab_size: 2000,
            caption_len: 8,
            noise: 0.5,
            topics: 50,
            topics_per_image: 3,
            salient_terms: 6,
            background_terms: 20,
            background_rate: 0.2,
            salient_rate: 0.7,
            word_weight: 0.5,
            term_spread: 0.7,
            scale: 1.0,
            valid_images: 100,
            test_images: 100,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("images", self.images),
            ("captions per image", self.captions_per_image),
            ("dim", self.dim),
            ("caption length", self.caption_len),
            ("topics", self.topics),
            ("topics per image", self.topics_per_image),
            ("salient terms", self.salient_terms),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Usage(format!("{name} must be positive")));
        }
        if self.topics_per_image > self.topics {
            return Err(Error::Usage("topics per image exceeds topic count".into()));
        }
        if self.vocab_size < self.background_terms + self.topics {
            return Err(Error::Usage(format!(
                "vocabulary of {} cannot hold {} background terms plus one term per topic",
                self.vocab_size, self.background_terms
            )));
        }
        let rates = [self.background_rate, self.salient_rate];
        if rates.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(Error::Usage("rates must lie in [0, 1]".into()));
        }
        if self.background_terms == 0 && self.background_rate > 0.0 {
            return Err(Error::Usage("background rate needs background terms".into()));
        }
        let reals = [self.noise, self.word_weight, self.term_spread];
        if reals.iter().any(|v| !v.is_finite() || *v < 0.0) || !self.scale.is_finite() || self.scale <= 0.0 {
            return Err(Error::Usage("noise, weights, and spread must be >= 0 and scale > 0".into()));
        }
        if self.valid_images + self.test_images >= self.images {
            return Err(Error::Usage("valid + test images leave no training images".into()));
        }
        Ok(())
    }
}

/// Everything a dataset directory holds.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub vocab: Vocabulary,
    pub images: DenseStore,
    pub captions: DenseStore,
    pub records: Vec<CaptionRecord>,
    /// Static term embeddings, `|V| × dim`.
    pub embeddings: DenseMatrix,
    pub splits: SplitManifest,
}

fn gaussian(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn normalize(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

fn add_scaled(acc: &mut [f64], v: &[f64], s: f64) {
    acc.iter_mut().zip(v).for_each(|(a, b)| *a += s * b);
}

/// `scale · normalize(normalize(content) + noise · g / √dim)`
fn observe(content: &[f64], noise: f64, scale: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut v = content.to_vec();
    normalize(&mut v);
    let g = gaussian(rng, v.len());
    let sigma = noise / (v.len() as f64).sqrt();
    add_scaled(&mut v, &g, sigma);
    normalize(&mut v);
    v.iter_mut().for_each(|x| *x *= scale);
    v
}

/// Zipf weights `1 / (rank + 1)`.
fn zipf(n: usize) -> WeightedIndex<f64> {
    WeightedIndex::new((0..n).map(|r| 1.0 / (r + 1) as f64)).expect("n > 0")
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthData> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (d, v, k, bg) = (cfg.dim, cfg.vocab_size, cfg.topics, cfg.background_terms);

    // Terms [0, bg) are background; term t >= bg belongs to topic (t - bg) % k
    // at rank (t - bg) / k.
    let topic_terms: Vec<Vec<u32>> = (0..k)
        .map(|topic| ((bg + topic)..v).step_by(k).map(|t| t as u32).collect())
        .collect();
    let mut names = Vec::with_capacity(v);
    names.extend((0..bg).map(|r| format!("bg{r}")));
    names.extend((bg..v).map(|t| format!("t{}_{}", (t - bg) % k, (t - bg) / k)));
    let vocab = Vocabulary::new(names)?;

    let topic_vecs: Vec<Vec<f64>> = (0..k)
        .map(|_| {
            let mut a = gaussian(&mut rng, d);
            normalize(&mut a);
            a
        })
        .collect();
    let mut term_vecs = Vec::with_capacity(v);
    for t in 0..v {
        let mut g = gaussian(&mut rng, d);
        normalize(&mut g);
        if t >= bg {
            let mut b = topic_vecs[(t - bg) % k].clone();
            add_scaled(&mut b, &g, cfg.term_spread);
            normalize(&mut b);
            term_vecs.push(b);
        } else {
            term_vecs.push(g);
        }
    }
    let embeddings = DenseMatrix::from_fn(v, d, |t, c| term_vecs[t][c]);

    let topic_zipf: Vec<WeightedIndex<f64>> = topic_terms.iter().map(|l| zipf(l.len())).collect();
    let bg_zipf = (bg > 0).then(|| zipf(bg));

    let mut image_ids = Vec::with_capacity(cfg.images);
    let mut image_rows = Vec::with_capacity(cfg.images * d);
    let mut caption_ids = Vec::new();
    let mut caption_rows = Vec::new();
    let mut records = Vec::new();
    let all_topics: Vec<usize> = (0..k).collect();

    for i in 0..cfg.images {
        let image_id = format!("img{i:05}");
        let topics: Vec<usize> = all_topics
            .choose_multiple(&mut rng, cfg.topics_per_image)
            .copied()
            .collect();
        let weights: Vec<f64> = topics.iter().map(|_| rng.sample::<f64, _>(Exp1) + 1e-3).collect();
        let mixture = WeightedIndex::new(&weights).expect("positive weights");
        let draw_topic_term = |rng: &mut ChaCha8Rng| {
            let topic = topics[mixture.sample(rng)];
            topic_terms[topic][topic_zipf[topic].sample(rng)]
        };

        let mut salient = BTreeSet::new();
        let cap = topics.iter().map(|&t| topic_terms[t].len()).sum::<usize>();
        while salient.len() < cfg.salient_terms.min(cap) {
            salient.insert(draw_topic_term(&mut rng));
        }
        let salient: Vec<u32> = salient.into_iter().collect();

        let total: f64 = weights.iter().sum();
        let mut content = vec![0.0; d];
        for (&t, &w) in topics.iter().zip(&weights) {
            add_scaled(&mut content, &topic_vecs[t], w / total);
        }
        for &s in &salient {
            add_scaled(&mut content, &term_vecs[s as usize], 1.0 / salient.len() as f64);
        }
        normalize(&mut content);
        image_rows.extend(observe(&content, cfg.noise, cfg.scale, &mut rng));

        for j in 0..cfg.captions_per_image {
            let mut words = Vec::with_capacity(cfg.caption_len);
            for _ in 0..cfg.caption_len {
                let w = match &bg_zipf {
                    Some(z) if rng.gen::<f64>() < cfg.background_rate => z.sample(&mut rng) as u32,
                    _ if rng.gen::<f64>() < cfg.salient_rate => *salient.choose(&mut rng).expect("nonempty"),
                    _ => draw_topic_term(&mut rng),
                };
                words.push(w);
            }
            let unique: BTreeSet<u32> = words.iter().copied().collect();
            let mut said = vec![0.0; d];
            for &w in &unique {
                add_scaled(&mut said, &term_vecs[w as usize], 1.0);
            }
            normalize(&mut said);
            let mut mixed = content.clone();
            add_scaled(&mut mixed, &said, cfg.word_weight);
            let id = format!("cap{i:05}_{j}");
            caption_rows.extend(observe(&mixed, cfg.noise, cfg.scale, &mut rng));
            caption_ids.push(id.clone());
            records.push(CaptionRecord {
                id,
                image_id: image_id.clone(),
                term_ids: words,
            });
        }
        image_ids.push(image_id);
    }

    let mut order: Vec<usize> = (0..cfg.images).collect();
    order.shuffle(&mut rng);
    let mut splits = SplitManifest::new();
    for (pos, &i) in order.iter().enumerate() {
        let split = if pos < cfg.test_images {
            Split::Test
        } else if pos < cfg.test_images + cfg.valid_images {
            Split::Valid
        } else {
            Split::Train
        };
        splits.insert(image_ids[i].clone(), split);
    }

    let to_f32 = |rows: Vec<f64>| rows.into_iter().map(|x| x as f32).collect();
    Ok(SynthData {
        vocab,
        images: DenseStore::new(image_ids, d, to_f32(image_rows))?,
        captions: DenseStore::new(caption_ids, d, to_f32(caption_rows))?,
        records,
        embeddings,
        splits,
    })
}

/// `rows × width` matrix with orthonormal rows (Gram–Schmidt on Gaussian
/// draws). Needs `rows <= width`.
pub fn random_orthonormal(rows: usize, width: usize, seed: u64) -> Result<DenseMatrix> {
    if rows > width {
        return Err(Error::Usage(format!("{rows} orthonormal rows need width >= {rows}, got {width}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(rows);
    while basis.len() < rows {
        let mut v = gaussian(&mut rng, width);
        for _ in 0..2 {
            for b in &basis {
                let p: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                add_scaled(&mut v, b, -p);
            }
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-6 {
            v.iter_mut().for_each(|x| *x /= n);
            basis.push(v);
        }
    }
    Ok(DenseMatrix::from_fn(rows, width, |r, c| basis[r][c]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        SynthConfig {
            images: 60,
            vocab_size: 200,
            dim: 16,
            topics: 10,
            valid_images: 10,
            test_images: 10,
            ..Default::default()
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate(&small()).unwrap();
        let b = generate(&small()).unwrap();
        assert_eq!(a, b);
        let c = generate(&SynthConfig { seed: 1, ..small() }).unwrap();
        assert_ne!(a.images, c.images);
    }

    #[test]
    fn structure_is_consistent() {
        let cfg = small();
        let s = generate(&cfg).unwrap();
        assert_eq!(s.images.len(), 60);
        assert_eq!(s.captions.len(), 180);
        assert_eq!(s.records.len(), 180);
        assert_eq!(s.vocab.len(), 200);
        assert!(s.records.iter().all(|r| r.term_ids.len() == cfg.caption_len));
        assert!(s.records.iter().flat_map(|r| &r.term_ids).all(|&t| (t as usize) < 200));
        let count = |sp| s.splits.values().filter(|&&x| x == sp).count();
        assert_eq!((count(Split::Train), count(Split::Valid), count(Split::Test)), (40, 10, 10));
        for i in 0..s.images.len() {
            let n: f32 = s.images.row(i).iter().map(|x| x * x).sum();
            assert!((n - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn noiseless_dense_vectors_retrieve_their_image() {
        let s = generate(&SynthConfig { noise: 0.0, ..Default::default() }).unwrap();
        let images = s.images.to_matrix();
        let index = s.images.id_index();
        let mut hits = 0;
        for (row, rec) in s.records.iter().enumerate() {
            let top = d2s_core::index::dense_search(&images, &s.captions.row(row).iter().map(|&x| x as f64).collect::<Vec<_>>(), 1).unwrap();
            hits += usize::from(top.hits[0].doc as usize == index[rec.image_id.as_str()]);
        }
        let r1 = hits as f64 / s.records.len() as f64;
        assert!(r1 >= 0.95, "R@1 {r1}");
    }

    #[test]
    fn orthonormal_rows() {
        let m = random_orthonormal(5, 8, 3).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let dot: f64 = m.row(i).iter().zip(m.row(j)).map(|(a, b)| a * b).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-12);
            }
        }
        assert!(random_orthonormal(9, 8, 3).is_err());
    }

    #[test]
    fn invalid_configs_rejected() {
        assert!(generate(&SynthConfig { images: 0, ..small() }).is_err());
        assert!(generate(&SynthConfig { noise: -1.0, ..small() }).is_err());
        assert!(generate(&SynthConfig { vocab_size: 15, ..small() }).is_err());
    }
}
