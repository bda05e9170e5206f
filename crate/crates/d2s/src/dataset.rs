//! A dataset directory: dense vectors for both modalities, tokenized
//! captions, the vocabulary, and optional splits and static embeddings.

use std::collections::{BTreeSet, HashSet};
use std::path::{Path, PathBuf};

use d2s_core::training::TrainingData;
use d2s_core::DenseMatrix;

use crate::error::{Error, Result};
use crate::formats::{
    read_captions, read_dense, read_embeddings, read_splits, read_vocab, write_captions,
    write_dense, write_embeddings, write_qrels, write_splits, write_vocab, CaptionRecord,
    DenseStore, QrelsFile, Split, SplitManifest,
};
use crate::synth::SynthData;

/// File names inside a dataset directory.
pub struct Layout {
    pub dir: PathBuf,
}

impl Layout {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn images(&self) -> PathBuf {
        self.dir.join("images.d2sd")
    }

    pub fn captions_dense(&self) -> PathBuf {
        self.dir.join("captions.d2sd")
    }

    pub fn captions(&self) -> PathBuf {
        self.dir.join("captions.jsonl")
    }

    pub fn vocab(&self) -> PathBuf {
        self.dir.join("vocab.txt")
    }

    pub fn splits(&self) -> PathBuf {
        self.dir.join("splits.json")
    }

    pub fn embeddings(&self) -> PathBuf {
        self.dir.join("embeddings.d2se")
    }

    pub fn qrels(&self, split: Split) -> PathBuf {
        self.dir.join(format!("qrels-{split}.tsv"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub vocab_size: usize,
    pub images: DenseStore,
    /// Row `r` holds the dense vector of `records[r]`.
    pub captions: DenseStore,
    pub records: Vec<CaptionRecord>,
    /// Image row of each caption row.
    pub caption_image: Vec<usize>,
    pub image_split: Vec<Split>,
}

impl Dataset {
    /// Aligns captions with their dense rows and checks pairing. Images
    /// missing from `splits` (or all images, without a manifest) are
    /// training images.
    pub fn assemble(
        vocab_size: usize,
        images: DenseStore,
        captions: DenseStore,
        records: Vec<CaptionRecord>,
        splits: Option<&SplitManifest>,
    ) -> Result<Self> {
        if images.dim() != captions.dim() {
            return Err(Error::Data(format!(
                "image vectors have dimension {} but caption vectors {}",
                images.dim(),
                captions.dim()
            )));
        }
        if records.len() != captions.len() {
            return Err(Error::Data(format!(
                "{} tokenized captions but {} caption vectors",
                records.len(),
                captions.len()
            )));
        }
        let cap_index = captions.id_index();
        let img_index = images.id_index();
        let mut aligned: Vec<Option<CaptionRecord>> = vec![None; records.len()];
        for rec in records {
            if let Some(&t) = rec.term_ids.iter().find(|&&t| t as usize >= vocab_size) {
                return Err(Error::Data(format!("caption {:?} has term id {t} >= {vocab_size}", rec.id)));
            }
            let row = *cap_index
                .get(rec.id.as_str())
                .ok_or_else(|| Error::Data(format!("caption {:?} has no dense vector", rec.id)))?;
            aligned[row] = Some(rec);
        }
        let records: Vec<CaptionRecord> = aligned
            .into_iter()
            .enumerate()
            .map(|(r, rec)| {
                rec.ok_or_else(|| Error::Data(format!("caption vector {:?} has no tokens", captions.ids()[r])))
            })
            .collect::<Result<_>>()?;
        let caption_image: Vec<usize> = records
            .iter()
            .map(|r| {
                img_index
                    .get(r.image_id.as_str())
                    .copied()
                    .ok_or_else(|| Error::Data(format!("caption {:?} refers to unknown image {:?}", r.id, r.image_id)))
            })
            .collect::<Result<_>>()?;
        let mut has_caption = vec![false; images.len()];
        caption_image.iter().for_each(|&i| has_caption[i] = true);
        if let Some(i) = has_caption.iter().position(|&h| !h) {
            return Err(Error::Data(format!("image {:?} has no caption", images.ids()[i])));
        }
        let image_split = images
            .ids()
            .iter()
            .map(|id| splits.and_then(|m| m.get(id).copied()).unwrap_or(Split::Train))
            .collect();
        Ok(Self {
            vocab_size,
            images,
            captions,
            records,
            caption_image,
            image_split,
        })
    }

    pub fn from_synth(s: &SynthData) -> Result<Self> {
        Self::assemble(
            s.vocab.len(),
            s.images.clone(),
            s.captions.clone(),
            s.records.clone(),
            Some(&s.splits),
        )
    }

    pub fn load(layout: &Layout) -> Result<Self> {
        let vocab = read_vocab(&layout.vocab())?;
        let images = read_dense(&layout.images())?;
        let captions = read_dense(&layout.captions_dense())?;
        let image_ids: HashSet<&str> = images.ids().iter().map(String::as_str).collect();
        let records = read_captions(&layout.captions(), vocab.len(), Some(&image_ids))?;
        let splits_path = layout.splits();
        let splits = if splits_path.exists() {
            Some(read_splits(&splits_path)?)
        } else {
            None
        };
        Self::assemble(vocab.len(), images, captions, records, splits.as_ref())
    }

    pub fn dim(&self) -> usize {
        self.images.dim()
    }

    /// Image rows in `split`, ascending.
    pub fn image_rows(&self, split: Split) -> Vec<usize> {
        (0..self.images.len()).filter(|&i| self.image_split[i] == split).collect()
    }

    /// Caption rows whose image is in `split`, ascending.
    pub fn caption_rows(&self, split: Split) -> Vec<usize> {
        (0..self.records.len())
            .filter(|&r| self.image_split[self.caption_image[r]] == split)
            .collect()
    }

    /// Sorted, deduplicated caption terms for the given caption rows.
    pub fn term_sets(&self, rows: &[usize]) -> Vec<Vec<u32>> {
        rows.iter().map(|&r| self.records[r].term_set()).collect()
    }

    pub fn training_data(&self, split: Split) -> Result<TrainingData> {
        let images = self.image_rows(split);
        let captions = self.caption_rows(split);
        if captions.len() < 2 {
            return Err(Error::Data(format!("split {split} has {} captions; training needs 2", captions.len())));
        }
        let mut local = vec![usize::MAX; self.images.len()];
        images.iter().enumerate().for_each(|(l, &g)| local[g] = l);
        let caption_image = captions.iter().map(|&r| local[self.caption_image[r]]).collect();
        Ok(TrainingData::new(
            self.captions.select_matrix(&captions),
            self.images.select_matrix(&images),
            self.term_sets(&captions),
            caption_image,
        )?)
    }

    /// Each caption in `split` is a query whose one relevant document is
    /// its image.
    pub fn qrels(&self, split: Split) -> QrelsFile {
        self.caption_rows(split)
            .into_iter()
            .map(|r| {
                let rec = &self.records[r];
                (rec.id.clone(), BTreeSet::from([rec.image_id.clone()]))
            })
            .collect()
    }
}

/// Every file [`write_synth`] creates under `dir`.
pub fn synth_targets(s: &SynthData, dir: &Path) -> Result<Vec<PathBuf>> {
    let layout = Layout::new(dir);
    let ds = Dataset::from_synth(s)?;
    let mut targets = vec![
        layout.vocab(),
        layout.images(),
        layout.captions_dense(),
        layout.captions(),
        layout.splits(),
        layout.embeddings(),
    ];
    for sp in [Split::Valid, Split::Test] {
        if !ds.caption_rows(sp).is_empty() {
            targets.push(layout.qrels(sp));
        }
    }
    Ok(targets)
}

/// Writes a synthetic corpus in the standard layout, plus qrels for the
/// validation and test splits.
pub fn write_synth(s: &SynthData, dir: &Path, force: bool) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let layout = Layout::new(dir);
    let ds = Dataset::from_synth(s)?;
    // Check everything first so a refusal leaves no partial dataset.
    for p in synth_targets(s, dir)? {
        crate::io::check_writable(&p, force)?;
    }
    write_vocab(&s.vocab, &layout.vocab(), force)?;
    write_dense(&s.images, &layout.images(), force)?;
    write_dense(&s.captions, &layout.captions_dense(), force)?;
    write_captions(&s.records, &layout.captions(), force)?;
    write_splits(&s.splits, &layout.splits(), force)?;
    write_embeddings(&s.embeddings, &layout.embeddings(), force)?;
    for sp in [Split::Valid, Split::Test] {
        let q = ds.qrels(sp);
        if !q.is_empty() {
            write_qrels(&q, &layout.qrels(sp), force)?;
        }
    }
    Ok(())
}

/// The static embedding table of a dataset directory, if present.
pub fn load_embeddings(layout: &Layout) -> Result<Option<DenseMatrix>> {
    let p = layout.embeddings();
    if p.exists() {
        Ok(Some(read_embeddings(&p)?))
    } else {
        Ok(None)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, SynthConfig};

    fn small() -> SynthData {
        generate(&SynthConfig {
            images: 30,
            vocab_size: 120,
            dim: 8,
            topics: 6,
            valid_images: 5,
            test_images: 5,
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn directory_round_trip() {
        let s = small();
        let dir = tempfile::tempdir().unwrap();
        write_synth(&s, dir.path(), false).unwrap();
        let loaded = Dataset::load(&Layout::new(dir.path())).unwrap();
        assert_eq!(loaded, Dataset::from_synth(&s).unwrap());
        assert!(matches!(write_synth(&s, dir.path(), false), Err(Error::Exists(_))));
        write_synth(&s, dir.path(), true).unwrap();
    }

    #[test]
    fn splits_partition_rows() {
        let ds = Dataset::from_synth(&small()).unwrap();
        let total: usize = [Split::Train, Split::Valid, Split::Test]
            .iter()
            .map(|&sp| ds.caption_rows(sp).len())
            .sum();
        assert_eq!(total, ds.records.len());
        let td = ds.training_data(Split::Train).unwrap();
        assert_eq!(td.images.rows(), 20);
        assert_eq!(td.len(), 60);
        assert_eq!(ds.qrels(Split::Test).len(), 15);
    }

    #[test]
    fn pairing_errors() {
        let s = small();
        let mut recs = s.records.clone();
        recs[0].image_id = "nope".into();
        assert!(Dataset::assemble(120, s.images.clone(), s.captions.clone(), recs, None).is_err());
        let mut recs = s.records.clone();
        recs[0].term_ids.push(120);
        assert!(Dataset::assemble(120, s.images.clone(), s.captions.clone(), recs, None).is_err());
    }
}
