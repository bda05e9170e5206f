use std::collections::{BTreeMap, BTreeSet};

use d2s_core::index::{brute_force_search, InvertedIndex};
use d2s_core::metrics::{self, Qrels, Run};
use d2s_core::training::{
    compute_df, expand, sample_mask, ExpansionMask, ExpansionMode, ExpansionSchedule,
    OriginalTermGating,
};
use d2s_core::{DenseMatrix, SparseVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn sparse(dim: u32, max_nnz: usize) -> impl Strategy<Value = SparseVector> {
    prop::collection::btree_map(0..dim, 1u8..16, 0..=max_nnz).prop_map(move |m| {
        let entries = m.into_iter().map(|(t, w)| (t, f32::from(w) * 0.125)).collect();
        SparseVector::new(dim, entries).unwrap()
    })
}

fn docs_and_query(dim: u32) -> impl Strategy<Value = (Vec<SparseVector>, SparseVector)> {
    (prop::collection::vec(sparse(dim, 10), 0..120), sparse(dim, 8))
}

proptest! {
    #[test]
    fn schedule_is_monotone_and_capped(
        df in prop::collection::vec(0.0f64..=1.0, 1..20),
        epochs in 1usize..60,
        extra in 0usize..5,
    ) {
        let mut s = ExpansionSchedule::new(df, epochs).unwrap();
        let mut prev = s.clone();
        for _ in 0..epochs + extra {
            s.step();
            prop_assert!(s.p_caption >= prev.p_caption && s.p_caption <= 1.0);
            for (a, b) in s.p_terms.iter().zip(&prev.p_terms) {
                prop_assert!(a >= b && *a <= 1.0);
            }
            prev = s.clone();
        }
        prop_assert!((s.p_caption - 1.0).abs() <= 1e-9);
        prop_assert!(s.p_terms.iter().all(|p| (p - 1.0).abs() <= 1e-9));
    }

    #[test]
    fn closed_caption_draw_keeps_only_caption_terms(
        rows in prop::collection::vec(prop::collection::btree_set(0u32..12, 0..5), 1..6),
        word_draws in prop::collection::vec(any::<bool>(), 12),
        seed in any::<u64>(),
    ) {
        let terms: Vec<Vec<u32>> = rows.iter().map(|r| r.iter().copied().collect()).collect();
        let scores = DenseMatrix::from_fn(terms.len(), 12, |r, c| 1.0 + (r * 12 + c) as f64 + (seed % 7) as f64);
        let mask = ExpansionMask { caption: false, terms: word_draws };
        for gating in [OriginalTermGating::KeepAlways, OriginalTermGating::WordGated] {
            let out = expand(&terms, &scores, &mask, gating).unwrap();
            for (r, row_terms) in rows.iter().enumerate() {
                for c in 0..12u32 {
                    let v = out.get(r, c as usize);
                    if !row_terms.contains(&c) {
                        prop_assert_eq!(v, 0.0);
                    } else if gating == OriginalTermGating::KeepAlways {
                        prop_assert_eq!(v, scores.get(r, c as usize));
                    }
                }
            }
        }
    }

    #[test]
    fn always_off_masks_never_open_captions(seed in any::<u64>(), epochs in 1usize..10) {
        let df = compute_df(&[vec![0u32, 1], vec![1, 2]], 4).unwrap();
        let mut s = ExpansionSchedule::for_mode(ExpansionMode::AlwaysOff, df, epochs).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..epochs {
            for _ in 0..5 {
                prop_assert!(!sample_mask(&s, &mut rng).caption);
            }
            s.step();
        }
    }

    #[test]
    fn index_paths_match_brute_force((docs, q) in docs_and_query(60), k in 1usize..15) {
        let idx = InvertedIndex::from_docs(60, &docs).unwrap();
        let want = brute_force_search(docs.iter().enumerate().map(|(i, d)| (i as u32, d)), &q, k);
        prop_assert_eq!(&idx.search(&q, k), &want);
        prop_assert_eq!(&idx.search_maxscore(&q, k), &want);
    }

    #[test]
    fn two_stage_with_full_pool_is_exhaustive((docs, q) in docs_and_query(40), k in 1usize..10) {
        let idx = InvertedIndex::from_docs(40, &docs).unwrap();
        let all: Vec<u32> = q.terms().collect();
        let pool = docs.len().max(k);
        let r = idx.search_two_stage(&q, &all, k, pool).unwrap();
        prop_assert_eq!(r.list, idx.search(&q, k));
    }

    #[test]
    fn flops_matches_pair_count(
        c in prop::collection::vec(sparse(30, 8), 1..25),
        i in prop::collection::vec(sparse(30, 8), 1..25),
    ) {
        let mut shared = 0u64;
        for a in &c {
            for b in &i {
                let sa: BTreeSet<u32> = a.terms().collect();
                shared += b.terms().filter(|t| sa.contains(t)).count() as u64;
            }
        }
        let want = shared as f64 / (c.len() * i.len()) as f64;
        prop_assert_eq!(metrics::flops(&c, &i).unwrap(), want);
    }

    #[test]
    fn exact_at_k_in_unit_range(s in sparse(30, 12), cap in prop::collection::btree_set(0u32..30, 0..8), k in 1usize..25) {
        let v = metrics::exact_at_k(&cap, &s, k).unwrap();
        prop_assert!((0.0..=1.0).contains(&v));
        let top = s.top_k_terms(k);
        let direct = top.iter().filter(|t| cap.contains(t)).count() as f64 / k as f64;
        prop_assert_eq!(v, direct);
    }

    #[test]
    fn recall_ignores_query_ids(
        ranks in prop::collection::vec(prop::collection::vec(0u32..20, 0..12), 1..15),
        rel in prop::collection::vec(0u32..20, 15),
        shift in 1u32..1000,
    ) {
        let build = |offset: u32| {
            let mut run = Run::new();
            let mut qrels = Qrels::new();
            for (q, list) in ranks.iter().enumerate() {
                let id = (q as u32 * 7 + offset) % 1009;
                run.insert(id, list.clone());
                qrels.insert(id, BTreeSet::from([rel[q]]));
            }
            (run, qrels)
        };
        let (r0, q0) = build(0);
        let (r1, q1) = build(shift);
        for k in [1, 5] {
            let a = metrics::recall_at_k(&r0, &q0, k).unwrap();
            let b = metrics::recall_at_k(&r1, &q1, k).unwrap();
            prop_assert!((a - b).abs() <= 1e-12);
            prop_assert!((0.0..=1.0).contains(&a));
        }
        let a = metrics::mrr_at_10(&r0, &q0).unwrap();
        let b = metrics::mrr_at_10(&r1, &q1).unwrap();
        prop_assert!((a - b).abs() <= 1e-12);
    }

    #[test]
    fn pearson_bounded(xy in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 2..40)) {
        let (x, y): (Vec<f64>, Vec<f64>) = xy.into_iter().unzip();
        if let Ok(r) = metrics::pearson(&x, &y) {
            prop_assert!((-1.0..=1.0).contains(&r));
        }
    }
}

#[test]
fn search_ties_are_broken_by_doc_id_everywhere() {
    let d = SparseVector::new(3, vec![(1, 0.5)]).unwrap();
    let docs: BTreeMap<u32, &SparseVector> = [(9, &d), (4, &d), (6, &d)].into_iter().collect();
    let idx = InvertedIndex::build(3, docs.iter().map(|(&i, &v)| (i, v))).unwrap();
    let q = SparseVector::new(3, vec![(1, 1.0)]).unwrap();
    let want = vec![4, 6];
    assert_eq!(idx.search(&q, 2).docs().collect::<Vec<_>>(), want);
    assert_eq!(idx.search_maxscore(&q, 2).docs().collect::<Vec<_>>(), want);
    let brute = brute_force_search(docs.iter().map(|(&i, &v)| (i, v)), &q, 2);
    assert_eq!(brute.docs().collect::<Vec<_>>(), want);
}
