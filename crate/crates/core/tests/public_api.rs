use formula_scout::features::Featurizer;
use formula_scout::formula::{extract_template, instantiate, normalize, parse_formula};
use formula_scout::grid::{export_workbook, load_workbook};
use formula_scout::index::{Indexes, VectorIndex};
use formula_scout::recommend::{index_corpus, predict, Library, PredictContext, RawFeatureEncoder, RecommenderConfig};
use formula_scout::synth::{random_formula, synthetic_corpus, SynthConfig};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn stub() -> RawFeatureEncoder {
    RawFeatureEncoder {
        featurizer: Featurizer::default_hashed(),
        n_r: 20,
        n_c: 6,
    }
}

fn small_corpus() -> Vec<formula_scout::grid::Workbook> {
    synthetic_corpus(&SynthConfig {
        families: 3,
        variants: 3,
        ..SynthConfig::default()
    })
}

fn unit4() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, 4)
        .prop_filter("nonzero", |v| v.iter().map(|x| x * x).sum::<f64>() > 1e-3)
        .prop_map(|v| {
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.into_iter().map(|x| x / n).collect()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn template_round_trip_on_generated_formulas(seed in any::<u64>()) {
        let f = random_formula(&mut ChaCha8Rng::seed_from_u64(seed));
        let (t, p) = extract_template(&parse_formula(&f).unwrap());
        prop_assert_eq!(instantiate(&t, &p).unwrap(), normalize(&f).unwrap());
    }

    #[test]
    fn topk_is_a_sorted_prefix_of_all_distances(
        vs in prop::collection::vec(unit4(), 1..60),
        q in unit4(),
        k in 1usize..10,
    ) {
        let mut idx = VectorIndex::new(4);
        for (i, v) in vs.iter().enumerate() {
            idx.add(i, v).unwrap();
        }
        let got = idx.topk(&q, k).unwrap();
        prop_assert_eq!(got.len(), k.min(vs.len()));
        prop_assert!(got.windows(2).all(|w| w[0].1 <= w[1].1));
        let worst = got.last().unwrap().1;
        let mut closer = 0;
        for i in 0..vs.len() {
            if idx.distance(&q, i).unwrap() < worst {
                closer += 1;
            }
        }
        prop_assert!(closer < got.len());
    }
}

#[test]
fn workbook_dump_round_trips() {
    for wb in small_corpus() {
        let back = load_workbook(&export_workbook(&wb)).unwrap();
        assert_eq!(back, wb);
        assert_eq!(back.content_hash(), wb.content_hash());
    }
}

#[test]
fn saved_indexes_answer_like_the_originals() {
    let corpus = small_corpus();
    let enc = stub();
    let (idx, stats) = index_corpus(&corpus, &enc).unwrap();
    assert_eq!(stats.sheets, idx.coarse.len());
    let dir = tempfile::tempdir().unwrap();
    idx.save_dir(dir.path()).unwrap();
    let back = Indexes::load_dir(dir.path()).unwrap();
    assert_eq!(back.coarse.keys(), idx.coarse.keys());
    assert_eq!(back.fine.keys(), idx.fine.keys());
    let q: Vec<f64> = idx.fine.vector(0).iter().map(|&x| x as f64).collect();
    let a: Vec<_> = idx.fine.topk(&q, 5).unwrap();
    let b: Vec<_> = back.fine.topk(&q, 5).unwrap();
    assert_eq!(a, b);
}

#[test]
fn variant_of_an_indexed_family_recovers_its_formula() {
    let corpus = small_corpus();
    let enc = stub();
    let (reference, held) = corpus.split_at(corpus.len() - 1);
    let (idx, _) = index_corpus(reference, &enc).unwrap();
    let lib = Library::new(reference.iter().cloned());
    let cfg = RecommenderConfig {
        theta: f64::INFINITY,
        ..RecommenderConfig::default()
    };
    let ctx = PredictContext {
        indexes: &idx,
        library: &lib,
        encoder: &enc,
        config: &cfg,
    };
    let target = &held[0];
    let sheet = target.sheets.iter().find(|s| s.formula_cells().next().is_some()).unwrap();
    let (mut hits, mut total) = (0, 0);
    for (cell, formula) in sheet.formula_cells() {
        let preds = predict(&ctx, sheet, Some(&target.id), *cell).unwrap();
        total += 1;
        hits += preds.first().is_some_and(|p| p.formula == normalize(formula).unwrap()) as usize;
        assert!(preds.iter().all(|p| p.provenance.workbook_id != target.id));
    }
    assert!(hits * 2 > total, "{hits}/{total}");
}
