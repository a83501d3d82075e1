use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use semunit::corpus::{
    read_corpus_str, write_corpus_string, Corpus, MweTag, SemanticUnit, Sentence, Token,
};
use semunit::embeddings::EmbeddingTable;
use semunit::evaluator::score;
use semunit::features::{FeatureConfig, PreparedSentence};
use semunit::network::{read_model, write_model, ModelFile, ModelParams, NetworkConfig, PosTagSet};
use semunit::predictor::{predict_corpus, predict_sentence, DecodeConfig};
use semunit::synthetic::{planted_corpus, planted_network_config, random_sentence, PlantedConfig};
use semunit::trainer::{train, TrainConfig};

fn sentence(words: &[&str]) -> Sentence {
    Sentence {
        sent_id: "s".into(),
        tokens: words
            .iter()
            .enumerate()
            .map(|(k, w)| Token::new(k + 1, w, w, "NOUN", "s"))
            .collect(),
        parse: None,
    }
}

/// A model whose MWE score is about +0.9 exactly when a marker word
/// follows a marker word, and about -0.9 otherwise.
fn marker_model() -> ModelParams<f64> {
    let config = NetworkConfig {
        unit_dim: 2,
        embedding_dim: 1,
        hash_dim: 1,
        mwe_hidden: 1,
        sense_hidden: 1,
        n_senses: 2,
        pos_tags: PosTagSet::new(["NOUN"]),
        distance_into_composer: false,
        mean_vector_feature: false,
        ..NetworkConfig::default()
    };
    let mut m = ModelParams::zeros(&config);
    let k = 10.0;
    let b = &mut m.pos[0];
    // v[0] ~ +1 for a marker, -1 otherwise; v[1] ~ v_prev[0]
    b.word.set(0, 0, k);
    b.bias[0] = -k / 2.0;
    b.recur.set(1, 0, k);
    m.seed = vec![-1.0, -1.0];
    // hidden ~ +1 only when both are +1
    m.mwe.hidden.set(0, 0, 5.0);
    m.mwe.hidden.set(0, 1, 5.0);
    m.mwe.hidden_bias[0] = -5.0;
    m.mwe.output.set(0, 0, 0.9f64.atanh());
    m.sense.output_bias = vec![0.0, 0.5];
    m
}

fn marker_table() -> EmbeddingTable {
    EmbeddingTable::from_entries(1, [("mk", vec![1.0f32]), ("w", vec![0.0])])
}

fn features() -> FeatureConfig {
    FeatureConfig {
        hash_dim: 1,
        ..FeatureConfig::default()
    }
}

#[test]
fn constructed_model_finds_the_marker_pair() {
    let params = marker_model();
    let s = sentence(&["w", "mk", "mk", "w", "w"]);
    let prepared = PreparedSentence::new(&s, &marker_table(), &features(), &params.config.pos_tags);
    let inventory = vec!["unknown".to_string(), "n.act".to_string()];
    for theta_start in [-0.5, -0.15, 0.0, 0.5] {
        let cfg = DecodeConfig {
            theta_start,
            ..Default::default()
        };
        let units = predict_sentence(&params, &prepared, &inventory, &cfg).unwrap();
        let positions: Vec<Vec<usize>> = units.iter().map(|u| u.positions.clone()).collect();
        assert_eq!(
            positions,
            vec![vec![1], vec![2, 3], vec![4], vec![5]],
            "theta_start {theta_start}"
        );
        assert!(units.iter().all(|u| u.sense == "n.act"));
    }
    // above the pair's score nothing joins
    let cfg = DecodeConfig {
        theta_start: 0.95,
        ..Default::default()
    };
    let units = predict_sentence(&params, &prepared, &inventory, &cfg).unwrap();
    assert!(units.iter().all(|u| !u.is_multiword()));
}

#[test]
fn constructed_model_bridges_a_gap() {
    let params = marker_model();
    let s = sentence(&["mk", "w", "w", "mk"]);
    let prepared = PreparedSentence::new(&s, &marker_table(), &features(), &params.config.pos_tags);
    let inventory = vec!["unknown".to_string(), "n.act".to_string()];
    let units = predict_sentence(&params, &prepared, &inventory, &DecodeConfig::default()).unwrap();
    assert_eq!(units[0].positions, vec![1, 4]);
    let mut out = s.clone();
    out.set_units(&units).unwrap();
    let tags: Vec<MweTag> = out.tokens.iter().map(|t| t.mwe_tag).collect();
    assert_eq!(
        tags,
        [
            MweTag::Begin,
            MweTag::GapOutside,
            MweTag::GapOutside,
            MweTag::Inside
        ]
    );
    // a window of two positions cannot reach the second marker
    let cfg = DecodeConfig {
        lookahead: 2,
        ..Default::default()
    };
    let units = predict_sentence(&params, &prepared, &inventory, &cfg).unwrap();
    assert!(units.iter().all(|u| !u.is_multiword()));
}

fn trained() -> (ModelFile<f32>, semunit::synthetic::Planted) {
    let planted = planted_corpus(&PlantedConfig {
        train_sentences: 20,
        held_out_sentences: 10,
        ..PlantedConfig::default()
    });
    let cfg = TrainConfig {
        epochs: 5,
        ..TrainConfig::default()
    };
    let outcome = train::<f32>(
        &planted.train,
        &planted.table,
        &planted_network_config(),
        &FeatureConfig::default(),
        &cfg,
        |_| {},
    )
    .unwrap();
    assert_eq!(outcome.history.len(), 5);
    (outcome.model, planted)
}

#[test]
fn prediction_ignores_gold_columns_and_is_deterministic() {
    let (model, planted) = trained();
    let decode = DecodeConfig::default();
    let pred = predict_corpus(&model, &planted.held_out, &planted.table, &decode).unwrap();
    let mut scrambled = planted.held_out.clone();
    for s in &mut scrambled.sentences {
        let n = s.len();
        s.set_units(&[SemanticUnit::new((1..=n).collect(), "v.body")])
            .unwrap();
    }
    let pred2 = predict_corpus(&model, &scrambled, &planted.table, &decode).unwrap();
    assert_eq!(pred, pred2);
    assert_eq!(
        predict_corpus(&model, &planted.held_out, &planted.table, &decode).unwrap(),
        pred
    );

    let text = write_corpus_string(&pred).unwrap();
    let back = read_corpus_str(&text).unwrap();
    // parses are not part of the corpus format
    let tokens = |c: &Corpus| {
        c.sentences
            .iter()
            .map(|s| s.tokens.clone())
            .collect::<Vec<_>>()
    };
    assert_eq!(tokens(&back), tokens(&pred));
    assert!(pred
        .sentences
        .iter()
        .flat_map(|s| &s.tokens)
        .all(|t| t.strength.is_empty()));
}

#[test]
fn empty_corpus_predicts_empty() {
    let (model, planted) = trained();
    let pred = predict_corpus(
        &model,
        &Corpus::default(),
        &planted.table,
        &DecodeConfig::default(),
    )
    .unwrap();
    assert!(pred.sentences.is_empty());
}

#[test]
fn saved_model_predicts_identically() {
    let (model, planted) = trained();
    let mut buf = Vec::new();
    write_model(&model, &mut buf).unwrap();
    let loaded: ModelFile<f32> = read_model(&buf[..]).unwrap();
    let decode = DecodeConfig::default();
    assert_eq!(
        predict_corpus(&loaded, &planted.held_out, &planted.table, &decode).unwrap(),
        predict_corpus(&model, &planted.held_out, &planted.table, &decode).unwrap()
    );
}

#[test]
fn training_is_reproducible() {
    let (a, _) = trained();
    let (b, _) = trained();
    assert_eq!(a, b);
}

fn arb_corpus() -> impl Strategy<Value = Corpus> {
    (any::<u64>(), 1usize..6).prop_map(|(seed, n)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Corpus::new(
            (0..n)
                .map(|k| random_sentence(&mut rng, &format!("g{}.{k}", k % 2), 15))
                .collect(),
        )
    })
}

proptest! {
    #[test]
    fn corpus_round_trip(c in arb_corpus()) {
        let text = write_corpus_string(&c).unwrap();
        let back = read_corpus_str(&text).unwrap();
        prop_assert_eq!(&back, &c);
    }

    #[test]
    fn score_properties(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gold = Corpus::new((0..4).map(|k| random_sentence(&mut rng, &format!("g{k}.x"), 12)).collect());
        let mut pred = gold.clone();
        for (s, g) in pred.sentences.iter_mut().zip(&gold.sentences) {
            let units = semunit::synthetic::random_units(&mut rng, g.len(), &["n.act", "v.body"]);
            s.set_units(&units).unwrap();
        }
        let same = score(&gold, &gold).unwrap();
        prop_assert_eq!((same.mwe.f1, same.supersense.f1, same.combined.f1), (1.0, 1.0, 1.0));

        let r = score(&gold, &pred).unwrap();
        let swapped = score(&pred, &gold).unwrap();
        prop_assert_eq!(r.mwe.precision, swapped.mwe.recall);
        prop_assert_eq!(r.mwe.recall, swapped.mwe.precision);
        let sum = r.mwe_counts + r.supersense_counts;
        prop_assert_eq!(r.combined, sum.prf());
        for m in [r.mwe, r.supersense, r.combined] {
            prop_assert!((0.0..=1.0).contains(&m.precision) && (0.0..=1.0).contains(&m.recall));
            prop_assert!((0.0..=1.0).contains(&m.f1));
        }
    }
}
