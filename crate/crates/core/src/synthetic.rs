//! Random and planted data for tests, the acceptance suite, and demos.
//!
//! The planted corpus has four senses. Content words carry a sense, and
//! their embeddings sit near that sense's prototype. Each sentence may
//! contain one marker pair (`mkA<k> ... mkB<k>`, sometimes with a gap)
//! that forms a two-word unit labelled with sense `k`.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Corpus, SemanticUnit, Sentence, Token, UNKNOWN_SENSE};
use crate::embeddings::EmbeddingTable;
use crate::features::DependencyParse;
use crate::network::NetworkConfig;

/// Head vector of a uniformly shaped random tree over `n` tokens.
pub fn random_tree<R: Rng>(rng: &mut R, n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (1..=n).collect();
    order.shuffle(rng);
    let mut heads = vec![0; n];
    for k in 1..n {
        heads[order[k] - 1] = order[rng.gen_range(0..k)];
    }
    heads
}

/// Random valid units over `n` tokens: gappy units, one nesting level,
/// consecutive members at most 9 positions apart.
pub fn random_units<R: Rng>(rng: &mut R, n: usize, senses: &[&str]) -> Vec<SemanticUnit> {
    let mut consumed = vec![false; n + 1];
    let mut units: Vec<SemanticUnit> = Vec::new();
    for head in 1..=n {
        if consumed[head] {
            continue;
        }
        consumed[head] = true;
        let enclosing: Vec<&SemanticUnit> = units
            .iter()
            .filter(|u| u.is_multiword() && u.gap_contains(head))
            .collect();
        let limit = enclosing.iter().map(|u| u.last()).min().unwrap_or(n + 1);
        let mut members = vec![head];
        if enclosing.len() < 2 && rng.gen_bool(0.4) {
            let mut c = head + 1;
            while c < limit && c <= members.last().unwrap() + 9 {
                if !consumed[c] && rng.gen_bool(0.45) {
                    consumed[c] = true;
                    members.push(c);
                    if rng.gen_bool(0.4) {
                        break;
                    }
                }
                c += 1;
            }
        }
        let sense = if senses.is_empty() || rng.gen_bool(0.3) {
            ""
        } else {
            senses[rng.gen_range(0..senses.len())]
        };
        units.push(SemanticUnit::new(members, sense));
    }
    units
}

const WORD_CHARS: &[char] = &[
    'a', 'b', 'k', 'z', 'Q', 'E', '1', '9', '.', '#', '@', '-', '\'', '"', 'é', 'ß',
];

/// A random sentence of 1..=`max_len` tokens with random units applied.
pub fn random_sentence<R: Rng>(rng: &mut R, sent_id: &str, max_len: usize) -> Sentence {
    let n = rng.gen_range(1..=max_len.max(1));
    let tags = ["NOUN", "VERB", "ADP", "DET", "PROPN", "PUNCT"];
    let tokens = (1..=n)
        .map(|i| {
            let len = rng.gen_range(1..=6);
            let word: String = (0..len).map(|_| *WORD_CHARS.choose(rng).unwrap()).collect();
            let mut t = Token::new(
                i,
                &word,
                &word.to_lowercase(),
                tags.choose(rng).unwrap(),
                sent_id,
            );
            if rng.gen_bool(0.1) {
                t.strength = "_".into();
            }
            t
        })
        .collect();
    let mut s = Sentence {
        sent_id: sent_id.to_string(),
        tokens,
        parse: None,
    };
    let units = random_units(rng, n, &["n.act", "v.body", "n.person", "v.motion"]);
    s.set_units(&units).expect("random units are valid");
    s
}

pub const PLANTED_SENSES: [&str; 4] = ["n.animal", "n.food", "v.motion", "v.communication"];

#[derive(Debug, Clone)]
pub struct PlantedConfig {
    pub train_sentences: usize,
    pub held_out_sentences: usize,
    /// Content words per sense in each split. Held-out words never occur in training.
    pub words_per_sense: usize,
    pub dim: usize,
    /// Embedding noise around each sense prototype.
    pub noise: f32,
    pub gap_prob: f64,
    pub seed: u64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        PlantedConfig {
            train_sentences: 50,
            held_out_sentences: 50,
            words_per_sense: 12,
            dim: 16,
            noise: 0.3,
            gap_prob: 0.4,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Planted {
    pub train: Corpus,
    pub held_out: Corpus,
    pub table: EmbeddingTable,
}

const FILLERS: [(&str, &str); 8] = [
    ("the", "DET"),
    ("a", "DET"),
    ("of", "ADP"),
    ("in", "ADP"),
    ("and", "CCONJ"),
    ("very", "ADV"),
    ("this", "DET"),
    ("to", "PART"),
];

fn content_pos(sense: usize) -> &'static str {
    if PLANTED_SENSES[sense].starts_with("v.") {
        "VERB"
    } else {
        "NOUN"
    }
}

struct Vocab {
    train: Vec<Vec<String>>,
    held_out: Vec<Vec<String>>,
}

fn gen_split(
    rng: &mut ChaCha8Rng,
    words: &[Vec<String>],
    n_sentences: usize,
    prefix: &str,
    gap_prob: f64,
) -> Vec<Sentence> {
    (0..n_sentences)
        .map(|k| {
            let sent_id = format!("{prefix}.{k:03}");
            // items: (surface, pos, sense) singletons
            let n_items = rng.gen_range(4..=8);
            let mut items: Vec<(String, &str, &str)> = (0..n_items)
                .map(|_| {
                    if rng.gen_bool(0.55) {
                        let s = rng.gen_range(0..PLANTED_SENSES.len());
                        let w = words[s].choose(rng).unwrap().clone();
                        (w, content_pos(s), PLANTED_SENSES[s])
                    } else {
                        let (w, p) = *FILLERS.choose(rng).unwrap();
                        (w.to_string(), p, "")
                    }
                })
                .collect();
            let mut pair = None;
            if rng.gen_bool(0.9) {
                let m = rng.gen_range(0..PLANTED_SENSES.len());
                let at = rng.gen_range(0..=items.len());
                let gap = if rng.gen_bool(gap_prob) {
                    rng.gen_range(1..=2).min(items.len() - at)
                } else {
                    0
                };
                items.insert(at + gap, (format!("mkB{m}"), "ADP", ""));
                items.insert(at, (format!("mkA{m}"), "VERB", ""));
                pair = Some((at + 1, at + gap + 2, PLANTED_SENSES[m]));
            }
            let n = items.len();
            let tokens = items
                .iter()
                .enumerate()
                .map(|(i, (w, p, _))| Token::new(i + 1, w, w, p, &sent_id))
                .collect();
            let mut units: Vec<SemanticUnit> = Vec::new();
            for (i, (_, _, sense)) in items.iter().enumerate() {
                let pos = i + 1;
                match pair {
                    Some((a, b, s)) if pos == a => units.push(SemanticUnit::new(vec![a, b], s)),
                    Some((_, b, _)) if pos == b => {}
                    _ => units.push(SemanticUnit::singleton(
                        pos,
                        if sense.is_empty() {
                            UNKNOWN_SENSE
                        } else {
                            sense
                        },
                    )),
                }
            }
            let heads = match pair {
                Some((a, b, _)) => planted_tree(rng, n, a, b),
                None => random_tree(rng, n),
            };
            let mut s = Sentence {
                sent_id,
                tokens,
                parse: Some(DependencyParse::new(heads).expect("generated tree is valid")),
            };
            s.set_units(&units).expect("planted units are valid");
            s
        })
        .collect()
}

/// Random tree rooted at `a` with `b` attached directly to `a`.
fn planted_tree(rng: &mut ChaCha8Rng, n: usize, a: usize, b: usize) -> Vec<usize> {
    let mut heads = vec![0; n];
    heads[b - 1] = a;
    let mut placed = vec![a, b];
    let mut rest: Vec<usize> = (1..=n).filter(|&t| t != a && t != b).collect();
    rest.shuffle(rng);
    for t in rest {
        heads[t - 1] = *placed.choose(rng).unwrap();
        placed.push(t);
    }
    heads
}

pub fn planted_corpus(cfg: &PlantedConfig) -> Planted {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let vocab = Vocab {
        train: (0..PLANTED_SENSES.len())
            .map(|s| {
                (0..cfg.words_per_sense)
                    .map(|k| format!("tr{s}w{k}"))
                    .collect()
            })
            .collect(),
        held_out: (0..PLANTED_SENSES.len())
            .map(|s| {
                (0..cfg.words_per_sense)
                    .map(|k| format!("ho{s}w{k}"))
                    .collect()
            })
            .collect(),
    };

    let sign = |rng: &mut ChaCha8Rng| if rng.gen_bool(0.5) { 1.0f32 } else { -1.0 };
    let prototypes: Vec<Vec<f32>> = (0..PLANTED_SENSES.len())
        .map(|_| (0..cfg.dim).map(|_| sign(&mut rng)).collect())
        .collect();
    let mut entries: Vec<(String, Vec<f32>)> = Vec::new();
    for (f, _) in FILLERS {
        entries.push((
            f.to_string(),
            (0..cfg.dim).map(|_| 0.5 * sign(&mut rng)).collect(),
        ));
    }
    for m in 0..PLANTED_SENSES.len() {
        for side in ["mkA", "mkB"] {
            let v = (0..cfg.dim).map(|_| sign(&mut rng)).collect();
            entries.push((format!("{side}{m}"), v));
        }
    }
    for split in [&vocab.train, &vocab.held_out] {
        for (s, words) in split.iter().enumerate() {
            for w in words {
                let v = prototypes[s]
                    .iter()
                    .map(|&p| p + cfg.noise * rng.gen_range(-1.0f32..1.0))
                    .collect();
                entries.push((w.clone(), v));
            }
        }
    }
    let table = EmbeddingTable::from_entries(
        cfg.dim,
        entries.iter().map(|(w, v)| (w.as_str(), v.clone())),
    );

    let train = gen_split(
        &mut rng,
        &vocab.train,
        cfg.train_sentences,
        "train",
        cfg.gap_prob,
    );
    let held_out = gen_split(
        &mut rng,
        &vocab.held_out,
        cfg.held_out_sentences,
        "test",
        cfg.gap_prob,
    );
    Planted {
        train: Corpus::new(train),
        held_out: Corpus::new(held_out),
        table,
    }
}

/// Network sizes small enough to train the planted corpus in seconds.
pub fn planted_network_config() -> NetworkConfig {
    NetworkConfig {
        unit_dim: 32,
        mwe_hidden: 64,
        sense_hidden: 32,
        ..NetworkConfig::default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::units_from_tags;

    #[test]
    fn random_trees_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for n in 1..30 {
            assert!(DependencyParse::new(random_tree(&mut rng, n)).is_ok());
        }
    }

    #[test]
    fn random_sentences_round_trip_units() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut gappy = 0;
        let mut nested = 0;
        for k in 0..300 {
            let s = random_sentence(&mut rng, &format!("s{k}"), 20);
            let units = units_from_tags(&s).unwrap();
            gappy += units
                .iter()
                .filter(|u| u.last() - u.first() + 1 > u.len())
                .count();
            nested += s
                .tokens
                .iter()
                .filter(|t| t.mwe_tag == crate::corpus::MweTag::GapBegin)
                .count();
        }
        assert!(gappy > 20, "{gappy}");
        assert!(nested > 5, "{nested}");
    }

    #[test]
    fn planted_shape() {
        let p = planted_corpus(&PlantedConfig::default());
        assert_eq!(p.train.sentences.len(), 50);
        assert_eq!(p.train.sense_inventory.len(), 5);
        let mut pairs = 0;
        let mut gappy = 0;
        for s in &p.train.sentences {
            let units = units_from_tags(s).unwrap();
            for u in units.iter().filter(|u| u.is_multiword()) {
                pairs += 1;
                gappy += usize::from(u.last() > u.first() + 1);
                assert_eq!(s.parse.as_ref().unwrap().head(u.last()), u.first());
            }
        }
        assert!(pairs >= 40 && gappy >= 10, "{pairs} {gappy}");
        let train_words: std::collections::HashSet<_> = p
            .train
            .sentences
            .iter()
            .flat_map(|s| s.tokens.iter().map(|t| t.surface.clone()))
            .collect();
        assert!(p
            .held_out
            .sentences
            .iter()
            .flat_map(|s| &s.tokens)
            .all(|t| !t.surface.starts_with("tr")
                && !(t.surface.starts_with("ho") && train_words.contains(&t.surface))));
    }
}
