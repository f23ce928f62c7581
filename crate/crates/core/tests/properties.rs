use proptest::prelude::*;

use tsa_core::data::{preprocess, stratified_split, LabelKind, LabeledRecord, SentimentLabel, SplitSpec};
use tsa_core::metrics::{cohens_kappa, confusion_matrix, divergent_subset, macro_f1};
use tsa_core::tokenizer::{build_vocab, encode_record, TokenizerError, Vocabulary};
use tsa_core::train::class_weights;

fn label() -> impl Strategy<Value = SentimentLabel> {
    (0usize..3).prop_map(|i| SentimentLabel::from_index(i).unwrap())
}

fn plain_word() -> impl Strategy<Value = String> {
    "[a-zçğıöşü]{1,9}"
}

/// A tweet-like word list: plain words, hashtags, mentions and URLs.
fn token() -> impl Strategy<Value = String> {
    prop_oneof![
        6 => plain_word(),
        1 => plain_word().prop_map(|w| format!("#{w}")),
        1 => plain_word().prop_map(|w| format!("@{w}")),
        1 => plain_word().prop_map(|w| format!("https://t.co/{w}")),
        1 => "[a-z0-9!?.,]{1,5}",
    ]
}

/// Records whose target is a plain word or hashtag at a random position.
fn record() -> impl Strategy<Value = LabeledRecord> {
    (
        prop::collection::vec(token(), 0..30),
        plain_word(),
        any::<bool>(),
        any::<prop::sample::Index>(),
        label(),
        label(),
    )
        .prop_map(|(mut words, target_word, hashtag, at, sentence, targeted)| {
            let target = if hashtag {
                format!("#{target_word}")
            } else {
                target_word
            };
            let pos = at.index(words.len() + 1);
            words.insert(pos, target.clone());
            let start: usize = words[..pos].iter().map(|w| w.chars().count() + 1).sum();
            let end = start + target.chars().count();
            LabeledRecord {
                id: "p".into(),
                text: words.join(" "),
                target,
                target_start: start,
                target_end: end,
                sentence_sentiment: sentence,
                targeted_sentiment: targeted,
            }
        })
}

fn shared_vocab() -> Vocabulary {
    let corpus = [
        "bugün hava çok güzel ama trafik berbat",
        "şirket yeni ürünü duyurdu ve müşteriler sevindi",
        "telefonum çöktü servis rezalet",
        "öğrenciler sınavdan önce ödev yaptı",
    ];
    build_vocab(&corpus, 120).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn encoding_invariants(r in record(), max_len in 4usize..40, marked in any::<bool>()) {
        let vocab = shared_vocab();
        let clean_target = preprocess(&r.target).clean;
        let target_ids = vocab.tokenize_ids(&clean_target);
        match encode_record(&r, &vocab, max_len, marked, LabelKind::Targeted) {
            Ok(e) => {
                prop_assert_eq!(e.check_invariants(), Ok(()));
                prop_assert_eq!(e.max_len(), max_len);
                prop_assert_eq!(e.target_ids(), target_ids.as_slice());
                prop_assert_eq!(e.label, r.targeted_sentiment);
                let markers = e.ids.iter().filter(|&&id| id == tsa_core::tokenizer::TAR_ID).count();
                prop_assert_eq!(markers, if marked { 2 } else { 0 });
            }
            Err(TokenizerError::TargetTooLong { needed, .. }) => {
                let markers = if marked { 2 } else { 0 };
                prop_assert_eq!(needed, (2 + markers + target_ids.len()).max(4));
                prop_assert!(needed > max_len);
            }
            Err(other) => prop_assert!(false, "unexpected error {other}"),
        }
    }
}

proptest! {
    #[test]
    fn preprocess_is_idempotent_and_tracks_offsets(words in prop::collection::vec(token(), 0..20), sep in "[ \t\n]{1,3}") {
        let raw = words.join(&sep);
        let once = preprocess(&raw);
        prop_assert_eq!(&preprocess(&once.clean).clean, &once.clean);
        let raw_chars: Vec<char> = raw.chars().collect();
        let clean_chars: Vec<char> = once.clean.chars().collect();
        prop_assert_eq!(once.map.len(), clean_chars.len());
        let map = once.map.as_slice();
        prop_assert!(map.windows(2).all(|w| w[0] < w[1]));
        for (i, &c) in clean_chars.iter().enumerate() {
            if c != ' ' {
                prop_assert_eq!(raw_chars[map[i]], c);
            }
        }
        prop_assert!(!once.clean.contains('#') && !once.clean.contains("  "));
        prop_assert!(once.clean.split(' ').all(|w| !w.starts_with('@') && !w.starts_with("http")));
    }

    #[test]
    fn split_apportions_each_class(class_sizes in prop::array::uniform3(7usize..120), seed in any::<u64>()) {
        let mut records = Vec::new();
        for (c, &n) in class_sizes.iter().enumerate() {
            for _ in 0..n {
                let l = SentimentLabel::from_index(c).unwrap();
                records.push(LabeledRecord {
                    id: format!("r{}", records.len()),
                    text: "a b".into(),
                    target: "a".into(),
                    target_start: 0,
                    target_end: 1,
                    sentence_sentiment: l,
                    targeted_sentiment: l,
                });
            }
        }
        let spec = SplitSpec::new(0.65, 0.20, 0.15, seed).unwrap();
        let split = stratified_split(&records, &spec, LabelKind::Targeted).unwrap();
        prop_assert_eq!(&stratified_split(&records, &spec, LabelKind::Targeted).unwrap(), &split);

        let fracs = [0.65, 0.20, 0.15];
        for (k, subset) in [&split.train, &split.test, &split.val].into_iter().enumerate() {
            for (c, &n) in class_sizes.iter().enumerate() {
                let got = subset.iter().filter(|r| r.targeted_sentiment.index() == c).count();
                let exact = n as f64 * fracs[k];
                prop_assert!((got as f64 - exact).abs() < 1.0 + 1e-9, "subset {k} class {c}: {got} vs {exact}");
            }
        }
        let mut ids: Vec<&str> = split.train.iter().chain(&split.test).chain(&split.val).map(|r| r.id.as_str()).collect();
        ids.sort_unstable();
        let mut all: Vec<&str> = records.iter().map(|r| r.id.as_str()).collect();
        all.sort_unstable();
        prop_assert_eq!(ids, all);
    }

    #[test]
    fn macro_f1_matches_brute_force(pairs in prop::collection::vec((label(), label()), 1..200)) {
        let (gold, pred): (Vec<_>, Vec<_>) = pairs.iter().copied().unzip();
        let got = macro_f1(&confusion_matrix(&gold, &pred).unwrap()).unwrap();
        let mut f1s = 0.0;
        for c in SentimentLabel::ALL {
            let tp = pairs.iter().filter(|(g, p)| *g == c && *p == c).count() as f64;
            let fp = pairs.iter().filter(|(g, p)| *g != c && *p == c).count() as f64;
            let fneg = pairs.iter().filter(|(g, p)| *g == c && *p != c).count() as f64;
            if tp > 0.0 {
                f1s += 2.0 * tp / (2.0 * tp + fp + fneg);
            }
        }
        prop_assert!((got - f1s / 3.0).abs() <= 1e-12);
    }

    #[test]
    fn metrics_are_permutation_invariant(pairs in prop::collection::vec((label(), label()), 1..100), perm_seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut shuffled = pairs.clone();
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(perm_seed));
        let (g1, p1): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
        let (g2, p2): (Vec<_>, Vec<_>) = shuffled.into_iter().unzip();
        let m1 = confusion_matrix(&g1, &p1).unwrap();
        let m2 = confusion_matrix(&g2, &p2).unwrap();
        prop_assert_eq!(&m1, &m2);
        prop_assert_eq!(macro_f1(&m1).unwrap(), macro_f1(&m2).unwrap());
        prop_assert_eq!(cohens_kappa(&g1, &p1).unwrap(), cohens_kappa(&g2, &p2).unwrap());
    }

    #[test]
    fn kappa_bounded_and_symmetric(pairs in prop::collection::vec((label(), label()), 1..100)) {
        let (a, b): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
        let k = cohens_kappa(&a, &b).unwrap();
        prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&k));
        prop_assert!((k - cohens_kappa(&b, &a).unwrap()).abs() <= 1e-12);
        prop_assert_eq!(cohens_kappa(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn class_weights_equalise_mass(counts in prop::array::uniform3(1usize..10_000)) {
        let w = class_weights(counts).unwrap();
        let n: usize = counts.iter().sum();
        for c in 0..3 {
            let mass = w[c] * counts[c] as f64;
            prop_assert!((mass - n as f64 / 3.0).abs() <= 1e-9 * n as f64);
        }
    }

    #[test]
    fn divergent_subset_partitions(labels in prop::collection::vec((label(), label()), 0..60)) {
        let records: Vec<LabeledRecord> = labels
            .iter()
            .enumerate()
            .map(|(i, &(s, t))| LabeledRecord {
                id: i.to_string(),
                text: "x y".into(),
                target: "x".into(),
                target_start: 0,
                target_end: 1,
                sentence_sentiment: s,
                targeted_sentiment: t,
            })
            .collect();
        let div = divergent_subset(&records);
        prop_assert!(div.iter().all(|r| r.sentence_sentiment != r.targeted_sentiment));
        let expected = labels.iter().filter(|(s, t)| s != t).count();
        prop_assert_eq!(div.len(), expected);
        let ids: Vec<usize> = div.iter().map(|r| r.id.parse().unwrap()).collect();
        prop_assert!(ids.windows(2).all(|w| w[0] < w[1]));
    }
}
