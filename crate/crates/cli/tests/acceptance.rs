//! Acceptance suite. Runs without the libtest harness so that every criterion
//! prints exactly one PASS or FAIL line, then exits non-zero if any failed.

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use chrono::{Duration as ChronoDuration, NaiveDate, TimeZone, Utc};
use rand::seq::SliceRandom;
use rand::Rng;
use transit_feedback::classify::{batch_objective, kfold_cv, LossKind, ModelKind, ModelSpec, Predict};
use transit_feedback::corpus::synth::{generate_synthetic_corpus, SyntheticConfig};
use transit_feedback::corpus::{AssetCatalog, Channel, FeedbackRecord, Mode, RidershipSeries, TopicLabel};
use transit_feedback::enrich::{
    match_assets, Asset, AssetKind, EnrichedRecord, Gender, Sentiment, SentimentSource, ENRICHED_SCHEMA_VERSION,
};
use transit_feedback::eval::{metrics, ConfusionMatrix};
use transit_feedback::features::{FeatureVector, TfidfVectorizer};
use transit_feedback::report::{
    aggregate, complaints_per_million, daily_rates, moving_average, ColumnDim, DateWindow, GroupBy, Manifest,
};
use transit_feedback::rng::seeded;
use transit_feedback::textprep::{build_vocabulary, count_terms, PrepConfig, Preprocessor, TermList};
use transit_feedback::topics::lda::docs_from_counts;
use transit_feedback::topics::{align_columns, fit_lda, greedy_match, LdaConfig, LdaSampler};

type Criterion = (&'static str, fn() -> String);

fn main() {
    let criteria: [Criterion; 9] = [
        ("tfidf-oracle", tfidf_oracle),
        ("lda-recovery", lda_recovery),
        ("gibbs-invariants", gibbs_invariants),
        ("classifier-correctness", classifier_correctness),
        ("class-weighting", class_weighting),
        ("metric-identities", metric_identities),
        ("enrichment-fixtures", enrichment_fixtures),
        ("reporting-arithmetic", reporting_arithmetic),
        ("determinism", determinism),
    ];
    // Failures are reported on the criterion line; the default hook would
    // interleave backtraces with the summary.
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, run) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).map_err(|p| {
            p.downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into())
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail} ({secs:.2}s)"),
            Err(reason) => {
                failed += 1;
                println!("FAIL {name}: {reason} ({secs:.2}s)");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

fn within(limit: Duration, start: Instant, what: &str) -> f64 {
    let elapsed = start.elapsed();
    assert!(elapsed < limit, "{what} took {elapsed:?}, limit {limit:?}");
    elapsed.as_secs_f64()
}

fn single_thread<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(f)
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

fn tfidf_oracle() -> String {
    let start = Instant::now();
    let prep = Preprocessor::new(PrepConfig::default(), TermList::english_stopwords(), TermList::empty()).unwrap();
    let docs: Vec<Vec<String>> = include_str!("data/tfidf_docs.txt").lines().map(|l| prep.terms(l)).collect();
    assert_eq!(docs.len(), 20);
    let min_count = 2;
    let vectorizer = TfidfVectorizer::fit(build_vocabulary(&docs, min_count).unwrap());

    // Brute force: the vocabulary is every term seen at least `min_count` times.
    let mut corpus_count: BTreeMap<&str, usize> = BTreeMap::new();
    for doc in &docs {
        for t in doc {
            *corpus_count.entry(t).or_default() += 1;
        }
    }
    let vocab: Vec<&str> = corpus_count.iter().filter(|(_, c)| **c >= min_count).map(|(t, _)| *t).collect();
    assert_eq!(vectorizer.vocabulary().terms(), vocab.as_slice(), "vocabulary differs");

    let n_docs = docs.len() as f64;
    let mut max_diff: f64 = 0.0;
    let mut nonzero = 0;
    for doc in &docs {
        let got = vectorizer.vectorize_terms(doc).to_dense(vocab.len());
        let counted = doc.iter().filter(|t| corpus_count[t.as_str()] >= min_count).count();
        for (i, term) in vocab.iter().enumerate() {
            let mut count = 0;
            for t in doc {
                if t == term {
                    count += 1;
                }
            }
            let mut df = 0;
            for other in &docs {
                if other.iter().any(|t| t == term) {
                    df += 1;
                }
            }
            let tf = if counted == 0 { 0.0 } else { count as f64 / counted as f64 };
            let expected = tf * (n_docs / df as f64).ln();
            if expected != 0.0 {
                nonzero += 1;
            }
            max_diff = max_diff.max((got[i] - expected).abs());
        }
    }
    assert!(max_diff <= 1e-12, "max abs diff {max_diff:e}");
    let secs = within(Duration::from_secs(1), start, "tf-idf oracle");
    format!("{} terms, {nonzero} nonzero weights, max abs diff {max_diff:.1e} in {secs:.3}s", vocab.len())
}

fn lda_recovery() -> String {
    let syn = generate_synthetic_corpus(&SyntheticConfig {
        n_docs: 2000,
        k_true: 5,
        seed: 2024,
        ..SyntheticConfig::default()
    })
    .unwrap();
    let docs: Vec<Vec<&str>> = syn.records.iter().map(|r| r.text.split_whitespace().collect()).collect();
    let vocab = build_vocabulary(&docs, 1).unwrap();
    let counts: Vec<_> = docs.iter().map(|d| count_terms(&vocab, d)).collect();
    let cfg = LdaConfig {
        k: 5,
        seed: 17,
        ..LdaConfig::default()
    };
    let start = Instant::now();
    let model = single_thread(|| fit_lda(&counts, &vocab, &cfg)).unwrap();
    let secs = within(Duration::from_secs(60), start, "LDA fit");

    let fitted = align_columns(&model.phi(), &vocab, &syn.words);
    let matching = greedy_match(&syn.topic_word, &fitted);
    assert_eq!(matching.pairs.len(), 5);
    let tv: Vec<f64> = matching
        .pairs
        .iter()
        .map(|p| {
            let planted = &syn.topic_word[p.reference];
            0.5 * planted.iter().zip(&fitted[p.fitted]).map(|(a, b)| (a - b).abs()).sum::<f64>()
        })
        .collect();
    let mean_tv = tv.iter().sum::<f64>() / tv.len() as f64;
    let agree = (0..syn.records.len())
        .filter(|d| matching.reference_for(argmax(&model.doc_topic(*d))) == Some(syn.doc_labels[*d]))
        .count();
    let share = agree as f64 / syn.records.len() as f64;
    assert!(mean_tv <= 0.15, "mean TV {mean_tv:.4} > 0.15");
    assert!(share >= 0.90, "argmax agreement {share:.4} < 0.90");
    format!(
        "mean TV {mean_tv:.4}, argmax agreement {share:.4}, {} sweeps single-threaded in {secs:.1}s",
        model.sweeps
    )
}

fn gibbs_invariants() -> String {
    let syn = generate_synthetic_corpus(&SyntheticConfig {
        n_docs: 200,
        k_true: 4,
        doc_len: 30,
        seed: 99,
        ..SyntheticConfig::default()
    })
    .unwrap();
    let texts: Vec<Vec<&str>> = syn.records.iter().map(|r| r.text.split_whitespace().collect()).collect();
    let vocab = build_vocabulary(&texts, 1).unwrap();
    let counts: Vec<_> = texts.iter().map(|d| count_terms(&vocab, d)).collect();
    let docs = docs_from_counts(&counts);
    let k = 6;
    let mut sampler = LdaSampler::new(
        docs.clone(),
        vocab.len(),
        &LdaConfig {
            k,
            seed: 3,
            ..LdaConfig::default()
        },
    )
    .unwrap();
    let n_tokens: usize = docs.iter().map(Vec::len).sum();
    let sweeps = 200;
    for sweep in 0..=sweeps {
        if sweep > 0 {
            sampler.sweep();
        }
        let z = sampler.assignments();
        let mut n_dk = vec![vec![0u32; k]; docs.len()];
        let mut n_kw = vec![vec![0u32; vocab.len()]; k];
        let mut n_k = vec![0u32; k];
        for (d, doc) in docs.iter().enumerate() {
            assert_eq!(z[d].len(), doc.len(), "sweep {sweep}: doc {d} assignment length");
            for (w, t) in doc.iter().zip(&z[d]) {
                assert!(*t < k, "sweep {sweep}: topic {t} out of range");
                n_dk[d][*t] += 1;
                n_kw[*t][*w] += 1;
                n_k[*t] += 1;
            }
        }
        assert_eq!(sampler.n_dk(), n_dk.as_slice(), "sweep {sweep}: document-topic counts");
        assert_eq!(sampler.n_k(), n_k.as_slice(), "sweep {sweep}: topic totals");
        for (t, row) in n_kw.iter().enumerate() {
            for (w, c) in row.iter().enumerate() {
                assert_eq!(sampler.n_kw(t, w), *c, "sweep {sweep}: n_kw[{t}][{w}]");
            }
        }
        assert_eq!(n_k.iter().map(|c| *c as usize).sum::<usize>(), n_tokens);
    }
    format!("{} docs, {n_tokens} tokens, K={k}: counts exact after each of {sweeps} sweeps", docs.len())
}

fn dense(values: &[f64]) -> FeatureVector {
    FeatureVector {
        entries: values.iter().copied().enumerate().collect(),
    }
}

fn classifier_correctness() -> String {
    let start = Instant::now();
    let mut rng = seeded(5);
    let (n, dim, c, h) = (5, 8, 3, 1e-6);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for loss in LossKind::ALL {
        for _ in 0..20 {
            let xs: Vec<FeatureVector> =
                (0..n).map(|_| dense(&(0..dim).map(|_| rng.random::<f64>()).collect::<Vec<_>>())).collect();
            let refs: Vec<&FeatureVector> = xs.iter().collect();
            let ys: Vec<usize> = (0..n).map(|_| rng.random_range(0..c)).collect();
            let cw: Vec<f64> = (0..c).map(|_| rng.random_range(0.5..2.0)).collect();
            let w: Vec<Vec<f64>> = (0..c).map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
            let b: Vec<f64> = (0..c).map(|_| rng.random_range(-0.5..0.5)).collect();
            let l2 = 0.01;
            let (_, grad) = batch_objective(loss, &w, &b, &cw, l2, &refs, &ys);
            let f = |w: &[Vec<f64>], b: &[f64]| batch_objective(loss, w, b, &cw, l2, &refs, &ys).0;
            let mut compare = |analytic: f64, numeric: f64| {
                let scale = analytic.abs().max(numeric.abs());
                let err = if scale > 1e-6 { (analytic - numeric).abs() / scale } else { (analytic - numeric).abs() };
                worst = worst.max(err);
                checked += 1;
                assert!(err <= 1e-5, "{}: analytic {analytic} vs numeric {numeric}", loss.as_str());
            };
            for j in 0..c {
                for i in 0..dim {
                    let (mut up, mut down) = (w.clone(), w.clone());
                    up[j][i] += h;
                    down[j][i] -= h;
                    compare(grad.weights[j][i], (f(&up, &b) - f(&down, &b)) / (2.0 * h));
                }
                let (mut up, mut down) = (b.clone(), b.clone());
                up[j] += h;
                down[j] -= h;
                compare(grad.bias[j], (f(&w, &up) - f(&w, &down)) / (2.0 * h));
            }
        }
    }

    // Each document has five words from its class's private vocabulary and
    // five shared noise words, so the classes are linearly separable.
    let classes = 11;
    let mut terms = Vec::new();
    let mut labels = Vec::new();
    for class in 0..classes {
        for _ in 0..60 {
            let mut doc: Vec<String> = (0..5).map(|_| format!("c{class}w{}", rng.random_range(0..8))).collect();
            doc.extend((0..5).map(|_| format!("noise{}", rng.random_range(0..40))));
            terms.push(doc);
            labels.push(class);
        }
    }
    let vectorizer = TfidfVectorizer::fit(build_vocabulary(&terms, 1).unwrap());
    let xs: Vec<FeatureVector> = terms.iter().map(|d| vectorizer.vectorize_terms(d)).collect();
    let names: Vec<String> = (0..classes).map(|c| format!("class{c}")).collect();
    let mut accuracies = Vec::new();
    for kind in ModelKind::ALL {
        let cv = kfold_cv(&xs, &labels, &names, vectorizer.dim(), 5, 11, &ModelSpec::new(kind)).unwrap();
        assert!(cv.mean_accuracy >= 0.95, "{kind} mean CV accuracy {:.4}", cv.mean_accuracy);
        accuracies.push(format!("{kind} {:.3}", cv.mean_accuracy));
    }
    let secs = within(Duration::from_secs(120), start, "classifier checks");
    format!(
        "{checked} gradient entries, worst relative error {worst:.1e}; 5-fold accuracy {} in {secs:.1}s",
        accuracies.join(", ")
    )
}

/// Two overlapping classes: most words are shared, a few are class-specific.
fn imbalanced_set(seed: u64, majority: usize, minority: usize) -> (Vec<Vec<String>>, Vec<usize>) {
    let mut rng = seeded(seed);
    let mut docs = Vec::new();
    let mut labels = Vec::new();
    for (class, n) in [(0, majority), (1, minority)] {
        for _ in 0..n {
            let doc = (0..10)
                .map(|_| {
                    if rng.random::<f64>() < 0.12 {
                        format!("k{class}_{}", rng.random_range(0..5))
                    } else {
                        format!("shared{}", rng.random_range(0..20))
                    }
                })
                .collect();
            docs.push(doc);
            labels.push(class);
        }
    }
    (docs, labels)
}

fn class_weighting() -> String {
    let (train_docs, train_labels) = imbalanced_set(1, 900, 100);
    let (test_docs, test_labels) = imbalanced_set(2, 900, 100);
    let vectorizer = TfidfVectorizer::fit(build_vocabulary(&train_docs, 1).unwrap());
    let train: Vec<FeatureVector> = train_docs.iter().map(|d| vectorizer.vectorize_terms(d)).collect();
    let test: Vec<FeatureVector> = test_docs.iter().map(|d| vectorizer.vectorize_terms(d)).collect();
    let minority_recall = |weighted: bool, loss: LossKind| {
        let spec = ModelSpec {
            class_weighting: weighted,
            ..ModelSpec::new(ModelKind::Linear(loss))
        };
        let model = spec.train(&train, &train_labels, 2, vectorizer.dim()).unwrap();
        let hits = test
            .iter()
            .zip(&test_labels)
            .filter(|(x, y)| **y == 1 && model.predict(x).class == 1)
            .count();
        hits as f64 / test_labels.iter().filter(|y| **y == 1).count() as f64
    };
    let mut detail = Vec::new();
    for loss in LossKind::ALL {
        let (weighted, unweighted) = (minority_recall(true, loss), minority_recall(false, loss));
        assert!(
            weighted >= unweighted,
            "{}: weighted minority recall {weighted:.3} < unweighted {unweighted:.3}",
            loss.as_str()
        );
        detail.push(format!("{} {unweighted:.2} -> {weighted:.2}", loss.as_str()));
    }
    format!("minority recall unweighted -> weighted: {}", detail.join(", "))
}

fn metric_identities() -> String {
    let mut rng = seeded(8);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let c = rng.random_range(2..=12);
        let mut m = ConfusionMatrix::new((0..c).map(|i| format!("l{i}")).collect());
        for row in m.counts.iter_mut() {
            for cell in row.iter_mut() {
                *cell = rng.random_range(0..50);
            }
        }
        m.counts[0][0] += 1;
        let r = metrics(&m).unwrap();
        let accuracy = m.trace() as f64 / m.total() as f64;
        worst = worst.max((r.weighted_avg.recall - r.accuracy).abs());
        worst = worst.max((r.accuracy - accuracy).abs());
    }
    assert!(worst <= 1e-12, "weighted recall and accuracy differ by {worst:e}");

    let mut m = ConfusionMatrix::new(vec!["a".into(), "b".into()]);
    m.counts = vec![vec![3, 1], vec![2, 4]];
    let r = metrics(&m).unwrap();
    let f1 = |p: f64, r: f64| 2.0 * p * r / (p + r);
    let (pa, ra, pb, rb) = (3.0 / 5.0, 3.0 / 4.0, 4.0 / 5.0, 4.0 / 6.0);
    let hand = [
        ("precision a", r.per_class[0].precision, pa),
        ("recall a", r.per_class[0].recall, ra),
        ("f1 a", r.per_class[0].f1, f1(pa, ra)),
        ("support a", r.per_class[0].support, 4.0),
        ("precision b", r.per_class[1].precision, pb),
        ("recall b", r.per_class[1].recall, rb),
        ("f1 b", r.per_class[1].f1, f1(pb, rb)),
        ("support b", r.per_class[1].support, 6.0),
        ("accuracy", r.accuracy, 7.0 / 10.0),
        ("macro precision", r.macro_avg.precision, (pa + pb) / 2.0),
        ("macro recall", r.macro_avg.recall, (ra + rb) / 2.0),
        ("macro f1", r.macro_avg.f1, (f1(pa, ra) + f1(pb, rb)) / 2.0),
        ("weighted precision", r.weighted_avg.precision, (4.0 * pa + 6.0 * pb) / 10.0),
        ("weighted recall", r.weighted_avg.recall, (4.0 * ra + 6.0 * rb) / 10.0),
        ("weighted f1", r.weighted_avg.f1, (4.0 * f1(pa, ra) + 6.0 * f1(pb, rb)) / 10.0),
    ];
    for (name, got, want) in hand {
        assert!(got == want, "{name}: {got} != {want}");
    }
    // The same values as exact fractions, to catch a wrong formula that the
    // floating-point expressions above would share.
    let fractions = [
        (r.per_class[0].f1, 2.0 / 3.0),
        (r.per_class[1].f1, 8.0 / 11.0),
        (r.macro_avg.f1, 23.0 / 33.0),
        (r.weighted_avg.precision, 0.72),
        (r.weighted_avg.f1, 116.0 / 165.0),
    ];
    for (got, want) in fractions {
        assert!((got - want).abs() <= 1e-15, "{got} vs fraction {want}");
    }
    format!("100 random matrices, worst |weighted recall - accuracy| {worst:.1e}; [[3,1],[2,4]] matches 15 hand values")
}

fn enrichment_fixtures() -> String {
    let catalog = AssetCatalog::from_json(
        r#"{"schema_version":1,
            "routes":[{"id":"70","aliases":["route 70"]},{"id":"30"}],
            "stations":[
                {"name":"West Hyattsville","lines":["Green"]},
                {"name":"Prince George's Plaza","aliases":["PG Plaza"],"lines":["Green"]},
                {"name":"East Falls Church","lines":["Orange","Silver"]}],
            "lines":[
                {"id":"Green","aliases":["green line"]},
                {"id":"Orange","aliases":["orange line"]},
                {"id":"Silver","aliases":["silver line"]}],
            "vehicle_ranges":[
                {"low":1000,"high":7999,"mode":"Rail"},
                {"low":2000,"high":9999,"mode":"Bus"}]}"#,
    )
    .unwrap();
    let cases: [(&str, Mode, &[&str]); 3] = [
        (
            "@Metrorailinfo What's happening with the green line between West Hyattsville and PG Plaza for the last twenty-odd minutes?",
            Mode::Rail,
            &["Line:Green", "Station:West Hyattsville", "Station:Prince George's Plaza"],
        ),
        (
            "Hi @wmata the driver of the 70 Metrobus #6032 needs a refresher on how to drive",
            Mode::Bus,
            &["Route:70", "Vehicle:6032"],
        ),
        (
            "Car 5016 orange no air @Metrorailinfo gonna be a #hotcar later today",
            Mode::Rail,
            &["Vehicle:5016", "Line:Orange"],
        ),
    ];
    for (text, mode, expected) in cases {
        let m = match_assets(text, &catalog);
        let got: Vec<String> = m.assets.iter().map(ToString::to_string).collect();
        let got_set: BTreeSet<&str> = got.iter().map(String::as_str).collect();
        let want: BTreeSet<&str> = expected.iter().copied().collect();
        assert_eq!(m.mode, mode, "mode for {text:?}");
        assert_eq!(got_set, want, "assets for {text:?}");
        assert_eq!(got.len(), expected.len(), "duplicate assets for {text:?}");
    }
    "green line stations, route 70 with bus 6032, orange car 5016 all exact".into()
}

fn enriched(id: usize, day: NaiveDate, minute: i64, route: &str, topic: TopicLabel, sentiment: Sentiment) -> EnrichedRecord {
    let timestamp = Utc.from_utc_datetime(&day.and_hms_opt(0, 0, 0).unwrap()) + ChronoDuration::minutes(minute);
    EnrichedRecord {
        schema_version: ENRICHED_SCHEMA_VERSION,
        record: FeedbackRecord {
            id: format!("r{id}"),
            text: format!("complaint about route {route}"),
            channel: Channel::Crm,
            timestamp,
            problem_category: None,
            mode_hint: Some(Mode::Bus),
            author: None,
        },
        topic,
        topic_scores: vec![],
        sentiment,
        sentiment_source: SentimentSource::Lexicon,
        mode: Mode::Bus,
        assets: vec![Asset {
            kind: AssetKind::Route,
            id: route.into(),
            mode: Mode::Bus,
        }],
        gender: Gender::Unknown,
        flags: vec![],
    }
}

fn reporting_arithmetic() -> String {
    let mut rng = seeded(90);
    let start = NaiveDate::from_ymd_opt(2023, 3, 1).unwrap();
    let days: Vec<NaiveDate> = (0..90).map(|i| start + ChronoDuration::days(i)).collect();
    let routes = ["10A", "30", "70"];
    let mut ridership = RidershipSeries::new();
    let mut system = Vec::new();
    let mut route_riders: BTreeMap<&str, Vec<u64>> = BTreeMap::new();
    let mut daily: BTreeMap<&str, Vec<u64>> = BTreeMap::new();
    let mut records = Vec::new();
    for day in &days {
        let total = rng.random_range(100_000..500_000);
        ridership.insert(*day, None, total).unwrap();
        system.push(total);
        for route in routes {
            let riders = rng.random_range(5_000..40_000);
            ridership.insert(*day, Some(route), riders).unwrap();
            route_riders.entry(route).or_default().push(riders);
            let n = rng.random_range(0..8);
            daily.entry(route).or_default().push(n);
            for _ in 0..n {
                let topic = TopicLabel::ALL[rng.random_range(0..11)];
                let sentiment = [Sentiment::Negative, Sentiment::Neutral, Sentiment::Positive][rng.random_range(0..3)];
                records.push(enriched(records.len(), *day, rng.random_range(0..1440), route, topic, sentiment));
            }
        }
    }
    let window = DateWindow::new(days[0], days[89]).unwrap();
    let mut worst: f64 = 0.0;
    let mut close = |got: f64, want: f64, what: &str| {
        let diff = (got - want).abs();
        worst = worst.max(diff);
        assert!(diff <= 1e-9, "{what}: {got} vs {want}");
    };

    let system_total: u64 = system.iter().sum();
    for (own, rates) in [
        (false, complaints_per_million(&records, &ridership, &window, GroupBy::Route, false).unwrap()),
        (true, complaints_per_million(&records, &ridership, &window, GroupBy::Route, true).unwrap()),
    ] {
        assert_eq!(rates.len(), routes.len());
        for rate in &rates {
            let complaints: u64 = daily[rate.group.as_str()].iter().sum();
            let riders = if own { route_riders[rate.group.as_str()].iter().sum() } else { system_total };
            assert_eq!(rate.complaints, complaints);
            close(rate.rate.unwrap(), complaints as f64 * 1_000_000.0 / riders as f64, &rate.group);
        }
    }

    let series = daily_rates(&records, &ridership, &window, GroupBy::Route, false).unwrap();
    let mut averaged = 0;
    for s in &series {
        let counts = &daily[s.group.as_str()];
        let expected: Vec<f64> = counts
            .iter()
            .zip(&system)
            .map(|(c, r)| *c as f64 * 1_000_000.0 / *r as f64)
            .collect();
        assert_eq!(s.points.len(), 90);
        for ((d, v), (day, want)) in s.points.iter().zip(days.iter().zip(&expected)) {
            assert_eq!(d, day);
            close(*v, *want, "daily rate");
        }
        let ma = moving_average(s, 30, None).unwrap();
        assert_eq!(ma.points.len(), 61);
        for (i, (d, v)) in ma.points.iter().enumerate() {
            let end = i + 29;
            let mut sum = 0.0;
            for x in &expected[end - 29..=end] {
                sum += x;
            }
            assert_eq!(*d, days[end]);
            close(*v, sum / 30.0, "30-day moving average");
            averaged += 1;
        }
    }

    let mut shuffled = records.clone();
    shuffled.shuffle(&mut rng);
    for dim in [ColumnDim::Sentiment, ColumnDim::Mode] {
        assert_eq!(aggregate(&records, dim), aggregate(&shuffled, dim), "aggregation depends on input order");
    }
    assert_eq!(
        complaints_per_million(&records, &ridership, &window, GroupBy::Topic, false).unwrap(),
        complaints_per_million(&shuffled, &ridership, &window, GroupBy::Topic, false).unwrap()
    );
    assert_eq!(series, daily_rates(&shuffled, &ridership, &window, GroupBy::Route, false).unwrap());
    format!(
        "{} records, 3 routes x 90 days, {averaged} moving-average points, worst abs diff {worst:.1e}; order invariant",
        records.len()
    )
}

fn demo_run(out: &Path) -> Manifest {
    let status = Command::new(env!("CARGO_BIN_EXE_transit-feedback"))
        .args(["demo", "--seed", "20240901", "--out"])
        .arg(out)
        .env_remove("TFE_CONFIG")
        .env_remove("TFE_SEED")
        .env_remove("TFE_OUT")
        .env_remove("TFE_THREADS")
        .output()
        .expect("run the demo binary");
    assert!(
        status.status.success(),
        "demo failed: {}",
        String::from_utf8_lossy(&status.stderr)
    );
    Manifest::load(&out.join("manifest.json")).unwrap()
}

fn determinism() -> String {
    let dir = tempfile::tempdir().unwrap();
    let limit = Duration::from_secs(300);
    let start = Instant::now();
    let a = demo_run(&dir.path().join("a"));
    let first = within(limit, start, "first demo run");
    let start = Instant::now();
    let b = demo_run(&dir.path().join("b"));
    let second = within(limit, start, "second demo run");
    for stage in ["synth", "derive-topics", "train", "evaluate", "report"] {
        assert!(a.timings_ms.contains_key(stage), "demo did not run {stage}");
    }
    assert!(!a.metrics.is_empty());
    assert_eq!(a.metrics, b.metrics, "manifest metrics differ between runs");
    let hashes = |m: &Manifest| -> BTreeMap<String, String> {
        m.artifacts
            .iter()
            .filter(|e| !e.path.ends_with("manifest.json"))
            .map(|e| (e.path.clone(), e.sha256.clone()))
            .collect()
    };
    assert_eq!(hashes(&a), hashes(&b), "artifact contents differ between runs");
    format!(
        "{} metrics and {} artifacts identical across two runs ({first:.1}s and {second:.1}s end to end)",
        a.metrics.len(),
        hashes(&a).len()
    )
}
