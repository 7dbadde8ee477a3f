use std::collections::{BTreeMap, HashMap};

use chrono::NaiveDate;
use proptest::prelude::*;

use super::*;
use crate::classifiers::{Family, ModelSpec};
use crate::eval::SplitConfig;
use crate::preprocess::{TokenPipelineConfig, TokenizedSpeech};
use crate::tasks::{train_task, FeatureSource};

fn pred(u_id: u64, date: &str, party: Party, topic: Topic, negative: bool) -> Prediction {
    let mut topic_scores = vec![0.0; 6];
    topic_scores[topic.index()] = 1.0;
    Prediction {
        u_id,
        topic,
        topic_scores,
        sentiment: if negative { Sentiment::Negative } else { Sentiment::Positive },
        sentiment_score: if negative { 0.1 } else { 0.9 },
        party,
        date: date.parse().unwrap(),
        oov: false,
    }
}

fn arb_preds(max: usize) -> impl Strategy<Value = Vec<Prediction>> {
    prop::collection::vec((0usize..6, any::<bool>(), 0usize..9, 0i64..1500), 1..max).prop_map(|v| {
        let origin = NaiveDate::from_ymd_opt(2019, 10, 1).unwrap();
        v.into_iter()
            .enumerate()
            .map(|(i, (t, neg, p, d))| {
                let date = (origin + chrono::Duration::days(d)).to_string();
                pred(i as u64 + 1, &date, Party::ALL[p], Topic::ALL[t], neg)
            })
            .collect()
    })
}

#[test]
fn topic_share_example() {
    let p = [
        pred(1, "2020-01-10", Party::Spd, Topic::Environment, false),
        pred(2, "2020-02-10", Party::Spd, Topic::Environment, false),
        pred(3, "2020-03-10", Party::Afd, Topic::Health, true),
    ];
    let t = topic_share_over_time(&p, Granularity::Quarter);
    assert_eq!(t.rows.len(), 6);
    let get = |topic| t.rows.iter().find(|r| r.topic == Some(topic)).unwrap().value.unwrap();
    assert_eq!(get(Topic::Environment), 2.0 / 3.0);
    assert_eq!(get(Topic::Health), 1.0 / 3.0);
    assert_eq!(get(Topic::EconomyFinance), 0.0);
    assert!(t.rows.iter().all(|r| r.period.as_deref() == Some("2020-Q1")));
    // Months split the same speeches into three periods.
    assert_eq!(topic_share_over_time(&p, Granularity::Month).rows.len(), 18);
}

#[test]
fn period_labels() {
    let d = |s: &str| s.parse::<NaiveDate>().unwrap();
    assert_eq!(Granularity::Quarter.period(d("2021-12-31")), "2021-Q4");
    assert_eq!(Granularity::Quarter.period(d("2021-04-01")), "2021-Q2");
    assert_eq!(Granularity::Month.period(d("2021-04-01")), "2021-04");
    assert_eq!("month".parse::<Granularity>().unwrap(), Granularity::Month);
    assert!("week".parse::<Granularity>().is_err());
}

#[test]
fn negative_share_example_and_min_count() {
    let p = [
        pred(1, "2022-01-10", Party::Linke, Topic::Health, true),
        pred(2, "2022-01-11", Party::Linke, Topic::Health, true),
        pred(3, "2022-01-12", Party::Linke, Topic::Health, false),
        pred(4, "2022-01-12", Party::Unknown, Topic::Health, true),
    ];
    let t = negative_share_by_party(&p, Granularity::Quarter, 1);
    assert_eq!(t.rows.len(), 1, "Unknown is left out");
    assert_eq!(t.rows[0].value, Some(2.0 / 3.0));
    assert_eq!((t.rows[0].hits, t.rows[0].count), (2, 3));
    let thin = negative_share_by_party(&p, Granularity::Quarter, DEFAULT_MIN_COUNT);
    assert_eq!(thin.rows[0].value, None);
    assert_eq!(thin.rows[0].count, 3);
}

#[test]
fn deviation_example() {
    // Baseline 50%; 70% negative on Health, 30% on Environment.
    let mut p = Vec::new();
    for i in 0..10 {
        p.push(pred(i, "2022-01-10", Party::Fdp, Topic::Health, i < 7));
        p.push(pred(100 + i, "2022-01-10", Party::Fdp, Topic::Environment, i < 3));
    }
    let t = sentiment_deviation_by_topic(&p);
    assert_eq!(t.baselines.len(), 1);
    assert_eq!(t.baselines[0].negative_share, 0.5);
    let get = |topic| t.rows.iter().find(|r| r.topic == Some(topic)).unwrap();
    assert!((get(Topic::Health).value.unwrap() - 0.2).abs() < 1e-12);
    assert!((get(Topic::Environment).value.unwrap() + 0.2).abs() < 1e-12);
    assert_eq!(get(Topic::EconomyFinance).value, None);
    assert_eq!(get(Topic::EconomyFinance).count, 0);
}

#[test]
fn empty_predictions_give_empty_tables() {
    for t in all_tables(&[], Granularity::Quarter, DEFAULT_MIN_COUNT) {
        assert!(t.rows.is_empty());
        assert!(t.to_csv().unwrap().lines().count() == 1);
    }
}

#[test]
fn csv_layout() {
    let p = [
        pred(1, "2020-01-10", Party::Gruene, Topic::SocialAffairsEducation, true),
        pred(2, "2020-04-10", Party::Gruene, Topic::Environment, false),
    ];
    let csv = topic_share_over_time(&p, Granularity::Quarter).to_csv().unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("period,topic,share,topic_count,period_count"));
    assert_eq!(lines.next(), Some("2020-Q1,Environment,0,0,1"));
    assert_eq!(lines.next(), Some("2020-Q1,Social Affairs and Education,1,1,1"));
    let csv = negative_share_by_party(&p, Granularity::Quarter, 5).to_csv().unwrap();
    assert_eq!(csv.lines().nth(1), Some("2020-Q1,Bündnis 90/Die Grünen,,1,1"));
    let csv = sentiment_deviation_by_topic(&p).to_csv().unwrap();
    assert_eq!(
        csv.lines().next(),
        Some("party,topic,deviation,negative_count,count,party_baseline,party_count")
    );
    assert_eq!(csv.lines().nth(1), Some("Bündnis 90/Die Grünen,Environment,-0.5,0,1,0.5,2"));
}

#[test]
fn files_written() {
    let dir = tempfile::tempdir().unwrap();
    let p = [
        pred(1, "2020-01-10", Party::Afd, Topic::Health, true),
        pred(2, "2020-05-10", Party::Spd, Topic::Environment, false),
        pred(3, "2020-08-10", Party::Spd, Topic::Health, true),
    ];
    for t in all_tables(&p, Granularity::Quarter, 1) {
        let (csv, svg) = t.write(dir.path(), true).unwrap();
        assert!(csv.ends_with(format!("{}.csv", t.kind.name())));
        let s = std::fs::read_to_string(svg).unwrap();
        assert!(s.starts_with("<svg") && s.trim_end().ends_with("</svg>"));
    }
}

#[test]
fn rolling_mean_is_centered() {
    let v = [Some(0.0), Some(3.0), None, Some(6.0), Some(0.0)];
    assert_eq!(rolling_mean(&v), vec![Some(1.5), Some(1.5), None, Some(3.0), Some(3.0)]);
    assert!(rolling_mean(&[]).is_empty());
}

/// Brute force: regroup predictions independently and recompute each deviation.
fn brute_deviation(preds: &[Prediction]) -> HashMap<(Party, Topic), f64> {
    let mut out = HashMap::new();
    for party in Party::ALL.into_iter().filter(|p| *p != Party::Unknown) {
        let mine: Vec<&Prediction> = preds.iter().filter(|p| p.party == party).collect();
        if mine.is_empty() {
            continue;
        }
        let neg = |v: &[&Prediction]| v.iter().filter(|p| p.sentiment == Sentiment::Negative).count() as f64 / v.len() as f64;
        let base = neg(&mine);
        for t in Topic::ALL {
            let cell: Vec<&Prediction> = mine.iter().copied().filter(|p| p.topic == t).collect();
            if !cell.is_empty() {
                out.insert((party, t), neg(&cell) - base);
            }
        }
    }
    out
}

proptest! {
    #[test]
    fn topic_shares_sum_to_one(preds in arb_preds(300)) {
        let t = topic_share_over_time(&preds, Granularity::Quarter);
        let mut sums: BTreeMap<String, f64> = BTreeMap::new();
        for r in &t.rows {
            *sums.entry(r.period.clone().unwrap()).or_default() += r.value.unwrap();
        }
        for s in sums.values() {
            prop_assert!((s - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn negative_share_weighted_mean_is_overall(preds in arb_preds(300)) {
        let t = negative_share_by_party(&preds, Granularity::Month, 1);
        let overall = sentiment_deviation_by_topic(&preds);
        for b in &overall.baselines {
            let rows: Vec<_> = t.rows.iter().filter(|r| r.party == Some(b.party)).collect();
            let n: u64 = rows.iter().map(|r| r.count).sum();
            let weighted: f64 = rows.iter().map(|r| r.value.unwrap() * r.count as f64).sum::<f64>() / n as f64;
            prop_assert!((weighted - b.negative_share).abs() <= 1e-9);
            prop_assert_eq!(n, b.count);
        }
        prop_assert!(t.rows.iter().all(|r| (0.0..=1.0).contains(&r.value.unwrap())));
    }

    #[test]
    fn deviation_identity_and_brute_force(preds in arb_preds(300)) {
        let t = sentiment_deviation_by_topic(&preds);
        let brute = brute_deviation(&preds);
        for b in &t.baselines {
            let s: f64 = t.rows.iter()
                .filter(|r| r.party == Some(b.party))
                .filter_map(|r| r.value.map(|v| v * r.count as f64))
                .sum();
            prop_assert!(s.abs() <= 1e-9);
        }
        let present = t.rows.iter().filter(|r| r.value.is_some()).count();
        prop_assert_eq!(present, brute.len());
        for r in &t.rows {
            if let Some(v) = r.value {
                let want = brute[&(r.party.unwrap(), r.topic.unwrap())];
                prop_assert!((v - want).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn tables_ignore_input_order(preds in arb_preds(120), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut shuffled = preds.clone();
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(
            all_tables(&preds, Granularity::Quarter, DEFAULT_MIN_COUNT),
            all_tables(&shuffled, Granularity::Quarter, DEFAULT_MIN_COUNT)
        );
    }
}

fn speech(u_id: u64, text: &str, short: bool) -> Speech {
    Speech {
        u_id,
        session_id: "20/1".into(),
        date: "2022-03-01".parse().unwrap(),
        speaker: "Test".into(),
        party: Party::Spd,
        position: "Abgeordneter".into(),
        text: text.into(),
        short,
    }
}

fn trained(task: Task, pipeline: &TokenPipeline, speeches: &[Speech], labels: &BTreeMap<u64, usize>) -> TrainedModel {
    let tokens: Vec<TokenizedSpeech> = speeches.iter().map(|s| pipeline.apply(s)).collect();
    let spec = ModelSpec::new(Family::Logreg, 3);
    train_task(task, &spec, &tokens, labels, FeatureSource::Tfidf { min_df: 1 }, pipeline, &SplitConfig::default())
        .unwrap()
        .model
}

#[test]
fn predict_corpus_keeps_order_and_skips_short() {
    let pipeline = TokenPipeline::new(TokenPipelineConfig::identity()).unwrap();
    let texts = ["klima wald klima", "krankenhaus pflege arzt", "nonsense"];
    let speeches: Vec<Speech> = (0..50u64)
        .map(|i| speech(i + 1, texts[(i % 2) as usize], false))
        .chain([speech(51, "klima", true), speech(52, texts[2], false)])
        .collect();
    let topic_labels: BTreeMap<u64, usize> = (1..=50u64)
        .map(|i| (i, if i % 2 == 1 { Topic::Environment.index() } else { Topic::Health.index() }))
        .collect();
    let sent_labels: BTreeMap<u64, usize> = (1..=50u64)
        .map(|i| (i, if i % 2 == 1 { Sentiment::Negative.index() } else { Sentiment::Positive.index() }))
        .collect();
    let topic = Predictor::new(trained(Task::Topic, &pipeline, &speeches, &topic_labels), pipeline.clone(), None).unwrap();
    let sentiment =
        Predictor::new(trained(Task::Sentiment, &pipeline, &speeches, &sent_labels), pipeline.clone(), None).unwrap();

    let preds = predict_corpus(&speeches, &topic, &sentiment).unwrap();
    assert_eq!(preds.len(), 51);
    let ids: Vec<u64> = preds.iter().map(|p| p.u_id).collect();
    assert_eq!(ids, (1..=50).chain([52]).collect::<Vec<_>>());
    assert_eq!(preds[0].topic, Topic::Environment);
    assert_eq!(preds[0].sentiment, Sentiment::Negative);
    assert_eq!(preds[1].topic, Topic::Health);
    assert!(preds[50].oov && !preds[0].oov);
    for p in &preds {
        assert!((p.topic_scores.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!((0.0..=1.0).contains(&p.sentiment_score));
    }
    assert_eq!(predict_corpus(&speeches, &topic, &sentiment).unwrap(), preds);
    assert!(predict_corpus(&[], &topic, &sentiment).unwrap().is_empty());
    assert!(predict_corpus(&speeches, &sentiment, &topic).is_err());
}
