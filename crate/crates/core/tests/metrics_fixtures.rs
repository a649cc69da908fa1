use std::collections::BTreeSet;

use apiknow::evalmetrics::{
    corpus_bleu, evaluate, extract_api_tokens, frequency_split, sentence_bleu, token_accuracy,
    BleuStats, MetricError, TokenKind,
};

const HYPS: [&str; 2] = ["x = os.path.join(a, b)", "print(len(items))"];
const REFS: [&str; 2] = [
    "x = os.path.join(base, name)",
    "print(len(my_items), end='')",
];

#[test]
fn two_sentence_bleu_matches_hand_computation() {
    let stats = HYPS
        .iter()
        .zip(REFS)
        .fold(BleuStats::default(), |mut acc, (h, r)| {
            acc.add(&BleuStats::of(
                &apiknow::evalmetrics::code_tokens(h),
                &apiknow::evalmetrics::code_tokens(r),
            ));
            acc
        });
    assert_eq!(stats.matches, [16, 10, 8, 6]);
    assert_eq!(stats.totals, [19, 17, 15, 13]);
    assert_eq!((stats.hyp_len, stats.ref_len), (19, 23));
    // 100 * exp(1 - 23/19) * (16/19 * 10/17 * 8/15 * 6/13)^(1/4)
    let bleu = corpus_bleu(&HYPS, &REFS).unwrap();
    assert!((bleu - 47.874097985407765).abs() < 1e-6, "{bleu}");
}

#[test]
fn corpus_bleu_is_not_the_mean_of_sentence_scores() {
    let s0 = sentence_bleu(HYPS[0], REFS[0]);
    let s1 = sentence_bleu(HYPS[1], REFS[1]);
    assert!((s0 - 64.84115071397645).abs() < 1e-6, "{s0}");
    assert!((s1 - 25.694343649393552).abs() < 1e-6, "{s1}");
    let mean = (s0 + s1) / 2.0;
    let corpus = corpus_bleu(&HYPS, &REFS).unwrap();
    assert!((mean - corpus).abs() > 2.0);
}

#[test]
fn identical_corpus_scores_one_hundred() {
    let refs = [
        "f = open('f.txt', 'w')",
        "x",
        "sorted(lst, key=lambda x: x[1])",
    ];
    assert_eq!(corpus_bleu(&refs, &refs).unwrap(), 100.0);
    assert!(matches!(
        corpus_bleu(&refs[..1], &refs),
        Err(MetricError::LengthMismatch { .. })
    ));
}

#[test]
fn nested_listdir_call_api_tokens() {
    let want: BTreeSet<String> = ["random.choice", "os.listdir"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    assert_eq!(
        extract_api_tokens(r"random.choice(os.listdir('C:\\'))"),
        want
    );
}

const TOKEN_PAIRS: [(&str, &str); 10] = [
    ("f = open('f.txt', 'w')", "f = open('f.txt', 'f.txt')"),
    (
        r"random.choice(os.listdir('C:\\'))",
        r"random.choice(os.path.expanduser('C:\\'))",
    ),
    (
        r"re.sub(r'[^\sa-zA-Z0-9]', '', text).lower().strip()",
        r"re.sub(r'[^\sa-zA-Z0-9]', '', text)",
    ),
    ("x = 1 + 2", "x = 3"),
    ("json.dumps(data, indent=4)", "json.loads(data)"),
    (
        "d = collections.deque(items, maxlen)",
        "d = collections.deque(items)",
    ),
    ("sorted(lst, key=lambda x: x[1])", "sorted(lst)"),
    ("os.makedirs(path)", "os.mkdir(dirname)"),
    ("print(a + b)", "print(a + b)"),
    ("', '.join(map(str, nums))", "', '.join(nums)"),
];

#[test]
fn token_accuracy_matches_hand_counts() {
    let refs: Vec<&str> = TOKEN_PAIRS.iter().map(|p| p.0).collect();
    let hyps: Vec<&str> = TOKEN_PAIRS.iter().map(|p| p.1).collect();
    let api = token_accuracy(&hyps, &refs, TokenKind::ApiCall)
        .unwrap()
        .unwrap();
    let var = token_accuracy(&hyps, &refs, TokenKind::Variable)
        .unwrap()
        .unwrap();
    assert!((api - 16.0 / 27.0).abs() < 1e-12, "{api}");
    assert!((var - 20.0 / 27.0).abs() < 1e-12, "{var}");

    let (report, rows) = evaluate(&hyps, &refs).unwrap();
    assert_eq!(report.instances, 10);
    assert_eq!(report.api_token_accuracy, Some(api));
    assert_eq!(rows[3].api_accuracy, None);
    assert_eq!(rows[1].var_accuracy, None);
}

#[test]
fn accuracy_is_undefined_without_reference_tokens() {
    assert_eq!(
        token_accuracy(&["1"], &["2"], TokenKind::ApiCall).unwrap(),
        None
    );
}

#[test]
fn frequency_split_ranks_by_mean_api_usage() {
    // Instance i calls api{i % 7} and, for even i, also api{(i + 3) % 7}.
    // The stats corpus calls api{n} exactly n + 1 times.
    let refs: Vec<String> = (0..20)
        .map(|i| {
            if i % 2 == 0 {
                format!("m.api{}(m.api{}(x))", i % 7, (i + 3) % 7)
            } else {
                format!("m.api{}(x)", i % 7)
            }
        })
        .collect();
    let stats: Vec<String> = (0..7)
        .flat_map(|n| std::iter::repeat_n(format!("m.api{n}(y)"), n + 1))
        .collect();

    let mean = |i: usize| -> f64 {
        let mut apis = vec![i % 7];
        if i.is_multiple_of(2) && (i + 3) % 7 != i % 7 {
            apis.push((i + 3) % 7);
        }
        apis.iter().map(|&a| (a + 1) as f64).sum::<f64>() / apis.len() as f64
    };
    let mut order: Vec<usize> = (0..20).collect();
    order.sort_by(|&a, &b| mean(b).total_cmp(&mean(a)).then(a.cmp(&b)));

    let hyp_sets = vec![("self".to_string(), refs.clone())];
    let split = frequency_split(&refs, &hyp_sets, &stats, 5).unwrap();
    assert_eq!(split.high, order[..5]);
    assert_eq!(split.low, order[15..]);
    assert_eq!(split.scores[0].1.high_freq, 100.0);
    assert_eq!(split.scores[0].1.low_freq, 100.0);

    assert_eq!(
        frequency_split(&refs, &hyp_sets, &stats, 11).unwrap_err(),
        MetricError::InsufficientInstances {
            needed: 22,
            available: 20
        }
    );
}
