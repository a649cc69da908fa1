use apiknow::sigparse::{enumerate_usages, parse_signature, render_usage, EntryKind, MAX_USAGES};
use proptest::prelude::*;

/// Brute force: every prefix of the optional positionals crossed with every
/// keyword subset, ranked by number of optional arguments and then by the
/// included names, truncated to the cap.
fn brute_force(required: &[String], optional: &[String], keywords: &[String]) -> Vec<Vec<String>> {
    let mut all = Vec::new();
    for j in 0..=optional.len() {
        for mask in 0u32..(1 << keywords.len()) {
            let mut names: Vec<String> = required.to_vec();
            names.extend(optional[..j].iter().cloned());
            for (i, k) in keywords.iter().enumerate() {
                if mask & (1 << i) != 0 {
                    names.push(k.clone());
                }
            }
            let extra = names.len() - required.len();
            all.push((extra, names));
        }
    }
    all.sort();
    all.into_iter().take(MAX_USAGES).map(|(_, n)| n).collect()
}

/// Builds `f(r0, r1[, o0[, o1]], k0=None, k1=None)`. Names are chosen so
/// that signature order and lexicographic order agree.
fn synthetic(r: usize, p: usize, q: usize) -> (String, Vec<String>, Vec<String>, Vec<String>) {
    let required: Vec<String> = (0..r).map(|i| format!("a{i}")).collect();
    let optional: Vec<String> = (0..p).map(|i| format!("b{i}")).collect();
    let keywords: Vec<String> = (0..q).map(|i| format!("c{i}")).collect();
    let mut text = String::from("mod.f(");
    text.push_str(&required.join(", "));
    for (i, o) in optional.iter().enumerate() {
        if i == 0 && required.is_empty() {
            text.push_str(&format!("[{o}"));
        } else {
            text.push_str(&format!("[, {o}"));
        }
    }
    text.push_str(&"]".repeat(p));
    for k in &keywords {
        if r + p > 0 || k != &keywords[0] {
            text.push_str(", ");
        }
        text.push_str(&format!("{k}=None"));
    }
    text.push(')');
    (text, required, optional, keywords)
}

fn check(r: usize, p: usize, q: usize) -> Result<usize, TestCaseError> {
    let (text, required, optional, keywords) = synthetic(r, p, q);
    let sig = parse_signature(&text, EntryKind::Function, None)
        .map_err(|e| TestCaseError::fail(format!("{text}: {e}")))?;
    let usages = enumerate_usages(&sig);
    let got: Vec<Vec<String>> = usages.iter().map(|u| u.included_args.clone()).collect();
    prop_assert_eq!(
        &got,
        &brute_force(&required, &optional, &keywords),
        "{}",
        text
    );
    Ok(usages.len())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn positional_only_gives_p_plus_one(r in 0usize..4, p in 0usize..14) {
        let n = check(r, p, 0)?;
        prop_assert_eq!(n, (p + 1).min(MAX_USAGES));
    }

    #[test]
    fn keyword_only_gives_two_to_the_q(r in 0usize..4, q in 0usize..9) {
        let n = check(r, 0, q)?;
        prop_assert_eq!(n, (1usize << q).min(MAX_USAGES));
    }

    #[test]
    fn mixed_signatures_match_brute_force(r in 0usize..3, p in 0usize..4, q in 0usize..5) {
        let n = check(r, p, q)?;
        prop_assert_eq!(n, ((p + 1) << q).min(MAX_USAGES));
    }

    #[test]
    fn every_usage_renders_its_arguments(p in 0usize..4, q in 0usize..4) {
        let (text, ..) = synthetic(1, p, q);
        let sig = parse_signature(&text, EntryKind::Function, None).unwrap();
        for u in enumerate_usages(&sig) {
            let code = render_usage(&sig, &u).unwrap();
            prop_assert_eq!(&code, &u.code);
            for name in &u.included_args {
                prop_assert!(code.contains(name.as_str()));
            }
        }
    }
}

#[test]
fn wide_keyword_list_stays_capped() {
    // 2^40 subsets would never finish if they were materialised.
    let (text, ..) = synthetic(1, 0, 40);
    let sig = parse_signature(&text, EntryKind::Function, None).unwrap();
    assert_eq!(enumerate_usages(&sig).len(), MAX_USAGES);
}

#[test]
fn four_keywords_keep_smallest_subsets() {
    let sig = parse_signature("g(x, a=1, b=2, c=3, d=4)", EntryKind::Function, None).unwrap();
    let got: Vec<String> = enumerate_usages(&sig).into_iter().map(|u| u.code).collect();
    assert_eq!(
        got,
        [
            "g(x)",
            "g(x, a=a)",
            "g(x, b=b)",
            "g(x, c=c)",
            "g(x, d=d)",
            "g(x, a=a, b=b)",
            "g(x, a=a, c=c)",
            "g(x, a=a, d=d)",
            "g(x, b=b, c=c)",
            "g(x, b=b, d=d)",
        ]
    );
}

#[test]
fn deque_worked_example() {
    let sig = parse_signature(
        "collections.deque([iterable[, maxlen]])",
        EntryKind::Constructor,
        None,
    )
    .unwrap();
    let got: Vec<String> = enumerate_usages(&sig)
        .iter()
        .map(|u| render_usage(&sig, u).unwrap())
        .collect();
    assert_eq!(
        got,
        [
            "d = collections.deque()",
            "d = collections.deque(iterable)",
            "d = collections.deque(iterable, maxlen)",
        ]
    );
}

#[test]
fn nlargest_worked_example() {
    let sig = parse_signature(
        "heapq.nlargest(n, iterable, key=None)",
        EntryKind::Function,
        None,
    )
    .unwrap();
    let got: Vec<String> = enumerate_usages(&sig).into_iter().map(|u| u.code).collect();
    assert_eq!(
        got,
        [
            "heapq.nlargest(n, iterable)",
            "heapq.nlargest(n, iterable, key=key)"
        ]
    );
}
