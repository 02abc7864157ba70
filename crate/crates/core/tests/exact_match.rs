use slorag::corpus::{em_match, normalize_text};

const NORMALIZE: &[(&str, &str)] = &[
    ("The Eiffel Tower!", "eiffel tower"),
    ("", ""),
    ("An  apple,  a day.", "apple day"),
    ("   ", ""),
    ("THE", ""),
    ("a an the", ""),
    ("Theatre", "theatre"),
    ("another", "another"),
    ("U.S.A.", "usa"),
    ("rock-n-roll", "rocknroll"),
    ("  Hello\tWorld\n", "hello world"),
    ("The  cat,the dog", "catthe dog"),
    ("$1,000", "1000"),
    ("\"quoted\"", "quoted"),
    ("(a) b", "b"),
    ("Über Café", "über café"),
    ("1990s", "1990s"),
];

const MATCH: &[(&str, &[&str], bool)] = &[
    ("eiffel tower", &["The Eiffel Tower"], true),
    ("anything", &[], false),
    ("the answer is 42", &["42"], false),
    ("42", &["forty-two", "42."], true),
    ("Paris", &["paris"], true),
    ("PARIS!!!", &["Paris"], true),
    ("a Paris", &["the paris"], true),
    ("Paris France", &["Paris"], false),
    ("", &[""], true),
    ("", &["x"], false),
    ("Denver Broncos", &["Broncos", "the Denver Broncos"], true),
    ("1,000", &["1000"], true),
    ("New-York", &["NewYork"], true),
    ("new york", &["newyork"], false),
];

#[test]
fn normalization_vectors() {
    for (input, expected) in NORMALIZE {
        assert_eq!(normalize_text(input), *expected, "input {input:?}");
    }
}

#[test]
fn match_vectors() {
    assert!(NORMALIZE.len() + MATCH.len() >= 20);
    for (pred, golds, expected) in MATCH {
        assert_eq!(em_match(pred, golds), *expected, "{pred:?} vs {golds:?}");
    }
}

#[test]
fn symmetric_on_single_gold() {
    for (pred, golds, _) in MATCH.iter().filter(|(_, g, _)| g.len() == 1) {
        assert_eq!(em_match(pred, golds), em_match(golds[0], &[*pred]));
    }
}
