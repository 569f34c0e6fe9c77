//! Golden-corpus segmentation cases, written against the splitting rules
//! before the implementation.

use serde::Deserialize;

use twodpo_core::segmenter::segment_response;

#[derive(Deserialize)]
struct GoldenCase {
    name: String,
    input: String,
    expected: Vec<(String, String)>,
}

#[test]
fn golden_corpus() {
    let path = std::path::PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures/segmentation_golden.jsonl");
    let text = std::fs::read_to_string(path).unwrap();
    let mut count = 0;
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let case: GoldenCase = serde_json::from_str(line).unwrap();
        let got = segment_response(&case.input).unwrap();
        let got_pairs: Vec<(String, String)> = got
            .iter()
            .map(|s| (s.text.clone(), s.sep.clone()))
            .collect();
        assert_eq!(got_pairs, case.expected, "case {}", case.name);
        // Reconstruction is byte-exact for every case.
        let rebuilt: String = got.iter().map(|s| format!("{}{}", s.text, s.sep)).collect();
        assert_eq!(rebuilt, case.input, "case {} reconstruction", case.name);
        count += 1;
    }
    assert!(count >= 30, "golden corpus shrank to {count} cases");
}
