use medq_core::{extract_answer, render_prompt, QaPair};

const FIXTURES: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures");

#[test]
fn prompt_matches_golden_file() {
    let pair: QaPair =
        serde_json::from_str(&std::fs::read_to_string(format!("{FIXTURES}/prompt_pair.json")).unwrap()).unwrap();
    let golden = std::fs::read_to_string(format!("{FIXTURES}/prompt_golden.txt")).unwrap();
    assert_eq!(render_prompt(&pair).unwrap(), golden);
}

#[test]
fn fixture_answer_round_trip() {
    let pair: QaPair =
        serde_json::from_str(&std::fs::read_to_string(format!("{FIXTURES}/prompt_pair.json")).unwrap()).unwrap();
    pair.validate().unwrap();
    assert_eq!(extract_answer(&pair.answer, pair.options.len()), Some('C'));
}
