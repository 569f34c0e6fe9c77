//! Fixture files used by the acceptance suite.
//!
//! `fixtures_match_generator` guards the committed files against drift; the
//! ignored `regenerate_fixtures` test rewrites them:
//!
//! ```text
//! cargo test -p twodpo-core --test fixtures_gen regenerate_fixtures -- --ignored
//! ```

use std::path::PathBuf;

use twodpo_core::dataset::write_dataset;
use twodpo_core::synthetic;

fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn train_config() -> synthetic::SyntheticConfig {
    synthetic::SyntheticConfig {
        pairs: 200,
        seed: 0,
        ..synthetic::SyntheticConfig::default()
    }
}

pub fn heldout_config() -> synthetic::SyntheticConfig {
    synthetic::SyntheticConfig {
        pairs: 40,
        seed: 1,
        ..synthetic::SyntheticConfig::default()
    }
}

fn render(pairs: &[twodpo_core::PreferencePair]) -> Vec<u8> {
    let mut buf = Vec::new();
    write_dataset(&mut buf, pairs).expect("in-memory write");
    buf
}

fn render_vocab() -> Vec<u8> {
    let mut buf = Vec::new();
    synthetic::vocab().save(&mut buf).expect("in-memory write");
    buf
}

#[test]
#[ignore]
fn regenerate_fixtures() {
    let dir = fixtures_dir();
    std::fs::create_dir_all(&dir).unwrap();
    std::fs::write(dir.join("train.jsonl"), render(&synthetic::generate(&train_config()))).unwrap();
    std::fs::write(
        dir.join("heldout.jsonl"),
        render(&synthetic::generate(&heldout_config())),
    )
    .unwrap();
    std::fs::write(dir.join("vocab.txt"), render_vocab()).unwrap();
}

#[test]
fn fixtures_match_generator() {
    let dir = fixtures_dir();
    let cases = [
        ("train.jsonl", render(&synthetic::generate(&train_config()))),
        ("heldout.jsonl", render(&synthetic::generate(&heldout_config()))),
        ("vocab.txt", render_vocab()),
    ];
    for (name, expected) in cases {
        let on_disk = std::fs::read(dir.join(name))
            .unwrap_or_else(|_| panic!("{name} missing; run the regenerate_fixtures test"));
        assert_eq!(
            on_disk, expected,
            "{name} drifted from the generator; rerun regenerate_fixtures"
        );
    }
}
