#![allow(dead_code)]

use std::path::PathBuf;

use indexrag_core::eval::{load_dataset, EvalQuestion};
use indexrag_core::knowledge::read_corpus;
use indexrag_core::{Document, Gateway, MockModel, MockScript};

pub const AYLWIN_QUESTION: &str = "Where was the director of the film Aylwin born?";
pub const AYLWIN_BRIDGE: &str = "The director of the film Aylwin was born in Weston-super-Mare.";

pub fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/aylwin")
}

pub fn aylwin_corpus() -> Vec<Document> {
    read_corpus(&fixture_dir().join("corpus.jsonl")).expect("fixture corpus")
}

pub fn aylwin_script() -> MockScript {
    MockScript::load(&fixture_dir().join("mock_script.json")).expect("fixture script")
}

pub fn aylwin_dataset() -> Vec<EvalQuestion> {
    load_dataset(&fixture_dir().join("dataset.jsonl")).expect("fixture dataset")
}

pub fn aylwin_gateway() -> (Gateway, MockModel) {
    let model = MockModel::new(aylwin_script()).expect("valid script");
    (Gateway::mock(model.clone()), model)
}
