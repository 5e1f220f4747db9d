#![allow(dead_code)]

use std::sync::OnceLock;

use sqlion::dataset::{build_dataset, generate_corpus, CorpusKind, CorpusSpec};
use sqlion::features::TokenDictionary;
use sqlion::ml::{
    split, train_nb, train_tree, LabeledDataset, TrainedModel, DEFAULT_ALPHA, DEFAULT_MAX_DEPTH,
};
use sqlion::normalize::RawQuery;

pub const FIXTURE_MALICIOUS: usize = 10_000;
pub const FIXTURE_LEGITIMATE: usize = 2_500;
pub const FIXTURE_SEED: u64 = 1;
pub const TEST_FRACTION: f64 = 0.3;

/// The seeded fixture pipeline: corpora, dataset, split and both models.
pub struct Fixture {
    pub malicious: Vec<RawQuery>,
    pub legitimate: Vec<RawQuery>,
    pub dict: TokenDictionary,
    pub data: LabeledDataset,
    pub train: LabeledDataset,
    pub test: LabeledDataset,
    pub nb: TrainedModel,
    pub tree: TrainedModel,
}

pub fn fixture() -> &'static Fixture {
    static FIXTURE: OnceLock<Fixture> = OnceLock::new();
    FIXTURE.get_or_init(|| {
        let malicious = generate_corpus(&CorpusSpec {
            kind: CorpusKind::Malicious,
            count: FIXTURE_MALICIOUS,
            seed: FIXTURE_SEED,
        });
        let legitimate = generate_corpus(&CorpusSpec {
            kind: CorpusKind::Legitimate,
            count: FIXTURE_LEGITIMATE,
            seed: FIXTURE_SEED,
        });
        let dict = TokenDictionary::default_dictionary();
        let data = build_dataset(&malicious, &legitimate, &dict, false);
        let (train, test) = split(&data, TEST_FRACTION, FIXTURE_SEED).unwrap();
        let nb = train_nb(&train, DEFAULT_ALPHA).unwrap().into();
        let tree = train_tree(&train, DEFAULT_MAX_DEPTH).unwrap().into();
        Fixture {
            malicious,
            legitimate,
            dict,
            data,
            train,
            test,
            nb,
            tree,
        }
    })
}
pub mod oracles;
pub mod toys;

use rand::seq::SliceRandom;
use rand::Rng;

const FRAGMENTS: &[&str] = &[
    "union",
    "select",
    "union select",
    "all",
    "or",
    "and",
    "=",
    "where",
    "from",
    "as",
    "like",
    "chr",
    "null",
    "order by",
    "group",
    "by",
    "sleep",
    "drop",
    "table",
    "'",
    "\"",
    "0x",
    "\\x",
    "/*",
    "*/",
    "/",
    "*",
    "-",
    "--",
    "#",
    ";",
    "%",
    "%27",
    "%2",
    "%3D",
    "&#39;",
    "&quot;",
    "&lt;",
    "&",
    " ",
    "  ",
    "\t",
    "\n",
    "1",
    "23",
    "456",
    "0",
    "(",
    ")",
    ".",
    ",",
    "+",
    "<",
    ">",
    "a",
    "x",
    "X",
    "UNION",
    "SeLeCt",
    "Or",
];

/// Up to 64 bytes: half uniformly random, half spliced from pattern-ish
/// fragments so that overlaps and near-misses are common.
pub fn random_query<R: Rng>(rng: &mut R) -> Vec<u8> {
    let target = rng.gen_range(0..=64usize);
    let mut out = Vec::with_capacity(target);
    if rng.gen_bool(0.5) {
        out.extend((0..target).map(|_| rng.gen::<u8>()));
    } else {
        while out.len() < target {
            out.extend_from_slice(FRAGMENTS.choose(rng).unwrap().as_bytes());
        }
        out.truncate(target);
    }
    out
}

/// Write → read → write for every persisted artifact of the fixture.
/// Returns one message per artifact whose second write differs from the first
/// or whose reloaded value differs from the original.
pub fn roundtrip_failures(f: &Fixture) -> Vec<String> {
    use sqlion::dataset::{read_corpus, read_dataset, write_corpus, write_dataset};
    use sqlion::ml::{read_model, write_model};

    let mut failures = Vec::new();

    let mut first = Vec::new();
    write_dataset(&f.data, &mut first).unwrap();
    let back = read_dataset(first.as_slice()).unwrap();
    let mut second = Vec::new();
    write_dataset(&back, &mut second).unwrap();
    if first != second || back != f.data {
        failures.push("dataset".to_string());
    }

    for (name, model) in [("nb model", &f.nb), ("tree model", &f.tree)] {
        let mut first = Vec::new();
        write_model(model, &mut first).unwrap();
        let back = read_model(first.as_slice()).unwrap();
        let mut second = Vec::new();
        write_model(&back, &mut second).unwrap();
        if first != second || &back != model {
            failures.push(name.to_string());
        }
    }

    let text = f.dict.to_text();
    let back = TokenDictionary::from_text(&text).unwrap();
    if back.to_text() != text {
        failures.push("dictionary".to_string());
    }

    let mut first = Vec::new();
    write_corpus(&f.malicious, &mut first).unwrap();
    let back = read_corpus(first.as_slice(), "x").unwrap();
    let mut second = Vec::new();
    write_corpus(&back, &mut second).unwrap();
    let same = back.len() == f.malicious.len()
        && back.iter().zip(&f.malicious).all(|(a, b)| a.text == b.text);
    if first != second || !same {
        failures.push("corpus".to_string());
    }
    failures
}
