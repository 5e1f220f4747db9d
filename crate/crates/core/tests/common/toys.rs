use sqlion::features::FEATURE_COUNT;
use sqlion::labeler::RiskLevel;
use sqlion::ml::{LabeledDataset, Provenance, Sample};

pub fn vector(counts: &[(usize, u32)]) -> [u32; FEATURE_COUNT] {
    let mut c = [0u32; FEATURE_COUNT];
    for &(j, v) in counts {
        c[j] = v;
    }
    c
}

pub fn row(level: u8, counts: &[(usize, u32)]) -> Sample {
    Sample::new(
        vector(counts),
        RiskLevel::new(level).unwrap(),
        Provenance::MaliciousCapture,
    )
}

/// Five rows covering every class.
pub fn nb_toy() -> LabeledDataset {
    LabeledDataset::new(vec![
        row(1, &[]),
        row(2, &[(7, 1), (34, 2)]),
        row(3, &[(4, 1), (39, 3)]),
        row(4, &[(0, 1), (32, 1), (39, 2)]),
        row(4, &[(6, 2), (4, 1), (32, 1), (44, 1)]),
    ])
}

/// Query vectors probed against [`nb_toy`].
pub fn nb_toy_queries() -> Vec<[u32; FEATURE_COUNT]> {
    vec![
        vector(&[]),
        vector(&[(0, 1)]),
        vector(&[(4, 1), (39, 1)]),
        vector(&[(7, 1), (34, 1), (39, 1)]),
        vector(&[(6, 3), (32, 2), (44, 1), (49, 1)]),
    ]
}

/// Eight rows where feature 39 separates 1/2 from 3/4 best, with weaker
/// competing splits on features 4 and 32.
pub fn tree_toy8() -> LabeledDataset {
    LabeledDataset::new(vec![
        row(1, &[]),
        row(1, &[(32, 1)]),
        row(2, &[(39, 1)]),
        row(2, &[(39, 1), (4, 1)]),
        row(3, &[(39, 3), (4, 1)]),
        row(3, &[(39, 4)]),
        row(4, &[(39, 5), (32, 1), (4, 2)]),
        row(4, &[(39, 6), (32, 2)]),
    ])
}

/// Forty rows whose class is a monotone function of feature 17 alone, with
/// a noise feature alongside.
pub fn single_feature_separable() -> LabeledDataset {
    LabeledDataset::new(
        (0..40u32)
            .map(|i| row((i / 10 + 1) as u8, &[(17, i / 10 * 3 + i % 3), (2, i % 7)]))
            .collect(),
    )
}
