use chanfsl_core::io::{
    decode_features_binary, encode_features_binary, features_to_csv, load_features, load_features_binary,
    load_features_csv, parse_features_csv, save_features_binary, save_features_csv,
};
use chanfsl_core::rng::CounterRng;
use chanfsl_core::{ClassSamples, EmbeddingDataset, FeatureVector};

/// Random dataset whose values are exactly representable as `f32`, so both
/// file formats hold it losslessly.
fn random_dataset(seed: u64) -> EmbeddingDataset {
    let mut rng = CounterRng::new(seed, 0);
    let d = 1 + rng.below(12) as usize;
    let classes = 1 + rng.below(6) as usize;
    let signed = rng.next_f64() < 0.3;
    let names = ["a", "b_2", "cat", "δόγμα", "x-y.z", "日本"];
    let classes = (0..classes)
        .map(|c| {
            let n = 1 + rng.below(9) as usize;
            ClassSamples {
                name: format!("{}{c}", names[c]),
                vectors: (0..n)
                    .map(|_| {
                        let values = (0..d)
                            .map(|_| {
                                let scale = 10f64.powf(rng.uniform(-6.0, 3.0));
                                let x = if signed { rng.uniform(-1.0, 1.0) } else { rng.next_f64() };
                                (x * scale) as f32 as f64
                            })
                            .collect();
                        FeatureVector::new(values).unwrap()
                    })
                    .collect(),
            }
        })
        .collect();
    EmbeddingDataset::new(d, classes).unwrap()
}

#[test]
fn csv_round_trip_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    for seed in 0..100 {
        let ds = random_dataset(seed);
        let first = dir.path().join(format!("{seed}.csv"));
        let second = dir.path().join(format!("{seed}-again.csv"));
        save_features_csv(&ds, &first).unwrap();
        let loaded = load_features_csv(&first).unwrap();
        assert_eq!(loaded, ds, "seed {seed}");
        assert_eq!(loaded.num_vectors(), ds.num_vectors());
        save_features_csv(&loaded, &second).unwrap();
        assert_eq!(std::fs::read(&first).unwrap(), std::fs::read(&second).unwrap(), "seed {seed}");
    }
}

#[test]
fn binary_and_csv_load_to_equal_datasets() {
    let dir = tempfile::tempdir().unwrap();
    for seed in 100..200 {
        let ds = random_dataset(seed);
        let csv = dir.path().join("f.csv");
        let bin = dir.path().join("f.bin");
        save_features_csv(&ds, &csv).unwrap();
        save_features_binary(&ds, &bin).unwrap();
        let from_csv = load_features_csv(&csv).unwrap();
        let from_bin = load_features_binary(&bin).unwrap();
        assert_eq!(from_csv, from_bin, "seed {seed}");
        assert_eq!(load_features(&bin).unwrap(), from_bin);
        assert_eq!(load_features(&csv).unwrap(), from_csv);
        assert_eq!(from_bin.non_negative(), ds.non_negative());
    }
}

#[test]
fn non_negative_flag_is_the_minimum_predicate() {
    for seed in 200..260 {
        let ds = random_dataset(seed);
        let min = ds
            .iter_vectors()
            .flat_map(|(_, v)| v.iter().copied())
            .fold(f64::INFINITY, f64::min);
        let reparsed = parse_features_csv(&features_to_csv(&ds), "mem").unwrap();
        assert_eq!(reparsed.non_negative(), min >= 0.0);
    }
}

#[test]
fn binary_encoding_is_stable() {
    let ds = random_dataset(7);
    let bytes = encode_features_binary(&ds).unwrap();
    assert_eq!(encode_features_binary(&decode_features_binary(&bytes).unwrap()).unwrap(), bytes);
}

#[test]
fn missing_file_reports_path() {
    let err = load_features_csv("/nonexistent/dir/features.csv").unwrap_err();
    assert!(err.to_string().contains("/nonexistent/dir/features.csv"), "{err}");
}
