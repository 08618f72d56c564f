use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::testutil::random_graph;

fn toy() -> Graph {
    let x = Tensor::matrix(3, 2, vec![0.5, -1.25, 3.0, 1e-17, -0.1, 7.0]).unwrap();
    let g = Graph::from_edge_list(3, &[(0, 1), (1, 2)], x, Labels::single(vec![0, 1, 1])).unwrap();
    let split = SplitMasks::from_indices(3, &[0], &[1], &[2]).unwrap();
    g.with_split(split).unwrap()
}

fn write_files(dir: &Path, files: &[(&str, &str)]) {
    for (name, text) in files {
        fs::write(dir.join(name), text).unwrap();
    }
}

fn parse_line(e: Error) -> (String, usize) {
    match e {
        Error::Parse { path, line, .. } => (
            path.file_name().unwrap().to_string_lossy().into_owned(),
            line,
        ),
        other => panic!("expected a parse error, got {other}"),
    }
}

#[test]
fn toy_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let g = toy();
    export_dataset(&g, dir.path()).unwrap();
    let back = ingest_dataset(dir.path(), &IngestOptions::default()).unwrap();
    assert_eq!(back, g);

    let again = tempfile::tempdir().unwrap();
    export_dataset(&back, again.path()).unwrap();
    for f in [EDGES_FILE, FEATURES_FILE, LABELS_FILE, SPLIT_FILE] {
        assert_eq!(
            fs::read(dir.path().join(f)).unwrap(),
            fs::read(again.path().join(f)).unwrap(),
            "{f} differs"
        );
    }
}

#[test]
fn duplicate_and_reversed_edges_collapse() {
    let dir = tempfile::tempdir().unwrap();
    write_files(
        dir.path(),
        &[
            (EDGES_FILE, "0 1\n1\t0\n0 1\n\n# comment\n1 2\n"),
            (FEATURES_FILE, "1,2\n3,4\n5,6\n"),
            (LABELS_FILE, "0 0\n1 1\n2 0\n"),
            (SPLIT_FILE, "0 train\n1 val\n2 test\n"),
        ],
    );
    let g = ingest_dataset(dir.path(), &IngestOptions::default()).unwrap();
    assert_eq!(g.num_edges(), 2);
    assert_eq!(g.to_edge_list(), vec![(0, 1), (1, 2)]);
    assert_eq!(g.num_classes(), 2);
}

#[test]
fn malformed_lines_report_their_numbers() {
    let good = [
        (EDGES_FILE, "0 1\n"),
        (FEATURES_FILE, "1,2\n3,4\n"),
        (LABELS_FILE, "0 0\n1 1\n"),
    ];
    let cases: &[(&str, &str, usize)] = &[
        (EDGES_FILE, "0 1\n\n1 x\n", 3),
        (EDGES_FILE, "0 1 2\n", 1),
        (EDGES_FILE, "0 5\n", 1),
        (FEATURES_FILE, "1,2\n3\n", 2),
        (FEATURES_FILE, "1,2\nfoo,4\n", 2),
        (LABELS_FILE, "0 0\n1 -1\n", 2),
        (LABELS_FILE, "0 0\n0 1\n", 2),
    ];
    for &(file, text, line) in cases {
        let dir = tempfile::tempdir().unwrap();
        write_files(dir.path(), &good);
        write_files(dir.path(), &[(file, text)]);
        let err = ingest_dataset(dir.path(), &IngestOptions::default()).unwrap_err();
        assert_eq!(parse_line(err), (file.to_string(), line), "{file}: {text:?}");
    }
}

#[test]
fn class_ids_must_fit_the_declared_count() {
    let dir = tempfile::tempdir().unwrap();
    write_files(
        dir.path(),
        &[
            (EDGES_FILE, "0 1\n"),
            (FEATURES_FILE, "1\n2\n"),
            (LABELS_FILE, "0 0\n1 3\n"),
        ],
    );
    let opts = IngestOptions {
        num_classes: Some(3),
        ..IngestOptions::default()
    };
    assert_eq!(
        parse_line(ingest_dataset(dir.path(), &opts).unwrap_err()),
        (LABELS_FILE.to_string(), 2)
    );
    write_files(dir.path(), &[(LABELS_FILE, "# classes 3\n0 0\n1 3\n")]);
    assert_eq!(
        parse_line(ingest_dataset(dir.path(), &IngestOptions::default()).unwrap_err()),
        (LABELS_FILE.to_string(), 3)
    );
}

#[test]
fn missing_inputs() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(
        ingest_dataset(&dir.path().join("absent"), &IngestOptions::default()),
        Err(Error::Io { .. })
    ));
    write_files(
        dir.path(),
        &[
            (EDGES_FILE, "0 1\n"),
            (FEATURES_FILE, "1\n2\n3\n"),
            (LABELS_FILE, "0 0\n1 1\n"),
        ],
    );
    assert!(matches!(
        ingest_dataset(dir.path(), &IngestOptions::default()),
        Err(Error::Structural(_))
    ));
    write_files(
        dir.path(),
        &[
            (LABELS_FILE, "0 0\n1 1\n2 1\n"),
            (SPLIT_FILE, "0 train\n1 holdout\n"),
        ],
    );
    assert_eq!(
        parse_line(ingest_dataset(dir.path(), &IngestOptions::default()).unwrap_err()),
        (SPLIT_FILE.to_string(), 2)
    );
}

#[test]
fn multi_label_round_trip_keeps_small_sets() {
    let dir = tempfile::tempdir().unwrap();
    let x = Tensor::matrix(4, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
    let labels = Labels::multi(vec![vec![0, 2], vec![1], vec![], vec![2, 1, 2]], 4);
    let g = Graph::from_edge_list(4, &[(0, 1), (2, 3), (3, 3)], x, labels)
        .unwrap()
        .with_split(SplitMasks::from_indices(4, &[0, 1], &[2], &[3]).unwrap())
        .unwrap();
    export_dataset(&g, dir.path()).unwrap();
    let back = ingest_dataset(dir.path(), &IngestOptions::default()).unwrap();
    assert_eq!(back, g);
    assert!(back.has_edge(3, 3));
}

#[test]
fn generated_split_is_stratified_and_seeded() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let g = random_graph(60, 0.1, 3, 3, &mut rng);
    let dir = tempfile::tempdir().unwrap();
    export_dataset(&g, dir.path()).unwrap();
    assert!(!dir.path().join(SPLIT_FILE).exists());
    let opts = IngestOptions {
        split_seed: 9,
        split: SplitSizes {
            train_per_class: 2,
            val: 10,
            test: 20,
        },
        num_classes: None,
    };
    let a = ingest_dataset(dir.path(), &opts).unwrap();
    let b = ingest_dataset(dir.path(), &opts).unwrap();
    assert_eq!(a.split(), b.split());
    let train = a.split().train_indices();
    assert_eq!(train.len(), 6);
    let classes = a.labels().single_classes().unwrap();
    for c in 0..3 {
        assert_eq!(train.iter().filter(|&&v| classes[v] == c).count(), 2);
    }
    assert_eq!(a.split().val_indices().len(), 10);
    assert_eq!(a.split().test_indices().len(), 20);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn ingest_export_ingest_is_a_fixed_point(seed in 0u64..10_000, n in 2usize..30, f in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_graph(n, 0.2, f, 3, &mut rng);
        let train: Vec<usize> = (0..n).step_by(3).collect();
        let g = g.with_split(SplitMasks::from_indices(n, &train, &[1], &[]).unwrap()).unwrap();
        let a = tempfile::tempdir().unwrap();
        export_dataset(&g, a.path()).unwrap();
        let first = ingest_dataset(a.path(), &IngestOptions::default()).unwrap();
        prop_assert_eq!(&first, &g);
        let b = tempfile::tempdir().unwrap();
        export_dataset(&first, b.path()).unwrap();
        let second = ingest_dataset(b.path(), &IngestOptions::default()).unwrap();
        prop_assert_eq!(second, first);
    }
}
