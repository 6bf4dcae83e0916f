use nalgebra::DMatrix;
use oosr2::data::{load_csv, write_csv, OutcomeColumn};
use oosr2::Dataset;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn written_datasets_load_back_exactly(
        n in 3usize..30,
        p in 0usize..5,
        seed in proptest::collection::vec(-1e6f64..1e6, 150),
    ) {
        let y: Vec<f64> = seed[..n].to_vec();
        let x = DMatrix::from_fn(n, p, |i, j| seed[(n + i * p + j) % seed.len()] / 7.0);
        let d = Dataset::new(y, x, None).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        write_csv(&d, &path, "target").unwrap();
        let back = load_csv(&path, &OutcomeColumn::Name("target".into()), b',').unwrap();
        prop_assert_eq!(back.y(), d.y());
        prop_assert_eq!(back.x(), d.x());
    }
}
