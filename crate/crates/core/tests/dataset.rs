use proptest::prelude::*;

use sacf_core::io::{load_dataset_dir, save_dataset_dir, LoadOptions};
use sacf_core::synth::REFERENCE_SPLIT;
use sacf_core::{make_dataset, oracle_gate, point_in_union, Category, GenConfig, Split};

#[test]
fn default_generator_matches_reference_shape() {
    let cfg = GenConfig::default();
    let ds = make_dataset(&cfg).unwrap();
    ds.validate().unwrap();
    let n = ds.len() as f64;
    let counts = &ds.metadata.categories;
    let face = counts.get(Category::Face) as f64 / n;
    assert!((face - 0.066).abs() <= 0.005, "face share {face}");
    let obj = counts.get(Category::Object) as f64 / n;
    let pnf = counts.get(Category::PersonNonFace) as f64 / n;
    assert!((obj - 0.85).abs() <= 0.01, "object share {obj}");
    assert!((pnf - 0.084).abs() <= 0.01, "person share {pnf}");
    let sizes = Split::ALL.map(|s| ds.split(s).len());
    assert_eq!(sizes, REFERENCE_SPLIT);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn generated_labels_are_consistent(seed in any::<u64>(), face in 0.0..=1.0f64) {
        let mut cfg = GenConfig { n_frames: 40, seed, ..Default::default() };
        let rest = 1.0 - face;
        cfg.category_prior.face = face;
        cfg.category_prior.object = rest / 2.0;
        cfg.category_prior.person_non_face = rest / 2.0;
        let ds = make_dataset(&cfg).unwrap();
        ds.validate().unwrap();
        for a in &ds.annotations {
            let on_face = point_in_union(a.target_point, &a.adult_faces);
            prop_assert_eq!(a.target_category == Category::Face, on_face, "{}", a.frame_id);
            prop_assert_eq!(oracle_gate(a).unwrap(), u8::from(on_face));
            let tb = a.target_box.unwrap();
            prop_assert!(tb.contains(a.target_point));
        }
    }

    #[test]
    fn dataset_survives_a_directory_round_trip(seed in any::<u64>()) {
        let cfg = GenConfig { n_frames: 30, seed, ..Default::default() };
        let ds = make_dataset(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_dataset_dir(&ds, dir.path()).unwrap();
        let back = load_dataset_dir(dir.path(), &LoadOptions::default()).unwrap();
        for s in Split::ALL {
            prop_assert_eq!(back.split(s), ds.split(s));
        }
        prop_assert_eq!(&back.metadata, &ds.metadata);
        prop_assert_eq!(make_dataset(&cfg).unwrap(), ds);
    }
}
