mod common;

use mfcache::scenario::{load_scenario, load_scenario_with, PopularityKind, Scenario, Variability};
use mfcache::Error;

#[test]
fn shipped_scenarios_load() {
    for name in ["fig2.scenario", "fig3_lvp.scenario", "fig3_svp.scenario"] {
        let sc = common::shipped(name);
        assert_eq!(format!("{}.scenario", sc.id), name);
    }
}

#[test]
fn fig2_two_files_with_crossing_popularity() {
    let sc = common::shipped("fig2.scenario");
    assert_eq!(sc.num_files(), 2);
    assert_eq!(sc.storage.capacity, 0.4);
    assert_eq!(sc.popularity.kind, PopularityKind::PiecewiseLinear);
    let start = sc.popularity_vector(0.0).unwrap();
    let end = sc.popularity_vector(sc.horizon_hours).unwrap();
    assert!(start[0] < start[1] && end[0] > end[1]);
}

#[test]
fn fig3_regimes_are_labelled() {
    let lvp = common::shipped("fig3_lvp.scenario");
    let svp = common::shipped("fig3_svp.scenario");
    assert_eq!(lvp.popularity.variability, Some(Variability::Large));
    assert_eq!(svp.popularity.variability, Some(Variability::Small));
    for sc in [&lvp, &svp] {
        assert_eq!(sc.num_files(), 4);
        assert_eq!(sc.sim.spacings, vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        assert!(sc.sim.num_seeds >= 5);
    }
    // The most popular file changes under LVP; under SVP file 1 always leads.
    let leader = |sc: &Scenario, t: f64| {
        let p = sc.popularity_vector(t).unwrap();
        (0..p.len()).max_by(|&a, &b| p[a].total_cmp(&p[b])).unwrap()
    };
    let lvp_leaders: std::collections::BTreeSet<usize> =
        (0..24).map(|h| leader(&lvp, h as f64)).collect();
    assert_eq!(lvp_leaders.len(), 4);
    assert!((0..24).all(|h| leader(&svp, h as f64) == 0));
}

#[test]
fn toml_round_trip_is_lossless() {
    for name in ["fig2.scenario", "fig3_lvp.scenario", "fig3_svp.scenario"] {
        let sc = common::shipped(name);
        let again = Scenario::from_toml_str(&sc.to_toml_string(), &[]).unwrap();
        assert_eq!(sc, again);
    }
}

#[test]
fn overrides_take_dotted_paths() {
    let sc = load_scenario_with(
        common::scenario_path("fig2.scenario"),
        &[
            "storage.capacity=0.3".into(),
            "sim.seed=9".into(),
            "popularity.kind=\"static-zipf\"".into(),
        ],
    )
    .unwrap();
    assert_eq!(sc.storage.capacity, 0.3);
    assert_eq!(sc.sim.seed, 9);
    assert_eq!(sc.popularity.kind, PopularityKind::StaticZipf);
}

#[test]
fn invalid_values_name_the_key() {
    let err = Scenario::from_toml_str(common::SMALL, &["storage.capacity=-1".into()]).unwrap_err();
    assert!(
        matches!(err, Error::Invalid { ref key, .. } if key == "storage.capacity"),
        "{err}"
    );

    let no_files = common::SMALL.replace(
        "[[files]]\nid = 1\nsize_bits = 1.0\n\n[[files]]\nid = 2\nsize_bits = 1.0\n",
        "",
    );
    let err = Scenario::from_toml_str(&no_files, &[]).unwrap_err();
    assert!(
        matches!(err, Error::Invalid { ref key, .. } if key == "files"),
        "{err}"
    );

    let err = Scenario::from_toml_str(common::SMALL, &["sim.time_stride=0".into()]).unwrap_err();
    assert!(matches!(err, Error::Invalid { .. }), "{err}");
}

#[test]
fn malformed_input_is_a_parse_error() {
    assert!(matches!(
        Scenario::from_toml_str("horizon_hours = [", &[]),
        Err(Error::Parse(_))
    ));
    assert!(matches!(
        Scenario::from_toml_str(common::SMALL, &["storage.colour=1".into()]),
        Err(Error::Parse(_))
    ));
    assert!(matches!(
        Scenario::from_toml_str(common::SMALL, &["no_equals".into()]),
        Err(Error::Parse(_))
    ));
}

#[test]
fn missing_file_is_an_io_error() {
    assert!(matches!(
        load_scenario("/nonexistent/x.scenario"),
        Err(Error::Io { .. })
    ));
}
