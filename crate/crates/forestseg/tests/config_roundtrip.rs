use forestseg::config::{parse_assignment, Config, Preset};
use proptest::prelude::*;

#[test]
fn presets_serialize_to_golden_files() {
    assert_eq!(Config::preset(Preset::Tls).to_text(), include_str!("golden/tls.conf"));
    assert_eq!(Config::preset(Preset::Uls).to_text(), include_str!("golden/uls.conf"));
}

#[test]
fn golden_files_parse_back_to_presets() {
    for (preset, text) in [
        (Preset::Tls, include_str!("golden/tls.conf")),
        (Preset::Uls, include_str!("golden/uls.conf")),
    ] {
        assert_eq!(Config::from_text(text).unwrap(), Config::preset(preset));
    }
}

#[test]
fn unknown_keys_and_ellipses_are_rejected() {
    assert!(Config::from_text("stems.eps_two = 1\n").is_err());
    assert!(Config::from_text("stems.ellipse_fitting = true\n").is_err());
    assert!(parse_assignment("no_equals_sign").is_err());
}

fn overrides() -> impl Strategy<Value = Vec<(String, String)>> {
    (
        any::<u64>(),
        0.01f64..0.2,
        1usize..40,
        0.005f64..0.1,
        proptest::option::of(0.0f64..60000.0),
        0.1f64..2.0,
        0.5f64..3.0,
        1usize..30,
        prop::bool::ANY,
        prop_oneof![Just("gradient"), Just("ransac")],
    )
        .prop_map(|(seed, eps, pts, bw, intensity, z_scale, power, k, refine, method)| {
            vec![
                ("seed".into(), seed.to_string()),
                ("stems.eps_2d".into(), eps.to_string()),
                ("stems.min_pts_2d".into(), pts.to_string()),
                ("stems.bandwidth".into(), bw.to_string()),
                ("stems.min_intensity".into(), intensity.map_or("none".into(), |v| v.to_string())),
                ("crown.z_scale".into(), z_scale.to_string()),
                ("dtm.power".into(), power.to_string()),
                ("dtm.k".into(), k.to_string()),
                ("stems.refine_circles".into(), refine.to_string()),
                ("stems.circle_method".into(), method.to_string()),
            ]
        })
}

proptest! {
    #[test]
    fn text_form_round_trips(uls in prop::bool::ANY, sets in overrides()) {
        let preset = if uls { Preset::Uls } else { Preset::Tls };
        let config = Config::resolve(Some(preset), None, &sets, None).unwrap();
        let text = config.to_text();
        let back = Config::from_text(&text).unwrap();
        prop_assert_eq!(&back, &config);
        prop_assert_eq!(back.to_text(), text);
    }

    #[test]
    fn later_sources_win(file_eps in 0.01f64..0.2, set_eps in 0.01f64..0.2, seed in any::<u64>()) {
        let file = format!("stems.eps_2d = {file_eps}\nseed = 1\n");
        let from_file = Config::resolve(None, Some(&file), &[], None).unwrap();
        prop_assert_eq!(from_file.stems.eps_2d, file_eps);
        let sets = vec![("stems.eps_2d".to_string(), set_eps.to_string())];
        let config = Config::resolve(None, Some(&file), &sets, Some(seed)).unwrap();
        prop_assert_eq!(config.stems.eps_2d, set_eps);
        prop_assert_eq!(config.seed(), seed);
    }
}
