use ndarray::Array3;
use proptest::prelude::*;

use rtex::quant::{
    ccc, flow_metrics, function_params, nmae, percentile, repeatability_report, ventricular_volumes, AnalysisMode,
    QuantReport, Vessel,
};
use rtex::ImageSeries;

fn disc_masks(radii: &[f64], n: usize, slices: usize) -> Vec<Array3<bool>> {
    (0..slices)
        .map(|_| {
            Array3::from_shape_fn((radii.len(), n, n), |(f, y, x)| {
                let (dy, dx) = (y as f64 - n as f64 / 2.0, x as f64 - n as f64 / 2.0);
                dy * dy + dx * dx <= radii[f] * radii[f]
            })
        })
        .collect()
}

#[test]
fn volumes_pick_extremes_of_the_beat() {
    let masks = disc_masks(&[10.0, 14.0, 12.0, 8.0, 9.0], 40, 4);
    let v = ventricular_volumes(&masks, 0..5, 6.0, 1.0).unwrap();
    assert_eq!((v.ed_frame, v.es_frame), (1, 3));
    assert!(v.edv_ml > v.esv_ml);
    let restricted = ventricular_volumes(&masks, 2..5, 6.0, 1.0).unwrap();
    assert_eq!(restricted.ed_frame, 2);
    assert!(ventricular_volumes(&masks[..2], 0..5, 6.0, 1.0).is_err());
    assert!(ventricular_volumes(&masks, 3..3, 6.0, 1.0).is_err());
}

#[test]
fn stroke_volume_equals_net_forward_flow() {
    let n = 32;
    let frames = 20;
    let mask = Array3::from_shape_fn((frames, n, n), |(_, y, x)| {
        let (dy, dx) = (y as f64 - 16.0, x as f64 - 16.0);
        dy * dy + dx * dx <= 25.0
    });
    let vel = Array3::from_shape_fn((frames, n, n), |(f, _, _)| 50.0 * (std::f64::consts::PI * f as f64 / 10.0).sin().max(0.0));
    let img = ImageSeries::new(vel, 2.0, 50.0);
    let p = flow_metrics(&img, &mask, 0..20, 60.0, Vessel::AAo, 150.0).unwrap();
    assert_eq!(p.sv_ml, p.nff_ml);
    assert!(p.vmax_cm_s >= 0.0 && p.vmax_cm_s <= 50.0);
    let area_cm2 = mask.index_axis(ndarray::Axis(0), 0).iter().filter(|&&m| m).count() as f64 * 0.04;
    let oracle: f64 = (0..20).map(|f| 50.0 * (std::f64::consts::PI * f as f64 / 10.0).sin().max(0.0)).sum::<f64>() * area_cm2 * 0.05;
    assert!((p.nff_ml - oracle).abs() < 1e-9 * oracle, "{} vs {oracle}", p.nff_ml);
}

#[test]
fn percentile_interpolates() {
    let mut v = vec![4.0, 1.0, 3.0, 2.0, 5.0];
    assert_eq!(percentile(&mut v, 50.0), 3.0);
    assert_eq!(percentile(&mut v, 100.0), 5.0);
    assert!((percentile(&mut v, 95.0) - 4.8).abs() < 1e-12);
}

#[test]
fn repeatability_matches_pairwise_nmae() {
    let mut r1 = QuantReport::default();
    let mut r2 = QuantReport::default();
    let values = [(100.0, 104.0), (120.0, 118.0), (90.0, 99.0)];
    for (i, &(a, b)) in values.iter().enumerate() {
        let s = format!("s{i:02}");
        r1.push_all(&s, 0, "rest", AnalysisMode::Ee, &[("LVEDV".into(), a)]);
        r2.push_all(&s, 1, "rest", AnalysisMode::Ee, &[("LVEDV".into(), b)]);
    }
    let stats = repeatability_report(&r1, &r2, AnalysisMode::Ee).unwrap();
    let row = stats.get("LVEDV", "rest", AnalysisMode::Ee).unwrap();
    let want: Vec<f64> = values.iter().map(|&(a, b)| nmae(a, b).unwrap()).collect();
    assert_eq!(row.nmae_percent, want);
    let mut sorted = want.clone();
    sorted.sort_by(f64::total_cmp);
    assert_eq!(row.median_nmae_percent, sorted[1]);
    let a: Vec<f64> = values.iter().map(|v| v.0).collect();
    let b: Vec<f64> = values.iter().map(|v| v.1).collect();
    assert_eq!(row.ccc, Some(ccc(&a, &b).unwrap()));
    assert!(repeatability_report(&r1, &r2, AnalysisMode::Ap).unwrap().rows.is_empty());
}

#[test]
fn degenerate_inputs_are_errors() {
    assert!(nmae(0.0, 0.0).is_err());
    assert!(ccc(&[1.0], &[1.0]).is_err());
    assert!(ccc(&[1.0, 2.0], &[1.0]).is_err());
    assert!(function_params(100.0, 120.0, 60.0).is_err());
    assert!(function_params(100.0, 50.0, 0.0).is_err());
}

proptest! {
    #[test]
    fn function_identities(edv in 1.0f64..400.0, frac in 0.0f64..1.0, hr in 30.0f64..220.0) {
        let esv = edv * frac;
        let p = function_params(edv, esv, hr).unwrap();
        prop_assert!((p.lv.sv_ml - (edv - esv)).abs() < 1e-12);
        prop_assert!((p.lv.ef_percent - 100.0 * p.lv.sv_ml / edv).abs() < 1e-12);
        prop_assert!((p.co_l_min - p.lv.sv_ml * hr / 1000.0).abs() < 1e-12);
        prop_assert!((0.0..=100.0).contains(&p.lv.ef_percent));
    }

    #[test]
    fn nmae_symmetric_nonnegative(a in 0.1f64..500.0, b in 0.1f64..500.0) {
        let x = nmae(a, b).unwrap();
        prop_assert!(x >= 0.0);
        prop_assert_eq!(x, nmae(b, a).unwrap());
        prop_assert_eq!(nmae(a, a).unwrap(), 0.0);
    }

    #[test]
    fn ccc_bounded(v in proptest::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 2..40)) {
        let (a, b): (Vec<f64>, Vec<f64>) = v.into_iter().unzip();
        if let Ok(c) = ccc(&a, &b) {
            prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&c));
        }
        if a.iter().any(|&x| x != a[0]) {
            prop_assert!((ccc(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        }
    }
}
