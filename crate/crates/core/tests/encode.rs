use ndarray::Array3;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rtex::encode::{
    flow_encode, flow_encode_with, forward, phase_difference, phase_to_velocity, Acquisition, Encoding,
    FlowEncodingSpec, SenseOperator,
};
use rtex::phantom::{coil_maps_synthetic, GridSpec};
use rtex::sampling::{gro_generate, GRO_ALPHA, GRO_S};
use rtex::{ImageSeries, C64};

fn random_image(rng: &mut ChaCha8Rng, dim: (usize, usize, usize)) -> ImageSeries<C64> {
    ImageSeries::new(
        Array3::from_shape_fn(dim, |_| C64::new(rng.random::<f64>(), rng.random::<f64>() - 0.5)),
        2.0,
        40.0,
    )
}

#[test]
fn samples_are_zero_exactly_off_the_mask() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let img = random_image(&mut rng, (6, 64, 64));
    let maps = coil_maps_synthetic(4, GridSpec::new(64, 64, 2.0), 1).unwrap();
    let p = gro_generate(64, 8, 6, GRO_S, GRO_ALPHA).unwrap();
    let k = forward(&img, &maps, &p, Acquisition::new(0.01, 3, 2.6)).unwrap();
    assert_eq!(k.mask(), p.mask());
    for f in 0..6 {
        let dense = k.dense_frame(f);
        for ky in 0..64 {
            let acquired = p.frames[f].contains(&ky);
            let nonzero = (0..4).any(|c| (0..64).any(|kx| dense[[c, ky, kx]].norm() > 0.0));
            assert_eq!(acquired, nonzero, "frame {f} line {ky}");
        }
    }
}

#[test]
fn noise_is_seeded_and_has_requested_power() {
    let img = ImageSeries::new(Array3::<C64>::zeros((20, 64, 64)), 2.0, 40.0);
    let maps = coil_maps_synthetic(4, GridSpec::new(64, 64, 2.0), 1).unwrap();
    let p = gro_generate(64, 16, 20, GRO_S, GRO_ALPHA).unwrap();
    let a = forward(&img, &maps, &p, Acquisition::new(0.5, 9, 2.6)).unwrap();
    let b = forward(&img, &maps, &p, Acquisition::new(0.5, 9, 2.6)).unwrap();
    assert_eq!(a, b);
    let (sum, n) = a
        .frames
        .iter()
        .flat_map(|f| f.data.iter())
        .fold((0.0, 0usize), |(s, n), v| (s + v.norm_sqr(), n + 1));
    let power = sum / n as f64;
    assert!((power - 0.25).abs() < 0.02, "{power}");
}

#[test]
fn mismatched_geometry_is_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let img = random_image(&mut rng, (4, 64, 64));
    let maps = coil_maps_synthetic(2, GridSpec::new(64, 64, 2.0), 1).unwrap();
    assert!(forward(&img, &maps, &gro_generate(64, 8, 5, GRO_S, GRO_ALPHA).unwrap(), Acquisition::new(0.0, 1, 2.6)).is_err());
    assert!(forward(&img, &maps, &gro_generate(80, 8, 4, GRO_S, GRO_ALPHA).unwrap(), Acquisition::new(0.0, 1, 2.6)).is_err());
    assert!(FlowEncodingSpec::new(0.0).is_err());
}

#[test]
fn velocities_beyond_venc_alias() {
    let spec = FlowEncodingSpec::new(100.0).unwrap();
    let v = ImageSeries::new(Array3::from_elem((1, 2, 2), 150.0), 2.0, 40.0);
    let m = ImageSeries::new(Array3::from_elem((1, 2, 2), 1.0), 2.0, 40.0);
    let pair = flow_encode(&v, &m, spec).unwrap();
    assert_eq!(pair.aliased, 4);
    let back = phase_to_velocity(&phase_difference(&pair.compensated, &pair.encoded).unwrap(), spec);
    assert!(back.data.iter().all(|&x| (x + 50.0).abs() < 1e-9));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn sense_adjoint_matches_forward(seed in 0u64..1000, lines in 4usize..16) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let maps = coil_maps_synthetic(3, GridSpec::new(64, 64, 2.0), seed).unwrap();
        let p = gro_generate(64, lines, 3, GRO_S, GRO_ALPHA).unwrap();
        let op = SenseOperator::new(maps);
        let x = random_image(&mut rng, (3, 64, 64)).data;
        let y: Vec<Array3<C64>> = p
            .frames
            .iter()
            .map(|l| Array3::from_shape_fn((3, l.len(), 64), |_| C64::new(rng.random(), rng.random())))
            .collect();
        let ax = op.forward_series(&x, &p.frames);
        let ahy = op.adjoint_series(&y, &p.frames);
        let lhs: C64 = ax.iter().zip(&y).flat_map(|(a, b)| a.iter().zip(b).map(|(u, v)| u.conj() * v)).sum();
        let rhs: C64 = x.iter().zip(&ahy).map(|(u, v)| u.conj() * v).sum();
        prop_assert!((lhs - rhs).norm() <= 1e-9 * lhs.norm().max(1.0));
    }

    #[test]
    fn phase_roundtrip_below_venc(v in -0.999f64..0.999, venc in 50.0f64..400.0, bg in -1.0f64..1.0) {
        let spec = FlowEncodingSpec::new(venc).unwrap();
        let vel = ImageSeries::new(Array3::from_elem((2, 3, 3), v * venc), 2.0, 40.0);
        let mag = ImageSeries::new(Array3::from_elem((2, 3, 3), 0.7), 2.0, 40.0);
        let pair = flow_encode_with(&vel, &mag, spec, &ndarray::Array2::from_elem((3, 3), bg)).unwrap();
        prop_assert_eq!(pair.aliased, 0);
        prop_assert_eq!(pair.compensated.data.len(), 18);
        let back = phase_to_velocity(&phase_difference(&pair.compensated, &pair.encoded).unwrap(), spec);
        for &b in back.data.iter() {
            prop_assert!((b - v * venc).abs() < 1e-9 * venc);
        }
    }

    #[test]
    fn concat_stacks_encodings(frames in 2usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(frames as u64);
        let img = random_image(&mut rng, (frames, 64, 64));
        let maps = coil_maps_synthetic(2, GridSpec::new(64, 64, 2.0), 1).unwrap();
        let p = gro_generate(64, 8, frames, GRO_S, GRO_ALPHA).unwrap();
        let acq = |e| Acquisition { venc: Some(150.0), encoding: e, ..Acquisition::new(0.0, 1, 3.58) };
        let a = forward(&img, &maps, &p, acq(Encoding::Compensated)).unwrap();
        let b = forward(&img, &maps, &p, acq(Encoding::Encoded)).unwrap();
        let both = a.concat(&b).unwrap();
        prop_assert_eq!(both.nframes(), 2 * frames);
        prop_assert_eq!(&both.frames[frames].data, &b.frames[0].data);
    }
}
