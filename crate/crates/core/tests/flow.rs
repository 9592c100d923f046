use ovc::flow::{decode_flo, encode_flo, estimate_flow, flow_epe, read_flo, write_flo, FlowField};
use ovc::pipeline::{synthetic::textured_frame, Planes420};
use ovc::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn median(mut v: Vec<f32>) -> f32 {
    v.sort_by(f32::total_cmp);
    v[v.len() / 2]
}

fn random_field(rng: &mut ChaCha8Rng, w: usize, h: usize) -> FlowField {
    FlowField::new(w, h, (0..2 * w * h).map(|_| rng.gen_range(-5.0..5.0)).collect()).unwrap()
}

#[test]
fn global_translations_are_recovered() {
    let src = textured_frame(128, 128, 8, 0.0, 0.0).unwrap();
    for (sx, sy) in [(8, 0), (-5, 3), (0, -8), (2, 7), (-8, -8)] {
        // dst(p + s) == src(p)
        let dst = textured_frame(128, 128, 8, -sx as f64, -sy as f64).unwrap();
        let f = estimate_flow(&src, &dst).unwrap();
        f.validate().unwrap();
        assert!((median(f.dx().to_vec()) - sx as f32).abs() <= 0.5, "dx for {sx},{sy}");
        assert!((median(f.dy().to_vec()) - sy as f32).abs() <= 0.5, "dy for {sx},{sy}");
    }
}

#[test]
fn independent_noise_frames_give_a_finite_field() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut noise = || {
        let y = (0..64 * 64).map(|_| rng.gen_range(0..256)).collect();
        let c = (0..32 * 32).map(|_| rng.gen_range(0..256)).collect::<Vec<u16>>();
        Planes420::new(64, 64, 8, y, c.clone(), c).unwrap()
    };
    let (a, b) = (noise(), noise());
    let f = estimate_flow(&a, &b).unwrap();
    assert!(f.validate().is_ok());
}

#[test]
fn epe_matches_direct_computation() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let a = random_field(&mut rng, 9, 7);
    let b = random_field(&mut rng, 9, 7);
    let n = 63;
    let direct: f64 = (0..n)
        .map(|i| {
            let dx = (a.dx()[i] - b.dx()[i]) as f64;
            let dy = (a.dy()[i] - b.dy()[i]) as f64;
            (dx * dx + dy * dy).sqrt()
        })
        .sum::<f64>()
        / n as f64;
    assert!((flow_epe(&a, &b).unwrap() - direct).abs() < 1e-6);
    assert_eq!(flow_epe(&a, &a).unwrap(), 0.0);
    assert!(flow_epe(&a, &random_field(&mut rng, 7, 9)).is_err());
}

#[test]
fn flo_files_round_trip_bit_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let f = random_field(&mut rng, 13, 5);
    assert_eq!(decode_flo(&encode_flo(&f)).unwrap(), f);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("1_0.flo");
    write_flo(&path, &f).unwrap();
    assert_eq!(read_flo(&path).unwrap(), f);
    let bytes = encode_flo(&f);
    assert!(matches!(decode_flo(&bytes[..bytes.len() - 3]), Err(Error::Format(_))));
}

#[test]
fn implausible_fields_fail_validation() {
    let big = FlowField::constant(16, 16, 20.0, 0.0).unwrap();
    assert!(matches!(big.validate(), Err(Error::Config(_))));
    let mut data = vec![0.0; 2 * 16 * 16];
    data[5] = f32::NAN;
    assert!(FlowField::new(16, 16, data).unwrap().validate().is_err());
}
