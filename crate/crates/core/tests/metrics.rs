mod common;

use ovc::coolchic::DecoderKind;
use ovc::metrics::{
    bd_rate, mac_audit, mse_yuv420, psnr_video, psnr_yuv420, ColorDomain, RdPoint, PSNR_CAP,
};
use ovc::pipeline::{GopStructure, Planes420};
use ovc::Error;

fn planes(y: u16, u: u16, v: u16) -> Planes420 {
    Planes420::filled(16, 8, 8, [y, u, v]).unwrap()
}

fn curve(rates: &[f64], psnrs: &[f64]) -> Vec<RdPoint> {
    rates.iter().zip(psnrs).map(|(&bpp, &psnr_db)| RdPoint { bpp, psnr_db }).collect()
}

#[test]
fn psnr_closed_forms() {
    let a = planes(100, 120, 140);
    assert_eq!(psnr_yuv420(&a, &a).unwrap(), PSNR_CAP);
    let off = planes(101, 121, 141);
    let expected = 10.0 * (255.0f64 * 255.0).log10();
    assert!((psnr_yuv420(&a, &off).unwrap() - expected).abs() < 1e-9);
    assert!((expected - 48.13).abs() < 0.005);
}

#[test]
fn mse_pools_over_samples() {
    let a = planes(100, 100, 100);
    let b = planes(102, 101, 99);
    assert!((mse_yuv420(&a, &b).unwrap() - 3.0).abs() < 1e-12);
}

#[test]
fn video_psnr_pools_every_frame() {
    let a = vec![planes(100, 100, 100), planes(50, 50, 50)];
    let b = vec![planes(100, 100, 100), planes(52, 51, 49)];
    let expected = 10.0 * (255.0f64 * 255.0 / 1.5).log10();
    assert!((psnr_video(&a, &b, ColorDomain::Yuv420).unwrap() - expected).abs() < 1e-9);
    assert!(matches!(psnr_video(&a, &b[..1], ColorDomain::Rgb), Err(Error::Metric(_))));
}

#[test]
fn bd_rate_identity_and_doubling() {
    let anchor = curve(&[0.05, 0.1, 0.2, 0.4, 0.8], &[29.0, 31.5, 34.0, 36.2, 38.0]);
    assert!(bd_rate(&anchor, &anchor).unwrap().abs() < 1e-9);
    let doubled: Vec<RdPoint> = anchor.iter().map(|p| RdPoint { bpp: 2.0 * p.bpp, ..*p }).collect();
    assert!((bd_rate(&anchor, &doubled).unwrap() - 100.0).abs() < 0.01);
}

#[test]
fn bd_rate_agrees_with_numeric_integration() {
    let anchor = curve(&[0.05, 0.1, 0.2, 0.4, 0.8], &[29.0, 31.5, 34.0, 36.2, 38.0]);
    let test = curve(&[0.045, 0.095, 0.17, 0.36, 0.7], &[29.4, 31.8, 34.1, 36.5, 38.3]);
    let bd = bd_rate(&anchor, &test).unwrap();
    let oracle = common::trapezoid_bd_rate(&anchor, &test);
    assert!((bd - oracle).abs() <= 1e-3 * oracle.abs(), "{bd} vs {oracle}");

    let (anchor, test, exact) = common::exact_cubic_pair();
    let bd = bd_rate(&anchor, &test).unwrap();
    assert!((bd - exact).abs() <= 1e-3 * exact.abs(), "{bd} vs {exact}");
}

#[test]
fn disjoint_quality_ranges_report_the_ranges() {
    let a = curve(&[0.1, 0.2, 0.3, 0.4], &[30.0, 31.0, 32.0, 33.0]);
    let b = curve(&[0.1, 0.2, 0.3, 0.4], &[40.0, 41.0, 42.0, 43.0]);
    match bd_rate(&a, &b) {
        Err(Error::Metric(msg)) => assert!(msg.contains("30") && msg.contains("40"), "{msg}"),
        other => panic!("expected a metric error, got {other:?}"),
    }
}

#[test]
fn mac_audit_matches_the_architecture_table() {
    let audit = mac_audit(&GopStructure::random_access(9).unwrap());
    let intra = audit.kind_total(DecoderKind::Intra);
    let residue = audit.kind_total(DecoderKind::Residue);
    assert!((intra - 2292.0).abs() <= 0.15 * 2292.0, "intra {intra}");
    assert!((residue - 774.0).abs() <= 0.15 * 774.0, "residue {residue}");
    let syn = |k: DecoderKind| audit.per_kind.iter().find(|m| m.kind == k).unwrap().breakdown.synthesis;
    assert_eq!(syn(DecoderKind::MotionB) - syn(DecoderKind::MotionP), 216.0);
    let table_average: f64 = (2292.0 + (774.0 + 257.0) + 7.0 * (774.0 + 473.0)) / 9.0;
    assert!((table_average - 1339.1).abs() < 0.1);
}

#[test]
fn mac_audit_is_data_independent() {
    let a = mac_audit(&GopStructure::random_access(9).unwrap());
    let b = mac_audit(&GopStructure::random_access(9).unwrap());
    assert_eq!(a.gop_average, b.gop_average);
    let intra = mac_audit(&GopStructure::intra_only(4).unwrap());
    assert_eq!(intra.gop_average, a.kind_total(DecoderKind::Intra));
}
