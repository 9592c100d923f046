use ovc::coolchic::{arm_context, context_template, quantize_values, QuantizedParam};
use ovc::entropy::{LaplaceModel, RangeDecoder, RangeEncoder};
use ovc::metrics::{bd_rate, bpp, mac_audit, RdPoint};
use ovc::numerics::{hard_round, soft_round, Graph, QuantizerMode, Tensor};
use ovc::pipeline::{blend_tensor, to_yuv420, warp_tensor, GopPreset, GopStructure};
use proptest::prelude::*;
use rand::rngs::mock::StepRng;

fn tensor(shape: &[usize], data: Vec<f64>) -> Tensor<f64> {
    Tensor::new(shape, data).unwrap()
}

fn values(n: usize, lo: f64, hi: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(lo..hi, n)
}

fn conv(x: &Tensor<f64>, w: &Tensor<f64>) -> Vec<f64> {
    let mut g = Graph::new();
    let xv = g.constant_tensor(x);
    let wv = g.constant_tensor(w);
    let b = g.constant_tensor(&Tensor::zeros(&[w.shape()[0]]));
    let y = g.conv2d(xv, wv, b).unwrap();
    g.value(y).to_vec()
}

fn tconv(x: &Tensor<f64>, k: &Tensor<f64>) -> Vec<f64> {
    let mut g = Graph::new();
    let xv = g.constant_tensor(x);
    let kv = g.constant_tensor(k);
    let b = g.constant_tensor(&Tensor::zeros(&[1]));
    let y = g.tconv2d_stride2(xv, kv, b).unwrap();
    g.value(y).to_vec()
}

fn combine(a: f64, x: &[f64], b: f64, y: &[f64]) -> Vec<f64> {
    x.iter().zip(y).map(|(p, q)| a * p + b * q).collect()
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.iter().zip(b).all(|(p, q)| (p - q).abs() <= tol)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn tensor_length_matches_shape(c in 1usize..4, h in 1usize..6, w in 1usize..6, extra in 0usize..3) {
        let n = c * h * w;
        prop_assert!(Tensor::<f32>::new(&[c, h, w], vec![0.0; n]).is_ok());
        if extra > 0 {
            prop_assert!(Tensor::<f32>::new(&[c, h, w], vec![0.0; n + extra]).is_err());
        }
    }

    #[test]
    fn conv3x3_is_linear(x in values(2 * 25, -1.0, 1.0), y in values(2 * 25, -1.0, 1.0),
                         w in values(3 * 2 * 9, -1.0, 1.0), a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let w = tensor(&[3, 2, 3, 3], w);
        let lhs = conv(&tensor(&[2, 5, 5], combine(a, &x, b, &y)), &w);
        let rhs = combine(a, &conv(&tensor(&[2, 5, 5], x), &w), b, &conv(&tensor(&[2, 5, 5], y), &w));
        prop_assert!(close(&lhs, &rhs, 1e-5));
    }

    #[test]
    fn tconv_is_linear(x in values(16, -1.0, 1.0), y in values(16, -1.0, 1.0),
                       k in values(64, -1.0, 1.0), a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let k = tensor(&[8, 8], k);
        let lhs = tconv(&tensor(&[1, 4, 4], combine(a, &x, b, &y)), &k);
        let rhs = combine(a, &tconv(&tensor(&[1, 4, 4], x), &k), b, &tconv(&tensor(&[1, 4, 4], y), &k));
        prop_assert!(close(&lhs, &rhs, 1e-5));
    }

    #[test]
    fn hard_round_ste_is_integer(x in values(32, -50.0, 50.0)) {
        let mut g = Graph::<f32>::new();
        let v = g.constant(&[32], x.iter().map(|&v| v as f32).collect()).unwrap();
        let q = g.quantize(v, QuantizerMode::HardRoundSte, &mut StepRng::new(0, 0)).unwrap();
        prop_assert!(g.value(q).iter().all(|v| v.fract() == 0.0));
    }

    #[test]
    fn soft_round_approaches_round(x in -20.0f64..20.0) {
        let frac = x - x.floor();
        prop_assume!((frac - 0.5).abs() > 0.01);
        prop_assert!((soft_round(x, 1e-4) - hard_round(x)).abs() < 1e-3);
    }

    #[test]
    fn laplace_symbols_round_trip(symbols in prop::collection::vec((-300i32..300, -200.0f64..200.0, -3.0f64..6.0), 1..200)) {
        let mut enc = RangeEncoder::new();
        for &(v, mu, ls) in &symbols {
            LaplaceModel::new(mu, ls).unwrap().encode(&mut enc, v).unwrap();
        }
        let bytes = enc.finish();
        let mut dec = RangeDecoder::new(&bytes).unwrap();
        for &(v, mu, ls) in &symbols {
            prop_assert_eq!(LaplaceModel::new(mu, ls).unwrap().decode(&mut dec).unwrap(), v);
        }
    }

    #[test]
    fn arm_context_is_causal(grid in prop::collection::vec(-5i32..5, 64), p in 0usize..64, delta in 1i32..4) {
        let template = context_template(24);
        let before: Vec<f64> = grid.iter().map(|&v| v as f64).collect();
        let mut after = before.clone();
        after[p] += delta as f64;
        for q in 0..64 {
            let (y, x) = (q / 8, q % 8);
            let changed = arm_context(&before, 8, 8, y, x, &template) != arm_context(&after, 8, 8, y, x, &template);
            if q <= p {
                prop_assert!(!changed, "context at {} depends on {}", q, p);
            }
        }
    }

    #[test]
    fn requantization_is_idempotent(data in values(40, -0.3, 0.3), e in -8i8..=-2) {
        let q = quantize_values(&data, e).unwrap();
        let deq = QuantizedParam::new(e, q.clone()).dequantize::<f32>();
        prop_assert_eq!(quantize_values(&deq, e).unwrap(), q);
    }

    #[test]
    fn blend_is_pixelwise_convex(r1 in values(3 * 36, 0.0, 1.0), r2 in values(3 * 36, 0.0, 1.0),
                                 f in values(4 * 36, -3.0, 3.0), beta in values(36, 0.0, 1.0)) {
        let r1 = tensor(&[3, 6, 6], r1);
        let r2 = tensor(&[3, 6, 6], r2);
        let v1 = tensor(&[2, 6, 6], f[..72].to_vec());
        let v2 = tensor(&[2, 6, 6], f[72..].to_vec());
        let beta = tensor(&[1, 6, 6], beta);
        let w1 = warp_tensor(&r1, &v1).unwrap();
        let w2 = warp_tensor(&r2, &v2).unwrap();
        let out = blend_tensor(&r1, Some(&r2), &v1, Some(&v2), Some(&beta)).unwrap();
        for i in 0..out.numel() {
            let (a, b) = (w1.data()[i], w2.data()[i]);
            prop_assert!(out.data()[i] >= a.min(b) - 1e-12 && out.data()[i] <= a.max(b) + 1e-12);
        }
    }

    #[test]
    fn zero_flow_warp_is_identity(r in values(3 * 20, -5.0, 5.0)) {
        let r = tensor(&[3, 4, 5], r);
        prop_assert_eq!(warp_tensor(&r, &Tensor::zeros(&[2, 4, 5])).unwrap(), r);
    }

    #[test]
    fn chroma_downsampling_adjoint(x in values(3 * 48, -1.0, 1.0), y in values(2 * 12, -1.0, 1.0)) {
        let mut g = Graph::new();
        let xv = g.constant_tensor(&tensor(&[3, 6, 8], x.clone()));
        let (_, uv) = to_yuv420(&mut g, xv).unwrap();
        let lhs: f64 = g.value(uv).iter().zip(&y).map(|(a, b)| a * b).sum();
        // adjoint of 2x2 averaging spreads y/4 over each block
        let mut rhs = 0.0;
        for c in 0..2 {
            for i in 0..6 {
                for j in 0..8 {
                    rhs += x[(c + 1) * 48 + i * 8 + j] * y[c * 12 + (i / 2) * 4 + j / 2] / 4.0;
                }
            }
        }
        prop_assert!((lhs - rhs).abs() < 1e-5);
    }

    #[test]
    fn bd_rate_is_antisymmetric_for_nearby_curves(shift in -0.05f64..0.05, tilt in -0.02f64..0.02) {
        let anchor: Vec<RdPoint> = [0.1, 0.2, 0.4, 0.8]
            .iter()
            .map(|&r| RdPoint { bpp: r, psnr_db: 30.0 + 4.0 * (r as f64).log2() })
            .collect();
        let test: Vec<RdPoint> = anchor
            .iter()
            .map(|p| RdPoint { bpp: p.bpp * (1.0 + shift + tilt * p.psnr_db / 30.0), psnr_db: p.psnr_db })
            .collect();
        let ab = bd_rate(&anchor, &test).unwrap();
        let ba = bd_rate(&test, &anchor).unwrap();
        prop_assert!((ab + ba / (1.0 + ba / 100.0)).abs() < 0.5);
    }

    #[test]
    fn bpp_is_file_size_arithmetic(bytes in 1usize..1_000_000, w in 1usize..2000, h in 1usize..2000, n in 1usize..20) {
        prop_assert_eq!(bpp(bytes, w, h, n), (bytes * 8) as f64 / (w * h * n) as f64);
    }

    #[test]
    fn gop_average_is_the_frame_mean(n in 1usize..17, preset in 0usize..3) {
        let preset = [GopPreset::RandomAccess, GopPreset::LowDelayP, GopPreset::IntraOnly][preset];
        let audit = mac_audit(&preset.build(n).unwrap());
        let mean = audit.per_frame.iter().map(|f| f.macs_per_pixel).sum::<f64>() / n as f64;
        prop_assert!((audit.gop_average - mean).abs() < 1e-9);
    }

    #[test]
    fn gop_references_precede_in_decode_order(n in 1usize..33) {
        let gop = GopStructure::random_access(n).unwrap();
        let order = gop.decode_order();
        let pos = |i: usize| order.iter().position(|&o| o == i).unwrap();
        for f in gop.frames() {
            prop_assert_eq!(f.refs.len(), f.kind.n_refs());
            for &r in &f.refs {
                prop_assert!(pos(r) < pos(f.index));
            }
        }
    }
}

