use ovc::coolchic::{level_dims, CoolChicDecoder, DecoderKind, LatentGrid, QuantizedParam};
use ovc::entropy::{
    encode_level, level_cost_bits, read_gop, read_header, write_gop, DecoderPayload, FrameRecord, Gop, GopHeader,
    HEADER_BYTES,
};
use ovc::pipeline::{decode_gop, FrameKind};
use ovc::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn header(frames: u16) -> GopHeader {
    GopHeader { width: 64, height: 64, bit_depth: 8, gop_id: 0, lambda_index: 3, lambda: 0.001, frame_count: frames }
}

fn payload(kind: DecoderKind, rng: &mut ChaCha8Rng) -> DecoderPayload {
    let params = kind
        .param_shapes()
        .iter()
        .map(|s| QuantizedParam::new(-6, (0..s.numel()).map(|_| rng.gen_range(-12..=12)).collect()))
        .collect();
    let latents = level_dims(64, 64)
        .into_iter()
        .map(|(h, w)| LatentGrid { h, w, values: (0..h * w).map(|_| rng.gen_range(-3..=3)).collect() })
        .collect();
    DecoderPayload { kind, params, latents }
}

fn record(index: usize, kind: FrameKind, refs: Vec<usize>, rng: &mut ChaCha8Rng) -> FrameRecord {
    let decoders = kind.decoder_kinds().into_iter().map(|k| payload(k, rng)).collect();
    FrameRecord { index, kind, refs, decoders }
}

fn toy_gop(seed: u64) -> Gop {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let frames = vec![
        record(0, FrameKind::I, vec![], &mut rng),
        record(2, FrameKind::P, vec![0], &mut rng),
        record(1, FrameKind::B, vec![0, 2], &mut rng),
    ];
    Gop { header: header(3), frames }
}

#[test]
fn empty_gop_is_header_only() {
    let gop = Gop { header: header(0), frames: vec![] };
    let (bytes, stats) = write_gop(&gop).unwrap();
    assert_eq!(bytes.len(), HEADER_BYTES);
    assert_eq!(stats.total_bytes, HEADER_BYTES);
    assert_eq!(read_gop(&bytes).unwrap(), gop);
}

#[test]
fn toy_gop_round_trips_exactly() {
    let gop = toy_gop(1);
    let (bytes, _) = write_gop(&gop).unwrap();
    assert_eq!(read_gop(&bytes).unwrap(), gop);
}

#[test]
fn writer_is_deterministic() {
    let a = write_gop(&toy_gop(2)).unwrap().0;
    let b = write_gop(&toy_gop(2)).unwrap().0;
    assert_eq!(a, b);
}

#[test]
fn byte_accounting_sums_to_the_file_size() {
    let (bytes, stats) = write_gop(&toy_gop(3)).unwrap();
    let frames: usize = stats.frames.iter().map(|f| f.total_bytes).sum();
    assert_eq!(stats.header_bytes + frames, bytes.len());
    assert_eq!(stats.total_bytes, bytes.len());
    for f in &stats.frames {
        let decoders: usize = f.decoders.iter().map(|d| d.total_bytes).sum();
        // length field, index, kind, refs, checksum
        assert!(f.total_bytes > decoders);
        for d in &f.decoders {
            assert_eq!(d.level_bytes.iter().sum::<usize>(), d.latent_bytes);
        }
    }
}

#[test]
fn single_byte_corruption_never_decodes_silently() {
    let gop = toy_gop(4);
    let (bytes, _) = write_gop(&gop).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut positions: Vec<usize> = (0..HEADER_BYTES).collect();
    positions.extend((0..200).map(|_| rng.gen_range(HEADER_BYTES..bytes.len())));
    for pos in positions {
        let mut bad = bytes.clone();
        bad[pos] ^= 1 << rng.gen_range(0..8);
        match read_gop(&bad) {
            Err(Error::Format(_)) | Err(Error::Stream(_)) => {}
            Err(e) => panic!("unexpected error category at byte {pos}: {e}"),
            Ok(decoded) => assert_ne!(decoded, gop, "flip at byte {pos} went unnoticed"),
        }
    }
}

#[test]
fn truncation_and_trailing_bytes_are_format_errors() {
    let (bytes, _) = write_gop(&toy_gop(6)).unwrap();
    for cut in (0..bytes.len()).step_by(97) {
        assert!(matches!(read_gop(&bytes[..cut]), Err(Error::Format(_))), "cut at {cut}");
    }
    let mut long = bytes.clone();
    long.push(0);
    assert!(matches!(read_gop(&long), Err(Error::Format(_))));
}

#[test]
fn header_checks() {
    let (mut bytes, _) = write_gop(&Gop { header: header(0), frames: vec![] }).unwrap();
    assert_eq!(read_header(&bytes).unwrap(), header(0));
    bytes[0] = b'X';
    assert!(matches!(read_header(&bytes), Err(Error::Format(_))));
}

#[test]
fn inconsistent_records_are_rejected_by_the_writer() {
    let mut gop = toy_gop(7);
    gop.frames[1].refs.clear();
    assert!(matches!(write_gop(&gop), Err(Error::Stream(_))));
    let mut gop = toy_gop(7);
    gop.header.frame_count = 2;
    assert!(matches!(write_gop(&gop), Err(Error::Stream(_))));
}

#[test]
fn single_intra_frame_decodes_through_the_intra_path() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let gop = Gop { header: header(1), frames: vec![record(0, FrameKind::I, vec![], &mut rng)] };
    let (bytes, _) = write_gop(&gop).unwrap();
    let video = decode_gop(&bytes).unwrap();
    assert_eq!(video.frames.len(), 1);
    let mut dec = CoolChicDecoder::<f32>::zeroed(DecoderKind::Intra, 64, 64).unwrap();
    dec.set_quantized_params(&gop.frames[0].decoders[0].params).unwrap();
    dec.set_latents(&gop.frames[0].decoders[0].latents).unwrap();
    assert_eq!(video.frames[0].dense, dec.infer().unwrap());
}

#[test]
fn estimated_level_rate_tracks_the_coded_length() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for kind in [DecoderKind::Intra, DecoderKind::MotionB] {
        let mut dec = CoolChicDecoder::<f32>::new(kind, 64, 64, &mut rng).unwrap();
        for p in dec.params.iter_mut() {
            for v in p.data_mut() {
                *v += rng.gen_range(-0.2..0.2);
            }
        }
        for (h, w) in level_dims(64, 64) {
            let grid = LatentGrid { h, w, values: (0..h * w).map(|_| rng.gen_range(-4..=4)).collect() };
            let estimate = level_cost_bits(&dec, &grid).unwrap();
            let actual = 8.0 * encode_level(&dec, &grid).unwrap().len() as f64;
            assert!((actual - estimate).abs() <= 0.001 * estimate + 64.0, "{h}x{w}: {actual} vs {estimate}");
        }
    }
}
