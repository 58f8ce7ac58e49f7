use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ttdf_core::corpus::{generate_real_video, sample_eval_clips, Image};
use ttdf_core::flow::*;

/// Smooth analytic texture sampled at (x - dx, y - dy): the content moves by
/// (+dx, +dy) pixels.
fn smooth(side: usize, dx: f32, dy: f32) -> Image {
    let mut data = Vec::with_capacity(3 * side * side);
    for c in 0..3 {
        for y in 0..side {
            for x in 0..side {
                let (xs, ys) = (x as f32 - dx, y as f32 - dy);
                let v = 0.5
                    + 0.18 * (0.19 * xs + 0.4 * c as f32).sin() * (0.16 * ys + 0.3).cos()
                    + 0.12 * (0.11 * (xs - 0.7 * ys)).sin();
                data.push(v);
            }
        }
    }
    Image::new(3, side, side, data).unwrap()
}

fn hs() -> HornSchunck {
    HornSchunck::new(FlowParams::default())
}

#[test]
fn translations_are_recovered() {
    for (dx, dy) in [(1.0, 0.0), (0.0, 1.0), (2.0, 0.0), (0.0, -2.0), (1.0, 1.0)] {
        let f = hs().estimate(&smooth(64, 0.0, 0.0), &smooth(64, dx, dy)).unwrap();
        let epe = f.mean_endpoint_error((dx, dy), 8);
        assert!(epe < 0.5, "shift ({dx},{dy}): epe {epe}");
    }
}

#[test]
fn identical_frames_give_exactly_zero_flow() {
    let a = smooth(32, 0.3, 0.0);
    let f = hs().estimate(&a, &a).unwrap();
    assert!(f.u.iter().chain(&f.v).all(|&x| x == 0.0));
    let w = weight_map(&f);
    assert!(w.w.iter().all(|&x| x == 0.0));
}

#[test]
fn residual_settles_after_warmup() {
    let v = generate_real_video(5, 12, 64).unwrap().video;
    let frames = v.frame_images();
    for pair in frames.windows(2).take(6) {
        let (_, res) =
            HornSchunck::new(FlowParams { alpha: 1.0, iters: 80 }).estimate_traced(&pair[0], &pair[1]).unwrap();
        for (i, w) in res.windows(2).enumerate().skip(5) {
            assert!(w[1] <= w[0] * (1.0 + 1e-5), "iteration {}: {} after {}", i + 1, w[1], w[0]);
        }
    }
}

#[test]
fn batched_and_pairwise_estimation_agree() {
    let v = generate_real_video(9, 14, 32).unwrap().video;
    let frames = v.frame_images();
    let est = hs();
    let batched = est.estimate_sequence(&frames).unwrap();
    let pairwise: Vec<FlowField> = frames.windows(2).map(|p| est.estimate(&p[0], &p[1]).unwrap()).collect();
    assert_eq!(batched, pairwise);

    let clip = &sample_eval_clips(&v, 8, 1, 0).unwrap()[0];
    let via_clip = ofm_clip(clip, 8, &est).unwrap();
    let by_hand: Vec<Image> = clip
        .frames
        .frame_images()
        .windows(2)
        .map(|p| ofm(&p[0], &weight_map(&est.estimate(&p[0], &p[1]).unwrap())).unwrap())
        .collect();
    assert_eq!(via_clip.frame_images(), by_hand);
}

#[test]
fn motion_weights_concentrate_on_the_moving_region() {
    let real = generate_real_video(21, 10, 64).unwrap();
    let frames = real.video.frame_images();
    let f = hs().estimate(&frames[3], &frames[4]).unwrap();
    let w = weight_map(&f);
    let mask = real.scene.foreground_mask(3);
    let (mut inside, mut ni, mut outside, mut no) = (0.0, 0.0, 0.0, 0.0);
    for (wi, m) in w.w.iter().zip(&mask) {
        if *m > 0.5 {
            inside += wi;
            ni += 1.0;
        } else if *m == 0.0 {
            outside += wi;
            no += 1.0;
        }
    }
    assert!(inside / ni > 2.0 * outside / no, "inside {} outside {}", inside / ni, outside / no);
}

fn random_image(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Image {
    Image::new(3, h, w, (0..3 * h * w).map(|_| rng.random()).collect()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn ofm_algebra(seed in any::<u64>(), h in 1usize..12, w in 1usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let frame = random_image(&mut rng, h, w);
        let ones = WeightMap { height: h, width: w, w: vec![1.0; h * w] };
        let zeros = WeightMap { height: h, width: w, w: vec![0.0; h * w] };
        prop_assert_eq!(&ofm(&frame, &ones).unwrap(), &frame);
        let half = ofm(&frame, &zeros).unwrap();
        for (o, x) in half.data.iter().zip(&frame.data) {
            prop_assert!((o - x / 2.0).abs() <= f32::EPSILON * x);
        }
        let weights = WeightMap { height: h, width: w, w: (0..h * w).map(|_| rng.random()).collect() };
        let out = ofm(&frame, &weights).unwrap();
        for (o, x) in out.data.iter().zip(&frame.data) {
            prop_assert!(*o >= x / 2.0 - 1e-7 && *o <= *x + 1e-7, "{} outside [{}, {}]", o, x / 2.0, x);
        }
    }

    #[test]
    fn weight_maps_are_unit_bounded(seed in any::<u64>(), n in 1usize..64, scale in 0.0f32..20.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = FlowField {
            height: 1,
            width: n,
            u: (0..n).map(|_| scale * (rng.random::<f32>() - 0.5)).collect(),
            v: (0..n).map(|_| scale * (rng.random::<f32>() - 0.5)).collect(),
        };
        let w = weight_map(&f);
        prop_assert!(w.w.iter().all(|x| (0.0..=1.0).contains(x)));
        let norms = velocity_norm(&f);
        if norms.iter().any(|&x| x >= STATIC_EPS) {
            prop_assert!(w.w.contains(&1.0));
        }
    }
}
