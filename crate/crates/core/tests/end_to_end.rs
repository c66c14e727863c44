use indexmap::IndexMap;
use mpdelta_core::analyzer::{synth_longtail_delta, ProxyObjective, SyntheticCase};
use mpdelta_core::model_io::{extract_delta, restore, ModelCheckpoint, Tensor};
use mpdelta_core::numerics::{fro_norm, gaussian_matrix, Matrix, Rng};
use mpdelta_core::pipeline::{compress_model, decompress_package, CompressOptions, DeltaPackage};
use mpdelta_core::planner::{genetic_search, GaParams};
use mpdelta_core::quant::{dequantize, sign_quantize};

fn backbone(seed: u64) -> ModelCheckpoint {
    let mut rng = Rng::new(seed);
    ModelCheckpoint::from_tensors([
        (
            "blk.0.q".to_string(),
            Tensor::matrix(gaussian_matrix(&mut rng, 256, 256)),
        ),
        (
            "blk.0.up".to_string(),
            Tensor::matrix(gaussian_matrix(&mut rng, 384, 256)),
        ),
        ("blk.0.norm".to_string(), Tensor::vector(vec![1.0; 256]).unwrap()),
    ])
    .unwrap()
}

fn fine_tuned(base: &ModelCheckpoint, seed: u64) -> ModelCheckpoint {
    let mut rng = Rng::new(seed);
    let tensors = base.tensors().iter().map(|(name, t)| {
        let (r, c) = t.shape();
        let d = if t.is_vector {
            gaussian_matrix(&mut rng, r, c).scale(0.01).unwrap()
        } else {
            synth_longtail_delta(&mut rng, r, c, 1.0, 0.01)
                .unwrap()
                .scale(0.01)
                .unwrap()
        };
        (
            name.clone(),
            Tensor {
                data: t.data.add(&d).unwrap(),
                is_vector: t.is_vector,
            },
        )
    });
    ModelCheckpoint::from_tensors(tensors).unwrap()
}

fn rel_err(a: &Matrix, b: &Matrix) -> f64 {
    fro_norm(&a.sub(b).unwrap()) / fro_norm(b)
}

#[test]
fn restore_beats_sign_baseline_per_tensor() {
    let base = backbone(1);
    let tuned = fine_tuned(&base, 2);
    let delta = extract_delta(&tuned, &base).unwrap();
    let opts = CompressOptions {
        synthetic_calibration: Some(5),
        calibration_samples: 256,
        ..Default::default()
    };
    let pkg = compress_model(&delta, &IndexMap::new(), "8+3+2", 1.0 / 16.0, &opts).unwrap();
    let pkg = DeltaPackage::from_bytes(&pkg.to_bytes().unwrap()).unwrap();
    let restored = restore(&base, &decompress_package(&pkg).unwrap(), false).unwrap();

    for (name, t) in tuned.tensors() {
        let d = &delta.tensors[name].data;
        let got = restored.tensors()[name].data.sub(&base.tensors()[name].data).unwrap();
        let ours = rel_err(&got, d);
        if t.is_vector {
            assert!(ours <= 1e-3, "{name}: {ours}");
            continue;
        }
        let sign = rel_err(&dequantize(&sign_quantize(d)).unwrap(), d);
        assert!(ours <= sign, "{name}: {ours} vs sign {sign}");
    }
}

#[test]
fn zero_delta_restores_backbone_bytes() {
    let base = backbone(3);
    let delta = extract_delta(&base, &base).unwrap();
    let pkg = compress_model(
        &delta,
        &IndexMap::new(),
        "8+3+2",
        1.0 / 16.0,
        &CompressOptions {
            synthetic_calibration: Some(0),
            calibration_samples: 32,
            ..Default::default()
        },
    )
    .unwrap();
    let restored = restore(&base, &decompress_package(&pkg).unwrap(), false).unwrap();
    assert_eq!(restored.to_bytes(), base.to_bytes());
}

#[test]
fn checksum_mismatch_needs_force() {
    let base = backbone(4);
    let other = backbone(5);
    let delta = extract_delta(&fine_tuned(&base, 6), &base).unwrap();
    assert_eq!(restore(&other, &delta, false).unwrap_err().code(), "CHECKSUM_MISMATCH");
    assert!(restore(&other, &delta, true).is_ok());
}

#[test]
fn search_is_deterministic_and_feasible() {
    let case = SyntheticCase::suite(2, 256).unwrap();
    let proxy = ProxyObjective::new(vec![(case.delta, case.x)], 1.0 / 16.0, 128).unwrap();
    let params = GaParams {
        population: 10,
        generations: 4,
        ..GaParams::default()
    };
    let run = |seed| genetic_search(|a| proxy.score(a), 1.0 / 16.0, 256, 256, &params, &mut Rng::new(seed)).unwrap();
    let (a, b) = (run(9), run(9));
    assert_eq!(a.trace, b.trace);
    assert_eq!(a.best, b.best);
    assert!(a.best.is_feasible(1.0 / 16.0, 256, 256));
    assert!(a.trace.windows(2).all(|p| p[1] <= p[0]));
}
