//! Exercises the C surface from Rust: build artifacts with the core crate,
//! reload them through the extern functions, and check every result against
//! a direct core call on the same objects.

use std::ffi::{CStr, CString};
use std::ptr;

use mosa_core::forecastnet::{Forecaster, ModelConfig};
use mosa_core::harness::{save_checkpoint, save_dataset, save_scenes};
use mosa_core::metrics::evaluate;
use mosa_core::mosa::{self, AdapterSpec, ModularMask};
use mosa_core::rng::SplitMix64;
use mosa_core::synthworld::{generate_dataset, scenario_preset, Dataset};

use mosa_ffi::{
    mosa_dataset_free, mosa_dataset_len, mosa_dataset_load, mosa_evaluate,
    mosa_last_error_message, mosa_model_free, mosa_model_load, mosa_model_merge,
    mosa_model_param_count, mosa_model_shape, mosa_predict, mosa_version, MosaDataset,
    MosaEvalReport, MosaModel, MosaStatus,
};

struct Fixture {
    _dir: tempfile::TempDir,
    checkpoint: CString,
    data: CString,
    scenes: CString,
    model: Forecaster,
    dataset: Dataset,
}

fn fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let scenario = scenario_preset("agent_shift").unwrap();
    let grids = scenario.scenes_for(&scenario.target).unwrap();
    let dataset = generate_dataset(&grids, &scenario.target.style, 8, 4, 3, 5).unwrap();

    let cfg = ModelConfig {
        t_obs: 4,
        t_pred: 3,
        d_model: 8,
        k_modes: 2,
        seed: 3,
        ..ModelConfig::default()
    };
    let mut model = Forecaster::new(cfg).unwrap();
    mosa::inject(
        &mut model,
        &AdapterSpec {
            rank: 2,
            targets: mosa::mosa_targets(ModularMask::ALL),
            init_std: 0.02,
            seed: 9,
        },
    )
    .unwrap();
    // Zero-init B factors would make merging a no-op; give them real values
    // so the merged-equals-adapted check below means something.
    let mut rng = SplitMix64::new(77);
    for target in mosa::mosa_targets(ModularMask::ALL) {
        let id = model.params().id(&format!("{target}.adapter.b")).unwrap();
        for v in model.params_mut().get_mut(id).value.data_mut() {
            *v = rng.gaussian(0.0, 0.05);
        }
    }

    let checkpoint = dir.path().join("checkpoint.json");
    let scenes = dir.path().join("scenes.json");
    let data = dir.path().join("data.json");
    save_checkpoint(&checkpoint, &model).unwrap();
    save_scenes(&scenes, &dataset.scenes).unwrap();
    save_dataset(&data, &dataset).unwrap();

    let c = |p: &std::path::Path| CString::new(p.to_str().unwrap()).unwrap();
    Fixture {
        checkpoint: c(&checkpoint),
        data: c(&data),
        scenes: c(&scenes),
        _dir: dir,
        model,
        dataset,
    }
}

fn last_error() -> String {
    unsafe {
        CStr::from_ptr(mosa_last_error_message())
            .to_str()
            .unwrap()
            .to_string()
    }
}

unsafe fn load_pair(f: &Fixture) -> (*mut MosaModel, *mut MosaDataset) {
    let mut model = ptr::null_mut();
    assert_eq!(
        mosa_model_load(f.checkpoint.as_ptr(), &mut model),
        MosaStatus::Ok,
        "{}",
        last_error()
    );
    let mut dataset = ptr::null_mut();
    assert_eq!(
        mosa_dataset_load(f.data.as_ptr(), f.scenes.as_ptr(), &mut dataset),
        MosaStatus::Ok,
        "{}",
        last_error()
    );
    (model, dataset)
}

#[test]
fn version_is_the_crate_version() {
    let s = unsafe { CStr::from_ptr(mosa_version()) }.to_str().unwrap();
    assert_eq!(s, env!("CARGO_PKG_VERSION"));
}

#[test]
fn evaluate_matches_direct_core_call() {
    let f = fixture();
    unsafe {
        let (model, dataset) = load_pair(&f);

        let mut len = 0usize;
        assert_eq!(mosa_dataset_len(dataset, &mut len), MosaStatus::Ok);
        assert_eq!(len, f.dataset.len());

        let (mut t_obs, mut t_pred, mut k_modes, mut d_model) = (0, 0, 0, 0);
        assert_eq!(
            mosa_model_shape(model, &mut t_obs, &mut t_pred, &mut k_modes, &mut d_model),
            MosaStatus::Ok
        );
        assert_eq!((t_obs, t_pred, k_modes, d_model), (4, 3, 2, 8));

        let mut report = MosaEvalReport {
            n_samples: 0,
            k: 0,
            ade: 0.0,
            fde: 0.0,
            topk_ade: 0.0,
            topk_fde: 0.0,
        };
        // k = 0 means "use the model's mode count".
        assert_eq!(
            mosa_evaluate(model, dataset, 0, &mut report),
            MosaStatus::Ok,
            "{}",
            last_error()
        );
        let direct = evaluate(&f.model, &f.dataset, 2).unwrap();
        assert_eq!(report.n_samples, direct.n_samples);
        assert_eq!(report.k, 2);
        assert_eq!(report.ade, direct.ade);
        assert_eq!(report.fde, direct.fde);
        assert_eq!(report.topk_ade, direct.topk_ade);
        assert_eq!(report.topk_fde, direct.topk_fde);

        mosa_model_free(model);
        mosa_dataset_free(dataset);
    }
}

#[test]
fn param_count_distinguishes_trainable() {
    let f = fixture();
    unsafe {
        let (model, dataset) = load_pair(&f);

        let mut total = 0usize;
        let mut trainable = 0usize;
        assert_eq!(
            mosa_model_param_count(model, false, &mut total),
            MosaStatus::Ok
        );
        assert_eq!(
            mosa_model_param_count(model, true, &mut trainable),
            MosaStatus::Ok
        );
        let direct_total: usize = f
            .model
            .params()
            .iter()
            .map(|(_, p)| p.value.data().len())
            .sum();
        assert_eq!(total, direct_total);
        assert!(trainable <= total);

        mosa_model_free(model);
        mosa_dataset_free(dataset);
    }
}

#[test]
fn merged_model_predicts_like_the_adapted_one() {
    let f = fixture();
    unsafe {
        let (model, dataset) = load_pair(&f);

        let mut merged = ptr::null_mut();
        assert_eq!(
            mosa_model_merge(model, &mut merged),
            MosaStatus::Ok,
            "{}",
            last_error()
        );

        let mut before = MosaEvalReport {
            n_samples: 0,
            k: 0,
            ade: 0.0,
            fde: 0.0,
            topk_ade: 0.0,
            topk_fde: 0.0,
        };
        let mut after = before;
        assert_eq!(mosa_evaluate(model, dataset, 0, &mut before), MosaStatus::Ok);
        assert_eq!(mosa_evaluate(merged, dataset, 0, &mut after), MosaStatus::Ok);
        assert!(
            (before.ade - after.ade).abs() <= 1e-9,
            "merged ADE drifted: {} vs {}",
            before.ade,
            after.ade
        );
        assert!((before.topk_fde - after.topk_fde).abs() <= 1e-9);

        // The adapters are folded in, so the merged copy has fewer tensors.
        let (mut n_model, mut n_merged) = (0usize, 0usize);
        assert_eq!(
            mosa_model_param_count(model, false, &mut n_model),
            MosaStatus::Ok
        );
        assert_eq!(
            mosa_model_param_count(merged, false, &mut n_merged),
            MosaStatus::Ok
        );
        assert!(n_merged < n_model);

        mosa_model_free(merged);
        mosa_model_free(model);
        mosa_dataset_free(dataset);
    }
}

#[test]
fn predict_fills_the_buffer_and_checks_its_length() {
    let f = fixture();
    unsafe {
        let (model, dataset) = load_pair(&f);

        // k_modes * t_pred * 2 = 2 * 3 * 2
        let mut buf = vec![f64::NAN; 12];
        assert_eq!(
            mosa_predict(model, dataset, 0, buf.as_mut_ptr(), buf.len()),
            MosaStatus::Ok,
            "{}",
            last_error()
        );
        assert!(buf.iter().all(|v| v.is_finite()));

        let sample = &f.dataset.samples[0];
        let grid = f.dataset.scene(&sample.scene_id).unwrap();
        let direct = f.model.predict(grid, &sample.past).unwrap();
        assert_eq!(buf[0], direct[0][0].x);
        assert_eq!(buf[1], direct[0][0].y);
        assert_eq!(buf[11], direct[1][2].y);

        assert_eq!(
            mosa_predict(model, dataset, 0, buf.as_mut_ptr(), 11),
            MosaStatus::InvalidArgument
        );
        assert!(last_error().contains("11"));
        assert_eq!(
            mosa_predict(model, dataset, 99, buf.as_mut_ptr(), buf.len()),
            MosaStatus::InvalidArgument
        );

        mosa_model_free(model);
        mosa_dataset_free(dataset);
    }
}

#[test]
fn failures_set_status_and_message() {
    let f = fixture();
    unsafe {
        let mut model = ptr::null_mut();
        assert_eq!(
            mosa_model_load(ptr::null(), &mut model),
            MosaStatus::NullPointer
        );
        assert_eq!(last_error(), "path is null");

        let bogus = CString::new("/no/such/file.json").unwrap();
        assert_eq!(mosa_model_load(bogus.as_ptr(), &mut model), MosaStatus::Io);
        assert!(last_error().contains("/no/such/file.json"));

        let invalid = CString::new([0xFFu8, 0xFE].as_slice()).unwrap();
        assert_eq!(
            mosa_model_load(invalid.as_ptr(), &mut model),
            MosaStatus::InvalidUtf8
        );

        // A dataset file is not a checkpoint: wrong schema, not an I/O error.
        assert_eq!(
            mosa_model_load(f.data.as_ptr(), &mut model),
            MosaStatus::Parse
        );

        assert_eq!(
            mosa_model_shape(ptr::null(), &mut 0, &mut 0, &mut 0, &mut 0),
            MosaStatus::NullPointer
        );

        // Frees of null are no-ops.
        mosa_model_free(ptr::null_mut());
        mosa_dataset_free(ptr::null_mut());
    }
}
