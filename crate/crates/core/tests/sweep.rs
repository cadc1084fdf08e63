use std::fs;
use std::path::Path;

use approx::assert_relative_eq;
use hetagg::aggregation::GrowthConfig;
use hetagg::dataset::{run_sweep, SweepSettings, SweepSpec};
use hetagg::descriptors::descriptor_report;
use hetagg::geometry::read_aggregate;
use hetagg::par::Executor;
use hetagg::render::{decode_pgm16, ImageMetadata, IntensityModel, RenderConfig};
use sha2::{Digest, Sha256};

fn small_spec() -> SweepSpec {
    SweepSpec {
        df_values: vec![1.8, 2.2],
        rho_values: vec![0.4],
        c0_values: vec![2],
        c1_values: vec![3],
        aggregates_per_triple: 6,
        df_choices_per_triple: 2,
    }
}

fn sweep_into(out: &Path, exec: &Executor) -> hetagg::dataset::SweepOutcome {
    let growth = GrowthConfig::default();
    let render = RenderConfig { width: 256, height: 256, pixel_size: 2.0, ..RenderConfig::default() };
    let model = IntensityModel::default();
    let settings = SweepSettings {
        growth: &growth,
        render: &render,
        model: &model,
        fov_retries: 10,
        config_hash: "test",
        write_raw: false,
    };
    run_sweep(&small_spec(), &settings, 42, out, exec).unwrap()
}

#[test]
fn resumed_sweep_matches_uninterrupted_run() {
    let full = tempfile::tempdir().unwrap();
    let reference = sweep_into(full.path(), &Executor::sequential());
    assert_eq!(reference.manifest.entries.len(), 6);
    assert_eq!(reference.reused, 0);

    let partial = tempfile::tempdir().unwrap();
    sweep_into(partial.path(), &Executor::sequential());
    for id in [1u64, 4] {
        fs::remove_file(partial.path().join(format!("entries/{id:08}.json"))).unwrap();
    }
    let resumed = sweep_into(partial.path(), &Executor::with_jobs(3));
    assert_eq!(resumed.reused, 4);
    assert_eq!(resumed.manifest.to_csv(), reference.manifest.to_csv());
}

#[test]
fn manifest_rows_point_at_matching_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let outcome = sweep_into(dir.path(), &Executor::sequential());
    assert!(outcome.failures.is_empty());
    for e in &outcome.manifest.entries {
        let geometry = fs::read(dir.path().join(&e.geometry_path)).unwrap();
        let digest = hex::encode(Sha256::digest(&geometry));
        assert!(e.geometry_path.contains(&digest), "{} is not content addressed", e.geometry_path);

        let a = read_aggregate(std::str::from_utf8(&geometry).unwrap()).unwrap();
        let recomputed = descriptor_report(&a);
        assert_eq!(recomputed.n_particles, e.descriptors.n_particles);
        assert_relative_eq!(recomputed.z_total, e.descriptors.z_total, max_relative = 1e-12);
        assert_relative_eq!(recomputed.mixing_ratio, e.descriptors.mixing_ratio, max_relative = 1e-12);

        let stem = e.image_path.trim_end_matches(".pgm");
        let meta = ImageMetadata::from_json(&fs::read_to_string(dir.path().join(format!("{stem}.json"))).unwrap()).unwrap();
        let img = decode_pgm16(&fs::read(dir.path().join(&e.image_path)).unwrap(), meta.v_max).unwrap();
        assert_eq!((img.width, img.height), (meta.width, meta.height));
        assert_relative_eq!(img.max(), meta.v_max, max_relative = 1e-12);
    }
    let failures = fs::read_to_string(dir.path().join("failures.csv")).unwrap();
    assert_eq!(failures.lines().count(), 1);
}
