use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use nlos_loc::dataset::{generate_dataset, generate_samples, load_dataset, load_manifest, DatasetConfig, Split};
use nlos_loc::geometry::los_visible;

fn small() -> DatasetConfig {
    DatasetConfig {
        n_maps: 10,
        seed: 11,
        ..DatasetConfig::default()
    }
}

#[test]
fn written_dataset_reads_back_as_generated() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small();
    generate_dataset(&cfg, dir.path()).unwrap();
    let direct = generate_samples(&cfg, 0..cfg.n_maps).unwrap();
    let mut loaded: Vec<_> = Split::ALL
        .iter()
        .flat_map(|s| load_dataset(dir.path(), *s).unwrap())
        .collect();
    loaded.sort_by(|a, b| {
        (&a.record.map_id, a.record.bs_index, a.record.ue_index).cmp(&(&b.record.map_id, b.record.bs_index, b.record.ue_index))
    });
    assert_eq!(loaded.len(), direct.len());
    for (a, b) in loaded.iter().zip(&direct) {
        assert_eq!(a.record.map_id, b.record.map_id);
        assert_eq!((a.record.bs_index, a.record.ue_index, a.record.los), (b.record.bs_index, b.record.ue_index, b.record.los));
        assert!(a.true_location.distance(b.true_location) <= 1e-12);
        assert_eq!(a.record.paths.len(), b.record.paths.len());
        for (p, q) in a.record.paths.iter().zip(&b.record.paths) {
            assert!((p.tau - q.tau).abs() <= 1e-12 * q.tau.abs().max(1e-9));
            assert!((p.aoa - q.aoa).abs() <= 1e-12);
            assert!((p.aod - q.aod).abs() <= 1e-12);
            assert_eq!(p.bounces, q.bounces);
        }
    }
}

#[test]
fn splits_are_disjoint_and_cover_all_maps() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small();
    generate_dataset(&cfg, dir.path()).unwrap();
    let manifest = load_manifest(dir.path()).unwrap();
    let mut seen = HashSet::new();
    for s in Split::ALL {
        for m in manifest.maps(s) {
            assert!(seen.insert(m.clone()), "{m} appears twice");
        }
    }
    assert_eq!(seen.len(), cfg.n_maps);
}

#[test]
fn los_flag_agrees_with_visibility() {
    for s in generate_samples(&small(), 0..10).unwrap() {
        let visible = los_visible(&s.scene, s.base_station(), s.true_location).unwrap();
        assert_eq!(s.los(), visible, "{} bs {} ue {}", s.record.map_id, s.record.bs_index, s.record.ue_index);
        assert_eq!(s.record.paths[0].bounces == 0, s.los());
    }
}

fn tree(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn generation_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    generate_dataset(&small(), a.path()).unwrap();
    generate_dataset(&small(), b.path()).unwrap();
    let (ta, tb) = (tree(a.path()), tree(b.path()));
    assert!(ta.len() > 10);
    assert_eq!(ta, tb);
}

#[test]
fn different_seeds_give_different_maps() {
    let a = generate_samples(&small(), 0..1).unwrap();
    let b = generate_samples(&DatasetConfig { seed: 12, ..small() }, 0..1).unwrap();
    assert_ne!(a[0].scene.obstacles, b[0].scene.obstacles);
}
