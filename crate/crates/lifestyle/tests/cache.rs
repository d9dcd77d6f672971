use std::fs;

use lifestyle::cache::{read_surface, solve_or_load, write_surface, CacheError, SurfaceCache, SurfaceHeader, SurfaceInputs, MAGIC};
use lifestyle_core::hjb::SolverOptions;
use lifestyle_core::{ContributionSchedule, Fidelity, GridSpec, MarketParams};

fn coarse_inputs(gamma: f64) -> SurfaceInputs {
    let mut grid = GridSpec::preset(Fidelity::Desk, 40.0);
    grid.dt = 0.5;
    grid.dz = 0.05;
    grid.tail_dt = 0.01;
    grid.initial_halvings = 4;
    SurfaceInputs {
        params: MarketParams::paper_baseline(),
        schedule: ContributionSchedule::paper_baseline(),
        gamma,
        grid,
        options: SolverOptions::default(),
    }
}

#[test]
fn round_trip_is_bit_exact() {
    let inputs = coarse_inputs(5.0);
    let surface = inputs.solve().unwrap();
    let mut buf = Vec::new();
    write_surface(&mut buf, &SurfaceHeader::new(&inputs, &surface), &surface).unwrap();
    assert!(buf.starts_with(format!("{MAGIC}\n").as_bytes()));
    let (header, back) = read_surface(buf.as_slice(), "mem").unwrap();
    assert_eq!(header.key, inputs.key());
    assert_eq!(header.gamma, 5.0);
    assert_eq!(back.times().len(), surface.times().len());
    assert!(back.times().iter().zip(surface.times()).all(|(a, b)| a.to_bits() == b.to_bits()));
    assert!(back.values().iter().zip(surface.values()).all(|(a, b)| a.to_bits() == b.to_bits()));
    assert_eq!(back.dz().to_bits(), surface.dz().to_bits());
    assert_eq!(back.z_min(), surface.z_min());
}

#[test]
fn key_covers_every_input() {
    let base = coarse_inputs(5.0);
    let mut keys = vec![base.key()];
    let mut v = base.clone();
    v.gamma = 5.000000001;
    keys.push(v.key());
    let mut v = base.clone();
    v.grid.dz = 0.04;
    keys.push(v.key());
    let mut v = base.clone();
    v.grid.store_every_t = 3;
    keys.push(v.key());
    let mut v = base.clone();
    v.options.robin_kappa = 0.5;
    keys.push(v.key());
    let mut v = base.clone();
    v.params = MarketParams::new(0.01, vec![0.02, 0.11], vec![0.0025, -0.000625, -0.000625, 0.0625]).unwrap();
    keys.push(v.key());
    let mut v = base.clone();
    v.schedule = ContributionSchedule::constant(40.0, 1.2).unwrap();
    keys.push(v.key());
    let mut sorted = keys.clone();
    sorted.sort();
    sorted.dedup();
    assert_eq!(sorted.len(), keys.len(), "{keys:?}");
    assert_eq!(base.key(), coarse_inputs(5.0).key());
    assert_eq!(base.key().len(), 64);
}

#[test]
fn solve_or_load_hits_the_second_time() {
    let dir = tempfile::tempdir().unwrap();
    let cache = SurfaceCache::new(dir.path());
    let inputs = coarse_inputs(8.0);
    assert!(!cache.contains(&inputs));
    assert!(cache.load(&inputs).unwrap().is_none());
    let (first, hit) = solve_or_load(&cache, &inputs).unwrap();
    assert!(!hit);
    assert!(cache.contains(&inputs));
    let (second, hit) = solve_or_load(&cache, &inputs).unwrap();
    assert!(hit);
    assert_eq!(first, second);
    let names: Vec<_> = fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(names.len(), 1, "no temporary files left behind: {names:?}");
    assert_eq!(cache.path(&inputs.key()).file_name().unwrap(), names[0]);
}

#[test]
fn corrupt_files_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cache = SurfaceCache::new(dir.path());
    let inputs = coarse_inputs(2.0);
    let (surface, _) = solve_or_load(&cache, &inputs).unwrap();
    let path = cache.path(&inputs.key());
    let good = fs::read(&path).unwrap();

    fs::write(&path, &good[..good.len() - 3]).unwrap();
    assert!(matches!(cache.load(&inputs), Err(CacheError::Corrupt { .. })));

    fs::write(&path, b"not a surface\n").unwrap();
    assert!(matches!(cache.load(&inputs), Err(CacheError::Corrupt { .. })));

    let mut bad_header = good.clone();
    let at = MAGIC.len() + 1;
    bad_header[at] = b'[';
    fs::write(&path, &bad_header).unwrap();
    assert!(matches!(cache.load(&inputs), Err(CacheError::Corrupt { .. })));

    // A valid file stored under another key.
    let other = coarse_inputs(3.0);
    fs::write(cache.path(&other.key()), &good).unwrap();
    let err = cache.load(&other).unwrap_err();
    assert!(err.to_string().contains("does not match"), "{err}");

    fs::write(&path, &good).unwrap();
    assert_eq!(cache.load(&inputs).unwrap().unwrap(), surface);
}
