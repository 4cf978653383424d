//! Library results checked against independent brute-force or third-party
//! computations on random instances.

mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use radhop::anomaly::{calibrate_threshold, detect_candidates, hot_squares, AnomalyMap};
use radhop::metrics::connected_components;
use radhop::volume::Volume;

use common::oracle;

const INSTANCES: u64 = 100;

fn check(name: &str, error: fn(u64) -> f64, base: u64) {
    for seed in base..base + INSTANCES {
        let e = error(seed);
        assert!(e < 1e-8, "{name}: seed {seed} deviates by {e}");
    }
}

#[test]
fn saab_matches_nalgebra_eigendecomposition() {
    check("saab", oracle::saab_error, 0);
}

#[test]
fn dft_matches_exhaustive_boundary_scan() {
    check("dft", oracle::dft_error, 1000);
}

#[test]
fn ap_matches_threshold_sweep() {
    check("ap", oracle::ap_error, 2000);
}

#[test]
fn auroc_matches_all_pairs() {
    check("auroc", oracle::auroc_error, 3000);
}

fn find(parent: &mut [usize], i: usize) -> usize {
    let mut r = i;
    while parent[r] != r {
        r = parent[r];
    }
    parent[i] = r;
    r
}

#[test]
fn components_match_union_find() {
    for seed in 0..INSTANCES {
        let mut rng = ChaCha8Rng::seed_from_u64(4000 + seed);
        let dims = [rng.random_range(1..5), rng.random_range(1..9), rng.random_range(1..9)];
        let len = dims.iter().product();
        let data: Vec<f64> = (0..len).map(|_| rng.random_range(0.0..1.0)).collect();
        let vol = Volume::new(dims, [1.0; 3], data).unwrap();
        let t = 0.6;
        let on = |i: usize| vol.data()[i] >= t;
        let mut parent: Vec<usize> = (0..len).collect();
        for i in (0..len).filter(|&i| on(i)) {
            let [z, y, x] = vol.coords(i);
            let mut neighbours = Vec::new();
            if x + 1 < dims[2] {
                neighbours.push(vol.index(z, y, x + 1));
            }
            if y + 1 < dims[1] {
                neighbours.push(vol.index(z, y + 1, x));
            }
            if z + 1 < dims[0] {
                neighbours.push(vol.index(z + 1, y, x));
            }
            for j in neighbours.into_iter().filter(|&j| on(j)) {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                parent[a.max(b)] = a.min(b);
            }
        }
        let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
        for i in (0..len).filter(|&i| on(i)) {
            let root = find(&mut parent, i);
            groups.entry(root).or_default().push(i);
        }
        let mut want: Vec<Vec<usize>> = groups.into_values().collect();
        want.sort();
        let mut got = connected_components(&vol, t);
        got.sort();
        assert_eq!(got, want, "seed {seed}");
    }
}

#[test]
fn calibration_matches_brute_force() {
    for seed in 0..INSTANCES {
        let mut rng = ChaCha8Rng::seed_from_u64(5000 + seed);
        let n = rng.random_range(2..100);
        let mut units: Vec<(f64, bool)> = (0..n)
            .map(|_| ((rng.random_range(0..30) as f64) / 30.0, rng.random_bool(0.3)))
            .collect();
        units[0].1 = true;
        let r = rng.random_range(0.5..1.0);
        let pos = units.iter().filter(|u| u.1).count() as f64;
        let best = units
            .iter()
            .map(|u| u.0)
            .filter(|&t| units.iter().filter(|u| u.1 && u.0 >= t).count() as f64 / pos >= r)
            .fold(f64::NEG_INFINITY, f64::max);
        let c = calibrate_threshold(&units, r).unwrap();
        assert_eq!(c.threshold, best, "seed {seed}");
        assert!(c.tpr >= r);
    }
}

fn random_map(rng: &mut ChaCha8Rng) -> AnomalyMap {
    let (rows, cols) = (rng.random_range(2..9), rng.random_range(2..9));
    AnomalyMap {
        slice: 0,
        rows,
        cols,
        scores: (0..rows * cols).map(|_| (rng.random_range(0..10) as f64) / 10.0).collect(),
        active: (0..rows * cols).map(|_| rng.random_bool(0.9)).collect(),
    }
}

#[test]
fn candidate_dedup_matches_greedy_reference() {
    for seed in 0..INSTANCES {
        let mut rng = ChaCha8Rng::seed_from_u64(6000 + seed);
        let map = random_map(&mut rng);
        let t = 0.3;
        let squares = hot_squares(&map, t);
        // Reference: repeatedly take the best remaining square and drop all
        // squares sharing a unit with it.
        let mut pool = squares.clone();
        let mut want = Vec::new();
        while !pool.is_empty() {
            let best = (0..pool.len())
                .max_by(|&a, &b| {
                    pool[a]
                        .mean_score
                        .total_cmp(&pool[b].mean_score)
                        .then((pool[b].row, pool[b].col).cmp(&(pool[a].row, pool[a].col)))
                })
                .unwrap();
            let keep = pool[best];
            pool.retain(|s| !(s.row.abs_diff(keep.row) < 2 && s.col.abs_diff(keep.col) < 2));
            want.push(keep);
        }
        want.sort_by_key(|c| (c.row, c.col));
        assert_eq!(detect_candidates(&map, t), want, "seed {seed}");
    }
}
