//! Invariants checked over generated inputs.

use proptest::prelude::*;

use radhop::anomaly::{hot_squares, AnomalyMap, Candidate};
use radhop::config::RunConfig;
use radhop::metrics::{auroc, average_precision};
use radhop::radiomics::{extract_radiomics, Plane, RadiomicsConfig, FAMILY_SIZES};
use radhop::saab::SaabKernel;
use radhop::stage1::{bin_targets, hard_negative_resample, MiningConfig};
use radhop::stage2::refine_heatmap;
use radhop::volume::Volume;

/// Index of the first texture feature (after first order and shape).
const TEXTURE_START: usize = 29;

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * (1.0 + a.abs().max(b.abs()))
}

fn plane_values(side: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, side * side)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn saab_basis_is_orthonormal_and_invertible(
        x in prop::collection::vec(-3.0f64..3.0, 9 * 40),
        probe in prop::collection::vec(-3.0f64..3.0, 9),
    ) {
        let k = SaabKernel::fit(&x, 3, 0.0).unwrap();
        let a = k.anchors();
        for i in 0..a.len() {
            for j in 0..a.len() {
                let d: f64 = a[i].iter().zip(&a[j]).map(|(p, q)| p * q).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                prop_assert!((d - want).abs() < 1e-8);
            }
        }
        if a.len() == 9 {
            let back = k.reconstruct(&k.apply(&probe).unwrap()).unwrap();
            for (p, q) in probe.iter().zip(&back) {
                prop_assert!((p - q).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn texture_features_ignore_affine_intensity_changes(
        v in plane_values(10),
        scale in 0.1f64..10.0,
        shift in -5.0f64..5.0,
    ) {
        let mask = vec![true; 100];
        let cfg = RadiomicsConfig { levels: 8, ..RadiomicsConfig::default() };
        let plane = |values: &[f64]| -> Vec<f64> {
            extract_radiomics(&Plane { height: 10, width: 10, values, mask: &mask, spacing: [1.0, 1.0] }, &cfg)
                .unwrap()
        };
        let moved: Vec<f64> = v.iter().map(|x| scale * x + shift).collect();
        let (a, b) = (plane(&v), plane(&moved));
        // Quantization may round a value across a level edge; compare only
        // when the level maps agree.
        let levels = |vals: &[f64]| {
            let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            vals.iter().map(|x| ((((x - lo) / (hi - lo)) * 8.0).floor() as usize + 1).min(8)).collect::<Vec<_>>()
        };
        prop_assume!(levels(&v) == levels(&moved));
        for k in TEXTURE_START..a.len() {
            prop_assert!(close(a[k], b[k]), "feature {}: {} vs {}", k, a[k], b[k]);
        }
    }

    #[test]
    fn radiomics_ignore_roi_translation(
        v in plane_values(6),
        dy in 0usize..5,
        dx in 0usize..5,
    ) {
        let cfg = RadiomicsConfig { levels: 8, ..RadiomicsConfig::default() };
        let small = extract_radiomics(
            &Plane { height: 6, width: 6, values: &v, mask: &[true; 36], spacing: [1.0, 1.0] },
            &cfg,
        )
        .unwrap();
        let mut values = vec![7.5; 144];
        let mut mask = vec![false; 144];
        for y in 0..6 {
            for x in 0..6 {
                values[(y + dy) * 12 + x + dx] = v[y * 6 + x];
                mask[(y + dy) * 12 + x + dx] = true;
            }
        }
        let big = extract_radiomics(
            &Plane { height: 12, width: 12, values: &values, mask: &mask, spacing: [1.0, 1.0] },
            &cfg,
        )
        .unwrap();
        for (k, (a, b)) in small.iter().zip(&big).enumerate() {
            prop_assert!(close(*a, *b), "feature {}: {} vs {}", k, a, b);
        }
    }

    #[test]
    fn radiomics_are_finite_for_any_roi(
        v in plane_values(5),
        mask in prop::collection::vec(any::<bool>(), 25),
    ) {
        prop_assume!(mask.iter().filter(|&&m| m).count() >= 2);
        let f = extract_radiomics(
            &Plane { height: 5, width: 5, values: &v, mask: &mask, spacing: [0.7, 0.7] },
            &RadiomicsConfig::default(),
        )
        .unwrap();
        prop_assert_eq!(f.len(), 104);
        prop_assert!(f.iter().all(|x| x.is_finite()), "{:?}", f);
    }

    #[test]
    fn raw_hot_squares_shrink_as_threshold_rises(
        scores in prop::collection::vec(0.0f64..1.0, 36),
        t1 in 0.0f64..1.0,
        t2 in 0.0f64..1.0,
    ) {
        let map = AnomalyMap { slice: 0, rows: 6, cols: 6, scores, active: vec![true; 36] };
        let (lo, hi) = (t1.min(t2), t1.max(t2));
        let low: Vec<Candidate> = hot_squares(&map, lo);
        for c in hot_squares(&map, hi) {
            prop_assert!(low.contains(&c));
        }
    }

    #[test]
    fn ap_ignores_monotone_score_transforms(
        hits in prop::collection::vec((0u8..20, any::<bool>()), 1..60),
        extra in 0usize..4,
    ) {
        let total = hits.iter().filter(|h| h.1).count() + extra;
        prop_assume!(total > 0);
        let a: Vec<(f64, bool)> = hits.iter().map(|&(s, l)| (s as f64 / 20.0, l)).collect();
        let b: Vec<(f64, bool)> = a.iter().map(|&(s, l)| ((3.0 * s).exp() - 1.0, l)).collect();
        let (x, y) = (average_precision(&a, total).unwrap(), average_precision(&b, total).unwrap());
        prop_assert!((x.ap - y.ap).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&x.ap));
    }

    #[test]
    fn auroc_flips_with_the_scores(
        scores in prop::collection::vec(0u8..10, 2..50),
        labels in prop::collection::vec(any::<bool>(), 50),
    ) {
        let labels = &labels[..scores.len()];
        prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
        let s: Vec<f64> = scores.iter().map(|&v| v as f64).collect();
        let neg: Vec<f64> = s.iter().map(|v| -v).collect();
        let (a, b) = (auroc(&s, labels).unwrap(), auroc(&neg, labels).unwrap());
        prop_assert!((a + b - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mining_targets_and_resampling(
        soft in prop::collection::vec(0.0f64..=1.0, 1..400),
        total in 0usize..500,
        lambda in 0.05f64..2.0,
    ) {
        let targets = bin_targets(total, 10, lambda);
        prop_assert_eq!(targets.iter().sum::<usize>(), total);
        prop_assert!(targets.windows(2).all(|w| w[0] + 1 >= w[1]));
        let cfg = MiningConfig { lambda, ..MiningConfig::default() };
        let chosen = hard_negative_resample(&soft, total, &cfg, 9).unwrap();
        prop_assert_eq!(chosen.len(), total.min(soft.len()));
        prop_assert!(chosen.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn refinement_stays_in_range_and_local(
        data in prop::collection::vec(0.0f64..1.0, 2 * 32 * 32),
        probs in prop::collection::vec(0.0f64..=1.0, 3),
        cells in prop::collection::vec((0usize..2, 0usize..3, 0usize..3), 3),
    ) {
        // Sparse heat: most voxels cold.
        let data: Vec<f64> = data.iter().map(|&v| if v < 0.8 { 0.0 } else { v }).collect();
        let heat = Volume::new([2, 32, 32], [1.0; 3], data).unwrap();
        let cands: Vec<(Candidate, f64)> = cells
            .iter()
            .zip(&probs)
            .map(|(&(slice, row, col), &p)| (Candidate { slice, row, col, mean_score: 0.5 }, p))
            .collect();
        let (refined, records) = refine_heatmap(&heat, &cands, 0.05);
        prop_assert_eq!(records.len(), cands.len());
        for (i, (&a, &b)) in heat.data().iter().zip(refined.data()).enumerate() {
            prop_assert!((0.0..=1.0).contains(&b));
            if a == 0.0 {
                prop_assert_eq!(b, 0.0);
            }
            let [z, y, x] = heat.coords(i);
            let in_block = cands.iter().any(|(c, _)| {
                let (y0, x0, s) = c.voxel_rect();
                c.slice == z && (y0..y0 + s).contains(&y) && (x0..x0 + s).contains(&x)
            });
            if !in_block && a != b {
                // Changed voxels outside every block must be connected heat.
                prop_assert!(a >= 0.05);
            }
        }
    }
}

#[test]
fn config_echo_round_trips() {
    let c = RunConfig::parse("seed = 3\ndft_keep = 200\nradiomics_distances = 1,2,3\n").unwrap();
    assert_eq!(RunConfig::parse(&c.to_text()).unwrap(), c);
}

#[test]
fn radiomics_family_sizes() {
    let total: usize = FAMILY_SIZES.iter().map(|f| f.1).sum();
    assert_eq!(total, 104);
}
