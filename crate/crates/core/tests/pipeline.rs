mod common;

use radhop::pipeline::{predict_study, train_pipeline};
use radhop::stage1::{predict_heatmap, PredictionCache};
use radhop::{Error, Model64};

use common::{small_cohort, small_config};

#[test]
fn small_cohort_trains_and_round_trips() {
    let studies = small_cohort(12, 11);
    let (model, report) = train_pipeline::<f64>(&studies, &small_config()).unwrap();
    assert_eq!(report.train_studies + report.holdout_studies, 12);
    assert_eq!(report.parameter_count, model.parameter_count());

    let bytes = model.to_bytes();
    let back = Model64::from_bytes(&bytes).unwrap();
    assert_eq!(back.to_bytes(), bytes);
    assert_eq!(back.parameter_count(), report.parameter_count);

    let p = predict_study(&back, &studies[0], false).unwrap();
    let (refined, records) = p.refined.as_ref().unwrap();
    assert_eq!(records.len(), p.candidates.len());
    assert!(refined.data().iter().all(|v| (0.0..=1.0).contains(v)));
    let s1 = predict_study(&back, &studies[0], true).unwrap();
    assert!(s1.refined.is_none());
    assert_eq!(s1.heatmap, p.heatmap);

    // Stride-4 heatmap agrees with the dense one wherever a gland voxel is its
    // own grid point.
    let study = &studies[0];
    let mut cache = PredictionCache::default();
    let coarse = predict_heatmap(study, &back.stage1, 4, &mut cache).unwrap();
    let dense = predict_heatmap(study, &back.stage1, 1, &mut PredictionCache::default()).unwrap();
    let [d, h, w] = study.dims();
    let mut checked = 0;
    for z in 0..d {
        for y in (4..h).step_by(4) {
            for x in (4..w).step_by(4) {
                if study.in_gland(z, y, x) {
                    assert_eq!(coarse.get(z, y, x), dense.get(z, y, x));
                    checked += 1;
                }
            }
        }
    }
    assert!(checked > 0);
}

#[test]
fn corrupted_container_is_rejected() {
    let studies = small_cohort(12, 11);
    let (model, _) = train_pipeline::<f64>(&studies, &small_config()).unwrap();
    let mut bytes = model.to_bytes();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x40;
    assert!(matches!(Model64::from_bytes(&bytes), Err(Error::Format(_))));
    assert!(Model64::from_bytes(&bytes[..bytes.len() - 3]).is_err());
}

#[test]
fn clean_only_cohort_is_degenerate() {
    let studies: Vec<_> = small_cohort(6, 5).into_iter().filter(|s| !s.has_lesion()).collect();
    let err = train_pipeline::<f64>(&studies, &small_config()).unwrap_err();
    assert!(err.is_degenerate(), "{err}");
}
