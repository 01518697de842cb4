use denspu::config::{DataSource, PipelineConfig, Profile};
use denspu::metrics::negative_purity;
use denspu::pipeline::{augment, detect, fit_autoencoder, prepare_split};
use denspu::selection::{rank_leftovers, RankMode};

#[test]
fn top_ranked_leftovers_are_at_least_as_pure_as_all_leftovers() {
    let cfg = PipelineConfig::defaults(Profile::Desk, DataSource::Blobs);
    for seed in 0..3 {
        let split = prepare_split(&cfg, seed).unwrap();
        let (model, _) = fit_autoencoder(&cfg, &split, seed).unwrap();
        let z_l = model.encode(&split.positive_labeled).unwrap();
        let z_u = model.encode(&split.unlabeled).unwrap();
        let z_nu = augment(&cfg, &z_l, seed).unwrap().unwrap();
        let (_, partition) = detect(&cfg, &z_l, Some(&z_nu.embeddings), &z_u, seed).unwrap();
        let truth = split.unlabeled_truth_for_evaluation();
        for mode in [RankMode::ForestScore, RankMode::MinDistance] {
            let positives = z_l.vstack(&z_nu.embeddings).unwrap();
            let ranked = rank_leftovers(&partition, &z_u, &positives, mode).unwrap();
            let ids: Vec<usize> = ranked.ids().collect();
            let full = negative_purity(&ids, truth).unwrap();
            for q in [0.1, 0.25, 0.5] {
                let top = &ids[..((q * ids.len() as f64).ceil() as usize).max(1)];
                let p = negative_purity(top, truth).unwrap();
                assert!(p >= full, "seed {seed}, {mode}, q {q}: {p} < {full}");
            }
        }
    }
}
