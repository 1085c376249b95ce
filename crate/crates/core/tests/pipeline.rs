use fslhd_core::early_exit::{infer_early_exit, train_branches, ExitPolicy, PipelineConfig};
use fslhd_core::extractor::{
    bundled_model, decode_fslm, encode_fslm, run_model, ConvWeights, ExecMode, Layer, ModelGraph, RunOptions,
};
use fslhd_core::harness::{
    run_benchmark, sample_episode, synthetic_gaussian, synthetic_images, BranchBank, EpisodeSpec, GaussianSpec,
    HarnessConfig, ImageSpec,
};
use fslhd_core::hdc::{decode_fslh, encode_fslh};
use fslhd_core::numerics::Tensor;

#[test]
fn well_separated_clusters_are_easy_for_both_classifiers() {
    let d = synthetic_gaussian(&GaussianSpec { separation: 4.0, ..Default::default() }).unwrap();
    let bank = BranchBank::extract(&d, None, Default::default(), None).unwrap();
    let spec = EpisodeSpec { n_way: 5, k_shot: 5, q_query: 10, seed: 0 };
    let (_, s) = run_benchmark(&d, &bank, &spec, 200, &HarnessConfig::default()).unwrap();
    assert!(s.hdc_accuracy > 0.95 && s.knn_accuracy > 0.95, "{s:?}");
}

#[test]
fn zero_image_gives_zero_branches() {
    let model = bundled_model(4);
    let run = run_model(&model, &Tensor::zeros(vec![3, 16, 16]).unwrap(), RunOptions::default()).unwrap();
    assert_eq!(run.branches.len(), 4);
    assert!(run.branches.iter().all(|b| b.values.iter().all(|&v| v == 0.0)));
}

#[test]
fn branch_features_ignore_translation_of_isolated_content() {
    let w: Vec<f32> = (0..4 * 2 * 9).map(|i| ((i * 7 % 11) as f32 - 5.0) / 8.0).collect();
    let model = ModelGraph::new(
        [2, 12, 12],
        vec![
            Layer::Conv(ConvWeights::Dense {
                weights: Tensor::from_f32(vec![4, 2, 3, 3], w).unwrap(),
                stride: 1,
                padding: 0,
            }),
            Layer::Relu,
        ],
    )
    .unwrap();
    let place = |dy: usize, dx: usize| {
        let mut x = vec![0.0f32; 2 * 12 * 12];
        for c in 0..2 {
            for y in 0..3 {
                for xx in 0..3 {
                    x[c * 144 + (4 + y + dy) * 12 + 4 + xx + dx] = (1 + c + y * 3 + xx) as f32 * 0.25;
                }
            }
        }
        Tensor::from_f32(vec![2, 12, 12], x).unwrap()
    };
    let opts = RunOptions::new(ExecMode::Direct);
    let base = run_model(&model, &place(0, 0), opts).unwrap().branches;
    assert_eq!(run_model(&model, &place(1, 0), opts).unwrap().branches, base);
    assert_eq!(run_model(&model, &place(0, 2), opts).unwrap().branches, base);
}

#[test]
fn serialized_artifacts_reproduce_predictions() {
    let model = bundled_model(8).clustered(16, 16, 3).unwrap();
    let reloaded = decode_fslm(&encode_fslm(&model)).unwrap();
    assert_eq!(reloaded, model);

    let d = synthetic_images(&ImageSpec { n_classes: 4, per_class: 5, ..Default::default() }).unwrap();
    let e = sample_episode(&d, &EpisodeSpec { n_way: 4, k_shot: 2, q_query: 3, seed: 2 }).unwrap();
    let cfg = PipelineConfig { hv_dim: 512, seed: 5, ..Default::default() };
    let support: Vec<(Tensor, usize)> = e.support.iter().map(|&(i, l)| (d.image(i).unwrap(), l)).collect();
    let memory = train_branches(&model, &support, &cfg).unwrap();
    let memory2 = decode_fslh(&encode_fslh(&memory)).unwrap();
    assert_eq!(memory2, memory);
    let policy = ExitPolicy::new(2, 2).unwrap();
    for &(i, _) in &e.query {
        let img = d.image(i).unwrap();
        assert_eq!(
            infer_early_exit(&model, &memory, &img, &policy, &cfg).unwrap(),
            infer_early_exit(&reloaded, &memory2, &img, &policy, &cfg).unwrap()
        );
    }
}
