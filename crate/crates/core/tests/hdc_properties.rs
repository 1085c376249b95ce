use fslhd_core::crp::{CrpConfig, CrpEncoder, Hypervector};
use fslhd_core::early_exit::PipelineConfig;
use fslhd_core::harness::{run_benchmark, synthetic_gaussian, BranchBank, EpisodeSpec, GaussianSpec, HarnessConfig};
use fslhd_core::hdc::{batched_sums, infer, single_pass_sums, train_single_pass, ClassMemory, ClassSums};
use proptest::prelude::*;

fn labeled(values: Vec<Vec<i32>>, classes: usize) -> Vec<(Vec<i32>, usize)> {
    values.into_iter().enumerate().map(|(i, v)| (v, i % classes)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn batched_matches_single_pass(
        feats in proptest::collection::vec(proptest::collection::vec(0i32..16, 32), 6..15),
        seed in any::<u64>(),
    ) {
        let enc = CrpEncoder::new(CrpConfig::new(32, 64, seed).unwrap()).unwrap();
        let data = labeled(feats, 3);
        let encoded: Vec<(Hypervector, usize)> = data.iter().map(|(x, l)| (enc.encode(x).unwrap(), *l)).collect();
        prop_assert_eq!(batched_sums(&enc, &data).unwrap(), single_pass_sums(&encoded).unwrap());
    }

    #[test]
    fn aggregation_ignores_order(
        hvs in proptest::collection::vec(proptest::collection::vec(-1000i32..1000, 16), 4..12),
        rotate in 0usize..12,
    ) {
        let mut data: Vec<(Hypervector, usize)> =
            labeled(hvs, 2).into_iter().map(|(v, l)| (Hypervector::new(v), l)).collect();
        let a = single_pass_sums(&data).unwrap();
        let k = rotate % data.len();
        data.rotate_left(k);
        data.reverse();
        prop_assert_eq!(single_pass_sums(&data).unwrap(), a);
    }

    #[test]
    fn common_scaling_keeps_prediction(
        hvs in proptest::collection::vec(proptest::collection::vec(-200i32..200, 32), 3),
        q in proptest::collection::vec(-200i32..200, 32),
        a in 1i32..50,
        bits in prop_oneof![Just(16u8), Just(8u8), Just(4u8)],
    ) {
        // Either every class is stored exactly at both scales (16 bits) or
        // every class is rescaled at both, so the stored values coincide.
        let qmax = (1i32 << (bits - 1)) - 1;
        prop_assume!(bits == 16 || hvs.iter().all(|h| h.iter().any(|v| v.abs() > qmax)));
        let cfg = CrpConfig::new(16, 32, 0).unwrap();
        let mem = |scale: i32| {
            let data: Vec<(Hypervector, usize)> = hvs
                .iter()
                .enumerate()
                .map(|(i, h)| (Hypervector::new(h.iter().map(|v| v * scale).collect()), i))
                .collect();
            train_single_pass(&data, cfg, bits).unwrap()
        };
        let base = infer(&Hypervector::new(q.clone()), &mem(1), 0).unwrap();
        let scaled = infer(&Hypervector::new(q.iter().map(|v| v * a).collect()), &mem(a), 0).unwrap();
        prop_assert_eq!(scaled.class_id, base.class_id);
    }

    #[test]
    fn unquantized_memory_recovers_each_support(
        hvs in proptest::collection::vec(proptest::collection::vec(-30000i32..30000, 64), 2..10),
    ) {
        let distinct = hvs.iter().enumerate().all(|(i, a)| hvs[..i].iter().all(|b| a != b));
        prop_assume!(distinct);
        let mut sums = ClassSums::new(hvs.len(), 64);
        for (c, h) in hvs.iter().enumerate() {
            sums.add(c, h).unwrap();
        }
        let m = ClassMemory::new(16, vec![sums.quantize(16, CrpConfig::new(16, 64, 0).unwrap()).unwrap()]).unwrap();
        for (c, h) in hvs.iter().enumerate() {
            prop_assert_eq!(infer(&Hypervector::new(h.clone()), &m, 0).unwrap().class_id, c);
        }
    }
}

#[test]
fn wider_class_vectors_are_not_worse() {
    let d = synthetic_gaussian(&GaussianSpec { feature_dim: 64, per_class: 12, ..Default::default() }).unwrap();
    let bank = BranchBank::extract(&d, None, Default::default(), None).unwrap();
    let spec = EpisodeSpec { n_way: 5, k_shot: 5, q_query: 5, seed: 100 };
    let acc = |bits| {
        let cfg = HarnessConfig {
            pipeline: PipelineConfig { hv_dim: 1024, class_bits: bits, ..Default::default() },
            policy: None,
        };
        run_benchmark(&d, &bank, &spec, 100, &cfg).unwrap().1.hdc_accuracy
    };
    let (a16, a1) = (acc(16), acc(1));
    assert!(a16 >= a1 - 0.05, "16-bit {a16}, 1-bit {a1}");
}
