mod common;

use infoplane::selection::{
    cmi_permutation_step, select_filter_count, Decision, PermutationTestConfig, RankingRule,
};
use infoplane::{EntropyConfig, KernelSpec};

fn test_cfg(seed: u64) -> PermutationTestConfig {
    PermutationTestConfig {
        permutations: 100,
        significance: 0.05,
        seed,
    }
}

fn step(informative: bool, seed: u64) -> Decision {
    let c = common::permutation_case(32, informative, seed);
    let r = cmi_permutation_step(
        &[],
        &c.remaining,
        &c.labels,
        0,
        &c.samples,
        &c.kernel,
        &EntropyConfig::default(),
        &test_cfg(seed),
    )
    .unwrap();
    assert!((0.0..=1.0).contains(&r.p_value));
    assert_eq!(r.decision == Decision::Continue, r.p_value <= 0.05);
    r.decision
}

#[test]
fn copy_of_labels_continues_noise_stops() {
    let trials = 30;
    let cont = (0..trials)
        .filter(|&s| step(true, s) == Decision::Continue)
        .count();
    let stop = (0..trials)
        .filter(|&s| step(false, 1000 + s) == Decision::Stop)
        .count();
    assert!(cont * 10 >= trials as usize * 9, "continue {cont}/{trials}");
    assert!(stop * 10 >= trials as usize * 9, "stop {stop}/{trials}");
}

#[test]
fn informative_bits_are_all_selected() {
    let trials = 20;
    let mut hits = 0;
    for seed in 0..trials {
        let (labels, filters) = common::bit_filters(32, seed);
        let r = select_filter_count(
            &filters,
            &labels,
            RankingRule::Given,
            &KernelSpec::LabelDelta,
            &EntropyConfig::default(),
            &test_cfg(seed),
        )
        .unwrap();
        assert_eq!(r.decision, Decision::Stop);
        hits += usize::from(r.selected_count == 3);
    }
    assert!(hits * 10 >= trials as usize * 9, "N = 3 in {hits}/{trials}");
}

#[test]
fn all_noise_selection_is_deterministic_and_small() {
    let mut small = 0;
    for seed in 0..10u64 {
        let mut filters = Vec::new();
        for k in 0..5 {
            let c = common::permutation_case(32, false, 100 * seed + k);
            filters.push(infoplane::selection::Filter {
                gram: c.remaining[0].clone(),
                samples: c.samples,
            });
        }
        let labels = common::permutation_case(32, false, 100 * seed).labels;
        let run = || {
            select_filter_count(
                &filters,
                &labels,
                RankingRule::LabelInformation,
                &KernelSpec::rbf_silverman(5.0),
                &EntropyConfig::default(),
                &test_cfg(seed),
            )
            .unwrap()
        };
        let a = run();
        assert_eq!(a, run());
        small += usize::from(a.selected_count <= 1);
    }
    assert!(small >= 8, "N <= 1 in {small}/10");
}
