use fedsched::cost::{total_flops, CostModel};
use fedsched::nn::{count_params, ModelArch};
use fedsched::schedule::{trainable_mask, validate_plan, Mode, SchedulePlan};

/// Every non-decreasing plan over `k` layers with `t_1 = 0` and entries
/// below `limit`.
fn plans(k: usize, limit: u64) -> Vec<Vec<u64>> {
    let mut out = vec![vec![0u64]];
    for _ in 1..k {
        out = out
            .into_iter()
            .flat_map(|p| {
                let last = *p.last().unwrap();
                (last..limit).map(move |t| {
                    let mut q = p.clone();
                    q.push(t);
                    q
                })
            })
            .collect();
    }
    out
}

#[test]
fn masks_are_prefixes_and_suffixes() {
    let total = 7;
    for k in 1..=3 {
        for rounds in plans(k, 6) {
            let vanilla = SchedulePlan::new(Mode::Vanilla, rounds.clone());
            let anti = SchedulePlan::new(Mode::Anti, rounds.clone());
            validate_plan(&vanilla, total).unwrap();
            for t in 0..total {
                let j = rounds.iter().filter(|&&tk| tk <= t).count();
                let v = trainable_mask(&vanilla, t, k);
                let a = trainable_mask(&anti, t, k);
                let expect_v: Vec<bool> = (0..k).map(|l| l < j).chain([false]).collect();
                let expect_a: Vec<bool> = (0..k).map(|l| l >= k - j).chain([false]).collect();
                assert_eq!(v.flags(), expect_v, "vanilla {rounds:?} t={t}");
                assert_eq!(a.flags(), expect_a, "anti {rounds:?} t={t}");
                assert!(j >= 1, "t_1 = 0 keeps a layer training");
            }
        }
    }
}

#[test]
fn modes_coincide_after_last_unfreeze() {
    for k in 1..=3 {
        for rounds in plans(k, 6) {
            let last = *rounds.last().unwrap();
            for t in last..last + 3 {
                let masks: Vec<Vec<bool>> = [Mode::Vanilla, Mode::Anti, Mode::FedBabu]
                    .iter()
                    .map(|&m| {
                        trainable_mask(&SchedulePlan::new(m, rounds.clone()), t, k)
                            .flags()
                            .to_vec()
                    })
                    .collect();
                assert_eq!(masks[0], masks[1]);
                assert_eq!(masks[1], masks[2]);
                let fedavg = trainable_mask(&SchedulePlan::new(Mode::FedAvg, rounds.clone()), t, k);
                assert!(fedavg.flags().iter().all(|&f| f));
            }
        }
    }
}

#[test]
fn head_never_scheduled() {
    for k in 1..=3 {
        for rounds in plans(k, 5) {
            for mode in [Mode::Vanilla, Mode::Anti, Mode::FedBabu] {
                for t in 0..8 {
                    assert!(!trainable_mask(&SchedulePlan::new(mode, rounds.clone()), t, k).head());
                }
            }
        }
    }
}

#[test]
fn delaying_an_unfreeze_never_costs_more() {
    let model = CostModel {
        samples_per_client: 50,
        clients_per_round: 3,
        rounds: 9,
        local_epochs: 1,
        counts: count_params(&ModelArch::reference(10)),
    };
    for rounds in plans(3, 9) {
        for mode in [Mode::Vanilla, Mode::Anti] {
            let base =
                total_flops(&SchedulePlan::new(mode, rounds.clone()), &model, false).total_flops;
            for k in 1..3 {
                let mut later = rounds.clone();
                later[k] += 1;
                if later[k] >= 9 || (k + 1 < 3 && later[k] > later[k + 1]) {
                    continue;
                }
                let delayed =
                    total_flops(&SchedulePlan::new(mode, later.clone()), &model, false).total_flops;
                assert!(delayed <= base, "{mode} {rounds:?} -> {later:?}");
            }
        }
    }
}
