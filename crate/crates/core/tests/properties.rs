use catalysis_core::conference::{eligible_pairs, validate, Conference};
use catalysis_core::dynamics::{Dynamics, LinearParams, ModelParams, WeakeningForm};
use catalysis_core::interaction::{InteractionProfile, ScheduleIndex};
use catalysis_core::model_selection::{aic, relative_likelihood};
use catalysis_core::stats::{bootstrap_mean, mann_whitney_u, wilcoxon_signed_rank, Alternative};
use catalysis_core::synth::{generate, SynthSpec};
use proptest::prelude::*;

fn synthetic(seed: u64, n_fellows: usize) -> Conference {
    generate(&SynthSpec { seed, n_fellows, ..SynthSpec::default() }).expect("feasible spec")
}

fn sample(len: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-50i32..50, len).prop_map(|v| v.into_iter().map(|x| x as f64 / 4.0).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn eligible_and_excluded_pairs_cover_all_fellow_pairs(seed in 0u64..1000, n in 40usize..=55) {
        let c = synthetic(seed, n);
        prop_assert!(validate(&c).is_empty());
        let eligible = eligible_pairs(&c);
        let fellow = |id: &str| c.participant(id).is_some_and(|p| p.is_fellow());
        let excluded = c
            .prior_knowledge
            .iter()
            .filter(|(pair, k0)| *k0 >= 5 && fellow(&pair.first) && fellow(&pair.second))
            .count();
        prop_assert_eq!(eligible.len() + excluded, n * (n - 1) / 2);
        prop_assert!(eligible.windows(2).all(|w| w[0].pair < w[1].pair));
        let teams = c.collaborating_pairs();
        for o in &eligible {
            prop_assert_eq!(o.collaborated, teams.contains(&o.pair));
        }
    }

    #[test]
    fn conference_json_round_trips(seed in 0u64..1000) {
        let c = synthetic(seed, 50);
        let back = Conference::from_json(&c.to_json()).unwrap();
        prop_assert_eq!(back, c);
    }

    #[test]
    fn intensity_never_exceeds_i_max(seed in 0u64..1000, a in 0.0f64..2.0, i_max in 0.1f64..5.0) {
        let c = synthetic(seed, 50);
        let index = ScheduleIndex::new(&c);
        for o in eligible_pairs(&c).iter().step_by(37) {
            let p = catalysis_core::interaction::profile_from_index(&index, &o.pair, o.k0, a, i_max).unwrap();
            prop_assert!(p.max_intensity() <= i_max * (1.0 + 1e-12));
        }
    }

    #[test]
    fn linear_trajectories_stay_in_unit_interval(
        s in 0.001f64..2.0,
        w in 0.001f64..2.0,
        p_min in 0.0f64..0.5,
        span in 0.01f64..0.5,
        levels in prop::collection::vec((1.0f64..120.0, 0.0f64..1.0), 1..8),
    ) {
        let params = ModelParams::Linear(LinearParams {
            s, w, p_min, p_max: p_min + span, i_max: 1.0, a: 0.1, weakening: WeakeningForm::default(),
        });
        let profile = InteractionProfile::from_pieces(0.0, &levels);
        let tr = Dynamics::new(&params).unwrap().integrate(&profile, p_min, 0.5).unwrap();
        prop_assert!(tr.probabilities.iter().all(|p| (0.0..=1.0).contains(p)));
        prop_assert!(tr.times.windows(2).all(|t| t[0] < t[1]));
        prop_assert_eq!(*tr.times.last().unwrap(), profile.t_end);
    }

    #[test]
    fn mann_whitney_ignores_monotone_transforms(x in sample(1..15), y in sample(1..15)) {
        let raw = mann_whitney_u(&x, &y, Alternative::TwoSided).unwrap();
        let f = |v: &Vec<f64>| v.iter().map(|t| (t / 5.0).exp() + 3.0 * t).collect::<Vec<_>>();
        let moved = mann_whitney_u(&f(&x), &f(&y), Alternative::TwoSided).unwrap();
        prop_assert_eq!(raw.statistic, moved.statistic);
        prop_assert!((raw.p_value - moved.p_value).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&raw.p_value));
    }

    #[test]
    fn wilcoxon_ignores_order(d in sample(1..30), rotate in 0usize..30) {
        let mut permuted = d.clone();
        permuted.reverse();
        let k = rotate % permuted.len();
        permuted.rotate_left(k);
        for alt in [Alternative::TwoSided, Alternative::Greater, Alternative::Less] {
            let a = wilcoxon_signed_rank(&d, alt).unwrap();
            let b = wilcoxon_signed_rank(&permuted, alt).unwrap();
            prop_assert!((a.p_value - b.p_value).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&a.p_value));
        }
    }

    #[test]
    fn bootstrap_interval_brackets_mean(x in sample(2..40), seed in any::<u64>()) {
        let a = bootstrap_mean(&x, 200, 0.95, seed).unwrap();
        let b = bootstrap_mean(&x, 200, 0.95, seed).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert!(a.ci_low <= a.mean + 1e-12 && a.mean <= a.ci_high + 1e-12);
    }

    #[test]
    fn aic_ranking_ignores_a_common_shift(
        nll in prop::collection::vec(0.0f64..500.0, 2..8),
        shift in -100.0f64..100.0,
    ) {
        let ks: Vec<usize> = (0..nll.len()).collect();
        let rel = |offset: f64| {
            let aics: Vec<f64> = nll.iter().zip(&ks).map(|(n, &k)| aic(n + offset, k)).collect();
            let min = aics.iter().cloned().fold(f64::INFINITY, f64::min);
            aics.iter().map(|&a| relative_likelihood(a, min)).collect::<Vec<_>>()
        };
        let (base, moved) = (rel(0.0), rel(shift));
        for (a, b) in base.iter().zip(&moved) {
            prop_assert!((a - b).abs() < 1e-9);
            prop_assert!(*a > 0.0 && *a <= 1.0);
        }
        prop_assert!(base.contains(&1.0));
    }
}
