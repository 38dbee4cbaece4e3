use std::collections::BTreeMap;

use proptest::prelude::*;

use spflow::allocator::{rate_schedule, rate_schedule_queued, sdcc_allocate};
use spflow::numeric::{discretize, GridConfig, NumericDistribution};
use spflow::workflow::{end_to_end, parse_scenario};
use spflow::{DistributionSpec, Scenario, ServerDescriptor, TailShape, WorkflowNode};

fn grid() -> GridConfig {
    GridConfig::new(8192, 1.0 - 1e-7)
}

fn grid_of(spec: &DistributionSpec) -> NumericDistribution {
    discretize(spec, &grid()).unwrap()
}

fn delayed_exp() -> impl Strategy<Value = DistributionSpec> {
    (0.5..5.0f64, 0.0..1.0f64, 0.3..1.0f64).prop_map(|(r, t, a)| DistributionSpec::delayed_exp(r, t, a))
}

fn any_spec() -> impl Strategy<Value = DistributionSpec> {
    let leaf = prop_oneof![
        delayed_exp(),
        (2.5..8.0f64, 0.0..0.5f64, 0.3..1.0f64).prop_map(|(r, t, a)| DistributionSpec::delayed_pareto(r, t, a)),
        (0.5..4.0f64, 0.0..0.5f64, 0.5..1.0f64)
            .prop_map(|(r, t, a)| DistributionSpec::delayed_tail(r, t, a, TailShape::Sqrt)),
        (0.2..5.0f64).prop_map(DistributionSpec::exponential),
    ];
    prop_oneof![
        3 => leaf.clone(),
        1 => (leaf.clone(), leaf, 0.05..0.95f64)
            .prop_map(|(a, b, w)| DistributionSpec::mixture([(w, a), (1.0 - w, b)])),
    ]
    .prop_filter("survival must not exceed one at the delay", DistributionSpec::is_valid)
}

fn probe_points(d: &NumericDistribution) -> Vec<f64> {
    let hi = d.grid_start() + d.grid_step() * d.grid_len() as f64;
    (0..=200).map(|i| hi * i as f64 / 200.0).collect()
}

fn sup_gap(a: &NumericDistribution, b: &NumericDistribution) -> f64 {
    probe_points(a)
        .into_iter()
        .chain(probe_points(b))
        .map(|t| (a.cdf(t) - b.cdf(t)).abs())
        .fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn convolution_commutes(a in delayed_exp(), b in delayed_exp()) {
        let (x, y) = (grid_of(&a), grid_of(&b));
        prop_assert!(sup_gap(&x.convolve(&y), &y.convolve(&x)) < 1e-9);
    }

    #[test]
    fn convolution_associates(a in delayed_exp(), b in delayed_exp(), c in delayed_exp()) {
        let (x, y, z) = (grid_of(&a), grid_of(&b), grid_of(&c));
        let left = x.convolve(&y).convolve(&z);
        let right = x.convolve(&y.convolve(&z));
        prop_assert!(sup_gap(&left, &right) < 5e-3);
    }

    #[test]
    fn convolution_adds_moments(a in any_spec(), b in any_spec()) {
        let (x, y) = (grid_of(&a), grid_of(&b));
        let s = x.convolve(&y);
        let (ma, va) = a.moments().unwrap();
        let (mb, vb) = b.moments().unwrap();
        prop_assert!((s.mean() - (ma + mb)).abs() < 2e-2 * (ma + mb), "{} vs {}", s.mean(), ma + mb);
        prop_assert!((s.variance() - (va + vb)).abs() < 5e-2 * (va + vb), "{} vs {}", s.variance(), va + vb);
    }

    #[test]
    fn hypoexponential_sum(a in 0.3..4.0f64, gap in 0.2..3.0f64) {
        let b = a + gap;
        let s = grid_of(&DistributionSpec::exponential(a)).convolve(&grid_of(&DistributionSpec::exponential(b)));
        for t in probe_points(&s) {
            let exact = 1.0 - (b * (-a * t).exp() - a * (-b * t).exp()) / (b - a);
            prop_assert!((s.cdf(t) - exact).abs() < 5e-3, "t={t}: {} vs {exact}", s.cdf(t));
        }
    }

    #[test]
    fn maximum_is_cdf_product(a in any_spec(), b in any_spec()) {
        let m = grid_of(&a).max_compose(&grid_of(&b));
        for t in probe_points(&m) {
            let exact = a.cdf(t) * b.cdf(t);
            prop_assert!(m.cdf(t) <= a.cdf(t).min(b.cdf(t)) + 5e-3);
            prop_assert!((m.cdf(t) - exact).abs() < 5e-3, "t={t}: {} vs {exact}", m.cdf(t));
        }
        prop_assert!(m.mean() >= a.mean().unwrap().max(b.mean().unwrap()) - 1e-2);
    }

    #[test]
    fn cdf_is_monotone_and_bounded(spec in any_spec(), ts in prop::collection::vec(0.0..20.0f64, 2..40)) {
        let mut ts = ts;
        ts.sort_by(f64::total_cmp);
        let mut prev = 0.0;
        for t in ts {
            let f = spec.cdf(t);
            prop_assert!((0.0..=1.0).contains(&f));
            prop_assert!(f >= prev - 1e-15);
            prev = f;
        }
    }

    #[test]
    fn general_tail_matches_named_families(r in 0.5..5.0f64, t in 0.0..1.0f64, a in 0.3..1.0f64, x in 0.0..10.0f64) {
        let id = DistributionSpec::delayed_tail(r, t, a, TailShape::Identity);
        let lp = DistributionSpec::delayed_tail(r, t, a, TailShape::Log1p);
        prop_assert!((id.cdf(x) - DistributionSpec::delayed_exp(r, t, a).cdf(x)).abs() < 1e-14);
        prop_assert!((lp.cdf(x) - DistributionSpec::delayed_pareto(r, t, a).cdf(x)).abs() < 1e-14);
    }

    #[test]
    fn fixed_schedule_balances_products(lambda in 0.1..50.0f64, rts in prop::collection::vec(0.01..10.0f64, 1..8), k in 0.1..10.0f64) {
        let rates = rate_schedule(lambda, &rts).unwrap();
        prop_assert!((rates.iter().sum::<f64>() - lambda).abs() < 1e-9 * lambda);
        let c = rates[0] * rts[0];
        for (x, rt) in rates.iter().zip(&rts) {
            prop_assert!((x * rt - c).abs() < 1e-9 * c);
        }
        let scaled: Vec<f64> = rts.iter().map(|rt| rt * k).collect();
        let again = rate_schedule(lambda, &scaled).unwrap();
        for (x, y) in rates.iter().zip(&again) {
            prop_assert!((x - y).abs() < 1e-9 * lambda);
        }
    }

    #[test]
    fn queued_schedule_stays_stable(mus in prop::collection::vec(0.5..20.0f64, 1..6), load in 0.05..0.95f64) {
        let lambda = load * mus.iter().sum::<f64>();
        let rates = rate_schedule_queued(lambda, &mus).unwrap();
        prop_assert!((rates.iter().sum::<f64>() - lambda).abs() < 1e-9 * lambda.max(1.0));
        let products: Vec<f64> = rates.iter().zip(&mus).map(|(x, mu)| x / (mu - x)).collect();
        for (x, mu) in rates.iter().zip(&mus) {
            prop_assert!(*x > 0.0 && x < mu);
        }
        for p in &products {
            prop_assert!((p - products[0]).abs() < 1e-6 * products[0].max(1e-3));
        }
    }

    #[test]
    fn serial_matching_ignores_server_order_and_scale(
        mus in prop::collection::hash_set(1u32..1000, 4),
        rates in prop::collection::hash_set(1u32..1000, 4),
        k in 0.1..10.0f64,
        rot in 0usize..4,
    ) {
        let dccs: Vec<WorkflowNode> = rates
            .iter()
            .enumerate()
            .map(|(i, r)| WorkflowNode::slot(format!("d{i}")).with_arrival_rate(*r as f64 / 100.0))
            .collect();
        let servers: Vec<ServerDescriptor> = mus
            .iter()
            .enumerate()
            .map(|(i, m)| ServerDescriptor::queue(format!("s{i}"), *m as f64 / 10.0))
            .collect();
        let base = sdcc_allocate(&servers, &dccs).unwrap();
        let mut rotated = servers.clone();
        rotated.rotate_left(rot);
        prop_assert_eq!(&sdcc_allocate(&rotated, &dccs).unwrap(), &base);
        let scaled: Vec<ServerDescriptor> = mus
            .iter()
            .enumerate()
            .map(|(i, m)| ServerDescriptor::queue(format!("s{i}"), *m as f64 / 10.0 * k))
            .collect();
        prop_assert_eq!(&sdcc_allocate(&scaled, &dccs).unwrap(), &base);
    }

    #[test]
    fn junction_count_ignores_child_order(widths in prop::collection::vec(1usize..4, 2..5), rot in 0usize..4) {
        let mut n = 0;
        let mut slot = || {
            n += 1;
            WorkflowNode::slot(format!("s{n}"))
        };
        let mut branches: Vec<WorkflowNode> = widths
            .iter()
            .map(|&w| {
                if w == 1 {
                    slot()
                } else {
                    WorkflowNode::series((0..w).map(|_| slot()).collect())
                }
            })
            .collect();
        let before = WorkflowNode::parallel(branches.clone()).internal_dap_count();
        let len = branches.len();
        branches.rotate_left(rot % len);
        prop_assert_eq!(WorkflowNode::parallel(branches).internal_dap_count(), before);
    }

    #[test]
    fn nested_series_flattens(a in delayed_exp(), b in delayed_exp(), c in delayed_exp()) {
        let servers = vec![
            ServerDescriptor::explicit("x", a),
            ServerDescriptor::explicit("y", b),
            ServerDescriptor::explicit("z", c),
        ];
        let binding: BTreeMap<String, String> =
            [("p", "x"), ("q", "y"), ("r", "z")].iter().map(|(s, v)| (s.to_string(), v.to_string())).collect();
        let s = WorkflowNode::slot;
        let flat = WorkflowNode::series(vec![s("p"), s("q"), s("r")]);
        let nested = WorkflowNode::series(vec![s("p"), WorkflowNode::series(vec![s("q"), s("r")])]);
        let none = BTreeMap::new();
        let f = end_to_end(&flat, &servers, &binding, &none, &grid()).unwrap();
        let g = end_to_end(&nested, &servers, &binding, &none, &grid()).unwrap();
        prop_assert!(sup_gap(&f, &g) < 5e-3);
        prop_assert!((f.mean() - g.mean()).abs() < 1e-3 * f.mean());
    }

    #[test]
    fn scenario_json_round_trips(mus in prop::collection::vec(1.0..20.0f64, 3), lambda in 0.1..1.0f64, spec in any_spec()) {
        let mut servers: Vec<ServerDescriptor> =
            mus.iter().enumerate().map(|(i, m)| ServerDescriptor::queue(format!("q{i}"), *m)).collect();
        servers.push(ServerDescriptor::explicit("e", spec));
        let s = WorkflowNode::slot;
        let workflow = WorkflowNode::series(vec![
            WorkflowNode::parallel(vec![s("a"), s("b")]),
            WorkflowNode::series(vec![s("c"), s("d")]),
        ])
        .with_arrival_rate(lambda);
        let scenario = Scenario::new(servers, workflow);
        let back = parse_scenario(&scenario.to_json()).unwrap();
        prop_assert_eq!(back, scenario);
    }
}
