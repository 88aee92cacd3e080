//! Randomized invariants of the public API: metric axioms and convexity of
//! the squared distance, quadrature grid guarantees, solver optimality
//! against rival candidates, process cost identities, and agreement between
//! the exhaustive oracle plans and the constructed process couplings.

use curvebary::barycenter::{
    centroid_grid, curve_barycenter, finite_barycenter, steps_nonincreasing,
    BarycenterProblem, SupportMode,
};
use curvebary::measures::{
    convex_hull_support_check, CurveSample, DensityFlags, DiscreteMeasure, Interpolation,
    MeasureCurve, SamplingStrategy, TimeGrid,
};
use curvebary::oracle::{
    enumerate_couplings, permutation_plan, solve_multimarginal, MultiMarginalCost,
    MultiMarginalInstance,
};
use curvebary::ot::{w2, w2_1d, Coupling, MapKind, TransportMap};
use curvebary::process::{build_process, mk_cost, reroot};

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

mod common;
use common::{
    curve_from, quantile_average_oracle, random_curve_1d, random_measure,
    random_uniform_measure_1d, random_weights, seeded,
};

fn probability_weights(k: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.05f64..1.0, k).prop_map(|raw| {
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|w| w / total).collect()
    })
}

fn measure(dim: usize, max_atoms: usize) -> impl Strategy<Value = DiscreteMeasure> {
    (1..=max_atoms).prop_flat_map(move |k| {
        (
            prop::collection::vec(prop::collection::vec(-3.0f64..3.0, dim), k),
            probability_weights(k),
        )
            .prop_map(|(points, weights)| DiscreteMeasure::new(points, weights).unwrap())
    })
}

fn measure_pair(max_atoms: usize) -> impl Strategy<Value = (DiscreteMeasure, DiscreteMeasure)> {
    (1usize..=2).prop_flat_map(move |dim| (measure(dim, max_atoms), measure(dim, max_atoms)))
}

fn measure_triple(
    max_atoms: usize,
) -> impl Strategy<Value = (DiscreteMeasure, DiscreteMeasure, DiscreteMeasure)> {
    (1usize..=2).prop_flat_map(move |dim| {
        (
            measure(dim, max_atoms),
            measure(dim, max_atoms),
            measure(dim, max_atoms),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn w2_cost_is_symmetric((a, b) in measure_pair(5)) {
        let (ab, _) = w2(&a, &b).unwrap();
        let (ba, _) = w2(&b, &a).unwrap();
        prop_assert!((ab - ba).abs() <= 1e-9, "ab {ab}, ba {ba}");
    }

    #[test]
    fn w2_roots_satisfy_the_triangle_inequality((a, b, c) in measure_triple(4)) {
        let (ab, _) = w2(&a, &b).unwrap();
        let (ac, _) = w2(&a, &c).unwrap();
        let (cb, _) = w2(&c, &b).unwrap();
        let (ab, ac, cb) = (ab.max(0.0).sqrt(), ac.max(0.0).sqrt(), cb.max(0.0).sqrt());
        prop_assert!(ab <= ac + cb + 1e-9, "{ab} > {ac} + {cb}");
    }

    #[test]
    fn lp_and_quantile_routes_agree_in_one_dimension(
        a in measure(1, 6),
        b in measure(1, 6),
    ) {
        let (lp_cost, _) = w2(&a, &b).unwrap();
        let (qf_cost, _) = w2_1d(&a, &b).unwrap();
        prop_assert!((lp_cost - qf_cost).abs() <= 1e-9, "lp {lp_cost}, quantile {qf_cost}");
    }

    #[test]
    fn squared_cost_is_convex_under_source_mixtures(
        (a, b, nu) in measure_triple(4),
        s in 0.0f64..1.0,
    ) {
        let mix = DiscreteMeasure::mixture(&a, &b, s).unwrap();
        let (c_mix, _) = w2(&mix, &nu).unwrap();
        let (c_a, _) = w2(&a, &nu).unwrap();
        let (c_b, _) = w2(&b, &nu).unwrap();
        prop_assert!(
            c_mix <= (1.0 - s) * c_a + s * c_b + 1e-9,
            "{c_mix} > (1-{s})*{c_a} + {s}*{c_b}"
        );
    }

    #[test]
    fn monotone_one_dimensional_maps_never_cross(
        a in measure(1, 6),
        b in measure(1, 6),
    ) {
        let (_, map) = w2_1d(&a, &b).unwrap();
        let source = map.source();
        for i in 0..source.len() {
            for j in 0..source.len() {
                if source.point(i)[0] < source.point(j)[0] {
                    prop_assert!(
                        map.image(i)[0] <= map.image(j)[0] + 1e-12,
                        "images cross: {} -> {}, {} -> {}",
                        source.point(i)[0],
                        map.image(i)[0],
                        source.point(j)[0],
                        map.image(j)[0]
                    );
                }
            }
        }
    }

    #[test]
    fn enumeration_minimum_equals_the_lp_on_random_pairs((a, b) in measure_pair(3)) {
        let (lp_cost, _) = w2(&a, &b).unwrap();
        let best = enumerate_couplings(&a, &b)
            .unwrap()
            .iter()
            .map(|v| v.cost())
            .fold(f64::INFINITY, f64::min);
        prop_assert!((lp_cost - best).abs() <= 1e-9, "lp {lp_cost}, vertices {best}");
    }

    #[test]
    fn weight_splitting_leaves_the_oracle_value_unchanged(
        (a, b) in measure_pair(3),
        lambda in 0.2f64..0.8,
        split in 0.2f64..0.8,
    ) {
        let whole = MultiMarginalInstance::new(
            vec![a.clone(), b.clone()],
            vec![lambda, 1.0 - lambda],
        )
        .unwrap();
        let halves = MultiMarginalInstance::new(
            vec![a.clone(), a.clone(), b.clone()],
            vec![lambda * split, lambda * (1.0 - split), 1.0 - lambda],
        )
        .unwrap();
        let (value, _) = solve_multimarginal(&whole, MultiMarginalCost::Variance).unwrap();
        let (value_split, _) =
            solve_multimarginal(&halves, MultiMarginalCost::Variance).unwrap();
        prop_assert!(
            (value - value_split).abs() <= 1e-9,
            "whole {value}, split {value_split}"
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn quadrature_grids_are_sorted_probability_vectors(
        s in 1usize..=8,
        n in 1usize..=8,
        seed in 0u64..1000,
    ) {
        let mut rng = seeded(seed);
        let (curve, _) = random_curve_1d(&mut rng, s, 3);
        let grid = curve.sample_times(n, SamplingStrategy::Uniform).unwrap();
        prop_assert_eq!(grid.len(), n);
        let total: f64 = grid.weights().iter().sum();
        prop_assert!((total - 1.0).abs() <= 1e-12, "weights sum to {total}");
        let sample_times: Vec<f64> = curve.samples().iter().map(|s| s.t).collect();
        let mut prev = f64::NEG_INFINITY;
        for &t in grid.nodes() {
            prop_assert!(t >= prev, "nodes out of order");
            prop_assert!((0.0..=1.0).contains(&t), "node {t} outside [0, 1]");
            prop_assert!(
                sample_times.iter().any(|&st| (st - t).abs() <= 1e-12),
                "node {t} is not a sample time"
            );
            prev = t;
        }
    }

    #[test]
    fn preferring_grids_keep_enough_flagged_nodes(
        (s, flags, n) in (2usize..=10).prop_flat_map(|s| {
            (
                Just(s),
                prop::collection::vec(any::<bool>(), s)
                    .prop_filter("needs one flag", |f| f.iter().any(|&b| b)),
                1usize..=s,
            )
        }),
    ) {
        let samples: Vec<CurveSample> = (1..=s)
            .map(|j| CurveSample {
                t: j as f64 / s as f64,
                measure: DiscreteMeasure::dirac(vec![j as f64]).unwrap(),
                density: flags[j - 1].then_some(DensityFlags {
                    is_ac: true,
                    linf_norm: Some(1.0),
                }),
            })
            .collect();
        let curve = MeasureCurve::new(samples, Interpolation::Nearest).unwrap();
        let grid = curve
            .sample_times(n, SamplingStrategy::PreferBoundedDensity)
            .unwrap();
        let flagged_times: Vec<f64> = (1..=s)
            .filter(|j| flags[j - 1])
            .map(|j| j as f64 / s as f64)
            .collect();
        let count = grid
            .nodes()
            .iter()
            .filter(|&&t| flagged_times.iter().any(|&ft| (ft - t).abs() <= 1e-12))
            .count();
        let fraction = flagged_times.len() as f64 / s as f64;
        let required = ((fraction * n as f64).ceil() as usize).saturating_sub(1);
        prop_assert!(
            count >= required,
            "{count} flagged nodes, bound requires {required}"
        );
    }

    #[test]
    fn hull_membership_survives_hull_growth(
        s in 2usize..=4,
        seed in 0u64..1000,
        mix in 0.1f64..0.9,
    ) {
        let mut rng = seeded(seed);
        let samples: Vec<(f64, DiscreteMeasure)> = (1..=s)
            .map(|j| (j as f64 / (s + 1) as f64, random_measure(&mut rng, 2, 3)))
            .collect();
        let probe = DiscreteMeasure::mixture(&samples[0].1, &samples[1].1, mix).unwrap();
        let curve = curve_from(samples.clone());
        prop_assert!(convex_hull_support_check(&probe, &curve).unwrap());
        let mut bigger = samples;
        bigger.push((1.0, random_measure(&mut rng, 2, 3)));
        let bigger_curve = curve_from(bigger);
        prop_assert!(
            convex_hull_support_check(&probe, &bigger_curve).unwrap(),
            "membership lost after growing the hull"
        );
    }
}

fn xorshift(state: &mut u64) -> f64 {
    *state ^= *state << 13;
    *state ^= *state >> 7;
    *state ^= *state << 17;
    (*state >> 11) as f64 / (1u64 << 53) as f64
}

#[test]
fn fixed_grid_results_beat_reweighted_rivals() {
    let mut rng = seeded(901);
    for case in 0..10usize {
        let dim = 1 + case % 2;
        let m = 2 + case % 2;
        let marginals: Vec<DiscreteMeasure> =
            (0..m).map(|_| random_measure(&mut rng, dim, 3)).collect();
        let weights = random_weights(&mut rng, m);
        let grid = centroid_grid(&marginals, &weights).unwrap();
        let problem = BarycenterProblem::new(
            marginals.clone(),
            weights.clone(),
            SupportMode::FixedGrid(grid),
        )
        .unwrap();
        let bary = finite_barycenter(&problem).unwrap();
        let mut state = 0x9e3779b97f4a7c15u64 ^ case as u64;
        for _ in 0..20 {
            let raw: Vec<f64> = bary
                .measure
                .weights()
                .iter()
                .map(|w| w * (0.5 + xorshift(&mut state)))
                .collect();
            let total: f64 = raw.iter().sum();
            let rival_weights: Vec<f64> = raw.into_iter().map(|w| w / total).collect();
            let rival =
                DiscreteMeasure::new(bary.measure.points().to_vec(), rival_weights).unwrap();
            let rival_objective: f64 = marginals
                .iter()
                .zip(&weights)
                .map(|(mu, lam)| lam * w2(&rival, mu).unwrap().0)
                .sum();
            assert!(
                bary.objective <= rival_objective + 1e-9,
                "objective {} beaten by rival {}",
                bary.objective,
                rival_objective
            );
        }
    }
}

#[test]
fn monge_certified_free_support_results_satisfy_the_fixed_point() {
    let mut rng = seeded(902);
    let mut qualified = 0usize;
    for _ in 0..20 {
        let s = rng.gen_range(2..=6);
        let (curve, _) = random_curve_1d(&mut rng, s, 5);
        let (result, _) = curve_barycenter(&curve, &[s], SamplingStrategy::Uniform).unwrap();
        assert!(
            convex_hull_support_check(&result.measure, &curve).unwrap(),
            "support escaped the hull of the sample supports"
        );
        if result
            .maps
            .iter()
            .all(|m| matches!(m.kind(), MapKind::ExactMonge))
        {
            qualified += 1;
            assert!(
                result.fixed_point_residual <= 1e-6,
                "residual {}",
                result.fixed_point_residual
            );
        }
    }
    assert!(qualified >= 10, "only {qualified} pure-map results");
}

#[test]
fn grid_objective_is_convex_in_the_candidate_measure() {
    let mut rng = seeded(903);
    for _ in 0..20 {
        let s = rng.gen_range(2..=5);
        let (_, marginals) = random_curve_1d(&mut rng, s, 4);
        let weights = vec![1.0 / s as f64; s];
        let a = random_measure(&mut rng, 1, 4);
        let b = random_measure(&mut rng, 1, 4);
        let mix_at: f64 = rng.gen_range(0.1..0.9);
        let mix = DiscreteMeasure::mixture(&a, &b, mix_at).unwrap();
        let objective = |nu: &DiscreteMeasure| -> f64 {
            marginals
                .iter()
                .zip(&weights)
                .map(|(mu, lam)| lam * w2(nu, mu).unwrap().0)
                .sum()
        };
        let (f_mix, f_a, f_b) = (objective(&mix), objective(&a), objective(&b));
        assert!(
            f_mix <= (1.0 - mix_at) * f_a + mix_at * f_b + 1e-9,
            "{f_mix} > (1-{mix_at})*{f_a} + {mix_at}*{f_b}"
        );
    }
}

#[test]
fn initialization_does_not_change_the_one_dimensional_barycenter() {
    let mut rng = seeded(904);
    for _ in 0..10 {
        let s = rng.gen_range(2..=5);
        let (curve, marginals) = random_curve_1d(&mut rng, s, 4);
        let weights = vec![1.0 / s as f64; s];
        let (oracle_measure, _) = quantile_average_oracle(&marginals, &weights);
        let (auto_result, _) =
            curve_barycenter(&curve, &[s], SamplingStrategy::Uniform).unwrap();
        let shifted = oracle_measure.translate(&[0.37]).unwrap();
        let problem = BarycenterProblem::new(
            marginals,
            weights,
            SupportMode::free_support_from(shifted),
        )
        .unwrap();
        let seeded_result = finite_barycenter(&problem).unwrap();
        let (d_auto, _) = w2(&auto_result.measure, &oracle_measure).unwrap();
        let (d_seeded, _) = w2(&seeded_result.measure, &oracle_measure).unwrap();
        assert!(
            d_auto.max(0.0).sqrt() <= 1e-6,
            "auto start drifted: {}",
            d_auto.max(0.0).sqrt()
        );
        assert!(
            d_seeded.max(0.0).sqrt() <= 1e-6,
            "shifted start drifted: {}",
            d_seeded.max(0.0).sqrt()
        );
    }
}

#[test]
fn built_processes_push_the_base_onto_every_marginal() {
    let mut rng = seeded(905);
    for i in 0..10usize {
        let k = 2 + i % 3;
        let m = 2 + i % 3;
        let samples: Vec<(f64, DiscreteMeasure)> = (1..=m)
            .map(|j| (j as f64 / m as f64, random_uniform_measure_1d(&mut rng, k)))
            .collect();
        let marginals: Vec<DiscreteMeasure> = samples.iter().map(|(_, mu)| mu.clone()).collect();
        let curve = curve_from(samples);
        let (result, _) = curve_barycenter(&curve, &[m], SamplingStrategy::Uniform).unwrap();
        let grid = curve.sample_times(m, SamplingStrategy::Uniform).unwrap();
        let proc = build_process(&result, &grid).unwrap();
        for ((_, map), mu) in proc.time_maps().iter().zip(&marginals) {
            let (gap, _) = w2(&map.push_forward(), mu).unwrap();
            assert!(
                gap.max(0.0).sqrt() <= 1e-6,
                "marginal fidelity gap {}",
                gap.max(0.0).sqrt()
            );
        }
    }
}

#[test]
fn process_cost_identity_and_average_law_optimality() {
    let mut rng = seeded(906);
    for i in 0..8usize {
        let k = 2 + i % 3;
        let m = 2 + i % 3;
        let samples: Vec<(f64, DiscreteMeasure)> = (1..=m)
            .map(|j| (j as f64 / m as f64, random_uniform_measure_1d(&mut rng, k)))
            .collect();
        let curve = curve_from(samples);
        let (result, _) = curve_barycenter(&curve, &[m], SamplingStrategy::Uniform).unwrap();
        let grid = curve.sample_times(m, SamplingStrategy::Uniform).unwrap();
        let proc = build_process(&result, &grid).unwrap();
        let report = mk_cost(&proc).unwrap();
        assert!(
            (report.mk_cost / 2.0 + report.avg_potential - report.moment_term).abs() <= 1e-9,
            "identity broken: {report:?}"
        );
        let marginals: Vec<DiscreteMeasure> = proc
            .time_maps()
            .iter()
            .map(|(_, map)| map.push_forward())
            .collect();
        let instance =
            MultiMarginalInstance::new(marginals.clone(), grid.weights().to_vec()).unwrap();
        for _ in 0..10 {
            let perms: Vec<Vec<usize>> = (1..m)
                .map(|_| {
                    let mut p: Vec<usize> = (0..k).collect();
                    p.shuffle(&mut rng);
                    p
                })
                .collect();
            let plan =
                permutation_plan(&instance, &perms, MultiMarginalCost::PairwiseSum).unwrap();
            let rival_law = plan.law_of_average();
            let rival_cost: f64 = marginals
                .iter()
                .zip(grid.weights())
                .map(|(mu, w)| w * w2(mu, &rival_law).unwrap().0)
                .sum();
            assert!(
                rival_cost >= report.avg_law_cost - 1e-9,
                "rival law cost {rival_cost} undercuts {}",
                report.avg_law_cost
            );
        }
    }
}

#[test]
fn refinement_steps_shrink_along_translate_curves() {
    let mut rng = seeded(907);
    for _ in 0..10 {
        let base = random_measure(&mut rng, 1, 4);
        let samples: Vec<(f64, DiscreteMeasure)> = (0..=8)
            .map(|j| {
                let t = j as f64 / 8.0;
                (t, base.translate(&[t]).unwrap())
            })
            .collect();
        let curve = curve_from(samples);
        let (_, log) =
            curve_barycenter(&curve, &[2, 4, 8], SamplingStrategy::Uniform).unwrap();
        assert_eq!(log.len(), 3);
        assert!(
            steps_nonincreasing(&log, 0.1),
            "refinement steps grew: {log:?}"
        );
    }
}

#[test]
fn rerooting_keeps_the_process_cost() {
    let mut rng = seeded(908);
    for i in 0..6usize {
        let k = 2 + i % 2;
        let samples: Vec<(f64, DiscreteMeasure)> = (1..=4)
            .map(|j| (j as f64 / 4.0, random_uniform_measure_1d(&mut rng, k)))
            .collect();
        let curve = curve_from(samples);
        let (result, _) = curve_barycenter(&curve, &[4], SamplingStrategy::Uniform).unwrap();
        let grid = curve.sample_times(4, SamplingStrategy::Uniform).unwrap();
        let proc = build_process(&result, &grid).unwrap();
        let before = mk_cost(&proc).unwrap().mk_cost;
        let node = grid.nodes()[i % grid.len()];
        let rerooted = reroot(&proc, node).unwrap();
        let after = mk_cost(&rerooted).unwrap().mk_cost;
        assert!(
            (before - after).abs() <= 1e-9,
            "cost moved from {before} to {after} at root {node}"
        );
    }
}

type CouplingEntry = (Vec<f64>, Vec<f64>, f64);

fn coupling_entries(c: &Coupling) -> Vec<CouplingEntry> {
    let mut out = Vec::new();
    for r in 0..c.source().len() {
        for col in 0..c.target().len() {
            let mass = c.mass(r, col);
            if mass > 1e-12 {
                out.push((
                    c.source().point(r).to_vec(),
                    c.target().point(col).to_vec(),
                    mass,
                ));
            }
        }
    }
    out
}

fn map_entries(base: &DiscreteMeasure, map: &TransportMap) -> Vec<CouplingEntry> {
    base.points()
        .iter()
        .zip(base.weights())
        .zip(map.images())
        .map(|((x, &w), y)| (x.clone(), y.clone(), w))
        .collect()
}

fn linf(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Half the total mass mismatch after matching entries by atom positions.
fn total_variation_gap(a: &[CouplingEntry], b: &[CouplingEntry]) -> f64 {
    let mut rest: Vec<CouplingEntry> = b.to_vec();
    let mut gap = 0.0;
    for (x, y, mass) in a {
        if let Some(pos) = rest
            .iter()
            .position(|(x2, y2, _)| linf(x, x2) <= 1e-6 && linf(y, y2) <= 1e-6)
        {
            gap += (mass - rest[pos].2).abs();
            rest.swap_remove(pos);
        } else {
            gap += mass;
        }
    }
    gap += rest.iter().map(|(_, _, m)| m).sum::<f64>();
    gap / 2.0
}

#[test]
fn plan_and_process_couplings_agree_on_tiny_instances() {
    let mut rng = seeded(909);
    for i in 0..8usize {
        let k = 2 + i % 2;
        let m = 2 + i % 2;
        let marginals: Vec<DiscreteMeasure> = (0..m)
            .map(|_| random_uniform_measure_1d(&mut rng, k))
            .collect();
        let weights = random_weights(&mut rng, m);
        let instance =
            MultiMarginalInstance::new(marginals.clone(), weights.clone()).unwrap();
        let (_, plan) = solve_multimarginal(&instance, MultiMarginalCost::Variance).unwrap();
        let grid_points = centroid_grid(&marginals, &weights).unwrap();
        let problem = BarycenterProblem::new(
            marginals.clone(),
            weights.clone(),
            SupportMode::FixedGrid(grid_points),
        )
        .unwrap();
        let bary = finite_barycenter(&problem).unwrap();
        let nodes: Vec<f64> = (1..=m).map(|j| j as f64 / m as f64).collect();
        let grid = TimeGrid::new(nodes, weights).unwrap();
        let proc = build_process(&bary, &grid).unwrap();
        for (idx, (_, map)) in proc.time_maps().iter().enumerate() {
            let plan_side = coupling_entries(&plan.average_marginal_coupling(idx).unwrap());
            let process_side = map_entries(proc.base(), map);
            let tv = total_variation_gap(&plan_side, &process_side);
            assert!(tv <= 1e-6, "node {idx}: joint tables differ by TV {tv}");
        }
    }
}
