use cutoff_lab::chain::{apply_step, collapse, CollapsedChain, Kernel, QuotientChain};
use cutoff_lab::hitting::{level_hitting_all, level_hitting_moments};
use cutoff_lab::mixing::{distance_curve, tv_distance};
use cutoff_lab::oracle::{lump, ExplicitWalk};
use cutoff_lab::simulate::{sample_hitting_with, sample_rs_with};
use cutoff_lab::spectral::{decomposed_spectrum, fill_moments, g2_lower_bound};
use cutoff_lab::tree::enumerate_profiles;
use cutoff_lab::tree::{explicit_tree, representative_pairs};
use cutoff_lab::verify::{check_concave_lemma, check_corpus, VerifyOptions, VerifyReport};
use cutoff_lab::{build_profile, Execution, TreeProfile};
use proptest::prelude::*;

fn profile_strategy(max_h: usize, max_c: i64) -> impl Strategy<Value = TreeProfile> {
    prop::collection::vec(1..=max_c, 1..=max_h).prop_map(|c| build_profile(&c).unwrap())
}

/// Lazy birth-and-death chains whose outward rate dominates the inward one,
/// with inward rate at least `min_ratio` times the outward one.
fn outward_chain(min_ratio: f64) -> impl Strategy<Value = CollapsedChain> {
    prop::collection::vec((0.01f64..0.25, min_ratio..=1.0), 1..=12).prop_flat_map(|levels| {
        (0.01f64..0.5).prop_map(move |top_up| {
            let h = levels.len();
            let mut up = vec![0.0; h + 1];
            let mut down = vec![0.0; h + 1];
            for (k, &(d, frac)) in levels.iter().enumerate() {
                down[k] = d;
                if k > 0 {
                    // up <= down <= 1/4 keeps the chain lazy
                    up[k] = (frac * d).max(1e-3);
                }
            }
            up[h] = top_up;
            CollapsedChain::from_rates(up, down).unwrap()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn profile_counts_are_consistent(p in profile_strategy(6, 4)) {
        let n: u64 = p.level_sizes().iter().sum();
        prop_assert_eq!(n, p.vertex_count());
        prop_assert_eq!(p.edge_count(), n - 1);
        let total: f64 = (0..=p.height()).map(|k| p.level_mass(k)).sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        let text = serde_json::to_string(&p).unwrap();
        prop_assert_eq!(serde_json::from_str::<TreeProfile>(&text).unwrap(), p);
    }

    #[test]
    fn quotient_evolution_lumps_exactly(p in profile_strategy(4, 3), start in 0usize..5, t in 0u64..30) {
        let start = start.min(p.height());
        let tree = explicit_tree(&p, 500).unwrap();
        let walk = ExplicitWalk::new(&tree);
        let chain = QuotientChain::for_vertex(&p, start).unwrap();
        let classes = chain.classify(&tree);
        let full = walk.distribution(tree.first_at_level(start), t);
        let mut dist = vec![0.0; chain.n_states()];
        dist[chain.x_state()] = 1.0;
        for _ in 0..t {
            dist = apply_step(&chain, &dist).unwrap();
        }
        let lumped = lump(&full, &classes, chain.n_states());
        for (a, b) in lumped.iter().zip(&dist) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn distance_is_nonincreasing(p in profile_strategy(4, 3), start in 0usize..5) {
        let curve = distance_curve(&p, start.min(p.height()), 60).unwrap();
        for w in curve.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-15);
        }
        prop_assert!(curve.iter().all(|&d| (0.0..=1.0).contains(&d)));
    }

    #[test]
    fn tv_distance_is_a_metric_value(a in prop::collection::vec(0.0f64..1.0, 2..10)) {
        let total: f64 = a.iter().sum::<f64>().max(1e-9);
        let a: Vec<f64> = a.iter().map(|x| x / total).collect();
        let mut b = a.clone();
        b.reverse();
        let ab = tv_distance(&a, &b, None).unwrap();
        prop_assert!((ab - tv_distance(&b, &a, None).unwrap()).abs() < 1e-15);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&ab));
        prop_assert_eq!(tv_distance(&a, &a, None).unwrap(), 0.0);
    }

    #[test]
    fn spectrum_has_n_values_and_trace_n_over_two(p in profile_strategy(6, 4)) {
        let s = decomposed_spectrum(&p).unwrap();
        prop_assert_eq!(s.count(), p.vertex_count());
        let trace: f64 = s.entries().iter().map(|e| e.value * e.multiplicity as f64).sum();
        prop_assert!((trace - p.vertex_count() as f64 / 2.0).abs() < 1e-8 * p.vertex_count() as f64);
        prop_assert!((s.entries()[0].value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn birth_death_concentration(chain in outward_chain(0.0)) {
        let (e, s) = level_hitting_all(&chain, 0).unwrap();
        for n in 1..=chain.top() {
            let var = s[n] - e[n] * e[n];
            prop_assert!(var >= e[n] * e[n] / 121.0 * (1.0 - 1e-9), "start {}: {} vs {}", n, var, e[n]);
        }
    }

    // strong bias pushes 1 - γ₁ below float resolution; keep it moderate here
    #[test]
    fn birth_death_geometric_decomposition(chain in outward_chain(0.5)) {
        let top = chain.top();
        let fill = fill_moments(&chain, top, 0).unwrap();
        let lin = level_hitting_moments(&chain, top, 0).unwrap();
        prop_assert!((fill.mean - lin.mean).abs() <= 1e-8 * lin.mean);
        prop_assert!((fill.variance - lin.variance).abs() <= 1e-8 * lin.variance.max(1.0));
        prop_assert!(fill.top_eigenvalue() >= 0.5 - 1e-12);
        prop_assert!(1.0 / (1.0 - fill.top_eigenvalue()) >= lin.mean / 7.0 * (1.0 - 1e-9));
    }

    #[test]
    fn test_function_bound_exceeds_third_of_square(p in profile_strategy(6, 3)) {
        if let Ok(b) = g2_lower_bound(&p) {
            let ell = b.special_level as f64;
            prop_assert!(b.bound >= ell * ell / 3.0 * (1.0 - 1e-9));
        }
    }

    #[test]
    fn concave_inequality(
        steps in prop::collection::vec(0.0f64..10.0, 2..25),
        raw in prop::collection::vec(0.0f64..1.0, 25),
        last in 0.0f64..1.0,
    ) {
        let mut steps = steps;
        steps.sort_by(|a, b| b.total_cmp(a));
        let mut f = vec![0.0];
        for s in &steps {
            f.push(f.last().unwrap() + s);
        }
        let h = f.len() - 2;
        let mut w: Vec<f64> = raw[..=h].to_vec();
        w.sort_by(f64::total_cmp);
        w.push(w[0] + last * (1.0 - w[0]));
        let total: f64 = w.iter().sum();
        if total > 0.0 {
            w.iter_mut().for_each(|x| *x /= total);
            let c = check_concave_lemma(&f, &w).unwrap();
            prop_assert!(c.pass, "lhs {} rhs {}", c.lhs, c.rhs);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn sampling_ignores_scheduling(p in profile_strategy(3, 3), seed in any::<u64>(), pick in any::<prop::sample::Index>()) {
        let pairs = representative_pairs(&p);
        let pair = pairs[pick.index(pairs.len())];
        let seq = sample_hitting_with(&p, &pair, 300, seed, Execution::Sequential).unwrap();
        let par = sample_hitting_with(&p, &pair, 300, seed, Execution::Parallel).unwrap();
        prop_assert_eq!(seq, par);
        let a = sample_rs_with(&p, &pair, 300, seed, Execution::Sequential).unwrap();
        let b = sample_rs_with(&p, &pair, 300, seed, Execution::Parallel).unwrap();
        prop_assert_eq!(a, b);
    }
}

#[test]
fn collapsed_chain_of_tree_is_outward_biased() {
    // the tree level chains are the motivating case of the property above
    let chain = collapse(&build_profile(&[2, 1, 3]).unwrap()).unwrap();
    for k in 1..chain.top() {
        assert!(chain.down(k) >= chain.up(k));
    }
}

#[test]
fn corpus_reports_ignore_scheduling() {
    let corpus = enumerate_profiles(3, 3).unwrap();
    let strip = |reports: Vec<cutoff_lab::Result<VerifyReport>>| -> Vec<VerifyReport> {
        reports
            .into_iter()
            .map(|r| VerifyReport {
                elapsed_ms: 0.0,
                ..r.unwrap()
            })
            .collect()
    };
    let opts = VerifyOptions::default();
    let seq = strip(check_corpus(&corpus, &opts, Execution::Sequential));
    let par = strip(check_corpus(&corpus, &opts, Execution::Parallel));
    assert_eq!(seq, par);
    assert!(seq.iter().all(VerifyReport::all_pass));
}
