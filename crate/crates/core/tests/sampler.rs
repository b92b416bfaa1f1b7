use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sbamdt::data::PointSet;
use sbamdt::decision_tree::{DecisionTree, DecisionType, NodeKind};
use sbamdt::knots::KnotSystem;
use sbamdt::priors::{Hyperparams, RuleContext, Variant};
use sbamdt::sampler::{
    evaluate_change, evaluate_grow, evaluate_prune, Chain, MoveParams, SamplerOptions, Schedule,
    TrainContext,
};

fn problem(n: usize, seed: u64) -> TrainContext {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = PointSet::new(2, (0..2 * n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    let x = PointSet::new(2, (0..2 * n).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap();
    let y = (0..n)
        .map(|i| if s.row(i)[0] + s.row(i)[1] > 0.0 { 0.3 } else { -0.2 } + 0.05 * rng.random::<f64>())
        .collect();
    let knots = KnotSystem::build(&s, &x, &(0..n / 2).collect::<Vec<_>>(), None, 8).unwrap();
    let points = knots.prepare(&s, &x).unwrap();
    TrainContext { knots, points, y }
}

#[test]
fn prune_reverses_grow() {
    let ctx = problem(30, 1);
    let hyper = Hyperparams::new(Variant::Sk, 1);
    let p_a = vec![0.25; 4];
    let levels = hyper.levels(1.0);
    let params = MoveParams {
        sigma2: 0.02,
        sigma_mu2: 0.1,
        p_a: &p_a,
        levels: &levels,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut tree = DecisionTree::single_leaf((0..ctx.knots.len()).collect(), 1.0);
    let mut basis = tree.train_basis(ctx.n(), &levels);
    let mut checked = 0;
    for _ in 0..40 {
        if tree.n_leaves() > 6 {
            tree = DecisionTree::single_leaf((0..ctx.knots.len()).collect(), 1.0);
            basis = tree.train_basis(ctx.n(), &levels);
        }
        let leaves = tree.leaf_ids();
        let leaf = leaves[rng.random_range(0..leaves.len())];
        let knots = tree.node(leaf).unwrap().knots.clone();
        let Some(proposal) = RuleContext::new(&ctx.knots, &knots, hyper.p_m).sample(&mut rng)
        else {
            continue;
        };
        let grow =
            evaluate_grow(&hyper, &ctx, &tree, &basis, &ctx.y, leaf, proposal, params).unwrap();
        let forward = grow.log_ratio;
        grow.apply(&mut tree, &mut basis, &mut rng).unwrap();
        let (backward, pruned) =
            evaluate_prune(&hyper, &ctx, &tree, &basis, &ctx.y, leaf, params).unwrap();
        assert!(
            (forward + backward).abs() < 1e-9,
            "grow {forward} prune {backward}"
        );
        assert_eq!(pruned.leaf_ids.len(), basis.leaf_ids.len() - 1);
        checked += 1;
    }
    assert!(checked > 20);
}

#[test]
fn change_round_trip_cancels_and_sets_missing_decision_to_zero() {
    let ctx = problem(24, 3);
    let hyper = Hyperparams::new(Variant::Sk, 1);
    let p_a = vec![0.4, 0.3, 0.0, 0.3];
    let levels = hyper.levels(1.0);
    let params = MoveParams {
        sigma2: 0.05,
        sigma_mu2: 0.2,
        p_a: &p_a,
        levels: &levels,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut tree = DecisionTree::single_leaf((0..ctx.knots.len()).collect(), 1.0);
    let mut basis = tree.train_basis(ctx.n(), &levels);
    let proposal = RuleContext::new(&ctx.knots, &tree.node(1).unwrap().knots, hyper.p_m)
        .sample(&mut rng)
        .unwrap();
    let g = evaluate_grow(&hyper, &ctx, &tree, &basis, &ctx.y, 1, proposal, params).unwrap();
    assert!(!g.decisions.contains(&2));
    g.apply_with(0, &mut tree, &mut basis).unwrap();
    let (there, b2) =
        evaluate_change(&tree, &basis, &ctx.y, 1, DecisionType::Soft(3), params).unwrap();
    let mut t2 = tree.clone();
    if let NodeKind::Internal(inner) = &mut t2.node_mut(1).unwrap().kind {
        inner.decision = DecisionType::Soft(3);
    }
    let (back, _) = evaluate_change(&t2, &b2, &ctx.y, 1, DecisionType::Hard, params).unwrap();
    assert!((there + back).abs() < 1e-9);
    let (zero, _) =
        evaluate_change(&tree, &basis, &ctx.y, 1, DecisionType::Soft(2), params).unwrap();
    assert_eq!(zero, f64::NEG_INFINITY);
}

#[test]
fn schedule_keeps_every_thin_after_burn_in() {
    let s = Schedule {
        n_iter: 20,
        burn_in: 10,
        thin: 3,
    };
    let kept: Vec<usize> = (1..=20).filter(|&t| s.keeps(t)).collect();
    assert_eq!(kept, vec![13, 16, 19]);
    assert!(Schedule {
        n_iter: 5,
        burn_in: 5,
        thin: 1
    }
    .validate()
    .is_err());
    assert!(Schedule {
        n_iter: 6,
        burn_in: 5,
        thin: 0
    }
    .validate()
    .is_err());
}

#[test]
fn move_counts_add_up_to_sweeps_times_trees() {
    let ctx = problem(40, 5);
    let hyper = Hyperparams::new(Variant::S2, 3);
    let mut chain = Chain::new(&ctx, &hyper, SamplerOptions::default(), 6).unwrap();
    for _ in 0..50 {
        chain.sweep().unwrap();
    }
    let st = chain.stats();
    assert_eq!(
        st.grow_proposed + st.prune_proposed + st.change_proposed,
        150
    );
    assert_eq!(st.alpha_proposed, 150);
    assert!(st.grow_accepted <= st.grow_proposed && st.prune_accepted <= st.prune_proposed);
    assert!(st.grow_accepted > 0);
    assert!(chain.state().sigma2 > 0.0 && chain.state().sigma_mu2 > 0.0);
    let total: f64 = chain.state().p_a.iter().sum();
    assert!((total - 1.0).abs() < 1e-12);
}

#[test]
fn chain_fit_matches_sum_of_tree_predictions() {
    let ctx = problem(30, 7);
    let hyper = Hyperparams::new(Variant::Sk, 4);
    let mut chain = Chain::new(&ctx, &hyper, SamplerOptions::default(), 8).unwrap();
    for _ in 0..30 {
        chain.sweep().unwrap();
    }
    let mut direct = vec![0.0; ctx.n()];
    for t in &chain.state().trees {
        let b = t
            .basis(&ctx.knots, &ctx.points, &hyper.levels(t.alpha))
            .unwrap();
        for (d, v) in direct.iter_mut().zip(b.apply(&t.leaf_values())) {
            *d += v;
        }
    }
    for (a, b) in direct.iter().zip(chain.fit()) {
        assert!((a - b).abs() < 1e-9);
    }
}
