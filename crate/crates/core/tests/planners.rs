//! End-to-end planner behaviour on small fixtures.

use icvar_core::env::{LaserTag, LaserTagSpec, LightDark, LightDarkSpec, TinyChain, TinyChainSpec};
use icvar_core::mcts::{PftDpwTree, PomcpowTree};
use icvar_core::sparse::estimate_v_star;
use icvar_core::{substream, Backup, Budget, EvalConfig, GenerativeModel, MctsConfig, PftDpw, Pomcpow, RiskLevel};

fn tiny_cfg(spec: &TinyChainSpec, a: f64, iterations: u64) -> MctsConfig {
    MctsConfig {
        k_a: spec.n_actions() as f64,
        alpha_a: 0.0,
        k_o: 4.0,
        alpha_o: 0.5,
        d_max: spec.horizon,
        alpha: RiskLevel::new(a).unwrap(),
        delta: 0.05,
        c_explore: spec.horizon as f64 * 20.0,
        budget: Budget::Iterations(iterations),
        gamma: spec.gamma,
        backup: Backup::Icvar,
    }
}

#[test]
fn both_tree_planners_flip_on_the_risky_fixture() {
    let spec = TinyChainSpec::risky_safe();
    let model = TinyChain::new(spec.clone()).unwrap();
    let root = model.quantile_belief(16);
    for (a, want) in [(0.1, 0usize), (1.0, 1usize)] {
        let cfg = tiny_cfg(&spec, a, 1000);
        for seed in 0..10 {
            let pft = PftDpw::new(cfg).unwrap().plan(&root, &model, &mut substream(seed, 0)).unwrap();
            let pomcpow = Pomcpow::new(cfg).unwrap().plan(&root, &model, &mut substream(seed, 1)).unwrap();
            assert_eq!(pft.action, want, "PFT-DPW alpha={a} seed={seed}");
            assert_eq!(pomcpow.action, want, "POMCPOW alpha={a} seed={seed}");
        }
    }
}

#[test]
fn pomcpow_converges_on_a_deterministic_chain() {
    let costs = [1.0, 2.0, 4.0];
    let spec = TinyChainSpec::deterministic_chain(&costs, 0.5, 3);
    let model = TinyChain::new(spec.clone()).unwrap();
    let exact = 1.0 + 0.5 * 2.0 + 0.25 * 4.0;
    let root = model.quantile_belief(1);
    let (out, _) = Pomcpow::new(tiny_cfg(&spec, 0.3, 200)).unwrap().plan_with_tree(&root, &model, &mut substream(3, 0)).unwrap();
    assert!((out.root_values[0].1 - exact).abs() < 1e-12, "{:?}", out.root_values);
    let (out, _) = PftDpw::new(tiny_cfg(&spec, 0.3, 200)).unwrap().plan_with_tree(&root, &model, &mut substream(3, 0)).unwrap();
    assert!((out.root_values[0].1 - exact).abs() < 1e-12, "{:?}", out.root_values);
}

#[test]
fn iteration_budgets_are_deterministic() {
    let m = LaserTag::new(LaserTagSpec::default()).unwrap();
    let cfg = MctsConfig {
        k_a: 5.0,
        alpha_a: 0.0,
        k_o: 5.0,
        alpha_o: 0.5,
        d_max: 10,
        alpha: RiskLevel::new(0.1).unwrap(),
        delta: 0.05,
        c_explore: 2150.0,
        budget: Budget::Iterations(200),
        gamma: 0.99,
        backup: Backup::Icvar,
    };
    let root = m.initial_belief(20, &mut substream(9, 0));
    let a = PftDpw::new(cfg).unwrap().plan(&root, &m, &mut substream(1, 0)).unwrap();
    let b = PftDpw::new(cfg).unwrap().plan(&root, &m, &mut substream(1, 0)).unwrap();
    assert_eq!(a, b);
    let a = Pomcpow::new(cfg).unwrap().plan(&root, &m, &mut substream(1, 0)).unwrap();
    let b = Pomcpow::new(cfg).unwrap().plan(&root, &m, &mut substream(1, 0)).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.simulations, 200);
}

#[test]
fn exactly_action_count_iterations_try_every_root_action() {
    let m = LaserTag::new(LaserTagSpec::default()).unwrap();
    let cfg = MctsConfig {
        k_a: 5.0,
        alpha_a: 0.0,
        k_o: 5.0,
        alpha_o: 0.5,
        d_max: 3,
        alpha: RiskLevel::new(0.5).unwrap(),
        delta: 0.05,
        c_explore: 100.0,
        budget: Budget::Iterations(5),
        gamma: 0.99,
        backup: Backup::Icvar,
    };
    let root = m.initial_belief(10, &mut substream(2, 0));
    let out = PftDpw::new(cfg).unwrap().plan(&root, &m, &mut substream(2, 1)).unwrap();
    assert_eq!(out.root_values.len(), 5);
    assert!(out.root_values.iter().all(|r| r.2 == 1));
}

#[test]
fn expired_time_budget_reports_fallback() {
    let m = LightDark::new(LightDarkSpec::default()).unwrap();
    let mut cfg = tiny_cfg(&TinyChainSpec::benchmark(), 0.5, 1);
    cfg.gamma = m.discount();
    // Elapses before the first simulation starts.
    cfg.budget = Budget::Seconds(1e-9);
    let root = m.initial_belief(10, &mut substream(0, 0));
    let out = PftDpw::new(cfg).unwrap().plan(&root, &m, &mut substream(0, 1)).unwrap();
    assert!(out.no_simulations);
    assert_eq!(out.simulations, 0);
    let out = Pomcpow::new(cfg).unwrap().plan(&root, &m, &mut substream(0, 1)).unwrap();
    assert!(out.no_simulations);
}

#[test]
fn alpha_one_trees_match_mean_backups() {
    let spec = TinyChainSpec::benchmark();
    let model = TinyChain::new(spec.clone()).unwrap();
    let icvar = tiny_cfg(&spec, 1.0, 0);
    let mean = MctsConfig { backup: Backup::Mean, ..icvar };
    let root = model.quantile_belief(3);

    let (mut a, mut b) = (PftDpwTree::new(root.clone()), PftDpwTree::new(root.clone()));
    let (mut ra, mut rb) = (substream(4, 0), substream(4, 0));
    for _ in 0..500 {
        a.simulate(&model, &icvar, &mut ra);
        b.simulate(&model, &mean, &mut rb);
    }
    for (x, y) in a.actions.iter().zip(&b.actions) {
        assert!((x.value - y.value).abs() < 1e-9);
    }

    let (mut a, mut b) = (PomcpowTree::new(), PomcpowTree::new());
    let (mut ra, mut rb) = (substream(4, 0), substream(4, 0));
    for _ in 0..500 {
        let s = *root.sample(&mut ra);
        a.simulate(&s, &model, &icvar, &mut ra);
        let s = *root.sample(&mut rb);
        b.simulate(&s, &model, &mean, &mut rb);
    }
    assert_eq!(a.actions.len(), b.actions.len());
    for (x, y) in a.actions.iter().zip(&b.actions) {
        assert!((x.value - y.value).abs() < 1e-9);
    }
}

#[test]
fn sparse_sampling_rejects_continuous_actions() {
    let m = LightDark::new(LightDarkSpec::default()).unwrap();
    let root = m.initial_belief(5, &mut substream(0, 0));
    let cfg = EvalConfig { n_b: 2, horizon: 1, alpha: RiskLevel::NEUTRAL, gamma: 0.5 };
    assert!(estimate_v_star(&root, 0, &cfg, &m, &mut substream(0, 1)).is_err());
}
