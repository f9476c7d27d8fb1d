//! ICVaR-PFT-DPW: tree search over particle beliefs with double
//! progressive widening.

use super::{
    argmin_visited, check_action_space, default_action, icvar_action_prog_widen, icvar_exploration, should_widen,
    ChildStats, Deadline, MctsConfig, PlanOutcome,
};
use crate::error::Result;
use crate::model::{belief_is_terminal, gen_pf, GenerativeModel, ParticleBelief, SimRng};
use rand::Rng;

#[derive(Debug, Clone)]
pub struct BeliefNode<S> {
    pub belief: ParticleBelief<S>,
    pub visits: u64,
    pub value: f64,
    /// Indices into [`PftDpwTree::actions`].
    pub actions: Vec<usize>,
}

/// A sampled successor belief of an action node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeliefEdge {
    /// Index into [`PftDpwTree::beliefs`].
    pub node: usize,
    /// `rho(b, a, b')` as returned by the particle filter.
    pub cost: f64,
    /// Number of times this edge was traversed.
    pub count: u64,
}

#[derive(Debug, Clone)]
pub struct PftActionNode<A> {
    pub action: A,
    pub visits: u64,
    pub value: f64,
    pub children: Vec<BeliefEdge>,
}

/// Search tree rooted at `beliefs[0]`.
#[derive(Debug, Clone)]
pub struct PftDpwTree<S, A> {
    pub beliefs: Vec<BeliefNode<S>>,
    pub actions: Vec<PftActionNode<A>>,
    pub weight_collapses: u64,
}

impl<S: Clone, A: Clone> PftDpwTree<S, A> {
    pub fn new(root: ParticleBelief<S>) -> Self {
        Self {
            beliefs: vec![BeliefNode { belief: root, visits: 0, value: 0.0, actions: Vec::new() }],
            actions: Vec::new(),
            weight_collapses: 0,
        }
    }

    /// Runs one simulation from the root.
    pub fn simulate<M>(&mut self, model: &M, cfg: &MctsConfig, rng: &mut SimRng)
    where
        M: GenerativeModel<State = S, Action = A>,
    {
        self.simulate_from(0, cfg.d_max, model, cfg, rng);
    }

    fn simulate_from<M>(&mut self, b: usize, depth: u32, model: &M, cfg: &MctsConfig, rng: &mut SimRng)
    where
        M: GenerativeModel<State = S, Action = A>,
    {
        if depth == 0 || belief_is_terminal(model, &self.beliefs[b].belief) {
            return;
        }
        let a = self.select_action(b, depth, model, cfg, rng);

        let node = &self.actions[a];
        let edge = if should_widen(node.children.len(), node.visits, cfg.k_o, cfg.alpha_o) {
            let action = node.action.clone();
            let tr = gen_pf(&self.beliefs[b].belief, &action, model, rng);
            self.weight_collapses += tr.collapsed as u64;
            self.beliefs.push(BeliefNode { belief: tr.next_belief, visits: 0, value: 0.0, actions: Vec::new() });
            let node = &mut self.actions[a];
            node.children.push(BeliefEdge { node: self.beliefs.len() - 1, cost: tr.mean_cost, count: 1 });
            node.children.len() - 1
        } else {
            let i = rng.random_range(0..node.children.len());
            self.actions[a].children[i].count += 1;
            i
        };

        let child = self.actions[a].children[edge].node;
        self.simulate_from(child, depth - 1, model, cfg, rng);

        self.beliefs[b].visits += 1;
        self.actions[a].visits += 1;
        self.actions[a].value = self.backup_value(a, cfg);
        self.beliefs[b].value = self.history_value(b);
    }

    fn select_action<M>(&mut self, b: usize, depth: u32, model: &M, cfg: &MctsConfig, rng: &mut SimRng) -> usize
    where
        M: GenerativeModel<State = S, Action = A>,
    {
        let node = &self.beliefs[b];
        if let Some(action) = icvar_action_prog_widen(model, cfg, node.actions.len(), node.visits, rng) {
            self.actions.push(PftActionNode { action, visits: 0, value: 0.0, children: Vec::new() });
            let id = self.actions.len() - 1;
            self.beliefs[b].actions.push(id);
        }
        let node = &self.beliefs[b];
        let stats: Vec<ChildStats> = node
            .actions
            .iter()
            .map(|&a| ChildStats { visits: self.actions[a].visits, value: self.actions[a].value })
            .collect();
        let pick = icvar_exploration(&stats, node.visits, depth, cfg).expect("a belief node always has an action child");
        node.actions[pick]
    }

    /// `c_bar + gamma * CVaR({V(b')})` with `c_bar` the traversal-weighted
    /// mean of the stored edge costs.
    pub fn backup_value(&self, a: usize, cfg: &MctsConfig) -> f64 {
        let node = &self.actions[a];
        let total: u64 = node.children.iter().map(|e| e.count).sum();
        if total == 0 {
            return 0.0;
        }
        let c_bar = node.children.iter().map(|e| e.count as f64 * e.cost).sum::<f64>() / total as f64;
        let values: Vec<f64> = node.children.iter().map(|e| self.beliefs[e.node].value).collect();
        c_bar + cfg.gamma * cfg.aggregate(&values)
    }

    fn history_value(&self, b: usize) -> f64 {
        let node = &self.beliefs[b];
        let best = argmin_visited(node.actions.iter().map(|&a| (self.actions[a].value, self.actions[a].visits)));
        best.map_or(0.0, |i| self.actions[node.actions[i]].value)
    }

    /// Checks the structural invariants that hold between simulations:
    /// widening limits, visit-count conservation, every action child of a
    /// visited node visited at least once, and stored values equal to a
    /// fresh backup.
    pub fn check_invariants(&self, cfg: &MctsConfig) -> std::result::Result<(), String> {
        for (i, b) in self.beliefs.iter().enumerate() {
            let limit = (cfg.k_a * (b.visits.saturating_sub(1) as f64).powf(cfg.alpha_a)).floor() as usize + 1;
            if b.actions.len() > limit {
                return Err(format!("belief {i}: {} actions exceed widening limit {limit}", b.actions.len()));
            }
            let sum: u64 = b.actions.iter().map(|&a| self.actions[a].visits).sum();
            if sum != b.visits {
                return Err(format!("belief {i}: N(b) = {} but sum N(ba) = {sum}", b.visits));
            }
            if b.visits > 0 && b.actions.iter().any(|&a| self.actions[a].visits == 0) {
                return Err(format!("belief {i}: action child never visited"));
            }
            if (b.value - self.history_value(i)).abs() > 1e-9 {
                return Err(format!("belief {i}: stale value"));
            }
        }
        for (i, a) in self.actions.iter().enumerate() {
            let limit = (cfg.k_o * (a.visits.saturating_sub(1) as f64).powf(cfg.alpha_o)).floor() as usize + 1;
            if a.children.len() > limit {
                return Err(format!("action {i}: {} children exceed widening limit {limit}", a.children.len()));
            }
            let count: u64 = a.children.iter().map(|e| e.count).sum();
            if count != a.visits {
                return Err(format!("action {i}: N(ba) = {} but sum M = {count}", a.visits));
            }
            if (a.value - self.backup_value(i, cfg)).abs() > 1e-9 {
                return Err(format!("action {i}: stale value"));
            }
        }
        Ok(())
    }

    /// Index of the root action child with the smallest value.
    pub fn best_root_action(&self) -> Option<usize> {
        let root = &self.beliefs[0];
        argmin_visited(root.actions.iter().map(|&a| (self.actions[a].value, self.actions[a].visits))).map(|i| root.actions[i])
    }
}

/// ICVaR-PFT-DPW planner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PftDpw {
    pub config: MctsConfig,
}

impl PftDpw {
    pub fn new(config: MctsConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config })
    }

    pub fn plan<M: GenerativeModel>(
        &self,
        belief: &ParticleBelief<M::State>,
        model: &M,
        rng: &mut SimRng,
    ) -> Result<PlanOutcome<M::Action>> {
        self.plan_with_tree(belief, model, rng).map(|(o, _)| o)
    }

    #[allow(clippy::type_complexity)]
    pub fn plan_with_tree<M: GenerativeModel>(
        &self,
        belief: &ParticleBelief<M::State>,
        model: &M,
        rng: &mut SimRng,
    ) -> Result<(PlanOutcome<M::Action>, PftDpwTree<M::State, M::Action>)> {
        check_action_space(model)?;
        let cfg = &self.config;
        let mut tree = PftDpwTree::new(belief.clone());
        let deadline = Deadline::new(cfg.budget);
        let mut done = 0u64;
        while !deadline.exhausted(done) {
            tree.simulate(model, cfg, rng);
            done += 1;
        }
        let root_values: Vec<_> = tree.beliefs[0]
            .actions
            .iter()
            .map(|&a| (tree.actions[a].action.clone(), tree.actions[a].value, tree.actions[a].visits))
            .collect();
        let (action, no_simulations) = match tree.best_root_action() {
            Some(a) => (tree.actions[a].action.clone(), false),
            None => (default_action(model, rng)?, true),
        };
        let outcome = PlanOutcome { action, simulations: done, root_values, no_simulations, weight_collapses: tree.weight_collapses };
        Ok((outcome, tree))
    }
}
