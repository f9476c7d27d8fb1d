//! ICVaR-POMCPOW: state-trajectory simulations with observation widening
//! and per-observation weighted state stores.

use super::{
    argmin_visited, check_action_space, default_action, icvar_action_prog_widen, icvar_exploration, should_widen,
    ChildStats, Deadline, MctsConfig, PlanOutcome,
};
use crate::error::Result;
use crate::model::{sample_proportional, GenerativeModel, ParticleBelief, SimRng};
use rand::Rng;

#[derive(Debug, Clone, Default)]
pub struct HistoryNode {
    pub visits: u64,
    pub value: f64,
    /// Indices into [`PomcpowTree::actions`].
    pub actions: Vec<usize>,
}

/// Observation child `hao` with its weighted state store.
#[derive(Debug, Clone)]
pub struct ObservationChild<S, O> {
    pub observation: O,
    /// `M(hao)`: number of times the model generated this observation.
    /// Re-selection without widening does not increment it.
    pub count: u64,
    pub states: Vec<S>,
    pub weights: Vec<f64>,
    /// Index into [`PomcpowTree::histories`].
    pub node: usize,
}

impl<S, O> ObservationChild<S, O> {
    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }
}

#[derive(Debug, Clone)]
pub struct PomcpowActionNode<A, S, O> {
    pub action: A,
    pub visits: u64,
    pub value: f64,
    /// Likelihood-weighted running mean of the immediate cost.
    pub immediate: f64,
    pub children: Vec<ObservationChild<S, O>>,
}

/// Search tree rooted at `histories[0]`.
#[derive(Debug, Clone)]
pub struct PomcpowTree<S, A, O> {
    pub histories: Vec<HistoryNode>,
    pub actions: Vec<PomcpowActionNode<A, S, O>>,
}

impl<S: Clone, A: Clone, O: Clone + PartialEq> Default for PomcpowTree<S, A, O> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Clone, A: Clone, O: Clone + PartialEq> PomcpowTree<S, A, O> {
    pub fn new() -> Self {
        Self { histories: vec![HistoryNode::default()], actions: Vec::new() }
    }

    /// Runs one simulation from the root starting in `state`.
    pub fn simulate<M>(&mut self, state: &S, model: &M, cfg: &MctsConfig, rng: &mut SimRng)
    where
        M: GenerativeModel<State = S, Action = A, Observation = O>,
    {
        self.simulate_from(state.clone(), 0, cfg.d_max, model, cfg, rng);
    }

    fn simulate_from<M>(&mut self, state: S, h: usize, depth: u32, model: &M, cfg: &MctsConfig, rng: &mut SimRng)
    where
        M: GenerativeModel<State = S, Action = A, Observation = O>,
    {
        if depth == 0 || model.is_terminal(&state) {
            return;
        }
        let a = self.select_action(h, depth, model, cfg, rng);
        let action = self.actions[a].action.clone();
        let tr = model.step(&state, &action, rng);

        let node = &mut self.actions[a];
        let old_weight: f64 = node.children.iter().map(|c| c.total_weight()).sum();
        let (j, is_new) = if should_widen(node.children.len(), node.visits, cfg.k_o, cfg.alpha_o) {
            match node.children.iter().position(|c| c.observation == tr.observation) {
                Some(j) => {
                    node.children[j].count += 1;
                    (j, false)
                }
                None => {
                    self.histories.push(HistoryNode::default());
                    let node = &mut self.actions[a];
                    node.children.push(ObservationChild {
                        observation: tr.observation.clone(),
                        count: 1,
                        states: Vec::new(),
                        weights: Vec::new(),
                        node: self.histories.len() - 1,
                    });
                    (node.children.len() - 1, true)
                }
            }
        } else {
            let counts: Vec<f64> = node.children.iter().map(|c| c.count as f64).collect();
            let j = sample_proportional(&counts, rng).expect("non-empty observation set");
            (j, false)
        };

        let node = &mut self.actions[a];
        let child = &mut node.children[j];
        let likelihood = model.obs_density(&child.observation, &action, &tr.next_state);
        child.states.push(tr.next_state.clone());
        child.weights.push(likelihood);

        let (next_state, cost) = if is_new {
            (tr.next_state, tr.cost)
        } else {
            let k = sample_proportional(&child.weights, rng).unwrap_or_else(|| rng.random_range(0..child.states.len()));
            let s = child.states[k].clone();
            let c = model.cost(&state, &action, &s);
            (s, c)
        };
        let next_h = child.node;

        self.simulate_from(next_state, next_h, depth - 1, model, cfg, rng);

        self.histories[h].visits += 1;
        let node = &mut self.actions[a];
        node.visits += 1;
        let new_weight = old_weight + likelihood;
        node.immediate = if new_weight > 0.0 {
            (node.immediate * old_weight + cost * likelihood) / new_weight
        } else {
            node.immediate + (cost - node.immediate) / node.visits as f64
        };
        self.actions[a].value = self.backup_value(a, cfg);
        self.histories[h].value = self.history_value(h);
    }

    fn select_action<M>(&mut self, h: usize, depth: u32, model: &M, cfg: &MctsConfig, rng: &mut SimRng) -> usize
    where
        M: GenerativeModel<State = S, Action = A, Observation = O>,
    {
        let node = &self.histories[h];
        if let Some(action) = icvar_action_prog_widen(model, cfg, node.actions.len(), node.visits, rng) {
            self.actions.push(PomcpowActionNode { action, visits: 0, value: 0.0, immediate: 0.0, children: Vec::new() });
            let id = self.actions.len() - 1;
            self.histories[h].actions.push(id);
        }
        let node = &self.histories[h];
        let stats: Vec<ChildStats> = node
            .actions
            .iter()
            .map(|&a| ChildStats { visits: self.actions[a].visits, value: self.actions[a].value })
            .collect();
        let pick = icvar_exploration(&stats, node.visits, depth, cfg).expect("a history node always has an action child");
        node.actions[pick]
    }

    /// `Imm(ha) + gamma * CVaR({V(hao)})`, where each child counts with
    /// multiplicity `M(hao)`. With continuous observations every child is
    /// generated once and this is the plain set CVaR.
    pub fn backup_value(&self, a: usize, cfg: &MctsConfig) -> f64 {
        let node = &self.actions[a];
        if node.visits == 0 {
            return 0.0;
        }
        let values: Vec<f64> = node.children.iter().map(|c| self.histories[c.node].value).collect();
        let counts: Vec<u64> = node.children.iter().map(|c| c.count).collect();
        node.immediate + cfg.gamma * cfg.aggregate_counts(&values, &counts)
    }

    fn history_value(&self, h: usize) -> f64 {
        let node = &self.histories[h];
        let best = argmin_visited(node.actions.iter().map(|&a| (self.actions[a].value, self.actions[a].visits)));
        best.map_or(0.0, |i| self.actions[node.actions[i]].value)
    }

    /// Structural invariants that hold between simulations (see
    /// [`super::PftDpwTree::check_invariants`]), plus `|B(hao)| = |W(hao)|`.
    pub fn check_invariants(&self, cfg: &MctsConfig) -> std::result::Result<(), String> {
        for (i, h) in self.histories.iter().enumerate() {
            let limit = (cfg.k_a * (h.visits.saturating_sub(1) as f64).powf(cfg.alpha_a)).floor() as usize + 1;
            if h.actions.len() > limit {
                return Err(format!("history {i}: {} actions exceed widening limit {limit}", h.actions.len()));
            }
            let sum: u64 = h.actions.iter().map(|&a| self.actions[a].visits).sum();
            if sum != h.visits {
                return Err(format!("history {i}: N(h) = {} but sum N(ha) = {sum}", h.visits));
            }
            if h.visits > 0 && h.actions.iter().any(|&a| self.actions[a].visits == 0) {
                return Err(format!("history {i}: action child never visited"));
            }
            if (h.value - self.history_value(i)).abs() > 1e-9 {
                return Err(format!("history {i}: stale value"));
            }
        }
        for (i, a) in self.actions.iter().enumerate() {
            let limit = (cfg.k_o * (a.visits.saturating_sub(1) as f64).powf(cfg.alpha_o)).floor() as usize + 1;
            if a.children.len() > limit {
                return Err(format!("action {i}: {} children exceed widening limit {limit}", a.children.len()));
            }
            let count: u64 = a.children.iter().map(|c| c.count).sum();
            if count > a.visits {
                return Err(format!("action {i}: N(ha) = {} but sum M = {count}", a.visits));
            }
            let stored: usize = a.children.iter().map(|c| c.states.len()).sum();
            if stored as u64 != a.visits {
                return Err(format!("action {i}: N(ha) = {} but {stored} stored states", a.visits));
            }
            for c in &a.children {
                if c.states.len() != c.weights.len() || c.count == 0 {
                    return Err(format!("action {i}: state store and weight store differ in size"));
                }
            }
            if (a.value - self.backup_value(i, cfg)).abs() > 1e-9 {
                return Err(format!("action {i}: stale value"));
            }
        }
        Ok(())
    }

    pub fn best_root_action(&self) -> Option<usize> {
        let root = &self.histories[0];
        argmin_visited(root.actions.iter().map(|&a| (self.actions[a].value, self.actions[a].visits))).map(|i| root.actions[i])
    }
}

/// ICVaR-POMCPOW planner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pomcpow {
    pub config: MctsConfig,
}

impl Pomcpow {
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
    ) -> Result<(PlanOutcome<M::Action>, PomcpowTree<M::State, M::Action, M::Observation>)> {
        check_action_space(model)?;
        let cfg = &self.config;
        let mut tree = PomcpowTree::new();
        let deadline = Deadline::new(cfg.budget);
        let mut done = 0u64;
        while !deadline.exhausted(done) {
            let state = belief.sample(rng).clone();
            tree.simulate(&state, model, cfg, rng);
            done += 1;
        }
        let root = &tree.histories[0];
        let root_values: Vec<_> = root
            .actions
            .iter()
            .map(|&a| (tree.actions[a].action.clone(), tree.actions[a].value, tree.actions[a].visits))
            .collect();
        let (action, no_simulations) = match tree.best_root_action() {
            Some(a) => (tree.actions[a].action.clone(), false),
            None => (default_action(model, rng)?, true),
        };
        let outcome = PlanOutcome { action, simulations: done, root_values, no_simulations, weight_collapses: 0 };
        Ok((outcome, tree))
    }
}
