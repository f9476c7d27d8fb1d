//! Generative POMDP models, weighted particle beliefs, and the one-step
//! particle-filter propagation shared by every planner.

use crate::error::{IcvarError, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fmt::Debug;

/// The random number generator used everywhere: ChaCha8, a counter-based
/// generator with 2^64 independent streams per seed.
pub type SimRng = ChaCha8Rng;

/// Generator for stream `stream` of `seed`. Distinct streams never overlap.
pub fn substream(seed: u64, stream: u64) -> SimRng {
    let mut rng = SimRng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Result of one simulated transition.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition<S, O> {
    pub next_state: S,
    pub observation: O,
    pub cost: f64,
}

/// The action set a model exposes to planners.
#[derive(Debug, Clone, PartialEq)]
pub enum ActionSpace<A> {
    /// Enumerable actions, tried in index order.
    Finite(Vec<A>),
    /// A continuous set that can only be sampled.
    Sampled,
}

/// Black-box generative POMDP. Costs are minimized.
///
/// Implementations must be deterministic given the rng stream position and
/// must keep every emitted cost inside [`GenerativeModel::cost_range`].
/// Terminal states are absorbing with zero cost.
pub trait GenerativeModel: Sync {
    type State: Clone + Debug + Send + Sync;
    type Action: Clone + Debug + PartialEq + Send + Sync;
    type Observation: Clone + Debug + PartialEq + Send + Sync;

    fn step(
        &self,
        state: &Self::State,
        action: &Self::Action,
        rng: &mut SimRng,
    ) -> Transition<Self::State, Self::Observation>;

    /// Cost of the realized transition `(state, action, next_state)`.
    fn cost(&self, state: &Self::State, action: &Self::Action, next_state: &Self::State) -> f64;

    /// Likelihood `Z(observation | action, next_state)`: finite and non-negative.
    fn obs_density(
        &self,
        observation: &Self::Observation,
        action: &Self::Action,
        next_state: &Self::State,
    ) -> f64;

    fn sample_initial_state(&self, rng: &mut SimRng) -> Self::State;

    /// Agent's prior belief. Defaults to `n_particles` equally weighted draws
    /// from the initial-state distribution.
    fn initial_belief(&self, n_particles: usize, rng: &mut SimRng) -> ParticleBelief<Self::State> {
        let particles = (0..n_particles.max(1)).map(|_| self.sample_initial_state(rng)).collect();
        ParticleBelief::uniform(particles).expect("non-empty particle set")
    }

    fn actions(&self) -> ActionSpace<Self::Action>;

    /// Draws an action; used to widen nodes of [`ActionSpace::Sampled`] models.
    fn sample_action(&self, rng: &mut SimRng) -> Self::Action {
        match self.actions() {
            ActionSpace::Finite(actions) => actions[rng.random_range(0..actions.len())].clone(),
            ActionSpace::Sampled => panic!("sampled action spaces must override sample_action"),
        }
    }

    /// `(R_min, R_max)` of any single-step cost.
    fn cost_range(&self) -> (f64, f64);

    fn discount(&self) -> f64;

    fn is_terminal(&self, state: &Self::State) -> bool;
}

/// Weighted particle set `{(x_i, w_i)}` with at least one positive weight.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleBelief<S> {
    particles: Vec<S>,
    weights: Vec<f64>,
}

impl<S> ParticleBelief<S> {
    pub fn new(particles: Vec<S>, weights: Vec<f64>) -> Result<Self> {
        if particles.is_empty() {
            return Err(IcvarError::domain("belief needs at least one particle"));
        }
        if particles.len() != weights.len() {
            return Err(IcvarError::domain("particle and weight counts differ"));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(IcvarError::domain("weights must be finite and non-negative"));
        }
        if !weights.iter().any(|w| *w > 0.0) {
            return Err(IcvarError::domain("belief needs a strictly positive weight"));
        }
        Ok(Self { particles, weights })
    }

    pub fn uniform(particles: Vec<S>) -> Result<Self> {
        let n = particles.len();
        Self::new(particles, vec![1.0 / n.max(1) as f64; n])
    }

    pub fn particles(&self) -> &[S] {
        &self.particles
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&S, f64)> {
        self.particles.iter().zip(self.weights.iter().copied())
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Index drawn with probability proportional to its weight.
    pub fn sample_index(&self, rng: &mut SimRng) -> usize {
        sample_proportional(&self.weights, rng).unwrap_or(0)
    }

    pub fn sample(&self, rng: &mut SimRng) -> &S {
        &self.particles[self.sample_index(rng)]
    }
}

/// Index drawn proportionally to `weights`; `None` when the total is not positive.
pub(crate) fn sample_proportional(weights: &[f64], rng: &mut SimRng) -> Option<usize> {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return None;
    }
    let mut u = rng.random::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        if u < w {
            return Some(i);
        }
        u -= w;
    }
    weights.iter().rposition(|&w| w > 0.0)
}

/// `w_i / sum_k w_k`.
pub fn normalized_weights<S>(belief: &ParticleBelief<S>) -> Result<Vec<f64>> {
    let total = belief.total_weight();
    if !(total > 0.0) {
        return Err(IcvarError::domain("cannot normalize all-zero weights"));
    }
    Ok(belief.weights.iter().map(|w| w / total).collect())
}

/// Weighted mean of per-particle sampled costs for taking `action`.
pub fn belief_cost<M: GenerativeModel>(
    belief: &ParticleBelief<M::State>,
    action: &M::Action,
    model: &M,
    rng: &mut SimRng,
) -> Result<f64> {
    let w = normalized_weights(belief)?;
    Ok(belief
        .particles
        .iter()
        .zip(&w)
        .map(|(x, wi)| wi * model.step(x, action, rng).cost)
        .sum())
}

/// Output of [`gen_pf`].
#[derive(Debug, Clone)]
pub struct BeliefTransition<S, O> {
    pub next_belief: ParticleBelief<S>,
    /// Prior-weighted mean of the per-particle costs.
    pub mean_cost: f64,
    pub observation: O,
    /// Every posterior weight was zero and the weights were reset to uniform.
    pub collapsed: bool,
}

/// One particle-filter step with a self-generated observation.
///
/// An anchor particle is drawn by weight and stepped once to produce the
/// observation `z`; every particle is then stepped independently and
/// reweighted by `Z(z | a, x'_i)`. The mean cost uses the input weights.
pub fn gen_pf<M: GenerativeModel>(
    belief: &ParticleBelief<M::State>,
    action: &M::Action,
    model: &M,
    rng: &mut SimRng,
) -> BeliefTransition<M::State, M::Observation> {
    let anchor = belief.sample_index(rng);
    let observation = model.step(&belief.particles[anchor], action, rng).observation;
    let (next_belief, mean_cost, collapsed) = propagate(belief, action, &observation, model, rng);
    BeliefTransition { next_belief, mean_cost, observation, collapsed }
}

/// Agent-side belief update conditioned on an observation received from the
/// environment. Returns the posterior and whether the weights collapsed.
pub fn update_belief<M: GenerativeModel>(
    belief: &ParticleBelief<M::State>,
    action: &M::Action,
    observation: &M::Observation,
    model: &M,
    rng: &mut SimRng,
) -> (ParticleBelief<M::State>, bool) {
    let (next, _, collapsed) = propagate(belief, action, observation, model, rng);
    (next, collapsed)
}

fn propagate<M: GenerativeModel>(
    belief: &ParticleBelief<M::State>,
    action: &M::Action,
    observation: &M::Observation,
    model: &M,
    rng: &mut SimRng,
) -> (ParticleBelief<M::State>, f64, bool) {
    let n = belief.len();
    let mut particles = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    let mut cost_sum = 0.0;
    let mut weight_sum = 0.0;
    for (x, w) in belief.iter() {
        let t = model.step(x, action, rng);
        cost_sum += w * t.cost;
        weight_sum += w;
        weights.push(w * model.obs_density(observation, action, &t.next_state));
        particles.push(t.next_state);
    }
    let collapsed = !weights.iter().any(|w| *w > 0.0 && w.is_finite());
    if collapsed {
        weights.iter_mut().for_each(|w| *w = 1.0 / n as f64);
    }
    let next = ParticleBelief { particles, weights };
    (next, cost_sum / weight_sum, collapsed)
}

/// Systematic resampling to `belief.len()` equally weighted particles.
pub fn resample<S: Clone>(belief: &ParticleBelief<S>, rng: &mut SimRng) -> ParticleBelief<S> {
    let n = belief.len();
    let total = belief.total_weight();
    let step = total / n as f64;
    let mut u = rng.random::<f64>() * step;
    let mut out = Vec::with_capacity(n);
    let mut cum = 0.0;
    let mut i = 0;
    for (idx, (x, w)) in belief.iter().enumerate() {
        cum += w;
        while i < n && u < cum {
            out.push(x.clone());
            u += step;
            i += 1;
        }
        if idx + 1 == n {
            while i < n {
                out.push(x.clone());
                i += 1;
            }
        }
    }
    ParticleBelief { weights: vec![1.0 / n as f64; n], particles: out }
}

/// True when every particle with positive weight is terminal.
pub fn belief_is_terminal<M: GenerativeModel>(model: &M, belief: &ParticleBelief<M::State>) -> bool {
    belief.iter().filter(|(_, w)| *w > 0.0).all(|(x, _)| model.is_terminal(x))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Two-state model: the state flips w.p. `flip`; observation equals the
    /// state w.p. `acc`; cost is 10 in state 1.
    struct Flip {
        flip: f64,
        acc: f64,
    }

    impl GenerativeModel for Flip {
        type State = usize;
        type Action = ();
        type Observation = usize;

        fn step(&self, s: &usize, _: &(), rng: &mut SimRng) -> Transition<usize, usize> {
            let next = if rng.random::<f64>() < self.flip { 1 - s } else { *s };
            let observation = if rng.random::<f64>() < self.acc { next } else { 1 - next };
            Transition { next_state: next, observation, cost: self.cost(s, &(), &next) }
        }
        fn cost(&self, s: &usize, _: &(), _: &usize) -> f64 {
            10.0 * *s as f64
        }
        fn obs_density(&self, z: &usize, _: &(), x: &usize) -> f64 {
            if z == x { self.acc } else { 1.0 - self.acc }
        }
        fn sample_initial_state(&self, rng: &mut SimRng) -> usize {
            rng.random_range(0..2)
        }
        fn actions(&self) -> ActionSpace<()> {
            ActionSpace::Finite(vec![()])
        }
        fn cost_range(&self) -> (f64, f64) {
            (0.0, 10.0)
        }
        fn discount(&self) -> f64 {
            1.0
        }
        fn is_terminal(&self, _: &usize) -> bool {
            false
        }
    }

    #[test]
    fn normalization() {
        let b = ParticleBelief::new(vec![0, 1], vec![1.0, 3.0]).unwrap();
        assert_eq!(normalized_weights(&b).unwrap(), vec![0.25, 0.75]);
        let b = ParticleBelief::uniform(vec![0; 4]).unwrap();
        assert_eq!(normalized_weights(&b).unwrap(), vec![0.25; 4]);
        let b = ParticleBelief::new(vec![0, 1, 2], vec![0.0, 2.0, 0.0]).unwrap();
        assert_eq!(normalized_weights(&b).unwrap(), vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn invalid_beliefs_rejected() {
        assert!(ParticleBelief::new(vec![0, 1], vec![0.0, 0.0]).is_err());
        assert!(ParticleBelief::<usize>::new(vec![], vec![]).is_err());
        assert!(ParticleBelief::new(vec![0], vec![f64::NAN]).is_err());
        assert!(ParticleBelief::new(vec![0], vec![1.0, 2.0]).is_err());
    }

    #[test]
    fn belief_cost_examples() {
        let m = Flip { flip: 0.0, acc: 1.0 };
        let mut rng = substream(1, 0);
        let b = ParticleBelief::uniform(vec![1, 1, 1]).unwrap();
        assert_eq!(belief_cost(&b, &(), &m, &mut rng).unwrap(), 10.0);
        let b = ParticleBelief::uniform(vec![0, 1]).unwrap();
        assert_eq!(belief_cost(&b, &(), &m, &mut rng).unwrap(), 5.0);
        let b = ParticleBelief::new(vec![0, 1], vec![3.0, 1.0]).unwrap();
        assert_eq!(belief_cost(&b, &(), &m, &mut rng).unwrap(), 2.5);
    }

    #[test]
    fn noiseless_gen_pf_keeps_weights() {
        // obs_density == 1 for every pair
        let m = Flip { flip: 0.0, acc: 0.5 };
        let b = ParticleBelief::new(vec![0, 1, 1], vec![0.2, 0.5, 0.3]).unwrap();
        let mut rng = substream(3, 0);
        let t = gen_pf(&b, &(), &m, &mut rng);
        let w = normalized_weights(&t.next_belief).unwrap();
        for (a, b) in w.iter().zip([0.2, 0.5, 0.3]) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((t.mean_cost - 8.0).abs() < 1e-12);
        assert!(!t.collapsed);
    }

    #[test]
    fn hand_bayes_update() {
        // deterministic dynamics, 80% accurate sensor, prior {0.5, 0.5}
        let m = Flip { flip: 0.0, acc: 0.8 };
        let b = ParticleBelief::uniform(vec![0, 1]).unwrap();
        let (post, collapsed) = update_belief(&b, &(), &1, &m, &mut substream(0, 0));
        assert!(!collapsed);
        let w = normalized_weights(&post).unwrap();
        assert!((w[0] - 0.2).abs() < 1e-12 && (w[1] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn collapse_resets_uniform() {
        let m = Flip { flip: 0.0, acc: 1.0 };
        let b = ParticleBelief::uniform(vec![0, 0, 0]).unwrap();
        let (post, collapsed) = update_belief(&b, &(), &1, &m, &mut substream(0, 0));
        assert!(collapsed);
        assert_eq!(normalized_weights(&post).unwrap(), vec![1.0 / 3.0; 3]);
    }

    #[test]
    fn gen_pf_reproducible_and_size_preserving() {
        let m = Flip { flip: 0.3, acc: 0.7 };
        let b = m.initial_belief(20, &mut substream(9, 0));
        let t1 = gen_pf(&b, &(), &m, &mut substream(5, 1));
        let t2 = gen_pf(&b, &(), &m, &mut substream(5, 1));
        assert_eq!(t1.next_belief, t2.next_belief);
        assert_eq!(t1.mean_cost.to_bits(), t2.mean_cost.to_bits());
        assert_eq!(t1.next_belief.len(), 20);
    }

    #[test]
    fn resample_keeps_count() {
        let b = ParticleBelief::new(vec![0, 1, 2, 3], vec![0.0, 0.9, 0.1, 0.0]).unwrap();
        let r = resample(&b, &mut substream(2, 2));
        assert_eq!(r.len(), 4);
        assert!(r.particles().iter().all(|x| *x == 1 || *x == 2));
    }

    #[test]
    fn substreams_differ() {
        let a: u64 = substream(1, 0).random();
        let b: u64 = substream(1, 1).random();
        assert_ne!(a, b);
    }
}
