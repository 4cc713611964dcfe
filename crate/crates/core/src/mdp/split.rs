use super::{State, TabularMdp, Transition, TwoSupportTransition};
use crate::error::Result;

/// Rewrites `mdp` so every pair reaches at most two states.
///
/// Each `(s, a)` with more than two successors is replaced by a balanced
/// binary routing tree of depth `D = ceil(log2(max out-degree))`; every
/// original transition then takes exactly `D` steps through reward-0
/// internal nodes, and the discount becomes `γ^(1/D)` so that `γ'^D = γ`.
/// Branch probabilities are conditionals, so the product along a path is
/// the original transition probability. Empty branches point at a reward-0
/// absorbing sink with probability 0.
///
/// Original states keep their indices; the returned map is the identity on
/// them. Internal nodes and the sink are appended after them.
pub fn split_to_two_support(mdp: &TabularMdp) -> Result<(TabularMdp, Vec<State>)> {
    let n = mdp.num_states();
    let identity: Vec<State> = (0..n).collect();
    if mdp.is_two_support() {
        return Ok((mdp.clone(), identity));
    }

    let max_degree = mdp
        .transitions()
        .iter()
        .map(|t| t.out_degree())
        .max()
        .unwrap_or(1);
    if max_degree <= 2 {
        let rows = mdp
            .transition_rows()
            .into_iter()
            .map(|row| {
                row.into_iter()
                    .map(|t| {
                        Transition::TwoSupport(t.as_two_support().expect("out-degree at most two"))
                    })
                    .collect()
            })
            .collect();
        let out = TabularMdp::new(
            n,
            mdp.num_actions(),
            mdp.rewards().to_vec(),
            mdp.discount(),
            rows,
        )?;
        return Ok((out, identity));
    }

    let depth = max_degree.next_power_of_two().trailing_zeros();
    let mut builder = TreeBuilder {
        base: n,
        nodes: Vec::new(),
        needs_sink: false,
    };
    let mut roots = Vec::with_capacity(mdp.num_pairs());
    for t in mdp.transitions() {
        let leaves = t.successors();
        roots.push(builder.branch(&leaves, 0, 1 << depth));
    }

    let sink = n + builder.nodes.len();
    let total = sink + usize::from(builder.needs_sink);
    let num_actions = mdp.num_actions();
    let resolve = |t: TwoSupportTransition| {
        let fix = |s: State| if s == SINK { sink } else { s };
        Transition::TwoSupport(TwoSupportTransition::new(
            fix(t.plus_state),
            fix(t.minus_state),
            t.plus_prob,
        ))
    };

    let mut rows: Vec<Vec<Transition>> = roots
        .chunks(num_actions)
        .map(|row| row.iter().map(|&t| resolve(t)).collect())
        .collect();
    let mut rewards = mdp.rewards().to_vec();
    for node in &builder.nodes {
        rows.push(vec![resolve(*node); num_actions]);
        rewards.push(0.0);
    }
    if builder.needs_sink {
        rows.push(vec![
            Transition::TwoSupport(
                TwoSupportTransition::deterministic(sink)
            );
            num_actions
        ]);
        rewards.push(0.0);
    }
    debug_assert_eq!(rows.len(), total);

    let discount = mdp.discount().powf(1.0 / f64::from(depth));
    let out = TabularMdp::new(total, num_actions, rewards, discount, rows)?;
    Ok((out, identity))
}

/// Placeholder for the sink until its index is known.
const SINK: State = State::MAX;

struct TreeBuilder {
    /// Index of the first internal node.
    base: State,
    /// Transitions of internal nodes, in index order from `base`.
    nodes: Vec<TwoSupportTransition>,
    needs_sink: bool,
}

impl TreeBuilder {
    /// Transition of a node whose subtree covers leaf slots `[lo, hi)`.
    /// Slot `i` holds `leaves[i]` when it exists.
    fn branch(&mut self, leaves: &[(State, f64)], lo: usize, hi: usize) -> TwoSupportTransition {
        let mid = (lo + hi) / 2;
        let mass =
            |a: usize, b: usize| -> f64 { leaves.iter().take(b).skip(a).map(|&(_, p)| p).sum() };
        let left_mass = mass(lo, mid);
        let right_mass = mass(mid, hi);
        let left = self.child(leaves, lo, mid);
        let right = self.child(leaves, mid, hi);
        let total = left_mass + right_mass;
        let plus_prob = if right_mass == 0.0 {
            1.0
        } else {
            left_mass / total
        };
        TwoSupportTransition::new(left, right, plus_prob)
    }

    fn child(&mut self, leaves: &[(State, f64)], lo: usize, hi: usize) -> State {
        if lo >= leaves.len() {
            self.needs_sink = true;
            return SINK;
        }
        if hi - lo == 1 {
            return leaves[lo].0;
        }
        let slot = self.nodes.len();
        self.nodes.push(TwoSupportTransition::deterministic(SINK));
        self.nodes[slot] = self.branch(leaves, lo, hi);
        self.base + slot
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{evaluate_policy, StationaryPolicy};

    #[test]
    fn two_support_input_is_unchanged() {
        let t = |p| Transition::TwoSupport(TwoSupportTransition::new(0, 1, p));
        let mdp = TabularMdp::new(
            2,
            2,
            vec![1.0, 0.0],
            0.9,
            vec![vec![t(0.2), t(0.4)], vec![t(0.6), t(0.8)]],
        )
        .unwrap();
        let (out, map) = split_to_two_support(&mdp).unwrap();
        assert_eq!(out, mdp);
        assert_eq!(map, vec![0, 1]);
    }

    #[test]
    fn uniform_four_way_split_is_a_depth_two_tree() {
        let uniform = Transition::Dense(vec![0.25; 4]);
        let mdp = TabularMdp::new(
            4,
            1,
            vec![1.0, 0.0, 0.5, 0.25],
            0.81,
            vec![vec![uniform]; 4],
        )
        .unwrap();
        let (out, map) = split_to_two_support(&mdp).unwrap();
        assert!((out.discount() - 0.9).abs() < 1e-15);
        // two internal nodes per pair, no sink needed
        assert_eq!(out.num_states(), 4 + 4 * 2);
        assert!(out.is_two_support());
        for t in out.transitions() {
            match t {
                Transition::TwoSupport(ts) => assert_eq!(ts.plus_prob, 0.5),
                Transition::Dense(_) => unreachable!(),
            }
        }
        let policy = StationaryPolicy::constant(4, 0);
        let v = evaluate_policy(&mdp, &policy, None, 0).unwrap();
        let ext = StationaryPolicy::constant(out.num_states(), 0);
        let w = evaluate_policy(&out, &ext, None, 0).unwrap();
        for s in 0..4 {
            assert!((v[s] - w[map[s]]).abs() < 1e-9);
        }
    }

    #[test]
    fn uneven_degrees_pad_to_common_depth() {
        // degrees 3 and 1 force depth 2 and a sink for the empty slots
        let mdp = TabularMdp::new(
            3,
            2,
            vec![0.3, 1.0, 0.0],
            0.64,
            vec![
                vec![
                    Transition::Dense(vec![0.2, 0.3, 0.5]),
                    Transition::Dense(vec![0.0, 1.0, 0.0]),
                ],
                vec![
                    Transition::Dense(vec![0.5, 0.0, 0.5]),
                    Transition::Dense(vec![1.0, 0.0, 0.0]),
                ],
                vec![
                    Transition::Dense(vec![0.1, 0.1, 0.8]),
                    Transition::Dense(vec![0.0, 0.0, 1.0]),
                ],
            ],
        )
        .unwrap();
        let (out, map) = split_to_two_support(&mdp).unwrap();
        assert!((out.discount() - 0.8).abs() < 1e-15);
        let sink = out.num_states() - 1;
        assert_eq!(out.reward(sink), 0.0);
        for policy in StationaryPolicy::enumerate(3, 2) {
            let v = evaluate_policy(&mdp, &policy, None, 0).unwrap();
            let mut actions = policy.actions().to_vec();
            actions.resize(out.num_states(), 0);
            let w = evaluate_policy(&out, &StationaryPolicy::new(actions), None, 0).unwrap();
            for s in 0..3 {
                assert!((v[s] - w[map[s]]).abs() < 1e-9);
            }
        }
    }
}
