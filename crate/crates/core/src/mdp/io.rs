//! JSON file format for MDPs.
//!
//! ```json
//! {
//!   "num_states": 2,
//!   "num_actions": 1,
//!   "discount": 0.9,
//!   "rewards": [1.0, 0.0],
//!   "transitions": [
//!     [{"plus": 0, "minus": 1, "p": 0.9}],
//!     [{"dense": [0.2, 0.8]}]
//!   ]
//! }
//! ```
//!
//! `transitions[s][a]` is either a dense distribution over all states or a
//! two-support pair. Reals are written in shortest round-trip form, so a
//! save/load cycle reproduces every value bit for bit.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{TabularMdp, Transition, TwoSupportTransition};
use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MdpDocument {
    num_states: usize,
    num_actions: usize,
    discount: f64,
    rewards: Vec<f64>,
    transitions: Vec<Vec<TransitionDocument>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
enum TransitionDocument {
    Dense { dense: Vec<f64> },
    Pair { plus: usize, minus: usize, p: f64 },
}

impl From<&Transition> for TransitionDocument {
    fn from(t: &Transition) -> Self {
        match t {
            Transition::Dense(probs) => TransitionDocument::Dense {
                dense: probs.clone(),
            },
            Transition::TwoSupport(ts) => TransitionDocument::Pair {
                plus: ts.plus_state,
                minus: ts.minus_state,
                p: ts.plus_prob,
            },
        }
    }
}

impl From<TransitionDocument> for Transition {
    fn from(doc: TransitionDocument) -> Self {
        match doc {
            TransitionDocument::Dense { dense } => Transition::Dense(dense),
            TransitionDocument::Pair { plus, minus, p } => {
                Transition::TwoSupport(TwoSupportTransition::new(plus, minus, p))
            }
        }
    }
}

pub fn to_json(mdp: &TabularMdp) -> String {
    let doc = MdpDocument {
        num_states: mdp.num_states(),
        num_actions: mdp.num_actions(),
        discount: mdp.discount(),
        rewards: mdp.rewards().to_vec(),
        transitions: mdp
            .transitions()
            .chunks(mdp.num_actions())
            .map(|row| row.iter().map(TransitionDocument::from).collect())
            .collect(),
    };
    serde_json::to_string_pretty(&doc).expect("MDP documents always serialize")
}

pub fn parse_mdp(text: &str) -> Result<TabularMdp> {
    let doc: MdpDocument = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let rows = doc
        .transitions
        .into_iter()
        .map(|row| row.into_iter().map(Transition::from).collect())
        .collect();
    TabularMdp::new(
        doc.num_states,
        doc.num_actions,
        doc.rewards,
        doc.discount,
        rows,
    )
}

pub fn load_mdp(path: impl AsRef<Path>) -> Result<TabularMdp> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_mdp(&text)
}

pub fn save_mdp(mdp: &TabularMdp, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = to_json(mdp);
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
