//! Text form of a [`LabeledChain`].
//!
//! ```json
//! {
//!   "states": [{"id": 0, "label": 1.0}, {"id": 1, "label": 2.0}],
//!   "matrix": [[0.5, 0.5], ["1/3", "2/3"]],
//!   "stationary": [2, 3]
//! }
//! ```
//!
//! Exactly one of `matrix` or `edges` (`[{"u": 0, "v": 1, "weight": 1}]`,
//! random-walk convention) must be present. Numbers may be JSON numbers or
//! strings holding a decimal or `"p/q"` rational; strings keep values such as
//! `1/3` exact.

use std::path::Path;

use num_rational::BigRational;
use num_traits::Zero;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use super::{decimal_rational, format_rational, parse_rational, rational_to_f64, LabeledChain, StateId};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ChainSpecDocument {
    pub states: Vec<StateEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<Vec<NumberText>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges: Option<Vec<EdgeEntry>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stationary: Option<Vec<NumberText>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct StateEntry {
    pub id: usize,
    pub label: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct EdgeEntry {
    pub u: usize,
    pub v: usize,
    pub weight: NumberText,
}

/// A JSON number, or a string with a decimal or `p/q` rational.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(untagged)]
pub enum NumberText {
    Number(f64),
    Text(String),
}

impl NumberText {
    fn exact(&self) -> Result<BigRational> {
        match self {
            NumberText::Number(x) => decimal_rational(*x).ok_or_else(|| Error::Parse(format!("non-finite number {x}"))),
            NumberText::Text(s) => parse_rational(s),
        }
    }

    fn from_exact(value: &BigRational) -> Self {
        let float = rational_to_f64(value);
        match decimal_rational(float) {
            Some(d) if d == *value => NumberText::Number(float),
            _ => NumberText::Text(format_rational(value)),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DocumentForm {
    Dense,
    Edges,
}

impl ChainSpecDocument {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("documents always serialize")
    }

    pub fn to_chain(&self) -> Result<LabeledChain> {
        let n = self.states.len();
        if n == 0 {
            return Err(Error::InvalidChain("`states` is empty".into()));
        }
        let mut labels = vec![None; n];
        for s in &self.states {
            if s.id >= n {
                return Err(Error::InvalidChain(format!("state id {} is outside 0..{n}", s.id)));
            }
            if labels[s.id].replace(s.label).is_some() {
                return Err(Error::InvalidChain(format!("state id {} appears twice", s.id)));
            }
        }
        let labels: Vec<f64> = labels.into_iter().map(|l| l.expect("ids form a permutation")).collect();

        let stationary = self
            .stationary
            .as_ref()
            .map(|w| w.iter().map(NumberText::exact).collect::<Result<Vec<_>>>())
            .transpose()?;

        match (&self.matrix, &self.edges) {
            (Some(rows), None) => {
                let rows = rows
                    .iter()
                    .map(|row| row.iter().map(NumberText::exact).collect::<Result<Vec<_>>>())
                    .collect::<Result<Vec<_>>>()?;
                LabeledChain::from_rational_rows(rows, stationary, labels)
            }
            (None, Some(edges)) => {
                let edges = edges
                    .iter()
                    .map(|e| Ok((e.u, e.v, e.weight.exact()?)))
                    .collect::<Result<Vec<_>>>()?;
                let chain = LabeledChain::build_from_rational_edges(n, &edges)?.with_labels(labels)?;
                match stationary {
                    None => Ok(chain),
                    Some(w) => {
                        let exact = chain.exact().expect("edge chains are exact");
                        let n = chain.n_states();
                        let rows = exact.transition.chunks(n).map(<[_]>::to_vec).collect();
                        LabeledChain::from_rational_rows(rows, Some(w), chain.labels().to_vec())
                    }
                }
            }
            (Some(_), Some(_)) => Err(Error::InvalidChain("give exactly one of `matrix` or `edges`, not both".into())),
            (None, None) => Err(Error::InvalidChain("one of `matrix` or `edges` is required".into())),
        }
    }

    /// Dense form reproduces every field bit for bit. Edge form writes
    /// `w(u) P(u,v)` per unordered pair and needs a reversible chain.
    pub fn from_chain(chain: &LabeledChain, form: DocumentForm) -> Result<Self> {
        let n = chain.n_states();
        let states = chain
            .states()
            .map(|s| StateEntry { id: s.0, label: chain.label(s) })
            .collect();
        match form {
            DocumentForm::Dense => {
                let (matrix, stationary) = match chain.exact() {
                    Some(exact) => (
                        exact.transition.chunks(n).map(|row| row.iter().map(NumberText::from_exact).collect()).collect(),
                        exact.stationary_weight.iter().map(NumberText::from_exact).collect(),
                    ),
                    None => (
                        chain.states().map(|u| chain.row(u).iter().map(|&p| NumberText::Number(p)).collect()).collect(),
                        chain.stationary_weights().iter().map(|&w| NumberText::Number(w)).collect(),
                    ),
                };
                Ok(ChainSpecDocument { states, matrix: Some(matrix), edges: None, stationary: Some(stationary) })
            }
            DocumentForm::Edges => {
                chain.require_valid()?;
                let mut edges = Vec::new();
                for u in 0..n {
                    for v in u..n {
                        let weight = match chain.exact() {
                            Some(exact) => {
                                let w = &exact.stationary_weight[u] * &exact.transition[u * n + v];
                                if w.is_zero() {
                                    continue;
                                }
                                NumberText::from_exact(&w)
                            }
                            None => {
                                let w = chain.stationary_weights()[u] * chain.transition(StateId(u), StateId(v));
                                if w == 0.0 {
                                    continue;
                                }
                                NumberText::Number(w)
                            }
                        };
                        edges.push(EdgeEntry { u, v, weight });
                    }
                }
                Ok(ChainSpecDocument { states, matrix: None, edges: Some(edges), stationary: None })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_dense_with_rational_strings() {
        let doc = ChainSpecDocument::from_json(
            r#"{"states":[{"id":1,"label":5},{"id":0,"label":-1}],
                "matrix":[["1/3","2/3"],[0.5,0.5]]}"#,
        )
        .unwrap();
        let chain = doc.to_chain().unwrap();
        assert_eq!(chain.labels(), &[-1.0, 5.0]);
        assert_eq!(chain.transition(StateId(0), StateId(1)), 2.0 / 3.0);
        // 1/3 * 2/3 = w1 * 1/2 with w0 = 1 -> w1 = 4/3
        assert_eq!(chain.exact().unwrap().stationary_weight[1], BigRational::new(4.into(), 3.into()));
        assert!(chain.validate().is_valid());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let err = ChainSpecDocument::from_json(r#"{"states":[{"id":0,"label":0}],"matrix":[[1]],"extra":1}"#);
        assert!(err.is_err());
        let err = ChainSpecDocument::from_json(r#"{"states":[{"id":0,"label":0,"name":"a"}],"matrix":[[1]]}"#);
        assert!(err.is_err());
    }

    #[test]
    fn exactly_one_transition_source() {
        let both = r#"{"states":[{"id":0,"label":0}],"matrix":[[1]],"edges":[{"u":0,"v":0,"weight":1}]}"#;
        assert!(ChainSpecDocument::from_json(both).unwrap().to_chain().is_err());
        let none = r#"{"states":[{"id":0,"label":0}]}"#;
        assert!(ChainSpecDocument::from_json(none).unwrap().to_chain().is_err());
    }

    #[test]
    fn duplicate_or_missing_ids() {
        let dup = r#"{"states":[{"id":0,"label":0},{"id":0,"label":1}],"matrix":[[1,0],[0,1]]}"#;
        assert!(ChainSpecDocument::from_json(dup).unwrap().to_chain().is_err());
        let gap = r#"{"states":[{"id":0,"label":0},{"id":2,"label":1}],"matrix":[[1,0],[0,1]]}"#;
        assert!(ChainSpecDocument::from_json(gap).unwrap().to_chain().is_err());
    }

    #[test]
    fn edge_form_implies_degree_weights() {
        let doc = ChainSpecDocument::from_json(
            r#"{"states":[{"id":0,"label":0},{"id":1,"label":1},{"id":2,"label":2}],
                "edges":[{"u":0,"v":1,"weight":1},{"u":1,"v":2,"weight":"1"}]}"#,
        )
        .unwrap();
        let chain = doc.to_chain().unwrap();
        assert_eq!(chain.stationary_weights(), &[1.0, 2.0, 1.0]);
    }

    #[test]
    fn dense_round_trip_keeps_thirds_exact() {
        let doc = ChainSpecDocument::from_json(
            r#"{"states":[{"id":0,"label":0},{"id":1,"label":1},{"id":2,"label":2}],
                "edges":[{"u":0,"v":1,"weight":1},{"u":1,"v":2,"weight":2},{"u":0,"v":2,"weight":3}]}"#,
        )
        .unwrap();
        let chain = doc.to_chain().unwrap();
        let dense = ChainSpecDocument::from_chain(&chain, DocumentForm::Dense).unwrap();
        let text = dense.to_json();
        assert!(text.contains("\"1/3\""), "{text}");
        let back = ChainSpecDocument::from_json(&text).unwrap().to_chain().unwrap();
        assert_eq!(back, chain);
    }
}
