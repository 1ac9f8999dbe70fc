//! Exact size of `E(delta) = {(xi_1..xi_d) : sum_i omega_i(xi_i) <= delta}`
//! from per-region value histograms.

use std::collections::BTreeMap;
use std::path::Path;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Zero};
use rayon::prelude::*;
use serde::ser::SerializeMap;
use serde::{Serialize, Serializer};
use serde_json::Value;

use crate::chain::{format_rational, parse_rational};
use crate::error::{invalid, Error, Result};

/// Default cap on distinct values in any intermediate histogram.
pub const DEFAULT_VALUE_LIMIT: usize = 1_000_000;

/// For one region: value of `omega_i` mapped to the number of outcomes
/// achieving it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RegionHistogram {
    pub region: String,
    pub counts: BTreeMap<BigRational, BigUint>,
}

impl RegionHistogram {
    pub fn new(region: impl Into<String>, counts: BTreeMap<BigRational, BigUint>) -> Result<Self> {
        let region = region.into();
        if counts.values().all(Zero::is_zero) {
            return Err(invalid("histogram", format!("region {region:?} has no outcomes")));
        }
        Ok(RegionHistogram { region, counts })
    }

    /// From `(value, count)` pairs with small integer values.
    pub fn from_pairs(region: impl Into<String>, pairs: &[(i64, u64)]) -> Result<Self> {
        let mut counts = BTreeMap::new();
        for &(v, c) in pairs {
            *counts.entry(BigRational::from_integer(v.into())).or_insert_with(BigUint::zero) += c;
        }
        Self::new(region, counts)
    }

    pub fn total(&self) -> BigUint {
        self.counts.values().sum()
    }

    /// Parses `{"region": {"value": count, ...}, ...}`. Values are decimal or
    /// `p/q` strings; counts are nonnegative integers or digit strings.
    pub fn parse_file(text: &str) -> Result<Vec<RegionHistogram>> {
        let doc: Value = serde_json::from_str(text)?;
        let Value::Object(regions) = doc else {
            return Err(Error::Parse("histogram file must be an object of regions".into()));
        };
        if regions.is_empty() {
            return Err(Error::Parse("histogram file has no regions".into()));
        }
        regions
            .into_iter()
            .map(|(region, body)| {
                let Value::Object(entries) = body else {
                    return Err(Error::Parse(format!("region {region:?} must map values to counts")));
                };
                let mut counts = BTreeMap::new();
                for (value, count) in entries {
                    let count = match &count {
                        Value::Number(n) => n.as_u64().map(BigUint::from),
                        Value::String(s) => s.trim().parse::<BigUint>().ok(),
                        _ => None,
                    }
                    .ok_or_else(|| Error::Parse(format!("region {region:?}: count for {value:?} must be a nonnegative integer")))?;
                    *counts.entry(parse_rational(&value)?).or_insert_with(BigUint::zero) += count;
                }
                RegionHistogram::new(region, counts)
            })
            .collect()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Vec<RegionHistogram>> {
        Self::parse_file(&std::fs::read_to_string(path)?)
    }

    /// Inverse of [`RegionHistogram::parse_file`].
    pub fn to_file(histograms: &[RegionHistogram]) -> String {
        let doc: serde_json::Map<String, Value> = histograms
            .iter()
            .map(|h| {
                let body = h.counts.iter().map(|(v, c)| (format_rational(v), Value::String(c.to_string()))).collect();
                (h.region.clone(), Value::Object(body))
            })
            .collect();
        serde_json::to_string_pretty(&Value::Object(doc)).expect("histograms serialize") + "\n"
    }
}

/// `|E(delta)|` out of `prod_i L_i` outcomes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EventCount {
    pub delta: BigRational,
    pub count: BigUint,
    pub total: BigUint,
}

impl Serialize for EventCount {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let eps = epsilon_from_event(self);
        let mut m = serializer.serialize_map(Some(5))?;
        m.serialize_entry("delta", &format_rational(&self.delta))?;
        m.serialize_entry("count", &self.count.to_string())?;
        m.serialize_entry("total", &self.total.to_string())?;
        m.serialize_entry("epsilon", &format_rational(&eps))?;
        m.serialize_entry("epsilon_value", &crate::chain::rational_to_f64(&eps))?;
        m.end()
    }
}

/// `count / total`: the ε to use in the product tests, with p-value ε for
/// the serial product test and `2^d ε` for the two-path product test.
pub fn epsilon_from_event(event: &EventCount) -> BigRational {
    BigRational::new(BigInt::from(event.count.clone()), BigInt::from(event.total.clone()))
}

fn convolve(a: &BTreeMap<BigRational, BigUint>, b: &BTreeMap<BigRational, BigUint>, limit: usize) -> Result<BTreeMap<BigRational, BigUint>> {
    let mut out: BTreeMap<BigRational, BigUint> = BTreeMap::new();
    for (va, ca) in a {
        for (vb, cb) in b {
            *out.entry(va + vb).or_insert_with(BigUint::zero) += ca * cb;
        }
        if out.len() > limit {
            return Err(Error::ValueExplosion { distinct: out.len(), limit });
        }
    }
    Ok(out)
}

/// Exact `|E(delta)|` by pairwise convolution in a balanced tree; each level
/// combines its pairs in parallel.
pub fn count_event(histograms: &[RegionHistogram], delta: &BigRational, limit: usize) -> Result<EventCount> {
    if histograms.is_empty() {
        return Err(invalid("histograms", "need at least one region"));
    }
    let total = histograms.iter().map(RegionHistogram::total).product();
    let mut level: Vec<BTreeMap<BigRational, BigUint>> = histograms.iter().map(|h| h.counts.clone()).collect();
    if let Some(h) = level.iter().find(|h| h.len() > limit) {
        return Err(Error::ValueExplosion { distinct: h.len(), limit });
    }
    while level.len() > 1 {
        level = level
            .par_chunks(2)
            .map(|pair| match pair {
                [a, b] => convolve(a, b, limit),
                [a] => Ok(a.clone()),
                _ => unreachable!("chunks of two"),
            })
            .collect::<Result<_>>()?;
    }
    let count = level[0].range(..=delta.clone()).map(|(_, c)| c).sum();
    Ok(EventCount { delta: delta.clone(), count, total })
}

/// `|E(delta)|` by visiting every tuple of values.
pub fn brute_force_count(histograms: &[RegionHistogram], delta: &BigRational) -> EventCount {
    let entries: Vec<Vec<(&BigRational, &BigUint)>> = histograms.iter().map(|h| h.counts.iter().collect()).collect();
    let mut count = BigUint::zero();
    let mut idx = vec![0usize; entries.len()];
    'outer: loop {
        let mut sum = BigRational::zero();
        let mut weight = BigUint::one();
        for (e, &i) in entries.iter().zip(&idx) {
            sum += e[i].0;
            weight *= e[i].1;
        }
        if sum <= *delta {
            count += weight;
        }
        for p in (0..idx.len()).rev() {
            idx[p] += 1;
            if idx[p] < entries[p].len() {
                continue 'outer;
            }
            idx[p] = 0;
        }
        break;
    }
    EventCount { delta: delta.clone(), count, total: histograms.iter().map(RegionHistogram::total).product() }
}
