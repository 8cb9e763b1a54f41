//! Pass/fail ledger for the a priori bounds checked by each run.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::Result;

/// Where and when a bound was violated (or came closest).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub point: Option<usize>,
    pub coords: Option<[f64; 2]>,
    pub t: f64,
    pub value: f64,
    pub limit: f64,
}

fn clamp(v: f64) -> f64 {
    v.clamp(f64::MIN, f64::MAX)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginSample {
    pub t: f64,
    /// limit - observed; negative means violated
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsEntry {
    pub name: String,
    pub reference: String,
    pub pass: bool,
    /// advisory entries never fail a run
    pub advisory: bool,
    pub margins: Vec<MarginSample>,
    pub fitted: BTreeMap<String, f64>,
    pub violation: Option<Violation>,
    pub notes: Vec<String>,
}

impl BoundsEntry {
    pub fn new(name: impl Into<String>, reference: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            reference: reference.into(),
            pass: true,
            advisory: false,
            margins: Vec::new(),
            fitted: BTreeMap::new(),
            violation: None,
            notes: Vec::new(),
        }
    }

    pub fn advisory(mut self, advisory: bool) -> Self {
        self.advisory = advisory;
        self
    }

    /// Non-finite values are clamped (infinities) or noted (NaN) so the
    /// report stays valid JSON.
    pub fn fit(mut self, key: &str, value: f64) -> Self {
        if value.is_nan() {
            self.notes.push(format!("{key}: not a number"));
        } else {
            self.fitted.insert(key.to_string(), clamp(value));
        }
        self
    }

    pub fn note(mut self, note: impl Into<String>) -> Self {
        self.notes.push(note.into());
        self
    }

    pub fn with_pass(mut self, pass: bool) -> Self {
        self.pass = pass;
        self
    }

    /// Records `limit - value` at `t`; a negative margin fails the entry and
    /// keeps the first violating location.
    pub fn record(&mut self, t: f64, value: f64, limit: f64, point: Option<usize>, coords: Option<[f64; 2]>) {
        let margin = limit - value;
        let failed = !(margin >= 0.0);
        let margin = if margin.is_nan() { f64::MIN } else { clamp(margin) };
        self.margins.push(MarginSample { t, margin });
        if failed && self.pass {
            self.pass = false;
            self.violation = Some(Violation {
                point,
                coords,
                t,
                value: if value.is_nan() { f64::MAX } else { clamp(value) },
                limit: if limit.is_nan() { f64::MIN } else { clamp(limit) },
            });
        }
    }

    pub fn min_margin(&self) -> Option<f64> {
        self.margins.iter().map(|m| m.margin).reduce(f64::min)
    }

    /// Headline constant for tables: the first fitted value, if any.
    pub fn headline_constant(&self) -> Option<(&str, f64)> {
        self.fitted.iter().next().map(|(k, v)| (k.as_str(), *v))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub scenario: String,
    pub entries: Vec<BoundsEntry>,
}

impl BoundsReport {
    pub fn new(scenario: impl Into<String>) -> Self {
        Self {
            scenario: scenario.into(),
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, entry: BoundsEntry) {
        self.entries.push(entry);
    }

    pub fn extend(&mut self, entries: impl IntoIterator<Item = BoundsEntry>) {
        self.entries.extend(entries);
    }

    /// True iff no non-advisory entry failed.
    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.pass || e.advisory)
    }

    pub fn failures(&self) -> impl Iterator<Item = &BoundsEntry> {
        self.entries.iter().filter(|e| !e.pass && !e.advisory)
    }

    pub fn entry(&self, name: &str) -> Option<&BoundsEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# Bounds report: {}\n", self.scenario);
        let _ = writeln!(out, "| bound | reference | fitted constant | min margin | result |");
        let _ = writeln!(out, "|---|---|---|---|---|");
        for e in &self.entries {
            let fitted = e
                .headline_constant()
                .map(|(k, v)| format!("{k} = {v:.6e}"))
                .unwrap_or_else(|| "-".into());
            let margin = e.min_margin().map(|m| format!("{m:.3e}")).unwrap_or_else(|| "-".into());
            let result = match (e.pass, e.advisory) {
                (true, false) => "pass",
                (false, false) => "FAIL",
                (true, true) => "pass (advisory)",
                (false, true) => "fail (advisory)",
            };
            let _ = writeln!(out, "| {} | {} | {} | {} | {} |", e.name, e.reference, fitted, margin, result);
        }
        let failing: Vec<_> = self.entries.iter().filter(|e| !e.pass).collect();
        if !failing.is_empty() {
            let _ = writeln!(out, "\n## Violations\n");
            for e in failing {
                match &e.violation {
                    Some(v) => {
                        let loc = match (v.point, v.coords) {
                            (Some(p), Some(c)) => format!("point {p} at ({:.6}, {:.6})", c[0], c[1]),
                            (Some(p), None) => format!("point {p}"),
                            _ => "global".into(),
                        };
                        let _ = writeln!(
                            out,
                            "- {}: {} t = {:.6e}, value {:.6e} > limit {:.6e}",
                            e.name, loc, v.t, v.value, v.limit
                        );
                    }
                    None => {
                        let _ = writeln!(out, "- {}: {}", e.name, e.notes.join("; "));
                    }
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_report_is_valid() {
        let r = BoundsReport::new("empty");
        assert!(r.passed());
        let back = BoundsReport::from_json(&r.to_json().unwrap()).unwrap();
        assert_eq!(back, r);
        assert!(r.to_markdown().contains("| bound |"));
    }

    #[test]
    fn failing_entry_lists_location() {
        let mut e = BoundsEntry::new("sup bound", "linear sup estimate").fit("C", 1.5);
        e.record(0.1, 0.5, 1.0, Some(3), Some([0.2, 0.0]));
        e.record(0.2, 1.5, 1.0, Some(7), Some([0.4, 0.0]));
        e.record(0.3, 2.5, 1.0, Some(8), Some([0.5, 0.0]));
        assert!(!e.pass);
        assert_eq!(e.violation.as_ref().unwrap().point, Some(7));
        assert_eq!(e.min_margin(), Some(-1.5));
        let mut r = BoundsReport::new("x");
        r.push(e);
        r.push(BoundsEntry::new("adv", "advisory check").advisory(true).with_pass(false));
        assert!(!r.passed());
        assert_eq!(r.failures().count(), 1);
        let md = r.to_markdown();
        assert!(md.contains("FAIL") && md.contains("point 7"));
    }
}
