//! Bound-check reports and their deterministic text serialization.
//!
//! Every inequality verifier in the crate produces a [`BoundCheckReport`]:
//! left side, right side, every named constant entering the right side, the
//! margin `rhs - lhs`, and a pass flag. Reports serialize one-per-line with
//! fixed 12-digit scientific formatting and a stable field order, so the same
//! (config, seed) pair reproduces a byte-identical file.

use std::fmt::Write as _;

#[derive(Debug, Clone, PartialEq)]
pub struct BoundCheckReport {
    /// Stable identifier of the inequality being checked, e.g.
    /// `trace.l2-sharp` or `solution.energy-bound`.
    pub inequality_id: String,
    pub lhs: f64,
    pub rhs: f64,
    /// Named constants that enter the right side, in insertion order.
    pub constants: Vec<(String, f64)>,
    /// `rhs - lhs`. Nonnegative means the bound holds as computed.
    pub margin: f64,
    pub pass: bool,
    /// Representative mesh size of the run, when a mesh is involved.
    pub mesh_h: Option<f64>,
    /// Seed of the random suite the check belongs to, when randomized.
    pub seed: Option<u64>,
    /// Free-form diagnostic flags (`surrogate-tight`, `truncation=...`).
    pub flags: Vec<String>,
}

impl BoundCheckReport {
    /// A report that passes iff `lhs <= rhs`.
    pub fn new(id: impl Into<String>, lhs: f64, rhs: f64) -> Self {
        let margin = rhs - lhs;
        BoundCheckReport {
            inequality_id: id.into(),
            lhs,
            rhs,
            constants: Vec::new(),
            margin,
            pass: margin >= 0.0,
            mesh_h: None,
            seed: None,
            flags: Vec::new(),
        }
    }

    /// A report for a two-sided check `|lhs - rhs| <= tol * max(|rhs|, floor)`;
    /// margin is the slack left under the tolerance.
    pub fn new_match(id: impl Into<String>, lhs: f64, rhs: f64, rel_tol: f64) -> Self {
        let scale = rhs.abs().max(1e-300);
        let err = (lhs - rhs).abs() / scale;
        let margin = rel_tol - err;
        BoundCheckReport {
            inequality_id: id.into(),
            lhs,
            rhs,
            constants: vec![("rel_tol".into(), rel_tol)],
            margin,
            pass: margin >= 0.0,
            mesh_h: None,
            seed: None,
            flags: Vec::new(),
        }
    }

    pub fn with_constant(mut self, name: &str, value: f64) -> Self {
        self.constants.push((name.to_string(), value));
        self
    }

    pub fn with_h(mut self, h: f64) -> Self {
        self.mesh_h = Some(h);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn with_flag(mut self, flag: impl Into<String>) -> Self {
        self.flags.push(flag.into());
        self
    }

    /// Force the pass flag (for checks whose criterion is not `lhs <= rhs`).
    pub fn with_pass(mut self, pass: bool) -> Self {
        self.pass = pass;
        self
    }

    /// Serialize as a single report line.
    pub fn to_line(&self) -> String {
        let mut s = String::new();
        let _ = write!(
            s,
            "check id={} lhs={} rhs={} margin={} pass={}",
            self.inequality_id,
            fmt_f64(self.lhs),
            fmt_f64(self.rhs),
            fmt_f64(self.margin),
            self.pass
        );
        if let Some(h) = self.mesh_h {
            let _ = write!(s, " h={}", fmt_f64(h));
        }
        if let Some(seed) = self.seed {
            let _ = write!(s, " seed={seed}");
        }
        if !self.constants.is_empty() {
            let _ = write!(s, " constants{{");
            for (i, (k, v)) in self.constants.iter().enumerate() {
                if i > 0 {
                    let _ = write!(s, ",");
                }
                let _ = write!(s, "{k}={}", fmt_f64(*v));
            }
            let _ = write!(s, "}}");
        }
        if !self.flags.is_empty() {
            let _ = write!(s, " flags[{}]", self.flags.join(";"));
        }
        s
    }

    /// Parse a line produced by [`Self::to_line`].
    pub fn from_line(line: &str) -> Option<Self> {
        let rest = line.strip_prefix("check ")?;
        let mut rep = BoundCheckReport::new("", f64::NAN, f64::NAN);
        rep.constants.clear();

        // Split off the bracketed tails first.
        let (head, flags) = match rest.split_once(" flags[") {
            Some((h, f)) => (h, Some(f.strip_suffix(']')?)),
            None => (rest, None),
        };
        let (head, consts) = match head.split_once(" constants{") {
            Some((h, c)) => (h, Some(c.strip_suffix('}')?)),
            None => (head, None),
        };
        for tok in head.split_whitespace() {
            let (k, v) = tok.split_once('=')?;
            match k {
                "id" => rep.inequality_id = v.to_string(),
                "lhs" => rep.lhs = v.parse().ok()?,
                "rhs" => rep.rhs = v.parse().ok()?,
                "margin" => rep.margin = v.parse().ok()?,
                "pass" => rep.pass = v == "true",
                "h" => rep.mesh_h = Some(v.parse().ok()?),
                "seed" => rep.seed = Some(v.parse().ok()?),
                _ => return None,
            }
        }
        if let Some(c) = consts {
            for tok in c.split(',').filter(|t| !t.is_empty()) {
                let (k, v) = tok.split_once('=')?;
                rep.constants.push((k.to_string(), v.parse().ok()?));
            }
        }
        if let Some(f) = flags {
            rep.flags = f.split(';').map(|s| s.to_string()).collect();
        }
        Some(rep)
    }
}

/// Fixed-width scientific formatting used everywhere reports are written.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else {
        format!("{v:.12e}")
    }
}

/// A named collection of checks, written as one file per suite.
#[derive(Debug, Clone, Default)]
pub struct SuiteReport {
    pub suite: String,
    pub checks: Vec<BoundCheckReport>,
}

impl SuiteReport {
    pub fn new(suite: impl Into<String>) -> Self {
        SuiteReport {
            suite: suite.into(),
            checks: Vec::new(),
        }
    }

    pub fn push(&mut self, check: BoundCheckReport) {
        self.checks.push(check);
    }

    pub fn extend(&mut self, checks: impl IntoIterator<Item = BoundCheckReport>) {
        self.checks.extend(checks);
    }

    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failing_ids(&self) -> Vec<&str> {
        self.checks
            .iter()
            .filter(|c| !c.pass)
            .map(|c| c.inequality_id.as_str())
            .collect()
    }

    /// Render the whole suite file: a header line, then one line per check.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "suite {} checks={} pass={}",
            self.suite,
            self.checks.len(),
            self.all_pass()
        );
        for c in &self.checks {
            let _ = writeln!(out, "{}", c.to_line());
        }
        out
    }

    /// Parse a file rendered by [`Self::render`].
    pub fn parse(text: &str) -> Option<Self> {
        let mut lines = text.lines();
        let header = lines.next()?;
        let suite = header.strip_prefix("suite ")?.split_whitespace().next()?;
        let mut rep = SuiteReport::new(suite);
        for line in lines {
            if line.trim().is_empty() {
                continue;
            }
            rep.checks.push(BoundCheckReport::from_line(line)?);
        }
        Some(rep)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_round_trip() {
        let rep = BoundCheckReport::new("trace.l2", 0.5, 1.0)
            .with_constant("beta", 0.7071)
            .with_constant("M", 1.0)
            .with_h(0.1)
            .with_seed(42)
            .with_flag("surrogate-tight");
        let line = rep.to_line();
        let back = BoundCheckReport::from_line(&line).unwrap();
        assert_eq!(rep, back);
    }

    #[test]
    fn suite_round_trip_and_determinism() {
        let mut s = SuiteReport::new("traces");
        s.push(BoundCheckReport::new("a", 1.0, 2.0));
        s.push(BoundCheckReport::new("b", 3.0, 2.0));
        let text = s.render();
        assert_eq!(text, s.render());
        let back = SuiteReport::parse(&text).unwrap();
        assert_eq!(back.checks.len(), 2);
        assert!(!back.all_pass());
        assert_eq!(back.failing_ids(), vec!["b"]);
    }
}
