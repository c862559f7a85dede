//! Structural checks for every JSON artifact the tool writes.

use serde_json::Value;

use crate::output::parse_json_f64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArtifactKind {
    Dynamics,
    Conditions,
    Theorem,
    Sweep,
    Summary,
}

impl ArtifactKind {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "dynamics" => ArtifactKind::Dynamics,
            "conditions" => ArtifactKind::Conditions,
            "theorem" => ArtifactKind::Theorem,
            "sweep" => ArtifactKind::Sweep,
            "summary" => ArtifactKind::Summary,
            _ => return None,
        })
    }
}

struct Checker<'a> {
    errors: Vec<String>,
    path: &'a str,
}

impl Checker<'_> {
    fn field<'v>(&mut self, v: &'v Value, key: &str) -> Option<&'v Value> {
        let f = v.get(key);
        if f.is_none() {
            self.errors.push(format!("{}: missing `{key}`", self.path));
        }
        f
    }

    fn number(&mut self, v: &Value, key: &str) -> Option<f64> {
        let x = self.field(v, key).and_then(parse_json_f64);
        if v.get(key).is_some() && x.is_none() {
            self.errors.push(format!("{}: `{key}` is not a number", self.path));
        }
        x
    }

    fn string(&mut self, v: &Value, key: &str) {
        if let Some(f) = self.field(v, key) {
            if !f.is_string() {
                self.errors.push(format!("{}: `{key}` is not a string", self.path));
            }
        }
    }

    fn index(&mut self, v: &Value, key: &str) {
        if let Some(f) = self.field(v, key) {
            if !f.is_u64() {
                self.errors.push(format!("{}: `{key}` is not a non-negative integer", self.path));
            }
        }
    }

    fn numbers(&mut self, v: &Value, key: &str, len: usize) {
        match self.field(v, key).and_then(Value::as_array) {
            Some(a) if a.len() == len && a.iter().all(|x| parse_json_f64(x).is_some()) => {}
            Some(_) => self.errors.push(format!("{}: `{key}` must hold {len} numbers", self.path)),
            None if v.get(key).is_some() => self.errors.push(format!("{}: `{key}` is not an array", self.path)),
            None => {}
        }
    }

    fn nested(&mut self, v: &Value, key: &str, kind: ArtifactKind) {
        if let Some(inner) = v.get(key) {
            let path = format!("{}.{key}", self.path);
            if let Err(e) = validate_at(inner, kind, &path) {
                self.errors.extend(e);
            }
        }
    }
}

pub fn validate(v: &Value, kind: ArtifactKind) -> Result<(), Vec<String>> {
    validate_at(v, kind, "$")
}

fn validate_at(v: &Value, kind: ArtifactKind, path: &str) -> Result<(), Vec<String>> {
    let mut c = Checker { errors: Vec::new(), path };
    if !v.is_object() {
        return Err(vec![format!("{path}: expected an object")]);
    }
    match kind {
        ArtifactKind::Dynamics => {
            for k in ["terminal_fidelity", "min_fidelity", "min_fidelity_t", "unitarity_drift", "purity_drift"] {
                c.number(v, k);
            }
            c.index(v, "steps");
            c.index(v, "reference_level");
            c.string(v, "frame");
        }
        ArtifactKind::Conditions => {
            for k in ["c1", "c2", "c3", "c4"] {
                if let Some(x) = c.number(v, k) {
                    if x < 0.0 {
                        c.errors.push(format!("{path}: `{k}` is negative"));
                    }
                }
            }
            c.numbers(v, "argmax_times", 4);
            c.string(v, "frame");
            match c.field(v, "levels").and_then(Value::as_array) {
                Some(a) if a.len() == 2 && a.iter().all(Value::is_u64) => {}
                Some(_) | None if v.get("levels").is_some() => {
                    c.errors.push(format!("{path}: `levels` must be two indices"))
                }
                _ => {}
            }
        }
        ArtifactKind::Theorem => {
            c.string(v, "condition");
            if let Some(s) = c.field(v, "verdict").and_then(Value::as_str) {
                if s != "holds" && s != "violated" {
                    c.errors.push(format!("{path}: unknown verdict `{s}`"));
                }
            }
            c.number(v, "max_deviation");
            c.number(v, "tolerance");
            if let Some(w) = c.field(v, "witness") {
                c.number(w, "t");
                c.index(w, "index");
            }
            if let Some(items) = c.field(v, "per_index").and_then(Value::as_array) {
                for item in items {
                    c.index(item, "index");
                    c.number(item, "max_deviation");
                    c.number(item, "t");
                }
            }
        }
        ArtifactKind::Sweep => {
            c.string(v, "parameter");
            c.index(v, "failures");
            if let Some(rows) = c.field(v, "rows").and_then(Value::as_array) {
                for r in rows {
                    c.number(r, "value");
                    if r.get("error").is_some() {
                        c.string(r, "error");
                        continue;
                    }
                    c.number(r, "terminal_fidelity");
                    c.number(r, "min_fidelity");
                    c.numbers(r, "inertial", 4);
                    c.numbers(r, "noninertial", 4);
                    c.string(r, "note");
                }
            }
        }
        ArtifactKind::Summary => {
            c.string(v, "model");
            if let Some(g) = c.field(v, "grid") {
                c.number(g, "t0");
                c.number(g, "tau");
                c.index(g, "steps");
            }
            c.index(v, "reference_level");
            c.nested(v, "dynamics", ArtifactKind::Dynamics);
            c.nested(v, "conditions_inertial", ArtifactKind::Conditions);
            c.nested(v, "conditions_noninertial", ArtifactKind::Conditions);
            c.nested(v, "theorem1", ArtifactKind::Theorem);
            if v.get("theorem2").and_then(|t| t.get("skipped")).is_none() {
                c.nested(v, "theorem2", ArtifactKind::Theorem);
            }
        }
    }
    if c.errors.is_empty() {
        Ok(())
    } else {
        Err(c.errors)
    }
}
