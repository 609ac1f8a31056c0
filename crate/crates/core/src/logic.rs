//! The declarative condition and derivation language shared by the
//! deceptive-code judge, the solution logic check and the in-page runtime.
//!
//! Everything here is plain data (serialized into `solution.json` and the
//! runtime-config island) plus a pure interpreter. The page runtime carries
//! an interpreter for the same JSON forms, so both sides must agree on:
//!
//! * state values are strings; a value is numeric when it parses as `f64`;
//! * `eq`/`ne`/`in` compare numerically when both sides are numeric,
//!   otherwise as trimmed, case-insensitive strings;
//! * `between` is inclusive, numeric when all three sides are numeric and
//!   lexicographic otherwise (ISO dates order correctly);
//! * a missing field reads as the empty string.

use std::collections::BTreeMap;
use std::fmt;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{ForgeError, Result};

/// Accumulated workflow state: field name to raw string value.
pub type State = BTreeMap<String, String>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weekday {
    Mon,
    Tue,
    Wed,
    Thu,
    Fri,
    Sat,
    Sun,
}

impl Weekday {
    fn from_chrono(d: chrono::Weekday) -> Self {
        match d {
            chrono::Weekday::Mon => Weekday::Mon,
            chrono::Weekday::Tue => Weekday::Tue,
            chrono::Weekday::Wed => Weekday::Wed,
            chrono::Weekday::Thu => Weekday::Thu,
            chrono::Weekday::Fri => Weekday::Fri,
            chrono::Weekday::Sat => Weekday::Sat,
            chrono::Weekday::Sun => Weekday::Sun,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Condition {
    Always,
    Eq { field: String, value: String },
    Ne { field: String, value: String },
    In { field: String, values: Vec<String> },
    Between { field: String, min: String, max: String },
    Weekday { field: String, days: Vec<Weekday> },
    Present { field: String },
    All { of: Vec<Condition> },
    Any { of: Vec<Condition> },
    Not { cond: Box<Condition> },
}

fn num(s: &str) -> Option<f64> {
    let t = s.trim();
    if t.is_empty() {
        return None;
    }
    t.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Loose equality used by the condition language.
pub fn values_equal(a: &str, b: &str) -> bool {
    match (num(a), num(b)) {
        (Some(x), Some(y)) => {
            let scale = x.abs().max(y.abs()).max(1.0);
            (x - y).abs() <= 1e-9 * scale
        }
        _ => a.trim().to_lowercase() == b.trim().to_lowercase(),
    }
}

pub fn parse_iso_date(s: &str) -> Option<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d").ok()
}

impl Condition {
    pub fn eval(&self, state: &State) -> bool {
        let get = |field: &str| state.get(field).map(String::as_str).unwrap_or("");
        match self {
            Condition::Always => true,
            Condition::Eq { field, value } => values_equal(get(field), value),
            Condition::Ne { field, value } => !values_equal(get(field), value),
            Condition::In { field, values } => values.iter().any(|v| values_equal(get(field), v)),
            Condition::Between { field, min, max } => {
                let v = get(field);
                match (num(v), num(min), num(max)) {
                    (Some(x), Some(lo), Some(hi)) => lo <= x && x <= hi,
                    _ => {
                        let v = v.trim();
                        !v.is_empty() && min.as_str() <= v && v <= max.as_str()
                    }
                }
            }
            Condition::Weekday { field, days } => parse_iso_date(get(field))
                .map(|d| days.contains(&Weekday::from_chrono(d.weekday())))
                .unwrap_or(false),
            Condition::Present { field } => !get(field).trim().is_empty(),
            Condition::All { of } => of.iter().all(|c| c.eval(state)),
            Condition::Any { of } => of.iter().any(|c| c.eval(state)),
            Condition::Not { cond } => !cond.eval(state),
        }
    }

    /// Field names this condition reads.
    pub fn fields(&self, out: &mut Vec<String>) {
        match self {
            Condition::Always => {}
            Condition::Eq { field, .. }
            | Condition::Ne { field, .. }
            | Condition::In { field, .. }
            | Condition::Between { field, .. }
            | Condition::Weekday { field, .. }
            | Condition::Present { field } => out.push(field.clone()),
            Condition::All { of } | Condition::Any { of } => of.iter().for_each(|c| c.fields(out)),
            Condition::Not { cond } => cond.fields(out),
        }
    }
}

/// Result of evaluating an expression.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Num(f64),
    Text(String),
}

impl Value {
    fn from_raw(s: &str) -> Value {
        match num(s) {
            Some(n) => Value::Num(n),
            None => Value::Text(s.to_string()),
        }
    }

    fn as_num(&self, ctx: &str) -> Result<f64> {
        match self {
            Value::Num(n) => Ok(*n),
            Value::Text(t) => Err(ForgeError::Config(format!("{ctx}: `{t}` is not numeric"))),
        }
    }

    /// Renders with a fixed number of decimals, or minimally when `None`.
    pub fn format(&self, decimals: Option<u32>) -> String {
        match (self, decimals) {
            (Value::Num(n), Some(d)) => format!("{:.*}", d as usize, round_half_up(*n, d)),
            (Value::Num(n), None) => {
                if n.fract() == 0.0 && n.abs() < 1e15 {
                    format!("{}", *n as i64)
                } else {
                    format!("{n}")
                }
            }
            (Value::Text(t), _) => t.clone(),
        }
    }
}

fn round_half_up(x: f64, decimals: u32) -> f64 {
    let scale = 10f64.powi(decimals as i32);
    // nudge by a relative epsilon so representation error does not flip a tie
    let scaled = x * scale;
    (scaled + scaled.signum() * 1e-9 * scaled.abs().max(1.0)).round() / scale
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    #[serde(rename = "if")]
    pub when: Condition,
    pub then: Expr,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseExpr {
    pub when: Vec<Branch>,
    #[serde(rename = "else")]
    pub otherwise: Box<Expr>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expr {
    Const(serde_json::Value),
    Field(String),
    Var(String),
    Add(Vec<Expr>),
    Mul(Vec<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Case(CaseExpr),
}

impl Expr {
    pub fn eval(&self, state: &State, vars: &BTreeMap<String, Value>) -> Result<Value> {
        Ok(match self {
            Expr::Const(v) => match v {
                serde_json::Value::Number(n) => Value::Num(n.as_f64().unwrap_or_default()),
                serde_json::Value::String(s) => Value::from_raw(s),
                other => Value::Text(other.to_string()),
            },
            Expr::Field(name) => Value::from_raw(state.get(name).map(String::as_str).unwrap_or("")),
            Expr::Var(name) => vars
                .get(name)
                .cloned()
                .ok_or_else(|| ForgeError::Config(format!("unknown derivation variable `{name}`")))?,
            Expr::Add(items) => {
                let mut acc = 0.0;
                for e in items {
                    acc += e.eval(state, vars)?.as_num("add")?;
                }
                Value::Num(acc)
            }
            Expr::Mul(items) => {
                let mut acc = 1.0;
                for e in items {
                    acc *= e.eval(state, vars)?.as_num("mul")?;
                }
                Value::Num(acc)
            }
            Expr::Sub(a, b) => {
                Value::Num(a.eval(state, vars)?.as_num("sub")? - b.eval(state, vars)?.as_num("sub")?)
            }
            Expr::Div(a, b) => {
                let d = b.eval(state, vars)?.as_num("div")?;
                if d == 0.0 {
                    return Err(ForgeError::Config("division by zero in derivation".into()));
                }
                Value::Num(a.eval(state, vars)?.as_num("div")? / d)
            }
            Expr::Case(case) => {
                for branch in &case.when {
                    if branch.when.eval(state) {
                        return branch.then.eval(state, vars);
                    }
                }
                case.otherwise.eval(state, vars)?
            }
        })
    }
}

/// A named derived quantity, e.g. the booking total.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Derivation {
    pub name: String,
    pub expr: Expr,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decimals: Option<u32>,
}

/// Evaluates derivations in order; later ones may reference earlier ones
/// through `var`. Returns the formatted value of each.
pub fn derive(derivations: &[Derivation], state: &State) -> Result<BTreeMap<String, String>> {
    let mut vars = BTreeMap::new();
    let mut out = BTreeMap::new();
    for d in derivations {
        let v = d.expr.eval(state, &vars)?;
        out.insert(d.name.clone(), v.format(d.decimals));
        vars.insert(d.name.clone(), v);
    }
    Ok(out)
}

/// Outcome of a judge rule: the real code or a named deceptive pattern.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub enum Outcome {
    Correct,
    Deceptive(String),
}

impl From<String> for Outcome {
    fn from(s: String) -> Self {
        if s == "correct" {
            Outcome::Correct
        } else {
            Outcome::Deceptive(s)
        }
    }
}

impl From<Outcome> for String {
    fn from(o: Outcome) -> String {
        match o {
            Outcome::Correct => "correct".into(),
            Outcome::Deceptive(id) => id,
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Outcome::Correct => f.write_str("correct"),
            Outcome::Deceptive(id) => f.write_str(id),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeRule {
    pub when: Condition,
    pub outcome: Outcome,
}

/// The judge and derivations a bundle's pages evaluate at runtime.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct JudgeProgram {
    /// localStorage key prefix for this task's workflow state.
    pub state_prefix: String,
    /// Ground-truth field that holds the operation code.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub code_field: Option<String>,
    #[serde(default)]
    pub rules: Vec<JudgeRule>,
    #[serde(default)]
    pub derivations: Vec<Derivation>,
}

impl JudgeProgram {
    /// First matching rule, if any.
    pub fn match_rule(&self, state: &State) -> Option<&JudgeRule> {
        self.rules.iter().find(|r| r.when.eval(state))
    }

    pub fn has_catch_all(&self) -> bool {
        self.rules.last().map(|r| r.when == Condition::Always).unwrap_or(false)
    }
}

/// Currency rendering used on pages: `$11,440.00`.
pub fn format_currency(raw: &str) -> String {
    match num(raw) {
        Some(n) => {
            let fixed = format!("{:.2}", round_half_up(n.abs(), 2));
            let (int, frac) = fixed.split_once('.').unwrap_or((&fixed, "00"));
            let mut grouped = String::new();
            for (i, ch) in int.chars().enumerate() {
                if i > 0 && (int.len() - i) % 3 == 0 {
                    grouped.push(',');
                }
                grouped.push(ch);
            }
            let sign = if n < 0.0 { "-" } else { "" };
            format!("{sign}${grouped}.{frac}")
        }
        None => raw.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(pairs: &[(&str, &str)]) -> State {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn equality_is_numeric_or_case_folded() {
        assert!(values_equal("80", "80.0"));
        assert!(values_equal("Premium", "premium"));
        assert!(!values_equal("79", "80"));
    }

    #[test]
    fn weekday_and_between() {
        let s = state(&[("date", "2026-05-16")]);
        assert!(Condition::Weekday { field: "date".into(), days: vec![Weekday::Sat] }.eval(&s));
        assert!(Condition::Between {
            field: "date".into(),
            min: "2026-05-15".into(),
            max: "2026-05-19".into()
        }
        .eval(&s));
        let s = state(&[("date", "2026-05-15")]);
        assert!(!Condition::Weekday { field: "date".into(), days: vec![Weekday::Sat] }.eval(&s));
        assert!(!Condition::Weekday { field: "date".into(), days: vec![Weekday::Sat] }.eval(&State::new()));
    }

    #[test]
    fn derivations_chain() {
        let ds: Vec<Derivation> = serde_json::from_str(
            r#"[
              {"name":"subtotal","expr":{"add":[{"const":3200},{"mul":[{"field":"guests"},{"const":"90"}]}]}},
              {"name":"total","expr":{"mul":[{"var":"subtotal"},{"const":1.1}]},"decimals":2}
            ]"#,
        )
        .unwrap();
        let out = derive(&ds, &state(&[("guests", "80")])).unwrap();
        assert_eq!(out["subtotal"], "10400");
        assert_eq!(out["total"], "11440.00");
    }

    #[test]
    fn currency_format() {
        assert_eq!(format_currency("11440"), "$11,440.00");
        assert_eq!(format_currency("3200.5"), "$3,200.50");
        assert_eq!(format_currency("0"), "$0.00");
        assert_eq!(format_currency("n/a"), "n/a");
    }

    #[test]
    fn outcome_serializes_as_plain_string() {
        let r: JudgeRule = serde_json::from_str(r#"{"when":{"op":"always"},"outcome":"correct"}"#).unwrap();
        assert_eq!(r.outcome, Outcome::Correct);
        let r: JudgeRule =
            serde_json::from_str(r#"{"when":{"op":"always"},"outcome":"wrong_guests"}"#).unwrap();
        assert_eq!(r.outcome, Outcome::Deceptive("wrong_guests".into()));
    }
}
