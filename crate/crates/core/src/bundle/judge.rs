//! The encoded answer table and the deceptive-code state machine.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::codec::{decode_secret, encode_secret};
use crate::blueprint::AnswerType;
use crate::error::{ForgeError, Result};
use crate::logic::{JudgeProgram, JudgeRule, Outcome, State};

/// Ground truth and deceptive codes, every value Base64-encoded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodedAnswerConfig {
    pub answer_type: AnswerType,
    pub ground_truth: BTreeMap<String, String>,
    pub deceptive_codes: BTreeMap<String, String>,
}

/// On-disk shape of `data.json`. The answer type lives in `task.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataFile {
    pub ground_truth: BTreeMap<String, String>,
    #[serde(default)]
    pub deceptive_codes: BTreeMap<String, String>,
}

impl EncodedAnswerConfig {
    pub fn from_plaintext(
        answer_type: AnswerType,
        ground_truth: &BTreeMap<String, String>,
        deceptive_codes: &BTreeMap<String, String>,
    ) -> Self {
        let enc = |m: &BTreeMap<String, String>| m.iter().map(|(k, v)| (k.clone(), encode_secret(v))).collect();
        Self {
            answer_type,
            ground_truth: enc(ground_truth),
            deceptive_codes: enc(deceptive_codes),
        }
    }

    pub fn from_data_file(answer_type: AnswerType, data: DataFile) -> Self {
        Self {
            answer_type,
            ground_truth: data.ground_truth,
            deceptive_codes: data.deceptive_codes,
        }
    }

    pub fn data_file(&self) -> DataFile {
        DataFile {
            ground_truth: self.ground_truth.clone(),
            deceptive_codes: self.deceptive_codes.clone(),
        }
    }

    pub fn decoded_ground_truth(&self) -> Result<BTreeMap<String, String>> {
        decode_map(&self.ground_truth)
    }

    pub fn decoded_deceptive_codes(&self) -> Result<BTreeMap<String, String>> {
        decode_map(&self.deceptive_codes)
    }

    /// Checks the table invariants: every value decodes to non-empty text;
    /// deceptive codes are pairwise distinct, differ from the real code and
    /// share its shape.
    pub fn validate(&self, code_field: Option<&str>) -> Result<()> {
        let gt = self.decoded_ground_truth()?;
        let deceptive = self.decoded_deceptive_codes()?;
        if let Some((k, _)) = gt.iter().chain(deceptive.iter()).find(|(_, v)| v.is_empty()) {
            return Err(ForgeError::Config(format!("answer field `{k}` decodes to an empty value")));
        }
        if deceptive.is_empty() {
            return Ok(());
        }
        let field = code_field
            .ok_or_else(|| ForgeError::Config("deceptive codes require a code field".into()))?;
        let real = gt
            .get(field)
            .ok_or_else(|| ForgeError::Config(format!("code field `{field}` missing from ground truth")))?;
        let mut seen = BTreeSet::new();
        for (pattern, code) in &deceptive {
            if code == real {
                return Err(ForgeError::Config(format!("deceptive code `{pattern}` equals the real code")));
            }
            if !seen.insert(code.as_str()) {
                return Err(ForgeError::Config(format!("deceptive code `{pattern}` duplicates another pattern")));
            }
            if code_shape(code) != code_shape(real) {
                return Err(ForgeError::Config(format!(
                    "deceptive code `{pattern}` does not share the real code's format"
                )));
            }
        }
        Ok(())
    }
}

fn decode_map(m: &BTreeMap<String, String>) -> Result<BTreeMap<String, String>> {
    m.iter().map(|(k, v)| Ok((k.clone(), decode_secret(v)?))).collect()
}

/// Character-class skeleton of a code: letters become `A`, digits `9`.
pub fn code_shape(code: &str) -> String {
    code.chars()
        .map(|c| {
            if c.is_ascii_digit() {
                '9'
            } else if c.is_alphabetic() {
                'A'
            } else {
                c
            }
        })
        .collect()
}

/// Maps an accumulated workflow state to the code the site displays: the
/// first matching rule wins; `correct` yields the decoded ground-truth code,
/// any other outcome the decoded deceptive code for that pattern.
pub fn resolve_submission(
    state: &State,
    config: &EncodedAnswerConfig,
    rules: &[JudgeRule],
    code_field: &str,
) -> Result<String> {
    let rule = rules
        .iter()
        .find(|r| r.when.eval(state))
        .ok_or_else(|| ForgeError::Config("no judge rule matched; rules must end with a catch-all".into()))?;
    match &rule.outcome {
        Outcome::Correct => {
            let encoded = config
                .ground_truth
                .get(code_field)
                .ok_or_else(|| ForgeError::Config(format!("code field `{code_field}` missing from ground truth")))?;
            decode_secret(encoded)
        }
        Outcome::Deceptive(pattern) => {
            let encoded = config
                .deceptive_codes
                .get(pattern)
                .ok_or_else(|| ForgeError::Config(format!("mistake pattern `{pattern}` has no deceptive code")))?;
            decode_secret(encoded)
        }
    }
}

/// [`resolve_submission`] driven by a bundle's judge program.
pub fn resolve_with_program(state: &State, config: &EncodedAnswerConfig, judge: &JudgeProgram) -> Result<String> {
    let field = judge
        .code_field
        .as_deref()
        .ok_or_else(|| ForgeError::Config("judge program has no code field".into()))?;
    resolve_submission(state, config, &judge.rules, field)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::Condition;

    fn config() -> EncodedAnswerConfig {
        let gt = BTreeMap::from([("code".to_string(), "ABC-001".to_string())]);
        let dec = BTreeMap::from([("wrong".to_string(), "ABC-002".to_string())]);
        EncodedAnswerConfig::from_plaintext(AnswerType::OperationCode, &gt, &dec)
    }

    fn rules() -> Vec<JudgeRule> {
        vec![
            JudgeRule {
                when: Condition::Ne {
                    field: "x".into(),
                    value: "1".into(),
                },
                outcome: Outcome::Deceptive("wrong".into()),
            },
            JudgeRule {
                when: Condition::Always,
                outcome: Outcome::Correct,
            },
        ]
    }

    #[test]
    fn first_match_wins() {
        let mut s = State::new();
        s.insert("x".into(), "1".into());
        assert_eq!(resolve_submission(&s, &config(), &rules(), "code").unwrap(), "ABC-001");
        s.insert("x".into(), "2".into());
        assert_eq!(resolve_submission(&s, &config(), &rules(), "code").unwrap(), "ABC-002");
    }

    #[test]
    fn unknown_pattern_is_a_config_error() {
        let mut r = rules();
        r[0].outcome = Outcome::Deceptive("missing".into());
        let err = resolve_submission(&State::new(), &config(), &r, "code").unwrap_err();
        assert!(matches!(err, ForgeError::Config(_)));
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let gt = BTreeMap::from([("code".to_string(), "ABC-001".to_string())]);
        let dec = BTreeMap::from([("wrong".to_string(), "AB-0002".to_string())]);
        let c = EncodedAnswerConfig::from_plaintext(AnswerType::OperationCode, &gt, &dec);
        assert!(c.validate(Some("code")).is_err());
        assert!(config().validate(Some("code")).is_ok());
    }
}
