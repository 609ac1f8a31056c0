//! Final-state answer comparison.

use std::collections::BTreeMap;

use crate::blueprint::AnswerType;

const CURRENCY_SYMBOLS: [char; 5] = ['$', '€', '£', '¥', '₹'];

/// Trimmed, case-folded, whitespace-collapsed text without currency
/// symbols or thousands separators.
pub fn normalize_answer(raw: &str) -> String {
    let folded: String = raw
        .trim()
        .chars()
        .filter(|c| !CURRENCY_SYMBOLS.contains(c) && *c != ',')
        .flat_map(char::to_lowercase)
        .collect();
    folded.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn as_number(s: &str) -> Option<f64> {
    let n: f64 = s.parse().ok()?;
    n.is_finite().then_some(n)
}

/// Normalized equality with a numeric comparison at 1e-9 relative tolerance
/// when both sides parse as numbers.
pub fn direct_match(submitted: &str, expected: &str) -> bool {
    let a = normalize_answer(submitted);
    let b = normalize_answer(expected);
    match (as_number(&a), as_number(&b)) {
        (Some(x), Some(y)) => {
            let scale = x.abs().max(y.abs());
            (x - y).abs() <= 1e-9 * scale || x == y
        }
        _ => a == b,
    }
}

/// Compares a submitted answer map with the ground truth. Codes match
/// exactly; direct answers match after normalization. For `mixed`,
/// `code_fields` names the fields compared exactly. A missing submitted
/// field fails the comparison.
pub fn judge_answer(
    answer_type: AnswerType,
    submitted: &BTreeMap<String, String>,
    ground_truth: &BTreeMap<String, String>,
    code_fields: &[String],
) -> bool {
    if ground_truth.is_empty() {
        return false;
    }
    ground_truth.iter().all(|(field, expected)| {
        let Some(got) = submitted.get(field) else {
            return false;
        };
        let exact = match answer_type {
            AnswerType::OperationCode => true,
            AnswerType::DirectAnswer => false,
            AnswerType::Mixed => code_fields.iter().any(|c| c == field),
        };
        if exact {
            got == expected
        } else {
            direct_match(got, expected)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn currency_and_case() {
        assert!(direct_match("$11,440.00", "11440.00"));
        assert!(direct_match(" Grand  Estate ", "grand estate"));
        assert!(!direct_match("10400.00", "11440.00"));
        let gt = map(&[("confirmation_code", "GEG-2026-05841")]);
        assert!(judge_answer(AnswerType::OperationCode, &gt, &gt, &[]));
        let low = map(&[("confirmation_code", "geg-2026-05841")]);
        assert!(!judge_answer(AnswerType::OperationCode, &low, &gt, &[]));
        assert!(!judge_answer(AnswerType::DirectAnswer, &map(&[]), &map(&[("price", "1")]), &[]));
    }
}
