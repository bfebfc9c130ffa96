use serde::{Deserialize, Serialize};

use crate::model::{ConflictCode, NativeLabel, RunRecord};

/// Advisory contradiction inside a native outcome. Only a ledger decision
/// attaches a conflict to a record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConflictCandidate {
    pub record_id: String,
    pub suggested_code: ConflictCode,
    pub evidence_pointer: String,
    pub description: String,
}

/// Looks for a native outcome that contradicts its own subchecks:
///
/// * success (or a full score) while some subcheck failed suggests C1;
/// * failure while every recorded subcheck passed suggests C3.
///
/// The probe reads only the record's native outcome; it never changes
/// labels.
pub fn probe_native_consistency(record: &RunRecord) -> Vec<ConflictCandidate> {
    let native = &record.native;
    if native.subchecks.is_empty() {
        return Vec::new();
    }
    let full_score = native.score_value == Some(1.0);
    let failed: Vec<(usize, &str)> = native
        .subchecks
        .iter()
        .enumerate()
        .filter(|(_, s)| !s.passed)
        .map(|(i, s)| (i, s.name.as_str()))
        .collect();

    if (native.label == NativeLabel::Success || full_score) && !failed.is_empty() {
        let (index, _) = failed[0];
        let names: Vec<&str> = failed.iter().map(|(_, n)| *n).collect();
        let reported = match native.score_value {
            Some(score) => format!("score {score}"),
            None => format!("label {}", native.label),
        };
        return vec![ConflictCandidate {
            record_id: record.record_id.clone(),
            suggested_code: ConflictCode::C1,
            evidence_pointer: format!("{}#/native/subchecks/{index}", record.record_id),
            description: format!("native {reported} while subcheck(s) failed: {}", names.join(", ")),
        }];
    }
    if native.label == NativeLabel::Failure && failed.is_empty() {
        return vec![ConflictCandidate {
            record_id: record.record_id.clone(),
            suggested_code: ConflictCode::C3,
            evidence_pointer: format!("{}#/native/label", record.record_id),
            description: format!(
                "native failure while all {} recorded subcheck(s) passed",
                native.subchecks.len()
            ),
        }];
    }
    Vec::new()
}
