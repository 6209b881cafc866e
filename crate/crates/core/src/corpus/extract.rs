//! Rule-based inversion of the grammar, used as the exact finding labeler.

use super::finding::{Finding, FindingVector, Laterality, Observation, Severity, Slot};

/// Splits on `.` and reads each clause independently. A clause contributes a
/// finding only when it names an observation; its slot is the anatomy named in
/// the clause, or the observation's default slot when no anatomy is present.
/// The first abnormal clause for a slot wins. Anything unrecognised is ignored.
pub fn extract_findings<S: AsRef<str>>(tokens: &[S]) -> FindingVector {
    let mut out = FindingVector::normal();
    for clause in tokens.split(|t| t.as_ref() == ".") {
        let clause: Vec<&str> = clause.iter().map(AsRef::as_ref).collect();
        let anatomy = clause
            .windows(2)
            .find_map(|w| Slot::from_surface(w[0], w[1]));
        let Some(observation) = clause.iter().find_map(|t| Observation::from_token(t)) else {
            continue;
        };
        let severity = clause.iter().find_map(|t| Severity::from_token(t));
        let laterality = clause.iter().find_map(|t| Laterality::from_token(t));
        let slot = anatomy.unwrap_or_else(|| observation.default_slot());
        if out.get(slot) == Finding::Normal {
            out.set(
                slot,
                Finding::Abnormal {
                    observation,
                    severity,
                    laterality,
                },
            );
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<&str> {
        s.split(' ').collect()
    }

    #[test]
    fn empty_text_is_all_normal() {
        assert_eq!(extract_findings::<&str>(&[]), FindingVector::normal());
    }

    #[test]
    fn reads_modifiers_and_anatomy() {
        let f = extract_findings(&toks(
            "cardiac silhouette is within normal limits . mild bilateral effusion in pleural space .",
        ));
        assert_eq!(
            f.get(Slot::Pleura),
            Finding::Abnormal {
                observation: Observation::Effusion,
                severity: Some(Severity::Mild),
                laterality: Some(Laterality::Bilateral),
            }
        );
        assert_eq!(f.abnormal_count(), 1);
    }

    #[test]
    fn observation_without_anatomy_uses_default_slot() {
        // edema defaults to the left lung, fracture to bones
        let f = extract_findings(&toks("moderate edema is noted . fracture seen ."));
        assert_eq!(
            f.get(Slot::LeftLung),
            Finding::Abnormal {
                observation: Observation::Edema,
                severity: Some(Severity::Moderate),
                laterality: None,
            }
        );
        assert_eq!(f.get(Slot::Bones), Finding::abnormal(Observation::Fracture));
    }

    #[test]
    fn anatomy_overrides_default_slot() {
        let f = extract_findings(&toks("nodule in left lung ."));
        assert_eq!(f.get(Slot::LeftLung), Finding::abnormal(Observation::Nodule));
        assert_eq!(f.get(Slot::RightLung), Finding::Normal);
    }

    #[test]
    fn garbage_maps_to_normal() {
        let f = extract_findings(&toks("lung lung [MASK] within . . is"));
        assert_eq!(f, FindingVector::normal());
    }
}
