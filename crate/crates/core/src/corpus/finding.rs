use rand::Rng;
use serde::{Deserialize, Serialize};

use super::CorpusConfig;

/// Anatomy inventory, in canonical clause order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Slot {
    Heart,
    LeftLung,
    RightLung,
    Pleura,
    Mediastinum,
    Bones,
}

impl Slot {
    pub const COUNT: usize = 6;
    pub const ALL: [Slot; 6] = [
        Slot::Heart,
        Slot::LeftLung,
        Slot::RightLung,
        Slot::Pleura,
        Slot::Mediastinum,
        Slot::Bones,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Slot::Heart => "heart",
            Slot::LeftLung => "left_lung",
            Slot::RightLung => "right_lung",
            Slot::Pleura => "pleura",
            Slot::Mediastinum => "mediastinum",
            Slot::Bones => "bones",
        }
    }

    /// Two-token anatomy phrase used by the grammar.
    pub fn surface(self) -> [&'static str; 2] {
        match self {
            Slot::Heart => ["cardiac", "silhouette"],
            Slot::LeftLung => ["left", "lung"],
            Slot::RightLung => ["right", "lung"],
            Slot::Pleura => ["pleural", "space"],
            Slot::Mediastinum => ["mediastinal", "contour"],
            Slot::Bones => ["osseous", "structures"],
        }
    }

    pub fn from_surface(first: &str, second: &str) -> Option<Slot> {
        Slot::ALL
            .into_iter()
            .find(|s| s.surface() == [first, second])
    }

    /// Observations that may be sampled for this slot.
    pub fn observations(self) -> &'static [Observation] {
        use Observation::*;
        match self {
            Slot::Heart => &[Cardiomegaly],
            Slot::LeftLung | Slot::RightLung => {
                &[Opacity, Consolidation, Atelectasis, Edema, Nodule]
            }
            Slot::Pleura => &[Effusion, Pneumothorax, Thickening],
            Slot::Mediastinum => &[Widening, Lymphadenopathy],
            Slot::Bones => &[Fracture],
        }
    }

    /// Whether laterality is sampled for this slot.
    pub fn is_lateral(self) -> bool {
        matches!(self, Slot::Pleura | Slot::Bones)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observation {
    Cardiomegaly,
    Opacity,
    Consolidation,
    Atelectasis,
    Edema,
    Nodule,
    Effusion,
    Pneumothorax,
    Thickening,
    Widening,
    Lymphadenopathy,
    Fracture,
}

impl Observation {
    pub const COUNT: usize = 12;
    pub const ALL: [Observation; 12] = [
        Observation::Cardiomegaly,
        Observation::Opacity,
        Observation::Consolidation,
        Observation::Atelectasis,
        Observation::Edema,
        Observation::Nodule,
        Observation::Effusion,
        Observation::Pneumothorax,
        Observation::Thickening,
        Observation::Widening,
        Observation::Lymphadenopathy,
        Observation::Fracture,
    ];

    /// Five-label subset used for the secondary finding score.
    pub const SUBSET5: [Observation; 5] = [
        Observation::Cardiomegaly,
        Observation::Edema,
        Observation::Consolidation,
        Observation::Atelectasis,
        Observation::Effusion,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn token(self) -> &'static str {
        match self {
            Observation::Cardiomegaly => "cardiomegaly",
            Observation::Opacity => "opacity",
            Observation::Consolidation => "consolidation",
            Observation::Atelectasis => "atelectasis",
            Observation::Edema => "edema",
            Observation::Nodule => "nodule",
            Observation::Effusion => "effusion",
            Observation::Pneumothorax => "pneumothorax",
            Observation::Thickening => "thickening",
            Observation::Widening => "widening",
            Observation::Lymphadenopathy => "lymphadenopathy",
            Observation::Fracture => "fracture",
        }
    }

    pub fn from_token(token: &str) -> Option<Observation> {
        Observation::ALL.into_iter().find(|o| o.token() == token)
    }

    /// Slot assumed when a clause names the observation without an anatomy.
    pub fn default_slot(self) -> Slot {
        use Observation::*;
        match self {
            Cardiomegaly => Slot::Heart,
            Opacity | Consolidation | Nodule => Slot::RightLung,
            Atelectasis | Edema => Slot::LeftLung,
            Effusion | Pneumothorax | Thickening => Slot::Pleura,
            Widening | Lymphadenopathy => Slot::Mediastinum,
            Fracture => Slot::Bones,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Mild,
    Moderate,
    Severe,
}

impl Severity {
    pub const ALL: [Severity; 3] = [Severity::Mild, Severity::Moderate, Severity::Severe];

    pub fn token(self) -> &'static str {
        match self {
            Severity::Mild => "mild",
            Severity::Moderate => "moderate",
            Severity::Severe => "severe",
        }
    }

    pub fn from_token(token: &str) -> Option<Severity> {
        Severity::ALL.into_iter().find(|s| s.token() == token)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Laterality {
    Left,
    Right,
    Bilateral,
}

impl Laterality {
    pub const ALL: [Laterality; 3] = [Laterality::Left, Laterality::Right, Laterality::Bilateral];

    pub fn token(self) -> &'static str {
        match self {
            Laterality::Left => "left-sided",
            Laterality::Right => "right-sided",
            Laterality::Bilateral => "bilateral",
        }
    }

    pub fn from_token(token: &str) -> Option<Laterality> {
        Laterality::ALL.into_iter().find(|l| l.token() == token)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Finding {
    Normal,
    Abnormal {
        observation: Observation,
        severity: Option<Severity>,
        laterality: Option<Laterality>,
    },
}

impl Finding {
    pub fn abnormal(observation: Observation) -> Self {
        Finding::Abnormal {
            observation,
            severity: None,
            laterality: None,
        }
    }

    pub fn observation(&self) -> Option<Observation> {
        match *self {
            Finding::Normal => None,
            Finding::Abnormal { observation, .. } => Some(observation),
        }
    }

    pub fn attribute_count(&self) -> usize {
        match *self {
            Finding::Normal => 0,
            Finding::Abnormal {
                severity,
                laterality,
                ..
            } => usize::from(severity.is_some()) + usize::from(laterality.is_some()),
        }
    }
}

/// One finding per anatomy slot. Stands in for the image evidence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FindingVector {
    slots: [Finding; Slot::COUNT],
}

impl Default for FindingVector {
    fn default() -> Self {
        FindingVector::normal()
    }
}

impl FindingVector {
    pub fn normal() -> Self {
        FindingVector {
            slots: [Finding::Normal; Slot::COUNT],
        }
    }

    pub fn get(&self, slot: Slot) -> Finding {
        self.slots[slot.index()]
    }

    pub fn set(&mut self, slot: Slot, finding: Finding) {
        self.slots[slot.index()] = finding;
    }

    pub fn with(mut self, slot: Slot, finding: Finding) -> Self {
        self.set(slot, finding);
        self
    }

    pub fn iter(&self) -> impl Iterator<Item = (Slot, Finding)> + '_ {
        Slot::ALL.into_iter().map(|s| (s, self.get(s)))
    }

    pub fn abnormal_count(&self) -> usize {
        self.slots
            .iter()
            .filter(|f| matches!(f, Finding::Abnormal { .. }))
            .count()
    }

    pub fn attribute_count(&self) -> usize {
        self.slots.iter().map(Finding::attribute_count).sum()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConditionRecord {
    heart: Finding,
    left_lung: Finding,
    right_lung: Finding,
    pleura: Finding,
    mediastinum: Finding,
    bones: Finding,
}

impl Serialize for FindingVector {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        ConditionRecord {
            heart: self.get(Slot::Heart),
            left_lung: self.get(Slot::LeftLung),
            right_lung: self.get(Slot::RightLung),
            pleura: self.get(Slot::Pleura),
            mediastinum: self.get(Slot::Mediastinum),
            bones: self.get(Slot::Bones),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for FindingVector {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let r = ConditionRecord::deserialize(deserializer)?;
        Ok(FindingVector {
            slots: [
                r.heart,
                r.left_lung,
                r.right_lung,
                r.pleura,
                r.mediastinum,
                r.bones,
            ],
        })
    }
}

/// Draws a finding vector: each slot is independently abnormal with its
/// configured prior, then observation and attributes are drawn.
pub fn sample_condition<R: Rng + ?Sized>(config: &CorpusConfig, rng: &mut R) -> FindingVector {
    let mut out = FindingVector::normal();
    for slot in Slot::ALL {
        if !rng.random_bool(config.abnormal_prior[slot.index()]) {
            continue;
        }
        let choices = slot.observations();
        let observation = choices[rng.random_range(0..choices.len())];
        let severity = rng
            .random_bool(config.severity_prior)
            .then(|| Severity::ALL[rng.random_range(0..3)]);
        let laterality = (slot.is_lateral() && rng.random_bool(config.laterality_prior))
            .then(|| Laterality::ALL[rng.random_range(0..3)]);
        out.set(
            slot,
            Finding::Abnormal {
                observation,
                severity,
                laterality,
            },
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    #[test]
    fn zero_prior_is_all_normal() {
        let cfg = CorpusConfig {
            abnormal_prior: [0.0; 6],
            ..CorpusConfig::default()
        };
        let mut rng = seed::rng(1);
        for _ in 0..100 {
            assert_eq!(sample_condition(&cfg, &mut rng), FindingVector::normal());
        }
    }

    #[test]
    fn unit_prior_is_all_abnormal() {
        let cfg = CorpusConfig {
            abnormal_prior: [1.0; 6],
            ..CorpusConfig::default()
        };
        let mut rng = seed::rng(2);
        for _ in 0..100 {
            let c = sample_condition(&cfg, &mut rng);
            assert_eq!(c.abnormal_count(), 6);
            for (slot, f) in c.iter() {
                let obs = f.observation().unwrap();
                assert!(slot.observations().contains(&obs));
                if let Finding::Abnormal { laterality, .. } = f {
                    assert!(laterality.is_none() || slot.is_lateral());
                }
            }
        }
    }

    #[test]
    fn empirical_prior_within_binomial_bound() {
        let cfg = CorpusConfig {
            abnormal_prior: [0.3; 6],
            ..CorpusConfig::default()
        };
        let n = 100_000;
        let mut rng = seed::rng(3);
        let mut counts = [0usize; 6];
        for _ in 0..n {
            let c = sample_condition(&cfg, &mut rng);
            for (slot, f) in c.iter() {
                if f.observation().is_some() {
                    counts[slot.index()] += 1;
                }
            }
        }
        let bound = 3.0 * (0.3f64 * 0.7 / n as f64).sqrt();
        for c in counts {
            let rate = c as f64 / n as f64;
            assert!((rate - 0.3).abs() < bound, "rate {rate} outside {bound}");
        }
    }

    #[test]
    fn condition_json_shape() {
        let c = FindingVector::normal().with(
            Slot::Pleura,
            Finding::Abnormal {
                observation: Observation::Effusion,
                severity: Some(Severity::Mild),
                laterality: Some(Laterality::Bilateral),
            },
        );
        let s = serde_json::to_string(&c).unwrap();
        assert!(s.starts_with(r#"{"heart":{"status":"normal"}"#));
        assert!(s.contains(
            r#""pleura":{"status":"abnormal","observation":"effusion","severity":"mild","laterality":"bilateral"}"#
        ));
        let back: FindingVector = serde_json::from_str(&s).unwrap();
        assert_eq!(back, c);
        assert!(serde_json::from_str::<FindingVector>(r#"{"heart":{"status":"normal"}}"#).is_err());
    }

    #[test]
    fn default_slots_are_compatible() {
        for o in Observation::ALL {
            assert!(o.default_slot().observations().contains(&o));
        }
    }
}
