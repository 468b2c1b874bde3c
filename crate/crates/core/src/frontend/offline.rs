//! Deterministic offline instruction analyzer: an ordered keyword ruleset,
//! first match wins. A pure function of (text, ruleset).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::AffordanceType;

use super::{FrontendError, GraspDirective, TaskInstruction};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Rule {
    /// All keywords must appear (case-insensitive substring match).
    pub keywords: Vec<String>,
    pub affordance: AffordanceType,
    pub part: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Ruleset {
    pub rules: Vec<Rule>,
}

impl Ruleset {
    /// Rules covering the synthetic families' instruction templates.
    pub fn builtin() -> Self {
        static SRC: &str = include_str!("../../assets/offline_rules.json");
        serde_json::from_str(SRC).expect("builtin ruleset is valid")
    }

    pub fn load(path: &Path) -> Result<Self, FrontendError> {
        let text = std::fs::read_to_string(path).map_err(|e| FrontendError::InvalidInput(
            format!("cannot read ruleset {}: {e}", path.display()),
        ))?;
        serde_json::from_str(&text)
            .map_err(|e| FrontendError::InvalidInput(format!("bad ruleset: {e}")))
    }
}

/// First rule whose keywords all occur in the instruction wins.
pub fn analyze_instruction_offline(
    instr: &TaskInstruction,
    ruleset: &Ruleset,
) -> Result<GraspDirective, FrontendError> {
    let text = instr.text.to_lowercase();
    for rule in &ruleset.rules {
        if rule
            .keywords
            .iter()
            .all(|k| text.contains(&k.to_lowercase()))
        {
            return GraspDirective::new(rule.affordance, rule.part.clone());
        }
    }
    Err(FrontendError::Unanalyzable(instr.text.clone()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_matching_rule_wins() {
        let rules = Ruleset {
            rules: vec![
                Rule {
                    keywords: vec!["twist".into()],
                    affordance: AffordanceType::Twist,
                    part: "cap".into(),
                },
                Rule {
                    keywords: vec!["cap".into()],
                    affordance: AffordanceType::HandleGrip,
                    part: "wrong".into(),
                },
            ],
        };
        let instr = TaskInstruction::new("twist the cap off").unwrap();
        let d = analyze_instruction_offline(&instr, &rules).unwrap();
        assert_eq!(d.affordance, AffordanceType::Twist);
        assert_eq!(d.part_name, "cap");
    }

    #[test]
    fn builtin_rules_cover_trigger() {
        let instr = TaskInstruction::new("squeeze the trigger of the sprayer").unwrap();
        let d = analyze_instruction_offline(&instr, &Ruleset::builtin()).unwrap();
        assert_eq!(d.affordance, AffordanceType::TriggerSqueeze);
        assert_eq!(d.part_name, "trigger");
    }

    #[test]
    fn gibberish_is_unanalyzable() {
        let instr = TaskInstruction::new("florble the wuzzle").unwrap();
        let err = analyze_instruction_offline(&instr, &Ruleset::builtin()).unwrap_err();
        assert!(matches!(err, FrontendError::Unanalyzable(_)));
    }

    #[test]
    fn pure_function_of_inputs() {
        let instr = TaskInstruction::new("hold the kettle by its handle").unwrap();
        let a = analyze_instruction_offline(&instr, &Ruleset::builtin()).unwrap();
        let b = analyze_instruction_offline(&instr, &Ruleset::builtin()).unwrap();
        assert_eq!(a, b);
    }
}
