//! Data model for multi-turn agent trajectories.
//!
//! Probes never see text: a step is represented by its role and token
//! length, which is all the attention-statistic pipeline needs to place the
//! prefix / evaluation-turn boundary.

use serde::{Deserialize, Serialize};

/// Binary correctness of an evaluation turn. Serialized as `0` / `1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum CorrectnessLabel {
    Incorrect,
    Correct,
}

impl CorrectnessLabel {
    pub fn from_bool(correct: bool) -> Self {
        if correct {
            CorrectnessLabel::Correct
        } else {
            CorrectnessLabel::Incorrect
        }
    }

    pub fn is_correct(self) -> bool {
        self == CorrectnessLabel::Correct
    }

    pub fn value(self) -> u8 {
        self.into()
    }
}

impl From<CorrectnessLabel> for u8 {
    fn from(l: CorrectnessLabel) -> u8 {
        match l {
            CorrectnessLabel::Incorrect => 0,
            CorrectnessLabel::Correct => 1,
        }
    }
}

impl TryFrom<u8> for CorrectnessLabel {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, String> {
        match v {
            0 => Ok(CorrectnessLabel::Incorrect),
            1 => Ok(CorrectnessLabel::Correct),
            other => Err(format!("label must be 0 or 1, got {other}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrefixKind {
    Clean,
    Contaminated,
    /// Turn fluently follows a corrupted prefix but is wrong.
    DiagnosticConsistentIncorrect,
    /// Turn repairs a corrupted prefix: correct, but incoherent with it.
    DiagnosticInconsistentCorrect,
}

impl PrefixKind {
    pub const ALL: [PrefixKind; 4] = [
        PrefixKind::Clean,
        PrefixKind::Contaminated,
        PrefixKind::DiagnosticConsistentIncorrect,
        PrefixKind::DiagnosticInconsistentCorrect,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PrefixKind::Clean => "clean",
            PrefixKind::Contaminated => "contaminated",
            PrefixKind::DiagnosticConsistentIncorrect => "diagnostic_consistent_incorrect",
            PrefixKind::DiagnosticInconsistentCorrect => "diagnostic_inconsistent_correct",
        }
    }

    pub fn is_diagnostic(self) -> bool {
        matches!(
            self,
            PrefixKind::DiagnosticConsistentIncorrect | PrefixKind::DiagnosticInconsistentCorrect
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContaminationType {
    ReasoningError,
    ToolMisuse,
    ObservationMisinterpretation,
    StaleMemory,
}

impl ContaminationType {
    pub const ALL: [ContaminationType; 4] = [
        ContaminationType::ReasoningError,
        ContaminationType::ToolMisuse,
        ContaminationType::ObservationMisinterpretation,
        ContaminationType::StaleMemory,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRole {
    Thought,
    Action,
    Observation,
}

impl StepRole {
    pub fn is_assistant(self) -> bool {
        !matches!(self, StepRole::Observation)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step {
    /// 1-based position in the trajectory.
    pub index: usize,
    pub role: StepRole,
    pub text_len_tokens: usize,
    pub is_evaluation_turn: bool,
}

/// A single corrupted turn `contaminated_index` located `distance` steps
/// before the evaluation turn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContaminationInfo {
    pub contaminated_index: usize,
    pub contamination_type: ContaminationType,
    pub distance: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    pub task_id: String,
    pub steps: Vec<Step>,
    pub prefix_kind: PrefixKind,
    pub contamination: Option<ContaminationInfo>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    EmptySteps,
    NonContiguousIndex { position: usize, found: usize },
    EvaluationTurnCount(usize),
    EvaluationNotLastAssistant,
    ContaminationMissing,
    UnexpectedContamination,
    ContaminationAtEvaluationTurn,
    ContaminationAfterEvaluationTurn,
    ContaminatedIndexZero,
    DistanceMismatch { expected: usize, found: usize },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::EmptySteps => write!(f, "trajectory has no steps"),
            Violation::NonContiguousIndex { position, found } => write!(
                f,
                "step at position {position} has index {found}, expected {}",
                position + 1
            ),
            Violation::EvaluationTurnCount(n) => {
                write!(f, "expected exactly one evaluation turn, found {n}")
            }
            Violation::EvaluationNotLastAssistant => {
                write!(f, "evaluation turn is not the last assistant step")
            }
            Violation::ContaminationMissing => {
                write!(f, "non-clean trajectory lacks contamination info")
            }
            Violation::UnexpectedContamination => {
                write!(f, "clean trajectory carries contamination info")
            }
            Violation::ContaminationAtEvaluationTurn => {
                write!(f, "contamination at evaluation turn")
            }
            Violation::ContaminationAfterEvaluationTurn => {
                write!(f, "contamination after evaluation turn")
            }
            Violation::ContaminatedIndexZero => write!(f, "contaminated index must be >= 1"),
            Violation::DistanceMismatch { expected, found } => {
                write!(f, "distance mismatch: expected {expected}, found {found}")
            }
        }
    }
}

/// Return every invariant violation of `t`; an empty list means the
/// trajectory is well formed.
pub fn validate_trajectory(t: &Trajectory) -> Vec<Violation> {
    let mut out = Vec::new();
    if t.steps.is_empty() {
        out.push(Violation::EmptySteps);
    }
    for (pos, s) in t.steps.iter().enumerate() {
        if s.index != pos + 1 {
            out.push(Violation::NonContiguousIndex {
                position: pos,
                found: s.index,
            });
        }
    }

    let evals: Vec<&Step> = t.steps.iter().filter(|s| s.is_evaluation_turn).collect();
    if evals.len() != 1 {
        out.push(Violation::EvaluationTurnCount(evals.len()));
    }
    let eval_index = evals.first().map(|s| s.index);
    if let Some(eval) = evals.first() {
        let last_assistant = t.steps.iter().rev().find(|s| s.role.is_assistant());
        if last_assistant.map(|s| s.index) != Some(eval.index) {
            out.push(Violation::EvaluationNotLastAssistant);
        }
    }

    match (t.prefix_kind, &t.contamination) {
        (PrefixKind::Clean, Some(_)) => out.push(Violation::UnexpectedContamination),
        (PrefixKind::Clean, None) => {}
        (_, None) => out.push(Violation::ContaminationMissing),
        (_, Some(c)) => {
            if c.contaminated_index == 0 {
                out.push(Violation::ContaminatedIndexZero);
            }
            if let Some(e) = eval_index {
                if c.contaminated_index == e {
                    out.push(Violation::ContaminationAtEvaluationTurn);
                } else if c.contaminated_index > e {
                    out.push(Violation::ContaminationAfterEvaluationTurn);
                } else if c.distance != e - c.contaminated_index {
                    out.push(Violation::DistanceMismatch {
                        expected: e - c.contaminated_index,
                        found: c.distance,
                    });
                }
            }
        }
    }
    out
}

impl Trajectory {
    pub fn evaluation_step(&self) -> Option<&Step> {
        self.steps.iter().find(|s| s.is_evaluation_turn)
    }

    /// Tokens before the evaluation turn.
    pub fn prefix_token_count(&self) -> usize {
        self.steps
            .iter()
            .take_while(|s| !s.is_evaluation_turn)
            .map(|s| s.text_len_tokens)
            .sum()
    }
}
