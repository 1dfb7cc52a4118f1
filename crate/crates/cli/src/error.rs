use fomsynth::certificates::CertError;
use fomsynth::gain_margin::GainMarginError;
use fomsynth::lifting::LiftingError;
use fomsynth::problems::ProblemError;
use fomsynth::rates::RateError;
use fomsynth::runtime::RunError;
use fomsynth::synthesis::SynthesisError;
use fomsynth::transfer::TransferError;
use fomsynth::SimError;
use serde_json::json;

/// Exit 1 for bad input, exit 2 when the numerics fail on valid input.
#[derive(Debug)]
pub enum Failure {
    Validation(String),
    Numerical(String),
}

impl Failure {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Failure::Validation(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Validation(_) => 1,
            Failure::Numerical(_) => 2,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let (kind, message) = match self {
            Failure::Validation(m) => ("validation", m),
            Failure::Numerical(m) => ("numerical", m),
        };
        json!({ "error": { "kind": kind, "message": message } })
    }
}

fn numerical(numeric: bool, msg: String) -> Failure {
    if numeric {
        Failure::Numerical(msg)
    } else {
        Failure::Validation(msg)
    }
}

fn transfer_is_numeric(e: &TransferError) -> bool {
    matches!(e, TransferError::SingularLoop | TransferError::Singular)
}

fn problem_is_numeric(e: &ProblemError) -> bool {
    matches!(
        e,
        ProblemError::InnerNotConverged(_) | ProblemError::NotPositiveDefinite
    )
}

fn synthesis_is_numeric(e: &SynthesisError) -> bool {
    matches!(e, SynthesisError::Transfer(t) if transfer_is_numeric(t))
}

fn margin_is_numeric(e: &GainMarginError) -> bool {
    match e {
        GainMarginError::Infeasible
        | GainMarginError::Degenerate(_)
        | GainMarginError::NominalUnstable => true,
        GainMarginError::Transfer(t) => transfer_is_numeric(t),
        _ => false,
    }
}

impl From<SynthesisError> for Failure {
    fn from(e: SynthesisError) -> Self {
        numerical(synthesis_is_numeric(&e), e.to_string())
    }
}

impl From<GainMarginError> for Failure {
    fn from(e: GainMarginError) -> Self {
        numerical(margin_is_numeric(&e), e.to_string())
    }
}

impl From<TransferError> for Failure {
    fn from(e: TransferError) -> Self {
        numerical(transfer_is_numeric(&e), e.to_string())
    }
}

impl From<ProblemError> for Failure {
    fn from(e: ProblemError) -> Self {
        numerical(problem_is_numeric(&e), e.to_string())
    }
}

impl From<LiftingError> for Failure {
    fn from(e: LiftingError) -> Self {
        let numeric = match &e {
            LiftingError::GainMargin(g) => margin_is_numeric(g),
            LiftingError::Transfer(t) => transfer_is_numeric(t),
            _ => false,
        };
        numerical(numeric, e.to_string())
    }
}

impl From<CertError> for Failure {
    fn from(e: CertError) -> Self {
        let numeric = match &e {
            CertError::Uncertifiable | CertError::SingularTransform => true,
            CertError::Synthesis(s) => synthesis_is_numeric(s),
            CertError::Transfer(t) => transfer_is_numeric(t),
            _ => false,
        };
        numerical(numeric, e.to_string())
    }
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        let numeric = match &e {
            RunError::Divergence { .. } | RunError::FactorizationFailure => true,
            RunError::Problem(p) => problem_is_numeric(p),
            RunError::Synthesis(s) => synthesis_is_numeric(s),
            RunError::Simulation(SimError::NoEquilibrium) => true,
            _ => false,
        };
        numerical(numeric, e.to_string())
    }
}

impl From<RateError> for Failure {
    fn from(e: RateError) -> Self {
        numerical(matches!(e, RateError::TooShort { .. }), e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Validation(format!("invalid JSON: {e}"))
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Validation(format!("I/O: {e}"))
    }
}
