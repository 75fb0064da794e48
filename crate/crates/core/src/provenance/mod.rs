//! The run record (`model_provenance.json`): assembly, validation and
//! production drift checks.

mod assemble;
mod document;
mod drift;
mod schema;

pub use assemble::{assemble_provenance, expected_ranges, round_down, round_emitted, round_up, RunRecord};
pub use document::{
    validate_provenance, DataSplit, Deployment, DeploymentParameters, FeatureEngineering, FeatureSelection,
    IntegrationAndValidation, Modeling, ModelingMethod, PredictionEngineering, ProvenanceDocument, Results, SetupStage,
    TrainingSetup, ValueRange,
};
pub use drift::{check_drift, DriftEntry, DriftReport};

#[cfg(test)]
mod tests;
