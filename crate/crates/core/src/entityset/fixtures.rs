use std::path::PathBuf;

use super::{load_entityset, EntitySet};
use crate::metadata::{parse_metadata, MetadataDocument};
use crate::time::Timestamp;

pub(crate) fn retail_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/retail_tiny")
}

pub(crate) fn retail_metadata() -> MetadataDocument {
    parse_metadata(&std::fs::read_to_string(retail_dir().join("metadata.json")).unwrap()).unwrap()
}

pub(crate) fn retail_tiny() -> EntitySet {
    load_entityset(&retail_dir(), &retail_metadata()).unwrap()
}

pub(crate) fn ts(s: &str) -> Timestamp {
    Timestamp::parse(s).unwrap()
}
