pub mod fit;
pub mod ingest;
pub mod report;
pub mod simulate;
pub mod tradeoff;

use std::path::Path;

use crate::documents::{read_document, InputDigest, MetricsDocument, RunRecord};
use crate::error::CliError;

/// Loads metrics documents and pools their runs, keeping the order given.
pub(crate) fn load_runs(
    paths: &[impl AsRef<Path>],
) -> Result<(Vec<RunRecord>, Vec<InputDigest>), CliError> {
    let mut runs = Vec::new();
    let mut inputs = Vec::new();
    for path in paths {
        let (doc, digest): (MetricsDocument, _) = read_document(path.as_ref())?;
        runs.extend(doc.runs);
        inputs.push(digest);
    }
    Ok((runs, inputs))
}
