use std::io::{Cursor, Write};

use zip::write::SimpleFileOptions;
use zip::{CompressionMethod, DateTime, ZipWriter};

use super::cohort::{parse_cohort, KeySpec};
use super::engine::{link, LinkOptions, LinkedTable};
use super::{LinkError, LinkSelection, LinkSummary, ResolverContext};
use crate::catalog::CatalogStore;

pub const LINKED_ENTRY: &str = "linked.csv";
pub const SUMMARY_ENTRY: &str = "summary.json";
pub const DICTIONARY_ENTRY: &str = "dictionary.csv";

const DICTIONARY_HEADER: [&str; 8] =
    ["column", "dataset_id", "year", "variable", "description", "unit", "value_kind", "concept_code"];

fn out_err(e: impl std::fmt::Display) -> LinkError {
    LinkError::Output(e.to_string())
}

/// Upload bytes to finished archive: parse, link, package. The CLI and the
/// service both go through here.
pub fn link_archive(
    upload: &[u8],
    spec: &KeySpec,
    selection: &LinkSelection,
    store: &CatalogStore,
    ctx: &ResolverContext,
    options: &LinkOptions,
) -> Result<(Vec<u8>, LinkSummary), LinkError> {
    let cohort = parse_cohort(upload, spec)?;
    let (table, summary) = link(&cohort, selection, store, ctx, options)?;
    Ok((write_output(&table, &summary)?, summary))
}

/// Packages a link result. Entry order, timestamps and permissions are
/// fixed, so equal inputs give byte-identical archives.
pub fn write_output(table: &LinkedTable, summary: &LinkSummary) -> Result<Vec<u8>, LinkError> {
    let opts = SimpleFileOptions::default()
        .compression_method(CompressionMethod::Deflated)
        .last_modified_time(DateTime::default())
        .unix_permissions(0o644);
    let mut zip = ZipWriter::new(Cursor::new(Vec::new()));

    zip.start_file(LINKED_ENTRY, opts).map_err(out_err)?;
    let zip_ref = table.write_csv(std::io::BufWriter::with_capacity(1 << 16, &mut zip))?;
    zip_ref.into_inner().map_err(|e| out_err(e.error()))?;

    zip.start_file(SUMMARY_ENTRY, opts).map_err(out_err)?;
    let mut json = serde_json::to_vec_pretty(summary).map_err(out_err)?;
    json.push(b'\n');
    zip.write_all(&json).map_err(out_err)?;

    zip.start_file(DICTIONARY_ENTRY, opts).map_err(out_err)?;
    let mut wtr = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(Vec::new());
    wtr.write_record(DICTIONARY_HEADER).map_err(out_err)?;
    for row in table.dictionary() {
        let v = &row.variable;
        let year = row.year.to_string();
        wtr.write_record([
            row.column.as_str(),
            &v.dataset_id,
            &year,
            &v.name,
            &v.description,
            v.unit.as_deref().unwrap_or(""),
            v.value_kind.as_str(),
            v.concept_code.as_deref().unwrap_or(""),
        ])
        .map_err(out_err)?;
    }
    zip.write_all(&wtr.into_inner().map_err(|e| out_err(e.error()))?).map_err(out_err)?;

    Ok(zip.finish().map_err(out_err)?.into_inner())
}
