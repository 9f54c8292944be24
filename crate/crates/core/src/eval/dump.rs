use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::data::EncodedCorpus;
use crate::encoder::EncoderModel;
use crate::error::{Error, Result};

use super::MetricsReport;

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::file(path, e))
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Confusion matrix as CSV: a header row of predicted class names, then one
/// row per gold class starting with its name.
pub fn dump_confusion(report: &MetricsReport, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let io = |e| Error::file(path, e);
    let names: Vec<String> = report.class_names.iter().map(|n| csv_field(n)).collect();
    writeln!(w, "gold\\predicted,{}", names.join(",")).map_err(io)?;
    for (name, row) in names.iter().zip(&report.confusion) {
        let cells: Vec<String> = row.iter().map(usize::to_string).collect();
        writeln!(w, "{name},{}", cells.join(",")).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// One TSV row per utterance: gold label, then the D values of its intent
/// representation.
pub fn dump_embeddings(
    model: &EncoderModel,
    data: &EncodedCorpus,
    path: impl AsRef<Path>,
    batch_size: usize,
) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let io = |e| Error::file(path, e);
    let batch_size = batch_size.max(1);
    for (chunk, labels) in data.ids.chunks(batch_size).zip(data.labels.chunks(batch_size)) {
        let batch: Vec<&[u32]> = chunk.iter().map(Vec::as_slice).collect();
        let z = model.represent(&batch)?;
        for (row, label) in z.rows().into_iter().zip(labels) {
            write!(w, "{label}").map_err(io)?;
            for v in row {
                write!(w, "\t{v}").map_err(io)?;
            }
            writeln!(w).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}
