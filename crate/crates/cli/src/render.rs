//! CSV renderings of report pieces.

use multiwell::analysis::Comparison;
use multiwell::oracle::SpectralResult;
use serde::Serialize;

pub fn rows_csv<T: Serialize>(rows: &[T]) -> anyhow::Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    Ok(w.into_inner()?)
}

pub fn comparisons_csv(rows: &[Comparison]) -> anyhow::Result<Vec<u8>> {
    rows_csv(rows)
}

/// `x, psi0, psi1, …` on the fine grid.
pub fn wavefunctions_csv(spec: &SpectralResult) -> anyhow::Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["x".to_string()];
    header.extend((0..spec.wavefunctions.len()).map(|k| format!("psi{k}")));
    w.write_record(&header)?;
    for (j, x) in spec.x.iter().enumerate() {
        let mut rec = vec![x.to_string()];
        rec.extend(spec.wavefunctions.iter().map(|psi| psi[j].to_string()));
        w.write_record(&rec)?;
    }
    Ok(w.into_inner()?)
}
