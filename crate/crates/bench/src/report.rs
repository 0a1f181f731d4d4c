use std::path::Path;

/// One row of a timing report.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchRecord {
    pub experiment: String,
    pub backend: String,
    pub epoch: usize,
    pub seconds: f64,
    pub loss: f64,
    pub accuracy: Option<f64>,
}

pub const CSV_HEADER: [&str; 6] = ["experiment", "backend", "epoch", "seconds", "loss", "accuracy"];

/// Formats `x` with 6 significant digits, printf `%g` style.
pub fn sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { "0".into() } else { x.to_string() };
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if !(-4..6).contains(&exp) {
        let m = mantissa.trim_end_matches('0').trim_end_matches('.');
        return format!("{m}e{exp}");
    }
    let fixed = format!("{x:.*}", (5 - exp) as usize);
    if fixed.contains('.') {
        fixed.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        fixed
    }
}

pub fn write_csv<W: std::io::Write>(records: &[BenchRecord], out: W) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.write_record([
            r.experiment.clone(),
            r.backend.clone(),
            r.epoch.to_string(),
            sig6(r.seconds),
            sig6(r.loss),
            r.accuracy.map(sig6).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit_csv(records: &[BenchRecord], path: &Path) -> csv::Result<()> {
    write_csv(records, std::fs::File::create(path)?)
}

/// Parses a report written by [`emit_csv`].
pub fn read_csv(path: &Path) -> anyhow::Result<Vec<BenchRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in r.records() {
        let row = row?;
        if row.len() != CSV_HEADER.len() {
            anyhow::bail!("row with {} fields", row.len());
        }
        out.push(BenchRecord {
            experiment: row[0].to_string(),
            backend: row[1].to_string(),
            epoch: row[2].parse()?,
            seconds: row[3].parse()?,
            loss: row[4].parse()?,
            accuracy: if row[5].is_empty() { None } else { Some(row[5].parse()?) },
        });
    }
    Ok(out)
}
