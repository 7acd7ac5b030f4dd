//! Affect annotation streams: CSV with header `time_s,value`, one sample
//! every 40 ms.

use std::fs;
use std::path::Path;

use c2p_core::window::{Attribute, RecordingAffect, AFFECT_PERIOD_S};

use crate::error::{DataError, DataResult};

pub const HEADER: [&str; 2] = ["time_s", "value"];
pub const SPACING_TOLERANCE_S: f64 = 1e-6;

pub fn load_affect(path: &Path, recording_id: &str, attribute: Attribute) -> DataResult<RecordingAffect> {
    let file = fs::File::open(path).map_err(|e| DataError::io(path, e))?;
    parse(path, file, recording_id, attribute)
}

fn parse<R: std::io::Read>(
    path: &Path,
    reader: R,
    recording_id: &str,
    attribute: Attribute,
) -> DataResult<RecordingAffect> {
    let csv_err = |line: u64, message: String| DataError::Csv {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| csv_err(1, e.to_string()))?;
    if headers.iter().collect::<Vec<_>>() != HEADER {
        return Err(csv_err(1, format!("expected header `time_s,value`, found {headers:?}")));
    }

    let mut samples = Vec::new();
    let mut previous: Option<f64> = None;
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            csv_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |i: usize, name: &str| -> DataResult<f64> {
            let raw = record.get(i).unwrap_or("");
            raw.parse::<f64>()
                .map_err(|_| csv_err(line, format!("{name} {raw:?} is not a number")))
        };
        let t = field(0, "time_s")?;
        let v = field(1, "value")?;
        if !t.is_finite() || !v.is_finite() {
            return Err(csv_err(line, "non-finite value".into()));
        }
        if let Some(prev) = previous {
            let step = t - prev;
            if (step - AFFECT_PERIOD_S).abs() > SPACING_TOLERANCE_S {
                return Err(csv_err(
                    line,
                    format!("time step {step:.6} s, expected {AFFECT_PERIOD_S:.3} s"),
                ));
            }
        }
        previous = Some(t);
        samples.push(v as f32);
    }

    let affect = RecordingAffect::new(recording_id, attribute, samples).map_err(|e| DataError::core(path, e))?;
    let outside = affect.out_of_range();
    if outside > 0 {
        log::warn!(
            "{}: {outside} of {} samples lie outside [-1, 1]",
            path.display(),
            affect.samples.len()
        );
    }
    Ok(affect)
}

/// Writes samples at 0, 0.040, 0.080, ... seconds.
pub fn write_affect(path: &Path, samples: &[f32]) -> DataResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| DataError::io(path, e.into()))?;
    let io = |e: csv::Error| DataError::io(path, e.into());
    w.write_record(HEADER).map_err(io)?;
    for (i, v) in samples.iter().enumerate() {
        w.write_record([format!("{:.3}", i as f64 * AFFECT_PERIOD_S), v.to_string()])
            .map_err(io)?;
    }
    w.flush().map_err(|e| DataError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse_str(s: &str) -> DataResult<RecordingAffect> {
        parse(Path::new("a.csv"), s.as_bytes(), "r", Attribute::Arousal)
    }

    #[test]
    fn reads_regular_stream() {
        let mut s = String::from("time_s,value\n");
        for i in 0..7500 {
            s.push_str(&format!("{:.3},{}\n", i as f64 * 0.04, (i % 7) as f32 / 10.0));
        }
        let a = parse_str(&s).unwrap();
        assert_eq!(a.samples.len(), 7500);
        assert_eq!(a.samples[3], 0.3);
    }

    #[test]
    fn single_row() {
        assert_eq!(parse_str("time_s,value\n0.0,0.5\n").unwrap().samples, vec![0.5]);
    }

    #[test]
    fn irregular_spacing_is_rejected() {
        let e = parse_str("time_s,value\n0.0,0.1\n0.05,0.2\n").unwrap_err();
        assert!(matches!(e, DataError::Csv { line: 3, .. }), "{e}");
    }

    #[test]
    fn non_numeric_value() {
        let e = parse_str("time_s,value\n0.0,abc\n").unwrap_err();
        assert!(e.to_string().contains("abc"), "{e}");
    }

    #[test]
    fn wrong_header() {
        assert!(parse_str("t,v\n0.0,0.1\n").is_err());
    }

    #[test]
    fn out_of_range_is_only_a_warning() {
        assert_eq!(parse_str("time_s,value\n0.0,1.5\n0.04,-2\n").unwrap().out_of_range(), 2);
    }
}
