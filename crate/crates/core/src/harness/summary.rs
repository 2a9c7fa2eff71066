use std::io;

use serde::{Deserialize, Serialize};

use super::HarnessError;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub min: f64,
    pub mean: f64,
    /// Population standard deviation (divides by n).
    pub std: f64,
    pub max: f64,
}

/// Min, mean, population standard deviation and max of `values`.
pub fn summarize(values: &[f64]) -> Result<SummaryStats, HarnessError> {
    if values.is_empty() {
        return Err(HarnessError::Summary("cannot summarize an empty list".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(HarnessError::Summary("non-finite value in summary input".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Ok(SummaryStats {
        min: values.iter().copied().fold(f64::INFINITY, f64::min),
        mean,
        std: var.sqrt(),
        max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    })
}

/// Median; the mean of the middle pair for even lengths.
pub fn median(values: &[f64]) -> Option<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[mid] } else { (v[mid - 1] + v[mid]) / 2.0 })
}

/// One line of the results table. Cells that could not be computed from
/// every repetition are `None`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub variant: String,
    /// Test accuracy of the fixed reference network.
    pub standard: Option<f64>,
    /// Median test accuracy of the runs' initial networks.
    pub median_init: Option<f64>,
    /// Statistics of best-of-run test accuracy.
    pub stats: Option<SummaryStats>,
    pub runs: usize,
    pub failed_runs: usize,
}

#[derive(Serialize, Deserialize)]
struct CsvRow {
    variant: String,
    standard: Option<f64>,
    median_init: Option<f64>,
    min: Option<f64>,
    mean: Option<f64>,
    std: Option<f64>,
    max: Option<f64>,
}

pub fn write_summary_csv<W: io::Write>(rows: &[SummaryRow], writer: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        let s = r.stats;
        w.serialize(CsvRow {
            variant: r.variant.clone(),
            standard: r.standard,
            median_init: r.median_init,
            min: s.map(|s| s.min),
            mean: s.map(|s| s.mean),
            std: s.map(|s| s.std),
            max: s.map(|s| s.max),
        })?;
    }
    w.flush().map_err(|e| HarnessError::Summary(e.to_string()))?;
    Ok(())
}

/// Published full-scale results (MNIST, 30 generations, 10 runs), shown
/// next to desk-scale numbers for context only.
pub const PAPER_REFERENCE: [(&str, [f64; 6]); 3] = [
    ("simple", [0.977, 0.979, 0.972, 0.983, 0.007, 0.989]),
    ("rechenberg", [0.977, 0.917, 0.941, 0.970, 0.020, 0.986]),
    ("niching", [0.977, 0.973, 0.986, 0.989, 0.001, 0.991]),
];

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.3}"))
}

/// Plain-text table of `rows` followed by the published reference values.
pub fn render_table(rows: &[SummaryRow]) -> String {
    let mut out = String::new();
    let header = format!(
        "{:<12} {:>8} {:>11} {:>7} {:>7} {:>7} {:>7}\n",
        "variant", "standard", "median init", "min", "mean", "std", "max"
    );
    out.push_str(&header);
    for r in rows {
        let s = r.stats;
        out.push_str(&format!(
            "{:<12} {:>8} {:>11} {:>7} {:>7} {:>7} {:>7}",
            r.variant,
            cell(r.standard),
            cell(r.median_init),
            cell(s.map(|s| s.min)),
            cell(s.map(|s| s.mean)),
            cell(s.map(|s| s.std)),
            cell(s.map(|s| s.max)),
        ));
        if r.failed_runs > 0 {
            out.push_str(&format!("  ({} of {} runs failed; cells incomplete)", r.failed_runs, r.runs));
        }
        out.push('\n');
    }
    out.push_str("\nPublished full-scale reference (not expected at desk scale):\n");
    out.push_str(&header);
    for (name, v) in PAPER_REFERENCE {
        out.push_str(&format!(
            "{:<12} {:>8.3} {:>11.3} {:>7.3} {:>7.3} {:>7.3} {:>7.3}\n",
            name, v[0], v[1], v[2], v[3], v[4], v[5]
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn singleton() {
        let s = summarize(&[0.5]).unwrap();
        assert_eq!(s, SummaryStats { min: 0.5, mean: 0.5, std: 0.0, max: 0.5 });
    }

    #[test]
    fn pair_uses_population_std() {
        let s = summarize(&[0.0, 1.0]).unwrap();
        assert_eq!(s, SummaryStats { min: 0.0, mean: 0.5, std: 0.5, max: 1.0 });
    }

    #[test]
    fn rejects_empty_and_nan() {
        assert!(summarize(&[]).is_err());
        assert!(summarize(&[0.1, f64::NAN]).is_err());
    }

    #[test]
    fn median_cases() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&[]), None);
    }

    #[test]
    fn csv_leaves_incomplete_cells_empty() {
        let rows = [
            SummaryRow {
                variant: "niching".into(),
                standard: Some(0.9),
                median_init: Some(0.5),
                stats: Some(summarize(&[0.25, 0.75]).unwrap()),
                runs: 2,
                failed_runs: 0,
            },
            SummaryRow {
                variant: "simple".into(),
                standard: None,
                median_init: None,
                stats: None,
                runs: 2,
                failed_runs: 1,
            },
        ];
        let mut buf = Vec::new();
        write_summary_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "variant,standard,median_init,min,mean,std,max\n\
             niching,0.9,0.5,0.25,0.5,0.25,0.75\n\
             simple,,,,,,\n"
        );
        let table = render_table(&rows);
        assert!(table.contains("1 of 2 runs failed"));
        assert!(table.contains("0.991"));
    }
}
