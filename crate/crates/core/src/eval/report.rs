use std::fmt::Write as _;
use std::path::Path;

use crate::error::Result;
use crate::formats::write_atomic;

/// Metrics of one (source clip, target style) conversion.
#[derive(Debug, Clone, PartialEq)]
pub struct PairRecord {
    pub source: String,
    pub target_style: String,
    pub reference: String,
    /// Parallel rendition of the source song in the target style.
    pub target: String,
    pub mel_distance: f64,
    pub f0_rmse_cents: f64,
    pub vuv_error: f64,
    /// Output F0 against the source F0 shifted onto the reference statistics.
    pub f0_rmse_shifted_cents: f64,
    pub style_proxy_distance_to_ref: f64,
    pub style_proxy_distance_to_src: f64,
    pub output_nhr: f64,
}

impl PairRecord {
    pub const METRICS: [&'static str; 7] = [
        "mel_distance",
        "f0_rmse_cents",
        "vuv_error",
        "f0_rmse_shifted_cents",
        "style_proxy_distance_to_ref",
        "style_proxy_distance_to_src",
        "output_nhr",
    ];

    pub fn metrics(&self) -> [f64; 7] {
        [
            self.mel_distance,
            self.f0_rmse_cents,
            self.vuv_error,
            self.f0_rmse_shifted_cents,
            self.style_proxy_distance_to_ref,
            self.style_proxy_distance_to_src,
            self.output_nhr,
        ]
    }

    pub fn pair_id(&self) -> String {
        pair_id(&self.source, &self.target_style)
    }
}

pub(crate) fn pair_id(source: &str, style: &str) -> String {
    format!("{source}__to__{style}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairFailure {
    pub source: String,
    pub target_style: String,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricSummary {
    pub name: &'static str,
    pub mean: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalReport {
    pub records: Vec<PairRecord>,
    pub failures: Vec<PairFailure>,
    /// Frechet distance from externally computed embeddings, when available.
    pub fad: Option<f64>,
}

impl EvalReport {
    pub fn attempted(&self) -> usize {
        self.records.len() + self.failures.len()
    }

    /// Arithmetic mean of each metric over the successful pairs.
    pub fn summary(&self) -> Vec<MetricSummary> {
        let n = self.records.len();
        PairRecord::METRICS
            .iter()
            .enumerate()
            .map(|(k, &name)| {
                let sum: f64 = self.records.iter().map(|r| r.metrics()[k]).sum();
                MetricSummary { name, mean: if n == 0 { f64::NAN } else { sum / n as f64 }, count: n }
            })
            .collect()
    }

    fn header(sep: char) -> String {
        let mut cols = vec!["source", "target_style", "reference", "target"];
        cols.extend(PairRecord::METRICS);
        cols.join(&sep.to_string())
    }

    fn row(r: &PairRecord, sep: char) -> String {
        let mut s = format!("{}{sep}{}{sep}{}{sep}{}", r.source, r.target_style, r.reference, r.target);
        for v in r.metrics() {
            write!(s, "{sep}{v:.6}").unwrap();
        }
        s
    }

    /// Tab-separated records, failures, then a summary block.
    pub fn to_tsv(&self) -> String {
        let mut out = Self::header('\t');
        out.push('\n');
        for r in &self.records {
            out.push_str(&Self::row(r, '\t'));
            out.push('\n');
        }
        for f in &self.failures {
            writeln!(out, "# failed\t{}\t{}\t{}", f.source, f.target_style, f.reason.replace(['\t', '\n'], " ")).unwrap();
        }
        writeln!(out, "# summary\tpairs\t{}\tfailed\t{}", self.attempted(), self.failures.len()).unwrap();
        for m in self.summary() {
            writeln!(out, "# mean\t{}\t{:.6}\t{}", m.name, m.mean, m.count).unwrap();
        }
        if let Some(fad) = self.fad {
            writeln!(out, "# fad\t{fad:.6}").unwrap();
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = Self::header(',');
        out.push('\n');
        for r in &self.records {
            out.push_str(&Self::row(r, ','));
            out.push('\n');
        }
        out
    }

    pub fn write_tsv(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_tsv().as_bytes())
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_csv().as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(i: usize) -> PairRecord {
        let v = i as f64;
        PairRecord {
            source: format!("s{i}"),
            target_style: "breathy".into(),
            reference: "r".into(),
            target: format!("t{i}"),
            mel_distance: v,
            f0_rmse_cents: 2.0 * v,
            vuv_error: 0.1,
            f0_rmse_shifted_cents: v + 1.0,
            style_proxy_distance_to_ref: 0.5,
            style_proxy_distance_to_src: v * v,
            output_nhr: 0.2,
        }
    }

    #[test]
    fn summary_is_exact_mean() {
        let report = EvalReport { records: (1..=4).map(rec).collect(), ..Default::default() };
        let s = report.summary();
        assert_eq!(s[0].mean, 2.5);
        assert_eq!(s[1].mean, 5.0);
        assert_eq!(s[5].mean, (1.0 + 4.0 + 9.0 + 16.0) / 4.0);
        assert!(s.iter().all(|m| m.count == 4));
    }

    #[test]
    fn tsv_layout() {
        let report = EvalReport {
            records: vec![rec(1), rec(2)],
            failures: vec![PairFailure { source: "x".into(), target_style: "clear".into(), reason: "too\tshort".into() }],
            fad: Some(1.5),
        };
        let tsv = report.to_tsv();
        let lines: Vec<&str> = tsv.lines().collect();
        assert_eq!(lines[0].split('\t').count(), 11);
        assert!(lines[1].starts_with("s1\tbreathy\tr\tt1\t1.000000"));
        assert_eq!(lines[3], "# failed\tx\tclear\ttoo short");
        assert_eq!(lines[4], "# summary\tpairs\t3\tfailed\t1");
        assert!(tsv.contains("# mean\tmel_distance\t1.500000\t2"));
        assert!(tsv.ends_with("# fad\t1.500000\n"));
        assert_eq!(report.to_csv().lines().count(), 3);
    }
}
