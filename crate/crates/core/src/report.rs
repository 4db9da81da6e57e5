//! Plain-text and line-delimited result tables.
//!
//! Every score table is emitted twice: a human-readable aligned table and a
//! JSON-lines file with one record per row, both deterministic so reruns with
//! the same inputs produce byte-identical artifacts.

use serde::{Deserialize, Serialize};

/// One labeled result row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub label: String,
    pub em_pct: f64,
    pub f1_pct: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_reward: Option<f64>,
}

/// Provenance header embedded in every artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactMeta {
    pub config_hash: String,
    pub seed: u64,
    pub corpus_hash: String,
    pub code_version: String,
}

impl ArtifactMeta {
    pub fn new(config_hash: impl Into<String>, seed: u64, corpus_hash: impl Into<String>) -> Self {
        ArtifactMeta {
            config_hash: config_hash.into(),
            seed,
            corpus_hash: corpus_hash.into(),
            code_version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

/// Aligned text table: label, EM%, F1%, and mean reward when present.
pub fn render_text_table(title: &str, rows: &[ScoreRow], best: Option<&str>) -> String {
    let label_width = rows
        .iter()
        .map(|r| r.label.len())
        .chain(["sequence".len()])
        .max()
        .unwrap_or(8);
    let mut out = String::new();
    out.push_str(title);
    out.push('\n');
    out.push_str(&format!(
        "{:<label_width$}  {:>8}  {:>8}  {:>12}\n",
        "sequence", "EM (%)", "F1 (%)", "mean reward"
    ));
    for row in rows {
        let marker = if best == Some(row.label.as_str()) { " *" } else { "" };
        match row.mean_reward {
            Some(r) => out.push_str(&format!(
                "{:<label_width$}  {:>8.2}  {:>8.2}  {:>12.4}{marker}\n",
                row.label, row.em_pct, row.f1_pct, r
            )),
            None => out.push_str(&format!(
                "{:<label_width$}  {:>8.2}  {:>8.2}  {:>12}{marker}\n",
                row.label, row.em_pct, row.f1_pct, "-"
            )),
        }
    }
    out
}

/// JSON lines: one meta record, then one record per row.
pub fn render_jsonl(meta: &ArtifactMeta, rows: &[ScoreRow]) -> String {
    let mut out = String::new();
    out.push_str(&serde_json::to_string(meta).expect("meta serializes"));
    out.push('\n');
    for row in rows {
        out.push_str(&serde_json::to_string(row).expect("row serializes"));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_formats_two_decimals_and_marks_best() {
        let rows = vec![
            ScoreRow { label: "A1 A3".into(), em_pct: 50.0, f1_pct: 90.0, mean_reward: Some(0.73) },
            ScoreRow { label: "A2 A3".into(), em_pct: 12.5, f1_pct: 20.25, mean_reward: None },
        ];
        let text = render_text_table("sweep", &rows, Some("A1 A3"));
        assert!(text.contains("50.00"));
        assert!(text.contains("20.25"));
        assert!(text.lines().any(|l| l.starts_with("A1 A3") && l.ends_with('*')));
    }

    #[test]
    fn jsonl_round_trips() {
        let meta = ArtifactMeta::new("cfg", 7, "corpus");
        let rows = vec![ScoreRow {
            label: "dqn/mlp".into(),
            em_pct: 100.0,
            f1_pct: 100.0,
            mean_reward: Some(1.98),
        }];
        let out = render_jsonl(&meta, &rows);
        let mut lines = out.lines();
        let meta2: ArtifactMeta = serde_json::from_str(lines.next().unwrap()).unwrap();
        assert_eq!(meta2, meta);
        let row2: ScoreRow = serde_json::from_str(lines.next().unwrap()).unwrap();
        assert_eq!(row2, rows[0]);
    }
}
