use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use super::Step;
use crate::manifest::{read_manifest, ManifestError, UtteranceRecord};
use crate::metrics::{
    n_wer, o_wer, MiouDenominator, TimestampAccumulator, TimestampEvalResult, WerAccumulator,
    WerBreakdown,
};

/// Hours per source dataset: everything read, then what passed each step.
#[derive(Debug, Clone, PartialEq)]
pub struct StageRow {
    pub dataset: String,
    pub original_h: f64,
    /// Passed hours per step, in [`Step::ALL`] order; `None` when the step
    /// has not run.
    pub passed_h: [Option<f64>; 7],
}

impl StageRow {
    fn empty(dataset: &str) -> Self {
        StageRow {
            dataset: dataset.to_string(),
            original_h: 0.0,
            passed_h: [None; 7],
        }
    }

    pub fn step(&self, step: Step) -> Option<f64> {
        self.passed_h[step as usize]
    }

    pub fn sampled_h(&self) -> Option<f64> {
        self.step(Step::Sample)
    }

    pub fn final_h(&self) -> Option<f64> {
        self.step(Step::NumRevert)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageTable {
    pub rows: Vec<StageRow>,
    pub total: StageRow,
}

/// Folds per-step manifests into a table. `steps` holds, for each step that
/// has run, the manifest written after it; `original` is the input corpus.
pub fn stage_table(
    original: &[UtteranceRecord],
    steps: &BTreeMap<Step, Vec<UtteranceRecord>>,
) -> StageTable {
    let mut rows: BTreeMap<String, StageRow> = BTreeMap::new();
    let mut total = StageRow::empty("Total");
    for rec in original {
        let row = rows
            .entry(rec.source_dataset.clone())
            .or_insert_with(|| StageRow::empty(&rec.source_dataset));
        row.original_h += rec.duration_s / 3600.0;
        total.original_h += rec.duration_s / 3600.0;
    }
    for (step, recs) in steps {
        let i = *step as usize;
        total.passed_h[i] = Some(0.0);
        for row in rows.values_mut() {
            row.passed_h[i] = Some(0.0);
        }
        for rec in recs.iter().filter(|r| step.passed(r)) {
            let row = rows
                .entry(rec.source_dataset.clone())
                .or_insert_with(|| StageRow::empty(&rec.source_dataset));
            *row.passed_h[i].get_or_insert(0.0) += rec.duration_s / 3600.0;
            *total.passed_h[i].get_or_insert(0.0) += rec.duration_s / 3600.0;
        }
    }
    let mut rows: Vec<StageRow> = rows.into_values().collect();
    rows.sort_by(|a, b| {
        b.original_h
            .total_cmp(&a.original_h)
            .then_with(|| a.dataset.cmp(&b.dataset))
    });
    StageTable { rows, total }
}

/// Reads `stages/<step>.jsonl` under a run directory. The first step file
/// present supplies the original corpus.
pub fn stage_table_from_dir(run_dir: impl AsRef<Path>) -> Result<StageTable, ManifestError> {
    let mut steps = BTreeMap::new();
    for step in Step::ALL {
        let path = run_dir
            .as_ref()
            .join("stages")
            .join(format!("{step}.jsonl"));
        if path.exists() {
            steps.insert(step, read_manifest(&path)?);
        }
    }
    let original = steps.values().next().cloned().unwrap_or_default();
    Ok(stage_table(&original, &steps))
}

const STAGE_COLUMNS: [&str; 9] = [
    "Original",
    "Sampled",
    "Clean",
    "Transcript",
    "Punct",
    "NumExpand",
    "Align",
    "Final",
    "Retained%",
];

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |h| format!("{h:.2}"))
}

/// Fixed-width rendering; `header` lines (run parameters) go first, each
/// prefixed with `# `.
pub fn render_stage_table(table: &StageTable, header: &[String]) -> String {
    let width = table
        .rows
        .iter()
        .map(|r| r.dataset.chars().count())
        .chain(["Dataset".len(), "Total".len()])
        .max()
        .unwrap_or(7);
    let mut out = String::new();
    for h in header {
        out.push_str(&format!("# {h}\n"));
    }
    out.push_str(&format!("{:<width$}", "Dataset"));
    for c in STAGE_COLUMNS {
        out.push_str(&format!("  {c:>10}"));
    }
    out.push('\n');
    let line = |r: &StageRow| {
        let mut s = format!("{:<width$}  {:>10}", r.dataset, cell(Some(r.original_h)));
        for step in Step::ALL {
            s.push_str(&format!("  {:>10}", cell(r.step(step))));
        }
        let retained = match (r.sampled_h(), r.final_h()) {
            (Some(s), Some(f)) if s > 0.0 => format!("{:.1}", 100.0 * f / s),
            _ => "-".into(),
        };
        s.push_str(&format!("  {retained:>10}\n"));
        s
    };
    for r in &table.rows {
        out.push_str(&line(r));
    }
    out.push_str(&line(&table.total));
    out
}

/// Evaluation scores for one source dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow {
    pub dataset: String,
    pub utterances: usize,
    /// Reference ids with no hypothesis record, scored as empty output.
    pub missing: usize,
    pub o_wer: WerBreakdown,
    pub n_wer: WerBreakdown,
    /// `None` when no reference in the group carries word timestamps.
    pub timestamps: Option<TimestampEvalResult>,
}

#[derive(Default)]
struct ScoreAcc {
    utterances: usize,
    missing: usize,
    o: WerAccumulator,
    n: WerAccumulator,
    ts: Option<TimestampAccumulator>,
}

impl ScoreAcc {
    fn row(&self, dataset: &str) -> ScoreRow {
        ScoreRow {
            dataset: dataset.to_string(),
            utterances: self.utterances,
            missing: self.missing,
            o_wer: self.o.breakdown(),
            n_wer: self.n.breakdown(),
            timestamps: self.ts.map(|t| t.result()),
        }
    }
}

/// Scores `hypothesis` against `reference` by utterance id, pooling counts
/// per reference source dataset. The last row, "Overall", is the pooled total.
/// Reference records without a transcript are skipped.
pub fn score_manifests(
    reference: &[UtteranceRecord],
    hypothesis: &[UtteranceRecord],
    collar_s: f64,
    mode: MiouDenominator,
) -> Vec<ScoreRow> {
    let hyp: HashMap<&str, &UtteranceRecord> = hypothesis
        .iter()
        .map(|r| (r.utterance_id.as_str(), r))
        .collect();
    let mut groups: BTreeMap<&str, ScoreAcc> = BTreeMap::new();
    let mut total = ScoreAcc::default();
    for r in reference {
        let Some(ref_text) = r.transcript.as_deref() else {
            continue;
        };
        let h = hyp.get(r.utterance_id.as_str());
        let hyp_text = h.and_then(|h| h.transcript.as_deref()).unwrap_or("");
        let o = o_wer(ref_text, hyp_text);
        let n = n_wer(ref_text, hyp_text);
        let ts = r.words.as_ref().map(|rw| {
            let mut acc = TimestampAccumulator::new(collar_s, mode);
            acc.add(rw, h.and_then(|h| h.words.as_deref()).unwrap_or(&[]));
            acc
        });
        for acc in [
            groups.entry(r.source_dataset.as_str()).or_default(),
            &mut total,
        ] {
            acc.utterances += 1;
            acc.missing += usize::from(h.is_none());
            acc.o.add(&o);
            acc.n.add(&n);
            if let Some(t) = ts {
                acc.ts = Some(match acc.ts {
                    Some(prev) => prev.merge(t),
                    None => t,
                });
            }
        }
    }
    let mut rows: Vec<ScoreRow> = groups.iter().map(|(d, acc)| acc.row(d)).collect();
    rows.push(total.row("Overall"));
    rows
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{:.2}", 100.0 * x))
}

/// Orientation of the score table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScoreLayout {
    /// One row per metric, one column per dataset, the pooled total last.
    #[default]
    MetricRows,
    /// One row per dataset with an utterance count and one column per metric.
    DatasetRows,
}

/// Renders scores under a header naming the collar and mIoU denominator.
/// `system` labels the hypothesis in the metric-rows layout.
pub fn render_score_table(
    rows: &[ScoreRow],
    system: &str,
    collar_s: f64,
    mode: MiouDenominator,
    layout: ScoreLayout,
) -> String {
    let mode = match mode {
        MiouDenominator::AllReferences => "all_references",
        MiouDenominator::MatchedOnly => "matched_only",
    };
    let mut out = format!("# collar_s={collar_s:.3} miou_denominator={mode}\n");
    let metrics: [(&str, fn(&ScoreRow) -> String); 4] = [
        ("O-WER", |r| pct(Some(r.o_wer.wer))),
        ("N-WER", |r| pct(Some(r.n_wer.wer))),
        ("F1", |r| pct(r.timestamps.map(|t| t.f1))),
        ("mIoU", |r| pct(r.timestamps.map(|t| t.miou))),
    ];
    match layout {
        ScoreLayout::MetricRows => {
            let counts: Vec<String> = rows
                .iter()
                .map(|r| format!("{}={}", r.dataset, r.utterances))
                .collect();
            out.push_str(&format!("# utterances {}\n", counts.join(" ")));
            let sys_w = system.chars().count().max("Model".len());
            let widths: Vec<usize> = rows
                .iter()
                .map(|r| r.dataset.chars().count().max(6))
                .collect();
            let mut line = |metric: &str, model: &str, cells: Vec<String>| {
                out.push_str(&format!("{metric:<6}  {model:<sys_w$}"));
                for (c, w) in cells.iter().zip(&widths) {
                    out.push_str(&format!("  {c:>w$}"));
                }
                out.push('\n');
            };
            line(
                "Metric",
                "Model",
                rows.iter().map(|r| r.dataset.clone()).collect(),
            );
            for (name, f) in metrics {
                line(name, system, rows.iter().map(f).collect());
            }
        }
        ScoreLayout::DatasetRows => {
            let width = rows
                .iter()
                .map(|r| r.dataset.chars().count())
                .chain(["Dataset".len()])
                .max()
                .unwrap_or(7);
            out.push_str(&format!("{:<width$}  {:>6}", "Dataset", "Utts"));
            for (name, _) in metrics {
                out.push_str(&format!("  {name:>8}"));
            }
            out.push('\n');
            for r in rows {
                out.push_str(&format!("{:<width$}  {:>6}", r.dataset, r.utterances));
                for (_, f) in metrics {
                    out.push_str(&format!("  {:>8}", f(r)));
                }
                out.push('\n');
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifest::{AlignedWord, Stage, StageStatus};

    fn rec(id: &str, src: &str, dur: f64, passed: &[Stage]) -> UtteranceRecord {
        let mut r = UtteranceRecord::new(id, src, "a.wav", 16000, dur);
        for s in passed {
            r.set_status(*s, StageStatus::Passed).unwrap();
        }
        r
    }

    #[test]
    fn table_columns_and_totals() {
        let original = vec![
            rec("a", "x", 3600.0, &[]),
            rec("b", "x", 1800.0, &[]),
            rec("c", "y", 7200.0, &[]),
        ];
        let mut steps = BTreeMap::new();
        let mut sampled = original.clone();
        sampled[0]
            .set_status(Stage::Sample, StageStatus::Passed)
            .unwrap();
        sampled[1]
            .set_status(Stage::Sample, StageStatus::Rejected("cap".into()))
            .unwrap();
        sampled[2]
            .set_status(Stage::Sample, StageStatus::Passed)
            .unwrap();
        steps.insert(Step::Sample, sampled.clone());
        let mut clean = sampled;
        clean[0]
            .set_status(Stage::Clean, StageStatus::Passed)
            .unwrap();
        clean[2]
            .set_status(Stage::Clean, StageStatus::Rejected("long".into()))
            .unwrap();
        steps.insert(Step::Clean, clean);

        let t = stage_table(&original, &steps);
        assert_eq!(t.rows[0].dataset, "y");
        assert_eq!(t.rows[0].original_h, 2.0);
        assert_eq!(t.rows[0].step(Step::Clean), Some(0.0));
        assert_eq!(t.rows[1].sampled_h(), Some(1.0));
        assert_eq!(t.total.original_h, 3.5);
        assert_eq!(t.total.sampled_h(), Some(3.0));
        assert_eq!(t.total.step(Step::Clean), Some(1.0));
        assert_eq!(t.total.final_h(), None);

        let text = render_stage_table(&t, &["seed=1".into()]);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# seed=1");
        let header: Vec<&str> = lines[1].split_whitespace().collect();
        assert_eq!(header[..4], ["Dataset", "Original", "Sampled", "Clean"]);
        assert!(header.contains(&"Final"));
        let total: Vec<&str> = lines.last().unwrap().split_whitespace().collect();
        assert_eq!(total[..4], ["Total", "3.50", "3.00", "1.00"]);
    }

    #[test]
    fn scores_group_by_source() {
        let mut r1 = rec("1", "a", 1.0, &[]).with_transcript("Xin chào.", Default::default());
        r1.words = Some(vec![
            AlignedWord::new("Xin", 0.0, 0.5),
            AlignedWord::new("chào.", 0.5, 1.0),
        ]);
        let r2 = rec("2", "b", 1.0, &[]).with_transcript("một hai", Default::default());
        let mut h1 = rec("1", "a", 1.0, &[]).with_transcript("xin chào", Default::default());
        h1.words = r1.words.clone();
        let rows = score_manifests(&[r1, r2], &[h1], 0.2, MiouDenominator::AllReferences);
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[0].o_wer.wer, 1.0);
        assert_eq!(rows[0].n_wer.wer, 0.0);
        assert_eq!(rows[0].timestamps.unwrap().f1, 1.0);
        assert_eq!((rows[1].missing, rows[1].n_wer.wer), (1, 1.0));
        assert!(rows[1].timestamps.is_none());
        assert_eq!(rows[2].n_wer.ref_len, 4);
        assert_eq!(rows[2].n_wer.deletions, 2);
        assert_eq!(rows[2].dataset, "Overall");
        let text = render_score_table(
            &rows,
            "mock",
            0.2,
            MiouDenominator::AllReferences,
            ScoreLayout::MetricRows,
        );
        assert!(text.starts_with("# collar_s=0.200"));
        let lines: Vec<Vec<&str>> = text
            .lines()
            .skip(2)
            .map(|l| l.split_whitespace().collect())
            .collect();
        assert_eq!(lines[0], ["Metric", "Model", "a", "b", "Overall"]);
        assert_eq!(lines[1], ["O-WER", "mock", "100.00", "100.00", "100.00"]);
        assert_eq!(lines[2], ["N-WER", "mock", "0.00", "100.00", "50.00"]);
        assert_eq!(lines[3], ["F1", "mock", "100.00", "-", "100.00"]);
        assert_eq!(lines.len(), 5);

        let text = render_score_table(
            &rows,
            "mock",
            0.2,
            MiouDenominator::AllReferences,
            ScoreLayout::DatasetRows,
        );
        let lines: Vec<Vec<&str>> = text
            .lines()
            .skip(1)
            .map(|l| l.split_whitespace().collect())
            .collect();
        assert_eq!(
            lines[0],
            ["Dataset", "Utts", "O-WER", "N-WER", "F1", "mIoU"]
        );
        assert_eq!(lines[2], ["b", "1", "100.00", "100.00", "-", "-"]);
        assert_eq!(lines[3][0], "Overall");
    }
}
