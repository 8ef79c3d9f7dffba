use std::fmt;
use std::fs::File;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use statrs::statistics::Statistics;

use super::config::{ExperimentConfig, SspeMode};
use super::metrics::MetricsReport;
use super::train::train;
use crate::augment::KeySet;
use crate::data::Sample;
use crate::encoder::PeKind;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    PeCompare,
    KeySelect,
    MaskSelect,
    HyperGrid,
    NSweep,
    PeDropout,
}

impl Suite {
    pub const ALL: [Suite; 6] = [
        Suite::PeCompare,
        Suite::KeySelect,
        Suite::MaskSelect,
        Suite::HyperGrid,
        Suite::NSweep,
        Suite::PeDropout,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::PeCompare => "pe-compare",
            Suite::KeySelect => "key-select",
            Suite::MaskSelect => "mask-select",
            Suite::HyperGrid => "hyper-grid",
            Suite::NSweep => "n-sweep",
            Suite::PeDropout => "pe-dropout",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|suite| suite.name() == s)
            .ok_or_else(|| {
                let known: Vec<_> = Suite::ALL.iter().map(|s| s.name()).collect();
                Error::Config(format!("unknown suite {s:?}; expected one of {}", known.join(", ")))
            })
    }
}

/// One configuration of a suite, run once per seed.
#[derive(Clone, Debug)]
pub struct Condition {
    pub name: String,
    pub config: ExperimentConfig,
}

/// Key sets compared by the position-embedding and key-selection studies.
pub const KEY_SET_CANDIDATES: [&[usize]; 3] = [&[1, 2, 3], &[4, 5, 6], &[7, 8, 9]];
pub const DROPOUT_RATES: [f64; 4] = [0.0, 0.2, 0.3, 0.5];

fn key_set(indices: &[usize]) -> KeySet {
    KeySet::new(indices.to_vec()).expect("static key sets are valid")
}

/// SSPE alone: no exchange and plain CE.
fn sspe_only(base: &ExperimentConfig) -> ExperimentConfig {
    let mut c = base.clone();
    c.exchange_n = 0;
    c.loss.alpha = 0.0;
    c.loss.beta = 1.0;
    c
}

pub fn suite_conditions(suite: Suite, base: &ExperimentConfig) -> Vec<Condition> {
    let mut out = Vec::new();
    match suite {
        Suite::PeCompare => {
            for kind in [PeKind::None, PeKind::Sinusoidal1d, PeKind::Grid2d, PeKind::Relative] {
                let mut c = sspe_only(base);
                c.model.pe_kind = kind;
                c.sspe = SspeMode::Off;
                out.push(Condition {
                    name: format!("{}/no-sspe", kind.label()),
                    config: c.clone(),
                });
                // Shuffling has nothing to act on without a position signal.
                if kind == PeKind::None {
                    continue;
                }
                for keys in KEY_SET_CANDIDATES {
                    let keys = key_set(keys);
                    let mut c = c.clone();
                    c.sspe = SspeMode::Keys;
                    c.key_set = keys.clone();
                    out.push(Condition {
                        name: format!("{}/sspe-{}", kind.label(), keys.label()),
                        config: c,
                    });
                }
            }
        }
        Suite::KeySelect => {
            for keys in KEY_SET_CANDIDATES {
                let keys = key_set(keys);
                let mut c = sspe_only(base);
                c.sspe = SspeMode::Keys;
                c.key_set = keys.clone();
                out.push(Condition {
                    name: format!("sspe-{}", keys.label()),
                    config: c,
                });
            }
        }
        Suite::MaskSelect => {
            for (keep, masked) in [([4, 5], 6), ([4, 6], 5), ([5, 6], 4)] {
                let keys = key_set(&keep);
                let mut c = sspe_only(base);
                c.sspe = SspeMode::Keys;
                c.key_set = keys.clone();
                c.mask_cells = vec![masked];
                out.push(Condition {
                    name: format!("keys-{}/mask-{masked}", keys.label()),
                    config: c,
                });
            }
        }
        Suite::HyperGrid => {
            let mut ce = base.clone();
            ce.loss.alpha = 0.0;
            ce.loss.beta = 1.0;
            out.push(Condition {
                name: "ce-only".into(),
                config: ce,
            });
            for e in 1..=6 {
                for a in 1..=10 {
                    let (epsilon, alpha) = (e as f64 * 0.05, a as f64 * 0.1);
                    let mut c = base.clone();
                    c.loss.epsilon = epsilon;
                    c.loss.alpha = alpha;
                    c.loss.beta = 1.0 - alpha;
                    out.push(Condition {
                        name: format!("eps-{epsilon:.2}/alpha-{alpha:.1}"),
                        config: c,
                    });
                }
            }
        }
        Suite::NSweep => {
            for n in 0..=4 {
                let mut c = base.clone();
                c.exchange_n = n;
                out.push(Condition {
                    name: format!("n-{n}"),
                    config: c,
                });
            }
        }
        Suite::PeDropout => {
            for rate in DROPOUT_RATES {
                let mut c = base.clone();
                c.pe_dropout = rate;
                out.push(Condition {
                    name: format!("dropout-{rate:.1}"),
                    config: c,
                });
            }
        }
    }
    out
}

#[derive(Clone, Debug)]
pub struct RunRecord {
    pub condition: String,
    pub seed: u64,
    pub report: MetricsReport,
}

/// Trains every condition of `suite` once per seed in `base.seeds`.
pub fn run_ablation(suite: Suite, base: &ExperimentConfig, samples: &[Sample]) -> Result<Vec<RunRecord>> {
    run_conditions(&suite_conditions(suite, base), &base.seeds, samples)
}

pub fn run_conditions(conditions: &[Condition], seeds: &[u64], samples: &[Sample]) -> Result<Vec<RunRecord>> {
    if seeds.is_empty() {
        return Err(Error::Config("no seeds configured".into()));
    }
    let mut records = Vec::with_capacity(conditions.len() * seeds.len());
    for cond in conditions {
        for &seed in seeds {
            let mut config = cond.config.clone();
            config.seed = seed;
            let outcome = train(&config, samples)?;
            log::info!(
                "{} seed {seed}: accuracy {:.4}",
                cond.name,
                outcome.report.accuracy
            );
            records.push(RunRecord {
                condition: cond.name.clone(),
                seed,
                report: outcome.report,
            });
        }
    }
    Ok(records)
}

/// Per-condition aggregate over seeds, in first-seen order.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionSummary {
    pub condition: String,
    pub runs: usize,
    pub accuracy_mean: f64,
    pub accuracy_sd: f64,
    pub f1_mean: f64,
    pub f1_sd: f64,
    /// Mean over the runs that reached the threshold.
    pub epochs_to_90pct_mean: Option<f64>,
}

fn sd(values: &[f64]) -> f64 {
    if values.len() < 2 {
        0.0
    } else {
        values.std_dev()
    }
}

pub fn summarize(records: &[RunRecord]) -> Vec<ConditionSummary> {
    let mut names: Vec<&str> = Vec::new();
    for r in records {
        if !names.contains(&r.condition.as_str()) {
            names.push(&r.condition);
        }
    }
    names
        .into_iter()
        .map(|name| {
            let runs: Vec<&RunRecord> = records.iter().filter(|r| r.condition == name).collect();
            let acc: Vec<f64> = runs.iter().map(|r| r.report.accuracy).collect();
            let f1: Vec<f64> = runs.iter().map(|r| r.report.f1).collect();
            let epochs: Vec<f64> = runs
                .iter()
                .filter_map(|r| r.report.epochs_to_90pct.map(|e| e as f64))
                .collect();
            ConditionSummary {
                condition: name.to_string(),
                runs: runs.len(),
                accuracy_mean: acc.iter().mean(),
                accuracy_sd: sd(&acc),
                f1_mean: f1.iter().mean(),
                f1_sd: sd(&f1),
                epochs_to_90pct_mean: (!epochs.is_empty()).then(|| epochs.iter().mean()),
            }
        })
        .collect()
}

fn create(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(|| "NA".to_string(), |v| v.to_string())
}

/// One row per run: `condition,seed,accuracy,f1,epochs_to_90pct`.
pub fn write_runs_csv(records: &[RunRecord], path: &Path) -> Result<()> {
    let mut w = create(path)?;
    w.write_record(["condition", "seed", "accuracy", "f1", "epochs_to_90pct"])?;
    for r in records {
        w.write_record([
            r.condition.clone(),
            r.seed.to_string(),
            format!("{:.6}", r.report.accuracy),
            format!("{:.6}", r.report.f1),
            opt(r.report.epochs_to_90pct),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_summary_csv(summaries: &[ConditionSummary], path: &Path) -> Result<()> {
    let mut w = create(path)?;
    w.write_record([
        "condition",
        "runs",
        "accuracy_mean",
        "accuracy_sd",
        "f1_mean",
        "f1_sd",
        "epochs_to_90pct_mean",
    ])?;
    for s in summaries {
        w.write_record([
            s.condition.clone(),
            s.runs.to_string(),
            format!("{:.6}", s.accuracy_mean),
            format!("{:.6}", s.accuracy_sd),
            format!("{:.6}", s.f1_mean),
            format!("{:.6}", s.f1_sd),
            opt(s.epochs_to_90pct_mean.map(|e| format!("{e:.2}"))),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Conditions as rows and seeds as columns, holding test accuracy.
pub fn write_wide_csv(records: &[RunRecord], path: &Path) -> Result<()> {
    let mut seeds: Vec<u64> = records.iter().map(|r| r.seed).collect();
    seeds.sort_unstable();
    seeds.dedup();
    let mut w = create(path)?;
    let mut header = vec!["condition".to_string()];
    header.extend(seeds.iter().map(|s| format!("seed_{s}")));
    w.write_record(&header)?;
    for s in summarize(records) {
        let mut row = vec![s.condition.clone()];
        for seed in &seeds {
            let cell = records
                .iter()
                .find(|r| r.condition == s.condition && r.seed == *seed)
                .map(|r| format!("{:.6}", r.report.accuracy));
            row.push(opt(cell));
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Per-epoch loss and accuracy for every run.
pub fn write_curves_csv(records: &[RunRecord], path: &Path) -> Result<()> {
    let mut w = create(path)?;
    w.write_record(["condition", "seed", "epoch", "loss", "val_accuracy", "test_accuracy"])?;
    for r in records {
        let rep = &r.report;
        for (i, loss) in rep.loss_curve.iter().enumerate() {
            w.write_record([
                r.condition.clone(),
                r.seed.to_string(),
                (i + 1).to_string(),
                format!("{loss:.6}"),
                opt(rep.val_accuracy_curve.get(i).map(|v| format!("{v:.6}"))),
                opt(rep.accuracy_curve.get(i).map(|v| format!("{v:.6}"))),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Position-embedding kinds as rows, shuffling strategy as columns, each
/// cell `mean ± sd`. Cells that were not run hold `NA`.
pub fn write_pe_table_csv(summaries: &[ConditionSummary], path: &Path) -> Result<()> {
    let mut columns = vec!["no-sspe".to_string()];
    columns.extend(KEY_SET_CANDIDATES.iter().map(|k| format!("sspe-{}", key_set(k).label())));
    let mut w = create(path)?;
    let mut header = vec!["pe".to_string()];
    header.extend(columns.iter().cloned());
    w.write_record(&header)?;
    for kind in [PeKind::None, PeKind::Sinusoidal1d, PeKind::Grid2d, PeKind::Relative] {
        let mut row = vec![kind.label().to_string()];
        for col in &columns {
            let name = format!("{}/{col}", kind.label());
            let cell = summaries
                .iter()
                .find(|s| s.condition == name)
                .map(|s| format!("{:.4} ± {:.4}", s.accuracy_mean, s.accuracy_sd));
            row.push(opt(cell));
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes every table for a finished suite into `dir` and returns the paths.
pub fn write_suite_outputs(suite: Suite, records: &[RunRecord], dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let name = suite.name();
    let summaries = summarize(records);
    let mut paths = Vec::new();
    let mut emit = |file: String, write: &dyn Fn(&Path) -> Result<()>| -> Result<()> {
        let path = dir.join(file);
        write(&path)?;
        paths.push(path);
        Ok(())
    };
    emit(format!("{name}.csv"), &|p| write_runs_csv(records, p))?;
    emit(format!("{name}_summary.csv"), &|p| write_summary_csv(&summaries, p))?;
    emit(format!("{name}_by_seed.csv"), &|p| write_wide_csv(records, p))?;
    emit(format!("{name}_curves.csv"), &|p| write_curves_csv(records, p))?;
    if suite == Suite::PeCompare {
        emit(format!("{name}_table.csv"), &|p| write_pe_table_csv(&summaries, p))?;
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(condition: &str, seed: u64, accuracy: f64, epochs: Option<usize>) -> RunRecord {
        RunRecord {
            condition: condition.into(),
            seed,
            report: MetricsReport {
                accuracy,
                f1: accuracy / 2.0,
                epochs_to_90pct: epochs,
                loss_curve: vec![0.7, 0.5],
                accuracy_curve: vec![0.6, accuracy],
                val_accuracy_curve: vec![0.5, 0.6],
                ..MetricsReport::default()
            },
        }
    }

    #[test]
    fn suite_names_round_trip() {
        for s in Suite::ALL {
            assert_eq!(s.name().parse::<Suite>().unwrap(), s);
        }
        assert!(matches!("grid".parse::<Suite>(), Err(Error::Config(_))));
    }

    #[test]
    fn pe_compare_shape() {
        let conds = suite_conditions(Suite::PeCompare, &ExperimentConfig::default());
        // none runs once, the three others run with and without each key set
        assert_eq!(conds.len(), 1 + 3 * 4);
        assert!(conds.iter().all(|c| c.config.exchange_n == 0 && c.config.loss.alpha == 0.0));
        let c = conds.iter().find(|c| c.name == "1d/sspe-456").unwrap();
        assert_eq!(c.config.key_set.indices(), &[4, 5, 6]);
        assert_eq!(c.config.sspe, SspeMode::Keys);
    }

    #[test]
    fn hyper_grid_contains_best_cell() {
        let conds = suite_conditions(Suite::HyperGrid, &ExperimentConfig::default());
        assert_eq!(conds.len(), 1 + 60);
        let c = conds.iter().find(|c| c.name == "eps-0.20/alpha-0.3").unwrap();
        assert!((c.config.loss.epsilon - 0.2).abs() < 1e-12);
        assert!((c.config.loss.beta - 0.7).abs() < 1e-12);
        for c in &conds {
            c.config.validate().unwrap();
        }
    }

    #[test]
    fn other_suites() {
        let base = ExperimentConfig::default();
        let n = suite_conditions(Suite::NSweep, &base);
        assert_eq!(n.iter().map(|c| c.config.exchange_n).collect::<Vec<_>>(), [0, 1, 2, 3, 4]);
        let m = suite_conditions(Suite::MaskSelect, &base);
        assert_eq!(m[1].config.key_set.indices(), &[4, 6]);
        assert_eq!(m[1].config.mask_cells, [5]);
        assert_eq!(suite_conditions(Suite::KeySelect, &base).len(), 3);
        assert_eq!(suite_conditions(Suite::PeDropout, &base)[3].config.pe_dropout, 0.5);
    }

    #[test]
    fn summary_statistics() {
        let recs = [
            record("a", 1, 0.8, Some(4)),
            record("a", 2, 0.6, None),
            record("b", 1, 0.5, Some(2)),
        ];
        let s = summarize(&recs);
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].runs, 2);
        assert!((s[0].accuracy_mean - 0.7).abs() < 1e-12);
        assert!((s[0].accuracy_sd - 0.02f64.sqrt()).abs() < 1e-12);
        assert_eq!(s[0].epochs_to_90pct_mean, Some(4.0));
        assert_eq!(s[1].accuracy_sd, 0.0);
    }

    #[test]
    fn csv_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let recs = [record("n-0", 1, 0.75, Some(3)), record("n-0", 2, 0.5, None)];
        let paths = write_suite_outputs(Suite::NSweep, &recs, dir.path()).unwrap();
        assert_eq!(paths.len(), 4);
        let runs = std::fs::read_to_string(dir.path().join("n-sweep.csv")).unwrap();
        assert_eq!(
            runs,
            "condition,seed,accuracy,f1,epochs_to_90pct\nn-0,1,0.750000,0.375000,3\nn-0,2,0.500000,0.250000,NA\n"
        );
        let wide = std::fs::read_to_string(dir.path().join("n-sweep_by_seed.csv")).unwrap();
        assert_eq!(wide, "condition,seed_1,seed_2\nn-0,0.750000,0.500000\n");
    }

    #[test]
    fn pe_table_layout() {
        let dir = tempfile::tempdir().unwrap();
        let recs = [record("1d/no-sspe", 1, 0.8, None), record("none/no-sspe", 1, 0.6, None)];
        write_suite_outputs(Suite::PeCompare, &recs, dir.path()).unwrap();
        let table = std::fs::read_to_string(dir.path().join("pe-compare_table.csv")).unwrap();
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines[0], "pe,no-sspe,sspe-123,sspe-456,sspe-789");
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[1], "none,0.6000 ± 0.0000,NA,NA,NA");
    }
}
