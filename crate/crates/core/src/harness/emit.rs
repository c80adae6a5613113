use std::fs;
use std::path::{Path, PathBuf};

use super::config::Scenario;
use super::scenarios::{CellRecord, ExperimentResult};
use crate::error::{Error, Result};

pub const RESULTS_FILE: &str = "results.json";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const PLOT_DIR: &str = "plotdata";

pub const SUMMARY_HEADER: [&str; 9] = [
    "scenario", "dataset", "method", "setting", "seed", "rmse", "epsilon", "epochs", "ms",
];

/// Writes `bytes` to a temporary sibling and renames it over `path`.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_bytes(header: &[&str], rows: Vec<Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let wrap = |e: csv::Error| Error::Input(format!("csv encoding: {e}"));
    w.write_record(header).map_err(wrap)?;
    for r in rows {
        w.write_record(&r).map_err(wrap)?;
    }
    w.into_inner().map_err(|e| Error::Input(format!("csv encoding: {e}")))
}

/// Long-format rows of the successful cells.
pub fn summary_csv(res: &ExperimentResult) -> Result<Vec<u8>> {
    let rows = res
        .records
        .iter()
        .filter(|r| !r.failed())
        .map(|r| {
            vec![
                r.scenario.to_string(),
                r.dataset.clone(),
                r.method.clone(),
                r.setting.clone(),
                r.seed.to_string(),
                opt(r.rmse),
                opt(r.epsilon),
                opt(r.epochs),
                r.wall_ms.to_string(),
            ]
        })
        .collect();
    csv_bytes(&SUMMARY_HEADER, rows)
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Per (method, setting) aggregate over seeds, in first-appearance order.
pub fn plot_csv(res: &ExperimentResult) -> Result<Vec<u8>> {
    let mut groups: Vec<(String, String, Vec<&CellRecord>)> = Vec::new();
    for r in res.records.iter().filter(|r| !r.failed()) {
        match groups.iter_mut().find(|g| g.0 == r.method && g.1 == r.setting) {
            Some(g) => g.2.push(r),
            None => groups.push((r.method.clone(), r.setting.clone(), vec![r])),
        }
    }
    if res.config.scenario == Scenario::Gradcheck {
        let rows = groups
            .into_iter()
            .map(|(m, s, rs)| {
                let worst = rs.iter().filter_map(|r| r.max_rel_error).fold(0.0, f64::max);
                vec![m, s, rs.len().to_string(), worst.to_string()]
            })
            .collect();
        return csv_bytes(&["method", "setting", "seeds", "max_rel_error"], rows);
    }
    let rows = groups
        .into_iter()
        .map(|(m, s, rs)| {
            let rm: Vec<f64> = rs.iter().filter_map(|r| r.rmse).collect();
            let ep: Vec<f64> = rs.iter().filter_map(|r| r.epsilon).collect();
            let (mr, sr) = mean_std(&rm);
            let (me, _) = mean_std(&ep);
            vec![m, s, rs.len().to_string(), mr.to_string(), sr.to_string(), me.to_string()]
        })
        .collect();
    csv_bytes(&["method", "setting", "seeds", "mean_rmse", "std_rmse", "mean_epsilon"], rows)
}

/// Writes `results.json`, `summary.csv` and `plotdata/<scenario>.csv`
/// under `dir`, replacing earlier files.
pub fn emit_results(res: &ExperimentResult, dir: &Path) -> Result<()> {
    let plot_dir = dir.join(PLOT_DIR);
    fs::create_dir_all(&plot_dir).map_err(|e| Error::io(&plot_dir, e))?;
    let mut json = serde_json::to_vec_pretty(res)?;
    json.push(b'\n');
    write_atomic(&dir.join(RESULTS_FILE), &json)?;
    write_atomic(&dir.join(SUMMARY_FILE), &summary_csv(res)?)?;
    let plot = plot_dir.join(format!("{}.csv", res.config.scenario));
    write_atomic(&plot, &plot_csv(res)?)
}

pub fn load_results(dir: &Path) -> Result<ExperimentResult> {
    let path = dir.join(RESULTS_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Ok(serde_json::from_str(&text)?)
}
