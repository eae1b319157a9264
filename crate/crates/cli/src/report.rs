//! Report rendering: turns a results directory into plot-ready data files
//! (per-user histograms, activity curve, budget-sweep curve) plus a
//! human-readable summary. No plotting; data files only.

use std::io::Write;
use std::path::Path;

use serde_json::Value;

use crate::error::{CliError, CliResult};
use crate::output::{read_per_user_csv, PerUserRow};

/// One histogram bin over a fixed-width grid.
#[derive(Debug, Clone, PartialEq)]
pub struct HistBin {
    pub lo: f64,
    pub hi: f64,
    pub count: u64,
}

/// Fixed-width histogram over `[lo, hi]`; the top edge is inclusive so the
/// bin counts always sum to the number of values.
pub fn histogram(values: &[f64], lo: f64, hi: f64, n_bins: usize) -> Vec<HistBin> {
    assert!(n_bins > 0 && hi > lo);
    let width = (hi - lo) / n_bins as f64;
    let mut counts = vec![0u64; n_bins];
    for &v in values {
        let idx = (((v - lo) / width) as usize).min(n_bins - 1);
        counts[idx] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(i, count)| HistBin {
            lo: lo + i as f64 * width,
            hi: lo + (i + 1) as f64 * width,
            count,
        })
        .collect()
}

fn write_histogram_csv(path: &Path, digest: &str, bins: &[HistBin]) -> CliResult<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "# manifest={digest}")?;
    writeln!(w, "bin_lo,bin_hi,count")?;
    for b in bins {
        writeln!(w, "{},{},{}", b.lo, b.hi, b.count)?;
    }
    w.flush()?;
    Ok(())
}

/// Renders the report into `out_dir` from a results directory containing
/// `per_user.csv` and `summary.json` (and optionally `susceptibility.csv`
/// and `sweep.csv`). Returns the list of files written.
pub fn render_report(results: &Path, out_dir: &Path) -> CliResult<Vec<String>> {
    let per_user_path = results.join("per_user.csv");
    let summary_path = results.join("summary.json");
    let mut missing = Vec::new();
    if !per_user_path.exists() {
        missing.push(per_user_path.display().to_string());
    }
    if !summary_path.exists() {
        missing.push(summary_path.display().to_string());
    }
    if !missing.is_empty() {
        return Err(CliError::data(format!(
            "missing report inputs: {}",
            missing.join(", ")
        )));
    }

    std::fs::create_dir_all(out_dir)?;
    let rows = read_per_user_csv(&per_user_path)?;
    let summary: Value = serde_json::from_str(&std::fs::read_to_string(&summary_path)?)
        .map_err(|e| CliError::data(format!("{}: {e}", summary_path.display())))?;
    let digest = summary
        .get("manifest_digest")
        .and_then(|v| v.as_str())
        .unwrap_or("unknown")
        .to_string();

    let mut written = Vec::new();
    let mut summary_txt = String::new();
    summary_txt.push_str(&format!("manifest: {digest}\n"));
    summary_txt.push_str(&format!("eligible users with estimates: {}\n", rows.len()));
    for key in [
        "mean_friends_overlap",
        "mean_copy_influence_raw",
        "mean_copy_influence_clamped",
        "bootstrap_se",
        "fraction_zero_friends_overlap",
        "fraction_nonpositive_influence",
    ] {
        if let Some(v) = summary.get(key) {
            summary_txt.push_str(&format!("{key}: {v}\n"));
        }
    }

    if rows.is_empty() {
        summary_txt.push_str("no eligible users; histograms skipped\n");
    } else {
        let fr: Vec<f64> = rows.iter().map(|r| r.friends_overlap).collect();
        let ci: Vec<f64> = rows.iter().map(|r| r.raw).collect();
        let nonzero: Vec<&PerUserRow> =
            rows.iter().filter(|r| r.friends_overlap > 0.0).collect();
        let ci_nonzero: Vec<f64> = nonzero.iter().map(|r| r.raw).collect();

        let fr_hist = histogram(&fr, 0.0, 1.0, 20);
        let ci_hist = histogram(&ci, -1.0, 1.0, 40);
        write_histogram_csv(&out_dir.join("histogram_friends_overlap.csv"), &digest, &fr_hist)?;
        written.push("histogram_friends_overlap.csv".into());
        write_histogram_csv(&out_dir.join("histogram_copy_influence.csv"), &digest, &ci_hist)?;
        written.push("histogram_copy_influence.csv".into());
        if !ci_nonzero.is_empty() {
            let h = histogram(&ci_nonzero, -1.0, 1.0, 40);
            write_histogram_csv(
                &out_dir.join("histogram_copy_influence_nonzero_fr.csv"),
                &digest,
                &h,
            )?;
            written.push("histogram_copy_influence_nonzero_fr.csv".into());
        }
        summary_txt.push_str(&format!(
            "users with non-zero friends-overlap: {}\n",
            nonzero.len()
        ));
    }

    for (name, out_name) in [
        ("susceptibility.csv", "activity_curve.csv"),
        ("sweep.csv", "m_sweep_curve.csv"),
    ] {
        let src = results.join(name);
        if src.exists() {
            std::fs::copy(&src, out_dir.join(out_name))?;
            written.push(out_name.into());
        }
    }

    std::fs::write(out_dir.join("summary.txt"), &summary_txt)?;
    written.push("summary.txt".into());
    Ok(written)
}
