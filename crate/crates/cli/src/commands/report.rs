//! `report`: merge the metrics tables of several `eval` runs into one
//! comparison, as CSV and an aligned stdout table.

use std::path::PathBuf;

use crate::config::{ConfigFile, Resolved};
use crate::exit::{data, usage, CliError};
use crate::ReportArgs;

/// One parsed `report-*.csv` row, in file order.
struct Row {
    run: String,
    fields: Vec<String>,
}

pub fn run(args: &ReportArgs) -> Result<(), CliError> {
    let file = ConfigFile::load(args.config.as_deref())?;
    let mut resolved = Resolved::default();
    let out_dir: PathBuf = resolved.resolve_path("out", args.out.clone(), &file)?;
    file.finish()?;
    if args.eval_dirs.is_empty() {
        return Err(usage("report needs at least one eval output directory".to_string()));
    }
    for (i, d) in args.eval_dirs.iter().enumerate() {
        resolved.put(&format!("eval-dir-{i}"), d.display());
    }

    let mut header: Option<String> = None;
    let mut rows: Vec<Row> = Vec::new();
    for dir in &args.eval_dirs {
        let run_name = dir
            .file_name()
            .and_then(|s| s.to_str())
            .unwrap_or("run")
            .to_string();
        let mut reports: Vec<PathBuf> = super::list_files(dir, &["csv"])?
            .into_iter()
            .filter(|p| {
                p.file_name()
                    .and_then(|s| s.to_str())
                    .is_some_and(|n| n.starts_with("report-"))
            })
            .collect();
        reports.sort();
        if reports.is_empty() {
            return Err(data(format!(
                "{} contains no report-*.csv (is it an eval output directory?)",
                dir.display()
            )));
        }
        for path in reports {
            let text = std::fs::read_to_string(&path)
                .map_err(|e| data(format!("reading {}: {e}", path.display())))?;
            let mut lines = text.lines();
            let head = lines
                .next()
                .ok_or_else(|| data(format!("{} is empty", path.display())))?;
            match &header {
                None => header = Some(head.to_string()),
                Some(h) if h == head => {}
                Some(h) => {
                    return Err(data(format!(
                        "{} has columns {head:?} but earlier reports have {h:?}; \
                         verify-1 and verify-2 reports cannot be merged",
                        path.display()
                    )))
                }
            }
            let model = path
                .file_stem()
                .and_then(|s| s.to_str())
                .and_then(|s| s.strip_prefix("report-"))
                .unwrap_or("model");
            for line in lines.filter(|l| !l.is_empty()) {
                rows.push(Row {
                    run: format!("{run_name}/{model}"),
                    fields: line.split(',').map(str::to_string).collect(),
                });
            }
        }
    }

    let header = header.expect("at least one report was read");
    let mut csv = format!("run,{header}\n");
    for r in &rows {
        csv.push_str(&format!("{},{}\n", r.run, r.fields.join(",")));
    }
    super::write_artifact(&out_dir, "comparison.csv", &csv)?;
    resolved.write(&out_dir)?;
    crate::config::log_run(&out_dir, "report", "ok");

    // Aligned stdout echo of the same table.
    let mut table: Vec<Vec<String>> = Vec::new();
    table.push(
        std::iter::once("run".to_string())
            .chain(header.split(',').map(str::to_string))
            .collect(),
    );
    for r in &rows {
        table.push(
            std::iter::once(r.run.clone())
                .chain(r.fields.iter().cloned())
                .collect(),
        );
    }
    let cols = table.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| {
            table
                .iter()
                .map(|row| row.get(c).map(|s| render(s).len()).unwrap_or(0))
                .max()
                .unwrap_or(0)
        })
        .collect();
    for row in &table {
        let mut line = String::new();
        for (c, cell) in row.iter().enumerate() {
            line.push_str(&format!("{:<width$}  ", render(cell), width = widths[c]));
        }
        println!("{}", line.trim_end());
    }
    Ok(())
}

/// Shortens long float fields for the stdout table only; the CSV keeps full
/// precision.
fn render(cell: &str) -> String {
    match cell.parse::<f64>() {
        Ok(v) if cell.contains('.') => format!("{v:.4}"),
        _ => cell.to_string(),
    }
}
