use std::path::PathBuf;

use clap::Args;
use rgb2point::metrics::MetricReport;
use rgb2point::{Error, Result};
use serde::Serialize;

use crate::report::{compare, Baselines, Ours};

#[derive(Debug, Args, Serialize)]
pub struct ReportArgs {
    /// Baseline tables to compare against (table1, table2, table3)
    #[arg(long, value_delimiter = ',', default_value = "table1,table2,table3")]
    pub tables: Vec<String>,
    /// report.json written by `eval`; omit to use the published values
    #[arg(long)]
    pub results: Option<PathBuf>,
    /// Baseline constants; defaults to the bundled file
    #[arg(long)]
    pub baselines: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: ReportArgs) -> Result<()> {
    let baselines = match &args.baselines {
        Some(p) => Baselines::load(p)?,
        None => Baselines::bundled(),
    };
    let results: Option<MetricReport> = args.results.as_deref().map(super::read_json).transpose()?;
    let ours = match &results {
        Some(r) => Ours::Results(r),
        None => Ours::Published,
    };
    if args.tables.is_empty() {
        return Err(Error::InvalidConfig("no tables requested".into()));
    }
    super::create_dir(&args.out)?;
    super::write_json(&args.out.join("report_config.json"), &args)?;
    for name in &args.tables {
        let table = compare(&baselines, name, ours)?;
        let text = table.to_text();
        super::write_text(&args.out.join(format!("{name}.txt")), &text)?;
        super::write_json(&args.out.join(format!("{name}.json")), &table)?;
        eprintln!("{text}");
    }
    Ok(())
}
