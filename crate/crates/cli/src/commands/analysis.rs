use std::path::Path;

use anyhow::Result;
use catalysis_core::stats::{collaboration_gap_analysis, mini_session_odds, ResampleOptions};
use serde::Serialize;
use serde_json::json;

use crate::args::StatsArgs;
use crate::error::usage;
use crate::output::Run;

#[derive(Serialize)]
struct KdeRow {
    group: &'static str,
    x: f64,
    density: f64,
}

pub fn stats(out: &Path, args: &StatsArgs) -> Result<()> {
    let mut run = Run::new(out, "stats")?;
    let conferences = args.conferences.iter().map(|p| run.conference(p)).collect::<Result<Vec<_>>>()?;
    if args.resamples == 0 {
        return Err(usage("--resamples must be positive"));
    }
    let seed = run.seed(args.seed);
    let opts = ResampleOptions { n_resamples: args.resamples, level: args.level, seed };
    run.config(&json!({ "resamples": args.resamples, "level": args.level }))?;

    let gap = collaboration_gap_analysis(&conferences, &opts)?;
    let odds = mini_session_odds(&conferences, &opts)?;
    run.write_json(
        "gap.json",
        &json!({
            "n_collaborating": gap.n_collaborating,
            "n_other": gap.n_other,
            "mean_collaborating": gap.mean_collaborating,
            "mean_other": gap.mean_other,
            "ratio": gap.ratio,
            "mann_whitney": gap.mann_whitney,
            "bootstrap_collaborating": gap.bootstrap_collaborating,
            "bootstrap_other": gap.bootstrap_other,
        }),
    )?;
    let kde = gap
        .kde_collaborating
        .iter()
        .map(|&(x, density)| KdeRow { group: "collaborating", x, density })
        .chain(gap.kde_other.iter().map(|&(x, density)| KdeRow { group: "other", x, density }));
    run.write_csv("kde.csv", kde)?;
    run.write_json("odds.json", &odds)?;
    run.finish()
}
