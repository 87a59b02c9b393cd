use std::path::Path;

use anyhow::Result;
use catalysis_core::conference::eligible_pairs;
use catalysis_core::interaction::ScheduleIndex;
use catalysis_core::synth::{generate, SynthSpec, Truth};
use serde::Serialize;

use crate::args::{ConferenceArg, SynthArgs};
use crate::model_file::ModelSpec;
use crate::output::Run;

pub fn synth(out: &Path, args: &SynthArgs) -> Result<()> {
    let mut run = Run::new(out, "synth")?;
    let mut spec: SynthSpec = match &args.spec {
        Some(path) => run.json(path)?,
        None => SynthSpec::default(),
    };
    if let Some(n) = args.fellows {
        spec.n_fellows = n;
    }
    if let Some(n) = args.facilitators {
        spec.n_facilitators = n;
    }
    if let Some(n) = args.discussion_sessions {
        spec.n_discussion_sessions = n;
    }
    if let Some(n) = args.small_group_sessions {
        spec.n_small_group_sessions = n;
    }
    if let Some(path) = &args.truth {
        let text = run.read(path)?;
        let truth = ModelSpec::from_json(&text)?;
        spec.truth = Truth { model: truth.model, params: truth.params };
    }
    let from_file = args.spec.is_some().then_some(spec.seed);
    spec.seed = run.seed(args.seed.or(from_file));
    run.config(&spec)?;

    let conference = generate(&spec)?;
    let mut text = conference.to_json();
    text.push('\n');
    run.write_text("conference.json", &text)?;
    run.write_json("truth.json", &spec.truth)?;
    run.finish()
}

#[derive(Serialize)]
struct InteractionRow {
    pair_id: String,
    k0: u8,
    i_tot: f64,
    collaborated: bool,
}

pub fn interactions(out: &Path, args: &ConferenceArg) -> Result<()> {
    let mut run = Run::new(out, "interactions")?;
    let c = run.conference(&args.conference)?;
    let index = ScheduleIndex::new(&c);
    let rows = eligible_pairs(&c)
        .into_iter()
        .map(|o| {
            Ok(InteractionRow {
                i_tot: index.total_effective_interaction(&o.pair)?,
                pair_id: o.pair.to_string(),
                k0: o.k0,
                collaborated: o.collaborated,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    run.write_csv("interactions.csv", rows)?;
    run.finish()
}
