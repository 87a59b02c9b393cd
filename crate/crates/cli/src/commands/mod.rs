mod analysis;
mod data;
mod fit;
mod model;
mod schedule;

use anyhow::Result;
use clap::CommandFactory;

use crate::args::{Cli, Command};

pub fn run(cli: &Cli) -> Result<()> {
    let out = cli.out.as_path();
    match &cli.command {
        Command::Synth(a) => data::synth(out, a),
        Command::Interactions(a) => data::interactions(out, a),
        Command::Simulate(a) => model::simulate(out, a),
        Command::Potential(a) => model::potential(out, a),
        Command::Fit(a) => fit::fit(out, a),
        Command::Select(a) => fit::select(out, a),
        Command::Curve(a) => fit::curve(out, a),
        Command::Stats(a) => analysis::stats(out, a),
        Command::Anneal(a) => schedule::anneal(out, a),
        Command::Counterfactual(a) => schedule::counterfactual(out, a),
        Command::Reference => {
            print!("{}", reference());
            Ok(())
        }
    }
}

/// Markdown reference built from the help text of every visible subcommand.
pub fn reference() -> String {
    let mut root = Cli::command().term_width(100);
    root.build();
    let mut text = String::from("# Command reference\n\nGenerated by `catalysis reference`.\n\n");
    text.push_str(&format!("```text\n{}\n```\n", root.render_long_help().to_string().trim_end()));
    for sub in root.get_subcommands_mut() {
        if sub.is_hide_set() || sub.get_name() == "help" {
            continue;
        }
        let name = sub.get_name().to_string();
        let help = sub.render_long_help().to_string();
        text.push_str(&format!("\n## {name}\n\n```text\n{}\n```\n", help.trim_end()));
    }
    text.lines().map(|l| format!("{}\n", l.trim_end())).collect()
}
