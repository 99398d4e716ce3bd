//! The `loft` command-line pipeline.
//!
//! Every subcommand is a plain function over its parsed arguments, so the
//! same code paths can be driven in-process (see [`run`]).

use std::fmt;
use std::io::Write;

pub mod args;
pub mod commands;
pub mod error;
pub mod report;

pub use args::{Cli, Command};
pub use error::{CliError, CliResult};
pub use report::RunReport;

/// Where a command writes its human-readable output and warnings.
pub struct Console<'a> {
    pub out: &'a mut dyn Write,
    pub err: &'a mut dyn Write,
}

impl<'a> Console<'a> {
    pub fn new(out: &'a mut dyn Write, err: &'a mut dyn Write) -> Self {
        Console { out, err }
    }

    pub fn say(&mut self, text: impl fmt::Display) -> CliResult<()> {
        writeln!(self.out, "{text}").map_err(|e| CliError::io("writing output", e))
    }

    pub fn warn(&mut self, text: impl fmt::Display) -> CliResult<()> {
        writeln!(self.err, "warning: {text}").map_err(|e| CliError::io("writing output", e))
    }
}

/// Dispatches a parsed command line.
pub fn run(cli: &Cli, console: &mut Console) -> CliResult<()> {
    match &cli.command {
        Command::Cov(a) => commands::cov(a, console).map(drop),
        Command::Fit(a) => commands::fit(a, console).map(drop),
        Command::Analyze(a) => commands::analyze(a, console),
        Command::Eval(a) => commands::eval(a, console).map(drop),
        Command::Absorb(a) => commands::absorb(a, console).map(drop),
        Command::Probe(a) => commands::probe(a, console).map(drop),
        Command::Synth(a) => commands::synth(a, console),
    }
}
