use std::ffi::OsString;
use std::path::PathBuf;

use clap::{value_parser, Arg, ArgAction, ArgMatches, Command};

use super::config::{KeyValues, RunConfig, RUN_KEYS};
use super::pipeline::{diagnose, make_testcase, run, DiagnoseRequest, TestCase};
use crate::error::{DsiError, Result};
use crate::testbed::{DeclineSpec, LinearDims, ReferenceDraw};

pub fn command() -> Command {
    let run_cmd = RUN_KEYS.iter().fold(
        Command::new("run")
            .about("Invert a prior ensemble against observed history")
            .arg(Arg::new("config").long("config").short('c').value_parser(value_parser!(PathBuf)).help("key=value config file")),
        |cmd, k| cmd.arg(Arg::new(k.name).long(k.name).value_name("VALUE").help(k.help)),
    );
    let make = Command::new("make-testcase")
        .about("Write a synthetic test case in the input file formats")
        .arg(Arg::new("case").long("case").required(true).value_parser(["linear", "decline"]))
        .arg(Arg::new("output").long("output").short('o').required(true).value_parser(value_parser!(PathBuf)))
        .arg(Arg::new("seed").long("seed").default_value("0").value_parser(value_parser!(u64)))
        .arg(Arg::new("members").long("members").default_value("200").value_parser(value_parser!(usize)))
        .arg(Arg::new("history").long("history").default_value("20").value_parser(value_parser!(usize)).help("linear: history elements"))
        .arg(Arg::new("forecast").long("forecast").default_value("40").value_parser(value_parser!(usize)).help("linear: forecast elements"))
        .arg(Arg::new("wells").long("wells").default_value("4").value_parser(value_parser!(usize)).help("decline: producers"))
        .arg(Arg::new("steps").long("steps").default_value("36").value_parser(value_parser!(usize)).help("decline: monthly reports"))
        .arg(Arg::new("cut").long("cut").default_value("18").value_parser(value_parser!(usize)).help("decline: history reports"))
        .arg(Arg::new("noise").long("noise").default_value("0.1").value_parser(value_parser!(f64)).help("decline: noise fraction"))
        .arg(
            Arg::new("biased-z")
                .long("biased-z")
                .value_parser(value_parser!(f64))
                .help("decline: place the reference at this prior z-score (2.326 for the 99th percentile)"),
        );
    let diag = Command::new("diagnose")
        .about("Mismatch, percentiles and coverage of an existing ensemble")
        .arg(Arg::new("layout").long("layout").required(true).value_parser(value_parser!(PathBuf)))
        .arg(Arg::new("ensemble").long("ensemble").required(true).value_parser(value_parser!(PathBuf)))
        .arg(Arg::new("observations").long("observations").value_parser(value_parser!(PathBuf)))
        .arg(Arg::new("reference").long("reference").value_parser(value_parser!(PathBuf)))
        .arg(Arg::new("output").long("output").short('o').value_parser(value_parser!(PathBuf)));
    Command::new("dsi")
        .about("Data-space inversion of production forecasts")
        .version(env!("CARGO_PKG_VERSION"))
        .subcommand_required(true)
        .arg_required_else_help(true)
        .arg(Arg::new("quiet").long("quiet").short('q').action(ArgAction::SetTrue).global(true))
        .subcommands([run_cmd, make, diag])
}

fn run_config(m: &ArgMatches) -> Result<RunConfig> {
    let mut kv = match m.get_one::<PathBuf>("config") {
        Some(p) => KeyValues::from_file(p)?,
        None => KeyValues::new(),
    };
    let mut flags = KeyValues::new();
    for k in RUN_KEYS {
        if let Some(v) = m.get_one::<String>(k.name) {
            flags.set(k.name, v, None)?;
        }
    }
    kv.merge(flags);
    RunConfig::from_key_values(&kv)
}

fn dispatch(m: &ArgMatches) -> Result<()> {
    let quiet = m.get_flag("quiet");
    let say = |s: String| {
        if !quiet {
            println!("{s}");
        }
    };
    match m.subcommand() {
        Some(("run", sub)) => {
            let cfg = run_config(sub)?;
            let s = run(&cfg)?;
            say(format!("{:<10} {:>12} {:>12}", "ensemble", "O_Nd mean", "O_Nd std"));
            for (n, r) in [("prior", &s.prior_mismatch), ("posterior", &s.posterior_mismatch)] {
                say(format!("{n:<10} {:>12.4} {:>12.4}", r.mean, r.std));
            }
            for (e, sub, c) in &s.coverage {
                say(format!("coverage {e} {sub}: {c:.3}"));
            }
            if s.unconverged_samples > 0 {
                eprintln!("warning: {} RML sample(s) did not converge; see rml_convergence.csv", s.unconverged_samples);
            }
            say(format!("inversion took {:.3} s; wrote {} file(s) to {}", s.inversion_seconds, s.files.len(), cfg.output.display()));
        }
        Some(("make-testcase", sub)) => {
            let get = |k: &str| *sub.get_one::<usize>(k).expect("defaulted");
            let case = match sub.get_one::<String>("case").map(String::as_str) {
                Some("linear") => TestCase::Linear(LinearDims {
                    n_history: get("history"),
                    n_forecast: get("forecast"),
                    n_members: get("members"),
                }),
                _ => TestCase::Decline(DeclineSpec {
                    n_wells: get("wells"),
                    n_members: get("members"),
                    n_steps: get("steps"),
                    history_cut: get("cut"),
                    noise_frac: *sub.get_one::<f64>("noise").expect("defaulted"),
                    reference: match sub.get_one::<f64>("biased-z") {
                        Some(&z) => ReferenceDraw::Biased { z },
                        None => ReferenceDraw::FromPrior,
                    },
                    ..DeclineSpec::default()
                }),
            };
            let dir = sub.get_one::<PathBuf>("output").expect("required");
            let files = make_testcase(&case, *sub.get_one::<u64>("seed").expect("defaulted"), dir)?;
            say(format!("wrote {} file(s) to {}", files.len(), dir.display()));
        }
        Some(("diagnose", sub)) => {
            let path = |k: &str| sub.get_one::<PathBuf>(k).cloned();
            let req = DiagnoseRequest {
                layout: path("layout").expect("required"),
                ensemble: path("ensemble").expect("required"),
                observations: path("observations"),
                reference: path("reference"),
                output: path("output"),
            };
            let s = diagnose(&req)?;
            if let Some(r) = &s.mismatch {
                say(format!("O_Nd mean {:.4} std {:.4}", r.mean, r.std));
            }
            for (_, sub, c) in &s.coverage {
                say(format!("coverage {sub}: {c:.3}"));
            }
        }
        _ => return Err(DsiError::Config("unknown subcommand".into())),
    }
    Ok(())
}

/// Parses `args` (including the program name), runs the subcommand and
/// returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = match command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(&matches) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn command_definition_is_consistent() {
        command().debug_assert();
    }

    #[test]
    fn bad_flag_is_config_error() {
        assert_eq!(main_with_args(["dsi", "run", "--esmda.bogus", "1"]), 2);
        assert_eq!(main_with_args(["dsi", "run", "--esmda.na", "x"]), 2);
    }
}
