//! Argument parsing and the run/replay drivers.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::parser::ValueSource;
use clap::{Arg, ArgAction, ArgMatches, Command};

use crate::commands::{self, Experiment, Runtime, COMMON_KEYS};
use crate::config::{config_error, load_config_file, ConfigError, Settings};
use crate::output::{RunManifest, Stage, MANIFEST_NAME};

pub const TOOL: &str = "bfl";

fn value_arg(key: &'static str, help: &'static str) -> Arg {
    let arg = Arg::new(key).long(key).help(help);
    match key {
        "plot" => arg.action(ArgAction::SetTrue),
        "threads" => arg.value_name("COUNT").env("BFL_THREADS"),
        _ => arg.value_name("VALUE"),
    }
}

pub fn build() -> Command {
    let mut cmd = Command::new(TOOL)
        .version(env!("CARGO_PKG_VERSION"))
        .about("Experiments on the (N,a)-exponential branching-selection model")
        .subcommand_required(true);
    for exp in Experiment::ALL {
        let mut sub = Command::new(exp.name()).about(exp.about()).arg(
            Arg::new("config")
                .long("config")
                .value_name("FILE")
                .help("key=value settings file; flags take precedence"),
        );
        for (k, help) in COMMON_KEYS.iter().chain(exp.own_keys()) {
            sub = sub.arg(value_arg(k, help));
        }
        cmd = cmd.subcommand(sub);
    }
    cmd.subcommand(
        Command::new("replay")
            .about("re-run a manifest and compare checksums")
            .arg(Arg::new("manifest").long("manifest").value_name("FILE").required(true))
            .arg(Arg::new("out-dir").long("out-dir").value_name("DIR"))
            .arg(value_arg("threads", "worker threads")),
    )
}

/// Values set on the command line, and values taken from the environment.
fn explicit_values(m: &ArgMatches) -> (BTreeMap<String, String>, BTreeMap<String, String>) {
    let mut flags = BTreeMap::new();
    let mut env = BTreeMap::new();
    for id in m.ids() {
        let key = id.as_str();
        if key == "config" {
            continue;
        }
        let Some(raw) = m.get_raw(key) else { continue };
        let joined = raw.map(|v| v.to_string_lossy().into_owned()).collect::<Vec<_>>().join(",");
        match m.value_source(key) {
            Some(ValueSource::CommandLine) => {
                flags.insert(key.to_string(), joined);
            }
            Some(ValueSource::EnvVariable) => {
                env.insert(key.to_string(), joined);
            }
            _ => {}
        }
    }
    (flags, env)
}

fn thread_count(settings: &Settings) -> anyhow::Result<usize> {
    match settings.get_opt::<usize>("threads")? {
        Some(0) => Err(config_error("`threads` must be >= 1")),
        Some(t) => Ok(t),
        None => Ok(std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)),
    }
}

pub struct RunOutcome {
    pub out_dir: PathBuf,
    pub manifest: RunManifest,
    pub summary: Vec<String>,
}

/// Validates, runs and writes one experiment.
pub fn execute(exp: Experiment, settings: &Settings, out_dir: &Path) -> anyhow::Result<RunOutcome> {
    let started_at = chrono::Utc::now().to_rfc3339();
    let job = commands::prepare(exp, settings)?;
    let threads = thread_count(settings)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .context("starting worker pool")?;
    let seed: u64 = settings.get("seed")?;
    let rt = Runtime {
        seed,
        replicas: settings.get("replicas")?,
        pool,
    };
    let plot = settings.flag("plot")?;

    let mut stage = Stage::new(out_dir)?;
    let report = commands::run(&job, &rt)?;
    for (table, chart) in &report.outputs {
        stage.write(&table.name, table.to_csv().as_bytes())?;
        if let (true, Some(chart)) = (plot, chart) {
            let svg_name = table.name.trim_end_matches(".csv").to_string() + ".svg";
            stage.write(&svg_name, chart.render().as_bytes())?;
        }
    }
    let mut config = settings.as_map().clone();
    config.remove("threads");
    let manifest = RunManifest {
        tool: TOOL.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: exp.name().into(),
        seed,
        config,
        started_at,
        finished_at: chrono::Utc::now().to_rfc3339(),
        files: stage.checksums().clone(),
    };
    stage.commit(&manifest)?;
    Ok(RunOutcome {
        out_dir: out_dir.to_path_buf(),
        manifest,
        summary: report.summary,
    })
}

fn replay(m: &ArgMatches) -> anyhow::Result<()> {
    let path = PathBuf::from(m.get_one::<String>("manifest").expect("required"));
    let manifest = RunManifest::load(&path)?;
    let exp = Experiment::from_name(&manifest.command)
        .ok_or_else(|| config_error(format!("manifest names unknown command `{}`", manifest.command)))?;
    let out_dir = match m.get_one::<String>("out-dir") {
        Some(d) => PathBuf::from(d),
        None => path.parent().unwrap_or(Path::new(".")).join("replay"),
    };
    let mut settings = Settings::from_map(manifest.config.clone());
    if let Some(t) = m.get_one::<String>("threads") {
        settings.insert("threads", t.clone());
    }
    settings.insert("out-dir", out_dir.to_string_lossy().into_owned());
    if out_dir.join(MANIFEST_NAME).exists() {
        return Err(config_error(format!("{} already holds a run", out_dir.display())));
    }
    let outcome = execute(exp, &settings, &out_dir)?;
    let mut mismatched = Vec::new();
    for (name, sum) in &manifest.files {
        if outcome.manifest.files.get(name) != Some(sum) {
            mismatched.push(name.clone());
        }
    }
    if mismatched.is_empty() {
        println!(
            "replay of {}: {} files bit-identical in {}",
            path.display(),
            manifest.files.len(),
            out_dir.display()
        );
        Ok(())
    } else {
        Err(anyhow::anyhow!("replay differs in: {}", mismatched.join(", ")))
    }
}

/// Parses `args` and runs the selected command.
pub fn run<I, T>(args: I) -> anyhow::Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = match build().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            if matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            ) {
                print!("{e}");
                return Ok(());
            }
            let text = e.to_string();
            let text = text.trim_end().trim_start_matches("error: ");
            return Err(ConfigError(text.to_string()).into());
        }
    };
    let (name, sub) = matches.subcommand().expect("subcommand required");
    if name == "replay" {
        return replay(sub);
    }
    let exp = Experiment::from_name(name).expect("registered subcommand");
    let file = match sub.get_one::<String>("config") {
        Some(p) => load_config_file(Path::new(p))?,
        None => BTreeMap::new(),
    };
    let (flags, env) = explicit_values(sub);
    let settings = Settings::resolve(&exp.known_keys(), &[&exp.defaults(), &env, &file, &flags])?;
    let out_dir = PathBuf::from(settings.get::<String>("out-dir")?);
    let outcome = execute(exp, &settings, &out_dir)?;
    for line in &outcome.summary {
        println!("{line}");
    }
    println!(
        "wrote {} files and {MANIFEST_NAME} to {}",
        outcome.manifest.files.len(),
        outcome.out_dir.display()
    );
    Ok(())
}

/// Exit status for a failed run: 2 invalid configuration, 3 numerical
/// failure, 4 I/O, 1 anything else.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<bfl_core::Error>() {
            return match e {
                bfl_core::Error::Quadrature { .. } => 3,
                _ => 2,
            };
        }
        if cause.is::<ConfigError>() {
            return 2;
        }
        if cause.is::<std::io::Error>() {
            return 4;
        }
    }
    1
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parser_is_well_formed() {
        build().debug_assert();
    }

    #[test]
    fn exit_codes() {
        let quad: anyhow::Error = bfl_core::Error::Quadrature {
            lower: 0.0,
            upper: 1.0,
            estimate: 0.0,
            error: 1.0,
            subdivisions: 3,
        }
        .into();
        assert_eq!(exit_code(&quad), 3);
        assert_eq!(exit_code(&config_error("bad")), 2);
        let io: anyhow::Error = std::io::Error::other("disk").into();
        assert_eq!(exit_code(&io.context("writing")), 4);
        assert_eq!(exit_code(&anyhow::anyhow!("other")), 1);
    }

    #[test]
    fn flags_are_collected() {
        let m = build()
            .try_get_matches_from(["bfl", "front", "--N", "10", "--plot", "--seed", "7"])
            .unwrap();
        let (_, sub) = m.subcommand().unwrap();
        let (flags, _) = explicit_values(sub);
        assert_eq!(flags["N"], "10");
        assert_eq!(flags["plot"], "true");
        assert_eq!(flags["seed"], "7");
        assert!(!flags.contains_key("a"));
    }
}
