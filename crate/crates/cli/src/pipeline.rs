//! Stage orchestration and the run manifest.

use std::path::Path;
use std::time::Instant;

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::manifest::{RunManifest, StageRecord, StageStatus};
use crate::output::{digest, OutDir};
use crate::stages::{Ctx, STAGES};
use crate::validate::{input_paths, validate_inputs};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_STAGE: i32 = 3;

/// Which stages a subcommand runs, and whether it validates first.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Generate,
    Validate,
    Index,
    Fit,
    Mediate,
    Moderate,
    Iv,
    Simulate,
    Run,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Generate => "generate",
            Command::Validate => "validate",
            Command::Index => "index",
            Command::Fit => "fit",
            Command::Mediate => "mediate",
            Command::Moderate => "moderate",
            Command::Iv => "iv",
            Command::Simulate => "simulate",
            Command::Run => "run",
        }
    }

    fn stages(&self) -> &'static [&'static str] {
        match self {
            Command::Generate => &["generate"],
            Command::Validate => &[],
            Command::Index => &["index", "prepare", "trend"],
            Command::Fit => &["fit"],
            Command::Mediate => &["mediate"],
            Command::Moderate => &["moderate"],
            Command::Iv => &["iv"],
            Command::Simulate => &["simulate"],
            Command::Run => &[
                "generate", "index", "prepare", "trend", "fit", "mediate", "moderate", "iv", "simulate",
            ],
        }
    }

    fn validates(&self) -> bool {
        matches!(self, Command::Validate | Command::Index | Command::Run)
    }
}

fn enabled(cfg: &RunConfig, stage: &str) -> std::result::Result<(), String> {
    let s = &cfg.stages;
    let on = match stage {
        "generate" => {
            return if cfg.datagen.is_some() {
                Ok(())
            } else {
                Err("explicit inputs".into())
            }
        }
        "index" | "prepare" => s.index,
        "trend" => {
            if !s.trend {
                false
            } else if cfg.inputs.as_ref().is_some_and(|i| i.usage_rates.is_none()) {
                return Err("no usage_rates input".into());
            } else {
                true
            }
        }
        "fit" => s.fit,
        "mediate" => s.mediate,
        "moderate" => s.moderate,
        "iv" => s.iv,
        "simulate" => s.simulate,
        _ => true,
    };
    if on {
        Ok(())
    } else {
        Err("disabled in config".into())
    }
}

fn record(name: &str, status: StageStatus, message: Option<String>, secs: f64) -> StageRecord {
    StageRecord {
        name: name.to_string(),
        status,
        message,
        notes: Vec::new(),
        outputs: Vec::new(),
        wall_time_s: secs,
    }
}

/// Run `cmd` and write its manifest; returns the manifest and exit code.
/// Within one invocation a dependency counts as satisfied when it ran
/// successfully, or was not part of this command (its files are then
/// expected from an earlier run).
pub fn execute(cmd: Command, cfg: &RunConfig, out: &Path) -> (RunManifest, i32) {
    let start = Instant::now();
    let hash = cfg.hash();
    let mut m = RunManifest::new(cmd.name(), &hash, cfg.seed);
    let code = match execute_inner(cmd, cfg, out, &hash, &mut m) {
        Ok(()) if m.any_failed() => EXIT_STAGE,
        Ok(()) => EXIT_OK,
        Err(e) => {
            let name = if matches!(e, CliError::Config(_)) {
                "config"
            } else {
                "validate"
            };
            m.record(record(name, StageStatus::Failed, Some(e.to_string()), 0.0));
            EXIT_VALIDATION
        }
    };
    m.wall_time_s = start.elapsed().as_secs_f64();
    if let Err(e) = m.write(out) {
        eprintln!("error: cannot write manifest: {e}");
    }
    (m, code)
}

fn execute_inner(cmd: Command, cfg: &RunConfig, out: &Path, hash: &str, m: &mut RunManifest) -> Result<()> {
    cfg.check()?;
    let paths = input_paths(cfg, out);
    let mut cx = Ctx {
        cfg,
        paths,
        out: OutDir::new(out, hash),
    };
    let planned = cmd.stages();
    let mut validated = !cmd.validates();
    for &(name, deps, body) in STAGES.iter() {
        if !planned.contains(&name) {
            continue;
        }
        if !validated && name != "generate" {
            validated = true;
            run_validation(&mut cx, m)?;
        }
        if let Err(why) = enabled(cfg, name) {
            m.record(record(name, StageStatus::Disabled, Some(why), 0.0));
            continue;
        }
        let blocked = deps
            .iter()
            .find(|d| planned.contains(d) && m.status(d) != Some(StageStatus::Ok));
        if let Some(d) = blocked {
            m.record(record(
                name,
                StageStatus::Skipped,
                Some(format!("upstream stage `{d}` did not succeed")),
                0.0,
            ));
            continue;
        }
        let t = Instant::now();
        let res = body(&mut cx);
        let secs = t.elapsed().as_secs_f64();
        let outputs = cx.out.take_written();
        let mut rec = match res {
            Ok(o) => {
                let mut r = record(name, StageStatus::Ok, None, secs);
                r.notes = o.notes;
                r
            }
            Err(e) => record(name, StageStatus::Failed, Some(e.to_string()), secs),
        };
        rec.outputs = outputs;
        if name == "generate" && rec.status == StageStatus::Ok {
            rec.outputs.retain(|p| !p.starts_with("data/corpus/"));
            rec.outputs.push("data/corpus/".into());
        }
        m.record(rec);
    }
    if !validated {
        run_validation(&mut cx, m)?;
    }
    Ok(())
}

fn run_validation(cx: &mut Ctx, m: &mut RunManifest) -> Result<()> {
    for (role, p) in cx.paths.roles() {
        if let Ok(d) = digest(p) {
            m.inputs.insert(role.to_string(), d);
        }
    }
    let t = Instant::now();
    let rep = validate_inputs(cx.cfg, &cx.paths, &mut cx.out)?;
    let mut rec = record("validate", StageStatus::Ok, None, t.elapsed().as_secs_f64());
    rec.outputs = cx.out.take_written();
    rec.notes.push(format!(
        "{} household rows, {} kept, {} violations",
        rep.household_rows,
        rep.kept_rows,
        rep.violations.len()
    ));
    for (rule, n) in &rep.exclusions {
        rec.notes.push(format!("excluded ({rule}): {n}"));
    }
    if rep.passed() {
        m.record(rec);
        Ok(())
    } else {
        rec.status = StageStatus::Failed;
        rec.message = Some(rep.problems.join("; "));
        m.record(rec);
        Err(CliError::Validation(rep.problems.join("; ")))
    }
}
