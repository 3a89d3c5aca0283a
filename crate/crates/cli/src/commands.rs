//! Subcommand bodies. Each returns its stdout text (or writes reports) and
//! leaves exit-code mapping to the caller.

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use srheat_core::heat::{fd_kernel_times, mc_kernel};
use srheat_core::nilpotent::{check_divergence_free, check_nilpotent_step};

use crate::checks::{fd_box, fd_config, hat_model, mc_config, run_check, CheckName, CheckOutcome, Table};
use crate::config::MethodName;
use crate::model::{corpus_names, load_corpus, ModelSpec};
use crate::output::{self, Manifest};
use crate::{exit, CliError, CliResult, RunConfig};

pub enum ModelSource {
    Path(PathBuf),
    Corpus(String),
}

pub fn load_model(src: &ModelSource) -> CliResult<ModelSpec> {
    match src {
        ModelSource::Corpus(name) => load_corpus(name),
        ModelSource::Path(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
            ModelSpec::from_json(&text).map_err(|e| e.context(&p.display().to_string()))
        }
    }
}

pub fn load_config(path: Option<&Path>) -> CliResult<RunConfig> {
    match path {
        None => Ok(RunConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
            RunConfig::from_json(&text).map_err(|e| e.context(&p.display().to_string()))
        }
    }
}

/// Flag data at the base point as one line of JSON.
pub fn cmd_flag(spec: &ModelSpec) -> CliResult<String> {
    Ok(serde_json::to_string(&spec.flag()?)?)
}

/// Nilpotent approximation at the base point with its structural checks.
pub fn cmd_nilpotentize(spec: &ModelSpec) -> CliResult<Value> {
    let cd = spec.chart()?;
    let (lo, hi) = spec.default_box();
    let (nil, _) = hat_model(spec, &cd, lo, hi)?;
    let div = check_divergence_free(&nil);
    let step = check_nilpotent_step(&nil)?;
    let w = &cd.chart.weights;
    let homogeneous = nil.hat_fields.iter().all(|x| x.degrees(w).iter().all(|&d| d == -1));
    Ok(json!({
        "model": spec.name,
        "flag": cd.flag,
        "identity_chart": cd.identity,
        "nilpotent": nil,
        "checks": {
            "homogeneous_degree_minus_one": homogeneous,
            "divergence_free": div.divergence_free,
            "brackets_beyond_r_vanish": step,
        },
    }))
}

/// Kernel estimates at the configured times, one table row per target.
pub fn cmd_simulate(spec: &ModelSpec, cfg: &RunConfig) -> CliResult<(Value, Table)> {
    let s = &cfg.simulate;
    let source = s.source.clone().unwrap_or_else(|| spec.base_point_f64());
    let targets = if s.targets.is_empty() { vec![source.clone()] } else { s.targets.clone() };
    let (lo, hi) = fd_box(spec, cfg);
    let model = spec.heat_model(lo.clone(), hi.clone())?;
    let ests = match s.method {
        MethodName::Fd => fd_kernel_times(&model, &s.times, &fd_config(spec, cfg), &source, &lo, &hi, &targets)?,
        MethodName::Mc => {
            let mc = mc_config(cfg, cfg.require_seed("simulate with mc")?);
            s.times
                .iter()
                .map(|&t| mc_kernel(&model, t, &source, &targets, &mc))
                .collect::<Result<Vec<_>, _>>()?
        }
    };
    let mut table = Table {
        name: "kernel".into(),
        header: ["t", "target", "value", "error"].iter().map(|s| s.to_string()).collect(),
        rows: Vec::new(),
        plot: None,
    };
    for e in &ests {
        let err = e.combined_error();
        for (k, y) in e.targets.iter().enumerate() {
            let p = y.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ");
            table.rows.push(vec![e.t.to_string(), p, e.values[k].to_string(), err[k].to_string()]);
        }
    }
    let report = json!({
        "model": spec.name,
        "model_sha256": spec.sha256(),
        "code_version": output::CODE_VERSION,
        "seed": cfg.seed,
        "method": s.method,
        "estimates": ests,
    });
    Ok((report, table))
}

/// Writes a simulate run: configuration echo, kernel report, table and
/// manifest.
pub fn write_simulate(dir: &Path, spec: &ModelSpec, cfg: &RunConfig, report: &Value, table: &Table, threads: usize, started: f64) -> CliResult<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("config.json"), cfg.to_pretty_json())?;
    fs::write(dir.join("model.json"), output::to_json(spec))?;
    fs::write(dir.join("kernel.json"), output::to_json(report))?;
    output::write_tables(dir, std::slice::from_ref(table))?;
    let manifest = Manifest {
        command: "simulate".into(),
        model: spec.name.clone(),
        model_sha256: spec.sha256(),
        code_version: output::CODE_VERSION,
        seed: cfg.seed,
        threads,
        out: dir.display().to_string(),
        started_unix: started,
        finished_unix: output::unix_seconds(),
        files: output::list_files(dir)?,
        checks: Vec::new(),
    };
    output::write_manifest(dir, &manifest)
}

pub struct VerifyRun {
    pub outcomes: Vec<CheckOutcome>,
    /// Checks that stopped with an error, with its message and exit code.
    pub errors: Vec<(CheckName, String, i32)>,
}

impl VerifyRun {
    /// 0 when everything ran and passed; the error's code when a check
    /// could not run (numerical before input); 1 when a check failed.
    pub fn exit_code(&self) -> i32 {
        if let Some(c) = self.errors.iter().map(|e| e.2).max() {
            return c;
        }
        if self.outcomes.iter().all(|o| o.pass) {
            exit::PASS
        } else {
            exit::CHECK_FAILED
        }
    }

    pub fn summary_json(&self) -> Value {
        let mut rows: Vec<Value> = self
            .outcomes
            .iter()
            .map(|o| json!({"check": o.name, "pass": o.pass, "summary": o.summary}))
            .collect();
        rows.extend(
            self.errors
                .iter()
                .map(|(n, m, c)| json!({"check": n, "pass": false, "error": m, "exit_code": c})),
        );
        json!({"checks": rows, "exit_code": self.exit_code()})
    }
}

/// Runs the checks in order, writing each report as soon as it exists so a
/// later failure keeps the earlier results.
pub fn cmd_verify(spec: &ModelSpec, cfg: &RunConfig, checks: &[CheckName], out: Option<&Path>, threads: usize) -> CliResult<VerifyRun> {
    let started = output::unix_seconds();
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("config.json"), cfg.to_pretty_json())?;
        fs::write(dir.join("model.json"), output::to_json(spec))?;
    }
    let mut run = VerifyRun {
        outcomes: Vec::new(),
        errors: Vec::new(),
    };
    for &c in checks {
        match run_check(c, spec, cfg) {
            Ok(o) => {
                if let Some(dir) = out {
                    output::write_check(dir, spec, cfg.seed, &o)?;
                }
                run.outcomes.push(o);
            }
            Err(e) => {
                let code = e.exit_code();
                run.errors.push((c, e.to_string(), code));
            }
        }
    }
    if let Some(dir) = out {
        fs::write(dir.join("summary.json"), output::to_json(&run.summary_json()))?;
        let manifest = Manifest {
            command: "verify".into(),
            model: spec.name.clone(),
            model_sha256: spec.sha256(),
            code_version: output::CODE_VERSION,
            seed: cfg.seed,
            threads,
            out: dir.display().to_string(),
            started_unix: started,
            finished_unix: output::unix_seconds(),
            files: output::list_files(dir)?,
            checks: checks.iter().map(|c| json!(c)).collect(),
        };
        output::write_manifest(dir, &manifest)?;
    }
    Ok(run)
}

pub fn cmd_corpus_list() -> CliResult<String> {
    let mut s = String::new();
    for name in corpus_names() {
        let spec = load_corpus(name)?;
        s.push_str(&format!("{name:<20} dim {}  {}\n", spec.dim, spec.description));
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn heisenberg_flag_line() {
        let spec = load_corpus("heisenberg").unwrap();
        assert_eq!(cmd_flag(&spec).unwrap(), r#"{"growth_vector":[2,3],"weights":[1,1,2],"r":2,"Q":4}"#);
    }

    #[test]
    fn nilpotentize_checks_hold_on_the_corpus() {
        for name in corpus_names() {
            let v = cmd_nilpotentize(&load_corpus(name).unwrap()).unwrap();
            for k in ["homogeneous_degree_minus_one", "divergence_free", "brackets_beyond_r_vanish"] {
                assert_eq!(v["checks"][k], json!(true), "{name} {k}");
            }
        }
    }

    #[test]
    fn exit_code_precedence() {
        let run = VerifyRun {
            outcomes: Vec::new(),
            errors: vec![(CheckName::Kac, "x".into(), exit::USAGE), (CheckName::Weyl, "y".into(), exit::NUMERICAL)],
        };
        assert_eq!(run.exit_code(), exit::NUMERICAL);
        let empty = VerifyRun {
            outcomes: Vec::new(),
            errors: Vec::new(),
        };
        assert_eq!(empty.exit_code(), exit::PASS);
    }
}
