use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DVector;

use super::config::{Method, RunConfig};
use super::io::{
    ensemble_table, layout_table, load_inputs, observations_table, read_ensemble, read_layout, read_observations,
    read_vector, vector_table, write_file, Table,
};
use crate::diagnostics::{coverage, normalized_mismatch, percentile_band, MismatchReport, PercentileBand, P10_P50_P90};
use crate::ensemble::{DataLayout, EnsembleMatrix, Observations};
use crate::error::{DsiError, Result};
use crate::esmda::run_dsi_esmda;
use crate::rml::{run_dsi_rml, SampleStatus};
use crate::testbed::{build_decline_case_with, build_linear_case, DeclineSpec, LinearDims};

pub const MANIFEST_FILE: &str = "manifest.txt";

/// What a successful run produced.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub prior_mismatch: MismatchReport,
    pub posterior_mismatch: MismatchReport,
    /// `(ensemble, subset, coverage)` rows when a reference was supplied.
    pub coverage: Vec<(String, String, f64)>,
    pub unconverged_samples: usize,
    pub inversion_seconds: f64,
    pub files: Vec<PathBuf>,
}

/// Files rendered in memory, written together so that a failure can undo
/// everything written so far.
struct Artifacts(Vec<(&'static str, Vec<u8>)>);

impl Artifacts {
    fn add(&mut self, name: &'static str, table: Table) {
        self.0.push((name, table.into_bytes()));
    }

    fn write(self, dir: &Path) -> Result<Vec<PathBuf>> {
        let created_dir = !dir.exists();
        std::fs::create_dir_all(dir).map_err(|e| DsiError::io(dir, e))?;
        let mut written = Vec::new();
        for (name, bytes) in self.0 {
            let path = dir.join(name);
            if let Err(e) = write_file(&path, &bytes) {
                for p in &written {
                    let _ = std::fs::remove_file(p);
                }
                if created_dir {
                    let _ = std::fs::remove_dir(dir);
                }
                return Err(e);
            }
            written.push(path);
        }
        Ok(written)
    }
}

fn percentile_rows(layout: &DataLayout, bands: &[(&str, &PercentileBand)]) -> Table {
    let mut header = vec!["id".to_owned(), "well".into(), "kind".into(), "time".into(), "is_history".into()];
    for (name, _) in bands {
        for p in ["p10", "p50", "p90"] {
            header.push(if name.is_empty() { p.to_owned() } else { format!("{name}_{p}") });
        }
    }
    let mut t = Table::new(&header.iter().map(String::as_str).collect::<Vec<_>>());
    for (i, e) in layout.elements().iter().enumerate() {
        let mut row = vec![e.id.clone(), e.well_id.clone(), e.kind.as_str().into(), e.time.to_string(), e.is_history.to_string()];
        for (_, b) in bands {
            row.extend(b.values.row(i).iter().map(f64::to_string));
        }
        t.row(row);
    }
    t
}

fn mismatch_table(reports: &[(&str, &MismatchReport)]) -> Table {
    let mut t = Table::new(&["ensemble", "mean", "std"]);
    for (name, r) in reports {
        t.row([name.to_string(), format!("{:.6}", r.mean), format!("{:.6}", r.std)]);
    }
    t
}

fn member_mismatch_table(reports: &[(&str, &MismatchReport)]) -> Table {
    let mut header = vec!["member"];
    header.extend(reports.iter().map(|(n, _)| *n));
    let mut t = Table::new(&header);
    let n = reports.iter().map(|(_, r)| r.per_member.len()).max().unwrap_or(0);
    for j in 0..n {
        let mut row = vec![super::io::member_name(j)];
        row.extend(reports.iter().map(|(_, r)| r.per_member.get(j).map(f64::to_string).unwrap_or_default()));
        t.row(row);
    }
    t
}

fn coverage_rows(name: &str, ens: &EnsembleMatrix, reference: &DVector<f64>) -> Result<Vec<(String, String, f64)>> {
    let layout = ens.layout();
    let mut out = vec![(name.to_owned(), "all".to_owned(), coverage(ens, reference, 0.1, 0.9)?)];
    for (subset, rows) in [("history", layout.history_indices()), ("forecast", layout.forecast_indices())] {
        if rows.is_empty() {
            continue;
        }
        let sub = ens.select_rows(rows)?;
        let r = DVector::from_iterator(rows.len(), rows.iter().map(|&i| reference[i]));
        out.push((name.to_owned(), subset.to_owned(), coverage(&sub, &r, 0.1, 0.9)?));
    }
    Ok(out)
}

fn coverage_table(rows: &[(String, String, f64)]) -> Table {
    let mut t = Table::new(&["ensemble", "subset", "p10_p90_coverage"]);
    for (e, s, c) in rows {
        t.row([e.clone(), s.clone(), format!("{c:.6}")]);
    }
    t
}

fn convergence_table(samples: &[SampleStatus]) -> Table {
    let mut t = Table::new(&["sample", "termination", "converged", "grad_norm", "iterations", "objective"]);
    for s in samples {
        t.row([
            s.sample.to_string(),
            s.termination.as_str().into(),
            s.converged.to_string(),
            s.grad_norm.to_string(),
            s.iterations.to_string(),
            s.objective.to_string(),
        ]);
    }
    t
}

/// Loads the inputs, runs the configured inversion and writes all artifacts.
pub fn run(cfg: &RunConfig) -> Result<RunSummary> {
    let (layout, prior, obs) = load_inputs(&cfg.layout, &cfg.ensemble, &cfg.observations)?;
    let reference = cfg.reference.as_deref().map(|p| read_vector(p, &layout)).transpose()?;

    let start = Instant::now();
    let (posterior, samples) = match cfg.method {
        Method::DsiEsmda => (run_dsi_esmda(&prior, &obs, &cfg.esmda)?, Vec::new()),
        Method::DsiRml => {
            let out = run_dsi_rml(&prior, &obs, &cfg.rml)?;
            (out.posterior, out.samples)
        }
    };
    let inversion_seconds = start.elapsed().as_secs_f64();

    let prior_mismatch = normalized_mismatch(&prior, &obs)?;
    let posterior_mismatch = normalized_mismatch(&posterior, &obs)?;
    let mut cov = Vec::new();
    if let Some(r) = &reference {
        cov.extend(coverage_rows("prior", &prior, r)?);
        cov.extend(coverage_rows("posterior", &posterior, r)?);
    }

    let mut art = Artifacts(Vec::new());
    if cfg.emit.posterior {
        art.add("posterior.csv", ensemble_table(&posterior));
    }
    if cfg.emit.percentiles {
        let pb = percentile_band(&prior, &P10_P50_P90)?;
        let qb = percentile_band(&posterior, &P10_P50_P90)?;
        art.add("percentiles.csv", percentile_rows(&layout, &[("prior", &pb), ("posterior", &qb)]));
    }
    if cfg.emit.mismatch {
        let reports = [("prior", &prior_mismatch), ("posterior", &posterior_mismatch)];
        art.add("mismatch.csv", mismatch_table(&reports));
        art.add("mismatch_members.csv", member_mismatch_table(&reports));
    }
    if cfg.emit.coverage && !cov.is_empty() {
        art.add("coverage.csv", coverage_table(&cov));
    }
    if !samples.is_empty() {
        art.add("rml_convergence.csv", convergence_table(&samples));
    }
    let unconverged_samples = samples.iter().filter(|s| !s.converged).count();
    let comments = vec![
        "dsi run manifest; rerun with: dsi run --config <this file>".to_owned(),
        format!("inversion_wall_clock_seconds = {inversion_seconds:.6}"),
    ];
    art.0.push((MANIFEST_FILE, cfg.manifest(&comments).into_bytes()));
    let files = art.write(&cfg.output)?;

    Ok(RunSummary {
        prior_mismatch,
        posterior_mismatch,
        coverage: cov,
        unconverged_samples,
        inversion_seconds,
        files,
    })
}

/// Inputs of the `diagnose` subcommand.
#[derive(Debug, Clone, Default)]
pub struct DiagnoseRequest {
    pub layout: PathBuf,
    pub ensemble: PathBuf,
    pub observations: Option<PathBuf>,
    pub reference: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct DiagnoseSummary {
    pub mismatch: Option<MismatchReport>,
    pub coverage: Vec<(String, String, f64)>,
    pub files: Vec<PathBuf>,
}

/// Mismatch, percentiles and coverage of an existing ensemble.
pub fn diagnose(req: &DiagnoseRequest) -> Result<DiagnoseSummary> {
    let layout = std::sync::Arc::new(read_layout(&req.layout)?);
    let ens = read_ensemble(&req.ensemble, layout.clone())?;
    let mismatch = req
        .observations
        .as_deref()
        .map(|p| read_observations(p, &layout).and_then(|o| normalized_mismatch(&ens, &o)))
        .transpose()?;
    let coverage = match req.reference.as_deref() {
        Some(p) => coverage_rows("ensemble", &ens, &read_vector(p, &layout)?)?,
        None => Vec::new(),
    };
    let mut files = Vec::new();
    if let Some(dir) = &req.output {
        let mut art = Artifacts(Vec::new());
        art.add("percentiles.csv", percentile_rows(&layout, &[("", &percentile_band(&ens, &P10_P50_P90)?)]));
        if let Some(m) = &mismatch {
            art.add("mismatch.csv", mismatch_table(&[("ensemble", m)]));
            art.add("mismatch_members.csv", member_mismatch_table(&[("ensemble", m)]));
        }
        if !coverage.is_empty() {
            art.add("coverage.csv", coverage_table(&coverage));
        }
        files = art.write(dir)?;
    }
    Ok(DiagnoseSummary { mismatch, coverage, files })
}

/// Testbed case to export.
#[derive(Debug, Clone, PartialEq)]
pub enum TestCase {
    Linear(LinearDims),
    Decline(DeclineSpec),
}

/// Writes `layout.csv`, `ensemble.csv`, `observations.csv`, a ready-to-use
/// `run.cfg` and the case's oracle (`reference.csv` for the decline case,
/// `posterior_mean.csv` and `posterior_var.csv` for the linear one).
pub fn make_testcase(case: &TestCase, seed: u64, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut art = Artifacts(Vec::new());
    let (prior, obs): (EnsembleMatrix, Observations) = match case {
        TestCase::Linear(dims) => {
            let (prior, obs, lin) = build_linear_case(*dims, seed)?;
            let layout = prior.layout();
            art.add("posterior_mean.csv", vector_table(layout, &lin.posterior_mean));
            art.add("posterior_var.csv", vector_table(layout, &lin.posterior_cov.diagonal()));
            (prior, obs)
        }
        TestCase::Decline(spec) => {
            let c = build_decline_case_with(&DeclineSpec { seed, ..spec.clone() })?;
            art.add("reference.csv", vector_table(c.layout(), &c.reference));
            (c.prior, c.observations)
        }
    };
    art.add("layout.csv", layout_table(prior.layout()));
    art.add("ensemble.csv", ensemble_table(&prior));
    art.add("observations.csv", observations_table(prior.layout(), &obs));
    let mut cfg = format!(
        "# generated test case\nmethod=dsi_esmda\nlayout=layout.csv\nensemble=ensemble.csv\nobservations=observations.csv\noutput=out\nseed={seed}\n"
    );
    if matches!(case, TestCase::Decline(_)) {
        cfg.push_str("reference=reference.csv\n");
    }
    art.0.push(("run.cfg", cfg.into_bytes()));
    art.write(dir)
}
