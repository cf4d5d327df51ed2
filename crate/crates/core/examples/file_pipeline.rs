//! The file-based workflow behind the `dsi` binary: generate a test case,
//! run both inversion methods from its config and diagnose the result.
//!
//! `cargo run --release --example file_pipeline`

use dsi::cli::{diagnose, make_testcase, run, DiagnoseRequest, KeyValues, RunConfig, TestCase};
use dsi::testbed::DeclineSpec;

fn main() -> dsi::Result<()> {
    let dir = std::env::temp_dir().join("dsi_file_pipeline");
    let _ = std::fs::remove_dir_all(&dir);
    let spec = DeclineSpec { n_wells: 4, n_members: 200, ..DeclineSpec::default() };
    for f in make_testcase(&TestCase::Decline(spec), 8, &dir)? {
        println!("wrote {}", f.display());
    }

    for method in ["dsi_esmda", "dsi_rml"] {
        let mut kv = KeyValues::from_file(&dir.join("run.cfg"))?;
        kv.set("method", method, None)?;
        kv.set("output", dir.join(method).to_str().expect("utf-8 path"), None)?;
        // with the default anamorphosis the RML gradient ignores the transform,
        // so on this strongly non-Gaussian case samples stop on line-search failures
        kv.set("rml.samples", "100", None)?;
        let summary = run(&RunConfig::from_key_values(&kv)?)?;
        println!(
            "\n{method}: O_Nd {:.2} -> {:.3} in {:.2} s, unconverged samples {}",
            summary.prior_mismatch.mean, summary.posterior_mismatch.mean, summary.inversion_seconds, summary.unconverged_samples
        );
        for (ens, subset, c) in &summary.coverage {
            println!("  {ens:<9} {subset:<8} P10-P90 coverage {:.0}%", 100.0 * c);
        }
    }

    let report = diagnose(&DiagnoseRequest {
        layout: dir.join("layout.csv"),
        ensemble: dir.join("dsi_esmda").join("posterior.csv"),
        observations: Some(dir.join("observations.csv")),
        reference: Some(dir.join("reference.csv")),
        output: Some(dir.join("diagnose")),
    })?;
    println!("\ndiagnose wrote {} files; posterior O_Nd {:.3}", report.files.len(), report.mismatch.map_or(f64::NAN, |m| m.mean));
    Ok(())
}
