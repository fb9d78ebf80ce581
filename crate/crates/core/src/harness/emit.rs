use std::fs;
use std::path::{Path, PathBuf};

use super::config::{Experiment, ExperimentConfig};
use super::table::Summary;
use super::ExperimentOutput;
use crate::error::Result;

/// Files an experiment writes, in emission order.
pub fn declared_files(cfg: &ExperimentConfig) -> Vec<String> {
    let mut names = vec!["results.csv".to_string(), "summary.csv".to_string(), "run.toml".to_string()];
    let extra: Vec<String> = match cfg.experiment {
        Experiment::MseSample => (0..cfg.grid.t.len()).map(|i| format!("heatmap_t{i}.svg")).collect(),
        Experiment::MseIter => vec!["decay.svg".into()],
        Experiment::DimSweep => vec!["sweep.svg".into()],
        Experiment::EpsSearch => vec!["epsilon.svg".into()],
        Experiment::Distill => ["loss.csv", "model.sbnn", "trajectories.csv", "endpoints.svg"].map(String::from).to_vec(),
        Experiment::Simulate => {
            let mut v: Vec<String> = ["trajectories.csv", "trajectories.bin", "field.csv"].map(String::from).to_vec();
            if cfg.data.source.dim() >= 2 {
                v.push("endpoints.svg".into());
            }
            v
        }
    };
    names.extend(extra);
    names
}

/// Summary entries followed by one `pass:<check>` row per check.
pub fn summary_with_checks(output: &ExperimentOutput) -> Summary {
    let mut s = output.summary.clone();
    for c in &output.checks {
        s.push(format!("pass:{}", c.name), if c.passed { 1.0 } else { 0.0 });
    }
    s
}

/// Writes every declared file into `dir` (created if missing). CSV and SVG
/// bytes depend only on the output; `run.toml` also records wall time.
pub fn emit_outputs(output: &ExperimentOutput, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut put = |name: &str, bytes: &[u8]| -> Result<()> {
        let p = dir.join(name);
        fs::write(&p, bytes)?;
        written.push(p);
        Ok(())
    };
    put("results.csv", output.table.to_csv_string().as_bytes())?;
    let mut summary = Vec::new();
    summary_with_checks(output).write_csv(&mut summary)?;
    put("summary.csv", &summary)?;
    put("run.toml", run_metadata(output)?.as_bytes())?;
    for (name, bytes) in &output.files {
        put(name, bytes)?;
    }
    Ok(written)
}

fn run_metadata(output: &ExperimentOutput) -> Result<String> {
    let mut text = format!(
        "run_id = \"{}\"\nseed = {}\nwall_time_s = {}\nthreads = {}\n\n[config]\n",
        output.table.run_id,
        output.config.seed,
        output.wall_time_s,
        rayon::current_num_threads()
    );
    // nest the resolved configuration under [config]
    let cfg = output.config.to_toml()?;
    for line in cfg.lines() {
        match line.strip_prefix('[') {
            Some(name) => text.push_str(&format!("[config.{name}\n")),
            None => {
                text.push_str(line);
                text.push('\n');
            }
        }
    }
    Ok(text)
}

/// Human-readable description of the work a config resolves to.
pub fn describe_grid(cfg: &ExperimentConfig) -> String {
    let mut s = format!("experiment: {}\nseed: {}\nepsilon: {}\ntrials: {}\n", cfg.experiment, cfg.seed, cfg.epsilon, cfg.trials);
    match cfg.experiment {
        Experiment::MseSample => {
            s += &format!("cells (m, n): {:?}\nt: {:?}\nprobes per norm: {}\n", cfg.grid.cells(), cfg.grid.t, cfg.mc_points);
        }
        Experiment::MseIter => {
            s += &format!(
                "m = {}, n = {}\nk: {:?}\ntau: {:?}\ntime samples: {} x {} probes\n",
                cfg.grid.m[0], cfg.grid.n[0], cfg.grid.k, cfg.grid.tau, cfg.integration.time_samples, cfg.integration.probes_per_time
            );
        }
        Experiment::DimSweep => {
            let big = cfg.reference_size.unwrap_or(10 * cfg.grid.m.iter().copied().max().unwrap_or(1));
            s += &format!(
                "d = {}\nd_nu: {:?}\nm: {:?}\nreference size: {big}\ntau: {}\n",
                cfg.dims.d, cfg.dims.intrinsic, cfg.grid.m, cfg.grid.tau[0]
            );
        }
        Experiment::EpsSearch => {
            s += &format!(
                "m: {:?}\nt: {:?}\ndelta: {}\nlog10 epsilon in [{}, {}], {} bisection steps\n",
                cfg.grid.m, cfg.grid.t, cfg.search.delta, cfg.search.log10_min, cfg.search.log10_max, cfg.search.steps
            );
        }
        Experiment::Distill => {
            s += &format!(
                "data: {:?} -> {:?} ({} x {})\nhidden: {:?}\nsteps: {}, batch {}\ntau: {}\n",
                cfg.data.source, cfg.data.target, cfg.data.m, cfg.data.n, cfg.train.hidden, cfg.train.steps, cfg.train.batch_size, cfg.grid.tau[0]
            );
        }
        Experiment::Simulate => {
            s += &format!(
                "data: {:?} -> {:?} ({} x {})\nsteps: {}, record stride {}\ntau: {}\n",
                cfg.data.source, cfg.data.target, cfg.data.m, cfg.data.n, cfg.simulate.steps, cfg.simulate.record_stride, cfg.grid.tau[0]
            );
        }
    }
    s += &format!("output: {}\nfiles: {}\n", cfg.output_dir().display(), declared_files(cfg).join(", "));
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{run_experiment, ExperimentConfig};

    fn tiny_simulate() -> ExperimentConfig {
        ExperimentConfig::from_toml(
            r#"
experiment = "simulate"
seed = 3
epsilon = 0.5
[grid]
tau = [0.9]
[data]
m = 20
n = 20
source = { kind = "eight-gaussians" }
target = { kind = "moons" }
[simulate]
steps = 20
record_stride = 5
"#,
        )
        .unwrap()
    }

    #[test]
    fn empty_directory_gets_exactly_the_declared_files() {
        let cfg = tiny_simulate();
        let out = run_experiment(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        emit_outputs(&out, dir.path()).unwrap();
        let mut found: Vec<String> =
            fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
        found.sort();
        let mut declared = declared_files(&cfg);
        declared.sort();
        assert_eq!(found, declared);
    }

    #[test]
    fn metadata_nests_the_config() {
        let out = run_experiment(&tiny_simulate()).unwrap();
        let text = run_metadata(&out).unwrap();
        let parsed: toml::Table = toml::from_str(&text).unwrap();
        let cfg = parsed["config"].as_table().unwrap();
        assert_eq!(cfg["experiment"].as_str(), Some("simulate"));
        assert!(cfg["data"]["source"].get("kind").is_some());
    }
}
