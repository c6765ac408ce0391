//! File-writing run driver: `series.csv`, optional `particles.jsonl`, and
//! `manifest.json` in an output directory.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::{ConfigFile, SimConfig};
use crate::diagnostics::{stationarity_probe, DiagnosticsRecord, StationarityReport};
use crate::dynamics::{Observer, ParticleState, Simulator};
use crate::error::Result;
use crate::manifold::{project_to_fundamental_domain, ManifoldSpec};

pub const SERIES_FILE: &str = "series.csv";
pub const PARTICLES_FILE: &str = "particles.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Everything needed to reproduce and audit a run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    /// Full configuration with defaults written out; feeding this file back
    /// to `run --config` repeats the run.
    pub config: ConfigFile,
    pub version: String,
    pub lanes: usize,
    pub duration_seconds: f64,
    pub series: PathBuf,
    pub particles: Option<PathBuf>,
    pub final_record: DiagnosticsRecord,
    pub claims: StationarityReport,
}

/// CSV header for a `d`-dimensional run.
pub fn series_header(d: usize) -> String {
    let mut columns: Vec<String> = [
        "t",
        "energy",
        "dissipation",
        "velocity_diameter",
        "max_abs_v2",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    columns.extend((1..=d).map(|c| format!("momentum_{c}")));
    columns.push("max_alignment_residual".into());
    columns.push("strip_bound_violated".into());
    columns.join(",")
}

/// One CSV row; floats carry 17 significant digits.
pub fn series_row(record: &DiagnosticsRecord) -> String {
    let mut fields = vec![
        record.time,
        record.energy,
        record.dissipation,
        record.velocity_diameter,
        record.max_abs_second_component,
    ];
    fields.extend(&record.momentum);
    fields.push(record.max_alignment_residual);
    let mut row: Vec<String> = fields.iter().map(|x| format!("{x:.16e}")).collect();
    row.push(u8::from(record.strip_bound_violated).to_string());
    row.join(",")
}

struct SeriesWriter {
    out: BufWriter<File>,
}

impl Observer for SeriesWriter {
    fn observe(&mut self, _: &ParticleState, record: &DiagnosticsRecord) -> Result<()> {
        writeln!(self.out, "{}", series_row(record))?;
        Ok(())
    }
}

#[derive(Serialize)]
struct ParticleLine {
    t: f64,
    positions: Vec<Vec<f64>>,
    velocities: Vec<Vec<f64>>,
}

/// Writes projected (fundamental-domain) positions and velocities.
struct ParticleWriter {
    manifold: ManifoldSpec,
    out: BufWriter<File>,
}

impl Observer for ParticleWriter {
    fn observe(&mut self, state: &ParticleState, _: &DiagnosticsRecord) -> Result<()> {
        let mut line = ParticleLine {
            t: state.time,
            positions: Vec::with_capacity(state.len()),
            velocities: Vec::with_capacity(state.len()),
        };
        for i in 0..state.len() {
            let (x, v) = project_to_fundamental_domain(
                &self.manifold,
                state.position(i),
                state.velocity(i),
            )?;
            line.positions.push(x);
            line.velocities.push(v);
        }
        serde_json::to_writer(&mut self.out, &line)?;
        self.out.write_all(b"\n")?;
        Ok(())
    }
}

/// Runs `config` with `lanes` workers and writes all artifacts into `out_dir`,
/// creating it if needed.
pub fn run(config: &SimConfig, out_dir: impl AsRef<Path>, lanes: usize) -> Result<RunManifest> {
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir)?;
    let simulator = Simulator::new(config.clone())?.with_lanes(lanes)?;
    let started = Instant::now();

    let series_path = out_dir.join(SERIES_FILE);
    let mut series = SeriesWriter {
        out: BufWriter::new(File::create(&series_path)?),
    };
    writeln!(series.out, "{}", series_header(config.manifold.dimension()))?;
    let particles_path = config.write_particles.then(|| out_dir.join(PARTICLES_FILE));
    let mut particles = match &particles_path {
        Some(path) => Some(ParticleWriter {
            manifold: config.manifold,
            out: BufWriter::new(File::create(path)?),
        }),
        None => None,
    };

    let trajectory = {
        let mut observers: Vec<&mut dyn Observer> = vec![&mut series];
        if let Some(p) = particles.as_mut() {
            observers.push(p);
        }
        simulator.run(&mut observers, false)
    };
    series.out.flush()?;
    if let Some(p) = particles.as_mut() {
        p.out.flush()?;
    }
    let trajectory = trajectory?;

    let claims = stationarity_probe(&trajectory.records, config)?;
    let manifest = RunManifest {
        config: config.to_file(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        lanes,
        duration_seconds: started.elapsed().as_secs_f64(),
        series: series_path,
        particles: particles_path,
        final_record: trajectory
            .records
            .last()
            .cloned()
            .expect("the initial state is always recorded"),
        claims,
    };
    let file = BufWriter::new(File::create(out_dir.join(MANIFEST_FILE))?);
    serde_json::to_writer_pretty(file, &manifest)?;
    Ok(manifest)
}
