//! Output directory: CSV files headed by the seed, a config echo and a
//! manifest.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use fptorus::grid::{write_snapshot, Field};
use fptorus::Result;

use crate::run::RunConfig;

pub struct OutDir {
    root: PathBuf,
    seed: u64,
    started: Instant,
}

pub type CsvOut = csv::Writer<BufWriter<File>>;

impl OutDir {
    pub fn create(rc: &RunConfig) -> Result<Self> {
        fs::create_dir_all(&rc.out)?;
        let name = rc.config_path.file_name().map(PathBuf::from).unwrap_or_else(|| "config".into());
        fs::write(rc.out.join(name), &rc.config_text)?;
        Ok(Self {
            root: rc.out.clone(),
            seed: rc.seed,
            started: Instant::now(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    /// A CSV writer whose first line is `# seed=N`.
    pub fn csv(&self, name: &str, header: &[&str]) -> Result<CsvOut> {
        let mut file = BufWriter::new(File::create(self.path(name))?);
        writeln!(file, "# seed={}", self.seed)?;
        let mut w = csv::Writer::from_writer(file);
        w.write_record(header)?;
        Ok(w)
    }

    pub fn snapshot(&self, name: &str, field: &Field, extra: &[String]) -> Result<()> {
        if let Some(dir) = Path::new(name).parent() {
            fs::create_dir_all(self.root.join(dir))?;
        }
        let mut comments = vec![format!("seed={}", self.seed)];
        comments.extend_from_slice(extra);
        let mut file = BufWriter::new(File::create(self.path(name))?);
        write_snapshot(field, &comments, &mut file)?;
        file.flush()?;
        Ok(())
    }

    pub fn finish(&self, rc: &RunConfig, command: &str) -> Result<()> {
        let text = format!(
            "tool = fptorus {}\ncommand = {command}\nconfig = {}\nseed = {}\ngrid = dim {} n {}\nwall_time_s = {:.3}\n",
            env!("CARGO_PKG_VERSION"),
            rc.config_path.display(),
            rc.seed,
            rc.spec.dim,
            rc.spec.n_per_axis,
            self.started.elapsed().as_secs_f64()
        );
        fs::write(self.path("manifest.txt"), text)?;
        Ok(())
    }
}

/// Shortest text that reads back to the same `f64`.
pub fn num(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 || (1e-5..1e16).contains(&a) || !a.is_finite() {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}
