//! CSV files: training log, trajectories and sweep tables.

use std::fs::File;
use std::path::{Path, PathBuf};

use crate::env::SchemeMode;
use crate::error::{Result, SkyError};
use crate::evaluation::SweepRow;
use crate::learner::train::{EpisodeRecord, TrajectoryPoint};

pub const TRAINING_LOG_HEADER: [&str; 5] = [
    "episode",
    "cumulative_reward",
    "mean_see",
    "mean_secrecy_rate",
    "qos_violation_rate",
];
pub const TRAJECTORY_HEADER: [&str; 5] = ["slot", "x", "y", "velocity", "see"];
pub const SWEEP_HEADER: [&str; 8] = [
    "M",
    "beta_max",
    "mode",
    "seed",
    "mean_see",
    "mean_secrecy_rate",
    "qos_violation_rate",
    "final_reward",
];

/// CSV writer that reports failures with its path and flushes every record.
pub struct CsvSink {
    path: PathBuf,
    writer: csv::Writer<File>,
}

impl CsvSink {
    pub fn create(path: &Path, header: &[&str]) -> Result<Self> {
        let file = File::create(path).map_err(|e| SkyError::io(path, e))?;
        let mut sink = Self {
            path: path.to_path_buf(),
            writer: csv::Writer::from_writer(file),
        };
        sink.write(header)?;
        Ok(sink)
    }

    pub fn write<I, T>(&mut self, fields: I) -> Result<()>
    where
        I: IntoIterator<Item = T>,
        T: AsRef<[u8]>,
    {
        self.writer
            .write_record(fields)
            .map_err(|e| SkyError::csv(&self.path, e))?;
        self.writer.flush().map_err(|e| SkyError::io(&self.path, e))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

fn episode_fields(r: &EpisodeRecord) -> [String; 5] {
    [
        r.episode.to_string(),
        r.cumulative_reward.to_string(),
        r.mean_see.to_string(),
        r.mean_secrecy_rate.to_string(),
        r.qos_violation_rate.to_string(),
    ]
}

/// Training log opened for per-episode appends.
pub struct TrainingLog(CsvSink);

impl TrainingLog {
    pub fn create(path: &Path) -> Result<Self> {
        CsvSink::create(path, &TRAINING_LOG_HEADER).map(Self)
    }

    pub fn append(&mut self, r: &EpisodeRecord) -> Result<()> {
        self.0.write(episode_fields(r))
    }
}

pub fn write_training_log(path: &Path, records: &[EpisodeRecord]) -> Result<()> {
    let mut log = TrainingLog::create(path)?;
    records.iter().try_for_each(|r| log.append(r))
}

fn read_rows(path: &Path, header: &[&str]) -> Result<Vec<csv::StringRecord>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| SkyError::csv(path, e))?;
    let found = reader.headers().map_err(|e| SkyError::csv(path, e))?.clone();
    if found.iter().ne(header.iter().copied()) {
        return Err(SkyError::Input(format!(
            "{}: expected columns {}, found {}",
            path.display(),
            header.join(","),
            found.iter().collect::<Vec<_>>().join(",")
        )));
    }
    reader
        .records()
        .map(|r| r.map_err(|e| SkyError::csv(path, e)))
        .collect()
}

fn field<T: std::str::FromStr>(path: &Path, row: &csv::StringRecord, i: usize) -> Result<T> {
    row.get(i)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| SkyError::Input(format!("{}: bad value in column {} of {:?}", path.display(), i + 1, row)))
}

pub fn read_training_log(path: &Path) -> Result<Vec<EpisodeRecord>> {
    read_rows(path, &TRAINING_LOG_HEADER)?
        .iter()
        .map(|row| {
            Ok(EpisodeRecord {
                episode: field(path, row, 0)?,
                cumulative_reward: field(path, row, 1)?,
                mean_see: field(path, row, 2)?,
                mean_secrecy_rate: field(path, row, 3)?,
                qos_violation_rate: field(path, row, 4)?,
            })
        })
        .collect()
}

pub fn write_trajectory(path: &Path, points: &[TrajectoryPoint]) -> Result<()> {
    let mut sink = CsvSink::create(path, &TRAJECTORY_HEADER)?;
    points.iter().try_for_each(|p| {
        sink.write([
            p.slot.to_string(),
            p.x.to_string(),
            p.y.to_string(),
            p.velocity.to_string(),
            p.see.to_string(),
        ])
    })
}

pub fn read_trajectory(path: &Path) -> Result<Vec<TrajectoryPoint>> {
    read_rows(path, &TRAJECTORY_HEADER)?
        .iter()
        .map(|row| {
            Ok(TrajectoryPoint {
                slot: field(path, row, 0)?,
                x: field(path, row, 1)?,
                y: field(path, row, 2)?,
                velocity: field(path, row, 3)?,
                see: field(path, row, 4)?,
            })
        })
        .collect()
}

/// Sweep table. `seed` is written as given so summary files can use `mean`.
pub struct SweepTable(CsvSink);

impl SweepTable {
    pub fn create(path: &Path) -> Result<Self> {
        CsvSink::create(path, &SWEEP_HEADER).map(Self)
    }

    pub fn append(&mut self, r: &SweepRow, seed: &str) -> Result<()> {
        self.0.write([
            r.elements.to_string(),
            r.beta_max.to_string(),
            r.mode.to_string(),
            seed.to_string(),
            r.mean_see.to_string(),
            r.mean_secrecy_rate.to_string(),
            r.qos_violation_rate.to_string(),
            r.final_reward.to_string(),
        ])
    }
}

/// Rows of a sweep table; a non-numeric seed is read as `None`.
pub fn read_sweep(path: &Path) -> Result<Vec<(SweepRow, Option<u64>)>> {
    read_rows(path, &SWEEP_HEADER)?
        .iter()
        .map(|row| {
            let mode: SchemeMode = row.get(2).unwrap_or_default().parse()?;
            let seed = row.get(3).and_then(|s| s.parse().ok());
            Ok((
                SweepRow {
                    elements: field(path, row, 0)?,
                    beta_max: field(path, row, 1)?,
                    mode,
                    seed: seed.unwrap_or(0),
                    mean_see: field(path, row, 4)?,
                    mean_secrecy_rate: field(path, row, 5)?,
                    qos_violation_rate: field(path, row, 6)?,
                    final_reward: field(path, row, 7)?,
                },
                seed,
            ))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(e: usize) -> EpisodeRecord {
        EpisodeRecord {
            episode: e,
            cumulative_reward: -1.5 + e as f64,
            mean_see: 0.1 / 3.0,
            mean_secrecy_rate: 2.0,
            qos_violation_rate: 0.25,
        }
    }

    #[test]
    fn zero_episodes_is_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("log.csv");
        write_training_log(&p, &[]).unwrap();
        assert_eq!(
            std::fs::read_to_string(&p).unwrap(),
            "episode,cumulative_reward,mean_see,mean_secrecy_rate,qos_violation_rate\n"
        );
    }

    #[test]
    fn ten_episodes_give_eleven_lines_and_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("log.csv");
        let records: Vec<_> = (0..10).map(rec).collect();
        write_training_log(&p, &records).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap().lines().count(), 11);
        assert_eq!(read_training_log(&p).unwrap(), records);
    }

    #[test]
    fn appends_are_visible_before_close() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("log.csv");
        let mut log = TrainingLog::create(&p).unwrap();
        log.append(&rec(0)).unwrap();
        assert_eq!(read_training_log(&p).unwrap(), vec![rec(0)]);
    }

    #[test]
    fn wrong_header_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        std::fs::write(&p, "slot,x\n1,2\n").unwrap();
        assert!(read_trajectory(&p).is_err());
    }

    #[test]
    fn missing_file_names_path() {
        let err = read_training_log(Path::new("/nonexistent/log.csv")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/log.csv"));
    }
}
