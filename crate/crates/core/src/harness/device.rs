//! Device backends: the local noisy simulator, replay from persisted
//! counts, and external commands speaking line-delimited JSON.

use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};

use serde::{Deserialize, Serialize};

use crate::patterns::Circuit;
use crate::seed::derive_seed;
use crate::simulator::{sample, CountsTable, NoiseModel};

use super::HarnessError;

/// A dispatchable unit of work: one circuit, sampled `shots` times.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Job {
    pub job_id: String,
    pub circuit: Circuit,
    pub shots: u64,
    pub seed: u64,
}

/// How a device executes jobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum BackendSpec {
    /// In-process statevector sampling under a noise model.
    Local { noise: NoiseModel },
    /// Serve counts persisted by an earlier run; fails loudly on a miss.
    Replay { dir: PathBuf },
    /// Spawn `command`, write one request line, read one counts line.
    External { command: Vec<String> },
}

/// A named device with its backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceSpec {
    pub device_id: String,
    pub backend: BackendSpec,
}

impl DeviceSpec {
    pub fn local(device_id: &str, noise: NoiseModel) -> Self {
        Self { device_id: device_id.to_string(), backend: BackendSpec::Local { noise } }
    }

    /// The noise model, when this device is a local simulator.
    pub fn noise(&self) -> Option<&NoiseModel> {
        match &self.backend {
            BackendSpec::Local { noise } => Some(noise),
            _ => None,
        }
    }

    /// Runs one job, enforcing the shot-count contract.
    pub fn run_job(&self, job: &Job) -> Result<CountsTable, HarnessError> {
        let table = match &self.backend {
            BackendSpec::Local { noise } => {
                // The noise seed separates shot streams of otherwise
                // identical devices.
                let seed = derive_seed(job.seed, &[noise.seed]);
                sample(&job.circuit, job.shots, noise, seed, &self.device_id, &job.job_id)?
            }
            BackendSpec::Replay { dir } => self.replay(dir, job)?,
            BackendSpec::External { command } => self.run_external(command, job)?,
        };
        if table.total() != job.shots {
            return Err(HarnessError::DeviceFailure {
                device: self.device_id.clone(),
                job: job.job_id.clone(),
                message: format!("returned {} shots, expected {}", table.total(), job.shots),
            });
        }
        Ok(table)
    }

    fn replay(&self, dir: &Path, job: &Job) -> Result<CountsTable, HarnessError> {
        let path = dir.join(format!("{}.json", job.job_id));
        let text = std::fs::read_to_string(&path).map_err(|e| HarnessError::DeviceFailure {
            device: self.device_id.clone(),
            job: job.job_id.clone(),
            message: format!("no stored counts at {}: {e}", path.display()),
        })?;
        let table: CountsTable =
            serde_json::from_str(&text).map_err(|e| HarnessError::DeviceFailure {
                device: self.device_id.clone(),
                job: job.job_id.clone(),
                message: format!("corrupt stored counts: {e}"),
            })?;
        Ok(table)
    }

    fn run_external(&self, command: &[String], job: &Job) -> Result<CountsTable, HarnessError> {
        let failure = |message: String| HarnessError::DeviceFailure {
            device: self.device_id.clone(),
            job: job.job_id.clone(),
            message,
        };
        if command.is_empty() {
            return Err(failure("empty external command".into()));
        }
        let mut last_error = String::new();
        for _attempt in 0..3 {
            match self.external_once(command, job) {
                Ok(table) => return Ok(table),
                Err(message) => last_error = message,
            }
        }
        Err(failure(format!("3 attempts failed; last error: {last_error}")))
    }

    fn external_once(&self, command: &[String], job: &Job) -> Result<CountsTable, String> {
        let mut child = Command::new(&command[0])
            .args(&command[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| format!("spawn failed: {e}"))?;
        let request = serde_json::to_string(job).map_err(|e| e.to_string())?;
        {
            let stdin = child.stdin.as_mut().ok_or("no stdin")?;
            stdin
                .write_all(request.as_bytes())
                .and_then(|_| stdin.write_all(b"\n"))
                .map_err(|e| format!("write failed: {e}"))?;
        }
        drop(child.stdin.take());
        let stdout = child.stdout.take().ok_or("no stdout")?;
        let mut line = String::new();
        BufReader::new(stdout)
            .read_line(&mut line)
            .map_err(|e| format!("read failed: {e}"))?;
        let status = child.wait().map_err(|e| format!("wait failed: {e}"))?;
        if !status.success() {
            return Err(format!("exited with {status}"));
        }
        serde_json::from_str(line.trim()).map_err(|e| format!("bad response: {e}"))
    }
}

/// The set of devices a plan can dispatch to.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DeviceRegistry {
    pub devices: Vec<DeviceSpec>,
}

impl DeviceRegistry {
    pub fn get(&self, device_id: &str) -> Option<&DeviceSpec> {
        self.devices.iter().find(|d| d.device_id == device_id)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphs::builtin_graph;
    use crate::patterns::{compile_to_circuit, AngleSet};

    fn test_job() -> Job {
        let (g, flows) = builtin_graph("H6").unwrap();
        let circuit =
            compile_to_circuit(&g, &flows[0].flow, &AngleSet::uniform(&g, 0.5)).unwrap();
        Job { job_id: "t_job".into(), circuit, shots: 128, seed: 5 }
    }

    #[test]
    fn local_device_honors_shots_and_seed() {
        let dev = DeviceSpec::local("sim", NoiseModel::ideal());
        let job = test_job();
        let a = dev.run_job(&job).unwrap();
        let b = dev.run_job(&job).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.total(), 128);
        assert_eq!(a.device_id, "sim");
    }

    #[test]
    fn distinct_noise_seeds_give_distinct_streams() {
        let mut noisy = NoiseModel::ideal();
        noisy.seed = 1;
        let a = DeviceSpec::local("sim", NoiseModel::ideal()).run_job(&test_job()).unwrap();
        let b = DeviceSpec::local("sim", noisy).run_job(&test_job()).unwrap();
        assert_ne!(a.counts, b.counts);
    }

    #[test]
    fn replay_misses_fail_loudly() {
        let tmp = tempfile::tempdir().unwrap();
        let dev = DeviceSpec {
            device_id: "rp".into(),
            backend: BackendSpec::Replay { dir: tmp.path().to_path_buf() },
        };
        let err = dev.run_job(&test_job()).unwrap_err();
        match err {
            HarnessError::DeviceFailure { job, .. } => assert_eq!(job, "t_job"),
            other => panic!("expected DeviceFailure, got {other:?}"),
        }
    }

    #[test]
    fn replay_roundtrip() {
        let tmp = tempfile::tempdir().unwrap();
        let local = DeviceSpec::local("rp", NoiseModel::ideal());
        let job = test_job();
        let table = local.run_job(&job).unwrap();
        std::fs::write(
            tmp.path().join("t_job.json"),
            serde_json::to_string(&table).unwrap(),
        )
        .unwrap();
        let replay = DeviceSpec {
            device_id: "rp".into(),
            backend: BackendSpec::Replay { dir: tmp.path().to_path_buf() },
        };
        assert_eq!(replay.run_job(&job).unwrap(), table);
    }
}
