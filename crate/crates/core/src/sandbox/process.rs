use std::fs::{self, File};
use std::io::Read;
use std::os::fd::AsRawFd;
use std::os::unix::process::{CommandExt, ExitStatusExt};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitStatus, Stdio};
use std::time::{Duration, Instant};

use serde_json::Value;

use super::{ExecBackendKind, ExecFailure, ExecOutcome, FailurePhase, ResultEnvelope, ResultValue, SandboxError, SandboxLimits};
use crate::graph::{graph_from_json, project_views, rebuild_from_views, serialize_graph, PropertyGraph, Table};

const RUNTIME: &str = include_str!("../../adapters/runtime.py");
const VIOLATION_EXIT: i32 = 86;
const CHANNEL_FD: i32 = 3;
const DIAGNOSTICS_CAP: usize = 16 * 1024;
const FILE_SIZE_CAP: u64 = 256 << 20;
const POLL: Duration = Duration::from_millis(5);

/// How one backend's programs are wrapped and run.
#[derive(Debug, Clone)]
pub struct ExecutorAdapter {
    pub interpreter: Vec<String>,
    pub prologue: String,
    pub epilogue: String,
}

impl ExecutorAdapter {
    pub fn builtin(backend: ExecBackendKind, python: &str) -> Option<Self> {
        let (prologue, epilogue) = match backend {
            ExecBackendKind::GraphApi => {
                (include_str!("../../adapters/graph_api_prologue.py"), include_str!("../../adapters/graph_api_epilogue.py"))
            }
            ExecBackendKind::Tabular => {
                (include_str!("../../adapters/tabular_prologue.py"), include_str!("../../adapters/tabular_epilogue.py"))
            }
            ExecBackendKind::Relational => {
                (include_str!("../../adapters/relational_prologue.py"), include_str!("../../adapters/relational_epilogue.py"))
            }
            ExecBackendKind::DirectAnswer => return None,
        };
        Some(Self {
            // -I: isolated mode, -B: no bytecode writes, -S is avoided so site-packages stay importable
            interpreter: vec![python.to_string(), "-I".into(), "-B".into()],
            prologue: format!("{RUNTIME}\n{prologue}"),
            epilogue: epilogue.to_string(),
        })
    }

    /// Full program text: prologue, the code as a string literal, epilogue.
    pub fn assemble(&self, code: &str) -> String {
        let literal = serde_json::to_string(code).expect("strings always serialize");
        format!("{}\n_CODE = {literal}\n{}", self.prologue, self.epilogue)
    }
}

/// Runs programs in child processes under [`SandboxLimits`].
#[derive(Debug, Clone)]
pub struct Sandbox {
    adapters: [Option<ExecutorAdapter>; 3],
    scratch: Option<PathBuf>,
}

impl Default for Sandbox {
    fn default() -> Self {
        Self::with_python("python3")
    }
}

impl Sandbox {
    pub fn with_python(python: &str) -> Self {
        Self {
            adapters: ExecBackendKind::CODE_BACKENDS.map(|b| ExecutorAdapter::builtin(b, python)),
            scratch: None,
        }
    }

    pub fn with_adapter(mut self, backend: ExecBackendKind, adapter: ExecutorAdapter) -> Self {
        if let Some(i) = ExecBackendKind::CODE_BACKENDS.iter().position(|b| *b == backend) {
            self.adapters[i] = Some(adapter);
        }
        self
    }

    /// Parent directory for per-execution scratch directories.
    pub fn with_scratch_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.scratch = Some(dir.into());
        self
    }

    fn adapter(&self, backend: ExecBackendKind) -> Result<&ExecutorAdapter, SandboxError> {
        ExecBackendKind::CODE_BACKENDS
            .iter()
            .position(|b| *b == backend)
            .and_then(|i| self.adapters[i].as_ref())
            .ok_or_else(|| SandboxError::Config(format!("backend {backend} does not execute code")))
    }

    pub fn execute(
        &self,
        code: &str,
        g: &PropertyGraph,
        backend: ExecBackendKind,
        limits: &SandboxLimits,
    ) -> Result<ExecOutcome, SandboxError> {
        limits.validate()?;
        let adapter = self.adapter(backend)?;
        let input = match backend {
            ExecBackendKind::GraphApi => serialize_graph(g, true),
            _ => match project_views(g) {
                Ok((nodes, edges)) => {
                    serde_json::json!({"directed": g.is_directed(), "nodes": nodes.to_json(), "edges": edges.to_json()})
                        .to_string()
                }
                Err(e) => {
                    return Ok(ExecOutcome::fail(FailurePhase::Runtime, "ColumnNameCollision", e.to_string()));
                }
            },
        };

        let root = match &self.scratch {
            Some(dir) => tempfile::Builder::new().prefix("exec-").tempdir_in(dir)?,
            None => tempfile::Builder::new().prefix("nlnetops-exec-").tempdir()?,
        };
        let work = root.path().join("work");
        fs::create_dir(&work)?;
        let input_path = root.path().join("input.json");
        let program_path = root.path().join("program.py");
        fs::write(&input_path, input)?;
        fs::write(&program_path, adapter.assemble(code))?;

        let run = spawn_and_wait(adapter, &program_path, &input_path, &work, root.path(), limits)?;
        Ok(interpret(run, g, backend, limits))
    }
}

struct RawRun {
    status: Option<ExitStatus>,
    timed_out: bool,
    channel: Vec<u8>,
    output: String,
}

fn spawn_and_wait(
    adapter: &ExecutorAdapter,
    program: &Path,
    input: &Path,
    work: &Path,
    root: &Path,
    limits: &SandboxLimits,
) -> Result<RawRun, SandboxError> {
    let (interpreter, args) = adapter
        .interpreter
        .split_first()
        .ok_or_else(|| SandboxError::Config("adapter has no interpreter".into()))?;
    let channel_path = root.join("channel");
    let channel = File::create(&channel_path)?;
    let stdout = File::create(root.join("stdout"))?;
    let stderr = File::create(root.join("stderr"))?;

    let mut cmd = Command::new(interpreter);
    cmd.args(args)
        .arg(program)
        .arg(input)
        .arg(work)
        .current_dir(work)
        .env_clear()
        .env("PATH", "/usr/local/bin:/usr/bin:/bin")
        .env("HOME", work)
        .env("TMPDIR", work)
        .env("MPLCONFIGDIR", work)
        .env("LANG", "C.UTF-8")
        .env("PYTHONHASHSEED", "0")
        .env("PYTHONDONTWRITEBYTECODE", "1")
        .env("OPENBLAS_NUM_THREADS", "1")
        .env("OMP_NUM_THREADS", "1")
        .env("MKL_NUM_THREADS", "1")
        .stdin(Stdio::null())
        .stdout(stdout)
        .stderr(stderr)
        .process_group(0);

    let channel_fd = channel.as_raw_fd();
    let memory = limits.memory_bytes as libc::rlim_t;
    let cpu = limits.timeout.as_secs() as libc::rlim_t + 2;
    // SAFETY: the closure only calls async-signal-safe functions (dup2, fcntl, setrlimit).
    unsafe {
        cmd.pre_exec(move || {
            if channel_fd == CHANNEL_FD {
                // dup2 onto itself keeps close-on-exec, so clear it by hand
                if libc::fcntl(CHANNEL_FD, libc::F_SETFD, 0) < 0 {
                    return Err(std::io::Error::last_os_error());
                }
            } else if libc::dup2(channel_fd, CHANNEL_FD) < 0 {
                return Err(std::io::Error::last_os_error());
            }
            let set = |resource, value: libc::rlim_t| {
                let lim = libc::rlimit { rlim_cur: value, rlim_max: value };
                if libc::setrlimit(resource, &lim) != 0 {
                    return Err(std::io::Error::last_os_error());
                }
                Ok(())
            };
            set(libc::RLIMIT_AS, memory)?;
            set(libc::RLIMIT_CPU, cpu)?;
            set(libc::RLIMIT_FSIZE, FILE_SIZE_CAP as libc::rlim_t)?;
            set(libc::RLIMIT_CORE, 0)?;
            Ok(())
        });
    }

    let mut child = cmd.spawn()?;
    drop(channel);
    let pgid = child.id() as libc::pid_t;
    let deadline = Instant::now() + limits.timeout;
    let mut timed_out = false;
    let status = loop {
        if let Some(status) = child.try_wait()? {
            break Some(status);
        }
        if Instant::now() >= deadline {
            timed_out = true;
            // SAFETY: plain syscall on the child's own process group.
            unsafe { libc::killpg(pgid, libc::SIGKILL) };
            break child.wait().ok();
        }
        std::thread::sleep(POLL);
    };
    // SAFETY: as above; reaps anything the program may have left behind.
    unsafe { libc::killpg(pgid, libc::SIGKILL) };

    let mut channel = Vec::new();
    File::open(&channel_path)?.read_to_end(&mut channel)?;
    let output = [("stdout", root.join("stdout")), ("stderr", root.join("stderr"))]
        .iter()
        .filter_map(|(name, p)| {
            let text = read_tail(p, DIAGNOSTICS_CAP / 2);
            (!text.trim().is_empty()).then(|| format!("--- {name} ---\n{text}"))
        })
        .collect::<Vec<_>>()
        .join("\n");
    Ok(RawRun { status, timed_out, channel, output })
}

fn read_tail(path: &Path, cap: usize) -> String {
    let bytes = fs::read(path).unwrap_or_default();
    let start = bytes.len().saturating_sub(cap);
    String::from_utf8_lossy(&bytes[start..]).into_owned()
}

fn parse_frames(mut data: &[u8]) -> Result<Vec<Value>, String> {
    let mut frames = Vec::new();
    while !data.is_empty() {
        let nl = data.iter().position(|b| *b == b'\n').ok_or("frame header is not terminated")?;
        let len: usize = std::str::from_utf8(&data[..nl])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or("frame header is not a decimal length")?;
        let body = data.get(nl + 1..nl + 1 + len).ok_or("frame is truncated")?;
        frames.push(serde_json::from_slice(body).map_err(|e| format!("frame is not valid JSON: {e}"))?);
        data = &data[nl + 1 + len..];
    }
    Ok(frames)
}

fn interpret(run: RawRun, g: &PropertyGraph, backend: ExecBackendKind, limits: &SandboxLimits) -> ExecOutcome {
    let diag = |f: ExecFailure, extra: &str| {
        let diagnostics = [extra, run.output.as_str()].iter().filter(|s| !s.is_empty()).copied().collect::<Vec<_>>().join("\n");
        ExecOutcome::Failure(f.with_diagnostics(diagnostics))
    };
    if run.timed_out {
        let f = ExecFailure::new(
            FailurePhase::Timeout,
            "Timeout",
            format!("Timeout: program exceeded the {} s time limit", limits.timeout.as_secs_f64()),
        );
        return diag(f, "");
    }

    let frames = match parse_frames(&run.channel) {
        Ok(frames) => frames,
        Err(e) => {
            let f = ExecFailure::new(FailurePhase::EnvelopeMalformed, "EnvelopeMalformed", format!("EnvelopeMalformed: {e}"));
            return diag(f, "");
        }
    };

    if let Some(err) = frames.first().and_then(|f| f.get("error")) {
        let text = |k: &str| err.get(k).and_then(Value::as_str).unwrap_or_default().to_string();
        let phase = FailurePhase::parse(&text("phase")).unwrap_or(FailurePhase::Runtime);
        let f = ExecFailure::new(phase, text("type"), text("message"));
        return diag(f, &text("traceback"));
    }

    let status = run.status;
    if status.and_then(|s| s.code()) == Some(VIOLATION_EXIT) {
        return diag(ExecFailure::new(FailurePhase::SandboxViolation, "SandboxViolation", "SandboxViolation: guard stopped the program"), "");
    }
    if frames.len() != 2 {
        let f = match status.and_then(|s| s.signal()) {
            Some(libc::SIGXCPU) => ExecFailure::new(FailurePhase::Timeout, "Timeout", "Timeout: CPU time limit exceeded"),
            Some(sig) => ExecFailure::new(FailurePhase::Runtime, "Crash", format!("Crash: program terminated by signal {sig}")),
            None if run.output.contains("MemoryError") => {
                ExecFailure::new(FailurePhase::Memory, "MemoryError", "MemoryError: memory limit exceeded")
            }
            None => ExecFailure::new(
                FailurePhase::Runtime,
                "HarnessError",
                format!(
                    "HarnessError: program exited with status {} before reporting a result",
                    status.and_then(|s| s.code()).map_or("unknown".to_string(), |c| c.to_string())
                ),
            ),
        };
        return diag(f, "");
    }

    let malformed = |msg: String| diag(ExecFailure::new(FailurePhase::EnvelopeMalformed, "EnvelopeMalformed", format!("EnvelopeMalformed: {msg}")), "");
    let value = match ResultValue::from_json(&frames[0]) {
        Ok(v) => v,
        Err(e) => return malformed(e),
    };
    let graph_after = match rebuild_graph(&frames[1], g, backend) {
        Ok(after) => after,
        Err(e) => return malformed(e),
    };
    ExecOutcome::Success { envelope: ResultEnvelope { value, graph_after }, diagnostics: run.output }
}

fn rebuild_graph(doc: &Value, input: &PropertyGraph, backend: ExecBackendKind) -> Result<PropertyGraph, String> {
    if doc.is_null() {
        return Ok(input.clone());
    }
    match backend {
        ExecBackendKind::GraphApi => graph_from_json(doc).map_err(|e| e.to_string()),
        _ => {
            let table = |name: &str| Table::from_json(&doc[name]).map_err(|e| format!("{name} table: {e}"));
            rebuild_from_views(input.is_directed(), &table("nodes")?, &table("edges")?).map_err(|e| e.to_string())
        }
    }
}
