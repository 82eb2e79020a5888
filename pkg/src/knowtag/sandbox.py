"""Run generated guest programs in a child process.

The engine does not know the guest language: the source is written to a
file in a fresh temporary directory and handed to ``interpreter`` as its
last argument. Isolation is a stripped environment, a private working
directory, a wall-clock timeout enforced on the whole process group and
capped output capture. ``isolation_prefix`` lets an operator wrap the
command in an OS-level sandbox (``bwrap``, ``firejail``, ...).
"""

from __future__ import annotations

import os
import shlex
import shutil
import signal
import subprocess
import tempfile
import threading
import time
from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import IO

from .errors import BooleanParseError, ConfigError, InterpreterMissingError, SandboxSpawnError
from .model import GeneratedProgram

KILLED = "killed"
GRACE_SECONDS = 1.0
TEMP_PREFIX = "knowtag-sbx-"

_ENV_ALLOWLIST = ("PATH", "LANG", "LC_ALL", "SYSTEMROOT", "TMPDIR")
_NETWORK_ENV = ("HTTP_PROXY", "HTTPS_PROXY", "NO_PROXY", "http_proxy", "https_proxy", "no_proxy")


@dataclass(frozen=True)
class SandboxPolicy:
    interpreter: tuple[str, ...] = ()
    wall_timeout: float = 10.0
    max_output_bytes: int = 64 * 1024
    network_allowed: bool = False
    program_filename: str = "program"
    isolation_prefix: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "interpreter", tuple(self.interpreter))
        object.__setattr__(self, "isolation_prefix", tuple(self.isolation_prefix))
        if self.wall_timeout <= 0:
            raise ConfigError("sandbox wall_timeout must be positive")
        if self.max_output_bytes <= 0:
            raise ConfigError("sandbox max_output_bytes must be positive")


@dataclass(frozen=True)
class ExecutionResult:
    stdout: str
    stderr: str
    exit_status: int | str  # int exit code, or KILLED on timeout
    duration: float
    stdout_truncated: bool = False
    stderr_truncated: bool = False
    working_dir: str = field(default="", compare=False)

    @property
    def killed(self) -> bool:
        return self.exit_status == KILLED


class _CappedReader(threading.Thread):
    """Drain a pipe, keeping at most ``cap`` bytes."""

    def __init__(self, stream: IO[bytes], cap: int):
        super().__init__(daemon=True)
        self.stream = stream
        self.cap = cap
        self.chunks: list[bytes] = []
        self.kept = 0
        self.truncated = False

    def run(self):
        while True:
            chunk = self.stream.read1(65536) if hasattr(self.stream, "read1") else self.stream.read(65536)
            if not chunk:
                break
            room = self.cap - self.kept
            if room > 0:
                piece = chunk[:room]
                self.chunks.append(piece)
                self.kept += len(piece)
            if len(chunk) > max(room, 0):
                self.truncated = True

    def text(self) -> str:
        return b"".join(self.chunks).decode("utf-8", errors="replace")


def _child_env(policy: SandboxPolicy) -> dict[str, str]:
    names = _ENV_ALLOWLIST + (_NETWORK_ENV if policy.network_allowed else ())
    env = {k: os.environ[k] for k in names if k in os.environ}
    env.setdefault("PATH", os.defpath)
    return env


def _kill_group(proc: subprocess.Popen) -> None:
    try:
        os.killpg(proc.pid, signal.SIGKILL)
    except (ProcessLookupError, PermissionError):
        pass


class Sandbox:
    """Executes programs under one policy, at most ``max_concurrency`` at a time."""

    def __init__(self, policy: SandboxPolicy, max_concurrency: int = 4):
        if max_concurrency < 1:
            raise ConfigError("sandbox max_concurrency must be at least 1")
        self.policy = policy
        self.max_concurrency = max_concurrency
        self._slots = threading.BoundedSemaphore(max_concurrency)
        self._lock = threading.Lock()
        self.active = 0
        self.peak_active = 0

    def _resolve_command(self) -> list[str]:
        if not self.policy.interpreter:
            raise InterpreterMissingError("no interpreter configured (set sandbox.interpreter)")
        exe = self.policy.interpreter[0]
        resolved = shutil.which(exe)
        if resolved is None:
            raise InterpreterMissingError(f"interpreter {exe!r} not found or not executable")
        return [*self.policy.isolation_prefix, resolved, *self.policy.interpreter[1:]]

    def execute(self, program: GeneratedProgram | str) -> ExecutionResult:
        source = program.source if isinstance(program, GeneratedProgram) else program
        command = self._resolve_command()
        with self._slots:
            with self._lock:
                self.active += 1
                self.peak_active = max(self.peak_active, self.active)
            try:
                return self._run(command, source)
            finally:
                with self._lock:
                    self.active -= 1

    def _run(self, command: list[str], source: str) -> ExecutionResult:
        policy = self.policy
        workdir = tempfile.mkdtemp(prefix=TEMP_PREFIX)
        try:
            path = os.path.join(workdir, policy.program_filename)
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(source)
            start = time.monotonic()
            try:
                proc = subprocess.Popen(
                    [*command, path],
                    cwd=workdir,
                    env=_child_env(policy),
                    stdin=subprocess.DEVNULL,
                    stdout=subprocess.PIPE,
                    stderr=subprocess.PIPE,
                    start_new_session=True,
                )
            except OSError as exc:
                raise SandboxSpawnError(f"could not start {command[0]}: {exc}") from exc
            out = _CappedReader(proc.stdout, policy.max_output_bytes)
            err = _CappedReader(proc.stderr, policy.max_output_bytes)
            out.start()
            err.start()
            try:
                status: int | str = proc.wait(timeout=policy.wall_timeout)
            except subprocess.TimeoutExpired:
                _kill_group(proc)
                proc.wait()
                status = KILLED
            # reap anything the program left running in its group
            _kill_group(proc)
            deadline = start + policy.wall_timeout + GRACE_SECONDS
            for reader in (out, err):
                reader.join(timeout=max(deadline - time.monotonic(), 0.05))
            duration = time.monotonic() - start
            proc.stdout.close()
            proc.stderr.close()
            return ExecutionResult(
                stdout=out.text(),
                stderr=err.text(),
                exit_status=status,
                duration=duration,
                stdout_truncated=out.truncated,
                stderr_truncated=err.truncated,
                working_dir=workdir,
            )
        finally:
            shutil.rmtree(workdir, ignore_errors=True)


def execute(program: GeneratedProgram | str, policy: SandboxPolicy) -> ExecutionResult:
    """One-off execution without a shared concurrency limit."""
    return Sandbox(policy, max_concurrency=1).execute(program)


def parse_boolean_output(result: ExecutionResult) -> bool:
    """The program's verdict: its last nonempty stdout line, ``True`` or ``False`` in any case.

    Truncated output is rejected outright, since its last line is not the
    program's last line.
    """
    if result.killed:
        raise BooleanParseError(f"program killed after {result.duration:.1f}s timeout")
    if result.exit_status != 0:
        tail = result.stderr.strip().splitlines()[-1:] or [""]
        raise BooleanParseError(f"program exited with status {result.exit_status}: {tail[0]}")
    if result.stdout_truncated:
        raise BooleanParseError("program output exceeded the capture limit")
    lines = [line.strip() for line in result.stdout.splitlines() if line.strip()]
    if not lines:
        raise BooleanParseError("program printed nothing")
    last = lines[-1].lower()
    if last not in ("true", "false"):
        raise BooleanParseError(f"last output line is {lines[-1]!r}, expected True or False")
    return last == "true"


def parse_interpreter(value: str | Sequence[str]) -> tuple[str, ...]:
    """Config values may give the interpreter as a list or a shell-style string."""
    if isinstance(value, str):
        return tuple(shlex.split(value))
    return tuple(value)
