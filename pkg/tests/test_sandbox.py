import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor

import pytest

from knowtag.errors import BooleanParseError, InterpreterMissingError
from knowtag.sandbox import (
    KILLED,
    TEMP_PREFIX,
    ExecutionResult,
    Sandbox,
    SandboxPolicy,
    execute,
    parse_boolean_output,
    parse_interpreter,
)

PY = SandboxPolicy(interpreter=(sys.executable,), wall_timeout=5.0)


def result(stdout="", status=0, truncated=False, stderr=""):
    return ExecutionResult(stdout, stderr, status, 0.1, stdout_truncated=truncated)


def test_prints_true():
    r = execute("print(True)", PY)
    assert r.exit_status == 0 and parse_boolean_output(r) is True


def test_prints_false():
    assert parse_boolean_output(execute("print(1 > 2)", PY)) is False


def test_sleep_forever_killed():
    policy = SandboxPolicy(interpreter=(sys.executable,), wall_timeout=1.0)
    start = time.monotonic()
    r = execute("import time\nwhile True:\n    time.sleep(1)", policy)
    assert time.monotonic() - start < policy.wall_timeout + 1.0
    assert r.exit_status == KILLED and r.killed
    with pytest.raises(BooleanParseError, match="killed"):
        parse_boolean_output(r)


def test_orphaned_grandchild_does_not_hold_pipes():
    policy = SandboxPolicy(interpreter=(sys.executable,), wall_timeout=1.0)
    src = "import subprocess, sys\nsubprocess.Popen([sys.executable, '-c', 'import time; time.sleep(60)'])\nprint(True)"
    start = time.monotonic()
    r = execute(src, policy)
    assert time.monotonic() - start < policy.wall_timeout + 1.0
    assert parse_boolean_output(r) is True


def test_output_capped():
    r = execute("import sys\nsys.stdout.write('x' * (1024 * 1024))", PY)
    assert len(r.stdout.encode()) == 64 * 1024
    assert r.stdout_truncated
    with pytest.raises(BooleanParseError, match="capture limit"):
        parse_boolean_output(r)


def test_traceback_rejected():
    r = execute("raise ValueError('boom')", PY)
    assert r.exit_status == 1 and "ValueError" in r.stderr
    with pytest.raises(BooleanParseError, match="ValueError"):
        parse_boolean_output(r)


def test_env_stripped(monkeypatch):
    monkeypatch.setenv("OPENAI_API_KEY", "secret")
    r = execute("import os\nprint('OPENAI_API_KEY' in os.environ)", PY)
    assert parse_boolean_output(r) is False


def test_runs_in_private_dir():
    r = execute("import os\nprint(os.getcwd())", PY)
    assert os.path.basename(r.stdout.strip()).startswith(TEMP_PREFIX)
    assert not os.path.exists(r.working_dir)


@pytest.mark.parametrize("stdout,expected", [
    ("True\n", True), ("false", False), ("checking...\nTRUE\n\n", True), ("True\nFalse\n", False),
    ("  True  \n", True),
])
def test_last_line_rule(stdout, expected):
    assert parse_boolean_output(result(stdout)) is expected


@pytest.mark.parametrize("stdout", ["", "\n\n", "yes", "True False", "1"])
def test_last_line_rejects(stdout):
    with pytest.raises(BooleanParseError):
        parse_boolean_output(result(stdout))


def test_concurrency_limit(tmp_path):
    sandbox = Sandbox(PY, max_concurrency=4)
    src = (
        "import os, time\n"
        "start = time.time()\n"
        "time.sleep(0.4)\n"
        f"open(os.path.join({str(tmp_path)!r}, str(os.getpid())), 'w').write(f'{{start}} {{time.time()}} {{os.getcwd()}}')\n"
        "print(True)\n"
    )
    with ThreadPoolExecutor(8) as pool:
        results = list(pool.map(lambda _: sandbox.execute(src), range(8)))
    assert all(parse_boolean_output(r) for r in results)
    assert sandbox.peak_active <= 4 and sandbox.active == 0
    spans = []
    for f in tmp_path.iterdir():
        start, end, cwd = f.read_text().split(" ", 2)
        spans.append((float(start), float(end), cwd))
    assert len(spans) == 8
    for t, _, _ in spans:
        assert sum(1 for s, e, _ in spans if s <= t < e) <= 4
    dirs = {r.working_dir for r in results}
    assert len(dirs) == 8 and {cwd for _, _, cwd in spans} == dirs
    assert not any(os.path.exists(d) for d in dirs)


def test_interpreter_missing():
    with pytest.raises(InterpreterMissingError):
        execute("print(True)", SandboxPolicy(interpreter=("no-such-interpreter-xyz",)))
    with pytest.raises(InterpreterMissingError):
        execute("print(True)", SandboxPolicy())


def test_parse_interpreter():
    assert parse_interpreter("python3 -I") == ("python3", "-I")
    assert parse_interpreter(["sh", "-c", "echo True"]) == ("sh", "-c", "echo True")
