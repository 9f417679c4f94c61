import json
import os
import socket
import subprocess
import sys
import time

import pytest

REPO_ROOT = os.path.abspath(os.path.join(os.path.dirname(__file__), "..", ".."))
SERVER_CLI = [sys.executable, "-m", "langreach.cli"]
TRACE_SCRIPT = os.path.join(REPO_ROOT, "scripts", "record_golden_trace.py")


def free_port() -> int:
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def wait_for_port(port, timeout=10.0):
    deadline = time.time() + timeout
    while time.time() < deadline:
        try:
            with socket.create_connection(("127.0.0.1", port), timeout=0.5):
                return
        except OSError:
            time.sleep(0.05)
    raise RuntimeError(f"server on port {port} did not come up")


@pytest.fixture(scope="session")
def live_server():
    """The real environment server, driven through its public CLI."""
    port = free_port()
    env = dict(os.environ)
    env["PYTHONPATH"] = os.path.join(REPO_ROOT, "src") + os.pathsep + env.get("PYTHONPATH", "")
    proc = subprocess.Popen(
        SERVER_CLI + ["serve", "--port", str(port), "--mode", "default"],
        env=env,
        stdout=subprocess.DEVNULL,
        stderr=subprocess.DEVNULL,
    )
    try:
        wait_for_port(port)
        yield port
    finally:
        proc.terminate()
        proc.wait(timeout=10)


@pytest.fixture(scope="session")
def golden_trace(tmp_path_factory):
    """Golden rollouts recorded by the in-process environment."""
    path = tmp_path_factory.mktemp("golden") / "trace.jsonl"
    env = dict(os.environ)
    env["PYTHONPATH"] = os.path.join(REPO_ROOT, "src") + os.pathsep + env.get("PYTHONPATH", "")
    subprocess.run(
        [sys.executable, TRACE_SCRIPT, "--mode", "default", "--episodes", "20",
         "--seed", "0", "--out", str(path)],
        env=env,
        check=True,
        stdout=subprocess.DEVNULL,
    )
    with open(path) as fh:
        return [json.loads(line) for line in fh]
