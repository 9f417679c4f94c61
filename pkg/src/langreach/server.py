"""Newline-delimited JSON TCP server exposing the reach environment.

One connection = one session = one private environment instance. Each
request is a single JSON object on its own line; each response echoes an
optional client id field and always carries the protocol version. Bad
input is answered in-band and never tears the session down.

Requests:
    {"cmd": "reset", "mode": "default", "seed": 0}
    {"cmd": "step", "action": [dx, dy, dz, grip]}
    {"cmd": "vocab", "mode": "default"}
    {"cmd": "close"}
"""

from __future__ import annotations

import json
import logging
import socketserver
import threading

from .env import EnvConfig, ReachEnv
from .language import TaskMode, build_vocabulary

log = logging.getLogger(__name__)

PROTOCOL_VERSION = 1


def _observation_payload(obs) -> dict:
    return {
        "observation": [float(v) for v in obs.features],
        "instruction_tokens": [int(t) for t in obs.tokens],
    }


def _event_payload(event) -> dict:
    return {
        "t": event.t,
        "object_index": event.object_index,
        "instruction_tokens": [int(t) for t in event.instruction.tokens],
    }


class _Session:
    """Per-connection environment plus episode bookkeeping."""

    def __init__(self, default_mode: TaskMode, env_cfg: EnvConfig | None):
        self.default_mode = default_mode
        self.env_cfg = env_cfg
        self.env: ReachEnv | None = None
        self.done = True

    def handle(self, request: dict) -> dict:
        cmd = request.get("cmd")
        if cmd == "reset":
            return self._reset(request)
        if cmd == "step":
            return self._step(request)
        if cmd == "vocab":
            mode = TaskMode.parse(request.get("mode", self.default_mode))
            return {"ok": True, "tokens": list(build_vocabulary(mode).tokens)}
        if cmd == "close":
            return {"ok": True, "closing": True}
        return {"ok": False, "error": "unknown_cmd"}

    def _reset(self, request: dict) -> dict:
        mode = TaskMode.parse(request.get("mode", self.default_mode))
        seed = int(request.get("seed", 0))
        if self.env is None or self.env.mode != mode:
            self.env = ReachEnv(mode, self.env_cfg)
        obs, _ = self.env.reset(seed)
        self.done = False
        return {"ok": True, "mode": mode.value, **_observation_payload(obs)}

    def _step(self, request: dict) -> dict:
        if self.env is None or self.env.state is None:
            return {"ok": False, "error": "no_episode"}
        if self.done:
            return {"ok": False, "error": "episode_over"}
        action = request.get("action")
        if not isinstance(action, (list, tuple)) or len(action) != 4:
            return {"ok": False, "error": "bad_action"}
        try:
            obs, reward, done, info = self.env.step(action)
        except (ValueError, TypeError):
            return {"ok": False, "error": "bad_action"}
        self.done = done
        event = info["hindsight_event"]
        return {
            "ok": True,
            "reward": float(reward),
            "done": bool(done),
            "success": bool(info["success"]),
            "hindsight_event": _event_payload(event) if event is not None else None,
            **_observation_payload(obs),
        }


class _Handler(socketserver.StreamRequestHandler):
    def handle(self):
        server: EnvServer = self.server
        if not server.try_acquire_session():
            self._send({"ok": False, "error": "too_many_sessions"})
            return
        try:
            session = _Session(server.default_mode, server.env_cfg)
            for raw in self.rfile:
                line = raw.strip()
                if not line:
                    continue
                rid = None
                try:
                    request = json.loads(line)
                    if not isinstance(request, dict):
                        raise ValueError("request must be an object")
                    rid = request.get("id")
                    response = session.handle(request)
                except (json.JSONDecodeError, ValueError) as exc:
                    log.debug("parse failure: %s", exc)
                    response = {"ok": False, "error": "parse"}
                except Exception as exc:  # defensive: keep the session alive
                    log.warning("request failed: %s", exc)
                    response = {"ok": False, "error": "internal", "detail": str(exc)}
                if rid is not None:
                    response["id"] = rid
                closing = response.pop("closing", False)
                self._send(response)
                if closing:
                    break
        finally:
            server.release_session()

    def _send(self, response: dict):
        response.setdefault("version", PROTOCOL_VERSION)
        self.wfile.write((json.dumps(response) + "\n").encode("utf-8"))
        self.wfile.flush()


class EnvServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, host: str, port: int, mode: TaskMode = TaskMode.DEFAULT,
                 env_cfg: EnvConfig | None = None, max_sessions: int = 32):
        super().__init__((host, port), _Handler)
        self.default_mode = TaskMode.parse(mode)
        self.env_cfg = env_cfg
        self.max_sessions = max_sessions
        self._active = 0
        self._lock = threading.Lock()

    def try_acquire_session(self) -> bool:
        with self._lock:
            if self._active >= self.max_sessions:
                return False
            self._active += 1
            return True

    def release_session(self):
        with self._lock:
            self._active = max(0, self._active - 1)


def serve(port: int, mode: str = "default", host: str = "127.0.0.1",
          max_sessions: int = 32, env_cfg: EnvConfig | None = None):
    """Blocking server loop; Ctrl-C drains and shuts down."""
    server = EnvServer(host, port, TaskMode.parse(mode), env_cfg, max_sessions)
    log.info("serving mode=%s on %s:%d", server.default_mode.value, host, server.server_address[1])
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.shutdown()
        server.server_close()
    return server
