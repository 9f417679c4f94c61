"""Gym-style client for the reach environment's JSON-lines TCP protocol.

The client adds no environment semantics of its own: every reset/step is a
single request-response exchange, observations come back as flat float
arrays, and server-side error responses surface as exceptions.
"""

from __future__ import annotations

import json
import socket

import numpy as np

PROTOCOL_VERSION = 1


class ClientError(Exception):
    """Base class for client failures."""


class TransportError(ClientError):
    """Connection lost or unreadable server output."""


class ProtocolError(ClientError):
    """Server answered ok=false; .code holds the server's error code."""

    def __init__(self, code: str, response: dict):
        super().__init__(f"server error: {code}")
        self.code = code
        self.response = response


class VersionMismatchError(ClientError):
    pass


class RemoteReachEnv:
    """One TCP session = one remote environment instance.

    Usage::

        with RemoteReachEnv(port=7777) as env:
            obs, info = env.reset(mode="default", seed=0)
            obs, reward, done, info = env.step([0.1, 0.0, -0.2, 0.0])
    """

    def __init__(self, host: str = "127.0.0.1", port: int = 7777, timeout: float = 10.0):
        self.host = host
        self.port = port
        try:
            self._sock = socket.create_connection((host, port), timeout=timeout)
        except OSError as exc:
            raise TransportError(f"cannot connect to {host}:{port}: {exc}") from exc
        self._fh = self._sock.makefile("rwb")
        self._vocab: list[str] | None = None
        self._tokens: list[int] | None = None
        self._closed = False

    # -- plumbing -----------------------------------------------------------
    def _request(self, payload: dict) -> dict:
        if self._closed:
            raise TransportError("connection already closed")
        try:
            self._fh.write((json.dumps(payload) + "\n").encode("utf-8"))
            self._fh.flush()
            line = self._fh.readline()
        except OSError as exc:
            raise TransportError(f"connection lost: {exc}") from exc
        if not line:
            raise TransportError("server closed the connection")
        try:
            response = json.loads(line)
        except json.JSONDecodeError as exc:
            raise TransportError(f"unparseable server line: {line[:80]!r}") from exc
        version = response.get("version")
        if version != PROTOCOL_VERSION:
            raise VersionMismatchError(
                f"server speaks protocol version {version}, client expects {PROTOCOL_VERSION}"
            )
        if not response.get("ok", False):
            raise ProtocolError(response.get("error", "unknown"), response)
        return response

    # -- environment API -----------------------------------------------------
    def reset(self, mode: str = "default", seed: int = 0):
        """Start an episode; returns (observation, info with instruction tokens)."""
        resp = self._request({"cmd": "reset", "mode": mode, "seed": int(seed)})
        self._tokens = [int(t) for t in resp["instruction_tokens"]]
        obs = np.asarray(resp["observation"], dtype=np.float64)
        return obs, {"instruction_tokens": list(self._tokens), "mode": resp.get("mode", mode)}

    def step(self, action):
        """Apply one action; returns (observation, reward, done, info)."""
        act = [float(a) for a in np.asarray(action, dtype=np.float64).reshape(-1)]
        resp = self._request({"cmd": "step", "action": act})
        obs = np.asarray(resp["observation"], dtype=np.float64)
        info = {
            "success": bool(resp.get("success", False)),
            "hindsight_event": resp.get("hindsight_event"),
            "instruction_tokens": list(self._tokens) if self._tokens else None,
        }
        return obs, float(resp["reward"]), bool(resp["done"]), info

    def vocabulary(self, mode: str | None = None) -> list[str]:
        """Token list, cached after the first fetch."""
        if self._vocab is None or mode is not None:
            payload = {"cmd": "vocab"}
            if mode is not None:
                payload["mode"] = mode
            self._vocab = [str(t) for t in self._request(payload)["tokens"]]
        return list(self._vocab)

    def detokenize(self, tokens) -> str:
        """Instruction words for a token index sequence (stops at <eos>)."""
        vocab = self.vocabulary()
        words = []
        for idx in tokens:
            idx = int(idx)
            if idx >= len(vocab) or idx < 0:
                raise ClientError(f"token {idx} outside vocabulary of {len(vocab)}")
            word = vocab[idx]
            if word == "<eos>":
                break
            if word in ("<pad>", "<bos>"):
                continue
            words.append(word)
        return " ".join(words)

    def close(self):
        if self._closed:
            return
        try:
            self._request({"cmd": "close"})
        except ClientError:
            pass
        finally:
            self._closed = True
            try:
                self._fh.close()
            except OSError:
                pass
            self._sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False
