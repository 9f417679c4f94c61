"""Parameter containers, layers and the optimizer built on the autodiff core.

Layers are plain functions over a ParameterSet: a layer's parameters live
under a string prefix ("actor/trunk0/W", ...). Initialization follows
uniform fan-in scaling for weights, zeros for biases and U[-0.1, 0.1] for
embedding tables.
"""

from __future__ import annotations

import io
import struct

import numpy as np

from .autodiff import (
    DimensionError,
    Tensor,
    add,
    assert_finite,
    matmul,
    mul,
    sigmoid,
    slice_cols,
    tanh,
)

CHECKPOINT_MAGIC = b"LRCK"
CHECKPOINT_VERSION = 1


class ParameterSet:
    """Named, ordered map of trainable tensors plus an optimizer step count."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self.step_count = 0

    def add(self, name: str, data: np.ndarray) -> Tensor:
        if name in self._params:
            raise ValueError(f"duplicate parameter name {name!r}")
        t = Tensor(np.asarray(data, dtype=np.float64), requires_grad=True)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self):
        return list(self._params)

    def items(self):
        return self._params.items()

    def tensors(self):
        return list(self._params.values())

    def zero_grad(self):
        for t in self._params.values():
            t.grad = None

    def copy(self) -> "ParameterSet":
        out = ParameterSet()
        for name, t in self._params.items():
            out.add(name, t.data.copy())
        out.step_count = self.step_count
        return out

    def load_values(self, other: "ParameterSet"):
        """In-place copy of values from a set with identical names/shapes."""
        if other.names() != self.names():
            raise ValueError("parameter name tables differ")
        for name, t in self._params.items():
            src = other[name]
            if src.data.shape != t.data.shape:
                raise ValueError(f"shape mismatch for {name!r}")
            t.data[...] = src.data
        self.step_count = other.step_count

    def polyak_update(self, online: "ParameterSet", tau: float):
        """self <- (1 - tau) * self + tau * online, name-wise."""
        for name, t in self._params.items():
            t.data *= 1.0 - tau
            t.data += tau * online[name].data

    def check_finite(self):
        for name, t in self._params.items():
            assert_finite(t.data, f"parameter {name!r}")


# -- initialization -------------------------------------------------------

def uniform_fan_in(rng: np.random.Generator, n_in: int, shape) -> np.ndarray:
    bound = 1.0 / np.sqrt(n_in)
    return rng.uniform(-bound, bound, size=shape)


def init_affine(params: ParameterSet, prefix: str, n_in: int, n_out: int, rng: np.random.Generator):
    params.add(f"{prefix}/W", uniform_fan_in(rng, n_in, (n_in, n_out)))
    params.add(f"{prefix}/b", np.zeros(n_out))


def init_embedding(params: ParameterSet, name: str, vocab_size: int, dim: int, rng: np.random.Generator):
    params.add(name, rng.uniform(-0.1, 0.1, size=(vocab_size, dim)))


def init_gru(params: ParameterSet, prefix: str, n_in: int, n_hidden: int, rng: np.random.Generator, layers: int = 1):
    # Gate projections are stored fused as [d_in, 3H] / [H, 3H] with column
    # blocks ordered reset | update | candidate.
    for layer in range(layers):
        d_in = n_in if layer == 0 else n_hidden
        params.add(f"{prefix}/l{layer}/Wi", uniform_fan_in(rng, d_in, (d_in, 3 * n_hidden)))
        params.add(f"{prefix}/l{layer}/Wh", uniform_fan_in(rng, n_hidden, (n_hidden, 3 * n_hidden)))
        params.add(f"{prefix}/l{layer}/bi", np.zeros(3 * n_hidden))
        params.add(f"{prefix}/l{layer}/bh", np.zeros(3 * n_hidden))


# -- layers ----------------------------------------------------------------

def affine(x: Tensor, params: ParameterSet, prefix: str) -> Tensor:
    """y = x W + b with x of shape [B, n_in]."""
    W = params[f"{prefix}/W"]
    b = params[f"{prefix}/b"]
    if x.data.ndim != 2 or x.data.shape[1] != W.data.shape[0]:
        raise DimensionError(
            f"affine {prefix!r}: input {x.data.shape} incompatible with weight {W.data.shape}"
        )
    return add(matmul(x, W), b)


class GruState:
    """Stacked hidden states, one [B, H] tensor per layer; zeros at t=0."""

    def __init__(self, hidden: list[Tensor]):
        self.hidden = hidden

    @classmethod
    def zeros(cls, layers: int, batch: int, hidden_dim: int) -> "GruState":
        return cls([Tensor(np.zeros((batch, hidden_dim))) for _ in range(layers)])

    @property
    def top(self) -> Tensor:
        return self.hidden[-1]


def gru_cell(x: Tensor, h: Tensor, params: ParameterSet, prefix: str) -> Tensor:
    """Standard reset/update-gate cell; gates squashed into (0, 1)."""
    hidden = h.data.shape[1]
    gi = add(matmul(x, params[f"{prefix}/Wi"]), params[f"{prefix}/bi"])
    gh = add(matmul(h, params[f"{prefix}/Wh"]), params[f"{prefix}/bh"])
    r = sigmoid(add(slice_cols(gi, 0, hidden), slice_cols(gh, 0, hidden)))
    z = sigmoid(add(slice_cols(gi, hidden, 2 * hidden), slice_cols(gh, hidden, 2 * hidden)))
    n = tanh(add(slice_cols(gi, 2 * hidden, 3 * hidden), mul(r, slice_cols(gh, 2 * hidden, 3 * hidden))))
    one_minus_z = add(mul(z, Tensor(-1.0)), Tensor(1.0))
    return add(mul(one_minus_z, n), mul(z, h))


def gru_step(x: Tensor, state: GruState, params: ParameterSet, prefix: str) -> tuple[Tensor, GruState]:
    """One time step through the stacked cells; returns (top output, new state)."""
    new_hidden = []
    inp = x
    for layer, h in enumerate(state.hidden):
        if inp.data.shape[0] != h.data.shape[0]:
            raise DimensionError("gru_step: batch size of input and state differ")
        h_new = gru_cell(inp, h, params, f"{prefix}/l{layer}")
        new_hidden.append(h_new)
        inp = h_new
    return inp, GruState(new_hidden)


def gru_sequence(xs, state: GruState, params: ParameterSet, prefix: str) -> tuple[list[Tensor], GruState]:
    """Fold gru_step over a sequence; an empty sequence returns the state as is."""
    outputs = []
    for x in xs:
        out, state = gru_step(x, state, params, prefix)
        outputs.append(out)
    return outputs, state


def gru_step_masked(x: Tensor, state: GruState, mask: np.ndarray, params: ParameterSet, prefix: str):
    """gru_step that freezes rows where mask==0 (padding in a batch)."""
    m = Tensor(np.asarray(mask, dtype=np.float64).reshape(-1, 1))
    keep = Tensor(1.0 - m.data)
    out, new_state = gru_step(x, state, params, prefix)
    mixed = [add(mul(m, h_new), mul(keep, h_old)) for h_new, h_old in zip(new_state.hidden, state.hidden)]
    return mixed[-1], GruState(mixed)


# -- optimizer ---------------------------------------------------------------

class Adam:
    """Bias-corrected Adam over one ParameterSet."""

    def __init__(self, params: ParameterSet, lr: float, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self._m = {name: np.zeros_like(t.data) for name, t in params.items()}
        self._v = {name: np.zeros_like(t.data) for name, t in params.items()}
        self._t = 0

    def zero_grad(self):
        self.params.zero_grad()

    def step(self):
        self._t += 1
        b1t = 1.0 - self.beta1 ** self._t
        b2t = 1.0 - self.beta2 ** self._t
        for name, p in self.params.items():
            if p.grad is None:
                raise ValueError(f"parameter {name!r} has no gradient; run backward first")
            m = self._m[name]
            v = self._v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * p.grad
            v *= self.beta2
            v += (1.0 - self.beta2) * (p.grad * p.grad)
            p.data -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)
        self.params.step_count += 1


# -- checkpoint serialization -------------------------------------------------
#
# Flat binary layout, little-endian throughout:
#   magic "LRCK" | u32 version | u64 step_count | u32 n_params
#   per parameter: u32 name_len | name utf-8 | u32 ndim | u32 dims...
#   then raw float64 payloads, one per parameter, in name-table order.

def save_checkpoint(params: ParameterSet, path: str):
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    buf.write(struct.pack("<IQI", CHECKPOINT_VERSION, params.step_count, len(params)))
    for name, t in params.items():
        raw = name.encode("utf-8")
        buf.write(struct.pack("<I", len(raw)))
        buf.write(raw)
        buf.write(struct.pack("<I", t.data.ndim))
        for d in t.data.shape:
            buf.write(struct.pack("<I", d))
    for _, t in params.items():
        buf.write(np.ascontiguousarray(t.data, dtype="<f8").tobytes())
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def load_checkpoint(path: str) -> ParameterSet:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != CHECKPOINT_MAGIC:
        raise ValueError("not a parameter checkpoint (bad magic)")
    version, step_count, n = struct.unpack_from("<IQI", blob, 4)
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    off = 4 + struct.calcsize("<IQI")
    entries = []
    for _ in range(n):
        (name_len,) = struct.unpack_from("<I", blob, off)
        off += 4
        name = blob[off : off + name_len].decode("utf-8")
        off += name_len
        (ndim,) = struct.unpack_from("<I", blob, off)
        off += 4
        shape = struct.unpack_from(f"<{ndim}I", blob, off) if ndim else ()
        off += 4 * ndim
        entries.append((name, tuple(shape)))
    out = ParameterSet()
    for name, shape in entries:
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(blob, dtype="<f8", count=count, offset=off).reshape(shape)
        off += count * 8
        out.add(name, arr.copy())
    out.step_count = step_count
    return out
