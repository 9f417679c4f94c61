import os

os.environ.setdefault("OMP_NUM_THREADS", "1")
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")

import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def finite_difference_gradients(forward, params, h=1e-5):
    """Central-difference gradient of a scalar forward() w.r.t. every
    parameter entry. Independent of the autodiff path: only re-runs the
    forward computation at perturbed values."""
    grads = {}
    for name, t in params.items():
        fd = np.zeros_like(t.data)
        it = np.nditer(t.data, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            orig = t.data[i]
            t.data[i] = orig + h
            up = forward()
            t.data[i] = orig - h
            down = forward()
            t.data[i] = orig
            fd[i] = (up - down) / (2.0 * h)
        grads[name] = fd
    return grads


def max_relative_error(a, b, floor=1e-6):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom)) if a.size else 0.0


class FeatureSpaceExpert:
    """Scripted expert driven purely by (features, tokens) — the same surface
    a learned policy sees. Used to validate the evaluation pathway."""

    def __init__(self, mode, env_cfg):
        from langreach.env import reach_controller
        from langreach.language import (
            SHAPE_SYNONYMS,
            build_vocabulary,
            mode_colors,
            mode_shape_classes,
        )

        self._controller = reach_controller
        self._cfg = env_cfg
        self._colors = mode_colors(mode)
        self._shapes = mode_shape_classes(mode)
        self._vocab = build_vocabulary(mode)
        self._synonyms = SHAPE_SYNONYMS

    def select_action(self, features, tokens, stochastic=False):
        n_col, n_sh = len(self._colors), len(self._shapes)
        block = 6 + n_col + n_sh
        effector = features[:3]
        words = self._vocab.detokenize(tokens).split()
        want_color = words[2]
        want_class = next(c for c, syns in self._synonyms.items() if words[3] in syns)
        for i in range(2):
            off = 4 + i * block
            color = self._colors[int(np.argmax(features[off + 6 : off + 6 + n_col]))]
            shape = self._shapes[int(np.argmax(features[off + 6 + n_col : off + block]))]
            if color == want_color and shape == want_class:
                return self._controller(effector, features[off : off + 3], self._cfg)
        raise AssertionError("no object matches the instruction")
