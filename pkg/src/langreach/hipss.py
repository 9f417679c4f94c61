"""Self-supervised hindsight instruction generator.

Successful episodes donate (state sequence, instruction) pairs. A GRU
encoder folds the state sequence into a context vector; a GRU decoder with
word embeddings autoregressively emits the instruction, trained with a
position-wise cross-entropy so the total loss is the negative log of the
factorized sequence probability. Once enough training pairs exist, failed
episodes with a wrong-object interaction get their instruction replaced by
a greedy decode from the states up to the interaction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, embedding_lookup, no_grad, softmax, softmax_cross_entropy
from .language import BOS, EOS, INSTRUCTION_LENGTH, PAD
from .nn import Adam, GruState, ParameterSet, affine, gru_step, gru_step_masked, init_affine, init_embedding, init_gru


@dataclass
class HipssConfig:
    hidden: int = 64
    layers: int = 1
    embed_dim: int = 16
    lr: float = 1e-3
    batch_size: int = 16
    encoder_stride: int = 2
    encoder_cap: int = 32
    warmup_samples: int = 50
    train_ratio: int = 5
    val_ratio: int = 1


@dataclass
class HipssSample:
    states: np.ndarray   # [L, feature_dim], subsampled prefix of the episode
    tokens: np.ndarray   # [INSTRUCTION_LENGTH] target indices ending in EOS


class HipssDataset:
    """Train/validation pools with a deterministic per-episode round-robin split."""

    def __init__(self, cfg: HipssConfig):
        self.cfg = cfg
        self.train: list[HipssSample] = []
        self.val: list[HipssSample] = []
        self._count = 0

    def add(self, sample: HipssSample):
        cycle = self.cfg.train_ratio + self.cfg.val_ratio
        if self._count % cycle < self.cfg.train_ratio:
            self.train.append(sample)
        else:
            self.val.append(sample)
        self._count += 1

    def __len__(self) -> int:
        return self._count


def subsample_states(states: np.ndarray, stride: int = 2, cap: int = 32) -> np.ndarray:
    """Every stride-th state plus the final one, keeping at most cap rows."""
    n = len(states)
    if n == 0:
        raise ValueError("empty state sequence")
    idx = list(range(0, n, stride))
    if idx[-1] != n - 1:
        idx.append(n - 1)
    if len(idx) > cap:
        idx = idx[-cap:]
    return np.asarray(states)[idx]


class HipssModel:
    """GRU encoder-decoder over state sequences and word indices."""

    def __init__(self, feature_dim: int, vocab_size: int, cfg: HipssConfig, seed: int, feature_scale=None):
        self.cfg = cfg
        self.vocab_size = vocab_size
        self.feature_dim = feature_dim
        self.feature_scale = np.ones(feature_dim) if feature_scale is None else np.asarray(feature_scale)
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
        p = ParameterSet()
        init_gru(p, "enc", feature_dim, cfg.hidden, rng, cfg.layers)
        init_gru(p, "dec", cfg.embed_dim, cfg.hidden, rng, cfg.layers)
        init_embedding(p, "embed", vocab_size, cfg.embed_dim, rng)
        init_affine(p, "out", cfg.hidden, vocab_size, rng)
        self.params = p

    def optimizer(self) -> Adam:
        return Adam(self.params, lr=self.cfg.lr)

    # -- encoder ---------------------------------------------------------
    def encode_batch(self, states: np.ndarray, lengths: np.ndarray) -> GruState:
        """Final hidden state over padded [B, L, D] sequences."""
        batch, max_len, _ = states.shape
        if max_len == 0:
            raise ValueError("cannot encode a zero-length state sequence")
        scaled = states * self.feature_scale
        state = GruState.zeros(self.cfg.layers, batch, self.cfg.hidden)
        for step in range(max_len):
            x = Tensor(scaled[:, step, :])
            mask = (lengths > step).astype(np.float64)
            if mask.all():
                _, state = gru_step(x, state, self.params, "enc")
            else:
                _, state = gru_step_masked(x, state, mask, self.params, "enc")
        return state

    def encode(self, states: np.ndarray) -> np.ndarray:
        """Context vector for one [L, D] sequence."""
        states = np.asarray(states, dtype=np.float64)
        with no_grad():
            state = self.encode_batch(states[None, :, :], np.array([len(states)]))
        return state.top.data[0].copy()

    # -- decoder -----------------------------------------------------------
    def _decode_teacher_forced(self, context: GruState, targets: np.ndarray):
        """Per-position logits under teacher forcing; targets [B, N]."""
        batch, n = targets.shape
        inputs = np.concatenate([np.full((batch, 1), BOS, dtype=np.int64), targets[:, :-1]], axis=1)
        state = context
        logits = []
        for step in range(n):
            emb = embedding_lookup(self.params["embed"], inputs[:, step])
            out, state = gru_step(emb, state, self.params, "dec")
            logits.append(affine(out, self.params, "out"))
        return logits

    def teacher_forced_loss(self, states: np.ndarray, lengths: np.ndarray, targets: np.ndarray):
        """Summed cross-entropy over all positions and batch rows."""
        context = self.encode_batch(states, lengths)
        logits = self._decode_teacher_forced(context, targets)
        losses = [softmax_cross_entropy(lg, targets[:, i]) for i, lg in enumerate(logits)]
        total = losses[0]
        for piece in losses[1:]:
            total = total + piece
        return total, logits

    def sequence_distributions(self, states: np.ndarray, targets: np.ndarray):
        """(per-position distributions [N, V], total loss) for one sample."""
        states = np.asarray(states, dtype=np.float64)
        targets = np.asarray(targets, dtype=np.int64)
        with no_grad():
            loss, logits = self.teacher_forced_loss(
                states[None, :, :], np.array([len(states)]), targets[None, :]
            )
        probs = np.stack([softmax(lg.data[0]) for lg in logits])
        return probs, loss.item()

    def predict(self, states: np.ndarray, max_len: int = INSTRUCTION_LENGTH) -> list[int]:
        """Greedy decode from BOS until EOS, at most max_len tokens."""
        states = np.asarray(states, dtype=np.float64)
        with no_grad():
            state = self.encode_batch(states[None, :, :], np.array([len(states)]))
            token = BOS
            out_tokens = []
            for _ in range(max_len):
                emb = embedding_lookup(self.params["embed"], np.array([token]))
                out, state = gru_step(emb, state, self.params, "dec")
                logits = affine(out, self.params, "out")
                token = int(np.argmax(logits.data[0]))
                out_tokens.append(token)
                if token == EOS:
                    break
        return out_tokens

    # -- training / evaluation ------------------------------------------------
    def _batch_arrays(self, samples: list[HipssSample]):
        lengths = np.array([len(s.states) for s in samples])
        max_len = int(lengths.max())
        feat = np.zeros((len(samples), max_len, self.feature_dim))
        for i, s in enumerate(samples):
            feat[i, : len(s.states)] = s.states
        targets = np.stack([np.asarray(s.tokens, dtype=np.int64) for s in samples])
        return feat, lengths, targets

    def train_batch(self, samples: list[HipssSample], opt: Adam) -> float:
        feat, lengths, targets = self._batch_arrays(samples)
        loss, _ = self.teacher_forced_loss(feat, lengths, targets)
        scaled = loss * Tensor(1.0 / len(samples))
        opt.zero_grad()
        scaled.backward()
        opt.step()
        return scaled.item()

    def train_epoch(self, dataset: HipssDataset, opt: Adam, rng: np.random.Generator) -> float:
        samples = dataset.train
        if not samples:
            raise ValueError("empty training split")
        order = rng.permutation(len(samples))
        losses = []
        bs = self.cfg.batch_size
        for start in range(0, len(samples), bs):
            batch = [samples[i] for i in order[start : start + bs]]
            losses.append(self.train_batch(batch, opt))
        return float(np.mean(losses))

    def word_accuracy(self, samples: list[HipssSample]) -> float:
        """Teacher-forced argmax agreement over non-PAD target positions."""
        if not samples:
            raise ValueError("empty evaluation split")
        correct = 0
        total = 0
        bs = max(self.cfg.batch_size, 64)
        with no_grad():
            for start in range(0, len(samples), bs):
                chunk = samples[start : start + bs]
                feat, lengths, targets = self._batch_arrays(chunk)
                context = self.encode_batch(feat, lengths)
                logits = self._decode_teacher_forced(context, targets)
                pred = np.stack([lg.data.argmax(axis=1) for lg in logits], axis=1)
                keep = targets != PAD
                correct += int(((pred == targets) & keep).sum())
                total += int(keep.sum())
        return correct / total


def episode_sample(states: np.ndarray, tokens, cfg: HipssConfig) -> HipssSample:
    sub = subsample_states(np.asarray(states), cfg.encoder_stride, cfg.encoder_cap)
    return HipssSample(states=sub, tokens=np.asarray(tokens, dtype=np.int64))


def maybe_relabel(model: HipssModel, dataset: HipssDataset, states: np.ndarray, cfg: HipssConfig):
    """Predicted instruction tokens for a failed episode prefix, or None
    while the training split is below the warmup threshold."""
    if len(dataset.train) < cfg.warmup_samples:
        return None
    sub = subsample_states(np.asarray(states), cfg.encoder_stride, cfg.encoder_cap)
    return model.predict(sub)
