"""Language-conditioned Soft Actor-Critic.

Observations are split into a numeric feature vector and instruction token
indices. Tokens pass through a word representation (one-hot rows or a
trainable embedding table) into a GRU whose final hidden state is the
instruction feature; the actor and the critic pair each own a separate
encoder. The actor emits a squashed Gaussian; twin critics with Polyak
targets and an auto-tuned entropy temperature complete the update.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import (
    Tensor,
    add,
    clamp,
    concat,
    div,
    embedding_lookup,
    exp,
    log,
    minimum,
    mul,
    no_grad,
    relu,
    square,
    sub,
    tanh,
    tmean,
    tsum,
)
from .nn import (
    Adam,
    GruState,
    ParameterSet,
    affine,
    gru_step,
    init_affine,
    init_embedding,
    init_gru,
    load_checkpoint,
    save_checkpoint,
)

LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass
class SACConfig:
    gamma: float = 0.99
    tau: float = 0.005
    batch_size: int = 256
    actor_lr: float = 3e-4
    critic_lr: float = 3e-4
    alpha_lr: float = 3e-4
    hidden: int = 96
    instr_hidden: int = 64
    instr_layers: int = 1
    embed_dim: int = 16
    representation: str = "learned_embedding"   # or "one_hot"
    target_entropy: float | None = None          # default -action_dim
    fixed_temperature: float | None = None       # None = auto-tune
    deterministic_backup: bool = False
    log_std_min: float = -20.0
    log_std_max: float = 2.0
    buffer_capacity: int = 1_000_000
    random_steps: int = 1000
    updates_per_step: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must be in (0, 1)")
        if not 0.0 < self.tau <= 1.0:
            raise ValueError("tau must be in (0, 1]")
        if self.representation not in ("one_hot", "learned_embedding"):
            raise ValueError(f"unknown word representation {self.representation!r}")


class SACAgent:
    def __init__(self, feature_dim: int, action_dim: int, vocab_size: int, cfg: SACConfig,
                 seed: int, feature_scale=None):
        self.cfg = cfg
        self.feature_dim = feature_dim
        self.action_dim = action_dim
        self.vocab_size = vocab_size
        self.feature_scale = np.ones(feature_dim) if feature_scale is None else np.asarray(feature_scale)
        self.target_entropy = cfg.target_entropy if cfg.target_entropy is not None else -float(action_dim)

        ss = np.random.SeedSequence(seed)
        init_ss, action_ss, update_ss = ss.spawn(3)
        init_rng = np.random.Generator(np.random.PCG64(init_ss))
        self.action_rng = np.random.Generator(np.random.PCG64(action_ss))
        self.update_rng = np.random.Generator(np.random.PCG64(update_ss))

        token_dim = vocab_size if cfg.representation == "one_hot" else cfg.embed_dim
        self._one_hot_rows = Tensor(np.eye(vocab_size)) if cfg.representation == "one_hot" else None

        self.actor = ParameterSet()
        self._init_instruction_encoder(self.actor, init_rng)
        trunk_in = feature_dim + cfg.instr_hidden
        init_affine(self.actor, "trunk0", trunk_in, cfg.hidden, init_rng)
        init_affine(self.actor, "trunk1", cfg.hidden, cfg.hidden, init_rng)
        init_affine(self.actor, "mean", cfg.hidden, action_dim, init_rng)
        init_affine(self.actor, "log_std", cfg.hidden, action_dim, init_rng)

        self.critic = ParameterSet()
        self._init_instruction_encoder(self.critic, init_rng)
        q_in = feature_dim + cfg.instr_hidden + action_dim
        for q in ("q1", "q2"):
            init_affine(self.critic, f"{q}/trunk0", q_in, cfg.hidden, init_rng)
            init_affine(self.critic, f"{q}/trunk1", cfg.hidden, cfg.hidden, init_rng)
            init_affine(self.critic, f"{q}/head", cfg.hidden, 1, init_rng)
        self.target_critic = self.critic.copy()

        self.alpha_params = ParameterSet()
        self.alpha_params.add("log_alpha", np.zeros(()))

        self.actor_opt = Adam(self.actor, cfg.actor_lr)
        self.critic_opt = Adam(self.critic, cfg.critic_lr)
        self.alpha_opt = Adam(self.alpha_params, cfg.alpha_lr)
        self.updates = 0
        self._token_dim = token_dim

    def _init_instruction_encoder(self, params: ParameterSet, rng):
        cfg = self.cfg
        if cfg.representation == "learned_embedding":
            init_embedding(params, "instr/embed", self.vocab_size, cfg.embed_dim, rng)
            token_dim = cfg.embed_dim
        else:
            token_dim = self.vocab_size
        init_gru(params, "instr/gru", token_dim, cfg.instr_hidden, rng, cfg.instr_layers)

    # -- forward passes ------------------------------------------------------
    def encode_instruction(self, tokens: np.ndarray, params: ParameterSet) -> Tensor:
        """Final GRU hidden state over the token sequence; tokens [B, L].

        A batch holds few distinct instructions, so only the unique token
        rows run through the GRU; rows are gathered back afterwards.
        """
        tokens = np.asarray(tokens, dtype=np.int64)
        if tokens.ndim != 2:
            raise ValueError("tokens must be [batch, length]")
        if tokens.size and (tokens.min() < 0 or tokens.max() >= self.vocab_size):
            raise IndexError("token index outside vocabulary")
        unique, inverse = np.unique(tokens, axis=0, return_inverse=True)
        state = GruState.zeros(self.cfg.instr_layers, unique.shape[0], self.cfg.instr_hidden)
        for step in range(unique.shape[1]):
            idx = unique[:, step]
            if self.cfg.representation == "learned_embedding":
                x = embedding_lookup(params["instr/embed"], idx)
            else:
                x = embedding_lookup(self._one_hot_rows, idx)
            _, state = gru_step(x, state, params, "instr/gru")
        inverse = inverse.reshape(-1)
        if unique.shape[0] == tokens.shape[0] and np.array_equal(inverse, np.arange(tokens.shape[0])):
            return state.top
        return embedding_lookup(state.top, inverse)

    def _scaled(self, features: np.ndarray) -> Tensor:
        return Tensor(np.asarray(features) * self.feature_scale)

    def _actor_heads(self, obs: np.ndarray, tokens: np.ndarray) -> tuple[Tensor, Tensor]:
        instr = self.encode_instruction(tokens, self.actor)
        x = concat([self._scaled(obs), instr], axis=1)
        h = relu(affine(x, self.actor, "trunk0"))
        h = relu(affine(h, self.actor, "trunk1"))
        mean = affine(h, self.actor, "mean")
        log_std = clamp(affine(h, self.actor, "log_std"), self.cfg.log_std_min, self.cfg.log_std_max)
        return mean, log_std

    def _sample(self, mean: Tensor, log_std: Tensor, rng: np.random.Generator) -> tuple[Tensor, Tensor]:
        """Reparameterized squashed-Gaussian action and its log-density [B, 1]."""
        std = exp(log_std)
        noise = Tensor(rng.standard_normal(mean.shape))
        pre = add(mean, mul(std, noise))
        action = tanh(pre)
        z = div(sub(pre, mean), std)
        log_gauss = sub(mul(square(z), Tensor(-0.5)), add(log_std, Tensor(0.5 * LOG_2PI)))
        correction = log(add(sub(Tensor(1.0), square(action)), Tensor(1e-6)))
        logp = tsum(sub(log_gauss, correction), axis=1, keepdims=True)
        return action, logp

    def _q_value(self, params: ParameterSet, which: str, obs, tokens, action: Tensor,
                 instr: Tensor | None = None) -> Tensor:
        if instr is None:
            instr = self.encode_instruction(tokens, params)
        x = concat([self._scaled(obs), instr, action], axis=1)
        h = relu(affine(x, params, f"{which}/trunk0"))
        h = relu(affine(h, params, f"{which}/trunk1"))
        return affine(h, params, f"{which}/head")

    @property
    def alpha(self) -> float:
        if self.cfg.fixed_temperature is not None:
            return float(self.cfg.fixed_temperature)
        return float(np.exp(self.alpha_params["log_alpha"].data))

    # -- acting ------------------------------------------------------------
    def select_action(self, features: np.ndarray, tokens: np.ndarray, stochastic: bool) -> np.ndarray:
        obs = np.asarray(features, dtype=np.float64)[None, :]
        toks = np.asarray(tokens, dtype=np.int64)[None, :]
        with no_grad():
            mean, log_std = self._actor_heads(obs, toks)
            if stochastic:
                action, _ = self._sample(mean, log_std, self.action_rng)
            else:
                action = tanh(mean)
        return action.data[0].copy()

    # -- learning -------------------------------------------------------------
    def bootstrap_targets(self, batch: dict) -> np.ndarray:
        """TD targets: reward plus done-masked entropy-adjusted twin-min backup."""
        cfg = self.cfg
        rewards = batch["rewards"].reshape(-1, 1)
        done = batch["done"].reshape(-1, 1)
        next_obs = batch["next_obs"]
        tokens = batch["tokens"]
        with no_grad():
            mean2, log_std2 = self._actor_heads(next_obs, tokens)
            if cfg.deterministic_backup:
                a2 = tanh(mean2)
                logp2 = np.zeros((next_obs.shape[0], 1))
            else:
                a2, logp2_t = self._sample(mean2, log_std2, self.update_rng)
                logp2 = logp2_t.data
            instr_t = self.encode_instruction(tokens, self.target_critic)
            q1t = self._q_value(self.target_critic, "q1", next_obs, tokens, a2, instr_t).data
            q2t = self._q_value(self.target_critic, "q2", next_obs, tokens, a2, instr_t).data
            target_v = np.minimum(q1t, q2t) - self.alpha * logp2
        return rewards + cfg.gamma * (1.0 - done) * target_v

    def update(self, batch: dict) -> dict:
        cfg = self.cfg
        obs = batch["obs"]
        tokens = batch["tokens"]
        actions = batch["actions"]
        alpha = self.alpha
        y = Tensor(self.bootstrap_targets(batch))

        # critic regression toward the entropy-adjusted bootstrap target
        self.critic_opt.zero_grad()
        instr_c = self.encode_instruction(tokens, self.critic)
        a_t = Tensor(actions)
        q1 = self._q_value(self.critic, "q1", obs, tokens, a_t, instr_c)
        q2 = self._q_value(self.critic, "q2", obs, tokens, a_t, instr_c)
        critic_loss = add(tmean(square(sub(q1, y))), tmean(square(sub(q2, y))))
        critic_loss.backward()
        self.critic_opt.step()

        # actor ascends the entropy-regularized twin-min Q
        self.actor_opt.zero_grad()
        self.critic.zero_grad()
        mean, log_std = self._actor_heads(obs, tokens)
        a_pi, logp = self._sample(mean, log_std, self.update_rng)
        instr_c2 = self.encode_instruction(tokens, self.critic)
        q1_pi = self._q_value(self.critic, "q1", obs, tokens, a_pi, instr_c2)
        q2_pi = self._q_value(self.critic, "q2", obs, tokens, a_pi, instr_c2)
        actor_loss = tmean(sub(mul(Tensor(alpha), logp), minimum(q1_pi, q2_pi)))
        actor_loss.backward()
        self.actor_opt.step()

        alpha_loss_val = 0.0
        if cfg.fixed_temperature is None:
            self.alpha_opt.zero_grad()
            gap = float(np.mean(logp.data) + self.target_entropy)
            alpha_loss = mul(self.alpha_params["log_alpha"], Tensor(-gap))
            alpha_loss.backward()
            self.alpha_opt.step()
            alpha_loss_val = -float(self.alpha_params["log_alpha"].data) * gap

        self.target_critic.polyak_update(self.critic, cfg.tau)
        self.updates += 1
        self.actor.check_finite()
        self.critic.check_finite()
        self.alpha_params.check_finite()

        return {
            "critic_loss": critic_loss.item(),
            "actor_loss": actor_loss.item(),
            "alpha": self.alpha,
            "alpha_loss": alpha_loss_val,
        }

    # -- persistence -------------------------------------------------------------
    def _merged_params(self) -> ParameterSet:
        merged = ParameterSet()
        for prefix, pset in (
            ("actor", self.actor),
            ("critic", self.critic),
            ("target", self.target_critic),
            ("alpha", self.alpha_params),
        ):
            for name, t in pset.items():
                merged.add(f"{prefix}/{name}", t.data.copy())
        merged.step_count = self.updates
        return merged

    def save(self, path: str):
        save_checkpoint(self._merged_params(), path)

    def restore(self, path: str):
        loaded = load_checkpoint(path)
        for prefix, pset in (
            ("actor", self.actor),
            ("critic", self.critic),
            ("target", self.target_critic),
            ("alpha", self.alpha_params),
        ):
            for name, t in pset.items():
                key = f"{prefix}/{name}"
                if key not in loaded:
                    raise ValueError(f"checkpoint missing parameter {key!r} "
                                     "(mode or representation mismatch?)")
                src = loaded[key]
                if src.data.shape != t.data.shape:
                    raise ValueError(f"checkpoint shape mismatch for {key!r}: "
                                     f"{src.data.shape} vs {t.data.shape}")
                t.data[...] = src.data
        self.updates = loaded.step_count
