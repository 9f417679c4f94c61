"""Experiment orchestration: seeded training loop, evaluation, metrics.

One experiment = one (mode, method, seed) run. The loop rolls episodes,
detects hindsight events, applies the method's relabeling on failures,
stores transitions, updates the agent (and, for the self-supervised
method, the instruction generator), and evaluates deterministically on a
fixed step grid. All randomness flows from the experiment seed through
named per-concern streams, so reruns are byte-identical.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import os
from dataclasses import dataclass, field, replace

import numpy as np
import yaml

from .env import EnvConfig, ReachEnv, observation_dim, observation_scale, trace_record
from .hipss import HipssConfig, HipssDataset, HipssModel, episode_sample, maybe_relabel
from .language import TaskMode, build_vocabulary, pad_tokens, parse_instruction
from .replay import HEIRConfig, ReplayBuffer, Transition, store_episode
from .sac import SACAgent, SACConfig

log = logging.getLogger(__name__)

METRICS_HEADER = "env_steps,success_rate,hipss_train_acc,hipss_val_acc,buffer_size,relabel_fraction"

METHODS = ("lcsac", "heir", "hipss")
ACTION_DIM = 4


@dataclass
class ExperimentConfig:
    mode: str = "default"
    method: str = "lcsac"
    strategy: str = "future"
    representation: str = "learned_embedding"
    total_env_steps: int = 150_000
    eval_every: int = 5_000
    eval_episodes: int = 50
    seed: int = 0
    hipss_updates_per_episode: int = 1
    env: EnvConfig = field(default_factory=EnvConfig)
    heir: HEIRConfig = field(default_factory=HEIRConfig)
    sac: SACConfig = field(default_factory=SACConfig)
    hipss: HipssConfig = field(default_factory=HipssConfig)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS}")
        TaskMode.parse(self.mode)
        if self.total_env_steps < 1 or self.eval_every < 1 or self.eval_episodes < 1:
            raise ValueError("step and episode counts must be positive")
        self.sac = replace(self.sac, representation=self.representation)
        self.heir = replace(self.heir, strategy=self.strategy)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


_NESTED = {"env": EnvConfig, "heir": HEIRConfig, "sac": SACConfig, "hipss": HipssConfig}


def config_from_dict(data: dict) -> ExperimentConfig:
    data = dict(data or {})
    kwargs = {}
    for key, cls in _NESTED.items():
        if key in data:
            sub = data.pop(key)
            if not isinstance(sub, dict):
                raise ValueError(f"config section {key!r} must be a mapping")
            unknown = set(sub) - {f.name for f in dataclasses.fields(cls)}
            if unknown:
                raise ValueError(f"unknown keys in config section {key!r}: {sorted(unknown)}")
            if key == "env" and "spawn_z_range" in sub:
                sub["spawn_z_range"] = tuple(sub["spawn_z_range"])
            kwargs[key] = cls(**sub)
    top_fields = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = set(data) - top_fields
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    kwargs.update(data)
    return ExperimentConfig(**kwargs)


def load_config(path: str | None, overrides: dict | None = None) -> ExperimentConfig:
    """Config file (YAML mapping) merged with CLI overrides; flags win."""
    data = {}
    if path:
        with open(path) as fh:
            data = yaml.safe_load(fh) or {}
        if not isinstance(data, dict):
            raise ValueError("config file must hold a key-value mapping")
    for key, value in (overrides or {}).items():
        if value is not None:
            data[key] = value
    return config_from_dict(data)


@dataclass
class MetricsRow:
    env_steps: int
    success_rate: float
    hipss_train_acc: float
    hipss_val_acc: float
    buffer_size: int
    relabel_fraction: float

    def as_csv(self) -> str:
        return ",".join(
            [
                str(self.env_steps),
                repr(float(self.success_rate)),
                repr(float(self.hipss_train_acc)),
                repr(float(self.hipss_val_acc)),
                str(self.buffer_size),
                repr(float(self.relabel_fraction)),
            ]
        )


def write_metrics(rows: list[MetricsRow], path: str):
    with open(path, "w") as fh:
        fh.write(METRICS_HEADER + "\n")
        for row in rows:
            fh.write(row.as_csv() + "\n")


def read_metrics(path: str) -> dict[str, np.ndarray]:
    raw = np.genfromtxt(path, delimiter=",", names=True)
    raw = np.atleast_1d(raw)
    return {name: np.asarray(raw[name], dtype=np.float64) for name in raw.dtype.names}


def _build_agent(mode: TaskMode, env_cfg: EnvConfig, sac_cfg: SACConfig, seed: int) -> SACAgent:
    vocab = build_vocabulary(mode)
    return SACAgent(
        feature_dim=observation_dim(mode),
        action_dim=ACTION_DIM,
        vocab_size=len(vocab),
        cfg=sac_cfg,
        seed=seed,
        feature_scale=observation_scale(mode, env_cfg),
    )


def rollout_episode(env: ReachEnv, act_fn, seed: int):
    """One episode; returns (transitions, events, states incl. contact state, success)."""
    obs, instruction = env.reset(seed)
    episode: list[Transition] = []
    events = []
    states = [obs.features]
    tokens = pad_tokens(instruction.tokens)
    success = False
    while True:
        action = act_fn(obs, tokens)
        next_obs, reward, done, info = env.step(action)
        episode.append(
            Transition(
                obs=obs,
                action=np.asarray(action, dtype=np.float64),
                reward=reward,
                next_obs=next_obs,
                tokens=tokens.copy(),
                done=bool(info["success"]),
            )
        )
        states.append(next_obs.features)
        if info["hindsight_event"] is not None:
            events.append(info["hindsight_event"])
        obs = next_obs
        if done:
            success = bool(info["success"])
            break
    return episode, events, np.asarray(states), success, instruction


def evaluate_policy(agent: SACAgent, mode: TaskMode, env_cfg: EnvConfig, episodes: int, seed: int):
    """Deterministic-action rollouts; returns (success_rate, per-episode flags)."""
    env = ReachEnv(mode, env_cfg)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    flags = []
    for _ in range(episodes):
        ep_seed = int(rng.integers(0, 2**31 - 1))
        _, _, _, success, _ = rollout_episode(
            env, lambda obs, toks: agent.select_action(obs.features, toks, stochastic=False), ep_seed
        )
        flags.append(bool(success))
    return float(np.mean(flags)), flags


@dataclass
class RunSummary:
    episodes: int = 0
    env_steps: int = 0
    successes: int = 0
    events_detected: int = 0
    relabels_applied: int = 0
    hipss_samples: int = 0
    malformed_decodes: int = 0
    final_success_rate: float = float("nan")


def run_experiment(cfg: ExperimentConfig, out_dir: str) -> RunSummary:
    os.makedirs(out_dir, exist_ok=True)
    mode = TaskMode.parse(cfg.mode)
    vocab = build_vocabulary(mode)

    with open(os.path.join(out_dir, "config.yaml"), "w") as fh:
        yaml.safe_dump(cfg.to_dict(), fh, sort_keys=False)
    with open(os.path.join(out_dir, "vocab.txt"), "w") as fh:
        fh.write(vocab.dump())

    ss = np.random.SeedSequence(cfg.seed)
    env_ss, agent_ss, relabel_ss, batch_ss, eval_ss, hipss_model_ss, hipss_batch_ss = ss.spawn(7)
    env_rng = np.random.Generator(np.random.PCG64(env_ss))
    relabel_rng = np.random.Generator(np.random.PCG64(relabel_ss))
    batch_rng = np.random.Generator(np.random.PCG64(batch_ss))
    eval_rng = np.random.Generator(np.random.PCG64(eval_ss))
    hipss_batch_rng = np.random.Generator(np.random.PCG64(hipss_batch_ss))

    env = ReachEnv(mode, cfg.env)
    agent = _build_agent(mode, cfg.env, cfg.sac, seed=int(agent_ss.generate_state(1)[0]))

    model = None
    dataset = None
    hipss_opt = None
    if cfg.method == "hipss":
        model = HipssModel(
            feature_dim=observation_dim(mode),
            vocab_size=len(vocab),
            cfg=cfg.hipss,
            seed=int(hipss_model_ss.generate_state(1)[0]),
            feature_scale=observation_scale(mode, cfg.env),
        )
        dataset = HipssDataset(cfg.hipss)
        hipss_opt = model.optimizer()

    buffer = ReplayBuffer(cfg.sac.buffer_capacity)
    summary = RunSummary()
    rows: list[MetricsRow] = []
    next_eval = cfg.eval_every
    metrics_path = os.path.join(out_dir, "metrics.csv")
    metrics_fh = open(metrics_path, "w")
    metrics_fh.write(METRICS_HEADER + "\n")
    metrics_fh.flush()

    def act(obs, toks):
        if summary.env_steps < cfg.sac.random_steps:
            return agent.action_rng.uniform(-1.0, 1.0, ACTION_DIM)
        return agent.select_action(obs.features, toks, stochastic=True)

    def hipss_accuracies():
        if model is None or not dataset.train or not dataset.val:
            return float("nan"), float("nan")
        return model.word_accuracy(dataset.train), model.word_accuracy(dataset.val)

    while summary.env_steps < cfg.total_env_steps:
        ep_seed = int(env_rng.integers(0, 2**31 - 1))
        episode, events, states, success, _ = rollout_episode(env, act, ep_seed)
        summary.episodes += 1
        summary.env_steps += len(episode)
        summary.successes += int(success)
        summary.events_detected += len(events)

        relabel_events = []
        if success:
            if cfg.method == "hipss":
                dataset.add(episode_sample(states, episode[0].tokens, cfg.hipss))
                summary.hipss_samples += 1
        elif events and cfg.method != "lcsac":
            for event in events:
                if cfg.method == "heir":
                    relabel_events.append(event)
                else:
                    predicted = maybe_relabel(model, dataset, states[: event.t + 2], cfg.hipss)
                    if predicted is None:
                        continue
                    if parse_instruction(vocab, predicted) is None:
                        summary.malformed_decodes += 1
                    relabel_events.append(replace(event, instruction=tuple(predicted)))

        store_episode(buffer, episode, relabel_events, cfg.heir, relabel_rng)
        summary.relabels_applied += len(relabel_events)

        if cfg.method == "hipss" and dataset.train:
            for _ in range(cfg.hipss_updates_per_episode):
                n = min(cfg.hipss.batch_size, len(dataset.train))
                idx = hipss_batch_rng.integers(0, len(dataset.train), size=n)
                model.train_batch([dataset.train[i] for i in idx], hipss_opt)

        if summary.env_steps >= cfg.sac.random_steps and buffer.size >= cfg.sac.batch_size:
            n_updates = int(round(len(episode) * cfg.sac.updates_per_step))
            for _ in range(n_updates):
                agent.update(buffer.sample(cfg.sac.batch_size, batch_rng))

        while next_eval <= summary.env_steps and next_eval <= cfg.total_env_steps:
            rate, _ = evaluate_policy(
                agent, mode, cfg.env, cfg.eval_episodes, seed=int(eval_rng.integers(0, 2**31 - 1))
            )
            train_acc, val_acc = hipss_accuracies()
            row = MetricsRow(
                env_steps=next_eval,
                success_rate=rate,
                hipss_train_acc=train_acc,
                hipss_val_acc=val_acc,
                buffer_size=buffer.size,
                relabel_fraction=buffer.relabel_fraction,
            )
            rows.append(row)
            metrics_fh.write(row.as_csv() + "\n")
            metrics_fh.flush()
            summary.final_success_rate = rate
            log.info(
                "steps=%d success=%.2f buffer=%d relabeled=%.3f events=%d",
                next_eval, rate, buffer.size, buffer.relabel_fraction, summary.events_detected,
            )
            next_eval += cfg.eval_every

    assert summary.relabels_applied <= summary.events_detected
    metrics_fh.close()
    ckpt = os.path.join(out_dir, "checkpoint.bin")
    agent.save(ckpt)
    meta = {
        "mode": mode.value,
        "representation": cfg.representation,
        "feature_dim": observation_dim(mode),
        "action_dim": ACTION_DIM,
        "vocab_size": len(vocab),
        "sac": {
            "hidden": cfg.sac.hidden,
            "instr_hidden": cfg.sac.instr_hidden,
            "instr_layers": cfg.sac.instr_layers,
            "embed_dim": cfg.sac.embed_dim,
            "representation": cfg.sac.representation,
        },
        "env": dataclasses.asdict(cfg.env),
    }
    with open(ckpt + ".meta.json", "w") as fh:
        json.dump(meta, fh, indent=2)
    return summary


def load_agent_checkpoint(checkpoint: str, mode: str | None = None) -> tuple[SACAgent, TaskMode, EnvConfig]:
    """Rebuild an agent from a checkpoint plus its sidecar metadata."""
    meta_path = checkpoint + ".meta.json"
    if not os.path.exists(meta_path):
        raise FileNotFoundError(f"missing checkpoint metadata {meta_path}")
    with open(meta_path) as fh:
        meta = json.load(fh)
    ckpt_mode = TaskMode.parse(meta["mode"])
    if mode is not None and TaskMode.parse(mode) != ckpt_mode:
        raise ValueError(f"checkpoint was trained on mode {ckpt_mode.value!r}, not {mode!r}")
    env_meta = dict(meta.get("env", {}))
    if "spawn_z_range" in env_meta:
        env_meta["spawn_z_range"] = tuple(env_meta["spawn_z_range"])
    env_cfg = EnvConfig(**env_meta)
    sac_cfg = SACConfig(**meta["sac"])
    agent = _build_agent(ckpt_mode, env_cfg, sac_cfg, seed=0)
    agent.restore(checkpoint)
    return agent, ckpt_mode, env_cfg


def evaluate_checkpoint(checkpoint: str, episodes: int, seed: int, mode: str | None = None):
    """Per-episode success records for a saved policy."""
    agent, ckpt_mode, env_cfg = load_agent_checkpoint(checkpoint, mode)
    rate, flags = evaluate_policy(agent, ckpt_mode, env_cfg, episodes, seed)
    records = [{"episode": i, "success": bool(s)} for i, s in enumerate(flags)]
    return rate, records


def generate_expert_corpus(mode: str, episodes: int, seed: int, out_path: str,
                           env_cfg: EnvConfig | None = None, trace_path: str | None = None) -> int:
    """Scripted-expert rollouts; successful episodes become dataset lines.

    Each line holds the full non-linguistic state sequence (reset state
    through the contact state) and the episodic instruction tokens.
    """
    from .env import goal_object_index, scripted_expert_action

    mode = TaskMode.parse(mode)
    env = ReachEnv(mode, env_cfg)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    written = 0
    trace_fh = open(trace_path, "w") if trace_path else None
    with open(out_path, "w") as fh:
        for _ in range(episodes):
            ep_seed = int(rng.integers(0, 2**31 - 1))
            obs, instruction = env.reset(ep_seed)
            target = goal_object_index(env.state, instruction.goal)
            states = [obs.features]
            success = False
            while True:
                action = scripted_expert_action(env.state, target, env.cfg)
                obs, reward, done, info = env.step(action)
                states.append(obs.features)
                if trace_fh:
                    rec = trace_record(env.state, action, reward, instruction.tokens,
                                       info["hindsight_event"] is not None)
                    trace_fh.write(json.dumps(rec) + "\n")
                if done:
                    success = bool(info["success"])
                    break
            if success:
                line = {
                    "states": [[float(v) for v in row] for row in states],
                    "tokens": [int(t) for t in pad_tokens(instruction.tokens)],
                }
                fh.write(json.dumps(line) + "\n")
                written += 1
    if trace_fh:
        trace_fh.close()
    return written


def load_corpus(path: str) -> list[tuple[np.ndarray, np.ndarray]]:
    out = []
    with open(path) as fh:
        for line in fh:
            rec = json.loads(line)
            out.append((np.asarray(rec["states"]), np.asarray(rec["tokens"], dtype=np.int64)))
    return out


def train_hipss_on_corpus(corpus_path: str, mode: str, cfg: HipssConfig, seed: int,
                          epochs: int, target_val_acc: float | None = None,
                          env_cfg: EnvConfig | None = None, patience: int = 10):
    """Offline seq2seq training on a generated corpus.

    Returns (model, dataset, history) where history rows are
    (epoch, loss, train_acc, val_acc). Stops early once the validation
    accuracy has not improved for `patience` epochs past the target.
    """
    mode = TaskMode.parse(mode)
    env_cfg = env_cfg or EnvConfig()
    vocab = build_vocabulary(mode)
    model = HipssModel(
        feature_dim=observation_dim(mode),
        vocab_size=len(vocab),
        cfg=cfg,
        seed=seed,
        feature_scale=observation_scale(mode, env_cfg),
    )
    dataset = HipssDataset(cfg)
    for states, tokens in load_corpus(corpus_path):
        dataset.add(episode_sample(states, tokens, cfg))
    opt = model.optimizer()
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed + 1)))
    history = []
    best_val = -1.0
    stale = 0
    for epoch in range(epochs):
        loss = model.train_epoch(dataset, opt, rng)
        train_acc = model.word_accuracy(dataset.train)
        val_acc = model.word_accuracy(dataset.val) if dataset.val else float("nan")
        history.append((epoch, loss, train_acc, val_acc))
        log.info("hipss epoch=%d loss=%.4f train_acc=%.3f val_acc=%.3f", epoch, loss, train_acc, val_acc)
        if dataset.val:
            if val_acc > best_val + 1e-9:
                best_val = val_acc
                stale = 0
            else:
                stale += 1
            if target_val_acc is not None and best_val >= target_val_acc and stale >= patience:
                break
    return model, dataset, history
