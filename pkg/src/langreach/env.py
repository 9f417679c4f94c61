"""Deterministic point-effector reach environment on a table plane.

A scene holds two objects with distinct (color, shape class) property
tuples; an episodic instruction names one of them. The effector moves by
clamped Cartesian deltas; touching an object within the touch radius
reports a contact and pushes the object horizontally out of overlap. The
sparse reward is 0 exactly when the instructed object is contacted while
neither object has drifted more than the displacement limit, else -1.

Touching the wrong object gently raises a hindsight event carrying an
expert instruction that retroactively describes the contact.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .language import (
    GoalDescriptor,
    Instruction,
    TaskMode,
    Vocabulary,
    VERBS,
    build_vocabulary,
    enumerate_goals,
    expert_hindsight_instruction,
    make_instruction,
    mode_colors,
    mode_shape_classes,
    pad_tokens,
)


@dataclass
class EnvConfig:
    max_steps: int = 50                 # T, episode limit
    touch_radius: float = 0.04          # contact threshold (m)
    displacement_limit: float = 0.012   # max tolerated object drift (m)
    max_step: float = 0.05              # per-axis effector motion per step (m)
    table_half: float = 0.25            # workspace is [-table_half, table_half]^2
    z_min: float = 0.01
    z_max: float = 0.20
    object_half_extent: float = 0.02
    placement_margin: float = 0.10      # object centers stay off the table edge
    min_object_separation: float = 0.14
    min_spawn_distance: float = 0.10    # effector-to-object distance at reset
    spawn_xy_half: float = 0.10
    spawn_z_range: tuple[float, float] = (0.05, 0.15)
    gripper_step: float = 0.1
    goal_eps: float = 0.03              # epsilon of the state-goal reward

    def __post_init__(self):
        assert self.max_steps >= 1 and self.touch_radius > 0 and self.displacement_limit > 0

    def workspace_low(self) -> np.ndarray:
        return np.array([-self.table_half, -self.table_half, self.z_min])

    def workspace_high(self) -> np.ndarray:
        return np.array([self.table_half, self.table_half, self.z_max])


@dataclass
class ObjectSpec:
    color: str
    shape_class: str
    position: np.ndarray
    half_extent: float
    displacement_accum: float = 0.0
    last_displacement: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def copy(self) -> "ObjectSpec":
        return ObjectSpec(
            self.color,
            self.shape_class,
            self.position.copy(),
            self.half_extent,
            self.displacement_accum,
            self.last_displacement.copy(),
        )


@dataclass
class WorldState:
    effector_pos: np.ndarray
    gripper: float
    objects: list[ObjectSpec]
    t: int
    contact_index: int | None = None    # object touched on the step into this state

    def copy(self) -> "WorldState":
        return WorldState(
            self.effector_pos.copy(),
            self.gripper,
            [o.copy() for o in self.objects],
            self.t,
            self.contact_index,
        )


@dataclass
class Observation:
    features: np.ndarray    # proprioception + per-object blocks, no language
    tokens: np.ndarray      # padded instruction indices


@dataclass(frozen=True)
class HindsightEvent:
    t: int
    object_index: int
    instruction: Instruction


def observation_dim(mode: TaskMode) -> int:
    n_colors = len(mode_colors(mode))
    n_shapes = len(mode_shape_classes(mode))
    return 4 + 2 * (6 + n_colors + n_shapes)


def observation_scale(mode: TaskMode, cfg: EnvConfig) -> np.ndarray:
    """Per-feature multipliers mapping raw features into roughly [-1, 1]."""
    pos = 1.0 / cfg.table_half
    vel = 1.0 / cfg.max_step
    block = [pos] * 3 + [vel] * 3 + [1.0] * (len(mode_colors(mode)) + len(mode_shape_classes(mode)))
    return np.array([pos, pos, pos, 1.0] + block * 2)


def _object_block(obj: ObjectSpec, mode: TaskMode) -> list[float]:
    colors = mode_colors(mode)
    shapes = mode_shape_classes(mode)
    color_onehot = [1.0 if c == obj.color else 0.0 for c in colors]
    shape_onehot = [1.0 if s == obj.shape_class else 0.0 for s in shapes]
    return list(obj.position) + list(obj.last_displacement) + color_onehot + shape_onehot


def observe(state: WorldState, mode: TaskMode, instruction: Instruction) -> Observation:
    features = [state.effector_pos[0], state.effector_pos[1], state.effector_pos[2], state.gripper]
    for obj in state.objects:
        features.extend(_object_block(obj, mode))
    return Observation(np.array(features), pad_tokens(instruction.tokens))


# -- rewards and conditions ---------------------------------------------------

def goal_object_index(state: WorldState, goal: GoalDescriptor) -> int | None:
    for i, obj in enumerate(state.objects):
        if obj.color == goal.color and obj.shape_class == goal.shape_class:
            return i
    return None


def check_condition(state_next: WorldState, instruction: Instruction, cfg: EnvConfig) -> bool:
    """True iff the instructed object is touched and no object drifted too far."""
    goal_idx = goal_object_index(state_next, instruction.goal)
    if goal_idx is None or state_next.contact_index != goal_idx:
        return False
    return all(o.displacement_accum <= cfg.displacement_limit for o in state_next.objects)


def language_reward(state_next: WorldState, instruction: Instruction, cfg: EnvConfig) -> float:
    return 0.0 if check_condition(state_next, instruction, cfg) else -1.0


def achieved_goal(state: WorldState) -> np.ndarray:
    """State-to-goal mapping for the non-linguistic baseline: effector position."""
    return state.effector_pos.copy()


def goal_reward(state_next: WorldState, goal_state: np.ndarray, eps: float) -> float:
    dist = float(np.linalg.norm(achieved_goal(state_next) - np.asarray(goal_state)))
    return 0.0 if dist <= eps else -1.0


# -- environment ---------------------------------------------------------------

class ReachEnv:
    """Seeded two-object reach scene; deterministic given (seed, actions)."""

    def __init__(self, mode: TaskMode = TaskMode.DEFAULT, cfg: EnvConfig | None = None):
        self.mode = TaskMode.parse(mode)
        self.cfg = cfg or EnvConfig()
        self.vocab: Vocabulary = build_vocabulary(self.mode)
        self._goals = enumerate_goals(self.mode)
        self.state: WorldState | None = None
        self.instruction: Instruction | None = None
        self._expert_rng: np.random.Generator | None = None
        self._fired_events: set[int] = set()
        self._success = False

    # -- episode setup ---------------------------------------------------
    def reset(self, seed: int) -> tuple[Observation, Instruction]:
        ss = np.random.SeedSequence(seed)
        placement_ss, expert_ss = ss.spawn(2)
        rng = np.random.Generator(np.random.PCG64(placement_ss))
        self._expert_rng = np.random.Generator(np.random.PCG64(expert_ss))
        cfg = self.cfg

        goal = self._goals[rng.integers(len(self._goals))]
        verb = VERBS[rng.integers(len(VERBS))]
        self.instruction = make_instruction(self.vocab, goal, verb)

        tuples = [
            (c, s) for c in mode_colors(self.mode) for s in mode_shape_classes(self.mode)
        ]
        tuples.remove((goal.color, goal.shape_class))
        d_color, d_shape = tuples[rng.integers(len(tuples))]

        lo = -cfg.table_half + cfg.placement_margin
        hi = cfg.table_half - cfg.placement_margin
        for _ in range(1000):
            p0 = np.array([rng.uniform(lo, hi), rng.uniform(lo, hi), cfg.object_half_extent])
            p1 = np.array([rng.uniform(lo, hi), rng.uniform(lo, hi), cfg.object_half_extent])
            if np.linalg.norm(p0 - p1) < cfg.min_object_separation:
                continue
            eff = np.array(
                [
                    rng.uniform(-cfg.spawn_xy_half, cfg.spawn_xy_half),
                    rng.uniform(-cfg.spawn_xy_half, cfg.spawn_xy_half),
                    rng.uniform(*cfg.spawn_z_range),
                ]
            )
            if min(np.linalg.norm(eff - p0), np.linalg.norm(eff - p1)) < cfg.min_spawn_distance:
                continue
            break
        else:
            raise RuntimeError("could not place scene without collisions")

        goal_obj = ObjectSpec(goal.color, goal.shape_class, p0, cfg.object_half_extent)
        distractor = ObjectSpec(d_color, d_shape, p1, cfg.object_half_extent)
        objects = [goal_obj, distractor]
        if rng.integers(2) == 1:
            objects.reverse()

        self.state = WorldState(eff, 0.5, objects, 0, None)
        self._fired_events = set()
        self._success = False
        return observe(self.state, self.mode, self.instruction), self.instruction

    # -- dynamics ----------------------------------------------------------
    def step(self, action) -> tuple[Observation, float, bool, dict]:
        if self.state is None:
            raise RuntimeError("step before reset")
        cfg = self.cfg
        act = np.clip(np.asarray(action, dtype=np.float64).reshape(-1), -1.0, 1.0)
        if act.shape[0] != 4:
            raise ValueError(f"action must have 4 components, got {act.shape[0]}")
        if not np.all(np.isfinite(act)):
            raise ValueError("action must be finite")

        state = self.state
        prev_t = state.t
        state.effector_pos = np.clip(
            state.effector_pos + act[:3] * cfg.max_step, cfg.workspace_low(), cfg.workspace_high()
        )
        state.gripper = float(np.clip(state.gripper + act[3] * cfg.gripper_step, 0.0, 1.0))

        for obj in state.objects:
            obj.last_displacement = np.zeros(3)
        contact = None
        dists = [np.linalg.norm(state.effector_pos - o.position) for o in state.objects]
        order = sorted(range(len(state.objects)), key=lambda i: dists[i])
        for i in order:
            if dists[i] <= cfg.touch_radius:
                contact = i
                self._push_object(state.objects[i], state.effector_pos, dists[i])
                break
        state.contact_index = contact
        state.t = prev_t + 1

        reward = language_reward(state, self.instruction, cfg)
        success = reward == 0.0
        if success:
            self._success = True
        event = self._detect_hindsight_event(prev_t)
        done = success or state.t >= cfg.max_steps

        obs = observe(state, self.mode, self.instruction)
        info = {
            "success": success,
            "contact_index": contact,
            "hindsight_event": event,
            "t": state.t,
        }
        return obs, reward, done, info

    def _push_object(self, obj: ObjectSpec, effector: np.ndarray, dist: float):
        """Horizontal overlap resolution; drift accumulates on the object."""
        cfg = self.cfg
        overlap = cfg.touch_radius - dist
        if overlap <= 0.0:
            return
        direction = obj.position[:2] - effector[:2]
        norm = np.linalg.norm(direction)
        direction = direction / norm if norm > 1e-9 else np.array([1.0, 0.0])
        before = obj.position.copy()
        lo = -cfg.table_half + obj.half_extent
        hi = cfg.table_half - obj.half_extent
        obj.position[:2] = np.clip(obj.position[:2] + direction * overlap, lo, hi)
        moved = obj.position - before
        obj.last_displacement = moved
        obj.displacement_accum += float(np.linalg.norm(moved))

    def _detect_hindsight_event(self, transition_index: int) -> HindsightEvent | None:
        """Wrong-object gentle touch, at most once per object per episode."""
        state = self.state
        idx = state.contact_index
        if idx is None or idx in self._fired_events:
            return None
        goal_idx = goal_object_index(state, self.instruction.goal)
        if idx == goal_idx:
            return None
        if any(o.displacement_accum > self.cfg.displacement_limit for o in state.objects):
            return None
        obj = state.objects[idx]
        instr = expert_hindsight_instruction(self.vocab, obj.color, obj.shape_class, self._expert_rng)
        self._fired_events.add(idx)
        return HindsightEvent(t=transition_index, object_index=idx, instruction=instr)

    # -- helpers -----------------------------------------------------------
    @property
    def episode_over(self) -> bool:
        return self.state is not None and (self._success or self.state.t >= self.cfg.max_steps)

    def snapshot(self) -> WorldState:
        return self.state.copy()


def reach_controller(effector: np.ndarray, target: np.ndarray, cfg: EnvConfig) -> np.ndarray:
    """Proportional controller: rise to cruise height, align, descend gently.

    The cruise altitude keeps the effector's contact sphere clear of object
    tops, and the descent stops half a displacement limit inside the touch
    radius, so the resulting push stays below the limit.
    """
    cruise_z = min(0.12, cfg.z_max)
    contact_z = target[2] + cfg.touch_radius - cfg.displacement_limit / 2.0

    xy_err = target[:2] - effector[:2]
    if np.linalg.norm(xy_err) > 1e-3:
        if effector[2] < cruise_z - 1e-9:
            move = np.array([0.0, 0.0, cruise_z - effector[2]])
        else:
            move = np.array([xy_err[0], xy_err[1], 0.0])
    else:
        move = np.array([0.0, 0.0, contact_z - effector[2]])
    action = np.clip(move / cfg.max_step, -1.0, 1.0)
    return np.append(action, 0.0)


def scripted_expert_action(state: WorldState, target_index: int, cfg: EnvConfig) -> np.ndarray:
    return reach_controller(state.effector_pos, state.objects[target_index].position, cfg)


def trace_record(state: WorldState, action, reward: float, tokens, event: bool) -> dict:
    """One line of an episode trace (line-delimited export format)."""
    return {
        "t": state.t,
        "effector": [float(v) for v in state.effector_pos],
        "gripper": state.gripper,
        "objects": [
            {
                "color": o.color,
                "shape": o.shape_class,
                "position": [float(v) for v in o.position],
                "displacement_accum": o.displacement_accum,
            }
            for o in state.objects
        ],
        "action": [float(a) for a in np.asarray(action).reshape(-1)],
        "reward": reward,
        "tokens": [int(t) for t in tokens],
        "event": bool(event),
    }
