"""Trajectory storage and the hindsight / next-state relabeling sampler.

Each sampled transition gets its goal reassigned by a three-way rule:
with probability `next_state_ratio` the goal becomes the achieved goal of the
immediate next state ("next_state"); otherwise with probability
`hindsight_ratio` it becomes the achieved goal of a uniformly drawn strictly
later state of the same trajectory ("future"); otherwise the episode's
behavioral goal is kept ("behavioral"). Next-state relabeling takes
precedence so its fraction of the batch is exact.
"""

from __future__ import annotations

import base64
from dataclasses import dataclass

import numpy as np

KIND_BEHAVIORAL = 0
KIND_FUTURE = 1
KIND_NEXT_STATE = 2
KIND_NAMES = ("behavioral", "future", "next_state")

_DUMP_MAGIC = "HTRAJ"
_DUMP_VERSION = 1


@dataclass
class Trajectory:
    """One recorded episode: T+1 states, T actions, per-state achieved goals."""

    states: np.ndarray          # (T+1, state_dim)
    actions: np.ndarray         # (T,) int
    behavioral_goal: np.ndarray  # (goal_dim,)
    achieved_goals: np.ndarray  # (T+1, goal_dim)

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=np.float64)
        self.actions = np.asarray(self.actions, dtype=np.int64)
        self.behavioral_goal = np.asarray(self.behavioral_goal, dtype=np.float64)
        self.achieved_goals = np.asarray(self.achieved_goals, dtype=np.float64)
        n = len(self.states)
        if n < 2 or len(self.actions) != n - 1 or len(self.achieved_goals) != n:
            raise ValueError(
                f"malformed trajectory: {n} states, {len(self.actions)} actions, "
                f"{len(self.achieved_goals)} achieved goals"
            )

    @property
    def length(self) -> int:
        return len(self.actions)


@dataclass
class RelabeledSample:
    s: np.ndarray
    a: int
    s_next: np.ndarray
    goal: np.ndarray
    kind: str


@dataclass
class RelabeledBatch:
    """Struct-of-arrays batch of relabeled transitions."""

    states: np.ndarray       # (B, state_dim)
    actions: np.ndarray      # (B,)
    next_states: np.ndarray  # (B, state_dim)
    goals: np.ndarray        # (B, goal_dim)
    kinds: np.ndarray        # (B,) int codes into KIND_NAMES

    def __len__(self) -> int:
        return len(self.actions)

    def __getitem__(self, i: int) -> RelabeledSample:
        return RelabeledSample(self.states[i], int(self.actions[i]),
                               self.next_states[i], self.goals[i],
                               KIND_NAMES[self.kinds[i]])


class ReplayBuffer:
    """Ring buffer of trajectories (oldest evicted first).

    Storage is preallocated, padded to the longest trajectory seen, so that
    sampling is pure fancy indexing. Single-writer; callers serialize writes
    and reads.
    """

    def __init__(self, capacity: int = 10_000):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self._n = 0
        self._cursor = 0
        self._states = None
        self._ags = None
        self._actions = None
        self._goals = None
        self._lengths = None

    def __len__(self) -> int:
        return self._n

    def _alloc(self, traj: Trajectory, t_max: int) -> None:
        ds = traj.states.shape[1]
        dg = traj.achieved_goals.shape[1]
        self._states = np.zeros((self.capacity, t_max + 1, ds))
        self._ags = np.zeros((self.capacity, t_max + 1, dg))
        self._actions = np.zeros((self.capacity, t_max), dtype=np.int64)
        self._goals = np.zeros((self.capacity, dg))
        self._lengths = np.zeros(self.capacity, dtype=np.int64)

    def _grow_time_axis(self, t_max: int) -> None:
        def pad(arr, width):
            pads = [(0, 0)] * arr.ndim
            pads[1] = (0, width)
            return np.pad(arr, pads)

        extra = t_max - self._actions.shape[1]
        self._states = pad(self._states, extra)
        self._ags = pad(self._ags, extra)
        self._actions = pad(self._actions, extra)

    def append(self, traj: Trajectory) -> None:
        t = traj.length
        if self._states is None:
            self._alloc(traj, t)
        elif t > self._actions.shape[1]:
            self._grow_time_axis(t)
        i = self._cursor
        self._states[i, : t + 1] = traj.states
        self._ags[i, : t + 1] = traj.achieved_goals
        self._actions[i, :t] = traj.actions
        self._goals[i] = traj.behavioral_goal
        self._lengths[i] = t
        self._cursor = (i + 1) % self.capacity
        self._n = min(self._n + 1, self.capacity)

    def trajectory(self, i: int) -> Trajectory:
        """Reconstruct the i-th stored trajectory (insertion order)."""
        if not 0 <= i < self._n:
            raise IndexError(i)
        slot = (self._cursor - self._n + i) % self.capacity if self._n == self.capacity else i
        t = int(self._lengths[slot])
        return Trajectory(self._states[slot, : t + 1].copy(),
                          self._actions[slot, :t].copy(),
                          self._goals[slot].copy(),
                          self._ags[slot, : t + 1].copy())


def append_trajectory(buf: ReplayBuffer, traj: Trajectory) -> None:
    buf.append(traj)


def sample_batch(buf: ReplayBuffer, batch_size: int, hindsight_ratio: float,
                 next_state_ratio: float, rng: np.random.Generator) -> RelabeledBatch:
    """Draw a relabeled batch; see the module docstring for the goal rule."""
    if len(buf) == 0:
        raise ValueError("cannot sample from an empty replay buffer")
    if not (0.0 <= hindsight_ratio <= 1.0 and 0.0 <= next_state_ratio <= 1.0):
        raise ValueError("relabel ratios must lie in [0, 1]")
    n = len(buf)
    # Stored slots 0..n-1 hold exactly the live trajectories, so uniform slot
    # choice is uniform trajectory choice regardless of ring position.
    slot = rng.integers(0, n, size=batch_size)
    lengths = buf._lengths[slot]
    t = rng.integers(0, lengths)
    # One uniform per sample; the two thresholds reproduce the sequential
    # "next-state first, then hindsight" composition exactly.
    u = rng.random(batch_size)
    kinds = np.full(batch_size, KIND_BEHAVIORAL, dtype=np.int64)
    next_mask = u < next_state_ratio
    future_mask = ~next_mask & (u < next_state_ratio + (1.0 - next_state_ratio) * hindsight_ratio)
    kinds[next_mask] = KIND_NEXT_STATE
    kinds[future_mask] = KIND_FUTURE
    # Future index uniform over the strictly later steps (t, T].
    j = rng.integers(t + 1, lengths + 1)
    goal_step = np.where(next_mask, t + 1, j)
    goals = buf._goals[slot].copy()
    relabeled = next_mask | future_mask
    goals[relabeled] = buf._ags[slot[relabeled], goal_step[relabeled]]
    return RelabeledBatch(
        states=buf._states[slot, t].copy(),
        actions=buf._actions[slot, t].copy(),
        next_states=buf._states[slot, t + 1].copy(),
        goals=goals,
        kinds=kinds,
    )


def kind_is_positive(sample: RelabeledSample, env) -> bool:
    """Whether the sample sits on the positive-reward branch: its relabeled
    goal is achieved at the next state (within the env success threshold)."""
    return env.is_success(env.achieved_goal(sample.s_next), sample.goal)


def dump_trajectories(path, trajectories) -> None:
    """Newline-delimited dump: versioned text header, then one record per
    trajectory holding its length and a base64 little-endian float64 payload."""
    trajectories = list(trajectories)
    with open(path, "w", encoding="ascii") as f:
        if trajectories:
            ds = trajectories[0].states.shape[1]
            dg = trajectories[0].achieved_goals.shape[1]
        else:
            ds = dg = 0
        f.write(f"{_DUMP_MAGIC} {_DUMP_VERSION} {ds} {dg}\n")
        for traj in trajectories:
            payload = np.concatenate([
                traj.states.ravel(),
                traj.achieved_goals.ravel(),
                traj.behavioral_goal.ravel(),
                traj.actions.astype(np.float64),
            ]).astype("<f8").tobytes()
            f.write(f"{traj.length} {base64.b64encode(payload).decode('ascii')}\n")


def load_trajectories(path) -> list[Trajectory]:
    with open(path, encoding="ascii") as f:
        header = f.readline().split()
        if len(header) != 4 or header[0] != _DUMP_MAGIC:
            raise ValueError(f"{path}: not a trajectory dump")
        if int(header[1]) != _DUMP_VERSION:
            raise ValueError(f"{path}: unsupported dump version {header[1]}")
        ds, dg = int(header[2]), int(header[3])
        out = []
        for line in f:
            t_str, blob = line.split()
            t = int(t_str)
            flat = np.frombuffer(base64.b64decode(blob), dtype="<f8").astype(np.float64)
            n_states = (t + 1) * ds
            n_ags = (t + 1) * dg
            states = flat[:n_states].reshape(t + 1, ds)
            ags = flat[n_states : n_states + n_ags].reshape(t + 1, dg)
            goal = flat[n_states + n_ags : n_states + n_ags + dg]
            actions = flat[n_states + n_ags + dg :].astype(np.int64)
            out.append(Trajectory(states, actions, goal, ags))
    return out
