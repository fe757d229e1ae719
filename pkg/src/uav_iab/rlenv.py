"""The learning-facing environment: candidate grids, the 81-action codec,
clamped grid transitions, full-state evaluation through the simulator, and
the nine-phase schedule."""

from dataclasses import dataclass

import numpy as np

from . import network, traffic
from .config import RunConfig
from .metrics import (WORST_CASE_KPI, EmptyMcSampleError, KpiSnapshot,
                      NormalizationBounds, RewardWeights, kpi_snapshot,
                      normalize, reward)

N_ACTIONS = 81
DELTAS = (-1, 0, 1)


class ScheduleExhaustedError(RuntimeError):
    """advance_phase called past the final phase."""


@dataclass(frozen=True)
class CandidateGrids:
    tilt_deg: tuple
    x_m: tuple
    y_m: tuple
    z_m: tuple

    def __post_init__(self):
        for name in ("tilt_deg", "x_m", "y_m", "z_m"):
            g = getattr(self, name)
            if len(g) < 1 or any(b <= a for a, b in zip(g, g[1:])):
                raise ValueError(f"grid {name} must be strictly increasing")

    @classmethod
    def from_config(cls, cfg: RunConfig) -> "CandidateGrids":
        return cls(tilt_deg=tuple(cfg.tilt_grid_deg), x_m=tuple(cfg.x_grid_m),
                   y_m=tuple(cfg.y_grid_m), z_m=tuple(cfg.z_grid_m))

    @property
    def shape(self):
        return (len(self.tilt_deg), len(self.x_m), len(self.y_m), len(self.z_m))

    @property
    def n_states(self):
        t, x, y, z = self.shape
        return t * x * y * z


@dataclass(frozen=True)
class UavState:
    tilt_idx: int
    x_idx: int
    y_idx: int
    z_idx: int

    def values(self, grids: CandidateGrids):
        return (grids.tilt_deg[self.tilt_idx], grids.x_m[self.x_idx],
                grids.y_m[self.y_idx], grids.z_m[self.z_idx])

    def encode(self, grids: CandidateGrids) -> np.ndarray:
        """Min-max scale the four state values into [0, 1] by grid extents."""
        out = np.empty(4)
        for i, (idx, g) in enumerate(zip(
                (self.tilt_idx, self.x_idx, self.y_idx, self.z_idx),
                (grids.tilt_deg, grids.x_m, grids.y_m, grids.z_m))):
            lo, hi = g[0], g[-1]
            out[i] = 0.5 if hi == lo else (g[idx] - lo) / (hi - lo)
        return out

    def check(self, grids: CandidateGrids):
        t, x, y, z = grids.shape
        ok = 0 <= self.tilt_idx < t and 0 <= self.x_idx < x \
            and 0 <= self.y_idx < y and 0 <= self.z_idx < z
        if not ok:
            raise ValueError(f"state {self} off grid of shape {grids.shape}")


def initial_state(cfg: RunConfig) -> UavState:
    grids = CandidateGrids.from_config(cfg)
    return UavState(tilt_idx=grids.tilt_deg.index(cfg.initial_tilt_deg),
                    x_idx=grids.x_m.index(cfg.initial_x_m),
                    y_idx=grids.y_m.index(cfg.initial_y_m),
                    z_idx=grids.z_m.index(cfg.initial_z_m))


def all_states(grids: CandidateGrids):
    """Canonical enumeration order of the joint state grid."""
    t, x, y, z = grids.shape
    return [UavState(i, j, k, l)
            for i in range(t) for j in range(x) for k in range(y) for l in range(z)]


# --- action codec -----------------------------------------------------------

def decode_action(action_id: int):
    """action id -> (tilt_delta, (dx, dy, dz)), lexicographic over (-1, 0, 1)."""
    if not 0 <= action_id < N_ACTIONS:
        raise ValueError(f"action id {action_id} out of range [0, 80]")
    tilt_ord, pos_ord = divmod(action_id, 27)
    dx, rem = divmod(pos_ord, 9)
    dy, dz = divmod(rem, 3)
    return DELTAS[tilt_ord], (DELTAS[dx], DELTAS[dy], DELTAS[dz])


def encode_action(tilt_delta: int, pos_delta) -> int:
    ti = DELTAS.index(tilt_delta)
    dx, dy, dz = (DELTAS.index(d) for d in pos_delta)
    return ti * 27 + dx * 9 + dy * 3 + dz


NOOP_ACTION = encode_action(0, (0, 0, 0))


def apply_action(state: UavState, action_id: int, grids: CandidateGrids) -> UavState:
    """Move each grid index by its delta, clamped at the grid boundaries."""
    tilt_d, (dx, dy, dz) = decode_action(action_id)
    t, x, y, z = grids.shape

    def clamp(i, n):
        return min(max(i, 0), n - 1)

    return UavState(clamp(state.tilt_idx + tilt_d, t),
                    clamp(state.x_idx + dx, x),
                    clamp(state.y_idx + dy, y),
                    clamp(state.z_idx + dz, z))


# --- state evaluation -------------------------------------------------------

@dataclass
class EvalResult:
    kpi: KpiSnapshot
    bh_dl_rate_bps: float
    bh_ul_rate_bps: float
    n_uav_users: int
    donor_cell: int | None
    sim: traffic.SimResult
    radio: network.RadioTables


class StateEvaluator:
    """Deterministic (seed, phase, state) -> KPI evaluation with phase caches.

    Worlds, arrival streams and uplink representative draws are frozen per
    (seed, phase); evaluations of different states reuse them, so the reward
    surface within a phase is noise-free across states.
    """

    def __init__(self, cfg: RunConfig, load_mode: str | None = None):
        self.cfg = cfg
        self.load_mode = load_mode or cfg.load_mode
        self.grids = CandidateGrids.from_config(cfg)
        self._worlds = {}
        self._arrivals = {}
        self._rep_uniforms = {}
        self.tc = traffic.TrafficConfig.from_run_config(cfg, self.load_mode)

    def world(self, phase: int) -> network.World:
        w = self._worlds.get(phase)
        if w is None:
            w = network.build_world(self.cfg, phase)
            self._worlds[phase] = w
        return w

    def _phase_traffic(self, phase: int):
        arr = self._arrivals.get(phase)
        if arr is None:
            w = self.world(phase)
            arr = traffic.thin_arrivals(w.base_arrivals, self.tc.arrival_rate_per_s,
                                        self.cfg.arrival_coupling_rate)
            self._arrivals[phase] = arr
        reps = self._rep_uniforms.get(phase)
        if reps is None:
            n_slots = int(round(self.cfg.sim_time_s / self.cfg.slot_s))
            rng = network._rng(self.cfg.seed, network.TAG_UL_REPS, phase)
            reps = rng.random((n_slots, network.N_CELLS))
            self._rep_uniforms[phase] = reps
        return arr, reps

    def evaluate(self, state: UavState | None, phase: int) -> EvalResult:
        uav = state.values(self.grids) if state is not None else None
        scn = network.build_scenario(self.cfg, phase, uav, world=self.world(phase))
        radio = network.evaluate_radio(scn, self.load_mode)
        arrivals, reps = self._phase_traffic(phase)
        sim = traffic.simulate_slots(radio, arrivals, self.tc, reps)
        try:
            kpi = kpi_snapshot(sim, scn.world.user_is_mc)
        except EmptyMcSampleError:
            kpi = WORST_CASE_KPI
        return EvalResult(kpi=kpi, bh_dl_rate_bps=radio.bh_dl_rate_bps,
                          bh_ul_rate_bps=radio.bh_ul_rate_bps,
                          n_uav_users=int(len(radio.uav_users)),
                          donor_cell=radio.donor_cell, sim=sim, radio=radio)


def evaluate_state(cfg: RunConfig, state: UavState, phase: int,
                   load_mode: str | None = None,
                   bounds: NormalizationBounds | None = None):
    """One-shot evaluation: raw KPI, normalized KPI and reward for a state."""
    ev = StateEvaluator(cfg, load_mode)
    res = ev.evaluate(state, phase)
    b = bounds or NormalizationBounds()
    kpi_n = normalize(res.kpi, b)
    w = RewardWeights(cfg.reward_w1, cfg.reward_w2, cfg.reward_w3)
    return res.kpi, kpi_n, reward(kpi_n, w)


# --- stepping environment ---------------------------------------------------

@dataclass
class StepOutcome:
    next_state: UavState
    kpi: KpiSnapshot
    kpi_norm: KpiSnapshot
    reward: float


class Env:
    """Mutable stepping wrapper: current state, phase and reward bounds."""

    def __init__(self, cfg: RunConfig, load_mode: str | None = None,
                 bounds: NormalizationBounds | None = None,
                 evaluator: StateEvaluator | None = None):
        self.cfg = cfg
        self.evaluator = evaluator or StateEvaluator(cfg, load_mode)
        self.grids = self.evaluator.grids
        self.bounds = bounds or NormalizationBounds()
        self.weights = RewardWeights(cfg.reward_w1, cfg.reward_w2, cfg.reward_w3)
        self.state = initial_state(cfg)
        self.phase = 0
        self.n_phases = cfg.n_phases

    def encoded_state(self) -> np.ndarray:
        return self.state.encode(self.grids)

    def encode(self, state: UavState) -> np.ndarray:
        return state.encode(self.grids)

    def evaluate(self, state: UavState) -> tuple:
        res = self.evaluator.evaluate(state, self.phase)
        kpi_n = normalize(res.kpi, self.bounds)
        return res.kpi, kpi_n, reward(kpi_n, self.weights)

    def step(self, action_id: int) -> StepOutcome:
        nxt = apply_action(self.state, action_id, self.grids)
        kpi, kpi_n, r = self.evaluate(nxt)
        self.state = nxt
        return StepOutcome(next_state=nxt, kpi=kpi, kpi_norm=kpi_n, reward=r)

    def advance_phase(self) -> None:
        if self.phase + 1 >= self.n_phases:
            raise ScheduleExhaustedError("schedule exhausted")
        self.phase += 1
