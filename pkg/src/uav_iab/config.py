"""Run configuration: one flat dataclass holding every tunable of the simulator,
the environment and the learner, with strict JSON load/save."""

import dataclasses
import json
import math
from dataclasses import dataclass, field


class ConfigError(ValueError):
    """Raised with an itemized message when a config fails validation."""


VALID_LOAD_MODES = ("light", "heavy")
VALID_VARIANTS = ("ae-vas", "vas-retrained", "baseline")
VALID_PROFILES = ("full", "fast")
VALID_SLOT_NAMES = ("DL1", "DL2", "UL1", "UL2")


@dataclass
class RunConfig:
    # --- world geometry ---
    seed: int = 1
    agent_seed: int | None = None          # defaults to `seed` when unset
    n_users: int = 500
    isd_m: float = 750.0
    mc_radius_m: float = 350.0
    deployment_radius_m: float = 1125.0    # users dropped uniformly in this disc
    destroyed_site: int | None = 0         # site 0 = center; None keeps it alive
    macro_height_m: float = 25.0
    macro_tilt_deg: float = 6.0            # fixed electrical down-tilt at macros
    sectors_face_center: bool = True       # ring sites aim one sector at the hole
    mc_seed_fraction: float = 0.4          # users initially dropped inside the MC disc
    mc_cluster_fraction: float = 0.6       # of those, fraction that drifts as a cluster

    # --- radio ---
    carrier_ghz: float = 3.5
    bandwidth_hz: float = 100e6
    macro_tx_power_dbm: float = 46.0
    uav_tx_power_dbm: float = 40.0
    ue_tx_power_dbm: float = 23.0
    noise_figure_db: float = 9.0
    macro_max_gain_dbi: float = 14.0
    uav_max_gain_dbi: float = 8.0
    hpbw_az_deg: float = 65.0
    hpbw_el_deg: float = 10.0
    sla_v_db: float = 30.0
    front_to_back_db: float = 30.0
    ue_height_m: float = 1.5
    building_height_m: float = 5.0         # h in the rural-macro pathloss terms
    nlos_excess_db: float = 20.0
    shadow_sigma_los_db: float = 4.0
    shadow_sigma_nlos_db: float = 8.0
    se_cap_bps_per_hz: float = 7.8
    drop_threshold_db: float = -6.0
    activity_reference_rate: float = 540.0  # arrival rate mapping to activity factor 1.0

    # --- traffic ---
    arrival_rate_light: float = 270.0      # users/s over the whole area
    arrival_rate_heavy: float = 540.0
    arrival_coupling_rate: float = 540.0   # base rate of the thinned arrival stream
    payload_bits: int = 1_000_000
    sim_time_s: float = 2.0
    slot_s: float = 0.0005
    slot_pattern: list = field(default_factory=lambda: [
        "DL1", "DL2", "UL1", "DL2", "DL2", "DL1", "UL2", "DL1"])

    # --- controllable state grids ---
    tilt_grid_deg: list = field(default_factory=lambda: [-30.0, -20.0, -10.0, 0.0, 10.0, 20.0, 30.0])
    x_grid_m: list = field(default_factory=lambda: [-350.0, -175.0, 0.0, 175.0, 350.0])
    y_grid_m: list = field(default_factory=lambda: [-350.0, -175.0, 0.0, 175.0, 350.0])
    z_grid_m: list = field(default_factory=lambda: [10.0, 20.0, 30.0, 35.0])
    initial_tilt_deg: float = 0.0
    initial_x_m: float = 0.0
    initial_y_m: float = 0.0
    initial_z_m: float = 20.0

    # --- phase schedule ---
    n_phases: int = 9
    phase_drift_step_m: float = 60.0
    phase_drift_vectors: list | None = None  # explicit [dx, dy] per phase boundary

    # --- reward ---
    reward_w1: float = 0.5
    reward_w2: float = 0.3
    reward_w3: float = 0.2
    normalization_bounds: dict | None = None  # {"feature": [lo, hi], ...} per load mode

    # --- learner ---
    learning_rate: float = 5e-5
    gamma: float = 0.95
    batch_size: int = 32
    buffer_capacity: int = 2000
    epsilon_start: float = 1.0
    epsilon_restart: float = 0.1
    epsilon_end: float = 1e-4
    epsilon_decay: float = 0.995
    reward_drop_threshold: float = 0.15
    upper_reward_threshold: float = 0.8
    grouping_threshold: float = 0.0
    train_iterations: int = 40
    steps_per_iteration: int = 25
    validation_iterations: int = 8
    hidden_sizes: list = field(default_factory=lambda: [16, 16])
    target_sync_every: int = 1             # 1 = copy target weights after every step
    output_init_scale: float = 0.01        # extra shrink on the final layer init

    # --- run control ---
    load_mode: str = "light"
    variant: str = "ae-vas"
    out_dir: str = "out"
    workers: int = 1
    profile: str = "full"
    table3_optimal_row: bool = True

    def arrival_rate(self, load_mode: str | None = None) -> float:
        mode = load_mode or self.load_mode
        if mode == "light":
            return self.arrival_rate_light
        if mode == "heavy":
            return self.arrival_rate_heavy
        raise ConfigError(f"unknown load mode {mode!r}")

    def effective_agent_seed(self) -> int:
        return self.seed if self.agent_seed is None else self.agent_seed

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def validate(self) -> None:
        errors = []

        def check(cond, msg):
            if not cond:
                errors.append(msg)

        check(self.n_users > 0, "n_users must be positive")
        check(self.isd_m > 0, "isd_m must be positive")
        check(self.mc_radius_m > 0, "mc_radius_m must be positive")
        check(self.deployment_radius_m >= self.mc_radius_m,
              "deployment_radius_m must cover the MC disc")
        check(self.destroyed_site is None or 0 <= self.destroyed_site <= 6,
              "destroyed_site must be in [0, 6] or null")
        check(0.0 <= self.mc_seed_fraction <= 1.0, "mc_seed_fraction must be in [0, 1]")
        check(0.0 <= self.mc_cluster_fraction <= 1.0, "mc_cluster_fraction must be in [0, 1]")
        check(self.carrier_ghz > 0, "carrier_ghz must be positive")
        check(self.bandwidth_hz > 0, "bandwidth_hz must be positive")
        check(self.hpbw_az_deg > 0 and self.hpbw_el_deg > 0, "antenna beamwidths must be positive")
        check(self.se_cap_bps_per_hz > 0, "se_cap_bps_per_hz must be positive")
        check(self.activity_reference_rate > 0, "activity_reference_rate must be positive")
        check(self.arrival_rate_light > 0, "arrival_rate_light must be positive")
        check(self.arrival_rate_heavy > 0, "arrival_rate_heavy must be positive")
        check(self.arrival_coupling_rate >= max(self.arrival_rate_light, self.arrival_rate_heavy),
              "arrival_coupling_rate must be >= both load rates")
        check(self.payload_bits > 0, "payload_bits must be positive")
        check(self.sim_time_s > 0, "sim_time_s must be positive")
        check(self.slot_s > 0, "slot_s must be positive")
        check(abs(self.slot_s * 4 - 0.002) < 1e-12, "slot_s * 4 must equal the 2 ms TDD period")
        period = 4 * self.slot_s
        check(abs(self.sim_time_s / period - round(self.sim_time_s / period)) < 1e-9,
              "sim_time_s must be an integer multiple of the 2 ms TDD period")
        check(len(self.slot_pattern) % 4 == 0 and len(self.slot_pattern) > 0,
              "slot_pattern length must be a positive multiple of 4")
        for s in self.slot_pattern:
            check(s in VALID_SLOT_NAMES, f"unknown slot type {s!r} in slot_pattern")
        for name in ("tilt_grid_deg", "x_grid_m", "y_grid_m", "z_grid_m"):
            grid = getattr(self, name)
            check(len(grid) >= 1, f"{name} must be nonempty")
            check(all(b > a for a, b in zip(grid, grid[1:])), f"{name} must be strictly increasing")
        check(self.initial_tilt_deg in self.tilt_grid_deg, "initial_tilt_deg must be on the tilt grid")
        check(self.initial_x_m in self.x_grid_m, "initial_x_m must be on the x grid")
        check(self.initial_y_m in self.y_grid_m, "initial_y_m must be on the y grid")
        check(self.initial_z_m in self.z_grid_m, "initial_z_m must be on the z grid")
        check(self.n_phases >= 1, "n_phases must be >= 1")
        if self.phase_drift_vectors is not None:
            check(len(self.phase_drift_vectors) == self.n_phases - 1,
                  "phase_drift_vectors must have n_phases - 1 entries")
            for v in self.phase_drift_vectors:
                check(isinstance(v, (list, tuple)) and len(v) == 2,
                      "each phase drift vector must be [dx, dy]")
        w_sum = self.reward_w1 + self.reward_w2 + self.reward_w3
        check(abs(w_sum - 1.0) < 1e-9, "reward weights must sum to 1")
        check(self.reward_w1 >= 0 and self.reward_w2 >= 0 and self.reward_w3 >= 0,
              "reward weights must be non-negative")
        check(self.learning_rate > 0, "learning_rate must be positive")
        check(0.0 < self.gamma < 1.0, "gamma must be in (0, 1)")
        check(self.batch_size > 0, "batch_size must be positive")
        check(self.buffer_capacity >= self.batch_size, "buffer_capacity must hold one batch")
        check(0 < self.epsilon_end <= self.epsilon_start <= 1.0,
              "epsilon bounds must satisfy 0 < epsilon_end <= epsilon_start <= 1")
        check(0.0 < self.epsilon_decay < 1.0, "epsilon_decay must be in (0, 1)")
        check(self.reward_drop_threshold >= 0, "reward_drop_threshold must be >= 0")
        check(self.upper_reward_threshold >= 0, "upper_reward_threshold must be >= 0")
        check(self.train_iterations > 0 and self.steps_per_iteration > 0,
              "iteration counts must be positive")
        check(self.validation_iterations > 0, "validation_iterations must be positive")
        check(self.target_sync_every >= 1, "target_sync_every must be >= 1")
        check(self.load_mode in VALID_LOAD_MODES, f"load_mode must be one of {VALID_LOAD_MODES}")
        check(self.variant in VALID_VARIANTS, f"variant must be one of {VALID_VARIANTS}")
        check(self.profile in VALID_PROFILES, f"profile must be one of {VALID_PROFILES}")
        check(self.workers >= 1, "workers must be >= 1")
        if self.normalization_bounds is not None:
            for mode, bounds in self.normalization_bounds.items():
                check(mode in VALID_LOAD_MODES, f"bounds for unknown load mode {mode!r}")
                if not isinstance(bounds, dict):
                    errors.append(f"bounds for {mode!r} must be a mapping")
                    continue
                for feat, pair in bounds.items():
                    ok = isinstance(pair, (list, tuple)) and len(pair) == 2 and pair[1] > pair[0]
                    check(ok, f"bounds[{mode!r}][{feat!r}] must be [lo, hi] with hi > lo")

        if errors:
            raise ConfigError("invalid configuration:\n" + "\n".join(f"  - {e}" for e in errors))


_FIELD_NAMES = {f.name for f in dataclasses.fields(RunConfig)}


def config_from_dict(data: dict) -> RunConfig:
    unknown = sorted(set(data) - _FIELD_NAMES)
    if unknown:
        raise ConfigError("invalid configuration:\n" + "\n".join(
            f"  - unknown key {k!r}" for k in unknown))
    cfg = RunConfig(**data)
    cfg.validate()
    return cfg


def load_config(path: str) -> RunConfig:
    """Load a JSON config file; an empty file yields all defaults."""
    with open(path, "r", encoding="utf-8") as f:
        text = f.read()
    if not text.strip():
        data = {}
    else:
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"invalid configuration: not valid JSON ({e})") from e
    if not isinstance(data, dict):
        raise ConfigError("invalid configuration: top level must be a JSON object")
    return config_from_dict(data)


def save_config(cfg: RunConfig, path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(cfg.to_dict(), f, indent=2, sort_keys=True)
        f.write("\n")


def apply_profile(cfg: RunConfig, profile: str) -> RunConfig:
    """Return a copy adjusted for the named profile.

    The fast profile shortens the simulated drop and shrinks the user
    population; grids and learner settings are untouched.
    """
    if profile not in VALID_PROFILES:
        raise ConfigError(f"unknown profile {profile!r}")
    out = dataclasses.replace(cfg, profile=profile)
    if profile == "fast":
        out.sim_time_s = 0.2
        out.n_users = 100
    out.validate()
    return out
