"""KPI extraction and reward: nearest-rank percentiles of mission-critical
user throughput, per-direction drop rates, min-max feature normalization and
the weighted service-quality reward."""

import math
from dataclasses import dataclass, field

from .traffic import DIR_DL, DIR_UL, SimResult, user_throughput

THROUGHPUT_FEATURES = ("dl_tp_50", "dl_tp_5", "ul_tp_50", "ul_tp_5")


class EmptyMcSampleError(ValueError):
    """No mission-critical user was activated in the simulated window."""


class UnnormalizedInputError(ValueError):
    """Reward inputs must already be normalized into [0, 1]."""


@dataclass
class KpiSnapshot:
    dl_tp_50: float
    dl_tp_5: float
    ul_tp_50: float
    ul_tp_5: float
    dl_drop: float
    ul_drop: float

    def validate_raw(self):
        assert 0.0 <= self.dl_drop <= 1.0 and 0.0 <= self.ul_drop <= 1.0
        assert self.dl_tp_5 <= self.dl_tp_50 and self.ul_tp_5 <= self.ul_tp_50
        assert min(self.dl_tp_5, self.ul_tp_5) >= 0.0

    def as_tuple(self):
        return (self.dl_tp_50, self.dl_tp_5, self.ul_tp_50, self.ul_tp_5,
                self.dl_drop, self.ul_drop)


WORST_CASE_KPI = KpiSnapshot(0.0, 0.0, 0.0, 0.0, 1.0, 1.0)


@dataclass
class RewardWeights:
    w1: float = 0.5     # drop-rate term
    w2: float = 0.3     # 5th-percentile throughput term
    w3: float = 0.2     # median throughput term

    def __post_init__(self):
        if abs(self.w1 + self.w2 + self.w3 - 1.0) > 1e-9:
            raise ValueError("weights must sum to 1")
        if min(self.w1, self.w2, self.w3) < 0:
            raise ValueError("weights must be non-negative")


@dataclass
class NormalizationBounds:
    """Per-feature (lo, hi) for the four throughput features."""
    bounds: dict = field(default_factory=dict)

    def __post_init__(self):
        for feat in THROUGHPUT_FEATURES:
            lo, hi = self.bounds.get(feat, (0.0, 1.0))
            if not hi > lo:
                raise ValueError(f"bounds for {feat} must satisfy hi > lo")

    @classmethod
    def from_dict(cls, d: dict) -> "NormalizationBounds":
        return cls(bounds={k: (float(v[0]), float(v[1])) for k, v in d.items()})

    def to_dict(self) -> dict:
        return {k: [v[0], v[1]] for k, v in self.bounds.items()}


def percentile(values, p: float) -> float:
    """Nearest-rank percentile: sorted ascending, element ceil(p*n) - 1."""
    if not 0.0 < p < 1.0:
        raise ValueError("p must be in (0, 1)")
    vals = sorted(values)
    if not vals:
        raise EmptyMcSampleError("no served MC users")
    idx = math.ceil(p * len(vals)) - 1
    return vals[max(idx, 0)]


def kpi_snapshot(sim: SimResult, is_mc) -> KpiSnapshot:
    """Six service-quality features of the mission-critical users.

    Drop rates divide dropped MC users by activated MC users per direction.
    A direction with no activations gets worst-case features; when neither
    direction saw an MC activation the caller gets an error instead.
    """
    act_mc_dl = {u for u in sim.activated_dl if is_mc[u]}
    act_mc_ul = {u for u in sim.activated_ul if is_mc[u]}
    if not act_mc_dl and not act_mc_ul:
        raise EmptyMcSampleError("empty MC sample")

    drop_dl_users = set()
    drop_ul_users = set()
    tput_dl = []
    tput_ul = []
    for rec in sim.records:
        if not is_mc[rec.user]:
            continue
        if rec.direction == DIR_DL:
            if rec.dropped:
                drop_dl_users.add(rec.user)
            else:
                tput_dl.append(user_throughput(rec, sim.sim_end_s))
        else:
            if rec.dropped:
                drop_ul_users.add(rec.user)
            else:
                tput_ul.append(user_throughput(rec, sim.sim_end_s))

    if act_mc_dl:
        dl_drop = len(drop_dl_users) / len(act_mc_dl)
        dl_50 = percentile(tput_dl, 0.50) if tput_dl else 0.0
        dl_5 = percentile(tput_dl, 0.05) if tput_dl else 0.0
    else:
        dl_drop, dl_50, dl_5 = 1.0, 0.0, 0.0
    if act_mc_ul:
        ul_drop = len(drop_ul_users) / len(act_mc_ul)
        ul_50 = percentile(tput_ul, 0.50) if tput_ul else 0.0
        ul_5 = percentile(tput_ul, 0.05) if tput_ul else 0.0
    else:
        ul_drop, ul_50, ul_5 = 1.0, 0.0, 0.0

    return KpiSnapshot(dl_tp_50=dl_50, dl_tp_5=dl_5, ul_tp_50=ul_50, ul_tp_5=ul_5,
                       dl_drop=dl_drop, ul_drop=ul_drop)


def _minmax(x, lo, hi):
    return min(max((x - lo) / (hi - lo), 0.0), 1.0)


def normalize(kpi: KpiSnapshot, bounds: NormalizationBounds) -> KpiSnapshot:
    """Min-max scale the throughput features into [0, 1]; drops pass through."""
    b = bounds.bounds
    return KpiSnapshot(
        dl_tp_50=_minmax(kpi.dl_tp_50, *b.get("dl_tp_50", (0.0, 1.0))),
        dl_tp_5=_minmax(kpi.dl_tp_5, *b.get("dl_tp_5", (0.0, 1.0))),
        ul_tp_50=_minmax(kpi.ul_tp_50, *b.get("ul_tp_50", (0.0, 1.0))),
        ul_tp_5=_minmax(kpi.ul_tp_5, *b.get("ul_tp_5", (0.0, 1.0))),
        dl_drop=kpi.dl_drop, ul_drop=kpi.ul_drop)


def reward(kpi_norm: KpiSnapshot, w: RewardWeights = RewardWeights()) -> float:
    """Weighted sum of the six normalized features, in [0, 1]."""
    for v in kpi_norm.as_tuple():
        if not 0.0 <= v <= 1.0:
            raise UnnormalizedInputError(f"unnormalized input: {v}")
    return (w.w1 * ((1.0 - kpi_norm.dl_drop) + (1.0 - kpi_norm.ul_drop)) / 2.0
            + w.w2 * (kpi_norm.ul_tp_5 + kpi_norm.dl_tp_5) / 2.0
            + w.w3 * (kpi_norm.ul_tp_50 + kpi_norm.dl_tp_50) / 2.0)


KPI_CSV_FIELDS = ("dl_tp_50", "dl_tp_5", "ul_tp_50", "ul_tp_5", "dl_drop", "ul_drop")


def kpi_csv_values(kpi: KpiSnapshot) -> list:
    return [kpi.dl_tp_50, kpi.dl_tp_5, kpi.ul_tp_50, kpi.ul_tp_5,
            kpi.dl_drop, kpi.ul_drop]
