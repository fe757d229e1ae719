"""Dynamic traffic: Poisson user activation, fixed-size transfers, and the
slot-by-slot service simulation over the TDD pattern including the two-hop
relay queues of UAV-served users."""

import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from .config import RunConfig
from .network import N_MACRO_CELLS, N_UAV_SECTORS, UAV_CELL_BASE, RadioTables

DIR_DL = 0
DIR_UL = 1


class DegenerateRecordError(ValueError):
    """A transfer record with no elapsed time cannot yield a throughput."""


@dataclass
class TrafficConfig:
    arrival_rate_per_s: float
    payload_bits: float
    sim_time_s: float
    slot_s: float
    slot_pattern: tuple
    coupling_rate_per_s: float

    def __post_init__(self):
        if abs(self.slot_s * 4 - 0.002) > 1e-12:
            raise ValueError("slot_s * 4 must equal the 2 ms TDD period")
        period = 4 * self.slot_s
        if abs(self.sim_time_s / period - round(self.sim_time_s / period)) > 1e-9:
            raise ValueError("sim_time_s must be a multiple of the TDD period")

    @classmethod
    def from_run_config(cls, cfg: RunConfig, load_mode: str) -> "TrafficConfig":
        return cls(arrival_rate_per_s=cfg.arrival_rate(load_mode),
                   payload_bits=float(cfg.payload_bits),
                   sim_time_s=cfg.sim_time_s, slot_s=cfg.slot_s,
                   slot_pattern=tuple(cfg.slot_pattern),
                   coupling_rate_per_s=cfg.arrival_coupling_rate)


@dataclass
class Arrival:
    time_s: float
    user: int
    direction: int


def thin_arrivals(base, rate: float, coupling_rate: float):
    """Keep the sub-stream of the base Poisson process matching `rate`.

    The light-load stream is a subset of the heavy-load stream drawn from the
    same seed, which keeps cross-load comparisons free of resampling noise.
    """
    times, users, dirs, keep = base
    if rate > coupling_rate + 1e-9:
        raise ValueError("arrival rate exceeds the coupling base rate")
    mask = keep < (rate / coupling_rate)
    return times[mask], users[mask], dirs[mask]


def generate_arrivals(tc: TrafficConfig, n_users: int,
                      rng: np.random.Generator) -> list[Arrival]:
    """Poisson activations over the simulation window.

    Events are drawn at the coupling base rate and thinned to the configured
    rate, so runs at different loads from the same seed share events.
    """
    if tc.arrival_rate_per_s < 0:
        raise ValueError("arrival rate must be >= 0")
    if tc.arrival_rate_per_s == 0:
        return []
    base_rate = max(tc.coupling_rate_per_s, tc.arrival_rate_per_s)
    n_ev = rng.poisson(base_rate * tc.sim_time_s)
    times = np.sort(rng.random(n_ev)) * tc.sim_time_s
    users = rng.integers(0, n_users, size=n_ev)
    dirs = rng.integers(0, 2, size=n_ev)
    keep = rng.random(n_ev)
    t, u, d = thin_arrivals((times, users, dirs, keep),
                            tc.arrival_rate_per_s, base_rate)
    return [Arrival(float(ti), int(ui), int(di)) for ti, ui, di in zip(t, u, d)]


@dataclass
class TransferRecord:
    user: int
    direction: int
    activation_time_s: float
    served_bits: float = 0.0
    completion_time_s: float | None = None
    dropped: bool = False

    @property
    def finished(self) -> bool:
        return self.completion_time_s is not None


def user_throughput(rec: TransferRecord, sim_end_s: float) -> float:
    """Served bits over elapsed time; unfinished transfers use the window end."""
    end = rec.completion_time_s if rec.finished else sim_end_s
    elapsed = end - rec.activation_time_s
    if elapsed <= 0:
        raise DegenerateRecordError("degenerate record: no elapsed time")
    return rec.served_bits / elapsed


@dataclass
class SimResult:
    records: list
    activity: dict                # (slot_type, kind) -> transmission count
    slots_by_type: dict           # slot_type -> slot count
    relay_violations: int
    blocked_access_slots: int     # eligible slots where only relay-blocked users queued
    activated_dl: set
    activated_ul: set
    sim_end_s: float


def simulate_slots(radio: RadioTables, arrivals, tc: TrafficConfig,
                   rep_uniforms: np.ndarray) -> SimResult:
    """Run the TDD slot schedule and serve round-robin queues.

    `arrivals` is (times, users, dirs) arrays; `rep_uniforms` has one row per
    slot and one column per cell, used to draw uplink interference
    representatives.
    """
    cfg = radio.cfg
    n_slots = int(round(tc.sim_time_s / tc.slot_s))
    pattern = tc.slot_pattern
    n_pat = len(pattern)
    payload = tc.payload_bits
    slot_s = tc.slot_s
    noise = radio.noise_mw
    bw = cfg.bandwidth_hz
    cap = cfg.se_cap_bps_per_hz * bw
    log2 = math.log2
    donor = radio.donor_cell
    has_uav = donor is not None

    serving = radio.serving.tolist()
    dropped_dl = radio.dropped_dl.tolist()
    dropped_ul = radio.dropped_ul.tolist()
    bits_dl1 = (radio.rate_dl1 * slot_s).tolist()
    bits_dl2 = (radio.rate_dl2 * slot_s).tolist()
    s_ul = radio.s_ul_mw.tolist()
    g_rx = radio.g_rx_lin.tolist()               # [receiver][user]
    p_e = 10.0 ** (cfg.ue_tx_power_dbm / 10.0)
    p_uav = 10.0 ** (cfg.uav_tx_power_dbm / 10.0)
    bh_fixed = radio.bh_fixed_lin.tolist() if has_uav else None
    bh_dl_bits = radio.bh_dl_rate_bps * slot_s
    s_bh_ul = radio.s_bh_ul_mw

    times, users, dirs = arrivals
    ev_times = times.tolist()
    ev_users = users.tolist()
    ev_dirs = dirs.tolist()
    n_ev = len(ev_times)
    ev_ptr = 0

    q_dl = [deque() for _ in range(UAV_CELL_BASE + N_UAV_SECTORS)]
    q_ul = [deque() for _ in range(UAV_CELL_BASE + N_UAV_SECTORS)]
    bh_dl_q = deque()
    bh_ul_q = deque()
    in_bh_ul_q = set()

    active_dl = {}
    active_ul = {}
    relay_dl = {}
    backhauled = {}
    relay_ul = {}
    uplinked = {}

    records = []
    activity = {}
    slots_by_type = {}
    relay_violations = 0
    blocked = 0
    activated_dl = set()
    activated_ul = set()
    eps = 1e-6

    def log(stype, kind):
        key = (stype, kind)
        activity[key] = activity.get(key, 0) + 1

    for slot in range(n_slots):
        t0 = slot * slot_s
        t_end = t0 + slot_s
        while ev_ptr < n_ev and ev_times[ev_ptr] <= t0:
            u = ev_users[ev_ptr]
            d = ev_dirs[ev_ptr]
            t_act = ev_times[ev_ptr]
            ev_ptr += 1
            act = active_dl if d == DIR_DL else active_ul
            if u in act:
                continue                          # still busy: no re-activation
            rec = TransferRecord(user=u, direction=d, activation_time_s=t_act)
            records.append(rec)
            act[u] = rec
            (activated_dl if d == DIR_DL else activated_ul).add(u)
            c = serving[u]
            if d == DIR_DL:
                if dropped_dl[u] or c < 0:
                    rec.dropped = True
                    continue
                if c >= UAV_CELL_BASE:
                    relay_dl[u] = 0.0
                    backhauled[u] = 0.0
                    q_dl[c].append(u)
                    bh_dl_q.append(u)
                else:
                    q_dl[c].append(u)
            else:
                if dropped_ul[u] or c < 0:
                    rec.dropped = True
                    continue
                if c >= UAV_CELL_BASE:
                    relay_ul[u] = 0.0
                    uplinked[u] = 0.0
                q_ul[c].append(u)

        stype = pattern[slot % n_pat]
        slots_by_type[stype] = slots_by_type.get(stype, 0) + 1

        if stype == "DL1" or stype == "DL2":
            is_dl1 = stype == "DL1"
            for c in range(N_MACRO_CELLS):
                q = q_dl[c]
                if not q:
                    continue
                if is_dl1 and c == donor:
                    continue                      # donor slot reserved for backhaul
                u = q[0]
                bits = bits_dl1[u] if is_dl1 else bits_dl2[u]
                if bits <= 0.0:
                    q.rotate(-1)
                    continue
                rec = active_dl[u]
                need = payload - rec.served_bits
                got = bits if bits < need else need
                rec.served_bits += got
                log(stype, "macro_access_dl")
                q.popleft()
                if rec.served_bits + eps >= payload:
                    rec.completion_time_s = t_end
                    del active_dl[u]
                else:
                    q.append(u)
            if has_uav:
                if is_dl1:
                    if bh_dl_q and bh_dl_bits > 0.0:
                        u = bh_dl_q.popleft()
                        need = payload - backhauled[u]
                        got = bh_dl_bits if bh_dl_bits < need else need
                        backhauled[u] += got
                        relay_dl[u] += got
                        log(stype, "backhaul_dl")
                        if backhauled[u] + eps < payload:
                            bh_dl_q.append(u)
                else:
                    for s in range(N_UAV_SECTORS):
                        c = UAV_CELL_BASE + s
                        q = q_dl[c]
                        if not q:
                            continue
                        picked = -1
                        for i, u in enumerate(q):
                            if relay_dl[u] > 0.0 and bits_dl2[u] > 0.0:
                                picked = i
                                break
                        if picked < 0:
                            blocked += 1          # relay causality: nothing deliverable
                            continue
                        u = q[picked]
                        del q[picked]
                        rec = active_dl[u]
                        avail = relay_dl[u]
                        bits = bits_dl2[u]
                        got = bits if bits < avail else avail
                        need = payload - rec.served_bits
                        if got > need:
                            got = need
                        rec.served_bits += got
                        relay_dl[u] -= got
                        if rec.served_bits - backhauled[u] > eps:
                            relay_violations += 1
                        log(stype, "uav_access_dl")
                        if rec.served_bits + eps >= payload:
                            rec.completion_time_s = t_end
                            del active_dl[u]
                        else:
                            q.append(u)
        else:
            is_ul1 = stype == "UL1"
            # pick the scheduled transmitter per cell first, then rate them
            sched = {}
            for c in range(N_MACRO_CELLS):
                if is_ul1 and c == donor:
                    continue                      # donor receives backhaul in UL1
                if q_ul[c]:
                    sched[c] = q_ul[c][0]
            if not is_ul1 and has_uav:
                for s in range(N_UAV_SECTORS):
                    c = UAV_CELL_BASE + s
                    if q_ul[c]:
                        sched[c] = q_ul[c][0]
            bh_active = is_ul1 and has_uav and bool(bh_ul_q)

            # uplink interference representatives, one per transmitting cell
            rep_row = rep_uniforms[slot]
            reps = {}
            for c in sched:
                q = q_ul[c]
                reps[c] = q[min(int(rep_row[c] * len(q)), len(q) - 1)]

            for c, u in sched.items():
                interf = 0.0
                grow = g_rx[c]
                for cc, ru in reps.items():
                    if cc != c:
                        interf += p_e * grow[ru]
                if is_ul1 and bh_active and c < N_MACRO_CELLS:
                    interf += p_uav * bh_fixed[c]
                sinr = s_ul[u] / (noise + interf)
                rate = bw * log2(1.0 + sinr)
                if rate > cap:
                    rate = cap
                bits = rate * slot_s
                q = q_ul[c]
                q.popleft()
                if c >= UAV_CELL_BASE:
                    need = payload - uplinked[u]
                    got = bits if bits < need else need
                    uplinked[u] += got
                    relay_ul[u] += got
                    log(stype, "uav_access_ul")
                    if u not in in_bh_ul_q:
                        in_bh_ul_q.add(u)
                        bh_ul_q.append(u)
                    if uplinked[u] + eps < payload:
                        q.append(u)
                else:
                    rec = active_ul[u]
                    need = payload - rec.served_bits
                    got = bits if bits < need else need
                    rec.served_bits += got
                    log(stype, "macro_access_ul")
                    if rec.served_bits + eps >= payload:
                        rec.completion_time_s = t_end
                        del active_ul[u]
                    else:
                        q.append(u)

            if bh_active:
                picked = -1
                for i, u in enumerate(bh_ul_q):
                    if relay_ul[u] > 0.0:
                        picked = i
                        break
                if picked < 0:
                    blocked += 1
                else:
                    u = bh_ul_q[picked]
                    del bh_ul_q[picked]
                    interf = 0.0
                    grow = g_rx[donor]
                    for cc, ru in reps.items():
                        if cc != donor:
                            interf += p_e * grow[ru]
                    sinr = s_bh_ul / (noise + interf)
                    rate = bw * log2(1.0 + sinr)
                    if rate > cap:
                        rate = cap
                    bits = rate * slot_s
                    avail = relay_ul[u]
                    got = bits if bits < avail else avail
                    rec = active_ul[u]
                    rec.served_bits += got
                    relay_ul[u] -= got
                    if rec.served_bits - uplinked[u] > eps:
                        relay_violations += 1
                    log(stype, "backhaul_ul")
                    if rec.served_bits + eps >= payload:
                        rec.completion_time_s = t_end
                        del active_ul[u]
                        in_bh_ul_q.discard(u)
                    else:
                        bh_ul_q.append(u)

    return SimResult(records=records, activity=activity, slots_by_type=slots_by_type,
                     relay_violations=relay_violations, blocked_access_slots=blocked,
                     activated_dl=activated_dl, activated_ul=activated_ul,
                     sim_end_s=tc.sim_time_s)
