"""Network world: hexagonal macro layout with a destroyed center site, the
UAV relay node with three access sectors and one steerable backhaul antenna,
donor selection, per-slot-type SINR under the four duplex interference cases,
and end-to-end user association."""

import math
from dataclasses import dataclass, field

import numpy as np

from . import channel
from .channel import AntennaConfig, Position3D, db_to_linear, linear_to_db
from .config import RunConfig

N_SITES = 7
SECTORS_PER_SITE = 3
N_MACRO_CELLS = N_SITES * SECTORS_PER_SITE          # cell ids 0..20
UAV_CELL_BASE = N_MACRO_CELLS                        # uav sectors 21..23
N_UAV_SECTORS = 3
N_CELLS = N_MACRO_CELLS + N_UAV_SECTORS

SLOT_TYPES = ("DL1", "DL2", "UL1", "UL2")
DL_SLOTS = ("DL1", "DL2")
UL_SLOTS = ("UL1", "UL2")

# Seed-stream tags (spawn keys) so every random draw has a stable address.
TAG_CLUSTER_BASE = 0
TAG_USERS = 1
TAG_CHANNEL = 2
TAG_ARRIVALS = 3
TAG_UL_REPS = 4


class NoDonorError(RuntimeError):
    """No alive macro sector can serve as donor."""


class SlotActivityError(ValueError):
    """A link was queried in a slot where it is never scheduled."""


def _rng(seed: int, tag: int, phase: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(tag, phase)))


def phase_drift_offset(cfg: RunConfig, phase: int) -> np.ndarray:
    """Cumulative drift of the MC user cluster up to `phase` [m]."""
    off = np.zeros(2)
    for k in range(1, phase + 1):
        if cfg.phase_drift_vectors is not None:
            off += np.asarray(cfg.phase_drift_vectors[k - 1], dtype=float)
        else:
            heading = math.radians(45.0 * (k - 1))
            off += cfg.phase_drift_step_m * np.array([math.cos(heading), math.sin(heading)])
    return off


@dataclass
class World:
    """Frozen per-phase network world: geometry, users and channel draws.

    Everything here depends only on (config, phase); the UAV state never
    enters, so one world is shared by all 700 candidate states.
    """
    cfg: RunConfig
    phase: int
    site_xy: np.ndarray            # (7, 2)
    site_alive: np.ndarray         # (7,) bool
    sector_bearing_deg: np.ndarray  # (21,)
    cell_site: np.ndarray          # (21,) site index per macro cell
    user_xy: np.ndarray            # (n, 2)
    user_is_mc: np.ndarray         # (n,) bool
    n_cluster: int
    # frozen channel randomness
    u_los_site_user: np.ndarray    # (7, n)
    shadow_site_user: np.ndarray   # (7, n) standard normals
    u_los_uav_user: np.ndarray     # (n,)
    shadow_uav_user: np.ndarray    # (n,)
    u_los_bh: np.ndarray           # (7,)
    shadow_bh: np.ndarray          # (7,)
    u_assoc_rep: np.ndarray        # (24,) representative pick per cell
    # derived macro-side tables (state independent)
    gain_macro_db: np.ndarray = field(default=None)   # (21, n)
    gain_macro_lin: np.ndarray = field(default=None)
    i_dl_macro_full_mw: np.ndarray = field(default=None)  # (n,) all alive sectors at full power
    base_arrivals: tuple = field(default=None)         # times/users/dirs/keep marks

    def alive_cells(self):
        return [c for c in range(N_MACRO_CELLS) if self.site_alive[self.cell_site[c]]]


def macro_antenna(cfg: RunConfig, bearing_deg: float) -> AntennaConfig:
    return AntennaConfig(
        bearing_deg=bearing_deg, electrical_tilt_deg=cfg.macro_tilt_deg,
        hpbw_az_deg=cfg.hpbw_az_deg, hpbw_el_deg=cfg.hpbw_el_deg,
        max_gain_dbi=cfg.macro_max_gain_dbi, front_to_back_db=cfg.front_to_back_db,
        sla_v_db=cfg.sla_v_db)


def uav_antenna(cfg: RunConfig, bearing_deg: float, tilt_deg: float) -> AntennaConfig:
    return AntennaConfig(
        bearing_deg=bearing_deg, electrical_tilt_deg=tilt_deg,
        hpbw_az_deg=cfg.hpbw_az_deg, hpbw_el_deg=cfg.hpbw_el_deg,
        max_gain_dbi=cfg.uav_max_gain_dbi, front_to_back_db=cfg.front_to_back_db,
        sla_v_db=cfg.sla_v_db)


def noise_dbm(cfg: RunConfig) -> float:
    return -174.0 + 10.0 * math.log10(cfg.bandwidth_hz) + cfg.noise_figure_db


def _pattern_db(cfg: RunConfig, max_gain, az_off, el_off, tilt):
    a_az = np.minimum(12.0 * (az_off / cfg.hpbw_az_deg) ** 2, cfg.front_to_back_db)
    a_el = np.minimum(12.0 * ((el_off + tilt) / cfg.hpbw_el_deg) ** 2, cfg.sla_v_db)
    return max_gain - np.minimum(a_az + a_el, cfg.front_to_back_db)


def _wrap_deg(a):
    return -(np.mod(-a + 180.0, 360.0) - 180.0)


def _place_users(cfg: RunConfig, phase: int):
    n = cfg.n_users
    n_mc_seed = int(round(n * cfg.mc_seed_fraction))
    n_cluster = int(round(n_mc_seed * cfg.mc_cluster_fraction))
    n_mc_uniform = n_mc_seed - n_cluster
    n_area = n - n_mc_seed

    rng_base = _rng(cfg.seed, TAG_CLUSTER_BASE, 0)
    r = cfg.mc_radius_m * np.sqrt(rng_base.random(n_cluster))
    th = 2.0 * math.pi * rng_base.random(n_cluster)
    cluster_base = np.column_stack([r * np.cos(th), r * np.sin(th)])

    rng_u = _rng(cfg.seed, TAG_USERS, phase)
    r = cfg.mc_radius_m * np.sqrt(rng_u.random(n_mc_uniform))
    th = 2.0 * math.pi * rng_u.random(n_mc_uniform)
    mc_uniform = np.column_stack([r * np.cos(th), r * np.sin(th)])
    r = cfg.deployment_radius_m * np.sqrt(rng_u.random(n_area))
    th = 2.0 * math.pi * rng_u.random(n_area)
    area = np.column_stack([r * np.cos(th), r * np.sin(th)])

    drift = phase_drift_offset(cfg, phase)
    user_xy = np.vstack([cluster_base + drift, mc_uniform, area])
    is_mc = np.hypot(user_xy[:, 0], user_xy[:, 1]) <= cfg.mc_radius_m
    return user_xy, is_mc, n_cluster


def build_world(cfg: RunConfig, phase: int) -> World:
    if not (0 <= phase < cfg.n_phases):
        raise ValueError(f"phase {phase} outside schedule of {cfg.n_phases} phases")
    site_xy = np.zeros((N_SITES, 2))
    for i in range(1, N_SITES):
        ang = math.radians(60.0 * (i - 1))
        site_xy[i] = cfg.isd_m * np.array([math.cos(ang), math.sin(ang)])
    site_alive = np.ones(N_SITES, dtype=bool)
    if cfg.destroyed_site is not None:
        site_alive[cfg.destroyed_site] = False

    bearings = np.zeros(N_MACRO_CELLS)
    cell_site = np.zeros(N_MACRO_CELLS, dtype=int)
    for s in range(N_SITES):
        if cfg.sectors_face_center and s > 0:
            base = math.degrees(math.atan2(-site_xy[s, 1], -site_xy[s, 0]))
        else:
            base = 0.0
        for k in range(SECTORS_PER_SITE):
            c = SECTORS_PER_SITE * s + k
            bearings[c] = _wrap_deg(base + 120.0 * k)
            cell_site[c] = s

    user_xy, is_mc, n_cluster = _place_users(cfg, phase)
    n = cfg.n_users

    rng_c = _rng(cfg.seed, TAG_CHANNEL, phase)
    world = World(
        cfg=cfg, phase=phase, site_xy=site_xy, site_alive=site_alive,
        sector_bearing_deg=bearings, cell_site=cell_site,
        user_xy=user_xy, user_is_mc=is_mc, n_cluster=n_cluster,
        u_los_site_user=rng_c.random((N_SITES, n)),
        shadow_site_user=rng_c.standard_normal((N_SITES, n)),
        u_los_uav_user=rng_c.random(n),
        shadow_uav_user=rng_c.standard_normal(n),
        u_los_bh=rng_c.random(N_SITES),
        shadow_bh=rng_c.standard_normal(N_SITES),
        u_assoc_rep=rng_c.random(N_CELLS),
    )
    _fill_macro_tables(world)

    rng_a = _rng(cfg.seed, TAG_ARRIVALS, phase)
    n_ev = rng_a.poisson(cfg.arrival_coupling_rate * cfg.sim_time_s)
    times = np.sort(rng_a.random(n_ev)) * cfg.sim_time_s
    users = rng_a.integers(0, n, size=n_ev)
    dirs = rng_a.integers(0, 2, size=n_ev)          # 0 = DL, 1 = UL
    keep = rng_a.random(n_ev)
    world.base_arrivals = (times, users, dirs, keep)
    return world


def _shadow_db(cfg: RunConfig, normals, los):
    sigma = np.where(los, cfg.shadow_sigma_los_db, cfg.shadow_sigma_nlos_db)
    return normals * sigma


def _fill_macro_tables(world: World) -> None:
    cfg = world.cfg
    n = cfg.n_users
    dxy = world.user_xy[None, :, :] - world.site_xy[:, None, :]   # (7, n, 2)
    d2d = np.hypot(dxy[:, :, 0], dxy[:, :, 1])
    d2d = np.maximum(d2d, channel.MIN_D2D_M)
    dz = cfg.ue_height_m - cfg.macro_height_m
    d3d = np.hypot(d2d, dz)
    elev = np.degrees(np.arctan2(dz, d2d))                        # (7, n)
    az = np.degrees(np.arctan2(dxy[:, :, 1], dxy[:, :, 0]))

    los = world.u_los_site_user < channel.los_probability(d2d)
    pl = channel.pathloss_db(d3d, los, cfg.carrier_ghz,
                             cfg.building_height_m, cfg.nlos_excess_db)
    shadow = _shadow_db(cfg, world.shadow_site_user, los)

    gain = np.empty((N_MACRO_CELLS, n))
    for c in range(N_MACRO_CELLS):
        s = world.cell_site[c]
        az_off = _wrap_deg(az[s] - world.sector_bearing_deg[c])
        g = _pattern_db(cfg, cfg.macro_max_gain_dbi, az_off, elev[s], cfg.macro_tilt_deg)
        gain[c] = g - pl[s] - shadow[s]
    world.gain_macro_db = gain
    world.gain_macro_lin = db_to_linear(gain)

    p_m = db_to_linear(cfg.macro_tx_power_dbm)
    alive = world.site_alive[world.cell_site]
    world.i_dl_macro_full_mw = (p_m * world.gain_macro_lin[alive]).sum(axis=0)


@dataclass
class Scenario:
    """Immutable world plus the UAV placement under evaluation."""
    cfg: RunConfig
    phase: int
    uav: tuple | None              # (tilt_deg, x, y, z) or None when no UAV flies
    world: World


def build_scenario(cfg: RunConfig, phase: int, uav_state: tuple | None,
                   world: World | None = None) -> Scenario:
    """Assemble the scenario for one (phase, UAV state).

    Channel draws and user drops come from (seed, phase) only, so passing a
    cached `world` is equivalent to rebuilding it.
    """
    if world is None:
        world = build_world(cfg, phase)
    if uav_state is not None:
        tilt, x, y, z = uav_state
        if tilt not in cfg.tilt_grid_deg or x not in cfg.x_grid_m \
                or y not in cfg.y_grid_m or z not in cfg.z_grid_m:
            raise ValueError(f"UAV state {uav_state} is off the candidate grids")
    return Scenario(cfg=cfg, phase=phase, uav=uav_state, world=world)


# ---------------------------------------------------------------------------
# Backhaul candidate gains and donor selection
# ---------------------------------------------------------------------------

def backhaul_gains_db(scn: Scenario):
    """Per macro cell: (gain with UAV antenna pointed at that cell's site,
    gain with UAV antenna fixed toward the donor is computed separately)."""
    cfg, world = scn.cfg, scn.world
    tilt, ux, uy, uz = scn.uav
    dxy = world.site_xy - np.array([ux, uy])       # uav -> site
    d2d = np.maximum(np.hypot(dxy[:, 0], dxy[:, 1]), channel.MIN_D2D_M)
    dz = cfg.macro_height_m - uz
    d3d = np.hypot(d2d, dz)
    el_uav_site = np.degrees(np.arctan2(dz, d2d))  # (7,) elevation of site seen from uav
    az_uav_site = np.degrees(np.arctan2(dxy[:, 1], dxy[:, 0]))
    los = world.u_los_bh < channel.los_probability(d2d)
    pl = channel.pathloss_db(d3d, los, cfg.carrier_ghz,
                             cfg.building_height_m, cfg.nlos_excess_db)
    shadow = _shadow_db(cfg, world.shadow_bh, los)

    # macro-side gain toward the uav, per sector
    az_site_uav = _wrap_deg(az_uav_site + 180.0)
    el_site_uav = -el_uav_site
    g_macro = np.empty(N_MACRO_CELLS)
    for c in range(N_MACRO_CELLS):
        s = world.cell_site[c]
        az_off = _wrap_deg(az_site_uav[s] - world.sector_bearing_deg[c])
        g_macro[c] = _pattern_db(cfg, cfg.macro_max_gain_dbi, az_off,
                                 el_site_uav[s], cfg.macro_tilt_deg)

    # uav-side gain when the backhaul antenna is pointed at each candidate site
    g_uav_pointed = _pattern_db(cfg, cfg.uav_max_gain_dbi, 0.0, el_uav_site, tilt)
    site_of = world.cell_site
    g_select = g_macro + g_uav_pointed[site_of] - pl[site_of] - shadow[site_of]
    ctx = dict(az_uav_site=az_uav_site, el_uav_site=el_uav_site,
               pl=pl, shadow=shadow, g_macro=g_macro)
    return g_select, ctx


def _bh_fixed_gains_db(scn: Scenario, ctx: dict, donor_cell: int) -> np.ndarray:
    """Gains of site<->UAV-backhaul links with the antenna aimed at the donor."""
    cfg, world = scn.cfg, scn.world
    tilt = scn.uav[0]
    bearing = ctx["az_uav_site"][world.cell_site[donor_cell]]
    az_off = _wrap_deg(ctx["az_uav_site"] - bearing)
    g_uav = _pattern_db(cfg, cfg.uav_max_gain_dbi, az_off, ctx["el_uav_site"], tilt)
    site_of = world.cell_site
    return ctx["g_macro"] + g_uav[site_of] - ctx["pl"][site_of] - ctx["shadow"][site_of]


def select_donor(scn: Scenario) -> int:
    """Alive macro cell with the best backhaul link gain (ties: lowest id)."""
    if scn.uav is None:
        raise ValueError("no UAV in scenario")
    alive = scn.world.alive_cells()
    if not alive:
        raise NoDonorError("no donor available")
    g_select, _ = backhaul_gains_db(scn)
    best = alive[0]
    for c in alive[1:]:
        if g_select[c] > g_select[best]:
            best = c
    return best


# ---------------------------------------------------------------------------
# SINR composition
# ---------------------------------------------------------------------------

def combine_sinr_db(signal_dbm: float, interferer_dbms, noise_dbm_val: float) -> float:
    """SINR from powers in dBm; the interference sum happens in linear mW."""
    denom = float(db_to_linear(noise_dbm_val))
    for p in interferer_dbms:
        denom += float(db_to_linear(p))
    return float(signal_dbm - linear_to_db(denom))


def shannon_rate_bps(sinr_db, bandwidth_hz, se_cap_bps_per_hz=7.8):
    """Capped Shannon rate [bps]."""
    if bandwidth_hz <= 0:
        raise ValueError("bandwidth_hz must be positive")
    sinr = db_to_linear(sinr_db)
    rate = np.minimum(bandwidth_hz * np.log2(1.0 + sinr),
                      bandwidth_hz * se_cap_bps_per_hz)
    return float(rate) if np.ndim(rate) == 0 else rate


def activity_factor(cfg: RunConfig, load_mode: str) -> float:
    """Fraction of slots an interfering cell is assumed active at this load."""
    return min(1.0, cfg.arrival_rate(load_mode) / cfg.activity_reference_rate)


# ---------------------------------------------------------------------------
# Vectorized radio evaluation (association + rate tables)
# ---------------------------------------------------------------------------

@dataclass
class RadioTables:
    """Everything the slot simulator and the KPI layer need for one state."""
    cfg: RunConfig
    load_mode: str
    p_act: float
    noise_mw: float
    donor_cell: int | None
    serving: np.ndarray            # (n,) cell id, -1 when no candidate exists
    dropped_dl: np.ndarray         # (n,) bool
    dropped_ul: np.ndarray
    rate_dl1: np.ndarray           # (n,) bps at the serving cell in DL1 slots
    rate_dl2: np.ndarray
    sinr_best_dl_db: np.ndarray
    sinr_best_ul_db: np.ndarray
    s_ul_mw: np.ndarray            # (n,) uplink signal power at the serving receiver
    g_rx_lin: np.ndarray           # (24, n) linear gains user -> receiver
    bh_dl_rate_bps: float
    bh_ul_rate_bps: float
    s_bh_ul_mw: float
    bh_fixed_lin: np.ndarray | None   # (21,) linear site->uav gains, donor-aimed
    uav_users: np.ndarray          # user ids served by the uav
    uav_share_bps: float           # backhaul share used in the final scoring pass
    scores: np.ndarray             # (24, n) candidate scores of the final pass
    converged: bool
    n_assoc_iterations: int
    sinr_ul1_serving_db: np.ndarray
    sinr_ul2_serving_db: np.ndarray


def _rate(cfg, sinr_lin):
    return np.minimum(cfg.bandwidth_hz * np.log2(1.0 + sinr_lin),
                      cfg.bandwidth_hz * cfg.se_cap_bps_per_hz)


def evaluate_radio(scn: Scenario, load_mode: str) -> RadioTables:
    cfg, world = scn.cfg, scn.world
    n = cfg.n_users
    noise_mw = float(db_to_linear(noise_dbm(cfg)))
    p_act = activity_factor(cfg, load_mode)
    p_m = float(db_to_linear(cfg.macro_tx_power_dbm))
    p_u = float(db_to_linear(cfg.uav_tx_power_dbm))
    p_e = float(db_to_linear(cfg.ue_tx_power_dbm))
    thr_lin = float(db_to_linear(cfg.drop_threshold_db))

    alive = np.array([world.site_alive[world.cell_site[c]] for c in range(N_MACRO_CELLS)])
    g_macro_lin = world.gain_macro_lin
    i_macro = p_act * world.i_dl_macro_full_mw        # (n,)

    has_uav = scn.uav is not None
    if has_uav:
        tilt, ux, uy, uz = scn.uav
        dxy = world.user_xy - np.array([ux, uy])
        d2d = np.maximum(np.hypot(dxy[:, 0], dxy[:, 1]), channel.MIN_D2D_M)
        dz = cfg.ue_height_m - uz
        d3d = np.hypot(d2d, dz)
        elev = np.degrees(np.arctan2(dz, d2d))
        az = np.degrees(np.arctan2(dxy[:, 1], dxy[:, 0]))
        los = world.u_los_uav_user < channel.los_probability(d2d)
        pl = channel.pathloss_db(d3d, los, cfg.carrier_ghz,
                                 cfg.building_height_m, cfg.nlos_excess_db)
        shadow = _shadow_db(cfg, world.shadow_uav_user, los)
        g_uav_db = np.empty((N_UAV_SECTORS, n))
        for s in range(N_UAV_SECTORS):
            az_off = _wrap_deg(az - 120.0 * s)
            g_uav_db[s] = (_pattern_db(cfg, cfg.uav_max_gain_dbi, az_off, elev, tilt)
                           - pl - shadow)
        g_uav_lin = db_to_linear(g_uav_db)
        i_uav = p_act * (p_u * g_uav_lin).sum(axis=0)

        donor = select_donor(scn)
        _, bh_ctx = backhaul_gains_db(scn)
        bh_fixed_db = _bh_fixed_gains_db(scn, bh_ctx, donor)
        bh_fixed_lin = db_to_linear(bh_fixed_db)
        i_bh = p_act * p_m * (bh_fixed_lin * alive).sum() \
            - p_act * p_m * bh_fixed_lin[donor]
        bh_dl_sinr = p_m * bh_fixed_lin[donor] / (noise_mw + i_bh)
        bh_dl_rate = float(_rate(cfg, bh_dl_sinr))
    else:
        g_uav_lin = np.zeros((N_UAV_SECTORS, n))
        i_uav = np.zeros(n)
        donor = None
        bh_fixed_lin = None
        bh_dl_rate = 0.0

    # --- downlink SINR tables -------------------------------------------
    s_macro = p_m * g_macro_lin                                   # (21, n)
    sinr_dl1_m = s_macro / (noise_mw + i_macro - p_act * s_macro)
    sinr_dl2_m = s_macro / (noise_mw + i_macro + i_uav - p_act * s_macro)
    s_uav = p_u * g_uav_lin
    with np.errstate(divide="ignore", invalid="ignore"):
        sinr_dl2_u = np.where(
            s_uav > 0,
            s_uav / (noise_mw + i_macro + i_uav - p_act * s_uav),
            0.0)

    best_dl = np.maximum.reduce([
        np.where(alive[:, None], np.maximum(sinr_dl1_m, sinr_dl2_m), 0.0).max(axis=0),
        sinr_dl2_u.max(axis=0) if has_uav else np.zeros(n)])
    dropped_dl = best_dl < thr_lin

    # --- association (argmax of effective end-to-end DL rate) -----------
    rate_dl1_m = _rate(cfg, sinr_dl1_m)
    rate_dl2_m = _rate(cfg, sinr_dl2_m)
    score_macro = 0.5 * (rate_dl1_m + rate_dl2_m)
    if has_uav:
        score_macro[donor] = rate_dl2_m[donor]     # donor serves access in DL2 only
    score_macro = np.where(alive[:, None], score_macro, -np.inf)
    best_m_idx = score_macro.argmax(axis=0)
    best_m_val = score_macro[best_m_idx, np.arange(n)]

    rate_uav_access = _rate(cfg, sinr_dl2_u) if has_uav else np.zeros((N_UAV_SECTORS, n))
    serving = best_m_idx.copy()
    share = math.inf
    n_uav_prev = 1
    converged = True
    iters = 0
    scores = None
    if has_uav:
        converged = False
        for iters in range(1, 11):
            share = bh_dl_rate / max(n_uav_prev, 1)
            score_uav = np.minimum(rate_uav_access, share)
            bu_idx = score_uav.argmax(axis=0)
            bu_val = score_uav[bu_idx, np.arange(n)]
            serving = np.where(bu_val > best_m_val, UAV_CELL_BASE + bu_idx, best_m_idx)
            n_uav = int(np.count_nonzero((serving >= UAV_CELL_BASE) & ~dropped_dl))
            if n_uav == n_uav_prev:
                converged = True
                break
            n_uav_prev = n_uav
        scores = np.vstack([score_macro, np.minimum(rate_uav_access, share)])
    else:
        scores = np.vstack([score_macro, np.full((N_UAV_SECTORS, n), -np.inf)])

    uav_users = np.nonzero(serving >= UAV_CELL_BASE)[0]

    # --- uplink: representatives, expected interference, drops ----------
    g_rx_lin = np.vstack([g_macro_lin, g_uav_lin])                # (24, n)
    rep = np.full(N_CELLS, -1, dtype=int)
    for c in range(N_CELLS):
        members = np.nonzero(serving == c)[0]
        if members.size:
            rep[c] = int(members[min(int(world.u_assoc_rep[c] * members.size),
                                     members.size - 1)])
    has_rep = rep >= 0
    is_macro_cell = np.arange(N_CELLS) < N_MACRO_CELLS
    cell_alive24 = np.concatenate([alive, np.full(N_UAV_SECTORS, has_uav)])

    contrib = np.zeros(N_CELLS)            # per transmitting cell: P_ue at 1.0 gain
    # sum of rep contributions at each receiver, macro-only and all-cell variants
    sum_macro = np.zeros(N_CELLS)
    sum_all = np.zeros(N_CELLS)
    for c in range(N_CELLS):
        if has_rep[c] and cell_alive24[c]:
            v = p_e * g_rx_lin[:, rep[c]]
            sum_all += v
            if is_macro_cell[c]:
                sum_macro += v
    own_macro = np.where(has_rep & is_macro_cell & cell_alive24,
                         p_e * g_rx_lin[np.arange(N_CELLS), np.clip(rep, 0, None)], 0.0)
    own_all = np.where(has_rep & cell_alive24,
                       p_e * g_rx_lin[np.arange(N_CELLS), np.clip(rep, 0, None)], 0.0)

    i_ul1 = p_act * (sum_macro - own_macro)
    i_ul2 = p_act * (sum_all - own_all)
    if has_uav:
        # the backhaul uplink transmission interferes at macro receivers in UL1
        i_ul1[:N_MACRO_CELLS] += p_u * bh_fixed_lin

    s_ue = p_e * g_rx_lin                                          # (24, n)
    with np.errstate(divide="ignore", invalid="ignore"):
        sinr_ul1 = s_ue / (noise_mw + i_ul1[:, None])
        sinr_ul2 = s_ue / (noise_mw + i_ul2[:, None])
    # eligibility masks for the drop test: donor and uav receive access in UL2 only
    ul1_ok = cell_alive24 & is_macro_cell
    if has_uav and donor is not None:
        ul1_ok[donor] = False
    ul2_ok = cell_alive24
    best_ul = np.maximum(
        np.where(ul1_ok[:, None], sinr_ul1, 0.0).max(axis=0),
        np.where(ul2_ok[:, None], sinr_ul2, 0.0).max(axis=0))
    dropped_ul = best_ul < thr_lin

    # --- per-user service tables at the serving cell --------------------
    idx = np.arange(n)
    rate_dl1_user = np.zeros(n)
    rate_dl2_user = np.zeros(n)
    macro_served = serving < N_MACRO_CELLS
    rate_dl1_user[macro_served] = rate_dl1_m[serving[macro_served], idx[macro_served]]
    rate_dl2_user[macro_served] = rate_dl2_m[serving[macro_served], idx[macro_served]]
    if has_uav:
        rate_dl1_user[serving == donor] = 0.0
        um = ~macro_served
        rate_dl2_user[um] = rate_uav_access[serving[um] - UAV_CELL_BASE, idx[um]]
    s_ul_user = p_e * g_rx_lin[serving, idx]

    if has_uav:
        # the donor's own access users are silent in UL1; remove their rep term
        i_bh_ul = p_act * (sum_macro[donor] - own_macro[donor])
        s_bh_ul = p_u * bh_fixed_lin[donor]
        bh_ul_rate = float(_rate(cfg, s_bh_ul / (noise_mw + i_bh_ul)))
    else:
        s_bh_ul = 0.0
        bh_ul_rate = 0.0

    return RadioTables(
        cfg=cfg, load_mode=load_mode, p_act=p_act, noise_mw=noise_mw,
        donor_cell=donor, serving=serving,
        dropped_dl=dropped_dl, dropped_ul=dropped_ul,
        rate_dl1=rate_dl1_user, rate_dl2=rate_dl2_user,
        sinr_best_dl_db=np.asarray(linear_to_db(np.maximum(best_dl, 1e-300))),
        sinr_best_ul_db=np.asarray(linear_to_db(np.maximum(best_ul, 1e-300))),
        s_ul_mw=s_ul_user, g_rx_lin=g_rx_lin,
        bh_dl_rate_bps=bh_dl_rate, bh_ul_rate_bps=bh_ul_rate, s_bh_ul_mw=s_bh_ul,
        bh_fixed_lin=bh_fixed_lin,
        uav_users=uav_users, uav_share_bps=float(share) if has_uav else 0.0,
        scores=scores, converged=converged, n_assoc_iterations=iters,
        sinr_ul1_serving_db=np.asarray(linear_to_db(np.maximum(
            sinr_ul1[serving, idx], 1e-300))),
        sinr_ul2_serving_db=np.asarray(linear_to_db(np.maximum(
            sinr_ul2[serving, idx], 1e-300))),
    )


def associate_users(scn: Scenario, load_mode: str | None = None) -> RadioTables:
    """Spec-facing wrapper: association plus per-user link quality tables."""
    return evaluate_radio(scn, load_mode or scn.cfg.load_mode)


def backhaul_rate_bps(scn: Scenario, load_mode: str | None = None) -> dict:
    rt = evaluate_radio(scn, load_mode or scn.cfg.load_mode)
    return {"dl": rt.bh_dl_rate_bps, "ul": rt.bh_ul_rate_bps}


# ---------------------------------------------------------------------------
# Scalar reference path for one link in one slot
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Link:
    kind: str                     # access_dl | access_ul | backhaul_dl | backhaul_ul
    cell: int | None = None
    user: int | None = None


def slot_sinr_db(scn: Scenario, link: Link, slot: str, load_mode: str | None = None,
                 ul_reps: dict | None = None) -> float:
    """First-principles SINR of one link in one slot type.

    DL interference is the activity-weighted full-buffer set; UL interference
    comes from `ul_reps`, a {cell: user} map of representative transmitters
    (empty by default).  Raises SlotActivityError when the link is never
    scheduled in that slot.
    """
    if slot not in SLOT_TYPES:
        raise ValueError(f"unknown slot type {slot!r}")
    cfg, world = scn.cfg, scn.world
    mode = load_mode or cfg.load_mode
    p_act = activity_factor(cfg, mode)
    nz = noise_dbm(cfg)
    noise_mw = float(db_to_linear(nz))
    p_m = float(db_to_linear(cfg.macro_tx_power_dbm))
    p_u = float(db_to_linear(cfg.uav_tx_power_dbm))
    p_e = float(db_to_linear(cfg.ue_tx_power_dbm))
    has_uav = scn.uav is not None
    donor = select_donor(scn) if has_uav else None
    alive_macro = scn.world.alive_cells()

    def macro_gain_lin(c, u):
        return float(world.gain_macro_lin[c, u])

    def uav_gain_lin(s, u):
        return _uav_user_gain_lin(scn, s, u)

    if has_uav:
        _, bh_ctx = backhaul_gains_db(scn)
        bh_fixed = db_to_linear(_bh_fixed_gains_db(scn, bh_ctx, donor))

    k = link.kind
    if k == "backhaul_dl":
        if slot != "DL1":
            raise SlotActivityError("link not scheduled in slot")
        sig = p_m * bh_fixed[donor]
        interf = sum(p_act * p_m * bh_fixed[c] for c in alive_macro if c != donor)
        return float(linear_to_db(sig / (noise_mw + interf)))
    if k == "backhaul_ul":
        if slot != "UL1":
            raise SlotActivityError("link not scheduled in slot")
        sig = p_u * bh_fixed[donor]
        interf = 0.0
        for c, u in (ul_reps or {}).items():
            if c != donor and c < N_MACRO_CELLS:
                interf += p_act * p_e * macro_gain_lin(donor, u)
        return float(linear_to_db(sig / (noise_mw + interf)))
    if k == "access_dl":
        c, u = link.cell, link.user
        is_uav_cell = c >= UAV_CELL_BASE
        if is_uav_cell and slot != "DL2":
            raise SlotActivityError("link not scheduled in slot")
        if not is_uav_cell and (slot not in DL_SLOTS or (c == donor and slot == "DL1")):
            raise SlotActivityError("link not scheduled in slot")
        uav_on = slot == "DL2" and has_uav
        if is_uav_cell:
            sig = p_u * uav_gain_lin(c - UAV_CELL_BASE, u)
        else:
            sig = p_m * macro_gain_lin(c, u)
        interf = 0.0
        for cc in alive_macro:
            if cc != c:
                interf += p_act * p_m * macro_gain_lin(cc, u)
        if uav_on:
            for s in range(N_UAV_SECTORS):
                if UAV_CELL_BASE + s != c:
                    interf += p_act * p_u * uav_gain_lin(s, u)
        return float(linear_to_db(sig / (noise_mw + interf)))
    if k == "access_ul":
        c, u = link.cell, link.user
        is_uav_cell = c >= UAV_CELL_BASE
        if is_uav_cell and slot != "UL2":
            raise SlotActivityError("link not scheduled in slot")
        if not is_uav_cell and (slot not in UL_SLOTS or (c == donor and slot == "UL1")):
            raise SlotActivityError("link not scheduled in slot")
        if is_uav_cell:
            sig = p_e * uav_gain_lin(c - UAV_CELL_BASE, u)
        else:
            sig = p_e * macro_gain_lin(c, u)
        interf = 0.0
        for cc, uu in (ul_reps or {}).items():
            if cc == c:
                continue
            if cc >= UAV_CELL_BASE and slot == "UL1":
                continue                     # uav access users are silent in UL1
            if is_uav_cell:
                g = uav_gain_lin(c - UAV_CELL_BASE, uu)
            else:
                g = macro_gain_lin(c, uu)
            interf += p_act * p_e * g
        if slot == "UL1" and has_uav and not is_uav_cell:
            interf += p_u * bh_fixed[c]
        return float(linear_to_db(sig / (noise_mw + interf)))
    raise ValueError(f"unknown link kind {link.kind!r}")


def _uav_user_gain_lin(scn: Scenario, sector: int, u: int) -> float:
    cfg, world = scn.cfg, scn.world
    tilt, ux, uy, uz = scn.uav
    dx = world.user_xy[u, 0] - ux
    dy = world.user_xy[u, 1] - uy
    d2d = max(math.hypot(dx, dy), channel.MIN_D2D_M)
    dz = cfg.ue_height_m - uz
    d3d = math.hypot(d2d, dz)
    elev = math.degrees(math.atan2(dz, d2d))
    az = math.degrees(math.atan2(dy, dx))
    los = bool(world.u_los_uav_user[u] < channel.los_probability(d2d))
    pl = channel.pathloss_db(d3d, los, cfg.carrier_ghz,
                             cfg.building_height_m, cfg.nlos_excess_db)
    shadow = float(world.shadow_uav_user[u]) * (
        cfg.shadow_sigma_los_db if los else cfg.shadow_sigma_nlos_db)
    az_off = float(_wrap_deg(az - 120.0 * sector))
    g = _pattern_db(cfg, cfg.uav_max_gain_dbi, az_off, elev, tilt)
    return float(db_to_linear(g - pl - shadow))
