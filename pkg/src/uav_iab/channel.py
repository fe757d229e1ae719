"""Radio primitives: link geometry, line-of-sight, rural-macro pathloss,
parabolic sector antenna pattern with electrical tilt, and link-gain
composition.  All functions accept scalars or numpy arrays."""

import math
from dataclasses import dataclass

import numpy as np

# Horizontal clamp applied to exactly-vertical links so azimuth stays defined.
MIN_D2D_M = 1e-3
# Pathloss is evaluated at no less than this slant distance.
MIN_D3D_M = 1.0

LOS_CUTOFF_M = 10.0      # distance below which the LOS probability is 1
LOS_SCALE_M = 1000.0     # exponential decay constant of the LOS probability


class DegenerateLinkError(ValueError):
    """Transmitter and receiver coincide."""


class ClampCounter:
    """Counts geometry clamps so short-link warnings are observable in tests."""

    def __init__(self):
        self.count = 0

    def bump(self, n=1):
        self.count += int(n)

    def reset(self):
        self.count = 0


PATHLOSS_CLAMPS = ClampCounter()


@dataclass(frozen=True)
class Position3D:
    """A point in local east/north/up coordinates [m]."""
    x: float
    y: float
    z: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.x, self.y, self.z)):
            raise ValueError("coordinates must be finite")
        if self.z < 0:
            raise ValueError("height must be >= 0")


@dataclass(frozen=True)
class AntennaConfig:
    """Directional sector antenna: bearing/tilt in degrees, positive tilt is down."""
    bearing_deg: float
    electrical_tilt_deg: float
    hpbw_az_deg: float = 65.0
    hpbw_el_deg: float = 10.0
    max_gain_dbi: float = 14.0
    front_to_back_db: float = 30.0
    sla_v_db: float = 30.0

    def __post_init__(self):
        if self.hpbw_az_deg <= 0 or self.hpbw_el_deg <= 0:
            raise ValueError("beamwidths must be positive")


@dataclass(frozen=True)
class LinkGeometry:
    """Distances [m] and angles [deg] of a tx->rx link.

    elevation_deg is the angle of the receiver above the transmitter's
    horizon (negative when the receiver is below).
    """
    d2d: float
    d3d: float
    azimuth_deg: float
    elevation_deg: float

    def check(self, dz: float) -> None:
        assert self.d3d >= self.d2d >= 0
        assert abs(self.d3d ** 2 - (self.d2d ** 2 + dz ** 2)) <= 1e-6 * max(self.d3d ** 2, 1.0)


def normalize_angle_deg(a):
    """Wrap an angle into (-180, 180]."""
    a = np.asarray(a, dtype=float)
    wrapped = -(np.mod(-a + 180.0, 360.0) - 180.0)
    return float(wrapped) if wrapped.ndim == 0 else wrapped


def geometry(tx: Position3D, rx: Position3D) -> LinkGeometry:
    dx, dy, dz = rx.x - tx.x, rx.y - tx.y, rx.z - tx.z
    if dx == 0.0 and dy == 0.0 and dz == 0.0:
        raise DegenerateLinkError("degenerate link: tx and rx coincide")
    d2d = math.hypot(dx, dy)
    if d2d < MIN_D2D_M:
        d2d = MIN_D2D_M
        azimuth = 0.0
    else:
        azimuth = math.degrees(math.atan2(dy, dx))
    d3d = math.hypot(d2d, dz)
    elevation = math.degrees(math.atan2(dz, d2d))
    return LinkGeometry(d2d=d2d, d3d=d3d,
                        azimuth_deg=normalize_angle_deg(azimuth),
                        elevation_deg=elevation)


def los_probability(d2d):
    """LOS probability of the rural-macro rule: 1 up to 10 m, exponential beyond."""
    d2d = np.asarray(d2d, dtype=float)
    p = np.where(d2d <= LOS_CUTOFF_M, 1.0, np.exp(-(d2d - LOS_CUTOFF_M) / LOS_SCALE_M))
    return float(p) if p.ndim == 0 else p


def pathloss_db(d3d, los, carrier_ghz, building_height_m=5.0, nlos_excess_db=20.0):
    """Rural-macro style log-distance pathloss [dB].

    LOS (pre-breakpoint form, used at all distances):
      PL = 20 log10(40 pi d f / 3) + min(0.03 h^1.72, 10) log10(d)
           - min(0.044 h^1.72, 14.77) + 0.002 log10(h) d
    NLOS adds a fixed excess loss.  d3d below 1 m is clamped (counted).
    """
    if carrier_ghz <= 0:
        raise ValueError("carrier_ghz must be positive")
    d = np.asarray(d3d, dtype=float)
    n_clamped = int(np.count_nonzero(d < MIN_D3D_M))
    if n_clamped:
        PATHLOSS_CLAMPS.bump(n_clamped)
        d = np.maximum(d, MIN_D3D_M)
    h = building_height_m
    h172 = h ** 1.72
    log_d = np.log10(d)
    pl = (20.0 * np.log10(40.0 * math.pi * d * carrier_ghz / 3.0)
          + min(0.03 * h172, 10.0) * log_d
          - min(0.044 * h172, 14.77)
          + 0.002 * math.log10(h) * d)
    los_arr = np.asarray(los, dtype=bool)
    pl = pl + np.where(los_arr, 0.0, nlos_excess_db)
    return float(pl) if pl.ndim == 0 else pl


def antenna_gain_db(cfg: AntennaConfig | None, azimuth_off_deg, elevation_off_deg):
    """Gain [dBi] of the parabolic sector pattern at the given offsets.

    Offsets are relative to the boresight bearing and the horizon; the
    electrical tilt steers the vertical peak to elevation -tilt.  A None
    config means an isotropic 0 dBi element.
    """
    if cfg is None:
        z = np.zeros_like(np.asarray(azimuth_off_deg, dtype=float) +
                          np.asarray(elevation_off_deg, dtype=float))
        return float(z) if z.ndim == 0 else z
    az = np.asarray(azimuth_off_deg, dtype=float)
    el = np.asarray(elevation_off_deg, dtype=float)
    a_az = np.minimum(12.0 * (az / cfg.hpbw_az_deg) ** 2, cfg.front_to_back_db)
    a_el = np.minimum(12.0 * ((el + cfg.electrical_tilt_deg) / cfg.hpbw_el_deg) ** 2,
                      cfg.sla_v_db)
    att = np.minimum(a_az + a_el, cfg.front_to_back_db)
    g = cfg.max_gain_dbi - att
    return float(g) if g.ndim == 0 else g


def link_gain_db(tx_cfg: AntennaConfig | None, rx_cfg: AntennaConfig | None,
                 g: LinkGeometry, los: bool, shadow_db: float, carrier_ghz: float,
                 building_height_m: float = 5.0, nlos_excess_db: float = 20.0) -> float:
    """Total link gain [dB]: tx gain + rx gain - pathloss - shadow."""
    tx_gain = 0.0
    if tx_cfg is not None:
        tx_gain = antenna_gain_db(
            tx_cfg,
            normalize_angle_deg(g.azimuth_deg - tx_cfg.bearing_deg),
            g.elevation_deg)
    rx_gain = 0.0
    if rx_cfg is not None:
        rx_gain = antenna_gain_db(
            rx_cfg,
            normalize_angle_deg(g.azimuth_deg + 180.0 - rx_cfg.bearing_deg),
            -g.elevation_deg)
    pl = pathloss_db(g.d3d, los, carrier_ghz, building_height_m, nlos_excess_db)
    return tx_gain + rx_gain - pl - shadow_db


def db_to_linear(x_db):
    return 10.0 ** (np.asarray(x_db, dtype=float) / 10.0)


def linear_to_db(x_lin):
    return 10.0 * np.log10(np.maximum(np.asarray(x_lin, dtype=float), 1e-300))
