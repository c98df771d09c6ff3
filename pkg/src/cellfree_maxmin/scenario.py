"""Scenario generation: square-grid geometry, distance pathloss, Rayleigh channels."""

import math
from dataclasses import dataclass

import numpy as np

# Fixed tags so that every random quantity draws from its own derived substream.
TAG_GEOMETRY = 1
TAG_CHANNEL = 2
TAG_PILOT = 3
TAG_NOISE_UL = 4
TAG_NOISE_DL1 = 5
TAG_NOISE_DL2 = 6
TAG_INIT = 8

_RESAMPLE_LIMIT = 100


def substream(seed, *path):
    """Generator derived from (seed, *path); identical arguments give identical streams."""
    return np.random.default_rng([int(seed), *[int(p) for p in path]])


def drop_seed(master_seed, drop):
    """Integer seed for one Monte Carlo drop, derived from the master seed."""
    ss = np.random.SeedSequence([int(master_seed), int(drop)])
    return int(ss.generate_state(1)[0])


@dataclass
class ScenarioConfig:
    """Network and radio parameters. Powers and noise variances are linear watts."""

    num_bs: int = 25
    antennas_per_bs: int = 4
    num_ue: int = 16
    antennas_per_ue: int = 2
    streams_per_ue: int = 2
    grid_spacing: float = 100.0        # meters between neighboring BSs
    carrier_freq: float = 28.0         # GHz
    rho_bs: float = 1.0                # per-BS transmit budget (30 dBm)
    rho_ue: float = 0.1                # per-UE transmit budget (20 dBm)
    sigma2_bs: float = 10.0 ** -12.5   # noise variance at the BSs (-95 dBm)
    sigma2_ue: float = 10.0 ** -12.5   # noise variance at the UEs (-95 dBm)
    alpha: float = 0.5                 # DL weight in the weighted max-min objective
    min_bs_ue_distance: float = 1.0    # meters; pathloss capped at this distance
    seed: int = 0

    def __post_init__(self):
        for name in ("num_bs", "antennas_per_bs", "num_ue", "antennas_per_ue",
                     "streams_per_ue"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.streams_per_ue > self.antennas_per_ue:
            raise ValueError("streams_per_ue must not exceed antennas_per_ue")
        for name in ("rho_bs", "rho_ue", "sigma2_bs", "sigma2_ue"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if self.grid_spacing <= 0:
            raise ValueError("grid_spacing must be positive")
        if self.min_bs_ue_distance <= 0:
            raise ValueError("min_bs_ue_distance must be positive")

    @property
    def bs_antennas_total(self):
        return self.num_bs * self.antennas_per_bs

    @property
    def num_streams(self):
        return self.num_ue * self.streams_per_ue


@dataclass
class NetworkGeometry:
    """BS grid positions, UE positions, and the BS-UE distance matrix."""

    bs_positions: np.ndarray   # (B, 2) meters
    ue_positions: np.ndarray   # (K, 2) meters
    distances: np.ndarray      # (B, K) meters, floored at min_bs_ue_distance


@dataclass
class ChannelSet:
    """Aggregate UL channels and the large-scale gains they were drawn from.

    ``h[k]`` stacks the per-BS blocks BS-major: rows b*M..(b+1)*M-1 belong to
    BS ``b``, matching the block-selection convention used everywhere else.
    """

    h: np.ndarray        # (K, B*M, N) complex, per-entry variance delta[b, k]
    delta: np.ndarray    # (B, K) linear power gains
    num_bs: int
    antennas_per_bs: int

    @property
    def num_ue(self):
        return self.h.shape[0]

    @property
    def antennas_per_ue(self):
        return self.h.shape[2]


def generate_geometry(config, seed):
    """Place BSs on a square grid and drop UEs uniformly over the covered square.

    UEs closer than ``min_bs_ue_distance`` to any BS are resampled; if the
    admissible region is degenerate (e.g. a single-BS grid) the offending
    distances are floored instead, which caps the pathloss.
    """
    side = math.isqrt(config.num_bs)
    if side * side != config.num_bs:
        raise ValueError("num_bs must be a perfect square to form the BS grid")
    coords = np.arange(side) * config.grid_spacing
    gx, gy = np.meshgrid(coords, coords, indexing="ij")
    bs_pos = np.column_stack([gx.ravel(), gy.ravel()]).astype(float)

    rng = substream(seed, TAG_GEOMETRY)
    extent = coords[-1] if side > 1 else 0.0
    ue_pos = rng.uniform(0.0, extent, size=(config.num_ue, 2)) if extent > 0 \
        else np.zeros((config.num_ue, 2))

    def dist_to_bs(points):
        diff = bs_pos[:, None, :] - points[None, :, :]
        return np.hypot(diff[..., 0], diff[..., 1])

    d = dist_to_bs(ue_pos)
    for _ in range(_RESAMPLE_LIMIT):
        bad = np.where(d.min(axis=0) < config.min_bs_ue_distance)[0]
        if bad.size == 0 or extent == 0.0:
            break
        ue_pos[bad] = rng.uniform(0.0, extent, size=(bad.size, 2))
        d[:, bad] = dist_to_bs(ue_pos[bad])

    d = np.maximum(d, config.min_bs_ue_distance)
    return NetworkGeometry(bs_positions=bs_pos, ue_positions=ue_pos, distances=d)


def pathloss_linear(d, f_c):
    """Linear power gain at distance ``d`` meters and carrier ``f_c`` GHz."""
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise ValueError("distance must be positive")
    if f_c <= 0:
        raise ValueError("carrier frequency must be positive")
    delta_db = -61.3 - 30.0 * np.log10(d) - 20.0 * np.log10(f_c)
    return 10.0 ** (delta_db / 10.0)


def draw_channels(geometry, config, seed):
    """i.i.d. circularly-symmetric Gaussian channel blocks, one substream per (UE, BS)."""
    b_count, m, k_count, n = (config.num_bs, config.antennas_per_bs,
                              config.num_ue, config.antennas_per_ue)
    delta = pathloss_linear(geometry.distances, config.carrier_freq)
    h = np.empty((k_count, b_count * m, n), dtype=complex)
    for k in range(k_count):
        for b in range(b_count):
            rng = substream(seed, TAG_CHANNEL, k, b)
            scale = np.sqrt(delta[b, k] / 2.0)
            block = rng.standard_normal((m, n)) + 1j * rng.standard_normal((m, n))
            h[k, b * m:(b + 1) * m, :] = scale * block
    return ChannelSet(h=h, delta=delta, num_bs=b_count, antennas_per_bs=m)
