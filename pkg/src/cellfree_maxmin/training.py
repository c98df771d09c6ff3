"""Pilot books, over-the-air training phases, LS estimation, overhead accounting."""

from dataclasses import dataclass, field

import numpy as np

# Pilot blocks consumed per bi-directional iteration by each single-phase scheme.
# The UL pilot block is always needed by the BS update; the optimal UE update
# additionally needs the plain (DL-1) and dual-weighted (DL-2) blocks, the
# heuristic UE update only the weighted block, and the alpha-endpoint MMSE
# update only the plain block. Separate schemes are composed as the sum of
# their two constituent phases.
DEFAULT_PILOT_BLOCKS = {
    "joint-opt": 3.0,
    "joint-heur": 2.0,
    "dl-opt": 2.0,
    "ul-opt": 2.0,
    "ul-heur": 2.0,
}
SEPARATE_CONSTITUENTS = {
    "separate-opt": ("dl-opt", "ul-opt"),
    "separate-heur": ("dl-opt", "ul-heur"),
}


@dataclass
class PilotBook:
    """One length-tau pilot per stream, squared norm exactly tau."""

    pilots: np.ndarray   # (Q, tau) complex, row q = k * S + s
    tau: int


@dataclass
class PilotObservations:
    """Received blocks of the three training phases (entries may be unused per scheme)."""

    y_ul: np.ndarray | None = None    # (B*M, tau)
    y_dl1: np.ndarray | None = None   # (K, N, tau)
    y_dl2: np.ndarray | None = None   # (K, N, tau)


@dataclass
class OverheadModel:
    blocks_per_iter: dict = field(default_factory=lambda: dict(DEFAULT_PILOT_BLOCKS))
    slots_per_pilot_block: float = 0.5


def default_overhead_model(overrides=None, slots_per_pilot_block=0.5):
    """Overhead table with separate schemes composed from their constituents.

    Overrides on a constituent scheme propagate into the composed entries
    unless the composed entry itself is overridden.
    """
    blocks = dict(DEFAULT_PILOT_BLOCKS)
    overrides = overrides or {}
    for name, value in overrides.items():
        if name not in blocks and name not in SEPARATE_CONSTITUENTS:
            raise ValueError(f"unknown scheme in pilot_blocks_override: {name!r}")
        blocks[name] = float(value)
    for name, (first, second) in SEPARATE_CONSTITUENTS.items():
        if name not in blocks:
            blocks[name] = blocks[first] + blocks[second]
    return OverheadModel(blocks_per_iter=blocks,
                         slots_per_pilot_block=slots_per_pilot_block)


def make_pilots(num_ue, streams_per_ue, tau, mode="orthogonal", seed=0):
    """Pilot book for all K*S streams.

    Orthogonal mode uses scaled DFT columns (Gram matrix tau * I); random mode
    draws i.i.d. unit-modulus entries. Either way every pilot has squared norm
    exactly tau.
    """
    q_count = num_ue * streams_per_ue
    if tau < 1:
        raise ValueError("tau must be >= 1")
    if mode == "orthogonal":
        if tau < q_count:
            raise ValueError(f"orthogonal pilots need tau >= K*S ({q_count}), got {tau}")
        t = np.arange(tau)
        pilots = np.exp(-2j * np.pi * np.outer(np.arange(q_count), t) / tau)
    elif mode == "random":
        rng = np.random.default_rng(seed)
        pilots = np.exp(2j * np.pi * rng.random((q_count, tau)))
    else:
        raise ValueError(f"unknown pilot mode {mode!r}")
    return PilotBook(pilots=pilots, tau=int(tau))


def _complex_noise(rng, shape, sigma2):
    if sigma2 == 0.0:
        return np.zeros(shape, dtype=complex)
    scale = np.sqrt(sigma2 / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def ul_pilot_phase(channels, v, book, sigma2_bs, rng):
    """UEs transmit their beamformed pilot superpositions; BSs observe jointly.

    Returns Y = sum_q (H_k v_q) p_q^H + Z with Z ~ CN(0, sigma2_bs) per entry.
    """
    h_eff = np.einsum("kin,ksn->ksi", channels.h, v)
    hf = h_eff.reshape(-1, h_eff.shape[2])           # (Q, B*M)
    y = hf.T @ book.pilots.conj()
    return y + _complex_noise(rng, y.shape, sigma2_bs)


def ls_estimate(y_ul, pilots, tau):
    """Least-squares effective-channel estimate(s) (1/tau) Y p.

    ``pilots`` may be a single pilot (tau,) -> returns (B*M,), or a whole book
    (Q, tau) -> returns (Q, B*M).
    """
    pilots = np.asarray(pilots)
    if pilots.ndim == 1:
        return y_ul @ pilots / tau
    return (y_ul @ pilots.T / tau).T


def dl_pilot_phase(channels, w, book, weights, sigma2_ue, rng):
    """BSs transmit precoded pilots, optionally weighted per stream; each UE observes.

    ``weights`` of None means unit weights (plain phase); otherwise a (Q,)
    nonnegative array, typically sqrt of the UL-constraint duals or of the
    heuristic weights.
    """
    q_count = w.shape[0] * w.shape[1]
    wf = w.reshape(q_count, -1)
    if weights is None:
        weights = np.ones(q_count)
    else:
        weights = np.asarray(weights, dtype=float).reshape(q_count)
        if np.any(weights < 0):
            raise ValueError("pilot weights must be nonnegative")
    x = (wf * weights[:, None]).T @ book.pilots.conj()     # (B*M, tau)
    y = np.einsum("kin,it->knt", channels.h.conj(), x)
    return y + _complex_noise(rng, y.shape, sigma2_ue)


def overhead_slots(scheme, iters, model):
    """Training slots consumed by ``iters`` bi-directional iterations of a scheme."""
    if iters < 0:
        raise ValueError("iters must be nonnegative")
    try:
        blocks = model.blocks_per_iter[scheme]
    except KeyError:
        raise ValueError(f"unknown scheme {scheme!r}") from None
    return iters * blocks * model.slots_per_pilot_block
