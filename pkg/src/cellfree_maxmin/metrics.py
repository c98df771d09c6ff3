"""Exact link metrics: per-stream SINRs, rates, power audit, effective rate.

Streams are indexed UE-major throughout: stream ``q = k * S + s`` carries
stream ``s`` of UE ``k``. Beamformer arrays keep the (K, S, ...) layout; the
flattened view uses that ordering.
"""

from dataclasses import dataclass

import numpy as np

from . import training


class EvaluationError(ValueError):
    """A metric is undefined for the given inputs (e.g. an all-zero SINR denominator)."""


@dataclass
class BeamformerSet:
    """BS-side vectors w (K, S, B*M) and UE-side vectors v (K, S, N)."""

    w: np.ndarray
    v: np.ndarray

    def copy(self):
        return BeamformerSet(w=self.w.copy(), v=self.v.copy())


@dataclass
class SinrTable:
    """Linear per-stream SINRs, indexed [ue, stream]."""

    dl: np.ndarray   # (K, S)
    ul: np.ndarray   # (K, S)


@dataclass
class RateSummary:
    dl_rates: np.ndarray   # (K,) bits/s/Hz
    ul_rates: np.ndarray   # (K,)
    min_dl: float
    min_ul: float
    objective: float       # min(alpha * min_dl, (1 - alpha) * min_ul)


def extract_bs_block(w, bs_index, antennas_per_bs):
    """Entries of ``w`` belonging to one BS (rows b*M..(b+1)*M-1, zero-based b)."""
    num_bs = len(w) // antennas_per_bs
    if not 0 <= bs_index < num_bs:
        raise IndexError(f"bs_index {bs_index} out of range for {num_bs} BSs")
    return w[bs_index * antennas_per_bs:(bs_index + 1) * antennas_per_bs]


def effective_bs_channels(channels, v):
    """UL effective channels H_k v_sk seen across all BSs, shape (K, S, B*M)."""
    return np.einsum("kin,ksn->ksi", channels.h, v)


def effective_ue_channels(channels, w):
    """DL effective channels H_k^H w_q at each UE, shape (K, Q, N)."""
    k_count, s_count = w.shape[0], w.shape[1]
    wf = w.reshape(k_count * s_count, -1)
    return np.einsum("kin,qi->kqn", channels.h.conj(), wf)


def compute_sinr(channels, bf, sigma2_ue, sigma2_bs):
    """Exact DL/UL SINR tables on true channels.

    Interference is accumulated explicitly over all other streams rather than
    computed as a total minus the intended term, so high-SINR entries do not
    suffer catastrophic cancellation.
    """
    k_count, s_count, n = bf.v.shape
    q_count = k_count * s_count
    wf = bf.w.reshape(q_count, -1)

    # cross_dl[k, s, q] = v_sk^H H_k^H w_q
    g = effective_ue_channels(channels, bf.w)                    # (K, Q, N)
    cross_dl = np.einsum("ksn,kqn->ksq", bf.v.conj(), g)
    pow_dl = np.abs(cross_dl) ** 2
    self_q = (np.arange(k_count)[:, None] * s_count + np.arange(s_count)[None, :])
    mask = np.ones((k_count, s_count, q_count), dtype=bool)
    k_idx, s_idx = np.meshgrid(np.arange(k_count), np.arange(s_count), indexing="ij")
    mask[k_idx, s_idx, self_q] = False
    num_dl = np.take_along_axis(pow_dl, self_q[..., None], axis=2)[..., 0]
    interf_dl = np.where(mask, pow_dl, 0.0).sum(axis=2)
    v_norm_sq = np.sum(np.abs(bf.v) ** 2, axis=2)
    den_dl = interf_dl + sigma2_ue * v_norm_sq

    # cross_ul[q, p] = w_q^H H_{k(p)} v_p
    h_eff = effective_bs_channels(channels, bf.v).reshape(q_count, -1)
    cross_ul = wf.conj() @ h_eff.T
    pow_ul = np.abs(cross_ul) ** 2
    num_ul = np.diag(pow_ul).copy()
    off = ~np.eye(q_count, dtype=bool)
    interf_ul = np.where(off, pow_ul, 0.0).sum(axis=1)
    w_norm_sq = np.sum(np.abs(wf) ** 2, axis=1)
    den_ul = interf_ul + sigma2_bs * w_norm_sq

    if np.any(den_dl <= 0.0) or np.any(den_ul <= 0.0):
        raise EvaluationError("SINR undefined: zero interference, noise, and beamformer")
    dl = num_dl / den_dl
    ul = (num_ul / den_ul).reshape(k_count, s_count)
    return SinrTable(dl=dl, ul=ul)


def sinr_from_effective(h_eff, w, v_norm_sq, sigma2_ue, sigma2_bs):
    """SINR tables evaluated from (possibly estimated) UL effective channels.

    ``h_eff`` holds H_k v_sk stacked as (K, S, B*M); only these vectors, the
    BS beamformers, and the per-stream UE beamformer norms enter the formulas,
    which is exactly the information available at the CPU after UL training.
    """
    k_count, s_count = h_eff.shape[:2]
    q_count = k_count * s_count
    hf = h_eff.reshape(q_count, -1)
    wf = w.reshape(q_count, -1)
    cross = hf.conj() @ wf.T                 # cross[q, p] = h_q^H w_p
    power = np.abs(cross) ** 2
    num = np.diag(power)
    off = ~np.eye(q_count, dtype=bool)
    interf_dl = np.where(off, power, 0.0).sum(axis=1)       # over transmit streams p
    interf_ul = np.where(off, power, 0.0).sum(axis=0)       # over source streams q
    den_dl = interf_dl + sigma2_ue * v_norm_sq.reshape(-1)
    den_ul = interf_ul + sigma2_bs * np.sum(np.abs(wf) ** 2, axis=1)
    if np.any(den_dl <= 0.0) or np.any(den_ul <= 0.0):
        raise EvaluationError("SINR undefined: zero interference, noise, and beamformer")
    dl = (num / den_dl).reshape(k_count, s_count)
    ul = (num / den_ul).reshape(k_count, s_count)
    return SinrTable(dl=dl, ul=ul)


def compute_rates(sinr, alpha):
    """Per-UE rates, their minima, and the weighted max-min objective."""
    if np.any(sinr.dl < 0.0) or np.any(sinr.ul < 0.0):
        raise ValueError("SINR entries must be nonnegative")
    dl_rates = np.log2(1.0 + sinr.dl).sum(axis=1)
    ul_rates = np.log2(1.0 + sinr.ul).sum(axis=1)
    min_dl = float(dl_rates.min())
    min_ul = float(ul_rates.min())
    objective = min(alpha * min_dl, (1.0 - alpha) * min_ul)
    return RateSummary(dl_rates=dl_rates, ul_rates=ul_rates, min_dl=min_dl,
                       min_ul=min_ul, objective=objective)


def power_audit(bf, antennas_per_bs):
    """Exact per-BS and per-UE transmit powers (constraint left-hand sides)."""
    k_count, s_count, bm = bf.w.shape
    num_bs = bm // antennas_per_bs
    blocks = bf.w.reshape(k_count * s_count, num_bs, antennas_per_bs)
    bs_power = np.sum(np.abs(blocks) ** 2, axis=(0, 2))
    ue_power = np.sum(np.abs(bf.v) ** 2, axis=(1, 2))
    return bs_power, ue_power


def effective_rate(rate, iters, scheme, model, block_slots):
    """Rate discounted by the fraction of the scheduling block spent on training."""
    if block_slots < 1:
        raise ValueError("block_slots must be >= 1")
    used = training.overhead_slots(scheme, iters, model)
    return max(0.0, 1.0 - used / block_slots) * rate
