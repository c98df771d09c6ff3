"""BS-side SCA step: surrogate minorants, dual updates, closed-form beamformers.

The convexified per-iteration problem is solved in closed form: each BS
beamformer is the stationary point of the Lagrangian built from the DL/UL
SINR-constraint duals (nu, mu), the common-rate duals (eta, zeta) they derive
from, and the per-BS power duals (lambda). The same solve serves ideal CSI and
UL-trained CSI; only the effective channels fed in differ.
"""

from dataclasses import dataclass, replace

import numpy as np

LN2 = float(np.log(2.0))
GAIN_FLOOR = 1e-18       # floor for |effective gain|^2 in the dual formulas
DUAL_FLOOR = 1e-6        # keeps every rate constraint marginally active (see note below)
RIDGE_SCALE = 1e-12      # ridge = RIDGE_SCALE * trace / dim when the regularizer vanishes
GAMMA_FLOOR = 1e-12      # operating-point SINRs are kept strictly positive


class SolverError(RuntimeError):
    """A linear solve failed even after regularization."""


@dataclass
class OperatingPoint:
    """Linearization point of one bi-directional iteration."""

    gamma: np.ndarray       # (K, S) DL SINRs, linear, > 0
    gamma_bar: np.ndarray   # (K, S) UL SINRs, linear, > 0
    w_prev: np.ndarray      # (K, S, B*M)
    v_prev: np.ndarray      # (K, S, N)


@dataclass
class BsDualState:
    eta: np.ndarray     # (K,) DL common-rate duals
    zeta: np.ndarray    # (K,) UL common-rate duals
    nu: np.ndarray      # (K, S) DL SINR-constraint duals
    mu: np.ndarray      # (K, S) UL SINR-constraint duals
    lam: np.ndarray     # (B,) per-BS power duals


def init_bs_duals(num_ue, streams_per_ue, num_bs, alpha):
    """Uniform common-rate duals over the active directions, zero elsewhere."""
    k = num_ue
    dl_active, ul_active = alpha > 0.0, alpha < 1.0
    total = k * (int(dl_active) + int(ul_active))
    eta = np.full(k, 1.0 / total) if dl_active else np.zeros(k)
    zeta = np.full(k, 1.0 / total) if ul_active else np.zeros(k)
    return BsDualState(eta=eta, zeta=zeta, nu=np.zeros((k, streams_per_ue)),
                       mu=np.zeros((k, streams_per_ue)), lam=np.zeros(num_bs))


def operating_point_from_sinr(sinr, w, v):
    gamma = np.maximum(sinr.dl, GAMMA_FLOOR)
    gamma_bar = np.maximum(sinr.ul, GAMMA_FLOOR)
    return OperatingPoint(gamma=gamma, gamma_bar=gamma_bar, w_prev=w.copy(),
                          v_prev=v.copy())


def surrogate_p(w, gamma, w_op, gamma_op, h):
    """First-order minorant of |h^H w|^2 / gamma around (w_op, gamma_op).

    Tangent at the operating point and a global lower bound by convexity of
    the quadratic-over-linear form.
    """
    if gamma_op <= 0:
        raise ValueError("operating-point SINR must be positive")
    c = np.vdot(h, w_op)                       # h^H w_op
    lin = 2.0 * np.real(np.conj(c) * np.vdot(h, w)) / gamma_op
    return float(-abs(c) ** 2 * gamma / gamma_op ** 2 + lin)


def surrogate_q(w, gamma_bar, w_op, gamma_bar_op, h):
    """Minorant of |w^H h|^2 / gamma_bar around (w_op, gamma_bar_op)."""
    if gamma_bar_op <= 0:
        raise ValueError("operating-point SINR must be positive")
    c = np.vdot(w_op, h)                       # w_op^H h
    lin = 2.0 * np.real(c * np.vdot(h, w)) / gamma_bar_op
    return float(-abs(c) ** 2 * gamma_bar / gamma_bar_op ** 2 + lin)


def project_common_duals(eta, zeta, dl_active=True, ul_active=True):
    """Clip the common-rate duals and rescale the active ones to sum to one.

    A small floor keeps every active constraint marginally represented: the
    beamformer updates scale with these duals, so a stream whose duals hit
    exactly zero would be zeroed and could never recover (the update is
    proportional to the previous iterate).
    """
    eta = np.maximum(eta, DUAL_FLOOR) if dl_active else np.zeros_like(eta)
    zeta = np.maximum(zeta, DUAL_FLOOR) if ul_active else np.zeros_like(zeta)
    total = eta.sum() + zeta.sum()
    if total <= 0.0:
        count = eta.size * int(dl_active) + zeta.size * int(ul_active)
        fill = 1.0 / count
        eta = np.full_like(eta, fill) if dl_active else eta
        zeta = np.full_like(zeta, fill) if ul_active else zeta
        return eta, zeta
    return eta / total, zeta / total


def common_rate_target(duals, dl_rates, ul_rates, alpha, mode="weighted"):
    """Value of the common rate driving the sub-gradient of the rate duals.

    'min' uses the worst weighted rate at the operating point (the achieved
    objective); every sub-gradient is then nonnegative and the duals drift
    monotonically toward the worst links. 'weighted' uses the dual-weighted
    average of the weighted rates, which makes the drifts signed and mean-free
    under the simplex normalization; mass flows from above-average links to
    below-average ones and the iteration settles once they equalize.
    """
    weighted_dl = alpha * dl_rates
    weighted_ul = (1.0 - alpha) * ul_rates
    if mode == "min":
        candidates = []
        if alpha > 0.0:
            candidates.append(weighted_dl.min())
        if alpha < 1.0:
            candidates.append(weighted_ul.min())
        return min(candidates)
    if mode == "weighted":
        return float(duals.eta @ weighted_dl + duals.zeta @ weighted_ul)
    raise ValueError(f"unknown r_target_mode {mode!r}")


def update_common_duals(state, dl_rates, ul_rates, r_target, alpha, step):
    """Sub-gradient step on the common-rate duals followed by projection.

    ``dl_rates``/``ul_rates`` are the per-UE rates achieved at the operating
    point; ``r_target`` plays the role of the common rate.
    """
    dl_active, ul_active = alpha > 0.0, alpha < 1.0
    eta = state.eta - step * (alpha * dl_rates - r_target) if dl_active else state.eta
    zeta = (state.zeta - step * ((1.0 - alpha) * ul_rates - r_target)
            if ul_active else state.zeta)
    eta, zeta = project_common_duals(eta, zeta, dl_active, ul_active)
    return replace(state, eta=eta, zeta=zeta)


def compute_nu_mu(eta, zeta, alpha, gamma, gamma_bar, op_gains):
    """SINR-constraint duals from the common-rate duals at the operating point.

    ``op_gains[k, s]`` is |h_sk^H w_sk| ** 2 evaluated at the operating point
    (identical modulus for the DL and UL forms); it is floored to keep dead
    streams from dividing by zero.
    """
    gains = np.maximum(op_gains, GAIN_FLOOR)
    nu = eta[:, None] * alpha * gamma ** 2 * LN2 / ((gamma + 1.0) * gains)
    mu = zeta[:, None] * (1.0 - alpha) * gamma_bar ** 2 * LN2 / ((gamma_bar + 1.0) * gains)
    return nu, mu


def _coefficient_matrix(nu_f, mu_f, alpha, mu_index_variant):
    """c[q, p]: weight of h_p h_p^H in the solve for stream q (diagonal zeroed)."""
    q_count = nu_f.size
    if mu_index_variant:
        c = np.broadcast_to(alpha * nu_f + (1.0 - alpha) * mu_f, (q_count, q_count)).copy()
    else:
        c = alpha * nu_f[None, :] + (1.0 - alpha) * mu_f[:, None]
    c[np.arange(q_count), np.arange(q_count)] = 0.0
    return c


def _rhs_scalars(h_flat, w_prev_flat, nu_f, mu_f, alpha, gamma_f, gamma_bar_f):
    """Scalar rho_q with right-hand side rho_q * h_q (the rank-one update term)."""
    inner = np.einsum("qi,qi->q", h_flat.conj(), w_prev_flat)   # h_q^H w_prev_q
    coeff = alpha * nu_f / gamma_f + (1.0 - alpha) * mu_f / gamma_bar_f
    return coeff * inner


def solve_bs_beamformers(h_eff, duals, op, alpha, sigma2_bs, antennas_per_bs,
                         mu_index_variant=False, method="subspace"):
    """Closed-form BS beamformers for the current duals and operating point.

    ``h_eff`` holds the (true or estimated) UL effective channels (K, S, B*M).
    ``method='dense'`` assembles and solves the full B*M systems; 'subspace'
    exploits that each system is a block-scaled identity plus a weighted Gram
    of the Q effective channels and solves an equivalent Q x Q system (same
    result, much faster when B*M >> Q). Both apply an identical trace ridge
    whenever a stream's diagonal regularizer vanishes.
    """
    k_count, s_count, bm = h_eff.shape
    q_count = k_count * s_count
    hf = h_eff.reshape(q_count, bm)
    nu_f, mu_f = duals.nu.reshape(-1), duals.mu.reshape(-1)
    gam_f, gbar_f = op.gamma.reshape(-1), op.gamma_bar.reshape(-1)
    lam = duals.lam
    c = _coefficient_matrix(nu_f, mu_f, alpha, mu_index_variant)
    s_diag = (1.0 - alpha) * mu_f * sigma2_bs                      # (Q,) diagonal loads
    rho = _rhs_scalars(hf, op.w_prev.reshape(q_count, bm), nu_f, mu_f, alpha,
                       gam_f, gbar_f)

    # trace-based ridge whenever the natural regularizer underflows
    h_norm_sq = np.sum(np.abs(hf) ** 2, axis=1)
    trace = c @ h_norm_sq + bm * s_diag + antennas_per_bs * lam.sum()
    floor = RIDGE_SCALE * np.maximum(trace, 1e-30) / bm
    ridge = np.where(s_diag + lam.min() < floor, floor, 0.0)

    try:
        if method == "dense":
            w = _solve_dense(hf, c, s_diag + ridge, lam, antennas_per_bs, rho)
        elif method == "subspace":
            w = _solve_subspace(hf, c, s_diag + ridge, lam, antennas_per_bs, rho)
        else:
            raise ValueError(f"unknown method {method!r}")
    except np.linalg.LinAlgError as exc:
        raise SolverError(f"BS beamformer solve failed after ridge: {exc}") from exc
    return w.reshape(k_count, s_count, bm)


def _solve_dense(hf, c, diag_load, lam, m, rho):
    q_count, bm = hf.shape
    eye = np.eye(bm)
    lam_diag = np.repeat(lam, m)
    a = np.einsum("qp,ip,jp->qij", c, hf.T, hf.T.conj())
    a += (diag_load[:, None, None] * eye[None]) + np.diag(lam_diag)[None]
    rhs = (rho[:, None] * hf)[:, :, None]
    return np.linalg.solve(a, rhs)[:, :, 0]


def _solve_subspace(hf, c, diag_load, lam, m, rho):
    """Woodbury solve against the block-diagonal regularizer.

    With D_q = blockdiag(lam_b + diag_load_q) and A_q = D_q + H C_q H^H where
    C_q = diag(c[q]), the solution of A_q w = rho_q h_q reduces to a Q x Q
    system through M_q = H^H D_q^{-1} H, assembled from per-BS partial Grams.
    """
    q_count, bm = hf.shape
    b_count = bm // m
    hb = hf.T.reshape(b_count, m, q_count)
    partial = np.einsum("bmi,bmj->bij", hb.conj(), hb)          # (B, Q, Q)
    dinv = 1.0 / (lam[None, :] + diag_load[:, None])            # (Q, B)
    mq = (dinv @ partial.reshape(b_count, -1)).reshape(q_count, q_count, q_count)
    y = mq[np.arange(q_count), :, np.arange(q_count)]           # column q of M_q
    lhs = np.eye(q_count)[None] + c[:, :, None] * mq
    z = np.linalg.solve(lhs, (c * y)[:, :, None])[:, :, 0]
    dinv_full = np.repeat(dinv, m, axis=1)
    return rho[:, None] * dinv_full * (hf - (hf.T @ z.T).T)


def update_lambda_bs(lam, bs_power, rho_bs, step, clip_ratio=None):
    """Projected sub-gradient ascent on the per-BS power duals.

    ``clip_ratio`` optionally caps the surplus at a multiple of the budget so
    that one nearly singular solve (astronomical power) cannot catapult the
    duals out of the recoverable range.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    surplus = bs_power - rho_bs
    if clip_ratio is not None:
        surplus = np.clip(surplus, -clip_ratio * rho_bs, clip_ratio * rho_bs)
    return np.maximum(0.0, lam + step * surplus)


def enforce_bs_power(w, rho_bs, antennas_per_bs):
    """Common rescale making the worst BS exactly feasible when violated."""
    k_count, s_count, bm = w.shape
    blocks = w.reshape(k_count * s_count, bm // antennas_per_bs, antennas_per_bs)
    bs_power = np.sum(np.abs(blocks) ** 2, axis=(0, 2))
    worst = bs_power.max()
    if worst > rho_bs:
        w = w * np.sqrt(rho_bs / worst)
    return w


def bs_sca_step(h_eff, op, duals, alpha, sigma2_bs, rho_bs, antennas_per_bs,
                params, mu_index_variant=False):
    """One full BS update: inner dual loop plus the feasibility repair.

    The common-rate duals evolve against the operating-point rates (constant
    within the loop); the power duals evolve against the power of the freshly
    solved beamformers. Terminates when the common-rate duals stop moving.
    """
    k_count, s_count, bm = h_eff.shape
    q_count = k_count * s_count
    hf = h_eff.reshape(q_count, bm)
    dl_rates = np.log2(1.0 + op.gamma).sum(axis=1)
    ul_rates = np.log2(1.0 + op.gamma_bar).sum(axis=1)

    op_gains = np.abs(np.einsum(
        "qi,qi->q", hf.conj(), op.w_prev.reshape(q_count, bm))) ** 2
    op_gains = op_gains.reshape(k_count, s_count)

    w = op.w_prev
    lam_scaled_step = params.lambda_step / rho_bs
    for t in range(1, params.inner_iters_max + 1):
        step = params.delta0 / np.sqrt(t)
        prev_eta, prev_zeta = duals.eta, duals.zeta
        r_target = common_rate_target(duals, dl_rates, ul_rates, alpha,
                                      mode=params.r_target_mode)
        duals = update_common_duals(duals, dl_rates, ul_rates, r_target, alpha, step)
        nu, mu = compute_nu_mu(duals.eta, duals.zeta, alpha, op.gamma, op.gamma_bar,
                               op_gains)
        duals = replace(duals, nu=nu, mu=mu)
        w = solve_bs_beamformers(h_eff, duals, op, alpha, sigma2_bs, antennas_per_bs,
                                 mu_index_variant=mu_index_variant)
        blocks = w.reshape(q_count, bm // antennas_per_bs, antennas_per_bs)
        bs_power = np.sum(np.abs(blocks) ** 2, axis=(0, 2))
        duals = replace(duals, lam=update_lambda_bs(duals.lam, bs_power, rho_bs,
                                                    lam_scaled_step,
                                                    clip_ratio=params.lambda_clip))
        moved = (np.max(np.abs(duals.eta - prev_eta), initial=0.0)
                 + np.max(np.abs(duals.zeta - prev_zeta), initial=0.0))
        if moved < params.dual_tol:
            break

    return enforce_bs_power(w, rho_bs, antennas_per_bs), duals
