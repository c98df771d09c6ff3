"""UE-side update: surrogates, UE duals, ideal/trained/heuristic beamformers.

The UE beamformer of each stream is again a stationary point of a convexified
Lagrangian. Three routes produce it: the ideal closed form on true effective
channels, the trained form built solely from the two DL pilot observation
blocks, and the heuristic form that needs only the dual-weighted block. The
per-UE power dual is found by bisection on locally measurable transmit power.
"""

from dataclasses import dataclass

import numpy as np

from .bs_solver import (GAIN_FLOOR, LN2, RIDGE_SCALE, SolverError, compute_nu_mu)


@dataclass
class UeDualState:
    nu_bar: np.ndarray      # (K, S)
    mu_bar: np.ndarray      # (K, S)
    lambda_bar: np.ndarray  # (K,)


@dataclass
class HeuristicWeights:
    """Per-stream weights of the heuristic update; a > 0 (divisor), b >= 0."""

    a: np.ndarray   # (K, S)
    b: np.ndarray   # (K, S)

    def __post_init__(self):
        if np.any(self.a <= 0):
            raise ValueError("heuristic weight a must be positive")
        if np.any(self.b < 0):
            raise ValueError("heuristic weight b must be nonnegative")


def uniform_weights(num_ue, streams_per_ue, a=1.0, b=0.0):
    shape = (num_ue, streams_per_ue)
    return HeuristicWeights(a=np.full(shape, float(a)), b=np.full(shape, float(b)))


def surrogate_r(v, gamma, v_op, gamma_op, g):
    """First-order minorant of |v^H g|^2 / gamma around (v_op, gamma_op)."""
    if gamma_op <= 0:
        raise ValueError("operating-point SINR must be positive")
    c = np.vdot(v_op, g)                      # v_op^H g
    lin = 2.0 * np.real(c * np.vdot(g, v)) / gamma_op
    return float(-abs(c) ** 2 * gamma / gamma_op ** 2 + lin)


def surrogate_t(v, gamma_bar, v_op, gamma_bar_op, g):
    """Minorant of |g^H v|^2 / gamma_bar around (v_op, gamma_bar_op)."""
    if gamma_bar_op <= 0:
        raise ValueError("operating-point SINR must be positive")
    c = np.vdot(g, v_op)                      # g^H v_op
    lin = 2.0 * np.real(np.conj(c) * np.vdot(g, v)) / gamma_bar_op
    return float(-abs(c) ** 2 * gamma_bar / gamma_bar_op ** 2 + lin)


def compute_nu_mu_bar(eta, zeta, alpha, gamma, gamma_bar, op_gains):
    """UE-side SINR-constraint duals; same closed form as the BS side with the
    operating-point gains |v_op^H g_sk|^2."""
    return compute_nu_mu(eta, zeta, alpha, gamma, gamma_bar, op_gains)


def _ensure_invertible(base, reg):
    """Trace ridge when the natural diagonal regularizer of a solve vanishes."""
    n = base.shape[0]
    tr = max(abs(float(np.trace(base).real)), 1e-30)
    floor = RIDGE_SCALE * tr / n
    if reg < floor:
        return base + floor * np.eye(n)
    return base


def _ensure_positive_definite(base):
    """Shift an (almost) Hermitian matrix so its spectrum is safely positive.

    The noise-bias subtraction of the trained forms can overshoot at small
    pilot lengths and leave the assembled matrix indefinite, which would break
    the monotonicity the power bisection relies on.
    """
    herm = 0.5 * (base + base.conj().T)
    eigmin = float(np.linalg.eigvalsh(herm)[0])
    tr = max(abs(float(np.trace(herm).real)), 1e-30)
    floor = 1e-10 * tr / herm.shape[0]
    if eigmin <= floor:
        herm = herm + (floor - eigmin) * np.eye(herm.shape[0])
    return herm


def _bisect_ue_power(solve_at, rho_ue, tol, lam_fixed=None, hi0=1.0):
    """Per-UE power dual by bisection; returns the feasible-side solution.

    ``solve_at(lam)`` must return the (S, N) stack of stream beamformers. The
    returned power never exceeds ``rho_ue`` and, when the constraint binds,
    sits within ``tol`` relative below it (complementary slackness).
    """
    if lam_fixed is not None:
        return solve_at(lam_fixed), float(lam_fixed)
    v = solve_at(0.0)
    power = float(np.sum(np.abs(v) ** 2))
    if power <= rho_ue:
        return v, 0.0
    hi = max(float(hi0), 1e-30)
    lo = 0.0
    for _ in range(400):
        v_hi = solve_at(hi)
        p_hi = float(np.sum(np.abs(v_hi) ** 2))
        if p_hi <= rho_ue:
            break
        lo, hi = hi, hi * 2.0
    else:
        raise SolverError("UE power bisection failed to bracket the dual")
    for _ in range(400):
        if p_hi >= rho_ue * (1.0 - tol):
            break
        mid = 0.5 * (lo + hi)
        v_mid = solve_at(mid)
        p_mid = float(np.sum(np.abs(v_mid) ** 2))
        if p_mid > rho_ue:
            lo = mid
        else:
            hi, v_hi, p_hi = mid, v_mid, p_mid
    return v_hi, hi


def solve_ue_beamformers_ideal(g_all, nu_bar, mu_bar, op, alpha, sigma2_ue, rho_ue,
                               bisect_tol=1e-8, mu_index_variant=False,
                               lam_bar_fixed=None):
    """Closed-form UE beamformers on true effective channels.

    ``g_all[k, q]`` is the DL effective channel of stream q at UE k. Returns
    the (K, S, N) beamformers and the per-UE power duals found by bisection.
    """
    k_count, q_count, n = g_all.shape
    s_count = nu_bar.shape[1]
    nub_f, mub_f = nu_bar.reshape(-1), mu_bar.reshape(-1)
    v = np.empty((k_count, s_count, n), dtype=complex)
    lam_bar = np.zeros(k_count)
    for k in range(k_count):
        gk = g_all[k]
        bases, rhss = [], []
        for s in range(s_count):
            q0 = k * s_count + s
            if mu_index_variant:
                coef = alpha * nub_f + (1.0 - alpha) * mu_bar[k, s]
            else:
                coef = alpha * nu_bar[k, s] + (1.0 - alpha) * mub_f
            coef = coef.copy()
            coef[q0] = 0.0
            base = np.einsum("q,qn,qm->nm", coef, gk, gk.conj())
            base += alpha * nu_bar[k, s] * sigma2_ue * np.eye(n)
            base = _ensure_invertible(base, alpha * nu_bar[k, s] * sigma2_ue)
            scale = (alpha * nu_bar[k, s] / op.gamma[k, s]
                     + (1.0 - alpha) * mu_bar[k, s] / op.gamma_bar[k, s])
            rhs = scale * gk[q0] * np.vdot(gk[q0], op.v_prev[k, s])
            bases.append(base)
            rhss.append(rhs)

        def solve_at(lam, bases=bases, rhss=rhss):
            eye = np.eye(n)
            return np.stack([np.linalg.solve(b + lam * eye, r)
                             for b, r in zip(bases, rhss)])

        hi0 = max(1.0, max(float(np.trace(b).real) for b in bases) / n)
        v[k], lam_bar[k] = _bisect_ue_power(solve_at, rho_ue, bisect_tol,
                                            lam_fixed=lam_bar_fixed, hi0=hi0)
    return v, lam_bar


def solve_ue_beamformers_estimated(y_dl1, y_dl2, book, eta, op, alpha, sigma2_ue,
                                   rho_ue, tau, bisect_tol=1e-8, sigma2_pilot=None,
                                   lam_bar_fixed=None):
    """Trained UE beamformers built only from the DL observation blocks.

    Each UE uses the plain block for its own LS effective-channel estimates
    and the local DL dual, and the dual-weighted block for everything the
    other streams' UL duals would require; no true channels are read. The
    sample Grams are normalized by tau and debiased by the pilot-noise
    variance so that noise-free orthogonal pilots reproduce the ideal closed
    form exactly.
    """
    if sigma2_pilot is None:
        sigma2_pilot = sigma2_ue
    use_dl = alpha > 0.0
    use_ul = alpha < 1.0
    ref = y_dl1 if use_dl else y_dl2
    k_count, n, _ = ref.shape
    s_count = op.gamma.shape[1]
    eye = np.eye(n)
    v = np.empty((k_count, s_count, n), dtype=complex)
    lam_bar = np.zeros(k_count)
    for k in range(k_count):
        bases, rhss = [], []
        if use_dl:
            y1 = y_dl1[k]
            gram1 = y1 @ y1.conj().T / tau
        if use_ul:
            y2 = y_dl2[k]
            gram2 = y2 @ y2.conj().T / tau
        for s in range(s_count):
            q0 = k * s_count + s
            pilot = book.pilots[q0]
            base = np.zeros((n, n), dtype=complex)
            rhs = np.zeros(n, dtype=complex)
            reg = 0.0
            if use_dl:
                g1 = y1 @ pilot / tau
                gain = max(abs(np.vdot(op.v_prev[k, s], g1)) ** 2, GAIN_FLOOR)
                gam = op.gamma[k, s]
                nu_bar = eta[k] * alpha * gam ** 2 * LN2 / ((gam + 1.0) * gain)
                base += alpha * nu_bar * (gram1 - np.outer(g1, g1.conj())
                                          - sigma2_pilot * eye + sigma2_ue * eye)
                rhs += alpha * nu_bar / gam * g1 * np.vdot(g1, op.v_prev[k, s])
                reg += alpha * nu_bar * (sigma2_ue - sigma2_pilot)
            if use_ul:
                g2 = y2 @ pilot / tau
                base += (1.0 - alpha) * (gram2 - np.outer(g2, g2.conj())
                                         - sigma2_pilot * eye)
                rhs += (1.0 - alpha) / op.gamma_bar[k, s] * g2 * np.vdot(
                    g2, op.v_prev[k, s])
            bases.append(_ensure_positive_definite(_ensure_invertible(base, reg)))
            rhss.append(rhs)

        def solve_at(lam, bases=bases, rhss=rhss):
            return np.stack([np.linalg.solve(b + lam * eye, r)
                             for b, r in zip(bases, rhss)])

        hi0 = max(1.0, max(float(np.trace(b).real) for b in bases) / n)
        v[k], lam_bar[k] = _bisect_ue_power(solve_at, rho_ue, bisect_tol,
                                            lam_fixed=lam_bar_fixed, hi0=hi0)
    return v, lam_bar


def solve_ue_beamformers_heuristic(y_dl2, book, weights, sigma2_ue, rho_ue, tau,
                                   bisect_tol=1e-8, sigma2_pilot=None,
                                   lam_bar_fixed=None):
    """Heuristic UE beamformers from the weighted DL block alone.

    The weighted block must have been transmitted with sqrt(a) per-stream
    weights; no dual exchange is required. The b weight cancels part of the
    noise-bias subtraction (b = 1 removes it entirely).
    """
    if sigma2_pilot is None:
        sigma2_pilot = sigma2_ue
    k_count, n, _ = y_dl2.shape
    s_count = weights.a.shape[1]
    eye = np.eye(n)
    v = np.empty((k_count, s_count, n), dtype=complex)
    lam_bar = np.zeros(k_count)
    for k in range(k_count):
        y2 = y_dl2[k]
        gram2 = y2 @ y2.conj().T / tau
        bases, rhss = [], []
        for s in range(s_count):
            q0 = k * s_count + s
            g2 = y2 @ book.pilots[q0] / tau
            base = gram2 - sigma2_pilot * eye + weights.b[k, s] * sigma2_ue * eye
            bases.append(_ensure_positive_definite(base))
            rhss.append(g2 / np.sqrt(weights.a[k, s]))

        def solve_at(lam, bases=bases, rhss=rhss):
            return np.stack([np.linalg.solve(b + lam * eye, r)
                             for b, r in zip(bases, rhss)])

        hi0 = max(1.0, max(float(np.trace(b).real) for b in bases) / n)
        v[k], lam_bar[k] = _bisect_ue_power(solve_at, rho_ue, bisect_tol,
                                            lam_fixed=lam_bar_fixed, hi0=hi0)
    return v, lam_bar


def heuristic_ue_exact(g_all, weights, sigma2_ue, rho_ue, bisect_tol=1e-8,
                       lam_bar_fixed=None):
    """Heuristic update evaluated on true effective channels.

    This is the weighted regularized matched-inverse form the trained
    heuristic converges to with long noise-free pilots; it also serves the
    ideal-CSI runs of the heuristic schemes.
    """
    k_count, q_count, n = g_all.shape
    s_count = weights.a.shape[1]
    a_f = weights.a.reshape(-1)
    eye = np.eye(n)
    v = np.empty((k_count, s_count, n), dtype=complex)
    lam_bar = np.zeros(k_count)
    for k in range(k_count):
        gk = g_all[k]
        gram = np.einsum("q,qn,qm->nm", a_f, gk, gk.conj())
        bases, rhss = [], []
        for s in range(s_count):
            q0 = k * s_count + s
            load = weights.b[k, s] * sigma2_ue
            bases.append(_ensure_invertible(gram + load * eye, load))
            rhss.append(gk[q0])

        def solve_at(lam, bases=bases, rhss=rhss):
            return np.stack([np.linalg.solve(b + lam * eye, r)
                             for b, r in zip(bases, rhss)])

        hi0 = max(1.0, float(np.trace(gram).real) / n)
        v[k], lam_bar[k] = _bisect_ue_power(solve_at, rho_ue, bisect_tol,
                                            lam_fixed=lam_bar_fixed, hi0=hi0)
    return v, lam_bar
