"""Scheme runners: the alternating bi-directional loop, Monte Carlo harness, CSV.

Every reported metric is evaluated on true channels regardless of the CSI
mode; the trained mode only changes what the solvers see. Single-direction
schemes optimize one link direction (the opposite direction's constraints are
dropped rather than zero-weighted) and their beamformers are then evaluated
in both directions, with the reused direction granted its full power budget.
"""

import csv
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import bs_solver, metrics, training, ue_solver
from .scenario import (TAG_INIT, TAG_NOISE_DL1, TAG_NOISE_DL2, TAG_NOISE_UL,
                       TAG_PILOT, draw_channels, drop_seed, generate_geometry,
                       substream)

CSV_HEADER = ["scheme", "drop", "iteration", "min_dl_rate", "min_ul_rate",
              "objective", "block_slots", "effective_rate"]


@dataclass(frozen=True)
class SchemePolicy:
    """What one named scheme does: its direction weighting and UE update rule."""

    alpha_mode: str              # "config" | "dl" | "ul"
    ue_update: str               # "opt" | "heur"
    constituents: tuple | None = None


SCHEMES = {
    "joint-opt": SchemePolicy("config", "opt"),
    "joint-heur": SchemePolicy("config", "heur"),
    "dl-opt": SchemePolicy("dl", "opt"),
    "ul-opt": SchemePolicy("ul", "opt"),
    "ul-heur": SchemePolicy("ul", "heur"),
    "separate-opt": SchemePolicy("config", "opt", ("dl-opt", "ul-opt")),
    "separate-heur": SchemePolicy("config", "heur", ("dl-opt", "ul-heur")),
}
ALL_SCHEMES = tuple(SCHEMES)


@dataclass
class RunResult:
    scheme: str
    drop: int
    iterations: int
    min_dl: np.ndarray             # (iterations,) bits/s/Hz, true channels
    min_ul: np.ndarray
    objective: np.ndarray          # weighted with the configured alpha
    max_bs_power_ratio: np.ndarray
    max_ue_power_ratio: np.ndarray
    init_min_dl: float
    init_min_ul: float
    init_objective: float
    final_beamformers: metrics.BeamformerSet | None
    wall_time: float

    @property
    def min_rate(self):
        """Minimum DL-UL rate per iteration (the unweighted worst direction)."""
        return np.minimum(self.min_dl, self.min_ul)


def _derived_seed(seed, *path):
    ss = np.random.SeedSequence([int(seed), *[int(p) for p in path]])
    return int(ss.generate_state(1)[0])


def _initial_ue_beamformers(rng, num_ue, streams_per_ue, antennas_per_ue, rho_ue):
    """Random isotropic directions at full per-UE power, split evenly per stream."""
    shape = (num_ue, streams_per_ue, antennas_per_ue)
    v = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    norms = np.linalg.norm(v, axis=2, keepdims=True)
    return v / norms * np.sqrt(rho_ue / streams_per_ue)


def _matched_filter_bs(h_eff, rho_bs, antennas_per_bs):
    """Matched filter to the effective channels, worst BS scaled exactly to budget."""
    w = h_eff.copy()
    bf = metrics.BeamformerSet(w=w, v=np.zeros((1, 1, 1), dtype=complex))
    bs_power, _ = metrics.power_audit(bf, antennas_per_bs)
    worst = bs_power.max()
    if worst > 0:
        w *= np.sqrt(rho_bs / worst)
    return w


def _evaluation_beamformers(policy, w, v, rho_bs, rho_ue, antennas_per_bs):
    """Copies used for reporting; a reused direction gets its full budget.

    A scheme that optimized only the DL reuses its UE vectors as UL
    transmitters, so each UE scales them to its power budget (per-stream DL
    SINRs are invariant to that common factor). A scheme that optimized only
    the UL reuses its BS vectors as DL precoders, so they are scaled by the
    common factor that makes the worst BS exactly tight (UL SINRs are
    invariant to a common rescale of all BS vectors).
    """
    w, v = w.copy(), v.copy()
    if policy.alpha_mode == "dl":
        power = np.sum(np.abs(v) ** 2, axis=(1, 2))
        scale = np.where(power > 0, np.sqrt(rho_ue / np.maximum(power, 1e-300)), 1.0)
        v *= scale[:, None, None]
    elif policy.alpha_mode == "ul":
        bf = metrics.BeamformerSet(w=w, v=v)
        bs_power, _ = metrics.power_audit(bf, antennas_per_bs)
        worst = bs_power.max()
        if worst > 0:
            w *= np.sqrt(rho_bs / worst)
    return metrics.BeamformerSet(w=w, v=v)


def _heuristic_weights_for(config, iteration):
    schedule = config.training.heuristic_schedule
    scen = config.scenario
    if schedule:
        a, b = schedule[min(iteration - 1, len(schedule) - 1)]
    else:
        a, b = config.solver.heuristic_a, config.solver.heuristic_b
    return ue_solver.uniform_weights(scen.num_ue, scen.streams_per_ue, a, b)


def run_scheme(scheme, channels, config, iters, csi="ideal", seed=0):
    """Run one scheme for ``iters`` bi-directional iterations on given channels.

    One SCA linearization per iteration: the operating point is refreshed at
    the top of each iteration from the previous beamformers, the BS update
    runs its inner dual loop against it, and the UE update then uses the same
    operating point together with the fresh BS beamformers.
    """
    policy = SCHEMES[scheme]
    if policy.constituents is not None:
        return run_separate(scheme, channels, config, iters, csi, seed)
    if csi not in ("ideal", "trained"):
        raise ValueError(f"unknown csi mode {csi!r}")
    t_start = time.perf_counter()
    scen = config.scenario
    solver = config.solver
    alpha_eff = {"config": scen.alpha, "dl": 1.0, "ul": 0.0}[policy.alpha_mode]
    k_count, s_count = scen.num_ue, scen.streams_per_ue
    m = scen.antennas_per_bs
    trained = csi == "trained"
    tau = config.effective_tau()
    book = training.make_pilots(k_count, s_count, tau, config.training.pilot_mode,
                                seed=_derived_seed(seed, TAG_PILOT))
    noise_scale = config.training.pilot_noise_scale ** 2
    sigma2_pilot_bs = noise_scale * scen.sigma2_bs
    sigma2_pilot_ue = noise_scale * scen.sigma2_ue

    v = _initial_ue_beamformers(substream(seed, TAG_INIT), k_count, s_count,
                                scen.antennas_per_ue, scen.rho_ue)

    def bs_view(iteration, v_now):
        """Effective channels as seen by the CPU (estimated in trained mode)."""
        if trained:
            rng = substream(seed, TAG_NOISE_UL, iteration)
            y_ul = training.ul_pilot_phase(channels, v_now, book, sigma2_pilot_bs, rng)
            h_hat = training.ls_estimate(y_ul, book.pilots, tau)
            return h_hat.reshape(k_count, s_count, -1)
        return metrics.effective_bs_channels(channels, v_now)

    h_eff = bs_view(0, v)
    w = _matched_filter_bs(h_eff, scen.rho_bs, m)
    duals = bs_solver.init_bs_duals(k_count, s_count, scen.num_bs, alpha_eff)

    series = {name: [] for name in ("min_dl", "min_ul", "objective",
                                    "bs_ratio", "ue_ratio")}
    final_bf = None

    def snapshot(w_now, v_now):
        nonlocal final_bf
        bf = _evaluation_beamformers(policy, w_now, v_now, scen.rho_bs, scen.rho_ue, m)
        sinr = metrics.compute_sinr(channels, bf, scen.sigma2_ue, scen.sigma2_bs)
        summary = metrics.compute_rates(sinr, scen.alpha)
        bs_power, ue_power = metrics.power_audit(bf, m)
        final_bf = bf
        return (summary.min_dl, summary.min_ul, summary.objective,
                bs_power.max() / scen.rho_bs, ue_power.max() / scen.rho_ue)

    init_dl, init_ul, init_obj, _, _ = snapshot(w, v)

    for it in range(1, iters + 1):
        if it > 1:
            h_eff = bs_view(it, v)
        v_norm_sq = np.sum(np.abs(v) ** 2, axis=2)
        sinr_op = metrics.sinr_from_effective(h_eff, w, v_norm_sq,
                                              scen.sigma2_ue, scen.sigma2_bs)
        op = bs_solver.operating_point_from_sinr(sinr_op, w, v)
        w, duals = bs_solver.bs_sca_step(h_eff, op, duals, alpha_eff,
                                         scen.sigma2_bs, scen.rho_bs, m, solver,
                                         mu_index_variant=solver.mu_index_variant)

        # Operating SINRs for the UE half-step reflect the fresh BS beamformers
        # (locally measurable at each UE from the plain DL pilot block); the UE
        # linearization point stays at the previous UE beamformers.
        sinr_mid = metrics.sinr_from_effective(h_eff, w, v_norm_sq,
                                               scen.sigma2_ue, scen.sigma2_bs)
        op = bs_solver.operating_point_from_sinr(sinr_mid, w, v)

        if policy.ue_update == "opt":
            if trained:
                wf = w.reshape(k_count * s_count, -1)
                hf = h_eff.reshape(k_count * s_count, -1)
                gains = (np.abs(np.einsum("qi,qi->q", wf.conj(), hf)) ** 2
                         ).reshape(k_count, s_count)
                _, mu_bar = ue_solver.compute_nu_mu_bar(
                    duals.eta, duals.zeta, alpha_eff, op.gamma, op.gamma_bar, gains)
                y1 = y2 = None
                if alpha_eff > 0.0:
                    y1 = training.dl_pilot_phase(
                        channels, w, book, None, sigma2_pilot_ue,
                        substream(seed, TAG_NOISE_DL1, it))
                if alpha_eff < 1.0:
                    y2 = training.dl_pilot_phase(
                        channels, w, book, np.sqrt(np.maximum(mu_bar, 0.0)),
                        sigma2_pilot_ue, substream(seed, TAG_NOISE_DL2, it))
                v, _ = ue_solver.solve_ue_beamformers_estimated(
                    y1, y2, book, duals.eta, op, alpha_eff, scen.sigma2_ue,
                    scen.rho_ue, tau, solver.bisect_tol,
                    sigma2_pilot=sigma2_pilot_ue)
            else:
                g_all = metrics.effective_ue_channels(channels, w)
                own = np.arange(k_count)[:, None] * s_count + np.arange(s_count)
                g_own = np.take_along_axis(g_all, own[:, :, None], axis=1)
                gains = np.abs(np.einsum("ksn,ksn->ks", op.v_prev.conj(), g_own)) ** 2
                nu_bar, mu_bar = ue_solver.compute_nu_mu_bar(
                    duals.eta, duals.zeta, alpha_eff, op.gamma, op.gamma_bar, gains)
                v, _ = ue_solver.solve_ue_beamformers_ideal(
                    g_all, nu_bar, mu_bar, op, alpha_eff, scen.sigma2_ue,
                    scen.rho_ue, solver.bisect_tol,
                    mu_index_variant=solver.mu_index_variant)
        else:
            weights = _heuristic_weights_for(config, it)
            if trained:
                y2 = training.dl_pilot_phase(
                    channels, w, book, np.sqrt(weights.a.reshape(-1)),
                    sigma2_pilot_ue, substream(seed, TAG_NOISE_DL2, it))
                v, _ = ue_solver.solve_ue_beamformers_heuristic(
                    y2, book, weights, scen.sigma2_ue, scen.rho_ue, tau,
                    solver.bisect_tol, sigma2_pilot=sigma2_pilot_ue)
            else:
                g_all = metrics.effective_ue_channels(channels, w)
                v, _ = ue_solver.heuristic_ue_exact(
                    g_all, weights, scen.sigma2_ue, scen.rho_ue, solver.bisect_tol)

        min_dl, min_ul, obj, bs_ratio, ue_ratio = snapshot(w, v)
        series["min_dl"].append(min_dl)
        series["min_ul"].append(min_ul)
        series["objective"].append(obj)
        series["bs_ratio"].append(bs_ratio)
        series["ue_ratio"].append(ue_ratio)

    return RunResult(
        scheme=scheme, drop=0, iterations=iters,
        min_dl=np.array(series["min_dl"]), min_ul=np.array(series["min_ul"]),
        objective=np.array(series["objective"]),
        max_bs_power_ratio=np.array(series["bs_ratio"]),
        max_ue_power_ratio=np.array(series["ue_ratio"]),
        init_min_dl=init_dl, init_min_ul=init_ul, init_objective=init_obj,
        final_beamformers=final_bf, wall_time=time.perf_counter() - t_start)


def combine_separate(scheme, dl_result, ul_result, alpha):
    """Fuse the two single-direction phases of a separate scheme.

    DL rates come from the DL phase's beamformers, UL rates from the UL
    phase's; the overhead model accounts for both phases through the composed
    pilot-block entry.
    """
    iters = min(dl_result.iterations, ul_result.iterations)
    min_dl = dl_result.min_dl[:iters]
    min_ul = ul_result.min_ul[:iters]
    objective = np.minimum(alpha * min_dl, (1.0 - alpha) * min_ul)
    return RunResult(
        scheme=scheme, drop=dl_result.drop, iterations=iters,
        min_dl=min_dl.copy(), min_ul=min_ul.copy(), objective=objective,
        max_bs_power_ratio=np.maximum(dl_result.max_bs_power_ratio[:iters],
                                      ul_result.max_bs_power_ratio[:iters]),
        max_ue_power_ratio=np.maximum(dl_result.max_ue_power_ratio[:iters],
                                      ul_result.max_ue_power_ratio[:iters]),
        init_min_dl=dl_result.init_min_dl, init_min_ul=ul_result.init_min_ul,
        init_objective=min(alpha * dl_result.init_min_dl,
                           (1.0 - alpha) * ul_result.init_min_ul),
        final_beamformers=None,
        wall_time=dl_result.wall_time + ul_result.wall_time)


def run_separate(scheme, channels, config, iters_per_phase, csi="ideal", seed=0):
    """Run the two constituent single-direction phases and fuse their reports."""
    policy = SCHEMES[scheme]
    if policy.constituents is None:
        raise ValueError(f"{scheme!r} is not a separate scheme")
    dl_name, ul_name = policy.constituents
    dl_result = run_scheme(dl_name, channels, config, iters_per_phase, csi, seed)
    ul_result = run_scheme(ul_name, channels, config, iters_per_phase, csi, seed)
    return combine_separate(scheme, dl_result, ul_result, config.scenario.alpha)


@dataclass
class MonteCarloResult:
    runs: dict                     # scheme -> list[RunResult] ordered by drop
    block_sizes: list
    overhead: training.OverheadModel
    config: object
    csi: str
    iters: int

    def mean_min_rate(self, scheme):
        """Mean over drops of the per-iteration minimum DL-UL rate."""
        return np.mean([r.min_rate for r in self.runs[scheme]], axis=0)

    def effective_rates(self, scheme, block_slots):
        """Per-drop effective-rate series (drops, iterations) for one block size."""
        rows = []
        for result in self.runs[scheme]:
            rows.append([metrics.effective_rate(rate, it + 1, scheme,
                                                self.overhead, block_slots)
                         for it, rate in enumerate(result.min_rate)])
        return np.array(rows)


def overhead_model_from_config(config):
    return training.default_overhead_model(
        overrides=config.training.pilot_blocks_override,
        slots_per_pilot_block=config.training.slots_per_pilot_block)


def _expand_schemes(schemes):
    """Single-phase runs needed to realize the requested scheme list."""
    needed = []
    for scheme in schemes:
        policy = SCHEMES[scheme]
        parts = policy.constituents or (scheme,)
        for part in parts:
            if part not in needed:
                needed.append(part)
    return needed


def simulate_drop(config, schemes, iters, csi, master_seed, drop):
    """All requested schemes on one independent drop. Safe to run in a worker."""
    seed = drop_seed(master_seed, drop)
    geometry = generate_geometry(config.scenario, seed)
    channels = draw_channels(geometry, config.scenario, seed)
    base_runs = {}
    for name in _expand_schemes(schemes):
        result = run_scheme(name, channels, config, iters, csi, seed)
        result.drop = drop
        base_runs[name] = result
    out = {}
    for scheme in schemes:
        policy = SCHEMES[scheme]
        if policy.constituents is None:
            out[scheme] = base_runs[scheme]
        else:
            dl_name, ul_name = policy.constituents
            out[scheme] = combine_separate(scheme, base_runs[dl_name],
                                           base_runs[ul_name],
                                           config.scenario.alpha)
    return drop, out


def monte_carlo(config, schemes, drops, iters, block_sizes=(4,), csi="ideal",
                workers=1):
    """Independent drops of every requested scheme, merged by drop index."""
    if drops < 1:
        raise ValueError("drops must be >= 1")
    for scheme in schemes:
        if scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {scheme!r}")
    master_seed = config.scenario.seed
    per_drop = {}
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(simulate_drop, config, list(schemes), iters,
                                   csi, master_seed, drop)
                       for drop in range(drops)]
            for future in futures:
                drop, out = future.result()
                per_drop[drop] = out
    else:
        for drop in range(drops):
            drop, out = simulate_drop(config, list(schemes), iters, csi,
                                      master_seed, drop)
            per_drop[drop] = out
    runs = {scheme: [per_drop[d][scheme] for d in range(drops)]
            for scheme in schemes}
    return MonteCarloResult(runs=runs, block_sizes=list(block_sizes),
                            overhead=overhead_model_from_config(config),
                            config=config, csi=csi, iters=iters)


def emit_csv(mc_result, path):
    """One row per (scheme, drop, iteration, block size), sorted, 12 significant digits."""
    rows = []
    for scheme in sorted(mc_result.runs):
        for result in mc_result.runs[scheme]:
            min_rate = result.min_rate
            for it in range(result.iterations):
                for block in sorted(mc_result.block_sizes):
                    eff = metrics.effective_rate(min_rate[it], it + 1, scheme,
                                                 mc_result.overhead, block)
                    rows.append((scheme, result.drop, it + 1,
                                 result.min_dl[it], result.min_ul[it],
                                 result.objective[it], block, eff))
    rows.sort(key=lambda r: (r[0], r[1], r[2], r[6]))
    tmp = f"{path}.tmp"
    with open(tmp, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for scheme, drop, it, min_dl, min_ul, obj, block, eff in rows:
            writer.writerow([scheme, drop, it, f"{min_dl:.12g}", f"{min_ul:.12g}",
                             f"{obj:.12g}", f"{block:g}", f"{eff:.12g}"])
    os.replace(tmp, path)
