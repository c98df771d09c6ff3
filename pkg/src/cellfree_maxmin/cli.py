"""Command-line interface: run one scheme, sweep schemes/block sizes, validate."""

import argparse
import sys

import numpy as np

from . import bs_solver, metrics, orchestrator, scenario, ue_solver
from .config import SimConfig, load_config
from .orchestrator import ALL_SCHEMES


def _add_common(parser):
    parser.add_argument("--config", default=None, help="flat key=value config file")
    parser.add_argument("--seed", type=int, default=None, help="master seed override")
    parser.add_argument("--drops", type=int, default=1)
    parser.add_argument("--iters", type=int, default=10)
    parser.add_argument("--csi", choices=("ideal", "trained"), default="ideal")
    parser.add_argument("--block-slots", default="4",
                        help="comma-separated scheduling block sizes in slots")
    parser.add_argument("--out", default=None, help="write per-iteration CSV here")
    parser.add_argument("--workers", type=int, default=1,
                        help="drop-level worker processes")


def _load(args):
    config = load_config(args.config) if args.config else SimConfig()
    if args.seed is not None:
        config.scenario.seed = args.seed
    return config


def _parse_blocks(text):
    blocks = [float(x) for x in text.split(",") if x.strip()]
    if not blocks:
        raise ValueError("at least one block size is required")
    return blocks


def _summarize(mc, schemes):
    for scheme in schemes:
        mean = mc.mean_min_rate(scheme)
        final = mean[-1] if len(mean) else float("nan")
        print(f"{scheme:>14s}: converged mean min DL-UL rate "
              f"{final:.4f} bits/s/Hz over {len(mc.runs[scheme])} drop(s)")


def cmd_run(args):
    config = _load(args)
    blocks = _parse_blocks(args.block_slots)
    mc = orchestrator.monte_carlo(config, [args.scheme], args.drops, args.iters,
                                  block_sizes=blocks, csi=args.csi,
                                  workers=args.workers)
    _summarize(mc, [args.scheme])
    if args.out:
        orchestrator.emit_csv(mc, args.out)
        print(f"wrote {args.out}")
    return 0


def cmd_sweep(args):
    config = _load(args)
    schemes = [s.strip() for s in args.schemes.split(",") if s.strip()]
    blocks = _parse_blocks(args.block_slots)
    mc = orchestrator.monte_carlo(config, schemes, args.drops, args.iters,
                                  block_sizes=blocks, csi=args.csi,
                                  workers=args.workers)
    _summarize(mc, schemes)
    for block in blocks:
        print(f"-- block {block:g} slots: best effective min DL-UL rate per scheme --")
        for scheme in schemes:
            eff = mc.effective_rates(scheme, block).mean(axis=0)
            best_it = int(np.argmax(eff)) + 1 if len(eff) else 0
            best = eff.max() if len(eff) else float("nan")
            print(f"{scheme:>14s}: {best:.4f} bits/s/Hz at iteration {best_it}")
    if args.out:
        orchestrator.emit_csv(mc, args.out)
        print(f"wrote {args.out}")
    return 0


def _check(label, ok, failures):
    print(f"[{'PASS' if ok else 'FAIL'}] {label}")
    if not ok:
        failures.append(label)


def cmd_validate(args):
    """Fast self-checks of the core numerical properties."""
    config = _load(args)
    failures = []
    rng = np.random.default_rng(7)

    d = scenario.pathloss_linear(100.0, 28.0)
    _check("pathloss at 100 m / 28 GHz", abs(np.log10(d) * 10 + 150.2431586) < 1e-6,
           failures)

    scen = scenario.ScenarioConfig(num_bs=4, antennas_per_bs=2, num_ue=3,
                                   antennas_per_ue=2, streams_per_ue=1,
                                   grid_spacing=60.0)
    geo = scenario.generate_geometry(scen, 3)
    ch1 = scenario.draw_channels(geo, scen, 5)
    ch2 = scenario.draw_channels(geo, scen, 5)
    _check("channel determinism", np.array_equal(ch1.h, ch2.h), failures)

    ok = True
    for _ in range(200):
        bm, n = 6, 2
        h = rng.standard_normal(bm) + 1j * rng.standard_normal(bm)
        w_op = rng.standard_normal(bm) + 1j * rng.standard_normal(bm)
        w = rng.standard_normal(bm) + 1j * rng.standard_normal(bm)
        g_op, g = rng.uniform(0.2, 3.0), rng.uniform(0.2, 3.0)
        p_val = abs(np.vdot(h, w)) ** 2 / g
        ok &= bs_solver.surrogate_p(w, g, w_op, g_op, h) <= p_val + 1e-9
        tangent = bs_solver.surrogate_p(w_op, g_op, w_op, g_op, h)
        ok &= abs(tangent - abs(np.vdot(h, w_op)) ** 2 / g_op) < 1e-9
    _check("surrogate minorization and tangency", ok, failures)

    small = SimConfig()
    small.scenario = scenario.ScenarioConfig(num_bs=4, antennas_per_bs=2, num_ue=3,
                                             antennas_per_ue=2, streams_per_ue=1,
                                             grid_spacing=60.0, seed=1)
    mc = orchestrator.monte_carlo(small, ["joint-opt"], drops=1, iters=5)
    result = mc.runs["joint-opt"][0]
    feasible = (result.max_bs_power_ratio.max() <= 1 + 1e-9
                and result.max_ue_power_ratio.max() <= 1 + 1e-9)
    _check("power feasibility on a short run", feasible, failures)
    improved = result.objective[-1] >= result.init_objective
    _check("objective improves on matched-filter initialization", improved, failures)

    if failures:
        print(f"{len(failures)} check(s) failed")
        return 1
    print("all checks passed")
    return 0


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="cellfree-maxmin",
        description="Joint DL-UL max-min beamforming simulator for cell-free "
                    "massive MIMO with bi-directional training")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a single scheme")
    p_run.add_argument("--scheme", choices=ALL_SCHEMES, default="joint-opt")
    _add_common(p_run)
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="run several schemes and block sizes")
    p_sweep.add_argument("--schemes", default=",".join(ALL_SCHEMES))
    _add_common(p_sweep)
    p_sweep.set_defaults(func=cmd_sweep)

    p_val = sub.add_parser("validate", help="fast numerical self-checks")
    _add_common(p_val)
    p_val.set_defaults(func=cmd_validate)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (bs_solver.SolverError, metrics.EvaluationError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
