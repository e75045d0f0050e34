"""Command-line surface: validate, simulate, norm, conv-space, conv-time,
z-wick and wick-stats.

Exit codes: 0 success, 2 configuration error, 3 numerical abort or failed
statistical gate, 4 I/O error.  Every artifact-producing command writes a
manifest sufficient for bit-exact replay.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import config as cfg
from . import experiment, noise, scheme, snapshots, stats
from .besov import DyadicPartition, besov_norm
from .spectral import PhysicalField, to_spectral

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sacsim", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out=True):
        sp.add_argument("--config", required=True, help="JSON config file")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a scalar config field (dotted path)")
        sp.add_argument("--workers", type=int, default=None)
        if out:
            sp.add_argument("--out", required=True, help="output directory")

    common(sub.add_parser("validate", help="parse and echo the resolved config"), out=False)

    sim = sub.add_parser("simulate", help="run one trajectory and dump snapshots")
    common(sim)
    sim.add_argument("--dump-every", type=int, default=1, metavar="K")

    nrm = sub.add_parser("norm", help="Besov norm of a field snapshot")
    nrm.add_argument("--input", required=True, help="snapshot file")
    nrm.add_argument("--s", required=True, type=float, help="regularity index")
    nrm.add_argument("--oversample", type=int, default=4)
    nrm.add_argument("--partition", choices=("sharp", "smooth"), default="sharp")

    common(sub.add_parser("conv-space", help="spatial strong-convergence sweep"))
    common(sub.add_parser("conv-time", help="temporal strong-convergence sweep"))
    common(sub.add_parser("z-wick", help="Wick-power Galerkin error sweep"))
    common(sub.add_parser("wick-stats", help="Gaussian moment sanity suite"), out=False)
    return p


def _parse_overrides(pairs) -> dict:
    out = {}
    for pair in pairs:
        if "=" not in pair:
            raise cfg.ConfigError([f"--set expects KEY=VALUE, got {pair!r}"])
        key, raw = pair.split("=", 1)
        try:
            out[key] = json.loads(raw)
        except json.JSONDecodeError:
            out[key] = raw
    return out


def _load(args) -> cfg.Config:
    conf = cfg.parse_config(args.config, _parse_overrides(args.set))
    for warning in conf.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    return conf


def _error_record(code: int, message: str) -> int:
    print(json.dumps({"error": {"code": code, "message": message}}), file=sys.stderr)
    return code


def _cmd_validate(args) -> int:
    conf = _load(args)
    print(json.dumps(conf.raw, indent=2, sort_keys=True))
    return EXIT_OK


def _cmd_simulate(args) -> int:
    conf = _load(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    started = cfg.utc_now()
    params = conf.scheme_params
    path = noise.NoisePath.build(params.cutoff, params.steps, params.horizon, params.seed)
    record = list(range(0, params.steps + 1, max(1, args.dump_every)))
    if params.steps not in record:
        record.append(params.steps)
    traj = scheme.run(params, path, record_indices=record)
    names = []
    for k in traj.record_indices:
        name = f"snapshot_{k:06d}.bin"
        snapshots.write_snapshot(out / name, traj.X[k], traj.times[k])
        names.append(name)
    cfg.write_manifest(out / "manifest.json", "simulate", conf, started, cfg.utc_now(),
                       {"snapshots": names, "steps": params.steps,
                        "cutoff": params.cutoff,
                        "max_psi_norm": _finite_max(traj.psi_norms)})
    print(f"wrote {len(names)} snapshots to {out}")
    return EXIT_OK


def _finite_max(arr):
    import numpy as np

    vals = arr[np.isfinite(arr)]
    return float(vals.max()) if vals.size else None


def _cmd_norm(args) -> int:
    field, time = snapshots.read_snapshot(args.input)
    if isinstance(field, PhysicalField):
        field = to_spectral(field, (field.grid_size - 1) // 2)
    res = besov_norm(field, args.s, DyadicPartition(args.partition),
                     oversample=args.oversample)
    print(json.dumps({
        "s": args.s,
        "time": time,
        "value": res.value,
        "blocks": [{"j": b.j, "sup": b.sup, "weighted": b.weighted} for b in res.blocks],
    }, indent=2))
    return EXIT_OK


def _run_conv(args, axis: str) -> int:
    conf = _load(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    started = cfg.utc_now()
    report = experiment.run_convergence(conf.experiment, axes=(axis,), workers=args.workers)
    experiment.write_results_csv(out / "results.csv", report.metric, report.cells,
                                 report.errors)
    experiment.write_summary_csv(out / "summary.csv", report.cells, report.moments,
                                 report.ses)
    experiment.write_rates_json(out / "rates.json", report.rates)
    experiment.write_plot_json(out / "plot.json", report.rates)
    rate = report.rates[axis]
    cfg.write_manifest(out / "manifest.json", f"conv-{axis}", conf, started, cfg.utc_now(),
                       {"samples": conf.experiment.samples,
                        "metric": report.metric,
                        "fitted_order": rate.slope,
                        "ci": [rate.ci_low, rate.ci_high],
                        "note": "reference run at (N_ref, M_ref) stands in for the "
                                "continuum solution; sup over t approximated by the "
                                "max over evaluated grid times"})
    print(f"{axis} order {rate.slope:.3f}  CI [{rate.ci_low:.3f}, {rate.ci_high:.3f}]")
    return EXIT_OK


def _cmd_z_wick(args) -> int:
    conf = _load(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    started = cfg.utc_now()
    expc = conf.experiment
    result = experiment.run_z_wick(expc, workers=args.workers)
    lines = ["metric,N,M,sample,error"]
    for n in (1, 2, 3):
        for N in expc.N_list:
            errs = result["errors"][n][N]
            for i, e in enumerate(errs):
                lines.append(f"z_wick_{n},{N},{expc.M_ref},{i},{float(e)!r}")
    (out / "results.csv").write_text("\n".join(lines) + "\n")
    summary = ["N,M,moment,bootstrap_se"]
    for n in (1, 2, 3):
        for N in expc.N_list:
            summary.append(f"{N},{expc.M_ref},{result['moments'][(N, n)]!r},"
                           f"{result['ses'][(N, n)]!r}")
    (out / "summary.csv").write_text("\n".join(summary) + "\n")
    rates = {f"z_wick_{n}": result["rates"][n] for n in (1, 2, 3)}
    experiment.write_rates_json(out / "rates.json", rates)
    experiment.write_plot_json(out / "plot.json", rates)
    cfg.write_manifest(out / "manifest.json", "z-wick", conf, started, cfg.utc_now(),
                       {"samples": expc.samples,
                        "orders": {str(n): result["rates"][n].slope for n in (1, 2, 3)}})
    for n in (1, 2, 3):
        print(f"wick order {n}: fitted spatial order {result['rates'][n].slope:.3f}")
    return EXIT_OK


def _cmd_wick_stats(args) -> int:
    conf = _load(args)
    checks = stats.run_wick_stats(conf.wick_stats_cutoff, conf.wick_stats_samples,
                                  conf.master_seed)
    worst = 0.0
    for c in checks:
        tag = "PASS" if c.passed else "FAIL"
        print(f"{tag} {c.name}: estimate {c.estimate:.6g} vs target {c.target:.6g} "
              f"({c.n_se:.2f} SE)")
        worst = max(worst, c.n_se)
    if all(c.passed for c in checks):
        print(f"all {len(checks)} checks passed (worst deviation {worst:.2f} SE)")
        return EXIT_OK
    return EXIT_NUMERICAL


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "validate":
            return _cmd_validate(args)
        if args.command == "simulate":
            return _cmd_simulate(args)
        if args.command == "norm":
            return _cmd_norm(args)
        if args.command == "conv-space":
            return _run_conv(args, "space")
        if args.command == "conv-time":
            return _run_conv(args, "time")
        if args.command == "z-wick":
            return _cmd_z_wick(args)
        if args.command == "wick-stats":
            return _cmd_wick_stats(args)
        raise AssertionError(f"unhandled command {args.command}")
    except cfg.ConfigError as err:
        return _error_record(EXIT_CONFIG, str(err))
    except ValueError as err:
        return _error_record(EXIT_CONFIG, str(err))
    except scheme.SchemeAbort as err:
        return _error_record(EXIT_NUMERICAL, str(err))
    except OSError as err:
        return _error_record(EXIT_IO, str(err))


if __name__ == "__main__":
    sys.exit(main())
