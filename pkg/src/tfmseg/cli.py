"""Command-line entry point: ``tfmseg {detect,identify,simulate,calibrate,evaluate}``."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import InvalidInputError, TFMSegError
from .factor import estimate_loadings, estimate_pseudo_factors, estimate_ranks, pseudo_factor_stats
from .io import check_dims, load_json, load_series, load_truth, read_scenario, save_json, save_series, save_truth
from .modeid import identify_modes, loading_distance, mode_informed_loadings
from .pipeline import DetectConfig, column_basis, detect, report_document
from .segmentation import generate_seeded_intervals, write_pi_coefficients
from .simgen import SimScenario, evaluate_detection, evaluate_mode_id, generate

log = logging.getLogger("tfmseg")


def _int_tuple(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _series_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--input", required=True, help="series file (TFTS binary or long CSV)")
    p.add_argument("--format", choices=("binary", "csv"), help="defaults to the file extension")
    p.add_argument("--ranks", type=_int_tuple, help="factor ranks r_1,...,r_K (estimated when omitted)")
    p.add_argument("--zeta-mult", type=float, default=3.5, help="mode-identification threshold multiplier")
    p.add_argument("--endpoints", choices=("practical", "theoretical"), default="practical")
    p.add_argument("--mode-informed", action="store_true", help="also estimate mode-informed loadings")
    p.add_argument("--truth", help="ground truth JSON; adds loading distances to the report")
    p.add_argument("--output", required=True, help="report JSON path")
    p.add_argument("--no-timing", action="store_true", help="omit wall-clock timings (byte-reproducible output)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tfmseg", description=__doc__)
    ap.add_argument("--version", action="version", version=f"tfmseg {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    d = sub.add_parser("detect", help="change points, mode identification, optional mode-informed loadings")
    _series_args(d)
    d.add_argument("--pi-coeffs", help="threshold coefficient file (name=value lines)")
    d.add_argument("--threshold", type=float, help="use this detection threshold instead of the fitted one")
    d.add_argument("--mu", type=float, help="seeded-interval depth parameter")
    d.add_argument("--trim", type=int, help="boundary trimming")
    d.add_argument("--bandwidth", type=int, help="Bartlett bandwidth")

    i = sub.add_parser("identify", help="mode identification at given change points")
    _series_args(i)
    src = i.add_mutually_exclusive_group(required=True)
    src.add_argument("--thetas", type=_int_tuple, help="change points, comma separated")
    src.add_argument("--report", help="take change points from a detect report")

    s = sub.add_parser("simulate", help="draw one series from a simulation scenario")
    s.add_argument("--config", help="scenario file with key=value lines")
    s.add_argument("--scenario", choices=("S0", "S1", "S2", "S3"))
    s.add_argument("--T", type=int)
    s.add_argument("--dims", type=_int_tuple)
    s.add_argument("--sim-ranks", type=_int_tuple, default=(3, 3, 3))
    s.add_argument("--rho", type=float, default=0.0, help="factor AR(1) coefficient")
    s.add_argument("--spacing", choices=("equal", "unequal"), default="equal")
    s.add_argument("--missing", action="store_true")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--replication", type=int, default=0)
    s.add_argument("--format", choices=("binary", "csv"))
    s.add_argument("--output", required=True, help="series path")
    s.add_argument("--truth-output", help="ground truth JSON path (default: <output>.truth.json)")

    c = sub.add_parser("calibrate", help="Monte Carlo calibration of thresholds")
    c.add_argument("--what", choices=("pi", "zeta"), required=True)
    c.add_argument("--grid", choices=("reduced", "full"), default="reduced")
    c.add_argument("--reps", type=int, default=50)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--workers", type=int, help="process count (default TFMSEG_THREADS or all cores)")
    c.add_argument("--output", required=True)

    e = sub.add_parser("evaluate", help="score a saved report against saved ground truth")
    e.add_argument("--report", required=True)
    e.add_argument("--truth", required=True)
    e.add_argument("--output", required=True, help="metrics CSV path")
    return ap


def _config(args, **extra) -> DetectConfig:
    return DetectConfig(
        ranks=args.ranks,
        zeta_multiplier=args.zeta_mult,
        endpoint_mode=args.endpoints,
        mode_informed=args.mode_informed,
        **extra,
    )


def cmd_detect(args) -> int:
    s = load_series(args.input, args.format)
    truth = load_truth(args.truth) if args.truth else None
    if truth is not None:
        check_dims(s, truth)
    cfg = _config(args, pi_coeffs=args.pi_coeffs, threshold=args.threshold, mu=args.mu, trim=args.trim,
                  bandwidth=args.bandwidth)
    det = detect(s, cfg)
    save_json(report_document(det, truth, include_timing=not args.no_timing), args.output)
    return 0


def cmd_identify(args) -> int:
    s = load_series(args.input, args.format)
    s.require_complete()
    truth = load_truth(args.truth) if args.truth else None
    if truth is not None:
        check_dims(s, truth)
    if args.report:
        thetas = [cp["theta"] for cp in load_json(args.report).get("change_points", [])]
    else:
        thetas = list(args.thetas)
    if any(not 0 < t < s.T for t in thetas) or sorted(set(thetas)) != sorted(thetas):
        raise InvalidInputError(f"change points must be distinct and inside (0, {s.T})")
    thetas = sorted(thetas)
    ranks = tuple(args.ranks) if args.ranks else estimate_ranks(s)
    stats = pseudo_factor_stats(estimate_pseudo_factors(s, estimate_loadings(s, ranks)))
    finer = generate_seeded_intervals(s.T).finer if args.endpoints == "theoretical" else ()
    mi = identify_modes(stats, thetas, finer, p=s.p, zeta_multiplier=args.zeta_mult, endpoint_mode=args.endpoints)
    doc = {
        "format": "tfmseg-identify",
        "version": __version__,
        "T": s.T,
        "dims": list(s.dims),
        "config": {"ranks": list(ranks), "zeta": mi.zeta, "zeta_scale": mi.scale, "endpoint_mode": mi.endpoint_mode},
        "change_points": [{"theta": t} for t in thetas],
        "mode_identification": [
            {
                "theta": thetas[j],
                "endpoints": list(mi.endpoints[j]),
                "modes": sorted(k + 1 for k in mi.modes[j]),
                "xi_norms": mi.norms[j].tolist(),
                "scaled_xi_norms": mi.scaled_norms[j].tolist(),
            }
            for j in range(len(thetas))
        ],
        "endpoint_fallbacks": [[j, side] for j, side in mi.fallbacks],
    }
    if args.mode_informed:
        inf = mode_informed_loadings(s, thetas, mi.modes, ranks)
        doc["mode_informed_loadings"] = []
        for k, runs in enumerate(inf.runs):
            for r in runs:
                entry = {"mode": k + 1, "segments": [r.first + 1, r.last + 1], "interval": list(r.interval),
                         "rank": int(r.loading.shape[1]), "provenance": r.provenance}
                if truth is not None:
                    entry["distance_to_truth"] = loading_distance(r.loading, column_basis(truth.loading(r.first, k)))
                doc["mode_informed_loadings"].append(entry)
    save_json(doc, args.output)
    return 0


def cmd_simulate(args) -> int:
    if args.config:
        sc = read_scenario(args.config)
    else:
        if args.scenario is None or args.T is None or args.dims is None:
            raise InvalidInputError("simulate needs --config or all of --scenario, --T, --dims")
        sc = SimScenario(args.scenario, args.T, args.dims, args.sim_ranks, args.rho, args.spacing,
                         args.missing, args.seed, args.replication)
    s, gt = generate(sc)
    save_series(s, args.output, args.format)
    save_truth(gt, args.truth_output or f"{args.output}.truth.json")
    return 0


def cmd_calibrate(args) -> int:
    from . import calibration as cal

    if args.what == "pi":
        cells = cal.reduced_pi_grid() if args.grid == "reduced" else cal.pi_grid()
        res = cal.calibrate_pi(cells, reps=args.reps, seed=args.seed, workers=args.workers,
                               progress=lambda ci, c, q: log.info("cell %d %s: q90=%.4f", ci, c, q))
        note = f"{args.grid} grid, {args.reps} reps, seed {args.seed}, adjusted R^2 {res.adj_r2:.4f}"
        write_pi_coefficients(res.coefficients, args.output, note)
    else:
        cells = cal.zeta_grid() if args.grid == "full" else cal.zeta_grid(Ts=(400, 1600), dims=((10, 10, 10), (20, 20, 20)))
        res = cal.calibrate_zeta(cells, reps=args.reps, seed=args.seed, workers=args.workers)
        Path(args.output).write_text(
            f"# {args.grid} grid, {args.reps} reps, seed {args.seed}, {res.pooled.size} pooled values\n"
            f"multiplier={res.multiplier!r}\n"
        )
    return 0


def evaluation_rows(report: dict, truth) -> list[dict]:
    """Metric rows (one per true change point) from a saved report and ground truth."""
    thetas_hat = [cp["theta"] for cp in report.get("change_points", [])]
    m = evaluate_detection(thetas_hat, truth.thetas, truth.T)
    tpr = fpr = None
    if m.all_detected and "mode_identification" in report:
        est = [{k - 1 for k in e["modes"]} for e in report["mode_identification"]]
        tpr, fpr = evaluate_mode_id(est, truth.modes, truth.K)
    rows = []
    for j, theta in enumerate(truth.thetas):
        rows.append({
            "change": j + 1,
            "theta": theta,
            "q_hat": len(thetas_hat),
            "q": truth.q,
            "q_diff": m.q_diff,
            "all_detected": int(m.all_detected),
            "accuracy": m.accuracy[j],
            "tpr": "" if tpr is None else tpr[j],
            "fpr": "" if fpr is None else fpr[j],
        })
    if not rows:
        rows.append({"change": 0, "theta": "", "q_hat": len(thetas_hat), "q": 0, "q_diff": m.q_diff,
                     "all_detected": int(m.all_detected), "accuracy": "", "tpr": "", "fpr": ""})
    return rows


def cmd_evaluate(args) -> int:
    report = load_json(args.report)
    truth = load_truth(args.truth)
    if report.get("T", truth.T) != truth.T:
        raise InvalidInputError(f"report has T={report.get('T')}, truth has T={truth.T}")
    rows = evaluation_rows(report, truth)
    with open(args.output, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
    return 0


COMMANDS = {
    "detect": cmd_detect,
    "identify": cmd_identify,
    "simulate": cmd_simulate,
    "calibrate": cmd_calibrate,
    "evaluate": cmd_evaluate,
}


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    np.seterr(all="ignore")
    try:
        return COMMANDS[args.command](args)
    except TFMSegError as exc:
        msg = str(exc).replace("\n", " ")
        print(f"error: {exc.category}: {msg}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: io: {exc}".replace("\n", " "), file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
