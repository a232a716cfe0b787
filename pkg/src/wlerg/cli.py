"""Command-line interface: ``wlerg {sample,fit,eval,scan,tilt,phase,transform}``.

Every run writes ``manifest.json`` with the resolved configuration (minus the
output directory); passing that file back through ``--config`` reproduces
the whole output directory byte for byte.
Exit codes: 0 success, 1 invalid input, 2 internal error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from ._rng import derive_int
from .basis import WaveletIndex, coefficients_from_csv, coefficients_to_csv, step_coefficients, WaveletCoefficients
from .detection import (
    default_threshold,
    hierarchical_classify,
    residual_block_scan,
    snr,
    wavelet_scan,
)
from .estimator import fit_pipeline
from .evaluation import (
    METRIC_CSV_HEADER,
    baseline_histogram,
    baseline_sbm,
    holdout_split,
    predict_wl,
    robustness_sweep,
    score_predictions,
    summary_row,
    sweep_csv,
)
from .expfamily import TiltVector, limiting_logmgf, tilt_path_diagnostics, tilt_table_csv
from .kernel import hierarchical_kernel, hierarchical_scale_probabilities, load_kernel_spec
from .sampler import LatentGraph, read_edge_list, sample_graph, write_edge_list


class ValidationError(Exception):
    """Bad user input; reported with exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


# --- helpers -----------------------------------------------------------------


def _write(path: Path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _load_json(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError as exc:
        raise ValidationError(f"file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"invalid JSON in {path}: {exc}") from exc


def _load_kernel(path):
    try:
        return load_kernel_spec(_load_json(path))
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"invalid kernel spec {path}: {exc}") from exc


def _read_positions(path, n: int) -> np.ndarray:
    u = np.full(n, np.nan)
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "vertex,u":
            raise ValidationError(f"{path}: expected header 'vertex,u'")
        for line in fh:
            if line.strip():
                v, x = line.split(",")
                u[int(v)] = float(x)
    if np.isnan(u).any() or np.any((u <= 0) | (u >= 1)):
        raise ValidationError(f"{path}: every vertex needs a position in (0, 1)")
    return u


def _positions_csv(u: np.ndarray) -> str:
    return "vertex,u\n" + "".join(f"{i},{float(x)!r}\n" for i, x in enumerate(u))


def _read_graph(args) -> LatentGraph:
    if not args.input:
        raise ValidationError("--input is required")
    try:
        lg = read_edge_list(args.input, n=args.n)
    except FileNotFoundError as exc:
        raise ValidationError(f"file not found: {args.input}") from exc
    if getattr(args, "positions", None):
        lg = LatentGraph(lg.n, _read_positions(args.positions, lg.n), lg.bits)
    return lg


def _parse_floats(text: str) -> list[float]:
    """``"a,b,c"`` or ``"start:stop:count"`` (inclusive, evenly spaced)."""
    if ":" in text:
        a, b, k = text.split(":")
        return [float(v) for v in np.linspace(float(a), float(b), int(k))]
    return [float(v) for v in text.split(",") if v.strip()]


def _parse_scales(text: str | None):
    if text is None:
        return None
    if "-" in text:
        a, b = text.split("-")
        return list(range(int(a), int(b) + 1))
    return [int(v) for v in text.split(",")]


def _tilt_from_json(obj: dict) -> TiltVector:
    entries = {
        (WaveletIndex(int(e["j1"]), int(e["l1"])), WaveletIndex(int(e["j2"]), int(e["l2"]))): float(e["value"])
        for e in obj.get("entries", [])
    }
    return TiltVector(float(obj.get("lam0", 0.0)), entries)


def _manifest(out: Path, args, outputs: list[str]) -> None:
    config = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "config", "out")}
    obj = {"tool": "wlerg", "version": __version__, "command": args.command, "config": config, "outputs": sorted(outputs)}
    _write(out / "manifest.json", json.dumps(obj, indent=2, sort_keys=True) + "\n")


# --- commands ----------------------------------------------------------------


def cmd_sample(args, out: Path) -> list[str]:
    if args.n is None or args.n < 1:
        raise ValidationError("--n must be at least 1")
    if not args.kernel:
        raise ValidationError("--kernel is required")
    k = _load_kernel(args.kernel)
    lg = sample_graph(k, args.n, derive_int(args.seed, "sample"), threads=args.threads)
    write_edge_list(lg, out / "edges.txt")
    _write(out / "positions.csv", _positions_csv(lg.U))
    return ["edges.txt", "positions.csv"]


def _holdout(args, n):
    if args.fraction is None:
        return None
    return holdout_split(n, args.fraction, derive_int(args.seed, "holdout"))


def cmd_fit(args, out: Path) -> list[str]:
    lg = _read_graph(args)
    split = _holdout(args, lg.n)
    fit = fit_pipeline(lg, args.method, args.K, args.kappa, holdout=None if split is None else split.test)
    _write(out / "fit.json", fit.to_json())
    _write(out / "surface.csv", fit.surface_csv())
    _write(out / "coefficients.csv", coefficients_to_csv(fit.survivors))
    return ["fit.json", "surface.csv", "coefficients.csv"]


def cmd_eval(args, out: Path) -> list[str]:
    lg = _read_graph(args)
    if args.splits < 1:
        raise ValidationError("--splits must be at least 1")
    splits = [holdout_split(lg.n, args.fraction, derive_int(args.seed, "split", s)) for s in range(args.splits)]
    methods = {"WL": [], "HIST": [], "SBM": []}
    pooled = {m: ([], []) for m in methods}
    for sp in splits:
        y = sp.labels(lg)
        preds = {
            "WL": predict_wl(lg, sp, args.method, args.K, args.kappa),
            "HIST": baseline_histogram(lg, args.method, args.K, sp),
            "SBM": baseline_sbm(lg, args.sbm_blocks, sp, args.method),
        }
        for m, p in preds.items():
            methods[m].append(score_predictions(p, y, seed=sp.seed))
            pooled[m][0].append(p)
            pooled[m][1].append(y)
    lines = [METRIC_CSV_HEADER] + [summary_row(args.dataset, m, reps) for m, reps in methods.items()]
    _write(out / "metrics.csv", "\n".join(lines) + "\n")
    files = ["metrics.csv"]
    for m, (ps, ys) in pooled.items():
        rep = score_predictions(np.concatenate(ps), np.concatenate(ys), seed=args.seed)
        _write(out / f"reliability_{m}.csv", rep.reliability_csv())
        _write(out / f"pred_histogram_{m}.csv", rep.histogram_csv())
        files += [f"reliability_{m}.csv", f"pred_histogram_{m}.csv"]
    if args.sweep:
        cells = robustness_sweep(lg, _parse_scales(args.sweep_K) or (64, 128, 256), _parse_floats(args.sweep_kappa), splits, args.method)
        _write(out / "sweep.csv", sweep_csv(cells))
        files.append("sweep.csv")
    return files


def cmd_scan(args, out: Path) -> list[str]:
    lg = _read_graph(args)
    scales = _parse_scales(args.scales)
    thr = default_threshold(lg.n, args.C)
    if args.kernel:
        if lg.U is None:
            raise ValidationError("a scan against a known kernel needs --positions")
        rep = wavelet_scan(lg, _load_kernel(args.kernel), scales, thr)
    else:
        fit = fit_pipeline(lg, args.method, args.K, args.kappa)
        rep = residual_block_scan(lg, fit, scales, thr)
    _write(out / "scan.csv", rep.to_csv())
    _write(out / "scan.json", rep.to_json())
    return ["scan.csv", "scan.json"]


def cmd_tilt(args, out: Path) -> list[str]:
    if not args.kernel or not args.direction:
        raise ValidationError("--kernel and --direction are required")
    g0 = _load_kernel(args.kernel)
    direction = _tilt_from_json(_load_json(args.direction))
    ts = _parse_floats(args.ts)
    seeds = [derive_int(args.seed, "tilt", r) for r in range(args.reps)]
    rows = tilt_path_diagnostics(g0, direction, ts, args.n, seeds, threads=args.threads)
    _write(out / "tilt.csv", tilt_table_csv(rows))
    pairs = tuple(direction.as_coefficients().entries.keys())
    reports = []
    for t in ts:
        r = limiting_logmgf(g0, direction.scaled(t), args.gridsize, pairs=pairs)
        reports.append(
            {
                "t": t,
                "value": r.value,
                "gradient": r.gradient.tolist(),
                "hessian": r.hessian.tolist(),
                "min_eigenvalue": r.min_eigenvalue,
                "gridsize": r.gridsize,
            }
        )
    _write(out / "mgf.json", json.dumps(reports, indent=2) + "\n")
    return ["tilt.csv", "mgf.json"]


def cmd_phase(args, out: Path) -> list[str]:
    betas = _parse_floats(args.betas)
    J = len(betas)
    lines = ["multiplier,scale,delta,snr,error_mean,error_sd"]
    for mi, mult in enumerate(_parse_floats(args.multipliers)):
        b = [mult * v for v in betas]
        k = hierarchical_kernel(args.c, b)
        p_in, p_out = hierarchical_scale_probabilities(args.c, b)
        deltas = p_in - p_out
        errs = np.array(
            [
                hierarchical_classify(sample_graph(k, args.n, derive_int(args.seed, "phase", mi, r), threads=args.threads), J, deltas).errors
                for r in range(args.reps)
            ]
        )
        sd = errs.std(axis=0, ddof=1) if args.reps > 1 else np.zeros(J)
        for j in range(J):
            s = float(snr(args.n, j, float(p_in[j]), float(p_out[j])))
            lines.append(f"{mult!r},{j},{float(deltas[j])!r},{s!r},{float(errs[:, j].mean())!r},{float(sd[j])!r}")
    _write(out / "phase.csv", "\n".join(lines) + "\n")
    return ["phase.csv"]


def cmd_transform(args, out: Path) -> list[str]:
    if not args.input:
        raise ValidationError("--input is required")
    try:
        text = Path(args.input).read_text(encoding="utf-8")
    except FileNotFoundError as exc:
        raise ValidationError(f"file not found: {args.input}") from exc
    if args.inverse:
        entries = coefficients_from_csv(text)
        top = max([max(a.j, b.j) for a, b, _ in entries] + [-1])
        K = args.K or (1 << (top + 1))
        m = 1 << (top + 1)
        if K < m:
            raise ValidationError(f"--K must be at least {m}")
        v = np.zeros((m, m))
        for a, b, val in entries:
            v[a.flat, b.flat] = val
        grid = WaveletCoefficients(v).to_surface(K)
        _write(out / "grid.csv", "".join(",".join(repr(float(x)) for x in row) + "\n" for row in grid))
        return ["grid.csv"]
    grid = np.array([[float(x) for x in line.split(",")] for line in text.strip().splitlines()])
    wc = step_coefficients(grid)
    items = [(WaveletIndex.from_flat(r), WaveletIndex.from_flat(s), float(wc.values[r, s]))
             for r in range(wc.size) for s in range(wc.size)]
    _write(out / "coefficients.csv", coefficients_to_csv(items))
    return ["coefficients.csv"]


COMMANDS = {
    "sample": cmd_sample,
    "fit": cmd_fit,
    "eval": cmd_eval,
    "scan": cmd_scan,
    "tilt": cmd_tilt,
    "phase": cmd_phase,
    "transform": cmd_transform,
}


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="wlerg", description="Wavelet latent-position random graphs: sampling, fitting, scanning.")
    p.add_argument("--version", action="version", version=f"wlerg {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--out", default="out", help="output directory")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--threads", type=int, default=None, help="worker threads (outputs do not depend on it)")
        sp.add_argument("--config", help="manifest.json of an earlier run to replay")

    def graph_in(sp):
        sp.add_argument("--input", help="edge list, one 'i j' per line")
        sp.add_argument("--positions", help="CSV 'vertex,u' of latent positions")
        sp.add_argument("--n", type=int, default=None, help="vertex count (default: from the file)")

    def pipeline(sp):
        sp.add_argument("--method", choices=["degree", "fiedler", "latent"], default="degree")
        sp.add_argument("--K", type=int, default=128)
        sp.add_argument("--kappa", type=float, default=1.0)

    s = sub.add_parser("sample", help="draw a graph from a kernel spec")
    common(s)
    s.add_argument("--kernel", help="kernel spec JSON")
    s.add_argument("--n", type=int)

    s = sub.add_parser("fit", help="fit the thresholded logit surface")
    common(s)
    graph_in(s)
    pipeline(s)
    s.add_argument("--fraction", type=float, default=None, help="hold out this fraction of dyads before fitting")

    s = sub.add_parser("eval", help="held-out comparison against histogram and block-model baselines")
    common(s)
    graph_in(s)
    pipeline(s)
    s.add_argument("--fraction", type=float, default=0.1)
    s.add_argument("--splits", type=int, default=5)
    s.add_argument("--sbm-blocks", type=int, default=8)
    s.add_argument("--dataset", default="input")
    s.add_argument("--sweep", action="store_true", help="also run the K x kappa robustness sweep")
    s.add_argument("--sweep-K", default="64,128,256")
    s.add_argument("--sweep-kappa", default="0.5,1,2")

    s = sub.add_parser("scan", help="block scan against a known kernel or a fitted surface")
    common(s)
    graph_in(s)
    pipeline(s)
    s.add_argument("--kernel", help="baseline kernel spec; omit to scan residuals of a fit")
    s.add_argument("--scales", help="e.g. '3-7' or '3,5'")
    s.add_argument("--C", type=float, default=2.0, help="threshold C * sqrt(ln n)")

    s = sub.add_parser("tilt", help="densities and log-MGF along a tilt path")
    common(s)
    s.add_argument("--kernel", help="base kernel spec JSON")
    s.add_argument("--direction", help="tilt JSON {lam0, entries: [{j1,l1,j2,l2,value}]}")
    s.add_argument("--ts", default="-2:2:9", help="'a,b,c' or 'start:stop:count'")
    s.add_argument("--n", type=int, default=500)
    s.add_argument("--reps", type=int, default=5)
    s.add_argument("--gridsize", type=int, default=None)

    s = sub.add_parser("phase", help="per-scale error rates of the hierarchical classifier")
    common(s)
    s.add_argument("--n", type=int, default=1024)
    s.add_argument("--c", type=float, default=0.0)
    s.add_argument("--betas", default="0.4,0.1,0.02", help="per-scale coefficients")
    s.add_argument("--multipliers", default="0.25,0.5,1,2,4")
    s.add_argument("--reps", type=int, default=5)

    s = sub.add_parser("transform", help="2D Haar transform of a grid CSV, or its inverse")
    common(s)
    s.add_argument("--input")
    s.add_argument("--inverse", action="store_true", help="read 'j1,l1,j2,l2,value' and write a grid")
    s.add_argument("--K", type=int, default=None, help="output grid size for --inverse")
    return p


def _resolve(argv) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        manifest = _load_json(args.config)
        if manifest.get("command") != args.command:
            raise ValidationError(f"manifest is for '{manifest.get('command')}', not '{args.command}'")
        given = set()
        for tok in argv or []:
            if tok.startswith("--"):
                given.add(tok[2:].split("=")[0].replace("-", "_"))
        for k, v in manifest.get("config", {}).items():
            if k not in given and k != "command":
                setattr(args, k, v)
    return args


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = _resolve(argv)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        files = COMMANDS[args.command](args, out)
        _manifest(out, args, files)
    except SystemExit as exc:
        return int(exc.code or 0)
    except (ValidationError, ValueError) as exc:
        print(f"wlerg: error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        print(f"wlerg: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
