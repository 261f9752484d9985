"""Command-line front end: ``solve``, ``bench`` and ``export-field``.

Exit codes: 0 success, 2 invalid configuration, 3 numerical abort.
Set ``TNNMAXWELL_THREADS`` to cap the BLAS/LAPACK thread count.
"""
from __future__ import annotations

import os
import sys

_threads = os.environ.get("TNNMAXWELL_THREADS")
if _threads:
    # must happen before numpy loads its BLAS
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[_var] = _threads

import argparse
import csv
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .domains import BUILTINS, DomainError, DomainSpec, builtin, domain_from_dict, load_domain
from .training import EigenReport, TrainConfig, TrainingAbort, evaluate, train

log = logging.getLogger("tnnmaxwell")

EIGS_HEADER = ["k", "lambda_nn", "lambda_ref", "rel_err", "div_seminorm",
               "curl_seminorm", "rho", "spurious"]

EXIT_OK, EXIT_CONFIG, EXIT_ABORT = 0, 2, 3


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    domain: str | dict
    train: TrainConfig
    output_dir: str = "out"
    dimension: int | None = None
    base_dir: Path = field(default=Path("."), repr=False)

    def resolve_domain(self) -> DomainSpec:
        try:
            if isinstance(self.domain, dict):
                dom = domain_from_dict(self.domain)
            elif self.domain in BUILTINS:
                dom = builtin(self.domain)
            else:
                p = Path(self.domain)
                if not p.is_absolute():
                    p = self.base_dir / p
                if not p.exists():
                    raise ConfigError(f"unknown domain {self.domain!r}; choose from "
                                      f"{', '.join(BUILTINS)} or give a JSON file")
                dom = load_domain(p)
        except DomainError as exc:
            raise ConfigError(str(exc)) from exc
        if self.dimension is not None and self.dimension != dom.d:
            raise ConfigError(f"dimension {self.dimension} does not match domain "
                              f"{dom.name} (d={dom.d})")
        return dom

    def to_dict(self) -> dict:
        t = self.train.to_dict()
        return {
            "domain": self.domain,
            "dimension": self.dimension,
            "output_dir": self.output_dir,
            "rank": t.pop("rank"),
            "hidden": t.pop("hidden"),
            "activation": t.pop("activation"),
            "quadrature": {"panels": t.pop("panels"), "points": t.pop("points")},
            "train": t,
        }


def run_config_from_dict(data: dict, base_dir=".") -> RunConfig:
    """Build a RunConfig; a ``report.json`` is accepted via its config echo."""
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a JSON object")
    if "config" in data and "loss_history" in data:
        data = data["config"]
    data = dict(data)
    if "domain" not in data:
        raise ConfigError("configuration needs a 'domain'")
    train_opts = dict(data.pop("train", {}) or {})
    for key in ("rank", "hidden", "activation"):
        if key in data:
            train_opts[key] = data.pop(key)
    quad = data.pop("quadrature", None) or {}
    for key in ("panels", "points"):
        if key in quad:
            train_opts[key] = quad[key]
    domain = data.pop("domain")
    output_dir = data.pop("output_dir", "out")
    dimension = data.pop("dimension", None)
    if data:
        raise ConfigError(f"unknown configuration keys: {sorted(data)}")
    try:
        tc = TrainConfig.from_dict(train_opts)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid training options: {exc}") from exc
    return RunConfig(domain, tc, output_dir, dimension, Path(base_dir))


def load_run_config(path) -> RunConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
    return run_config_from_dict(data, path.parent)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    return repr(float(v))


def write_eigs_csv(report: EigenReport, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EIGS_HEADER)
        for e in report.entries:
            w.writerow([e.index + 1, _fmt(e.lam), _fmt(e.ref), _fmt(e.rel_err),
                        _fmt(e.div_seminorm), _fmt(e.curl_seminorm), _fmt(e.rho),
                        _fmt(e.spurious)])


def _json_float(v):
    if v is None:
        return None
    v = float(v)
    return v if np.isfinite(v) else ("inf" if v > 0 else "-inf" if v < 0 else "nan")


def report_dict(rc: RunConfig, report: EigenReport) -> dict:
    return {
        "config": rc.to_dict(),
        "runtime_seconds": report.runtime,
        "eigenpairs": [{"k": e.index + 1, "lambda_nn": e.lam, "lambda_ref": e.ref,
                        "rel_err": e.rel_err, "rho": _json_float(e.rho),
                        "div_seminorm": e.div_seminorm,
                        "curl_seminorm": e.curl_seminorm, "spurious": e.spurious}
                       for e in report.entries],
        "loss_history": report.loss_history,
        "log": [{k: _json_float(v) if isinstance(v, float) else v for k, v in line.items()}
                for line in report.log],
        "diagnostics": report.diagnostics,
    }


def cmd_solve(args) -> int:
    try:
        rc = load_run_config(args.config)
        domain = rc.resolve_domain()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.output or rc.output_dir)
    if not out.is_absolute() and args.output is None:
        out = rc.base_dir / out
    out.mkdir(parents=True, exist_ok=True)
    ckpt = out / "checkpoint.json"
    try:
        report = train(domain, rc.train, checkpoint=ckpt)
    except (TrainingAbort, np.linalg.LinAlgError) as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_ABORT
    write_eigs_csv(report, out / "eigs.csv")
    (out / "report.json").write_text(json.dumps(report_dict(rc, report), indent=1))
    for line in report.diagnostics:
        print(f"diagnostic: {line}", file=sys.stderr)
    kept = report.filtered[:8]
    print(f"{domain.name}: {len(report.filtered)} of {len(report.entries)} eigenpairs kept "
          f"({report.runtime:.1f} s)")
    for e in kept:
        ref = "" if e.ref is None else f"  ref {e.ref:.10g}  rel {e.rel_err:.2e}"
        print(f"  lambda {e.lam:.10g}{ref}  rho {e.rho:.2e}")
    print(f"wrote {out / 'eigs.csv'}, {out / 'report.json'}, {ckpt}")
    return EXIT_OK


def cmd_bench(args) -> int:
    from .bench import run_suite

    results = run_suite(args.suite, quick=args.quick)
    ok = all(r.passed for r in results)
    return EXIT_OK if ok else 1


def sample_grid(domain: DomainSpec, resolution: int):
    """Cell-centred uniform grid on the bounding box, masked to the domain."""
    axes = [a + (np.arange(resolution) + 0.5) * (b - a) / resolution
            for a, b in domain.bounding_box]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    return axes, pts, domain.contains(pts)


def field_samples(model, index: int, resolution: int):
    """Eigenfunction ``index`` (0-based) on the export grid: (points, E)."""
    from .fieldtnn import point_tables

    state = evaluate(model)
    U = state.result.vectors
    if not 0 <= index < U.shape[1]:
        raise IndexError(f"eigenpair index {index + 1} out of range 1..{U.shape[1]}")
    u = U[:, index]
    d = model.domain.d
    axes, pts, inside = sample_grid(model.domain, resolution)
    letters = "qrs"[:d]
    spec = "k," + ",".join("k" + c for c in letters) + "->" + letters
    E = np.zeros((d,) + (resolution,) * d)
    offsets = state.system.offsets
    for g, (f, ev) in enumerate(zip(model.fields, state.evals)):
        ug = u[offsets[g]:offsets[g + 1]]
        tabs = point_tables(f, ev.norms, axes)
        for i in range(d):
            E[i] += np.einsum(spec, ug, *[tabs[i][j].values for j in range(d)])
    E = E.reshape(d, -1).T
    return pts[inside], E[inside]


def cmd_export_field(args) -> int:
    from .io import load_checkpoint

    try:
        model, _, _ = load_checkpoint(args.checkpoint)
    except (OSError, ValueError, KeyError, DomainError) as exc:
        print(f"cannot read checkpoint: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.resolution < 1:
        print("resolution must be positive", file=sys.stderr)
        return EXIT_CONFIG
    try:
        pts, E = field_samples(model, args.index - 1, args.resolution)
    except IndexError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_CONFIG
    except TrainingAbort as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_ABORT
    d = pts.shape[1]
    out = Path(args.output) if args.output else \
        Path(args.checkpoint).with_name(f"field_{args.index}.csv")
    header = [f"x{j + 1}" for j in range(d)] + [f"E{j + 1}" for j in range(d)] + ["normE"]
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        norm = np.linalg.norm(E, axis=1)
        for x, e, n in zip(pts, E, norm):
            w.writerow([repr(float(v)) for v in (*x, *e, n)])
    print(f"wrote {len(pts)} samples to {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tnnmaxwell",
                                 description="Maxwell cavity eigenvalues with FieldTNN bases")
    ap.add_argument("-q", "--quiet", action="store_true", help="suppress progress lines")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="train on a configured cavity and report eigenpairs")
    s.add_argument("--config", required=True)
    s.add_argument("--output", help="output directory (overrides output_dir)")
    s.set_defaults(func=cmd_solve)

    b = sub.add_parser("bench", help="run benchmark suites with pass/fail lines")
    b.add_argument("--suite", required=True,
                   choices=["square", "lshape2d", "inhomogeneous", "cube", "lshape3d",
                            "all", "oracle"])
    b.add_argument("--quick", action="store_true",
                   help="short runs; pass/fail lines are informational")
    b.set_defaults(func=cmd_bench)

    e = sub.add_parser("export-field", help="sample an eigenfunction on a uniform grid")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--index", type=int, required=True, help="1-based row k of eigs.csv")
    e.add_argument("--resolution", type=int, required=True)
    e.add_argument("--output", help="CSV path (default next to the checkpoint)")
    e.set_defaults(func=cmd_export_field)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
