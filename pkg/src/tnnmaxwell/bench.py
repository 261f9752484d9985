"""Desk-scale benchmark suites with one pass/fail line per check."""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .domains import builtin, exact_eigenvalues, reference_table, relative_error
from .training import EigenReport, TrainConfig, train

# Shared training setup; per-suite overrides below.
DESK = dict(hidden=(40, 40), activation="sine", panels=16, points=8, lr=3e-4,
            steps=20000, beta=1.0, seed=0)

SUITES = {
    "square": dict(rank=20, tracked=4),
    "cube": dict(rank=24, tracked=4),
    # the singular first mode needs a smaller step than the smooth cavities
    "lshape2d": dict(rank=16, tracked=5, lr=1e-4),
    "inhomogeneous": dict(rank=16, tracked=6),
    "lshape3d": dict(rank=16, tracked=5),
}

QUICK_STEPS = 300


@dataclass
class BenchResult:
    name: str
    passed: bool
    detail: str
    seconds: float

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"{tag}  {self.name}: {self.detail} [{self.seconds:.1f} s]"


def desk_config(suite: str, quick: bool = False, **overrides) -> TrainConfig:
    kw = dict(DESK)
    kw.update(SUITES[suite])
    if quick:
        kw["steps"] = QUICK_STEPS
    kw.update(overrides)
    return TrainConfig(**kw)


def minmax_violations(report: EigenReport, exact) -> list[tuple[int, int, float]]:
    """(step, k, lam) for every logged tracked value below exact[k] - 1e-8."""
    out = []
    for line in report.log:
        lam = np.sort(line["tracked"])
        for k, v in enumerate(lam):
            if v < exact[k] - 1e-8:
                out.append((line["step"], k, float(v)))
    return out


def _rel(values, refs):
    return [relative_error(a, b) for a, b in zip(values, refs)]


def check_square(report: EigenReport, elapsed: float) -> list[BenchResult]:
    ex = exact_eigenvalues("square", 4)
    lam = report.eigenvalues()[:4]
    div = [e.div_seminorm for e in report.filtered[:4]]
    err = _rel(lam, ex)
    ok = len(lam) == 4 and max(err) < 1e-2 and max(div) < 1e-2
    res = [BenchResult("square: 4 smallest within 1e-2, div < 1e-2", ok,
                       f"rel err {np.array2string(np.array(err), precision=2)}, "
                       f"div {np.array2string(np.array(div), precision=2)}", elapsed)]
    viol = minmax_violations(report, exact_eigenvalues("square", 64))
    res.append(BenchResult("square: min-max bound at logged steps", not viol,
                           f"{len(viol)} violations"
                           + (f", first step {viol[0][0]} k={viol[0][1] + 1} "
                              f"lam={viol[0][2]:.8g}" if viol else ""), 0.0))
    return res


def check_cube(report: EigenReport, elapsed: float) -> list[BenchResult]:
    target = 2 * np.pi ** 2
    close = [e.lam for e in report.filtered if relative_error(e.lam, target) < 2e-2]
    return [BenchResult("cube: three eigenvalues within 2e-2 of 2 pi^2", len(close) >= 3,
                        f"{len(close)} found; smallest filtered "
                        f"{np.array2string(report.eigenvalues()[:4], precision=5)}",
                        elapsed)]


def check_lshape2d(report: EigenReport, elapsed: float) -> list[BenchResult]:
    ref = reference_table("lshape2d")
    lam = report.eigenvalues()
    ok1 = lam.size >= 1 and relative_error(lam[0], ref[0]) < 5e-2
    ok34 = lam.size >= 4 and all(relative_error(v, np.pi ** 2) < 1e-2 for v in lam[2:4])
    return [BenchResult("lshape2d: first within 5e-2", bool(ok1),
                        f"lam1 {lam[0] if lam.size else float('nan'):.8g}", elapsed),
            BenchResult("lshape2d: modes 3, 4 within 1e-2 of pi^2", bool(ok34),
                        f"lam3,4 {np.array2string(lam[2:4], precision=6)}", 0.0)]


def _table_report(name):
    def check(report: EigenReport, elapsed: float) -> list[BenchResult]:
        ref = reference_table(name)
        lam = report.eigenvalues()[:len(ref)]
        err = _rel(lam, ref)
        # no acceptance target: report the error table, pass if the run completed
        return [BenchResult(f"{name}: relative errors vs benchmark", bool(lam.size),
                            np.array2string(np.array(err), precision=2), elapsed)]
    return check


CHECKS = {
    "square": check_square,
    "cube": check_cube,
    "lshape2d": check_lshape2d,
    "inhomogeneous": _table_report("inhomogeneous"),
    "lshape3d": _table_report("lshape3d"),
}


def run_training_suite(suite: str, quick: bool = False) -> list[BenchResult]:
    cfg = desk_config(suite, quick)
    t0 = time.perf_counter()
    report = train(builtin(suite), cfg)
    return CHECKS[suite](report, time.perf_counter() - t0)


def run_oracle_suite() -> list[BenchResult]:
    from . import oracle
    from .geig import solve_generalized

    out = []
    ok, detail, t = oracle.check_square_oracle()
    out.append(BenchResult("oracle square spectrum (1e-9)", bool(ok), detail, t))
    ok, detail, t = oracle.check_spurious_oracle()
    out.append(BenchResult("oracle spurious filter", bool(ok), detail, t))

    t0 = time.perf_counter()
    from .training import build_model, evaluate
    worst = 0.0
    for seed in range(5):
        cfg = TrainConfig(rank=4, tracked=1, hidden=(6,), panels=2, points=5, seed=seed)
        for name in ("square", "inhomogeneous"):
            m = build_model(builtin(name), cfg)
            st = evaluate(m)
            ref = oracle.brute_force_forms([e.tables for e in st.evals], m.axes, m.tiles)
            for A, B in zip((st.system.S, st.system.M, st.system.D), ref):
                worst = max(worst, np.abs(A - B).max() / np.abs(B).max())
    out.append(BenchResult("factorized vs brute-force assembly (1e-11)", worst < 1e-11,
                           f"max rel diff {worst:.1e}", time.perf_counter() - t0))

    t0 = time.perf_counter()
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(200):
        p = int(rng.integers(1, 9))
        A = rng.standard_normal((p, p))
        B = rng.standard_normal((p, p))
        S = A @ A.T + 0.1 * np.eye(p)
        M = B @ B.T + 0.5 * np.eye(p)
        r = solve_generalized(S, M)
        U = r.vectors
        ortho = np.abs(U.T @ M @ U - np.eye(p)).max()
        scale = np.linalg.norm(S, 2) + np.abs(r.values) * np.linalg.norm(M, 2)
        resid = (np.linalg.norm(S @ U - (M @ U) * r.values, axis=0) / scale).max()
        worst = max(worst, ortho, resid)
    out.append(BenchResult("eigensolver residual / M-orthogonality (1e-8)", worst < 1e-8,
                           f"worst {worst:.1e}", time.perf_counter() - t0))
    return out


def run_suite(name: str, quick: bool = False, echo: bool = True) -> list[BenchResult]:
    names = ["oracle", *SUITES] if name == "all" else [name]
    results = []
    for n in names:
        t0 = time.perf_counter()
        rs = run_oracle_suite() if n == "oracle" else run_training_suite(n, quick)
        if echo:
            for r in rs:
                print(r.line(), flush=True)
            if name == "all":
                print(f"suite {n}: {time.perf_counter() - t0:.1f} s", flush=True)
        results.extend(rs)
    if quick and echo and name != "oracle":
        print(f"(quick mode: {QUICK_STEPS} steps, pass/fail lines are informational)")
    return results
