"""Loss, gradients and the training loops for tensor and decomposed cavities.

One step: evaluate all factor tables, assemble S, M, D, solve the generalized
eigenproblem, pick the tracked eigenpairs by their single loss
``lam + beta * rho``, and push the loss back to subnetwork parameters.

Gradient of the eigenvalue part is exact (sensitivity ``u^T (dS - lam dM) u``,
cluster-averaged for degenerate eigenvalues). In the ``rho`` part the
eigenvectors are held fixed; only D and S are differentiated.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from . import assembly
from .domains import DomainSpec, reference_spectrum, relative_error
from .fieldtnn import (FieldTNN, backward_tables, evaluate_tables,
                       support_field, tensor_field)
from .geig import (CLUSTER_TOL, ClusteredEigenvalueError, EigenResult, clusters,
                   solve_generalized)
from .quadrature import axis_grid
from .subnet import DegenerateFactorError

log = logging.getLogger(__name__)

SENTINEL = math.inf


class TrainingAbort(RuntimeError):
    """Numerical failure that ends a run (degenerate basis, singular mass)."""


@dataclass
class TrainConfig:
    rank: int = 20
    tracked: int = 6
    beta: float = 1.0
    lr: float = 3e-4
    steps: int = 1000
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    cluster_tol: float = CLUSTER_TOL
    cluster_mode: bool = True
    rho_star: float = 10.0
    report_every: int = 500
    hidden: tuple[int, ...] = (40, 40)
    activation: str = "sine"
    panels: int = 16          # per unit length
    points: int = 8
    mask: str = "sin"
    support_mode: str = "tangential"
    use_unions: bool = True
    tau: float = 1e-12

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        if self.rank < 1:
            raise ValueError("rank must be positive")
        if not 1 <= self.tracked <= self.rank:
            raise ValueError("tracked count must lie in [1, rank]")
        if not self.lr > 0:
            raise ValueError("learning rate must be positive")
        if self.steps < 0:
            raise ValueError("steps must be non-negative")
        if self.beta < 0:
            raise ValueError("beta must be non-negative")
        if not self.hidden or any(h < 1 for h in self.hidden):
            raise ValueError("need at least one hidden layer of positive width")
        if self.panels < 1 or self.points < 1:
            raise ValueError("quadrature panels/points must be positive")
        if self.support_mode not in ("tangential", "full"):
            raise ValueError(f"unknown support mode {self.support_mode!r}")
        if self.mask not in ("sin", "poly"):
            raise ValueError(f"unknown mask {self.mask!r}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown training options: {sorted(unknown)}")
        return cls(**d)


# ---------------------------------------------------------------- model


@dataclass
class Model:
    domain: DomainSpec
    config: TrainConfig
    axes: list
    tiles: list
    fields: list[FieldTNN]

    def parameters(self) -> list[np.ndarray]:
        return [p for f in self.fields for p in f.parameters()]


def make_axes(domain: DomainSpec, config: TrainConfig):
    return [axis_grid(bp, config.panels, config.points) for bp in domain.breakpoints]


def build_model(domain: DomainSpec, config: TrainConfig, fields_=None) -> Model:
    if not config.use_unions and domain.union_groups:
        domain = domain.without_unions()
    axes = make_axes(domain, config)
    tiles = assembly.domain_tiles(domain, axes)
    if fields_ is None:
        fields_ = []
        for g, grp in enumerate(domain.groups):
            p = grp.rank or config.rank
            seed = config.seed * 1000 + g
            if domain.kind == "tensor":
                fields_.append(tensor_field(grp.box, p, config.hidden, seed,
                                            config.activation, config.mask))
            else:
                fields_.append(support_field(grp.box, p, config.hidden, seed,
                                             config.activation, config.support_mode))
    return Model(domain, config, axes, tiles, list(fields_))


@dataclass
class StepState:
    evals: list
    system: assembly.SpectralSystem
    result: EigenResult
    rho: np.ndarray
    num: np.ndarray
    den: np.ndarray


def filter_ratio(u, D, S, floor: float | None = None) -> float:
    """div-seminorm^2 / curl-seminorm^2 of the field with coefficients ``u``.

    Returns +inf when the curl part is below ``floor`` (default
    1e-12 * trace(S) / p): such a field is curl-free, hence spurious.
    """
    u = np.asarray(u, dtype=float)
    S = np.asarray(S)
    if floor is None:
        floor = 1e-12 * abs(np.trace(S)) / S.shape[0]
    den = float(u @ S @ u)
    if den < floor:
        return SENTINEL
    return float(u @ np.asarray(D) @ u) / den


def _ratios(result: EigenResult, system):
    U = result.vectors
    num = np.einsum("ik,ij,jk->k", U, system.D, U)
    den = np.einsum("ik,ij,jk->k", U, system.S, U)
    floor = 1e-12 * abs(np.trace(system.S)) / system.size
    rho = np.where(den < floor, SENTINEL, num / np.where(den < floor, 1.0, den))
    return rho, num, den


def evaluate(model: Model) -> StepState:
    try:
        evals = [evaluate_tables(f, model.axes) for f in model.fields]
    except DegenerateFactorError as exc:
        raise TrainingAbort(f"degenerate factor: {exc}") from exc
    system = assembly.assemble_system([e.tables for e in evals], model.axes, model.tiles)
    try:
        result = solve_generalized(system.S, system.M, model.config.tau)
    except np.linalg.LinAlgError as exc:
        raise TrainingAbort(f"generalized eigensolve failed: {exc}") from exc
    if result.discarded > system.size / 2:
        raise TrainingAbort(
            f"degenerate basis: mass stabilization discarded {result.discarded} "
            f"of {system.size} directions")
    rho, num, den = _ratios(result, system)
    return StepState(evals, system, result, rho, num, den)


# ---------------------------------------------------------------- loss


def select_tracked(lams, rhos, beta: float, count: int) -> list[int]:
    """Indices of the ``count`` smallest single losses, sentinel entries excluded."""
    lams = np.asarray(lams, dtype=float)
    rhos = np.asarray(rhos, dtype=float)
    finite = np.flatnonzero(np.isfinite(rhos))
    single = lams[finite] + beta * rhos[finite]
    order = finite[np.argsort(single, kind="stable")]
    return sorted(order[:count].tolist())


def loss(lams, rhos, beta: float, count: int) -> float:
    idx = select_tracked(lams, rhos, beta, count)
    lams = np.asarray(lams, dtype=float)
    rhos = np.asarray(rhos, dtype=float)
    return float(np.sum(lams[idx] + beta * rhos[idx]))


def matrix_adjoints(state: StepState, tracked, beta: float,
                    cluster_tol: float = CLUSTER_TOL, cluster_mode: bool = True):
    """Adjoints of the loss on S, M, D."""
    res = state.result
    U, lam = res.vectors, res.values
    P = U.shape[0]
    GS = np.zeros((P, P))
    GM = np.zeros((P, P))
    GD = np.zeros((P, P))
    tracked = set(tracked)
    for c in clusters(lam, cluster_tol):
        hit = [k for k in c if k in tracked]
        if not hit:
            continue
        if len(c) > 1 and not cluster_mode:
            raise ClusteredEigenvalueError(
                f"tracked eigenvalues {hit} lie in cluster {c}")
        # derivative of (hits / size) * (sum over the cluster)
        w = len(hit) / len(c)
        lam_bar = float(np.mean(lam[c]))
        Uc = U[:, c]
        UU = Uc @ Uc.T
        GS += w * UU
        GM -= w * lam_bar * UU
    if beta:
        for k in tracked:
            u = U[:, k]
            uu = np.outer(u, u)
            GD += beta * uu / state.den[k]
            GS -= beta * state.rho[k] * uu / state.den[k]
    return GS, GM, GD


def loss_gradient(model: Model, state: StepState, tracked, beta: float,
                  cluster_tol: float | None = None) -> list[np.ndarray]:
    """Gradient of the tracked loss w.r.t. ``model.parameters()``."""
    cfg = model.config
    tol = cfg.cluster_tol if cluster_tol is None else cluster_tol
    GS, GM, GD = matrix_adjoints(state, tracked, beta, tol, cfg.cluster_mode)
    sys = state.system
    Tbar = assembly.form_backward(sys.tables, model.tiles, GS, GM, GD)
    Fbar = assembly.backward_integral_tables(sys.basis, model.axes, Tbar)
    d = model.domain.d
    per_group = assembly.unstack_adjoints(Fbar, sys.offsets, d)
    grads = []
    for f, ev, (gv, gd) in zip(model.fields, state.evals, per_group):
        g = backward_tables(f, ev, model.axes, gv, gd)
        for i in range(d):
            for j in range(d):
                if g[i][j] is not None:
                    grads.extend(g[i][j])
    return grads


# ---------------------------------------------------------------- adam


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def zeros(cls, params) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


def adam_step(params, grads, state: AdamState, lr: float, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> bool:
    """In-place Adam update with bias correction.

    Returns False (and leaves everything untouched) on a non-finite gradient.
    """
    if len(params) != len(grads):
        raise ValueError("parameter/gradient count mismatch")
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise ValueError(f"shape mismatch {p.shape} vs {g.shape}")
        if not np.all(np.isfinite(g)):
            return False
    state.t += 1
    bc1 = 1.0 - beta1 ** state.t
    bc2 = 1.0 - beta2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
    return True


# ---------------------------------------------------------------- report


@dataclass
class EigenEntry:
    index: int
    lam: float
    rho: float
    div_seminorm: float
    curl_seminorm: float
    spurious: bool
    ref: float | None = None
    rel_err: float | None = None


@dataclass
class EigenReport:
    entries: list[EigenEntry]
    filtered: list[EigenEntry]
    loss_history: list[float] = field(default_factory=list)
    log: list[dict] = field(default_factory=list)
    diagnostics: list[str] = field(default_factory=list)
    runtime: float = 0.0
    model: Model | None = field(default=None, repr=False)
    state: StepState | None = field(default=None, repr=False)

    def eigenvalues(self, filtered: bool = True) -> np.ndarray:
        rows = self.filtered if filtered else self.entries
        return np.array([e.lam for e in rows])


def filter_spurious(report: EigenReport, rho_star: float) -> EigenReport:
    """Mark and drop entries with rho > rho_star (or the curl-free sentinel)."""
    entries = [replace(e, spurious=bool(not np.isfinite(e.rho) or e.rho > rho_star),
                       ref=None, rel_err=None) for e in report.entries]
    kept = [e for e in entries if not e.spurious]
    return replace(report, entries=entries, filtered=kept)


def attach_reference(report: EigenReport, domain: DomainSpec) -> EigenReport:
    ref = reference_spectrum(domain, max(1, len(report.filtered)))
    if ref is None:
        return report
    byidx = {}
    for e, r in zip(report.filtered, ref):
        byidx[e.index] = (float(r), relative_error(e.lam, float(r)))
    entries = [replace(e, ref=byidx.get(e.index, (None, None))[0],
                       rel_err=byidx.get(e.index, (None, None))[1])
               for e in report.entries]
    kept = [e for e in entries if not e.spurious]
    return replace(report, entries=entries, filtered=kept)


def postprocess(model: Model, state: StepState | None = None, **extra) -> EigenReport:
    """Final generalized solve and per-pair diagnostics."""
    if state is None:
        state = evaluate(model)
    res = state.result
    rows = []
    for k in range(len(res)):
        rows.append(EigenEntry(
            index=k, lam=float(res.values[k]), rho=float(state.rho[k]),
            div_seminorm=float(np.sqrt(max(state.num[k], 0.0))),
            curl_seminorm=float(np.sqrt(max(state.den[k], 0.0))),
            spurious=False))
    rep = EigenReport(rows, rows, model=model, state=state, **extra)
    rep.diagnostics.extend(res.warnings)
    rep = filter_spurious(rep, model.config.rho_star)
    return attach_reference(rep, model.domain)


# ---------------------------------------------------------------- loops


def _log_line(step, value, lam, rho, tracked):
    t_l = lam[tracked]
    t_r = rho[tracked]
    return {
        "step": step,
        "loss": value,
        "tracked": [float(v) for v in t_l],
        "rho_min": float(t_r.min()) if t_r.size else float("nan"),
        "rho_max": float(t_r.max()) if t_r.size else float("nan"),
    }


def train(domain: DomainSpec, config: TrainConfig, model: Model | None = None,
          adam: AdamState | None = None, start_step: int = 0,
          checkpoint=None, callback=None) -> EigenReport:
    """Adam training of all group subnetworks, then post-processing."""
    t0 = time.perf_counter()
    if model is None:
        model = build_model(domain, config)
    params = model.parameters()
    if adam is None:
        adam = AdamState.zeros(params)
    history, logs, diags = [], [], []
    cfg = model.config
    state = None
    for step in range(start_step, cfg.steps):
        state = evaluate(model)
        lam, rho = state.result.values, state.rho
        tracked = select_tracked(lam, rho, cfg.beta, cfg.tracked)
        if len(tracked) < cfg.tracked:
            diags.append(f"step {step}: only {len(tracked)} finite-rho eigenpairs tracked")
        value = float(np.sum(lam[tracked] + cfg.beta * rho[tracked]))
        history.append(value)
        if step % cfg.report_every == 0:
            line = _log_line(step, value, lam, rho, tracked)
            logs.append(line)
            log.info("step %d loss %.10g lam %s rho [%.3g, %.3g]", step, value,
                     " ".join(f"{v:.8g}" for v in line["tracked"]),
                     line["rho_min"], line["rho_max"])
            if callback is not None:
                callback(step, state, tracked)
        grads = loss_gradient(model, state, tracked, cfg.beta)
        if not adam_step(params, grads, adam, cfg.lr, cfg.adam_beta1,
                         cfg.adam_beta2, cfg.adam_eps):
            diags.append(f"step {step}: non-finite gradient, update skipped")
        if checkpoint is not None and (step + 1) % cfg.report_every == 0:
            from .io import save_checkpoint
            save_checkpoint(checkpoint, model, adam, step + 1)
    state = evaluate(model)
    if cfg.steps > 0:
        lam, rho = state.result.values, state.rho
        tracked = select_tracked(lam, rho, cfg.beta, cfg.tracked)
        logs.append(_log_line(cfg.steps, float(np.sum(lam[tracked] + cfg.beta * rho[tracked])),
                              lam, rho, tracked))
    report = postprocess(model, state, loss_history=history, log=logs,
                         diagnostics=diags)
    report.runtime = time.perf_counter() - t0
    if checkpoint is not None:
        from .io import save_checkpoint
        save_checkpoint(checkpoint, model, adam, cfg.steps)
    return report


def train_tensor(domain: DomainSpec, config: TrainConfig, **kw) -> EigenReport:
    if domain.kind != "tensor":
        raise ValueError(f"{domain.name} is not a tensor-product domain")
    return train(domain, config, **kw)


def train_decomposed(domain: DomainSpec, config: TrainConfig, **kw) -> EigenReport:
    if domain.kind != "decomposed":
        raise ValueError(f"{domain.name} has no box decomposition")
    return train(domain, config, **kw)
