"""Vector fields built from d x d one-dimensional factor sources.

Basis function ``k`` of a field has components

    E_i,k(x) = prod_j phi_{i,j,k}(x_j),

where ``phi_{i,j}`` is the output of factor source ``(i, j)`` multiplied by an
envelope (boundary mask / support indicator) and then normalized on the
quadrature grid of axis ``j``. Indices are 0-based throughout.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .subnet import (FactorTable, Subnetwork, TabulatedFactor, _backward,
                     _forward, init_subnet, normalize, normalize_backward)

ENVELOPES = ("none", "sin", "poly", "indicator")


def envelope(kind: str, x, a: float, b: float):
    """Envelope value and derivative on ``x``; all kinds vanish outside [a, b]."""
    x = np.asarray(x, dtype=float)
    if kind == "none":
        return np.ones_like(x), np.zeros_like(x)
    inside = (x >= a) & (x <= b)
    if kind == "indicator":
        return inside.astype(float), np.zeros_like(x)
    if kind == "sin":
        L = b - a
        g = np.sin(np.pi * (x - a) / L)
        dg = (np.pi / L) * np.cos(np.pi * (x - a) / L)
    elif kind == "poly":
        g = (x - a) * (b - x)
        dg = a + b - 2.0 * x
    else:
        raise ValueError(f"unknown envelope {kind!r}")
    return g * inside, dg * inside


@dataclass(frozen=True)
class BoundaryMask:
    """PEC mask: component i carries gamma_j(x_j) for every j != i."""

    intervals: tuple[tuple[float, float], ...]
    kind: str = "sin"

    def __post_init__(self):
        if self.kind not in ("sin", "poly"):
            raise ValueError(f"mask kind must be 'sin' or 'poly', got {self.kind!r}")

    def gamma(self, j: int, x):
        a, b = self.intervals[j]
        return envelope(self.kind, x, a, b)

    def envelopes(self) -> list[list[str]]:
        d = len(self.intervals)
        return [["none" if i == j else self.kind for j in range(d)]
                for i in range(d)]


@dataclass
class FieldTNN:
    """``factors[i][j]`` produces the p factors of component i along axis j."""

    factors: list[list[Subnetwork | TabulatedFactor]]
    box: tuple[tuple[float, float], ...]
    envelopes: list[list[str]] = None
    u: np.ndarray | None = None

    def __post_init__(self):
        d = len(self.factors)
        if d not in (2, 3) or any(len(row) != d for row in self.factors):
            raise ValueError("factors must be a d x d array with d in {2, 3}")
        if len(self.box) != d:
            raise ValueError("box dimension does not match factors")
        ranks = {f.rank for row in self.factors for f in row}
        if len(ranks) != 1:
            raise ValueError(f"all factor sources must share the rank, got {ranks}")
        if self.envelopes is None:
            self.envelopes = [["none"] * d for _ in range(d)]
        for row in self.envelopes:
            for e in row:
                if e not in ENVELOPES:
                    raise ValueError(f"unknown envelope {e!r}")

    @property
    def d(self) -> int:
        return len(self.factors)

    @property
    def rank(self) -> int:
        return self.factors[0][0].rank

    def nets(self) -> list[Subnetwork]:
        return [f for row in self.factors for f in row if isinstance(f, Subnetwork)]

    def parameters(self) -> list[np.ndarray]:
        return [p for n in self.nets() for p in n.parameters()]


def apply_boundary_mask(field: FieldTNN, mask: BoundaryMask) -> FieldTNN:
    d = field.d
    if len(mask.intervals) != d:
        raise ValueError("mask dimension does not match field")
    for (a, b), (ba, bb) in zip(mask.intervals, field.box):
        if abs(a - ba) > 1e-12 or abs(b - bb) > 1e-12:
            raise ValueError("mask intervals must match the field box")
    env = [[field.envelopes[i][j] for j in range(d)] for i in range(d)]
    for i in range(d):
        for j in range(d):
            if i != j:
                if env[i][j] != "none":
                    raise ValueError(f"slot ({i},{j}) already carries an envelope")
                env[i][j] = mask.kind
    return FieldTNN(field.factors, field.box, env, field.u)


def tensor_field(box, rank: int, hidden: Sequence[int], seed: int,
                 activation: str = "sine", mask: str = "sin") -> FieldTNN:
    """Random FieldTNN on a box with PEC boundary mask."""
    d = len(box)
    rng = np.random.default_rng(seed)
    sizes = (1, *hidden, rank)
    nets = [[init_subnet(sizes, seed, activation, rng=rng) for _ in range(d)]
            for _ in range(d)]
    f = FieldTNN(nets, tuple(tuple(map(float, iv)) for iv in box))
    return apply_boundary_mask(f, BoundaryMask(f.box, mask))


def support_field(box, rank: int, hidden: Sequence[int], seed: int,
                  activation: str = "sine", mode: str = "tangential") -> FieldTNN:
    """Random FieldTNN compactly supported on ``box``.

    ``mode='full'`` gives every factor the clamp + (x-a)(b-x) construction, so
    all components vanish on the whole box boundary. ``mode='tangential'``
    keeps that for the tangential directions only; the factor of component i
    along its own axis is clamped and cut off by an indicator, so the normal
    component may be nonzero on the box faces (still H(curl)-conforming).
    """
    d = len(box)
    rng = np.random.default_rng(seed)
    sizes = (1, *hidden, rank)
    nets, env = [], []
    for i in range(d):
        row, erow = [], []
        for j in range(d):
            iv = tuple(map(float, box[j]))
            if mode == "full" or i != j:
                row.append(init_subnet(sizes, seed, activation, support=iv,
                                       clamp=True, poly=True, rng=rng))
                erow.append("none")
            elif mode == "tangential":
                row.append(init_subnet(sizes, seed, activation, support=iv,
                                       clamp=True, poly=False, rng=rng))
                erow.append("indicator")
            else:
                raise ValueError(f"unknown support mode {mode!r}")
        nets.append(row)
        env.append(erow)
    return FieldTNN(nets, tuple(tuple(map(float, iv)) for iv in box), env)


@dataclass
class _SlotCache:
    raw: FactorTable
    normalized: FactorTable | None
    env: np.ndarray
    denv: np.ndarray
    net_cache: object = None


@dataclass
class FieldEvaluation:
    """Normalized factor tables of one field on a set of axis grids."""

    tables: list[list[FactorTable]]
    caches: list[list[_SlotCache]] = field(repr=False, default=None)

    @property
    def norms(self) -> list[list[np.ndarray | None]]:
        return [[t.norms for t in row] for row in self.tables]


def _slot_raw(source, nodes, kind, interval):
    if isinstance(source, Subnetwork):
        tab, cache = _forward(source, nodes)
    else:
        tab, cache = source.table(nodes), None
    g, dg = envelope(kind, nodes, *interval)
    vals = tab.values * g
    ders = tab.derivatives * g + tab.values * dg
    return FactorTable(vals, ders), g, dg, cache


def _wants_norm(source) -> bool:
    return isinstance(source, Subnetwork) or bool(getattr(source, "normalize", False))


def evaluate_tables(field: FieldTNN, axes) -> FieldEvaluation:
    """Normalized tables phi_{i,j} (values and d/dx_j) on each axis grid."""
    d = field.d
    if len(axes) != d:
        raise ValueError("grid dimension does not match field")
    tables, caches = [], []
    for i in range(d):
        trow, crow = [], []
        for j in range(d):
            src = field.factors[i][j]
            raw, g, dg, nc = _slot_raw(src, axes[j].nodes, field.envelopes[i][j],
                                       field.box[j])
            normed = normalize(raw, axes[j].weights) if _wants_norm(src) else None
            trow.append(normed if normed is not None else raw)
            crow.append(_SlotCache(raw, normed, g, dg, nc))
        tables.append(trow)
        caches.append(crow)
    return FieldEvaluation(tables, caches)


def eval_component_tables(field: FieldTNN, axes) -> list[list[FactorTable]]:
    return evaluate_tables(field, axes).tables


def backward_tables(field: FieldTNN, ev: FieldEvaluation, axes, adj_values,
                    adj_derivatives) -> list[list[list[np.ndarray] | None]]:
    """Parameter gradients from adjoints on the normalized tables.

    Returns ``grads[i][j]`` in ``Subnetwork.parameters()`` order, or None for
    parameter-free sources.
    """
    d = field.d
    out = []
    for i in range(d):
        row = []
        for j in range(d):
            src = field.factors[i][j]
            c = ev.caches[i][j]
            if not isinstance(src, Subnetwork):
                row.append(None)
                continue
            gv, gd = adj_values[i][j], adj_derivatives[i][j]
            if c.normalized is not None:
                gv, gd = normalize_backward(c.raw, c.normalized, axes[j].weights, gv, gd)
            # raw = net * g, raw' = net' * g + net * g'
            g_net = gv * c.env + gd * c.denv
            g_dnet = gd * c.env
            row.append(_backward(src, c.net_cache, g_net, g_dnet))
        out.append(row)
    return out


def point_tables(field: FieldTNN, norms, coords) -> list[list[FactorTable]]:
    """Factor tables at arbitrary coordinates using grid-derived ``norms``."""
    d = field.d
    out = []
    for i in range(d):
        row = []
        for j in range(d):
            src = field.factors[i][j]
            raw, _, _, _ = _slot_raw(src, np.asarray(coords[j], dtype=float),
                                     field.envelopes[i][j], field.box[j])
            n = norms[i][j]
            if n is not None:
                raw = FactorTable(raw.values / n[:, None], raw.derivatives / n[:, None], n)
            row.append(raw)
        out.append(row)
    return out


@dataclass
class Factored:
    """Sum of separable terms ``coef * prod_j factors[j]`` per basis index.

    Each factor array has shape (p, Q_j). ``materialize`` expands onto the
    tensor grid; keep it to small grids.
    """

    terms: list[tuple[float, list[np.ndarray]]]

    def materialize(self, u=None) -> np.ndarray:
        d = len(self.terms[0][1])
        letters = "qrs"[:d]
        if u is None:
            spec = ",".join("k" + c for c in letters) + "->k" + letters
            out = sum(c * np.einsum(spec, *fs) for c, fs in self.terms)
        else:
            u = np.asarray(u, dtype=float)
            spec = "k," + ",".join("k" + c for c in letters) + "->" + letters
            out = sum(c * np.einsum(spec, u, *fs) for c, fs in self.terms)
        return out

    def __add__(self, other: "Factored") -> "Factored":
        return Factored(self.terms + other.terms)


def _pick(tables, i, j, deriv):
    t = tables[i][j]
    return t.derivatives if deriv else t.values


def curl_terms(d: int) -> list[list[tuple[float, int, int]]]:
    """Curl components as lists of (sign, component, derivative axis)."""
    if d == 2:
        return [[(1.0, 1, 0), (-1.0, 0, 1)]]
    if d == 3:
        return [[(1.0, 2, 1), (-1.0, 1, 2)],
                [(1.0, 0, 2), (-1.0, 2, 0)],
                [(1.0, 1, 0), (-1.0, 0, 1)]]
    raise ValueError("d must be 2 or 3")


def div_terms(d: int) -> list[list[tuple[float, int, int]]]:
    return [[(1.0, i, i) for i in range(d)]]


def value_terms(d: int) -> list[list[tuple[float, int, int | None]]]:
    return [[(1.0, i, None)] for i in range(d)]


def _factored(tables, expr) -> Factored:
    d = len(tables)
    terms = []
    for c, i, s in expr:
        terms.append((c, [_pick(tables, i, j, j == s) for j in range(d)]))
    return Factored(terms)


def eval_divergence(field: FieldTNN | None, axes=None, tables=None) -> Factored:
    if tables is None:
        tables = eval_component_tables(field, axes)
    return _factored(tables, div_terms(len(tables))[0])


def eval_curl(field: FieldTNN | None, axes=None, tables=None):
    """Scalar curl (d=2) or the three curl components (d=3), factored."""
    if tables is None:
        tables = eval_component_tables(field, axes)
    exprs = [_factored(tables, e) for e in curl_terms(len(tables))]
    return exprs[0] if len(tables) == 2 else exprs


def eval_values(field: FieldTNN | None, axes=None, tables=None) -> list[Factored]:
    if tables is None:
        tables = eval_component_tables(field, axes)
    return [_factored(tables, e) for e in value_terms(len(tables))]
