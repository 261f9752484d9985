"""Stiffness, mass and divergence-Gram matrices from 1D factor integrals.

Every bilinear form here is a sum over separable terms, so an entry is a sum
of products of one-dimensional integrals. For each axis ``j`` and each
segment ``e`` of that axis we precompute

    T[j][e][a, b, k, l] = sum_q w_q F_j[a, k, q] F_j[b, l, q]    (q in e)

where ``a = 2*i + deriv`` selects component ``i`` and whether the factor is
differentiated. A tile (a box cell with its material) contributes the product
of its segments' tables.

2D curl-curl, with c = d1 E2 - d2 E1:

    s_kl = (d1E2_k, d1E2_l) + (d2E1_k, d2E1_l) - (d1E2_k, d2E1_l) - (d2E1_k, d1E2_l)

each inner product factorizing over x1 and x2.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .fieldtnn import curl_terms, div_terms, value_terms


def slot(i: int, deriv: bool) -> int:
    return 2 * i + (1 if deriv else 0)


@dataclass
class BasisTables:
    """Stacked factor tables of the global basis, one array per axis.

    ``F[j]`` has shape (2d, P, Q_j); group ``g`` occupies rows
    ``offsets[g]:offsets[g+1]``.
    """

    F: list[np.ndarray]
    offsets: list[int]

    @property
    def d(self) -> int:
        return len(self.F)

    @property
    def size(self) -> int:
        return self.F[0].shape[1]


def stack_tables(group_tables, axes) -> BasisTables:
    """``group_tables[g][i][j]`` are FactorTables aligned to ``axes[j]``."""
    d = len(axes)
    ranks = [gt[0][0].rank for gt in group_tables]
    offsets = [0]
    for r in ranks:
        offsets.append(offsets[-1] + r)
    P = offsets[-1]
    F = [np.zeros((2 * d, P, axes[j].size)) for j in range(d)]
    for g, gt in enumerate(group_tables):
        sl = slice(offsets[g], offsets[g + 1])
        for i in range(d):
            for j in range(d):
                F[j][slot(i, False), sl] = gt[i][j].values
                F[j][slot(i, True), sl] = gt[i][j].derivatives
    return BasisTables(F, offsets)


def unstack_adjoints(Fbar, offsets, d):
    """Split per-axis adjoints into ``[g][i][j]`` (values, derivatives) pairs."""
    out = []
    for g in range(len(offsets) - 1):
        sl = slice(offsets[g], offsets[g + 1])
        gv = [[Fbar[j][slot(i, False), sl] for j in range(d)] for i in range(d)]
        gd = [[Fbar[j][slot(i, True), sl] for j in range(d)] for i in range(d)]
        out.append((gv, gd))
    return out


@dataclass
class IntegralTables:
    """``T[j][e]`` with shape (2d, 2d, P, P), see module docstring."""

    T: list[list[np.ndarray]]

    @property
    def d(self) -> int:
        return len(self.T)


def build_integral_tables(basis: BasisTables, axes) -> IntegralTables:
    T = []
    for j, ax in enumerate(axes):
        F = basis.F[j]
        ns, P, _ = F.shape
        row = []
        for sl, seg in zip(ax.slices, ax.segments):
            Fe = F[:, :, sl].reshape(ns * P, -1)
            G = (Fe * seg.weights) @ Fe.T
            G = 0.5 * (G + G.T)
            row.append(G.reshape(ns, P, ns, P).transpose(0, 2, 1, 3))
        T.append(row)
    return IntegralTables(T)


def backward_integral_tables(basis: BasisTables, axes, Tbar) -> list[np.ndarray]:
    """Adjoint of ``build_integral_tables``: per-axis arrays shaped like F."""
    out = []
    for j, ax in enumerate(axes):
        F = basis.F[j]
        ns, P, Q = F.shape
        Fbar = np.zeros_like(F)
        for e, (sl, seg) in enumerate(zip(ax.slices, ax.segments)):
            tb = Tbar[j][e]
            if tb is None:
                continue
            Gb = tb.transpose(0, 2, 1, 3).reshape(ns * P, ns * P)
            Fe = F[:, :, sl].reshape(ns * P, -1)
            Fbar[:, :, sl] += (((Gb + Gb.T) @ Fe) * seg.weights).reshape(ns, P, -1)
        out.append(Fbar)
    return out


# A tile contribution: (segment index per axis, weight)
TileWeights = list[tuple[tuple[int, ...], float]]


def _combos(exprs, d):
    out = []
    for expr in exprs:
        for ca, ia, sa in expr:
            for cb, ib, sb in expr:
                slots = [(slot(ia, sa == j), slot(ib, sb == j)) for j in range(d)]
                out.append((ca * cb, slots))
    return out


def _form(tables: IntegralTables, tiles: TileWeights, exprs) -> np.ndarray:
    d = tables.d
    P = tables.T[0][0].shape[-1]
    out = np.zeros((P, P))
    combos = _combos(exprs, d)
    for cells, wt in tiles:
        if wt == 0.0:
            continue
        for c, slots in combos:
            prod = tables.T[0][cells[0]][slots[0]]
            for j in range(1, d):
                prod = prod * tables.T[j][cells[j]][slots[j]]
            out += (wt * c) * prod
    # exact symmetry
    return 0.5 * (out + out.T)


def _form_backward(tables: IntegralTables, tiles: TileWeights, exprs, G, Tbar):
    d = tables.d
    G = 0.5 * (G + G.T)
    combos = _combos(exprs, d)
    for cells, wt in tiles:
        if wt == 0.0:
            continue
        for c, slots in combos:
            mats = [tables.T[j][cells[j]][slots[j]] for j in range(d)]
            for j in range(d):
                acc = (wt * c) * G
                for jj in range(d):
                    if jj != j:
                        acc = acc * mats[jj]
                tb = Tbar[j][cells[j]]
                a, b = slots[j]
                tb[a, b] += acc


def _weights(tiles, key):
    return [(cells, key(eps, mu)) for cells, eps, mu in tiles]


def assemble_mass(tables: IntegralTables, tiles) -> np.ndarray:
    """(eps E_k, E_l) summed over tiles; ``tiles`` = [(cells, eps, mu), ...]."""
    return _form(tables, _weights(tiles, lambda e, m: e), value_terms(tables.d))


def assemble_stiffness(tables: IntegralTables, tiles) -> np.ndarray:
    """(mu^-1 curl E_k, curl E_l) summed over tiles."""
    return _form(tables, _weights(tiles, lambda e, m: 1.0 / m), curl_terms(tables.d))


def assemble_div_gram(tables: IntegralTables, tiles) -> np.ndarray:
    """(div eps E_k, div eps E_l) tile by tile; interface jumps are not counted."""
    return _form(tables, _weights(tiles, lambda e, m: e * e), div_terms(tables.d))


def form_backward(tables: IntegralTables, tiles, GS=None, GM=None, GD=None):
    """Adjoints on the integral tables given adjoints on S, M, D."""
    Tbar = [[np.zeros_like(t) for t in row] for row in tables.T]
    d = tables.d
    if GM is not None:
        _form_backward(tables, _weights(tiles, lambda e, m: e), value_terms(d), GM, Tbar)
    if GS is not None:
        _form_backward(tables, _weights(tiles, lambda e, m: 1.0 / m), curl_terms(d), GS, Tbar)
    if GD is not None:
        _form_backward(tables, _weights(tiles, lambda e, m: e * e), div_terms(d), GD, Tbar)
    return Tbar


def domain_tiles(domain, axes):
    """Map each tile of ``domain`` to its segment indices on ``axes``."""
    out = []
    for t in domain.tiles:
        cells = []
        for j, (a, b) in enumerate(t.box):
            segs = axes[j].segment_index(a, b)
            if len(segs) != 1:
                raise ValueError(f"tile {t.box} does not match one segment on axis {j}")
            cells.append(segs[0])
        out.append((tuple(cells), t.eps, t.mu))
    return out


def block_pattern(boxes) -> np.ndarray:
    """True where two group boxes intersect with positive measure."""
    n = len(boxes)
    pat = np.zeros((n, n), dtype=bool)
    for a in range(n):
        for b in range(n):
            pat[a, b] = all(min(x1, y1) - max(x0, y0) > 1e-12
                            for (x0, x1), (y0, y1) in zip(boxes[a], boxes[b]))
    return pat


@dataclass
class SpectralSystem:
    S: np.ndarray
    M: np.ndarray
    D: np.ndarray
    offsets: list[int] = field(default_factory=list)
    tables: IntegralTables | None = field(default=None, repr=False)
    basis: BasisTables | None = field(default=None, repr=False)

    @property
    def size(self) -> int:
        return self.S.shape[0]

    def block(self, name: str, a: int, b: int) -> np.ndarray:
        A = getattr(self, name)
        o = self.offsets
        return A[o[a]:o[a + 1], o[b]:o[b + 1]]


def assemble_system(group_tables, axes, tiles) -> SpectralSystem:
    basis = stack_tables(group_tables, axes)
    tables = build_integral_tables(basis, axes)
    return SpectralSystem(assemble_stiffness(tables, tiles),
                          assemble_mass(tables, tiles),
                          assemble_div_gram(tables, tiles),
                          basis.offsets, tables, basis)


def assemble_blocks(fields, domain, axes) -> SpectralSystem:
    """Global system for one FieldTNN per group of a decomposed domain."""
    from .fieldtnn import eval_component_tables

    if len(fields) != len(domain.groups):
        raise ValueError("need one field per domain group")
    for f, g in zip(fields, domain.groups):
        if any(abs(x - y) > 1e-12 for iv, jv in zip(f.box, g.box)
               for x, y in zip(iv, jv)):
            raise ValueError(f"field box {f.box} does not match group box {g.box}")
    tiles = domain_tiles(domain, axes)
    group_tables = [eval_component_tables(f, axes) for f in fields]
    return assemble_system(group_tables, axes, tiles)


def dump_system(system: SpectralSystem, prefix, d: int | None = None) -> list[Path]:
    """Write S, M, D as raw float64 row-major files plus a JSON sidecar."""
    prefix = Path(prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    paths = []
    for name in ("S", "M", "D"):
        p = prefix.with_name(f"{prefix.name}_{name}.bin")
        np.ascontiguousarray(getattr(system, name), dtype="<f8").tofile(p)
        paths.append(p)
    side = prefix.with_name(f"{prefix.name}.json")
    side.write_text(json.dumps({
        "p": system.size, "d": d, "offsets": system.offsets,
        "dtype": "float64", "order": "row-major",
        "files": [q.name for q in paths],
    }, indent=2))
    paths.append(side)
    return paths
