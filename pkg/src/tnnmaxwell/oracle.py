"""Training-free bases built from closed-form square-cavity eigenfunctions.

For i, j >= 0 (not both zero) the divergence-free PEC mode is

    E_ij = ( j cos(i pi x1) sin(j pi x2),  -i sin(i pi x1) cos(j pi x2) ),

with eigenvalue (i^2 + j^2) pi^2. Each mode is already a rank-one product per
component, so a set of modes is exactly a FieldTNN with tabulated factors.
"""
from __future__ import annotations

import time

import numpy as np

from .domains import builtin, exact_eigenvalues, relative_error
from .fieldtnn import FieldTNN
from .subnet import cos_mode, sin_mode, tabulated_mode
from .training import TrainConfig, build_model, evaluate, postprocess


def square_modes(max_sq: int = 8) -> list[tuple[int, int]]:
    """Index pairs with 0 < i^2 + j^2 <= max_sq, sorted by eigenvalue."""
    n = int(np.sqrt(max_sq)) + 1
    pairs = [(i, j) for i in range(n + 1) for j in range(n + 1)
             if 0 < i * i + j * j <= max_sq]
    return sorted(pairs, key=lambda ij: (ij[0] ** 2 + ij[1] ** 2, ij))


def square_oracle_field(modes=None, gradient: bool = False) -> FieldTNN:
    """Tabulated FieldTNN spanning ``modes``; optionally append grad(sin sin)."""
    if modes is None:
        modes = square_modes()
    f11, f12, f21, f22 = [], [], [], []
    for i, j in modes:
        f11.append(cos_mode(i, scale=j))
        f12.append(sin_mode(j))
        f21.append(sin_mode(i, scale=-i))
        f22.append(cos_mode(j))
    if gradient:
        # grad(sin(pi x1) sin(pi x2)); curl-free, vanishes tangentially
        f11.append(cos_mode(1, scale=np.pi))
        f12.append(sin_mode(1))
        f21.append(sin_mode(1, scale=np.pi))
        f22.append(cos_mode(1))
    factors = [[tabulated_mode(f11), tabulated_mode(f12)],
               [tabulated_mode(f21), tabulated_mode(f22)]]
    return FieldTNN(factors, ((0.0, 1.0), (0.0, 1.0)))


def oracle_report(field: FieldTNN, panels: int = 8, points: int = 8,
                  rho_star: float = 10.0):
    dom = builtin("square")
    cfg = TrainConfig(rank=field.rank, tracked=1, steps=0, panels=panels,
                      points=points, rho_star=rho_star)
    model = build_model(dom, cfg, [field])
    return postprocess(model, evaluate(model))


def check_square_oracle(tol: float = 1e-9):
    """Exact modes with i^2 + j^2 <= 8 reproduce the exact eigenvalues."""
    t0 = time.perf_counter()
    rep = oracle_report(square_oracle_field())
    lam = np.array([e.lam for e in rep.entries])
    ref = exact_eigenvalues("square", 8)
    err = max(relative_error(a, b) for a, b in zip(lam, ref)) if lam.size == 8 else np.inf
    return err < tol, f"max rel err {err:.2e} (tol {tol:g})", time.perf_counter() - t0


def check_spurious_oracle(tol: float = 1e-8, rho_star: float = 10.0):
    """One appended gradient field gives exactly one flagged pair."""
    t0 = time.perf_counter()
    rep = oracle_report(square_oracle_field(gradient=True), rho_star=rho_star)
    flagged = [e for e in rep.entries if e.spurious]
    lam = np.array([e.lam for e in rep.filtered])
    ref = exact_eigenvalues("square", 8)
    err = max(relative_error(a, b) for a, b in zip(lam, ref)) if lam.size == 8 else np.inf
    ok = len(flagged) == 1 and err < tol
    return ok, f"{len(flagged)} flagged, max rel err {err:.2e} (tol {tol:g})", \
        time.perf_counter() - t0


def brute_force_forms(group_tables, axes, tiles):
    """S, M, D by materializing every basis field on the full tensor grid.

    Independent of the factorized assembly; meant for small grids only.
    ``tiles`` is the ``[(cells, eps, mu), ...]`` list of ``domain_tiles``.
    """
    from .fieldtnn import eval_curl, eval_divergence, eval_values

    d = len(axes)
    W = axes[0].weights
    for ax in axes[1:]:
        W = np.multiply.outer(W, ax.weights)
    eps = np.zeros(W.shape)
    inv_mu = np.zeros(W.shape)
    for cells, e, m in tiles:
        sl = tuple(axes[j].slices[cells[j]] for j in range(d))
        eps[sl] = e
        inv_mu[sl] = 1.0 / m

    vals, curls, divs = [], [], []
    for tabs in group_tables:
        vals.append(np.stack([v.materialize() for v in eval_values(None, tables=tabs)]))
        c = eval_curl(None, tables=tabs)
        c = [c] if d == 2 else c
        curls.append(np.stack([ci.materialize() for ci in c]))
        divs.append(eval_divergence(None, tables=tabs).materialize())
    V = np.concatenate(vals, axis=1)     # (d, P, grid...)
    C = np.concatenate(curls, axis=1)
    Dv = np.concatenate(divs, axis=0)    # (P, grid...)
    P = Dv.shape[0]
    V = V.reshape(V.shape[0], P, -1)
    C = C.reshape(C.shape[0], P, -1)
    Dv = Dv.reshape(P, -1)
    w = W.ravel()
    M = np.einsum("ckq,clq,q->kl", V, V, w * eps.ravel())
    S = np.einsum("ckq,clq,q->kl", C, C, w * inv_mu.ravel())
    D = np.einsum("kq,lq,q->kl", Dv, Dv, w * eps.ravel() ** 2)
    return S, M, D
