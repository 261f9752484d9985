"""Finite-difference utilities shared by the gradient tests."""
import numpy as np

from tnnmaxwell.training import build_model, evaluate, loss_gradient, select_tracked


def central_difference(flat, k, f, h):
    """Five-point central stencil; truncation O(h^4) keeps curved coordinates honest."""
    x0 = flat[k]
    vals = []
    for s in (2, 1, -1, -2):
        flat[k] = x0 + s * h
        vals.append(f())
    flat[k] = x0
    return (-vals[0] + 8 * vals[1] - 8 * vals[2] + vals[3]) / (12 * h)


def gradient_check(domain, cfg, ncoords, rng, h=1e-5):
    """Worst relative mismatch of the beta = 0 loss gradient over random coordinates."""
    model = build_model(domain, cfg)
    state = evaluate(model)
    tracked = select_tracked(state.result.values, state.rho, 0.0, cfg.tracked)
    grads = loss_gradient(model, state, tracked, 0.0)
    params = model.parameters()
    bounds = np.concatenate([[0], np.cumsum([p.size for p in params])])
    flat_g = np.concatenate([g.ravel() for g in grads])
    # coordinates whose gradient is resolvable above FD roundoff
    big = np.flatnonzero(np.abs(flat_g) > 1e-3 * np.abs(flat_g).max())
    picks = rng.choice(big, size=min(ncoords, big.size), replace=False)

    def f():
        return float(np.sum(evaluate(model).result.values[tracked]))

    worst = 0.0
    for c in picks:
        pi = int(np.searchsorted(bounds, c, side="right") - 1)
        fd = central_difference(params[pi].reshape(-1), c - bounds[pi], f, h)
        worst = max(worst, abs(fd - flat_g[c]) / max(abs(fd), abs(flat_g[c])))
    return worst, len(picks)
