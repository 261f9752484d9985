"""One-dimensional multi-output subnetworks.

Each subnetwork maps a coordinate ``x`` to ``p`` factor functions. Besides
the values we carry ``d/dx`` through every layer (forward-mode in the input)
and backpropagate parameter gradients through both the value path and the
input-derivative path, so curl/div integrals can be differentiated exactly.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

NORM_FLOOR = 1e-12

ACTIVATIONS = ("sine", "tanh", "relu")


class DegenerateFactorError(ArithmeticError):
    """A factor function has (numerically) zero L2 norm on its grid."""


def _act(name: str, z: np.ndarray):
    """Return sigma(z), sigma'(z), sigma''(z)."""
    if name == "sine":
        s, c = np.sin(z), np.cos(z)
        return s, c, -s
    if name == "tanh":
        t = np.tanh(z)
        d = 1.0 - t * t
        return t, d, -2.0 * t * d
    if name == "relu":
        on = (z > 0).astype(float)
        return z * on, on, np.zeros_like(z)
    raise ValueError(f"unknown activation {name!r}")


@dataclass
class Subnetwork:
    sizes: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activation: str = "sine"
    support: tuple[float, float] | None = None
    clamp: bool = False
    poly: bool = False
    seed: int | None = None

    @property
    def rank(self) -> int:
        return self.sizes[-1]

    def parameters(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def copy(self) -> "Subnetwork":
        return Subnetwork(self.sizes, [w.copy() for w in self.weights],
                          [b.copy() for b in self.biases], self.activation,
                          self.support, self.clamp, self.poly, self.seed)

    def to_dict(self) -> dict:
        return {
            "sizes": list(self.sizes),
            "activation": self.activation,
            "seed": self.seed,
            "support": list(self.support) if self.support else None,
            "clamp": self.clamp,
            "poly": self.poly,
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Subnetwork":
        return cls(
            tuple(d["sizes"]),
            [np.asarray(w, dtype=float).reshape(m, n) for w, m, n in
             zip(d["weights"], d["sizes"][1:], d["sizes"][:-1])],
            [np.asarray(b, dtype=float) for b in d["biases"]],
            d.get("activation", "sine"),
            tuple(d["support"]) if d.get("support") else None,
            bool(d.get("clamp", False)),
            bool(d.get("poly", False)),
            d.get("seed"),
        )


def init_subnet(sizes: Sequence[int], seed: int, activation: str = "sine",
                support=None, clamp: bool = False, poly: bool = False,
                rng: np.random.Generator | None = None) -> Subnetwork:
    """Xavier-uniform weights, zero biases.

    ``sizes`` runs from the input width (must be 1) to the rank ``p``; at
    least one hidden layer is required.
    """
    sizes = tuple(int(s) for s in sizes)
    if len(sizes) < 3:
        raise ValueError("need at least one hidden layer")
    if sizes[0] != 1:
        raise ValueError("subnetworks take a scalar input")
    if any(s < 1 for s in sizes):
        raise ValueError(f"layer widths must be positive: {sizes}")
    if activation not in ACTIVATIONS:
        raise ValueError(f"unknown activation {activation!r}")
    if (clamp or poly) and support is None:
        raise ValueError("clamp/poly need a support interval")
    if support is not None and not support[0] < support[1]:
        raise ValueError(f"bad support interval {support}")
    if rng is None:
        rng = np.random.default_rng(seed)
    weights, biases = [], []
    for n_in, n_out in zip(sizes[:-1], sizes[1:]):
        bound = np.sqrt(6.0 / (n_in + n_out))
        weights.append(rng.uniform(-bound, bound, size=(n_out, n_in)))
        biases.append(np.zeros(n_out))
    return Subnetwork(sizes, weights, biases, activation,
                      tuple(map(float, support)) if support is not None else None,
                      clamp, poly, seed)


def clamp(x, a: float, b: float):
    """g(x) = relu(x - a) - relu(x - b) + a, i.e. x clipped to [a, b]."""
    if not a < b:
        raise ValueError("clamp needs a < b")
    x = np.asarray(x, dtype=float)
    r = np.maximum(x - a, 0.0) - np.maximum(x - b, 0.0) + a
    return r if r.ndim else float(r)


@dataclass
class FactorTable:
    """Rows are the ``p`` factors, columns the grid nodes."""

    values: np.ndarray
    derivatives: np.ndarray
    norms: np.ndarray | None = None

    @property
    def rank(self) -> int:
        return self.values.shape[0]


@dataclass
class _Cache:
    x: np.ndarray
    inside: np.ndarray | None
    t: np.ndarray
    acts: list = field(default_factory=list)   # (a, da) entering each layer
    pre: list = field(default_factory=list)    # (sigma', sigma'', dz) per hidden layer
    raw: np.ndarray | None = None              # network output at t
    draw: np.ndarray | None = None
    env: np.ndarray | None = None
    denv: np.ndarray | None = None


def _forward(net: Subnetwork, nodes) -> tuple[FactorTable, _Cache]:
    x = np.asarray(nodes, dtype=float).ravel()
    inside = None
    t = x
    if net.clamp:
        a, b = net.support
        t = clamp(x, a, b)
        inside = (x >= a) & (x <= b)
    cache = _Cache(x=x, inside=inside, t=t)
    h = t[:, None]
    dh = np.ones_like(h)
    nl = len(net.weights)
    for li, (w, bias) in enumerate(zip(net.weights, net.biases)):
        cache.acts.append((h, dh))
        z = h @ w.T + bias
        dz = dh @ w.T
        if li < nl - 1:
            s, s1, s2 = _act(net.activation, z)
            cache.pre.append((s1, s2, dz))
            h, dh = s, s1 * dz
        else:
            h, dh = z, dz
    raw, draw = h.T, dh.T                      # (p, Q)
    cache.raw, cache.draw = raw, draw
    if net.poly:
        a, b = net.support
        # x == t on [a, b]; using x keeps the endpoint zeros exact
        env = (x - a) * (b - x)
        denv = a + b - 2.0 * x
        cache.env, cache.denv = env, denv
        vals = raw * env
        ders = draw * env + raw * denv
    else:
        vals, ders = raw, draw
    if inside is not None:
        # clamp derivative is 0 outside the support
        ders = ders * inside
        if net.poly:
            vals = vals * inside
    return FactorTable(vals, ders), cache


def forward_with_derivative(net: Subnetwork, nodes) -> FactorTable:
    return _forward(net, nodes)[0]


def _backward(net: Subnetwork, cache: _Cache, gv, gd) -> list[np.ndarray]:
    gv = np.asarray(gv, dtype=float)
    gd = np.asarray(gd, dtype=float)
    if cache.inside is not None:
        gd = gd * cache.inside
        if net.poly:
            gv = gv * cache.inside
    if net.poly:
        env, denv = cache.env, cache.denv
        g_raw = gv * env + gd * denv
        g_draw = gd * env
    else:
        g_raw, g_draw = gv, gd
    ga, gda = g_raw.T, g_draw.T               # (Q, p)
    grads: list[np.ndarray] = []
    nl = len(net.weights)
    for li in range(nl - 1, -1, -1):
        w = net.weights[li]
        h, dh = cache.acts[li]
        if li < nl - 1:
            s1, s2, dz = cache.pre[li]
            gz = ga * s1 + gda * s2 * dz
            gdz = gda * s1
        else:
            gz, gdz = ga, gda
        gw = gz.T @ h + gdz.T @ dh
        gb = gz.sum(axis=0)
        grads.append(gb)
        grads.append(gw)
        if li > 0:
            ga = gz @ w
            gda = gdz @ w
    grads.reverse()
    return grads


def backward(net: Subnetwork, nodes, adjoint_values, adjoint_derivatives):
    """Gradient of sum(Av * values + Ad * derivatives) w.r.t. the parameters.

    Returned in the order of ``net.parameters()``: W1, b1, W2, b2, ...
    """
    _, cache = _forward(net, nodes)
    return _backward(net, cache, adjoint_values, adjoint_derivatives)


def normalize(table: FactorTable, weights) -> FactorTable:
    """Scale every row to unit L2 norm under the quadrature ``weights``."""
    w = getattr(weights, "weights", weights)
    norms = np.sqrt(np.einsum("kq,q,kq->k", table.values, w, table.values))
    bad = np.flatnonzero(~(norms > NORM_FLOOR))
    if bad.size:
        raise DegenerateFactorError(
            f"factor rows {bad.tolist()} have norm <= {NORM_FLOOR:g}")
    return FactorTable(table.values / norms[:, None],
                       table.derivatives / norms[:, None], norms)


def normalize_backward(table: FactorTable, normalized: FactorTable, weights,
                       gv, gd):
    """Adjoints on the unnormalized rows given adjoints on the normalized ones."""
    w = getattr(weights, "weights", weights)
    n = normalized.norms[:, None]
    vhat, dhat = normalized.values, normalized.derivatives
    # d(norm)/d(values) = w * values / norm = w * vhat
    gn = -np.sum(gv * vhat + gd * dhat, axis=1, keepdims=True) / n
    return gv / n + gn * w * vhat, gd / n


@dataclass
class TabulatedFactor:
    """Closed-form factor source: ``funcs[k] = (f, df)`` for each rank index.

    Stands in for a trained subnetwork in training-free checks; carries no
    parameters, so every gradient through it is zero.
    """

    funcs: list[tuple[Callable, Callable]]
    normalize: bool = False

    @property
    def rank(self) -> int:
        return len(self.funcs)

    def table(self, nodes) -> FactorTable:
        x = np.asarray(nodes, dtype=float).ravel()
        vals = np.array([np.broadcast_to(f(x), x.shape) for f, _ in self.funcs],
                        dtype=float)
        ders = np.array([np.broadcast_to(df(x), x.shape) for _, df in self.funcs],
                        dtype=float)
        return FactorTable(vals.reshape(len(self.funcs), -1),
                           ders.reshape(len(self.funcs), -1))


def tabulated_mode(funcs, derivs=None, normalize: bool = False) -> TabulatedFactor:
    """Build a factor source from closed forms.

    ``funcs`` is a list of callables (with ``derivs`` their derivatives) or a
    list of ``(f, df)`` pairs.
    """
    if derivs is None:
        pairs = [tuple(fd) for fd in funcs]
    else:
        if len(funcs) != len(derivs):
            raise ValueError("funcs and derivs must have equal length")
        pairs = list(zip(funcs, derivs))
    return TabulatedFactor(pairs, normalize)


def sin_mode(k: float, scale: float = 1.0, a: float = 0.0, L: float = 1.0):
    w = k * np.pi / L
    return (lambda x: scale * np.sin(w * (x - a)),
            lambda x: scale * w * np.cos(w * (x - a)))


def cos_mode(k: float, scale: float = 1.0, a: float = 0.0, L: float = 1.0):
    w = k * np.pi / L
    return (lambda x: scale * np.cos(w * (x - a)),
            lambda x: -scale * w * np.sin(w * (x - a)))


def const_mode(c: float = 1.0):
    return (lambda x: np.full_like(np.asarray(x, dtype=float), c),
            lambda x: np.zeros_like(np.asarray(x, dtype=float)))
