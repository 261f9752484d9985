"""Composite Gauss-Legendre rules on intervals.

An axis of the integration grid is a sequence of segments (elementary
intervals between material/decomposition breakpoints); each segment carries
its own composite rule with ``M`` equal panels of ``N`` Legendre-Gauss points.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np


@lru_cache(maxsize=None)
def _legendre_rule(n: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(n)
    # exact mirror symmetry about 0
    x = 0.5 * (x - x[::-1])
    w = 0.5 * (w + w[::-1])
    if n % 2 == 1:
        x[n // 2] = 0.0
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gauss_legendre_rule(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights of the ``n``-point Legendre-Gauss rule on [-1, 1].

    Nodes are ascending and exactly symmetric about 0.
    """
    if int(n) != n or n < 1:
        raise ValueError(f"number of points must be a positive integer, got {n!r}")
    n = int(n)
    if n == 1:
        return np.array([0.0]), np.array([2.0])
    x, w = _legendre_rule(n)
    return x.copy(), w.copy()


@dataclass(frozen=True)
class QuadratureGrid:
    """Composite rule on one interval: ``panels`` equal panels, ``points`` each."""

    a: float
    b: float
    panels: int
    points: int
    nodes: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)

    @property
    def size(self) -> int:
        return self.nodes.size

    @property
    def panel_length(self) -> float:
        return (self.b - self.a) / self.panels


def composite_grid(interval, panels: int, points: int) -> QuadratureGrid:
    a, b = float(interval[0]), float(interval[1])
    if not a < b:
        raise ValueError(f"degenerate interval [{a}, {b}]")
    if panels < 1 or points < 1:
        raise ValueError("panels and points must be positive")
    xi, wi = gauss_legendre_rule(points)
    h = (b - a) / panels
    left = a + h * np.arange(panels)
    nodes = (left[:, None] + 0.5 * h * (xi[None, :] + 1.0)).ravel()
    weights = np.tile(0.5 * h * wi, panels)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return QuadratureGrid(a, b, int(panels), int(points), nodes, weights)


def integrate_1d(samples, grid) -> float:
    samples = np.asarray(samples, dtype=float)
    if samples.shape != grid.nodes.shape:
        raise ValueError(
            f"expected {grid.nodes.size} samples, got shape {samples.shape}")
    return float(np.dot(grid.weights, samples))


@dataclass(frozen=True)
class AxisGrid:
    """Concatenation of per-segment composite rules along one coordinate.

    Segments are contiguous and ascending; ``slices[e]`` addresses the nodes
    of segment ``e`` in the concatenated arrays.
    """

    segments: tuple[QuadratureGrid, ...]
    nodes: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    slices: tuple[slice, ...] = field(repr=False)

    @property
    def a(self) -> float:
        return self.segments[0].a

    @property
    def b(self) -> float:
        return self.segments[-1].b

    @property
    def breakpoints(self) -> tuple[float, ...]:
        return tuple([s.a for s in self.segments] + [self.b])

    @property
    def size(self) -> int:
        return self.nodes.size

    def segment_index(self, lo: float, hi: float) -> list[int]:
        """Indices of segments lying inside [lo, hi]."""
        return [e for e, s in enumerate(self.segments)
                if s.a >= lo - 1e-12 and s.b <= hi + 1e-12]


def axis_grid(breakpoints, panels: int, points: int) -> AxisGrid:
    """Axis grid with one ``composite_grid`` per interval between breakpoints.

    ``panels`` counts panels per unit length, rounded up per segment, so
    segments of different length get comparable resolution.
    """
    bp = [float(v) for v in breakpoints]
    if len(bp) < 2 or any(b <= a for a, b in zip(bp, bp[1:])):
        raise ValueError(f"breakpoints must be strictly increasing: {bp}")
    segs = []
    for a, b in zip(bp, bp[1:]):
        m = max(1, int(np.ceil(panels * (b - a) - 1e-9)))
        segs.append(composite_grid((a, b), m, points))
    return _join(segs)


def _join(segs) -> AxisGrid:
    nodes = np.concatenate([s.nodes for s in segs])
    weights = np.concatenate([s.weights for s in segs])
    slices, start = [], 0
    for s in segs:
        slices.append(slice(start, start + s.size))
        start += s.size
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return AxisGrid(tuple(segs), nodes, weights, tuple(slices))


def single_axis(grid: QuadratureGrid) -> AxisGrid:
    return _join([grid])
