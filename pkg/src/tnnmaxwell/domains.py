"""Benchmark cavities: tiles with materials, basis groups, reference spectra."""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

Box = tuple[tuple[float, float], ...]

# Benchmark reference spectra, leading eigenvalues in ascending order; the
# L-shape values are Dauge's reference computations.
LSHAPE2D_REFERENCE = (
    1.47562182408, 3.53403136678, 9.86960440109, 9.86960440109, 11.3894793979,
)
INHOMOGENEOUS_REFERENCE = (
    3.317548763415, 3.366324157260, 6.186389562488, 13.92632333103,
    15.08299096123, 15.77886590819, 18.64329693686, 25.79753111031,
    29.85240067684, 30.53785871253,
)
LSHAPE3D_REFERENCE = (
    9.63972384472, 11.3452262252, 13.4036357679, 15.1972519265,
    19.5093282458, 19.7392088022, 19.7392088022, 19.7392088022,
    21.2590837990,
)


class DomainError(ValueError):
    pass


@dataclass(frozen=True)
class Tile:
    box: Box
    eps: float = 1.0
    mu: float = 1.0


@dataclass(frozen=True)
class Group:
    box: Box
    rank: int | None = None


@dataclass
class DomainSpec:
    name: str
    tiles: list[Tile]
    groups: list[Group]
    kind: str = "tensor"             # "tensor" | "decomposed"
    reference: str | None = None     # "closed" | "table" | None
    reference_values: tuple[float, ...] | None = None
    union_groups: list[int] = field(default_factory=list)

    def __post_init__(self):
        validate(self)

    @property
    def d(self) -> int:
        return len(self.tiles[0].box)

    @property
    def breakpoints(self) -> list[list[float]]:
        out = []
        for j in range(self.d):
            pts = sorted({v for t in self.tiles for v in t.box[j]})
            out.append(pts)
        return out

    @property
    def bounding_box(self) -> Box:
        bp = self.breakpoints
        return tuple((b[0], b[-1]) for b in bp)

    def material(self, index: int) -> Tile:
        return self.tiles[index]

    def contains(self, points) -> np.ndarray:
        """Boolean mask of points (n, d) lying in the closed union of tiles."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        inside = np.zeros(len(pts), dtype=bool)
        for t in self.tiles:
            ok = np.ones(len(pts), dtype=bool)
            for j, (a, b) in enumerate(t.box):
                ok &= (pts[:, j] >= a - 1e-12) & (pts[:, j] <= b + 1e-12)
            inside |= ok
        return inside

    def without_unions(self) -> "DomainSpec":
        keep = [g for k, g in enumerate(self.groups) if k not in self.union_groups]
        return DomainSpec(self.name, self.tiles, keep, self.kind, self.reference,
                          self.reference_values, [])

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "kind": self.kind,
            "tiles": [{"box": [list(iv) for iv in t.box], "eps": t.eps, "mu": t.mu}
                      for t in self.tiles],
            "groups": [{"box": [list(iv) for iv in g.box], "rank": g.rank}
                       for g in self.groups],
            "union_groups": list(self.union_groups),
            "reference": list(self.reference_values) if self.reference_values else None,
            "reference_kind": self.reference,
        }


def _volume(box) -> float:
    return math.prod(b - a for a, b in box)


def _overlap(b1, b2) -> float:
    return math.prod(max(0.0, min(x1, y1) - max(x0, y0))
                     for (x0, x1), (y0, y1) in zip(b1, b2))


def validate(dom: DomainSpec) -> None:
    if not dom.tiles:
        raise DomainError("domain needs at least one tile")
    d = len(dom.tiles[0].box)
    if d not in (2, 3):
        raise DomainError(f"dimension must be 2 or 3, got {d}")
    for t in dom.tiles:
        if len(t.box) != d or any(not a < b for a, b in t.box):
            raise DomainError(f"bad tile box {t.box}")
        if not (t.eps > 0 and t.mu > 0):
            raise DomainError("materials must be positive")
    for t1, t2 in itertools.combinations(dom.tiles, 2):
        if _overlap(t1.box, t2.box) > 1e-12:
            raise DomainError(f"tiles {t1.box} and {t2.box} overlap")
    bp = [sorted({v for t in dom.tiles for v in t.box[j]}) for j in range(d)]
    for t in dom.tiles:
        # tiles must be unions of breakpoint cells; require one cell per tile
        for j, (a, b) in enumerate(t.box):
            inner = [v for v in bp[j] if a < v < b]
            if inner:
                raise DomainError(
                    f"tile {t.box} straddles breakpoint {inner[0]} on axis {j}")
    if not dom.groups:
        raise DomainError("domain needs at least one basis group")
    for g in dom.groups:
        if len(g.box) != d:
            raise DomainError(f"group box {g.box} has wrong dimension")
        covered = sum(_overlap(g.box, t.box) for t in dom.tiles)
        if abs(covered - _volume(g.box)) > 1e-9:
            raise DomainError(f"group box {g.box} is not a union of tiles")
    if dom.kind not in ("tensor", "decomposed"):
        raise DomainError(f"unknown domain kind {dom.kind!r}")
    if dom.kind == "tensor" and (len(dom.tiles) != 1 or len(dom.groups) != 1):
        raise DomainError("tensor domains have exactly one tile and one group")


def _sq(a, b):
    return (float(a), float(b))


def _lshape_tiles():
    return [Tile((_sq(0, 1), _sq(0, 1))),
            Tile((_sq(-1, 0), _sq(0, 1))),
            Tile((_sq(-1, 0), _sq(-1, 0)))]


def _lshape_groups():
    return [Group((_sq(0, 1), _sq(0, 1))),
            Group((_sq(-1, 0), _sq(0, 1))),
            Group((_sq(-1, 0), _sq(-1, 0))),
            Group((_sq(-1, 1), _sq(0, 1))),     # Omega_1 u Omega_2
            Group((_sq(-1, 0), _sq(-1, 1)))]    # Omega_2 u Omega_3


BUILTINS = ("square", "lshape2d", "inhomogeneous", "cube", "lshape3d")


def builtin(name: str) -> DomainSpec:
    if name == "square":
        box = (_sq(0, 1), _sq(0, 1))
        return DomainSpec("square", [Tile(box)], [Group(box)], "tensor", "closed")
    if name == "cube":
        box = (_sq(0, 1),) * 3
        return DomainSpec("cube", [Tile(box)], [Group(box)], "tensor", "closed")
    if name == "lshape2d":
        return DomainSpec("lshape2d", _lshape_tiles(), _lshape_groups(), "decomposed",
                          "table", LSHAPE2D_REFERENCE, [3, 4])
    if name == "lshape3d":
        z = _sq(0, 1)
        tiles = [Tile(t.box + (z,)) for t in _lshape_tiles()]
        groups = [Group(g.box + (z,)) for g in _lshape_groups()]
        return DomainSpec("lshape3d", tiles, groups, "decomposed", "table",
                          LSHAPE3D_REFERENCE, [3, 4])
    if name == "inhomogeneous":
        o1 = (_sq(0, 1), _sq(0, 1))
        o2 = (_sq(-1, 0), _sq(0, 1))
        o3 = (_sq(-1, 0), _sq(-1, 0))
        o4 = (_sq(0, 1), _sq(-1, 0))
        tiles = [Tile(o1, eps=0.5), Tile(o2, eps=1.0), Tile(o3, eps=0.5), Tile(o4, eps=1.0)]
        groups = [Group(o1), Group(o2), Group(o3), Group(o4),
                  Group((_sq(-1, 1), _sq(0, 1))),    # top row, across x1 = 0
                  Group((_sq(-1, 1), _sq(-1, 0))),   # bottom row
                  Group((_sq(-1, 0), _sq(-1, 1))),   # left column, across x2 = 0
                  Group((_sq(0, 1), _sq(-1, 1)))]    # right column
        return DomainSpec("inhomogeneous", tiles, groups, "decomposed", "table",
                          INHOMOGENEOUS_REFERENCE, [4, 5, 6, 7])
    raise DomainError(f"unknown domain {name!r}; choose from {', '.join(BUILTINS)}")


def load_domain(path) -> DomainSpec:
    """Read a user-defined geometry from JSON (see README for the schema)."""
    data = json.loads(Path(path).read_text())
    return domain_from_dict(data)


def domain_from_dict(data: dict) -> DomainSpec:
    try:
        tiles = [Tile(tuple(_sq(*iv) for iv in t["box"]), float(t.get("eps", 1.0)),
                      float(t.get("mu", 1.0))) for t in data["tiles"]]
        groups = [Group(tuple(_sq(*iv) for iv in g["box"]), g.get("rank"))
                  for g in data.get("groups") or [{"box": data["tiles"][0]["box"]}]]
    except (KeyError, TypeError, IndexError) as exc:
        raise DomainError(f"malformed domain description: {exc}") from exc
    ref = data.get("reference")
    kind = data.get("kind") or ("tensor" if len(tiles) == 1 and len(groups) == 1
                                else "decomposed")
    ref_kind = data.get("reference_kind") or ("table" if ref else None)
    return DomainSpec(data.get("name", "custom"), tiles, groups, kind,
                      ref_kind, tuple(ref) if ref else None,
                      list(data.get("union_groups", [])))


def _cube_multiplicity(k) -> int:
    # two polarizations when no index vanishes, one otherwise
    return 2 if all(k) else 1


def exact_eigenvalues(domain, count: int) -> np.ndarray:
    """Closed-form spectrum (ascending, with multiplicity) for square and cube."""
    name = domain if isinstance(domain, str) else domain.name
    if count < 1:
        raise ValueError("count must be positive")
    if name not in ("square", "cube"):
        raise DomainError(f"no closed-form spectrum for {name!r}; use reference_table")
    n = 2
    while True:
        vals = []
        if name == "square":
            for i in range(n + 1):
                for j in range(n + 1):
                    if i + j > 0:
                        vals.append(i * i + j * j)
        else:
            for k in itertools.product(range(n + 1), repeat=3):
                if k[0] * k[1] + k[1] * k[2] + k[2] * k[0] > 0:
                    vals.extend([sum(v * v for v in k)] * _cube_multiplicity(k))
        vals.sort()
        # all values <= n^2 are complete for this enumeration bound
        if len(vals) >= count and vals[count - 1] <= n * n:
            return np.pi ** 2 * np.array(vals[:count], dtype=float)
        n *= 2


def reference_table(domain) -> np.ndarray:
    name = domain if isinstance(domain, str) else domain.name
    table = {"lshape2d": LSHAPE2D_REFERENCE,
             "inhomogeneous": INHOMOGENEOUS_REFERENCE,
             "lshape3d": LSHAPE3D_REFERENCE}
    if name in table:
        return np.array(table[name])
    if not isinstance(domain, str) and domain.reference_values:
        return np.array(domain.reference_values)
    raise DomainError(f"no benchmark table for {name!r}")


def reference_spectrum(domain: DomainSpec, count: int) -> np.ndarray | None:
    """Whatever reference is available, truncated to ``count`` (may be shorter)."""
    if domain.reference == "closed":
        return exact_eigenvalues(domain, count)
    if domain.reference == "table" or domain.reference_values:
        return reference_table(domain)[:count]
    return None


def relative_error(lam_nn: float, lam_ref: float) -> float:
    if lam_ref == 0:
        raise ValueError("reference eigenvalue must be nonzero")
    return abs(lam_nn - lam_ref) / abs(lam_ref)
