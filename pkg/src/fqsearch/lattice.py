"""Extended Sierpinski carpet / Menger sponge lattices.

A lattice is the set of occupied cells of a stage-S fractal on an L^d grid
(L = s^S), with dense site ids assigned in lexicographic coordinate order and a
precomputed (N, k) neighbor table.  Links are ordered +x, -x, +y, -y[, +z, -z],
so the opposite of link ``l`` is ``l ^ 1``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import CapacityExceeded, InvalidSpec

#: Neighbor-table entry for a missing neighbor (hole or fixed outer wall).
SELF = -1

#: Default ceiling on the number of grid cells materialized by ``generate``.
MAX_CELLS = 1 << 28


class Family(str, enum.Enum):
    CARPET = "carpet"
    SPONGE = "sponge"

    @property
    def dim(self) -> int:
        return 2 if self is Family.CARPET else 3


class Boundary(str, enum.Enum):
    FIXED = "fixed"
    PERIODIC = "periodic"


@dataclass(frozen=True)
class FractalSpec:
    family: Family
    s: int
    s_prime: int
    stage: int
    boundary: Boundary = Boundary.PERIODIC

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        object.__setattr__(self, "boundary", Boundary(self.boundary))
        if self.s < 3:
            raise InvalidSpec(f"scaling factor s must be >= 3, got {self.s}")
        if not 1 <= self.s_prime <= self.s - 2:
            raise InvalidSpec(
                f"hole size s' must satisfy 1 <= s' <= s-2, got s={self.s}, s'={self.s_prime}"
            )
        if self.stage < 1:
            raise InvalidSpec(f"stage must be >= 1, got {self.stage}")

    @property
    def label(self) -> str:
        prefix = "SC" if self.family is Family.CARPET else "MS"
        return f"{prefix}({self.s},{self.s_prime})"

    def with_stage(self, stage: int) -> "FractalSpec":
        return FractalSpec(self.family, self.s, self.s_prime, stage, self.boundary)

    def to_dict(self) -> dict:
        return {
            "family": self.family.value,
            "s": self.s,
            "sPrime": self.s_prime,
            "stage": self.stage,
            "boundary": self.boundary.value,
        }

    @classmethod
    def parse(cls, label: str, stage: int, boundary="periodic") -> "FractalSpec":
        """Build from a label such as ``"SC(4,2)"`` or ``"ms(3,1)"``."""
        text = label.strip().upper().replace(" ", "")
        try:
            prefix, rest = text[:2], text[2:]
            s, sp = rest.strip("()").split(",")
            family = {"SC": Family.CARPET, "MS": Family.SPONGE}[prefix]
            return cls(family, int(s), int(sp), stage, boundary)
        except (KeyError, ValueError) as exc:
            raise InvalidSpec(f"cannot parse fractal label {label!r}") from exc


def unit_mass(family: Family, s: int, s_prime: int) -> int:
    """Occupied cells of the stage-1 generator, M(s)."""
    if Family(family) is Family.CARPET:
        return s * s - s_prime * s_prime
    return s**3 - (3 * s_prime * s_prime * s - 2 * s_prime**3)


@dataclass(frozen=True)
class LatticeMetrics:
    d_e: int
    d_f: float
    M: int
    N: int
    L: int

    def to_dict(self) -> dict:
        return {"dE": self.d_e, "dF": self.d_f, "M": self.M, "N": self.N, "L": self.L}


def metrics(spec: FractalSpec) -> LatticeMetrics:
    """Geometric quantities of ``spec`` computed without building the grid."""
    m = unit_mass(spec.family, spec.s, spec.s_prime)
    return LatticeMetrics(
        d_e=spec.family.dim,
        d_f=math.log(m) / math.log(spec.s),
        M=m,
        N=m**spec.stage,
        L=spec.s**spec.stage,
    )


def unit_pattern(family: Family, s: int, s_prime: int) -> np.ndarray:
    """Stage-1 occupancy: an s^d boolean block with the central hole removed.

    The hole offset is ``(s - s') // 2``; for odd gaps it rounds toward the
    origin.  For the sponge a cell is removed when at least two of its
    coordinates fall inside the central band (three crossing columns).
    """
    family = Family(family)
    off = (s - s_prime) // 2
    band = np.zeros(s, dtype=bool)
    band[off:off + s_prime] = True
    if family is Family.CARPET:
        return ~(band[:, None] & band[None, :])
    b = band.astype(np.int8)
    hits = b[:, None, None] + b[None, :, None] + b[None, None, :]
    return hits < 2


def occupancy(spec: FractalSpec, max_cells: int = MAX_CELLS) -> np.ndarray:
    """Boolean occupancy mask of shape (L,)*d for the stage-S fractal."""
    cells = spec.s ** (spec.stage * spec.family.dim)
    if cells > max_cells:
        raise CapacityExceeded(
            f"{spec.label} stage {spec.stage} needs {cells} grid cells (limit {max_cells})"
        )
    unit = unit_pattern(spec.family, spec.s, spec.s_prime)
    m = unit_mass(spec.family, spec.s, spec.s_prime)
    if int(unit.sum()) != m:
        raise AssertionError(f"generator has {int(unit.sum())} cells, expected M(s)={m}")
    mask = unit
    for _ in range(spec.stage - 1):
        # stage S = generator of stage-(S-1) blocks
        mask = np.kron(unit, mask).astype(bool)
    return mask


@dataclass(frozen=True, eq=False)
class Lattice:
    """Occupied sites of a grid plus their neighbor table.

    ``coords[i]`` is the grid coordinate of site ``i``; ``neighbors[i, l]`` is
    the id of the site reached along link ``l`` or ``SELF``.
    """

    mask: np.ndarray
    boundary: Boundary
    spec: FractalSpec | None = None
    coords: np.ndarray = field(init=False, repr=False)
    index: np.ndarray = field(init=False, repr=False)
    neighbors: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        mask = np.ascontiguousarray(self.mask, dtype=bool)
        mask.setflags(write=False)
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "boundary", Boundary(self.boundary))
        n = int(mask.sum())
        dtype = np.int32 if n < 2**31 - 1 else np.int64
        coords = np.argwhere(mask)
        index = np.full(mask.shape, SELF, dtype=dtype)
        index[mask] = np.arange(n, dtype=dtype)
        nbr = np.empty((n, 2 * mask.ndim), dtype=dtype)
        L = np.asarray(mask.shape)
        periodic = self.boundary is Boundary.PERIODIC
        for axis in range(mask.ndim):
            for sign, link in ((1, 2 * axis), (-1, 2 * axis + 1)):
                target = coords.copy()
                target[:, axis] += sign
                if periodic:
                    target[:, axis] %= L[axis]
                    nbr[:, link] = index[tuple(target.T)]
                else:
                    inside = (target[:, axis] >= 0) & (target[:, axis] < L[axis])
                    col = np.full(n, SELF, dtype=dtype)
                    col[inside] = index[tuple(target[inside].T)]
                    nbr[:, link] = col
        for arr in (coords, index, nbr):
            arr.setflags(write=False)
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "index", index)
        object.__setattr__(self, "neighbors", nbr)

    @property
    def N(self) -> int:
        return len(self.coords)

    @property
    def k(self) -> int:
        return 2 * self.mask.ndim

    @property
    def dim(self) -> int:
        return self.mask.ndim

    @property
    def L(self) -> int:
        return self.mask.shape[0]

    def site(self, coord) -> int:
        """Dense id of an occupied coordinate; raises KeyError for holes."""
        coord = tuple(int(c) for c in coord)
        if any(c < 0 or c >= n for c, n in zip(coord, self.mask.shape)):
            raise KeyError(coord)
        i = int(self.index[coord])
        if i == SELF:
            raise KeyError(coord)
        return i

    def neighbor(self, site: int, link: int) -> int:
        return int(self.neighbors[site, link])

    @cached_property
    def shift_permutation(self) -> np.ndarray:
        """Flat (N*k) involution implementing the flip-flop shift.

        Amplitude at slot ``x*k + l`` moves to ``y*k + (l ^ 1)`` when
        ``y = neighbors[x, l]`` exists, and stays put otherwise.
        """
        k = self.k
        n = self.N
        slot = np.arange(n * k, dtype=np.int64).reshape(n, k)
        nbr = self.neighbors.astype(np.int64)
        flipped = np.arange(k) ^ 1
        perm = np.where(nbr >= 0, nbr * k + flipped[None, :], slot).ravel()
        perm.setflags(write=False)
        return perm

    def center_site(self) -> int:
        """Occupied site nearest the grid center; ties go to the lexicographically first."""
        center = (np.asarray(self.mask.shape) - 1) / 2.0
        d2 = ((self.coords - center) ** 2).sum(axis=1)
        # argmin returns the first minimum, and coords are lexicographic
        return int(np.argmin(d2))

    def missing_links(self) -> np.ndarray:
        return (self.neighbors == SELF).sum(axis=1)

    def default_target(self) -> int:
        """Search target used when none is given.

        The origin corner when it has all k links (always the case for
        periodic fractals, and a self-similar position at every stage);
        otherwise the site with the fewest missing links nearest the grid
        center.  A target with a missing link traps amplitude in a
        short-period local mode and the search signal disappears.
        """
        missing = self.missing_links()
        if missing[0] == 0 and not self.coords[0].any():
            return 0
        center = (np.asarray(self.mask.shape) - 1) / 2.0
        d2 = ((self.coords - center) ** 2).sum(axis=1)
        return int(np.lexsort((d2, missing))[0])

    def sites_by_center_distance(self, count: int | None = None) -> np.ndarray:
        center = (np.asarray(self.mask.shape) - 1) / 2.0
        d2 = ((self.coords - center) ** 2).sum(axis=1)
        order = np.argsort(d2, kind="stable")
        return order if count is None else order[:count]

    def metadata(self) -> dict:
        out = {"L": self.L, "N": self.N, "k": self.k, "boundary": self.boundary.value}
        if self.spec is not None:
            m = metrics(self.spec)
            out.update(self.spec.to_dict())
            out.update({"M": m.M, "dF": m.d_f, "dE": m.d_e})
        return out


def generate(spec: FractalSpec, max_cells: int = MAX_CELLS) -> Lattice:
    """Build the stage-S lattice described by ``spec``."""
    mask = occupancy(spec, max_cells=max_cells)
    lat = Lattice(mask, spec.boundary, spec)
    expected = metrics(spec).N
    if lat.N != expected:
        raise AssertionError(f"{spec.label} S={spec.stage}: {lat.N} sites, expected {expected}")
    return lat


def hypercubic(L: int, dim: int = 2, boundary=Boundary.PERIODIC) -> Lattice:
    """Hole-free L^dim lattice; the control case for spectral-dimension runs."""
    return Lattice(np.ones((L,) * dim, dtype=bool), boundary)


def path_graph(n: int) -> Lattice:
    """n sites on a line with fixed ends (k = 2)."""
    return Lattice(np.ones(n, dtype=bool), Boundary.FIXED)


def rle_dump(mask: np.ndarray) -> str:
    """Run-length text of an occupancy mask: ``#`` occupied, ``.`` empty.

    One line per row along the last axis; 3D masks are written slice by slice
    with a blank line between slices.
    """
    def row(r):
        out = []
        change = np.flatnonzero(np.diff(r.astype(np.int8))) + 1
        starts = np.concatenate(([0], change))
        ends = np.concatenate((change, [len(r)]))
        for a, b in zip(starts, ends):
            out.append(f"{b - a}{'#' if r[a] else '.'}")
        return "".join(out)

    if mask.ndim == 1:
        return row(mask) + "\n"
    if mask.ndim == 2:
        return "".join(row(r) + "\n" for r in mask)
    return "\n".join(rle_dump(sl) for sl in mask)
