"""Flip-flop quantum-walk search.

The state is a complex vector of length N*k stored site-major (slot
``x*k + l``).  One step applies the oracle, the Grover coin and the flip-flop
shift in that order, and the finding probability at the target is recorded
after the full step.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidTarget
from .lattice import Lattice


def uniform_state(lat: Lattice) -> np.ndarray:
    n = lat.N * lat.k
    return np.full(n, 1.0 / np.sqrt(n), dtype=np.complex128)


def _check_target(lat: Lattice, target: int) -> int:
    target = int(target)
    if not 0 <= target < lat.N:
        raise InvalidTarget(f"target {target} outside [0, {lat.N})")
    return target


def resolve_target(lat: Lattice, target=None) -> int:
    """Site id from an id, a coordinate tuple, or one of
    ``"auto"``, ``"origin"``, ``"center"``."""
    if target is None or target == "auto":
        return lat.default_target()
    if target == "center":
        return lat.center_site()
    if target == "origin":
        target = (0,) * lat.dim
    if isinstance(target, (tuple, list)):
        try:
            return lat.site(target)
        except KeyError:
            raise InvalidTarget(f"coordinate {tuple(target)} is not an occupied site") from None
    if isinstance(target, str):
        try:
            target = int(target)
        except ValueError:
            raise InvalidTarget(f"unknown target {target!r}") from None
    return _check_target(lat, target)


def apply_oracle(state: np.ndarray, lat: Lattice, target: int) -> np.ndarray:
    """Flip the sign of every link amplitude at ``target`` (in place)."""
    target = _check_target(lat, target)
    k = lat.k
    state[target * k:(target + 1) * k] *= -1
    return state


def apply_grover_coin(state: np.ndarray, k: int, out: np.ndarray | None = None) -> np.ndarray:
    """Inversion about the per-site link mean, a -> (2/k) sum(a) - a.

    Applied with the full k everywhere, including sites with missing links.
    Works in place when ``out`` is None.
    """
    a = state.reshape(-1, k)
    mean2 = a.sum(axis=1, keepdims=True)
    mean2 *= 2.0 / k
    if out is None:
        np.subtract(mean2, a, out=a)
        return state
    np.subtract(mean2, a, out=out.reshape(-1, k))
    return out


def apply_shift(state: np.ndarray, lat: Lattice, out: np.ndarray | None = None) -> np.ndarray:
    """Flip-flop shift: (x, l) -> (x + l, -l); slots with a missing neighbor stay."""
    perm = lat.shift_permutation
    if out is None:
        state[:] = state[perm]
        return state
    np.take(state, perm, out=out)
    return out


def site_probability(state: np.ndarray, k: int) -> np.ndarray:
    a = state.reshape(-1, k)
    return (a.real**2 + a.imag**2).sum(axis=1)


@dataclass
class SearchRun:
    """P(x0, t) for t = 0..T of one search."""

    target: int
    probability: np.ndarray
    lattice_meta: dict = field(default_factory=dict)
    max_norm_error: float = 0.0

    @property
    def steps(self) -> int:
        return len(self.probability) - 1

    @property
    def t(self) -> np.ndarray:
        return np.arange(len(self.probability))


class FlipFlopSearch:
    """Stateful evolution that can be advanced incrementally.

    >>> from fqsearch.lattice import FractalSpec, generate
    >>> lat = generate(FractalSpec("carpet", 3, 1, 1))
    >>> run = FlipFlopSearch(lat, 0)
    >>> run.advance(4).shape
    (4,)
    """

    def __init__(self, lat: Lattice, target: int | None = None, norm_every: int = 1024):
        self.lat = lat
        self.target = resolve_target(lat, target)
        self.k = lat.k
        self.state = uniform_state(lat)
        self._scratch = np.empty_like(self.state)
        self._perm = lat.shift_permutation
        self._slice = slice(self.target * self.k, (self.target + 1) * self.k)
        self.t = 0
        self.norm_every = norm_every
        self.max_norm_error = 0.0
        p0 = float(np.sum(np.abs(self.state[self._slice]) ** 2))
        self.history = [p0]

    def step(self) -> None:
        k = self.k
        a = self.state
        a[self._slice] *= -1
        view = a.reshape(-1, k)
        mean2 = view.sum(axis=1, keepdims=True)
        mean2 *= 2.0 / k
        np.subtract(mean2, view, out=view)
        np.take(a, self._perm, out=self._scratch)
        self.state, self._scratch = self._scratch, a
        self.t += 1

    def advance(self, steps: int) -> np.ndarray:
        """Run ``steps`` more steps and return P(x0, t) for the new times."""
        out = np.empty(steps)
        sl = self._slice
        for i in range(steps):
            self.step()
            amp = self.state[sl]
            out[i] = float(np.vdot(amp, amp).real)
            if self.norm_every and self.t % self.norm_every == 0:
                self.check_norm()
        self.history.extend(out.tolist())
        return out

    def check_norm(self) -> float:
        err = abs(float(np.vdot(self.state, self.state).real) - 1.0)
        self.max_norm_error = max(self.max_norm_error, err)
        return err

    def site_probability(self) -> np.ndarray:
        return site_probability(self.state, self.k)

    def result(self) -> SearchRun:
        self.check_norm()
        return SearchRun(
            target=self.target,
            probability=np.asarray(self.history),
            lattice_meta=self.lat.metadata(),
            max_norm_error=self.max_norm_error,
        )


def evolve(lat: Lattice, target, steps: int) -> SearchRun:
    """Search from the uniform state for ``steps`` steps, recording P(x0, t)."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    walk = FlipFlopSearch(lat, target)
    walk.advance(steps)
    return walk.result()


def dense_step_matrix(lat: Lattice, target: int) -> np.ndarray:
    """Dense S @ G @ R built straight from the occupancy mask.

    Reference implementation for small lattices; does not use the neighbor
    table or the shift permutation of ``lat``.
    """
    mask = lat.mask
    dim = mask.ndim
    k = 2 * dim
    coords = [tuple(c) for c in np.argwhere(mask)]
    ids = {c: i for i, c in enumerate(coords)}
    n = len(coords) * k
    periodic = lat.boundary.value == "periodic"

    R = np.eye(n)
    for l in range(k):
        R[target * k + l, target * k + l] = -1.0

    block = 2.0 / k * np.ones((k, k)) - np.eye(k)
    G = np.kron(np.eye(len(coords)), block)

    S = np.zeros((n, n))
    for x, c in enumerate(coords):
        for axis in range(dim):
            for sign, l, back in ((1, 2 * axis, 2 * axis + 1), (-1, 2 * axis + 1, 2 * axis)):
                d = list(c)
                d[axis] += sign
                if periodic:
                    d[axis] %= mask.shape[axis]
                y = ids.get(tuple(d))
                if y is None:
                    S[x * k + l, x * k + l] = 1.0
                else:
                    S[y * k + back, x * k + l] = 1.0
    return S @ G @ R


def dense_evolution(lat: Lattice, target: int, steps: int) -> np.ndarray:
    """P(x0, t) for t = 0..steps by repeated dense matrix-vector products."""
    U = dense_step_matrix(lat, target)
    k = 2 * lat.mask.ndim
    psi = np.full(U.shape[0], 1.0 / np.sqrt(U.shape[0]))
    out = np.empty(steps + 1)
    out[0] = np.sum(psi[target * k:(target + 1) * k] ** 2)
    for t in range(1, steps + 1):
        psi = U @ psi
        out[t] = np.sum(psi[target * k:(target + 1) * k] ** 2)
    return out
