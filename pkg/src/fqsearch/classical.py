"""Monte Carlo return probability of a discrete-time random walk and the
spectral dimension read off its power-law decay.

Each step the walker picks one of the k links uniformly and moves along it;
a missing neighbor means it stays put.  Trials are processed in fixed-size
blocks and block ``b`` draws from a Philox stream keyed by ``(seed, b)``, so
the counts do not depend on the number of worker threads.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import InsufficientData, InvalidStart
from .lattice import SELF, Lattice

BLOCK = 1 << 15
MIN_FIT_POINTS = 10


@dataclass
class ReturnProbabilityCurve:
    start: int
    trials: int
    counts: np.ndarray
    n_sites: int = 0
    seed: int | None = None

    @property
    def horizon(self) -> int:
        return len(self.counts) - 1

    @property
    def probability(self) -> np.ndarray:
        return self.counts / self.trials


@dataclass(frozen=True)
class SpectralEstimate:
    d_s: float
    stderr: float
    window: tuple
    points: int

    def to_dict(self) -> dict:
        return {"dS": self.d_s, "stderr": self.stderr, "window": list(self.window),
                "pointsUsed": self.points}


def block_rng(seed: int, block: int, stream: int = 0) -> np.random.Generator:
    key = np.random.SeedSequence(seed, spawn_key=(stream, block))
    return np.random.Generator(np.random.Philox(key))


def _walk_block(nbr: np.ndarray, start: int, size: int, horizon: int,
                rng: np.random.Generator, chunk: int = 256) -> np.ndarray:
    k = nbr.shape[1]
    flat = nbr.ravel()
    pos = np.full(size, start, dtype=np.int64)
    counts = np.zeros(horizon + 1, dtype=np.int64)
    counts[0] = size
    t = 1
    while t <= horizon:
        m = min(chunk, horizon - t + 1)
        dirs = rng.integers(0, k, size=(m, size), dtype=np.int64)
        for row in dirs:
            nxt = flat[pos * k + row]
            np.copyto(pos, nxt, where=nxt != SELF)
            counts[t] = np.count_nonzero(pos == start)
            t += 1
    return counts


def simulate_return_probability(lat: Lattice, start: int, trials: int, horizon: int,
                                seed: int = 0, threads: int = 1, block: int = BLOCK,
                                stream: int = 0) -> ReturnProbabilityCurve:
    """counts[t] = number of trials found at ``start`` after t steps.

    ``stream`` separates the random streams of independent runs sharing a seed.
    """
    if not 0 <= int(start) < lat.N:
        raise InvalidStart(f"start {start} is not an occupied site id in [0, {lat.N})")
    if trials < 1 or horizon < 1:
        raise ValueError("trials and horizon must be >= 1")
    start = int(start)
    nbr = np.ascontiguousarray(lat.neighbors, dtype=np.int64)
    sizes = [min(block, trials - b0) for b0 in range(0, trials, block)]

    def job(b):
        return _walk_block(nbr, start, sizes[b], horizon, block_rng(seed, b, stream))

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(job, range(len(sizes))))
    else:
        parts = [job(b) for b in range(len(sizes))]
    counts = np.sum(parts, axis=0)
    return ReturnProbabilityCurve(start=start, trials=trials, counts=counts,
                                  n_sites=lat.N, seed=seed)


def default_window(curve: ReturnProbabilityCurve, t_min: int = 10,
                   noise_counts: float = 5.0, plateau_factor: float = 10.0) -> tuple:
    """Fit window [t_min, t_max] ending before the noise floor or the plateau.

    t_max is the last even step before P_c first drops under
    ``noise_counts / trials`` or under ``plateau_factor / N`` (the walk has then
    felt the finite lattice; the equilibrium return probability is 1/N, or
    2/N on bipartite graphs).
    """
    p = curve.probability
    floor = noise_counts / curve.trials
    if curve.n_sites:
        floor = max(floor, plateau_factor / curve.n_sites)
    t = np.arange(len(p))
    even = (t >= t_min) & (t % 2 == 0)
    below = np.flatnonzero(even & (p < floor))
    t_max = int(below[0]) - 2 if len(below) else int(t[even][-1]) if even.any() else t_min
    return t_min, max(t_min, t_max)


def fit_spectral_dimension(curve: ReturnProbabilityCurve, window: tuple | None = None) -> SpectralEstimate:
    """d_s = -2 * slope of ln P_c against ln t over nonzero even steps in ``window``."""
    if window is None:
        window = default_window(curve)
    t_min, t_max = int(window[0]), int(window[1])
    if t_min < 1 or t_max > curve.horizon or t_min > t_max:
        raise InsufficientData(f"window {window} not inside [1, {curve.horizon}]")
    t = np.arange(t_min, t_max + 1)
    p = curve.probability[t_min:t_max + 1]
    keep = (t % 2 == 0) & (p > 0)
    if keep.sum() < MIN_FIT_POINTS:
        raise InsufficientData(f"only {int(keep.sum())} usable points in window {window}")
    fit = stats.linregress(np.log(t[keep]), np.log(p[keep]))
    return SpectralEstimate(d_s=-2.0 * fit.slope, stderr=2.0 * fit.stderr,
                            window=(t_min, t_max), points=int(keep.sum()))


def averaged_return_probability(lat: Lattice, starts, trials: int, horizon: int,
                                seed: int = 0, threads: int = 1) -> ReturnProbabilityCurve:
    """Return-probability curve pooled over several start sites.

    ``trials`` is split as evenly as possible across ``starts``; start ``r``
    uses random stream ``r``.
    """
    starts = np.atleast_1d(np.asarray(starts, dtype=np.int64))
    if len(starts) == 0:
        raise InvalidStart("no start sites given")
    share = np.full(len(starts), trials // len(starts))
    share[:trials % len(starts)] += 1
    counts = np.zeros(horizon + 1, dtype=np.int64)
    used = 0
    for r, (st, n) in enumerate(zip(starts, share)):
        if n == 0:
            continue
        part = simulate_return_probability(lat, int(st), int(n), horizon, seed=seed,
                                           threads=threads, stream=r)
        counts += part.counts
        used += int(n)
    start = int(starts[0]) if len(starts) == 1 else -1
    return ReturnProbabilityCurve(start=start, trials=used, counts=counts,
                                  n_sites=lat.N, seed=seed)


def random_starts(lat: Lattice, count: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(1 << 20,)))
    return rng.choice(lat.N, size=count, replace=False)
