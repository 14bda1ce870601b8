"""Exact event-driven simulation of the two-type contact model on a torus.

Every particle dies at rate 1. A (+) particle seeds (+) offspring at rate
``lambda_plus``; a (-) particle seeds (-) offspring at rate ``lambda_minus``
and (+) offspring at rate ``lambda_cross``. Offspring are placed at the
parent position plus a kernel displacement, wrapped to ``[0, L)^d``.

Replicas use two independent random streams. The (-) stream drives every (-)
event, the (+) stream every (+) event (including cross births). Because the
(-) system never depends on (+) particles, the (-) trajectory of a replica is
bit-identical whatever the (+) parameters are.
"""
from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

from .model import Kernel, ModelParams

CHANNELS = ("death_plus", "birth_plus", "death_minus", "birth_minus", "birth_cross")
PAIR_KEYS = ("pp", "pm", "mm")


@dataclass(frozen=True)
class SimConfig:
    box_length: float
    d: int = 3
    t_end: float = 5.0
    snapshots: tuple = (0.0, 1.0, 2.0, 4.0)
    seed: int = 0
    replicas: int = 100
    bin_width: float = 0.25
    c_plus: float = 0.0
    c_minus: float = 1.0
    r_max: Optional[float] = None
    max_population: int = 100_000
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "snapshots", tuple(sorted(float(s) for s in self.snapshots)))

    @property
    def volume(self) -> float:
        return self.box_length**self.d

    @property
    def bin_edges(self) -> np.ndarray:
        r_max = self.r_max if self.r_max is not None else min(self.box_length / 4, 20 * self.bin_width)
        nbins = max(1, int(math.floor(r_max / self.bin_width + 1e-9)))
        return self.bin_width * np.arange(nbins + 1)

    def violations(self) -> list:
        out = []
        if not self.box_length > 0:
            out.append("box_length must be > 0")
            return out
        if self.d not in (1, 2, 3):
            out.append("d must be 1, 2 or 3")
        if not self.bin_width > 0:
            out.append("bin_width must be > 0")
        if self.t_end < 0:
            out.append("t_end must be >= 0")
        if any(s < 0 or s > self.t_end for s in self.snapshots):
            out.append("snapshot times must lie in [0, t_end]")
        if self.replicas < 1:
            out.append("replicas must be >= 1")
        for name, c in (("c_plus", self.c_plus), ("c_minus", self.c_minus)):
            if c < 0:
                out.append(f"{name} must be >= 0")
            elif c > 0 and c * self.volume < 10:
                out.append(f"{name} * L^d = {c * self.volume:.3g} < 10 expected initial particles")
        if self.bin_width > 0 and self.bin_edges[-1] > self.box_length / 2:
            out.append("r_max must not exceed L/2 (torus metric)")
        return out

    def validate(self):
        errs = self.violations()
        if errs:
            raise ValueError("; ".join(errs))


@dataclass(frozen=True, eq=False)
class Configuration:
    plus_points: np.ndarray
    minus_points: np.ndarray

    @property
    def n_plus(self) -> int:
        return len(self.plus_points)

    @property
    def n_minus(self) -> int:
        return len(self.minus_points)

    def is_empty(self) -> bool:
        return self.n_plus == 0 and self.n_minus == 0


@dataclass(frozen=True, eq=False)
class EstimateSeries:
    """Replica averages at each snapshot.

    Arrays indexed ``[snapshot]`` (densities) or ``[snapshot, bin]`` (pairs);
    standard errors are across replicas. ``counts`` holds the raw per-replica
    ``(n_plus, n_minus)`` with shape ``(replicas, snapshots, 2)``.
    """

    times: np.ndarray
    density_plus: np.ndarray
    density_plus_se: np.ndarray
    density_minus: np.ndarray
    density_minus_se: np.ndarray
    bin_edges: np.ndarray
    pair: dict
    pair_se: dict
    counts: np.ndarray
    pair_samples: dict
    guard_tripped: np.ndarray
    replicas: int

    @property
    def bin_centers(self) -> np.ndarray:
        return 0.5 * (self.bin_edges[1:] + self.bin_edges[:-1])

    @property
    def status(self) -> str:
        return "guard_tripped" if self.guard_tripped.any() else "ok"


# -- random streams -------------------------------------------------------

class _Stream:
    """Buffered draws from one Generator; buffering keeps the per-event cost low."""

    _BLOCK = 2048

    def __init__(self, rng: np.random.Generator):
        self.rng = rng
        self._u = np.empty(0)
        self._ui = 0
        self._e = np.empty(0)
        self._ei = 0
        self._disp = {}

    def uniform(self) -> float:
        if self._ui >= len(self._u):
            self._u = self.rng.random(self._BLOCK)
            self._ui = 0
        self._ui += 1
        return self._u[self._ui - 1]

    def exponential(self) -> float:
        if self._ei >= len(self._e):
            self._e = self.rng.standard_exponential(self._BLOCK)
            self._ei = 0
        self._ei += 1
        return self._e[self._ei - 1]

    def index(self, n: int) -> int:
        return min(int(self.uniform() * n), n - 1)

    def displacement(self, kernel: Kernel) -> np.ndarray:
        buf, i = self._disp.get(kernel, (None, 0))
        if buf is None or i >= len(buf):
            buf, i = kernel.sample(self.rng, self._BLOCK), 0
        self._disp[kernel] = (buf, i + 1)
        return buf[i]


class _PointSet:
    """Growable point array with O(1) insertion and swap-removal."""

    def __init__(self, points: np.ndarray, d: int):
        n = len(points)
        self.data = np.empty((max(16, 2 * n), d))
        self.data[:n] = points
        self.n = n
        self.keys = {p.tobytes() for p in self.data[:n]}

    def add(self, x: np.ndarray):
        if self.n == len(self.data):
            self.data = np.concatenate([self.data, np.empty_like(self.data)])
        self.data[self.n] = x
        self.n += 1
        self.keys.add(x.tobytes())

    def remove(self, i: int):
        self.keys.discard(self.data[i].tobytes())
        self.n -= 1
        self.data[i] = self.data[self.n]

    def points(self) -> np.ndarray:
        return self.data[: self.n].copy()


def _wrap(x: np.ndarray, L: float) -> np.ndarray:
    y = np.mod(x, L)
    # mod can round up to exactly L for tiny negative inputs
    y[y >= L] = 0.0
    return y


def _offspring(parent, kernel: Kernel, L: float, stream: _Stream, forbidden: set) -> np.ndarray:
    """Birth position, redrawn on an exact coincidence with a point of the other type."""
    while True:
        x = _wrap(parent + stream.displacement(kernel), L)
        if x.tobytes() not in forbidden:
            return x


# -- public operations ----------------------------------------------------

def init_poisson(params: ModelParams, c_plus: float, c_minus: float, simcfg: SimConfig,
                 rng: np.random.Generator, rng_plus: Optional[np.random.Generator] = None) -> Configuration:
    """Independent Poisson point processes of intensities ``c_plus``, ``c_minus`` on the box.

    With ``rng_plus`` given, (+) points come from that generator and (-)
    points from ``rng``.
    """
    rng_plus = rng if rng_plus is None else rng_plus
    L, d = simcfg.box_length, simcfg.d
    minus = rng.random((rng.poisson(c_minus * L**d), d)) * L
    plus = rng_plus.random((rng_plus.poisson(c_plus * L**d), d)) * L
    if plus.size and minus.size:
        taken = {p.tobytes() for p in minus}
        plus = np.array([p for p in plus if p.tobytes() not in taken]).reshape(-1, d)
    return Configuration(plus, minus)


def total_rate(params: ModelParams, n_plus: int, n_minus: int) -> float:
    return n_plus * (1 + params.lambda_plus) + n_minus * (1 + params.lambda_minus + params.lambda_cross)


def channel_rates(params: ModelParams, n_plus: int, n_minus: int) -> np.ndarray:
    return np.array([n_plus, params.lambda_plus * n_plus, n_minus,
                     params.lambda_minus * n_minus, params.lambda_cross * n_minus], dtype=float)


def step(params: ModelParams, config: Configuration, rng: np.random.Generator, box_length: float):
    """One event of the direct method.

    Returns ``(event, new_config, waiting_time, total_rate)``; ``event`` is
    ``None`` (and the waiting time infinite) in the absorbing empty state.
    """
    rates = channel_rates(params, config.n_plus, config.n_minus)
    total = float(rates.sum())
    if total == 0:
        return None, config, math.inf, 0.0
    wait = rng.exponential(1 / total)
    event = CHANNELS[min(int(np.searchsorted(np.cumsum(rates), rng.random() * total, side="right")), 4)]
    plus, minus = config.plus_points, config.minus_points
    if event == "death_plus":
        plus = np.delete(plus, rng.integers(len(plus)), axis=0)
    elif event == "death_minus":
        minus = np.delete(minus, rng.integers(len(minus)), axis=0)
    else:
        if event == "birth_plus":
            parent, kernel, other = plus[rng.integers(len(plus))], params.kernel_plus, minus
        elif event == "birth_minus":
            parent, kernel, other = minus[rng.integers(len(minus))], params.kernel_minus, plus
        else:
            parent, kernel, other = minus[rng.integers(len(minus))], params.kernel_cross, minus
        taken = {p.tobytes() for p in other}
        while True:
            x = _wrap(parent + kernel.sample(rng, 1)[0], box_length)
            if x.tobytes() not in taken:
                break
        if event == "birth_minus":
            minus = np.vstack([minus, x])
        else:
            plus = np.vstack([plus, x])
    return event, Configuration(plus, minus), wait, total


def pair_histogram(a: np.ndarray, b: Optional[np.ndarray], edges: np.ndarray, L: float) -> np.ndarray:
    """Ordered pair counts per distance bin with the torus metric (``b=None``: pairs within ``a``)."""
    nb = len(edges) - 1
    if len(a) == 0 or (b is not None and len(b) == 0):
        return np.zeros(nb)
    ta = cKDTree(a, boxsize=L)
    # counts pairs with distance <= r; bin [r_i, r_{i+1}) up to null sets
    cum = ta.count_neighbors(ta if b is None else cKDTree(b, boxsize=L), edges).astype(float)
    if b is None:
        cum -= len(a)
    return np.diff(cum)


def shell_volumes(edges: np.ndarray, d: int) -> np.ndarray:
    ball = math.pi ** (d / 2) / math.gamma(d / 2 + 1)
    return ball * np.diff(edges**d)


def pair_estimates(config: Configuration, edges: np.ndarray, L: float, d: int) -> dict:
    """Binned estimates of ``k^{++}``, ``k^{+-}``, ``k^{--}`` from one configuration."""
    norm = L**d * shell_volumes(edges, d)
    return {"pp": pair_histogram(config.plus_points, None, edges, L) / norm,
            "pm": pair_histogram(config.plus_points, config.minus_points, edges, L) / norm,
            "mm": pair_histogram(config.minus_points, None, edges, L) / norm}


@dataclass
class ReplicaResult:
    index: int
    counts: np.ndarray
    pairs: dict
    guard_tripped: bool
    events: int


def run_replica(params: ModelParams, simcfg: SimConfig, index: int, seeds=None,
                record_pairs: bool = True) -> ReplicaResult:
    """Simulate one replica up to ``t_end``, recording the snapshot grid."""
    if seeds is None:
        seeds = np.random.SeedSequence(simcfg.seed).spawn(simcfg.replicas)[index].spawn(2)
    minus_stream = _Stream(np.random.default_rng(seeds[0]))
    plus_stream = _Stream(np.random.default_rng(seeds[1]))
    L, d = simcfg.box_length, simcfg.d
    init = init_poisson(params, simcfg.c_plus, simcfg.c_minus, simcfg, minus_stream.rng, plus_stream.rng)
    plus, minus = _PointSet(init.plus_points, d), _PointSet(init.minus_points, d)
    edges = simcfg.bin_edges
    snaps = list(simcfg.snapshots)
    counts = np.full((len(snaps), 2), np.nan)
    pairs = {k: np.full((len(snaps), len(edges) - 1), np.nan) for k in PAIR_KEYS}

    lp, lm, lam = params.lambda_plus, params.lambda_minus, params.lambda_cross
    t = 0.0
    next_minus = math.inf
    minus_dirty = True
    si, events, tripped = 0, 0, False
    while si < len(snaps):
        if minus_dirty:
            rate_m = minus.n * (1 + lm)
            next_minus = t + minus_stream.exponential() / rate_m if rate_m > 0 else math.inf
            minus_dirty = False
        rate_p = plus.n * (1 + lp) + lam * minus.n
        next_plus = t + plus_stream.exponential() / rate_p if rate_p > 0 else math.inf
        t_next = min(next_minus, next_plus)
        while si < len(snaps) and snaps[si] < t_next:
            conf = Configuration(plus.points(), minus.points())
            counts[si] = conf.n_plus, conf.n_minus
            if record_pairs:
                for k, v in pair_estimates(conf, edges, L, d).items():
                    pairs[k][si] = v
            si += 1
        if si == len(snaps) or math.isinf(t_next):
            break
        t = t_next
        events += 1
        if next_minus <= next_plus:
            minus_dirty = True
            if minus_stream.uniform() * (1 + lm) < 1:
                minus.remove(minus_stream.index(minus.n))
            else:
                parent = minus.data[minus_stream.index(minus.n)]
                minus.add(_offspring(parent, params.kernel_minus, L, minus_stream, plus.keys))
        else:
            u = plus_stream.uniform() * rate_p
            if u < plus.n:
                plus.remove(plus_stream.index(plus.n))
            elif u < plus.n * (1 + lp):
                parent = plus.data[plus_stream.index(plus.n)]
                plus.add(_offspring(parent, params.kernel_plus, L, plus_stream, minus.keys))
            else:
                parent = minus.data[plus_stream.index(minus.n)]
                plus.add(_offspring(parent, params.kernel_cross, L, plus_stream, minus.keys))
        if plus.n + minus.n > simcfg.max_population:
            tripped = True
            break
    return ReplicaResult(index, counts, pairs, tripped, events)


def _run_chunk(args):
    params, simcfg, indices, record_pairs = args
    seeds = np.random.SeedSequence(simcfg.seed).spawn(simcfg.replicas)
    return [run_replica(params, simcfg, i, seeds[i].spawn(2), record_pairs) for i in indices]


def _mean_se(x: np.ndarray, axis: int = 0):
    # snapshots after a guard trip are NaN; all-NaN slices give NaN without a warning
    n = np.sum(~np.isnan(x), axis=axis)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        mean = np.nanmean(x, axis=axis)
        sd = np.nanstd(x, axis=axis, ddof=1)
    sd = np.where(n > 1, sd, np.nan)
    return mean, sd / np.sqrt(np.maximum(n, 1))


def run_replicas(params: ModelParams, simcfg: SimConfig, record_pairs: bool = True) -> EstimateSeries:
    """Run all replicas (optionally in worker processes) and aggregate by replica index."""
    simcfg.validate()
    if params.d != simcfg.d:
        raise ValueError(f"kernel dimension {params.d} differs from simulation dimension {simcfg.d}")
    indices = list(range(simcfg.replicas))
    workers = max(1, min(simcfg.workers, simcfg.replicas))
    if workers == 1:
        results = _run_chunk((params, simcfg, indices, record_pairs))
    else:
        chunks = [indices[i::workers] for i in range(workers)]
        with ProcessPoolExecutor(workers) as pool:
            results = [r for part in pool.map(_run_chunk, [(params, simcfg, c, record_pairs) for c in chunks])
                       for r in part]
    results.sort(key=lambda r: r.index)

    counts = np.stack([r.counts for r in results])
    dens = counts / simcfg.volume
    dp, dp_se = _mean_se(dens[:, :, 0])
    dm, dm_se = _mean_se(dens[:, :, 1])
    samples = {k: np.stack([r.pairs[k] for r in results]) for k in PAIR_KEYS}
    pair, pair_se = {}, {}
    for k in PAIR_KEYS:
        pair[k], pair_se[k] = _mean_se(samples[k])
    return EstimateSeries(np.array(simcfg.snapshots), dp, dp_se, dm, dm_se, simcfg.bin_edges,
                          pair, pair_se, counts, samples,
                          np.array([r.guard_tripped for r in results]), simcfg.replicas)


def default_workers() -> int:
    """Worker count from ``CONTACTCORR_THREADS`` (default 1)."""
    try:
        return max(1, int(os.environ.get("CONTACTCORR_THREADS", "1")))
    except ValueError:
        return 1
