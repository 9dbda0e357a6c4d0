"""Confidence sets from a learned CDF of a test statistic.

The pipeline: draw parameters from the prior, simulate one dataset per draw,
and form training triples (Z, lambda_obs, theta) where Z indicates whether
the matched statistic fell at or below the statistic of a decorrelated
"observed" dataset.  Regressing Z on (lambda_obs, theta) with quadratic loss
estimates P(lambda <= lambda_obs | theta); a histogram ratio over parameter
space gives the same estimate for one fixed observed dataset.  Thresholding
the estimate at tau and collecting the non-rejected grid nodes inverts the
statistic into a confidence set, and simulating repeatedly at a known theta
counts how often that theta would have been kept: the coverage probability.

Every stochastic step owns a stream derived from (seed, row index), so
results are independent of worker count and bit-identical across reruns.
"""

from __future__ import annotations

import math
import warnings
from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from confsim.core import (
    PURPOSE_SHUFFLE,
    ParamPoint,
    SeedSpec,
    UniformBoxPrior,
    derive_stream,
    map_indexed,
    prior_sample,
    purpose_stream,
)
from confsim.nn import MlpModel, forward

__all__ = [
    "TrainingTriple",
    "TripleSet",
    "CdfEstimate",
    "NetworkCdf",
    "HistogramCdf",
    "FunctionCdf",
    "GridSpec",
    "ConfidenceSet",
    "CoverageRow",
    "ExtrapolationWarning",
    "make_training_set",
    "histogram_cdf",
    "cdf_eval",
    "confidence_set",
    "coverage",
    "extract_contours",
]

Simulator = Callable[[ParamPoint, np.random.Generator], object]
Statistic = Callable[[object, ParamPoint], float]

_CHUNK = 4096


class ExtrapolationWarning(UserWarning):
    """A CDF estimate was queried outside its fitted domain."""


@dataclass(frozen=True)
class TrainingTriple:
    """Indicator Z, observed statistic lambda_obs, and parameter point."""

    z: int
    lambda_obs: float
    theta: ParamPoint

    def __post_init__(self):
        if self.z not in (0, 1):
            raise ValueError(f"z must be 0 or 1, got {self.z}")
        if math.isnan(self.lambda_obs) or self.lambda_obs == -math.inf:
            raise ValueError(f"lambda_obs must be finite or +inf, got {self.lambda_obs}")


class TripleSet(Sequence):
    """Columnar container of training triples (acts as a sequence of
    :class:`TrainingTriple`)."""

    def __init__(
        self,
        z: np.ndarray,
        lambda_obs: np.ndarray,
        thetas: np.ndarray,
        param_names: tuple[str, ...],
        n_requested: int,
        n_failed: int,
    ):
        self.z = np.asarray(z, dtype=np.uint8)
        self.lambda_obs = np.asarray(lambda_obs, dtype=float)
        self.thetas = np.asarray(thetas, dtype=float)
        self.param_names = tuple(param_names)
        self.n_requested = int(n_requested)
        self.n_failed = int(n_failed)
        if not (len(self.z) == len(self.lambda_obs) == self.thetas.shape[0]):
            raise ValueError("columns must have equal length")

    def __len__(self) -> int:
        return int(self.z.size)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return [self[j] for j in range(*i.indices(len(self)))]
        return TrainingTriple(
            int(self.z[i]),
            float(self.lambda_obs[i]),
            ParamPoint(tuple(self.thetas[i]), self.param_names),
        )

    def features(self) -> np.ndarray:
        """(n, 1 + dim) feature matrix [lambda_obs, theta...]."""
        return np.column_stack([self.lambda_obs, self.thetas])

    def targets(self) -> np.ndarray:
        return self.z.astype(float)


def _simulate_row(
    i: int,
    seed: SeedSpec,
    prior: UniformBoxPrior,
    simulator: Simulator,
) -> tuple[ParamPoint, object]:
    rng = derive_stream(seed, i)
    theta = prior_sample(prior, rng)
    return theta, simulator(theta, rng)


def make_training_set(
    simulator: Simulator,
    statistic: Statistic,
    prior: UniformBoxPrior,
    count: int,
    seed: SeedSpec,
    observed: object = "shuffle",
    workers: int = 1,
) -> TripleSet:
    """Build ``count`` training triples.

    ``observed`` selects where the "observed" statistic lambda_obs comes
    from:

    - ``"shuffle"`` (default): one global uniform permutation of the
      simulated datasets, so dataset i' is decorrelated from theta_i while
      keeping the marginal distribution of datasets unchanged;
    - ``"fresh"``: a second, independent dataset simulated at theta_i;
    - a dataset object: the same fixed observed dataset for every row
      (the construction a histogram estimate needs).

    Rows whose simulator or statistic raise, or whose matched statistic is
    not finite-or-+inf, are skipped and counted in ``n_failed``.  Output is
    bit-identical for any ``workers``.
    """
    if count < 2:
        raise ValueError("count must be at least 2")
    mode = observed if isinstance(observed, str) else "fixed"
    if mode not in ("shuffle", "fresh", "fixed"):
        raise ValueError(f"unknown observed mode {observed!r}")

    def first_pass(i: int):
        # theta, matched statistic, and (mode-dependent) the observed one
        try:
            rng = derive_stream(seed, i)
            theta = prior_sample(prior, rng)
            dataset = simulator(theta, rng)
            lam = statistic(dataset, theta)
            if math.isnan(lam) or lam == -math.inf:
                return None
            if mode == "fresh":
                lam_obs = statistic(simulator(theta, rng), theta)
            elif mode == "fixed":
                lam_obs = statistic(observed, theta)
            else:
                lam_obs = None
            return theta, lam, lam_obs
        except (ValueError, ArithmeticError, FloatingPointError):
            return None

    rows = map_indexed(first_pass, count, workers)
    ok = [i for i, r in enumerate(rows) if r is not None]

    if mode == "shuffle":
        perm = purpose_stream(seed, PURPOSE_SHUFFLE).permutation(len(ok))

        def second_pass(pos: int):
            i = ok[pos]
            theta = rows[i][0]
            source = ok[int(perm[pos])]
            try:
                _, dataset = _simulate_row(source, seed, prior, simulator)
                lam_obs = statistic(dataset, theta)
            except (ValueError, ArithmeticError, FloatingPointError):
                return None
            return lam_obs

        lam_obs_list = map_indexed(second_pass, len(ok), workers)
    else:
        lam_obs_list = [rows[i][2] for i in ok]

    z_col, lam_col, theta_col = [], [], []
    for pos, i in enumerate(ok):
        theta, lam, _ = rows[i]
        lam_obs = lam_obs_list[pos]
        if lam_obs is None or math.isnan(lam_obs) or lam_obs == -math.inf:
            continue
        z_col.append(1 if lam <= lam_obs else 0)
        lam_col.append(lam_obs)
        theta_col.append(theta.values)

    kept = len(z_col)
    return TripleSet(
        np.array(z_col, dtype=np.uint8),
        np.array(lam_col, dtype=float),
        np.array(theta_col, dtype=float).reshape(kept, prior.dim),
        prior.names,
        n_requested=count,
        n_failed=count - kept,
    )


# ---------------------------------------------------------------------------
# CDF estimates
# ---------------------------------------------------------------------------


class CdfEstimate:
    """Callable surface approximating P(lambda <= lambda_obs | theta)."""

    def evaluate(self, lambda_obs: float, theta_values: Sequence[float]) -> float:
        raise NotImplementedError

    def evaluate_batch(self, lambda_obs: np.ndarray, thetas: np.ndarray) -> np.ndarray:
        return np.array(
            [self.evaluate(l0, th) for l0, th in zip(lambda_obs, thetas)], dtype=float
        )


class NetworkCdf(CdfEstimate):
    """Trained regression network over scaled (lambda_obs, theta) features."""

    def __init__(self, model: MlpModel, domain: UniformBoxPrior | None = None):
        self.model = model
        self.domain = domain
        self._warned = False

    def _check_domain(self, thetas: np.ndarray) -> None:
        if self.domain is None or self._warned:
            return
        lows = np.asarray(self.domain.lows)
        highs = np.asarray(self.domain.highs)
        if np.any(thetas < lows) or np.any(thetas > highs):
            self._warned = True
            warnings.warn(
                "CDF network evaluated outside its training domain; "
                "extrapolated values returned",
                ExtrapolationWarning,
                stacklevel=3,
            )

    def evaluate_batch(self, lambda_obs: np.ndarray, thetas: np.ndarray) -> np.ndarray:
        lambda_obs = np.asarray(lambda_obs, dtype=float)
        thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        self._check_domain(thetas)
        out = np.empty(lambda_obs.shape[0])
        inf_mask = np.isposinf(lambda_obs)
        finite = ~inf_mask
        if np.any(finite):
            feats = np.column_stack([lambda_obs[finite], thetas[finite]])
            out[finite] = forward(self.model, feats)
        out[inf_mask] = 1.0  # P(lambda <= +inf) is 1 by definition
        return out

    def evaluate(self, lambda_obs: float, theta_values: Sequence[float]) -> float:
        return float(
            self.evaluate_batch(
                np.array([lambda_obs]), np.asarray(theta_values, dtype=float)[None, :]
            )[0]
        )


class HistogramCdf(CdfEstimate):
    """Per-bin ratio (sum of Z) / (count) over a parameter-space histogram,
    valid for the single observed dataset its triples were built with.
    Empty bins are invalid and evaluate to NaN."""

    def __init__(self, edges: list[np.ndarray], values: np.ndarray, counts: np.ndarray):
        self.edges = [np.asarray(e, dtype=float) for e in edges]
        self.values = np.asarray(values, dtype=float)
        self.counts = np.asarray(counts)
        self._warned = False

    @property
    def valid(self) -> np.ndarray:
        return self.counts > 0

    def _bin_index(self, theta_values: np.ndarray) -> tuple[int, ...] | None:
        idx = []
        for v, e in zip(theta_values, self.edges):
            if v < e[0] or v > e[-1]:
                return None
            k = int(np.searchsorted(e, v, side="right") - 1)
            idx.append(min(k, len(e) - 2))
        return tuple(idx)

    def evaluate(self, lambda_obs: float, theta_values: Sequence[float]) -> float:
        # lambda_obs is implicit: the histogram was built for one fixed
        # observed dataset
        idx = self._bin_index(np.asarray(theta_values, dtype=float))
        if idx is None:
            if not self._warned:
                self._warned = True
                warnings.warn(
                    "histogram CDF queried outside its binned domain",
                    ExtrapolationWarning,
                    stacklevel=2,
                )
            return math.nan
        if not self.counts[idx] > 0:
            return math.nan
        return float(self.values[idx])


class FunctionCdf(CdfEstimate):
    """Wrap an exact or reference CDF callable f(lambda_obs, theta_values)."""

    def __init__(self, fn: Callable[[float, np.ndarray], float]):
        self.fn = fn

    def evaluate(self, lambda_obs: float, theta_values: Sequence[float]) -> float:
        val = float(self.fn(lambda_obs, np.asarray(theta_values, dtype=float)))
        return min(max(val, 0.0), 1.0)


def histogram_cdf(
    triples: TripleSet,
    bins: int | Sequence[int] = 10,
    box: UniformBoxPrior | None = None,
) -> HistogramCdf:
    """Histogram ratio estimate of the CDF for one fixed observed dataset.

    Every triple must have been built against the same observed dataset
    (``observed=<dataset>`` in :func:`make_training_set`).  Bins that receive
    no parameter points are marked invalid.
    """
    if len(triples) == 0:
        raise ValueError("cannot histogram an empty triple set")
    dim = triples.thetas.shape[1]
    if isinstance(bins, int):
        bins = [bins] * dim
    if any(b < 2 for b in bins):
        raise ValueError("need at least 2 bins per dimension")
    if box is not None:
        ranges = list(zip(box.lows, box.highs))
    else:
        ranges = [(triples.thetas[:, k].min(), triples.thetas[:, k].max()) for k in range(dim)]
    counts, edges = np.histogramdd(triples.thetas, bins=bins, range=ranges)
    weighted, _ = np.histogramdd(
        triples.thetas, bins=bins, range=ranges, weights=triples.targets()
    )
    if not np.any(counts > 0):
        raise ValueError("all histogram bins are empty")
    with np.errstate(invalid="ignore", divide="ignore"):
        values = np.where(counts > 0, weighted / np.maximum(counts, 1), math.nan)
    return HistogramCdf(list(edges), values, counts.astype(int))


def cdf_eval(est: CdfEstimate, lambda_obs: float, theta: ParamPoint) -> float:
    """Point evaluation of an estimated CDF at (lambda_obs, theta)."""
    return est.evaluate(lambda_obs, theta.values)


# ---------------------------------------------------------------------------
# Confidence sets
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GridSpec:
    """Rectangular evaluation lattice over a parameter box."""

    lows: tuple[float, ...]
    highs: tuple[float, ...]
    shape: tuple[int, ...]
    names: tuple[str, ...] = ()

    def __post_init__(self):
        if not (len(self.lows) == len(self.highs) == len(self.shape)):
            raise ValueError("lows, highs, shape must have equal length")
        if any(n < 2 for n in self.shape):
            raise ValueError("need at least 2 nodes per axis")
        if any(lo >= hi for lo, hi in zip(self.lows, self.highs)):
            raise ValueError("invalid grid box")
        if not self.names:
            object.__setattr__(
                self, "names", tuple(f"theta{i}" for i in range(len(self.lows)))
            )

    @property
    def axes(self) -> list[np.ndarray]:
        return [
            np.linspace(lo, hi, n)
            for lo, hi, n in zip(self.lows, self.highs, self.shape)
        ]

    def nodes(self) -> np.ndarray:
        """(prod(shape), dim) array of node coordinates, C order."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.column_stack([m.ravel() for m in mesh])


@dataclass(frozen=True)
class ConfidenceSet:
    """Thresholded CDF surface for one observed dataset."""

    grid: GridSpec
    lambda_obs: np.ndarray   # statistic of the observed data at each node
    phat: np.ndarray         # estimated CDF at each node (NaN = invalid)
    taus: tuple[float, ...]
    masks: dict              # tau -> boolean inclusion array
    boundaries: dict         # tau -> list of (k, 2) polylines
    best_fit: ParamPoint


@dataclass(frozen=True)
class CoverageRow:
    theta: ParamPoint
    tau: float
    p: float
    stderr: float
    T: int

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"coverage probability out of range: {self.p}")


def confidence_set(
    est: CdfEstimate,
    observed: object,
    statistic: Statistic,
    grid: GridSpec,
    taus: Sequence[float],
) -> ConfidenceSet:
    """Neyman construction on a grid: include node theta at level tau iff
    the estimated P(lambda <= lambda(observed, theta) | theta) <= tau.

    Boundaries are iso-contours of the estimated CDF at each tau, and the
    best fit is the grid argmin of the estimated CDF.  An empty mask at some
    tau is legitimate output, not an error.
    """
    taus = tuple(float(t) for t in taus)
    if any(not 0.0 < t < 1.0 for t in taus):
        raise ValueError("each tau must lie strictly inside (0, 1)")
    nodes = grid.nodes()
    lam = np.array(
        [statistic(observed, ParamPoint(tuple(v), grid.names)) for v in nodes]
    )
    phat = est.evaluate_batch(lam, nodes).reshape(grid.shape)
    lam = lam.reshape(grid.shape)

    masks = {}
    boundaries = {}
    axes = grid.axes
    for tau in taus:
        with np.errstate(invalid="ignore"):
            masks[tau] = (phat <= tau) & np.isfinite(phat)
        if len(grid.shape) == 2:
            boundaries[tau] = extract_contours(phat, tau, axes=axes)
        else:
            boundaries[tau] = []
    finite = np.isfinite(phat)
    if not np.any(finite):
        raise ValueError("estimated CDF is invalid on the whole grid")
    flat = np.where(finite, phat, np.inf).ravel()
    best = nodes[int(np.argmin(flat))]
    return ConfidenceSet(
        grid, lam, phat, taus, masks, boundaries, ParamPoint(tuple(best), grid.names)
    )


def coverage(
    est: CdfEstimate,
    simulator: Simulator,
    statistic: Statistic,
    theta: ParamPoint,
    taus: Sequence[float],
    T: int,
    seed: SeedSpec,
    workers: int = 1,
) -> list[CoverageRow]:
    """Empirical coverage of the estimator-driven construction at ``theta``.

    Simulates T datasets at theta, evaluates the estimated CDF at each
    simulated statistic, and counts how often the value stays at or below
    tau; the standard error is binomial.  Failed simulations are skipped and
    reduce the effective T.
    """
    if T < 100:
        raise ValueError("T must be at least 100 for a meaningful coverage estimate")
    taus = tuple(float(t) for t in taus)

    def one(i: int):
        try:
            rng = derive_stream(seed, i)
            d = simulator(theta, rng)
            return statistic(d, theta)
        except (ValueError, ArithmeticError, FloatingPointError):
            return math.nan

    lam = np.array(map_indexed(one, T, workers))
    good = ~np.isnan(lam)
    n_eff = int(good.sum())
    if n_eff == 0:
        raise ValueError("every simulation failed during coverage evaluation")
    phat = est.evaluate_batch(lam[good], np.tile(theta.as_array(), (n_eff, 1)))
    rows = []
    for tau in taus:
        p = float(np.mean(phat <= tau))
        rows.append(
            CoverageRow(theta, tau, p, math.sqrt(p * (1.0 - p) / n_eff), n_eff)
        )
    return rows


# ---------------------------------------------------------------------------
# Marching squares
# ---------------------------------------------------------------------------

def _cell_segments(level, v00, v10, v11, v01):
    # Corner b=True means value <= level.  Returns pairs of local edge ids
    # ('b','r','t','l') to connect.
    b00, b10, b11, b01 = (v <= level for v in (v00, v10, v11, v01))
    case = b00 | (b10 << 1) | (b11 << 2) | (b01 << 3)
    table = {
        0: [], 15: [],
        1: [("l", "b")], 14: [("l", "b")],
        2: [("b", "r")], 13: [("b", "r")],
        3: [("l", "r")], 12: [("l", "r")],
        4: [("r", "t")], 11: [("r", "t")],
        6: [("b", "t")], 9: [("b", "t")],
        7: [("l", "t")], 8: [("l", "t")],
    }
    if case in table:
        return table[case]
    center = 0.25 * (v00 + v10 + v11 + v01) <= level
    if case == 5:
        # (0,0) and (1,1) inside: center decides whether they join diagonally
        return [("b", "r"), ("l", "t")] if center else [("l", "b"), ("r", "t")]
    # case 10: (1,0) and (0,1) inside
    return [("l", "b"), ("r", "t")] if center else [("b", "r"), ("l", "t")]


def extract_contours(
    values: np.ndarray, level: float, axes: Sequence[np.ndarray]
) -> list[np.ndarray]:
    """Iso-lines of a 2-d scalar grid at ``level`` by marching squares.

    Crossing points are linearly interpolated along cell edges; segments
    sharing a grid edge are chained into polylines, and a polyline whose ends
    meet is emitted closed (first point repeated last).  Cells touching a
    NaN node are skipped, so invalid regions simply truncate contours.
    """
    v = np.asarray(values, dtype=float)
    if v.ndim != 2:
        raise ValueError("contour extraction expects a 2-d grid")
    x, y = (np.asarray(a, dtype=float) for a in axes)
    if v.shape != (x.size, y.size):
        raise ValueError(f"grid shape {v.shape} does not match axes ({x.size}, {y.size})")

    # global edge key: ("x", i, j) = edge (i,j)-(i+1,j); ("y", i, j) = (i,j)-(i,j+1)
    def edge_key(i, j, local):
        return {
            "b": ("x", i, j),
            "t": ("x", i, j + 1),
            "l": ("y", i, j),
            "r": ("y", i + 1, j),
        }[local]

    points: dict = {}

    def crossing(key):
        if key in points:
            return True
        kind, i, j = key
        if kind == "x":
            v0, v1 = v[i, j], v[i + 1, j]
            p0 = (x[i], y[j])
            p1 = (x[i + 1], y[j])
        else:
            v0, v1 = v[i, j], v[i, j + 1]
            p0 = (x[i], y[j])
            p1 = (x[i], y[j + 1])
        if (v0 <= level) == (v1 <= level):
            return False
        t = (level - v0) / (v1 - v0)
        points[key] = (p0[0] + t * (p1[0] - p0[0]), p0[1] + t * (p1[1] - p0[1]))
        return True

    adjacency: dict = {}
    segments = []
    for i in range(v.shape[0] - 1):
        for j in range(v.shape[1] - 1):
            corners = (v[i, j], v[i + 1, j], v[i + 1, j + 1], v[i, j + 1])
            if any(math.isnan(c) for c in corners):
                continue
            for a, b in _cell_segments(level, *corners):
                ka, kb = edge_key(i, j, a), edge_key(i, j, b)
                if not (crossing(ka) and crossing(kb)):
                    continue  # degenerate flat cell
                seg = len(segments)
                segments.append((ka, kb))
                adjacency.setdefault(ka, []).append(seg)
                adjacency.setdefault(kb, []).append(seg)

    used = [False] * len(segments)
    polylines = []
    for start in range(len(segments)):
        if used[start]:
            continue
        used[start] = True
        ka, kb = segments[start]
        chain = [ka, kb]
        # extend forward then backward
        for end in (True, False):
            while True:
                tip = chain[-1] if end else chain[0]
                nxt = None
                for s in adjacency.get(tip, []):
                    if not used[s]:
                        nxt = s
                        break
                if nxt is None:
                    break
                used[nxt] = True
                a, b = segments[nxt]
                other = b if a == tip else a
                if end:
                    chain.append(other)
                else:
                    chain.insert(0, other)
            if chain[0] == chain[-1]:
                break  # closed loop
        coords = np.array([points[k] for k in chain])
        polylines.append(coords)
    return polylines
