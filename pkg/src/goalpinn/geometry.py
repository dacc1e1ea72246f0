"""Computational domains, uniform samplers, and indicator-driven resampling.

Domains expose exact volume and boundary measures together with uniform
interior/boundary samplers.  Resampling draws collocation points from the
discrete density proportional to |indicator| over a uniform candidate
pool, which keeps the whole pipeline mesh-free.
"""

from __future__ import annotations

import csv
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DegenerateDensityError, DimensionMismatchError

BOUNDARY_TOL = 1e-12


def unit_ball_volume(d: int) -> float:
    return math.pi ** (d / 2.0) / math.gamma(d / 2.0 + 1.0)


def substream(master_seed: int, *path: int) -> np.random.Generator:
    """Independent deterministic random stream derived from a master seed.

    Streams for different ``path`` tuples are statistically independent, so
    samplers never share mutable state.
    """
    seq = np.random.SeedSequence(entropy=int(master_seed), spawn_key=tuple(int(p) for p in path))
    return np.random.default_rng(seq)


class Domain(ABC):
    """A bounded domain with exact measures and uniform samplers."""

    dim: int

    @property
    @abstractmethod
    def volume(self) -> float: ...

    @property
    @abstractmethod
    def boundary_measure(self) -> float: ...

    @abstractmethod
    def contains(self, X: np.ndarray) -> np.ndarray:
        """Boolean mask: which rows lie strictly inside the domain."""

    @abstractmethod
    def on_boundary(self, X: np.ndarray, tol: float = BOUNDARY_TOL) -> np.ndarray: ...

    @abstractmethod
    def sample_interior(self, n: int, rng: np.random.Generator) -> np.ndarray: ...

    @abstractmethod
    def sample_boundary(self, m: int, rng: np.random.Generator) -> np.ndarray: ...

    @abstractmethod
    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]: ...


@dataclass(frozen=True)
class Hyperrectangle(Domain):
    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "lower", tuple(float(v) for v in self.lower))
        object.__setattr__(self, "upper", tuple(float(v) for v in self.upper))
        if len(self.lower) != len(self.upper):
            raise ValueError("lower and upper must have the same length")
        if not all(lo < hi for lo, hi in zip(self.lower, self.upper)):
            raise ValueError("lower bounds must be strictly below upper bounds")

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def _lengths(self) -> np.ndarray:
        return np.array(self.upper) - np.array(self.lower)

    @property
    def volume(self) -> float:
        return float(np.prod(self._lengths))

    @property
    def boundary_measure(self) -> float:
        lengths = self._lengths
        vol = np.prod(lengths)
        return float(2.0 * np.sum(vol / lengths))

    def contains(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        lo = np.array(self.lower)
        hi = np.array(self.upper)
        return np.all((X > lo) & (X < hi), axis=1)

    def on_boundary(self, X: np.ndarray, tol: float = BOUNDARY_TOL) -> np.ndarray:
        X = np.atleast_2d(X)
        lo = np.array(self.lower)
        hi = np.array(self.upper)
        inside = np.all((X >= lo - tol) & (X <= hi + tol), axis=1)
        at_face = np.any((np.abs(X - lo) <= tol) | (np.abs(X - hi) <= tol), axis=1)
        return inside & at_face

    def sample_interior(self, n: int, rng: np.random.Generator) -> np.ndarray:
        lo = np.array(self.lower)
        u = rng.random((n, self.dim))
        return lo + u * self._lengths

    def sample_boundary(self, m: int, rng: np.random.Generator) -> np.ndarray:
        d = self.dim
        lengths = self._lengths
        vol = np.prod(lengths)
        face_area = np.repeat(vol / lengths, 2)  # (axis0 low, axis0 high, axis1 low, ...)
        probs = face_area / face_area.sum()
        faces = rng.choice(2 * d, size=m, p=probs)
        X = np.array(self.lower) + rng.random((m, d)) * lengths
        axes = faces // 2
        highs = faces % 2 == 1
        bounds = np.where(highs, np.array(self.upper)[axes], np.array(self.lower)[axes])
        X[np.arange(m), axes] = bounds
        return X

    def bounding_box(self):
        return np.array(self.lower), np.array(self.upper)


@dataclass(frozen=True)
class Annulus(Domain):
    """The region between two concentric spheres centered at the origin."""

    dim: int
    r_inner: float
    r_outer: float

    def __post_init__(self):
        if not (0.0 < self.r_inner < self.r_outer):
            raise ValueError("annulus requires 0 < r_inner < r_outer")

    @property
    def volume(self) -> float:
        d = self.dim
        return unit_ball_volume(d) * (self.r_outer**d - self.r_inner**d)

    @property
    def boundary_measure(self) -> float:
        d = self.dim
        return d * unit_ball_volume(d) * (self.r_outer ** (d - 1) + self.r_inner ** (d - 1))

    def _radii(self, X: np.ndarray) -> np.ndarray:
        return np.linalg.norm(np.atleast_2d(X), axis=1)

    def contains(self, X: np.ndarray) -> np.ndarray:
        r = self._radii(X)
        return (r > self.r_inner) & (r < self.r_outer)

    def on_boundary(self, X: np.ndarray, tol: float = BOUNDARY_TOL) -> np.ndarray:
        r = self._radii(X)
        return (np.abs(r - self.r_inner) <= tol) | (np.abs(r - self.r_outer) <= tol)

    def _directions(self, n: int, rng: np.random.Generator) -> np.ndarray:
        v = rng.standard_normal((n, self.dim))
        return v / np.linalg.norm(v, axis=1, keepdims=True)

    def sample_interior(self, n: int, rng: np.random.Generator) -> np.ndarray:
        d = self.dim
        # inverse CDF of the radial density proportional to r^(d-1)
        u = rng.random(n)
        r = (self.r_inner**d + u * (self.r_outer**d - self.r_inner**d)) ** (1.0 / d)
        return r[:, None] * self._directions(n, rng)

    def sample_boundary(self, m: int, rng: np.random.Generator) -> np.ndarray:
        d = self.dim
        w_out = self.r_outer ** (d - 1)
        w_in = self.r_inner ** (d - 1)
        outer = rng.random(m) < w_out / (w_out + w_in)
        r = np.where(outer, self.r_outer, self.r_inner)
        return r[:, None] * self._directions(m, rng)

    def bounding_box(self):
        return (-self.r_outer * np.ones(self.dim), self.r_outer * np.ones(self.dim))


def measures(domain: Domain) -> tuple[float, float]:
    """(volume, boundary measure) of a domain."""
    return domain.volume, domain.boundary_measure


class SubRegion(ABC):
    """A subset of a domain with a 0/1 membership indicator."""

    @abstractmethod
    def indicator(self, X: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True)
class WholeDomain(SubRegion):
    def indicator(self, X: np.ndarray) -> np.ndarray:
        return np.ones(np.atleast_2d(X).shape[0])


@dataclass(frozen=True)
class Ball(SubRegion):
    center: tuple[float, ...]
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(v) for v in self.center))
        if self.radius <= 0:
            raise ValueError("ball radius must be positive")

    def indicator(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        dist2 = np.sum((X - np.array(self.center)) ** 2, axis=1)
        return (dist2 <= self.radius**2).astype(np.float64)


@dataclass
class PointBatch:
    """A batch of points with optional positive importance weights."""

    points: np.ndarray
    weights: np.ndarray | None = None

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=np.float64))
        if self.weights is not None:
            self.weights = np.asarray(self.weights, dtype=np.float64)
            if self.weights.shape != (self.points.shape[0],):
                raise ValueError("weights must align with point rows")
            if len(self.weights) and not (np.isfinite(self.weights).all() and (self.weights > 0).all()):
                raise ValueError("weights must be positive and finite")

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def to_csv(self, path) -> None:
        header = [f"x{i + 1}" for i in range(self.dim)]
        if self.weights is not None:
            header.append("w")
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for i in range(len(self)):
                row = [repr(float(v)) for v in self.points[i]]
                if self.weights is not None:
                    row.append(repr(float(self.weights[i])))
                writer.writerow(row)

    @staticmethod
    def from_csv(path) -> "PointBatch":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            has_w = header[-1] == "w"
            d = len(header) - (1 if has_w else 0)
            pts, ws = [], []
            for row in reader:
                pts.append([float(v) for v in row[:d]])
                if has_w:
                    ws.append(float(row[d]))
        points = np.array(pts) if pts else np.zeros((0, d))
        return PointBatch(points, np.array(ws) if has_w else None)


def sample_interior_uniform(domain: Domain, n: int, rng: np.random.Generator) -> PointBatch:
    if n < 1:
        raise ValueError("n must be at least 1")
    return PointBatch(domain.sample_interior(n, rng))


def sample_boundary_uniform(domain: Domain, m: int, rng: np.random.Generator) -> PointBatch:
    if m < 1:
        raise ValueError("m must be at least 1")
    return PointBatch(domain.sample_boundary(m, rng))


def resample_from_indicator(pool: PointBatch, indicator_values: np.ndarray, n: int,
                            rng: np.random.Generator) -> PointBatch:
    """Draw ``n`` points i.i.d. from the pool with probability |indicator|.

    The returned batch carries importance weights w_i = (1/P) / p_i, the
    ratio of the uniform-pool probability to the sampling probability, for
    weighted-quadrature consumers.  Duplicates are kept: deduplication
    would bias the density.
    """
    values = np.asarray(indicator_values, dtype=np.float64)
    if values.shape != (len(pool),):
        raise ValueError("indicator values must align with pool rows")
    if len(pool) == 0:
        raise ValueError("cannot resample from an empty pool")
    if not np.isfinite(values).all():
        raise DegenerateDensityError("indicator contains non-finite values")
    magnitude = np.abs(values)
    total = magnitude.sum()
    if total == 0.0:
        raise DegenerateDensityError("all indicator values are zero")
    p = magnitude / total
    idx = rng.choice(len(pool), size=n, replace=True, p=p)
    weights = (1.0 / len(pool)) / p[idx]
    return PointBatch(pool.points[idx].copy(), weights)


def augment_points(current: PointBatch, additional: PointBatch) -> PointBatch:
    """Concatenate two batches, current first; weights default to 1."""
    if len(additional) == 0:
        return PointBatch(current.points.copy(),
                          None if current.weights is None else current.weights.copy())
    if current.dim != additional.dim:
        raise DimensionMismatchError(
            f"cannot augment dimension {current.dim} with dimension {additional.dim}"
        )
    points = np.vstack([current.points, additional.points])
    if current.weights is None and additional.weights is None:
        weights = None
    else:
        w_cur = current.weights if current.weights is not None else np.ones(len(current))
        w_add = additional.weights if additional.weights is not None else np.ones(len(additional))
        weights = np.concatenate([w_cur, w_add])
    return PointBatch(points, weights)
