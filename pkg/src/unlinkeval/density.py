"""Shared-grid estimation of the conditional score densities.

Both conditional densities, for mated and for non-mated template pairs, are
estimated on one common grid so that their point-wise ratio is well defined
everywhere.  The default estimator is a plain histogram (count/(n*width)):
it is verifiable by hand and keeps zero-count bins at exactly zero, which
the likelihood-ratio layer relies on.  Optional Gaussian smoothing is
available for nicer plots but changes no defaults.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateSupportError,
    GridMismatchError,
    InvalidConfigError,
    LengthMismatchError,
    NotNormalizedError,
)
from .scores import ScoreSet

AUTO_BINS = "auto"
_MIN_AUTO_BINS = 20
_MAX_AUTO_BINS = 400

# relative width of the single bin used for one-point supports
_POINT_MASS_EPS = 1e-6

NORMALIZATION_TOL = 1e-9


@dataclass(frozen=True)
class DensityConfig:
    """Estimator settings.

    bins: number of grid bins, or "auto" for Freedman-Diaconis on the
        pooled sample (clamped to [20, 400]).
    kde: apply Gaussian kernel smoothing (Silverman bandwidth per side)
        instead of raw histogram counts.  Default off.
    grid_range: explicit (low, high) grid span.  When given, the grid is
        exactly `bins` bins over that range with no extension; it must
        cover both sample supports.  When None, the grid spans the union
        support extended by one bin width on each side.
    allow_point_mass: permit sides whose scores are all identical.
    """

    bins: int | str = AUTO_BINS
    kde: bool = False
    grid_range: tuple[float, float] | None = None
    allow_point_mass: bool = True

    def __post_init__(self):
        if self.bins != AUTO_BINS:
            if not isinstance(self.bins, (int, np.integer)) or isinstance(self.bins, bool):
                raise InvalidConfigError(f"bins must be an integer or 'auto', got {self.bins!r}")
            if self.bins < 2:
                raise InvalidConfigError(f"bins must be >= 2, got {self.bins}")
        if self.grid_range is not None:
            lo, hi = self.grid_range
            if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
                raise InvalidConfigError(f"grid_range must be finite with low < high, got {self.grid_range!r}")


@dataclass(frozen=True)
class DensityPair:
    """Two densities on one shared grid of B bins (B+1 edges)."""

    edges: np.ndarray
    p_mated: np.ndarray
    p_non_mated: np.ndarray

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=np.float64)
        p_m = np.asarray(self.p_mated, dtype=np.float64)
        p_nm = np.asarray(self.p_non_mated, dtype=np.float64)
        if edges.ndim != 1 or edges.size < 2:
            raise LengthMismatchError("edges must be a 1-d sequence of at least 2 values")
        if np.any(~np.isfinite(edges)) or np.any(np.diff(edges) <= 0):
            raise GridMismatchError("edges must be finite and strictly increasing")
        b = edges.size - 1
        if p_m.shape != (b,) or p_nm.shape != (b,):
            raise LengthMismatchError(
                f"expected {b} density values per side, got {p_m.shape} and {p_nm.shape}"
            )
        for name, p in (("p_mated", p_m), ("p_non_mated", p_nm)):
            if np.any(~np.isfinite(p)) or np.any(p < 0):
                raise NotNormalizedError(f"{name} must be non-negative and finite")
            total = float(np.sum(p * np.diff(edges)))
            if abs(total - 1.0) > NORMALIZATION_TOL:
                raise NotNormalizedError(f"{name} integrates to {total!r}, expected 1")
        for arr in (edges, p_m, p_nm):
            arr.setflags(write=False)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "p_mated", p_m)
        object.__setattr__(self, "p_non_mated", p_nm)

    @property
    def n_bins(self) -> int:
        return int(self.edges.size - 1)

    @property
    def bin_widths(self) -> np.ndarray:
        return np.diff(self.edges)

    def to_json_dict(self) -> dict:
        return {
            "edges": self.edges.tolist(),
            "p_mated": self.p_mated.tolist(),
            "p_non_mated": self.p_non_mated.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict())

    @classmethod
    def from_json_dict(cls, data: dict) -> "DensityPair":
        return cls(
            edges=np.asarray(data["edges"], dtype=np.float64),
            p_mated=np.asarray(data["p_mated"], dtype=np.float64),
            p_non_mated=np.asarray(data["p_non_mated"], dtype=np.float64),
        )

    @classmethod
    def from_json(cls, text: str) -> "DensityPair":
        return cls.from_json_dict(json.loads(text))


def estimate_densities(scores: ScoreSet, config: DensityConfig | None = None) -> DensityPair:
    """Estimate both conditional densities on a shared grid."""
    if config is None:
        config = DensityConfig()
    mated = scores.mated
    non_mated = scores.non_mated

    m_const = float(mated.min()) == float(mated.max())
    nm_const = float(non_mated.min()) == float(non_mated.max())
    if not config.allow_point_mass and (m_const or nm_const):
        side = "mated" if m_const else "non-mated"
        raise DegenerateSupportError(f"all {side} scores are identical and point-mass handling is disabled")

    lo = float(min(mated.min(), non_mated.min()))
    hi = float(max(mated.max(), non_mated.max()))

    if lo == hi:
        # union support is a single point: one bin of width eps around it
        eps = _POINT_MASS_EPS * max(1.0, abs(lo))
        edges = np.array([lo - eps / 2.0, lo + eps / 2.0])
        p = np.array([1.0 / eps])
        return DensityPair(edges=edges, p_mated=p, p_non_mated=p.copy())

    n_bins = _resolve_bins(config, mated, non_mated, lo, hi)

    if config.grid_range is not None:
        glo, ghi = float(config.grid_range[0]), float(config.grid_range[1])
        if glo > lo or ghi < hi:
            raise GridMismatchError(
                f"grid_range [{glo}, {ghi}] does not cover the sample support [{lo}, {hi}]"
            )
        edges = np.linspace(glo, ghi, n_bins + 1)
    else:
        # extend by one bin width per side so boundary scores stay interior
        width = (hi - lo) / n_bins
        edges = np.linspace(lo - width, hi + width, n_bins + 3)

    if config.kde:
        p_m = _kde_density(mated, edges)
        p_nm = _kde_density(non_mated, edges)
    else:
        p_m = _histogram_density(mated, edges)
        p_nm = _histogram_density(non_mated, edges)
    return DensityPair(edges=edges, p_mated=p_m, p_non_mated=p_nm)


def _resolve_bins(config: DensityConfig, mated, non_mated, lo: float, hi: float) -> int:
    if config.bins != AUTO_BINS:
        return int(config.bins)
    pooled = np.concatenate([mated, non_mated])
    n = pooled.size
    q75, q25 = np.percentile(pooled, [75.0, 25.0])
    width = 2.0 * (q75 - q25) / n ** (1.0 / 3.0)
    if width <= 0:
        # concentrated data defeats the IQR rule; Sturges as a stand-in
        n_bins = int(math.ceil(math.log2(n))) + 1
    else:
        n_bins = int(math.ceil((hi - lo) / width))
    return min(max(n_bins, _MIN_AUTO_BINS), _MAX_AUTO_BINS)


def _histogram_density(values: np.ndarray, edges: np.ndarray) -> np.ndarray:
    counts, _ = np.histogram(values, bins=edges)
    total = counts.sum()
    if total != values.size:
        raise GridMismatchError("grid does not cover all scores")
    return counts / (values.size * np.diff(edges))


def _kde_density(values: np.ndarray, edges: np.ndarray) -> np.ndarray:
    n = values.size
    std = float(np.std(values))
    q75, q25 = np.percentile(values, [75.0, 25.0])
    spread = min(std, (q75 - q25) / 1.34) if q75 > q25 else std
    bw = 0.9 * spread * n ** (-1.0 / 5.0)
    if bw <= 0:
        bw = _POINT_MASS_EPS * max(1.0, float(np.abs(values).max()))
    centers = (edges[:-1] + edges[1:]) / 2.0
    # mean of Gaussian kernels, evaluated at the bin centers
    z = (centers[None, :] - values[:, None]) / bw
    dens = np.exp(-0.5 * z * z).sum(axis=0) / (n * bw * math.sqrt(2.0 * math.pi))
    mass = float(np.sum(dens * np.diff(edges)))
    # tail mass beyond the grid is cut off; rescale onto the grid
    return dens / mass


def evaluate_density(dp: DensityPair, s: float) -> tuple[float, float]:
    """Point lookup of both densities at score s.

    Bins are half-open [e_b, e_{b+1}) with the last bin closed; scores
    outside the grid report (0, 0).
    """
    if not math.isfinite(s):
        raise ValueError(f"score must be finite, got {s!r}")
    edges = dp.edges
    if s < edges[0] or s > edges[-1]:
        return (0.0, 0.0)
    idx = int(np.searchsorted(edges, s, side="right")) - 1
    if idx == dp.n_bins:
        idx -= 1
    return (float(dp.p_mated[idx]), float(dp.p_non_mated[idx]))
