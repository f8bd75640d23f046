"""Comparison metrics: KL divergence, DET/EER curves, cross-key and RTMR variants.

These are the accuracy-oriented measures that historically stood in for a
linkability analysis.  They are computed here from the same score files as
the linkability measures so the two families can be compared fairly; the
comparison driver exists precisely to show where DET-based verdicts and the
global linkability measure disagree.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import LengthMismatchError, NotNormalizedError, TooFewScoresError

ORIENT_SIMILARITY = "similarity"
ORIENT_DISSIMILARITY = "dissimilarity"

MODE_ACCURACY = "accuracy"
MODE_CROSSKEY = "crosskey"
MODE_RTMR = "rtmr"

# column labels per mode: (false-match-side name, false-non-match-side name)
_RATE_NAMES = {
    MODE_ACCURACY: ("fmr", "fnmr"),
    MODE_CROSSKEY: ("cmr", "fcmr"),
    MODE_RTMR: ("rtmr", "fnmr"),
}

_EXACT_EQUAL_TOL = 1e-12


class _UndefinedType:
    """Result of a metric that has no value on the given input.

    Distinct from an exception so reports can print it in a table cell.
    """

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "undefined"


UNDEFINED = _UndefinedType()


def kl_divergence(p, q):
    """Discrete KL divergence sum(P * ln(P/Q)) over bins with P > 0.

    Returns UNDEFINED when some bin has Q = 0 with P > 0 (fully or partially
    separable distributions), and exactly 0.0 when P equals Q bin-wise.
    """
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape or p.ndim != 1:
        raise LengthMismatchError(f"pmf shapes differ: {p.shape} vs {q.shape}")
    for name, pmf in (("P", p), ("Q", q)):
        if np.any(~np.isfinite(pmf)) or np.any(pmf < 0):
            raise NotNormalizedError(f"{name} must be non-negative and finite")
        total = float(pmf.sum())
        if abs(total - 1.0) > 1e-9:
            raise NotNormalizedError(f"{name} sums to {total!r}, expected 1")
    if float(np.max(np.abs(p - q))) <= _EXACT_EQUAL_TOL:
        return 0.0
    support = p > 0
    if np.any(q[support] == 0):
        return UNDEFINED
    value = float(np.sum(p[support] * np.log(p[support] / q[support])))
    # Gibbs: mathematically >= 0; rounding may leave a tiny negative
    return max(value, 0.0)


@dataclass(frozen=True)
class DetCurve:
    """Empirical detection-error trade-off over an exhaustive threshold sweep.

    `fmr` holds the false-match-side rate, renamed per mode (fmr, cmr, or
    rtmr); `fnmr` the false-non-match side (fnmr or fcmr).
    """

    thresholds: np.ndarray
    fmr: np.ndarray
    fnmr: np.ndarray
    eer: float
    mode: str = MODE_ACCURACY
    orientation: str = ORIENT_SIMILARITY

    def __post_init__(self):
        if self.mode not in _RATE_NAMES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.orientation not in (ORIENT_SIMILARITY, ORIENT_DISSIMILARITY):
            raise ValueError(f"unknown orientation {self.orientation!r}")
        t = np.asarray(self.thresholds, dtype=np.float64)
        fmr = np.asarray(self.fmr, dtype=np.float64)
        fnmr = np.asarray(self.fnmr, dtype=np.float64)
        if not (t.shape == fmr.shape == fnmr.shape) or t.ndim != 1:
            raise LengthMismatchError("thresholds, fmr, fnmr must be equal-length 1-d")
        if np.any(np.diff(t) <= 0):
            raise ValueError("thresholds must be strictly increasing")
        for name, r in (("fmr", fmr), ("fnmr", fnmr)):
            if np.any(r < 0) or np.any(r > 1):
                raise ValueError(f"{name} must lie in [0, 1]")
        if not (0.0 <= self.eer <= 1.0):
            raise ValueError(f"eer must lie in [0, 1], got {self.eer!r}")
        for arr in (t, fmr, fnmr):
            arr.setflags(write=False)
        object.__setattr__(self, "thresholds", t)
        object.__setattr__(self, "fmr", fmr)
        object.__setattr__(self, "fnmr", fnmr)

    @property
    def rate_names(self) -> tuple[str, str]:
        return _RATE_NAMES[self.mode]

    def to_json_dict(self) -> dict:
        return {
            "mode": self.mode,
            "orientation": self.orientation,
            "eer": self.eer,
            "thresholds": self.thresholds.tolist(),
            "fmr": self.fmr.tolist(),
            "fnmr": self.fnmr.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict())

    @classmethod
    def from_json_dict(cls, data: dict) -> "DetCurve":
        return cls(
            thresholds=np.asarray(data["thresholds"], dtype=np.float64),
            fmr=np.asarray(data["fmr"], dtype=np.float64),
            fnmr=np.asarray(data["fnmr"], dtype=np.float64),
            eer=float(data["eer"]),
            mode=data["mode"],
            orientation=data["orientation"],
        )

    def to_csv(self) -> str:
        fm_name, fnm_name = self.rate_names
        rows = [f"threshold,{fm_name},{fnm_name}"]
        rows.extend(
            f"{t!r},{a!r},{b!r}"
            for t, a, b in zip(self.thresholds.tolist(), self.fmr.tolist(), self.fnmr.tolist())
        )
        return "\n".join(rows) + "\n"


def _as_side(values, side: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64).reshape(-1)
    if arr.size < 2:
        raise TooFewScoresError(side, int(arr.size))
    if np.any(~np.isfinite(arr)):
        raise ValueError(f"{side} scores must be finite")
    return arr


def det_curve(mated, non_mated, orientation: str = ORIENT_SIMILARITY, mode: str = MODE_ACCURACY) -> DetCurve:
    """Exhaustive-sweep DET curve with interpolated EER.

    Similarity scores match at s >= t; dissimilarity scores match at s <= t.
    Thresholds cover every distinct score, every midpoint between adjacent
    distinct scores, and one sentinel beyond each end.
    """
    mated = _as_side(mated, "mated")
    non_mated = _as_side(non_mated, "nonmated")
    if orientation not in (ORIENT_SIMILARITY, ORIENT_DISSIMILARITY):
        raise ValueError(f"unknown orientation {orientation!r}")

    values = np.unique(np.concatenate([mated, non_mated]))
    mids = (values[:-1] + values[1:]) / 2.0
    span = max(values[-1] - values[0], 1.0)
    thresholds = np.unique(
        np.concatenate([values, mids, [values[0] - span, values[-1] + span]])
    )

    m_sorted = np.sort(mated)
    nm_sorted = np.sort(non_mated)
    if orientation == ORIENT_SIMILARITY:
        # match at s >= t: misses are mated below t, false matches non-mated at/above t
        fnmr = np.searchsorted(m_sorted, thresholds, side="left") / mated.size
        fmr = (non_mated.size - np.searchsorted(nm_sorted, thresholds, side="left")) / non_mated.size
    else:
        # match at s <= t
        fnmr = (mated.size - np.searchsorted(m_sorted, thresholds, side="right")) / mated.size
        fmr = np.searchsorted(nm_sorted, thresholds, side="right") / non_mated.size

    eer = _interpolated_eer(fmr, fnmr)
    return DetCurve(thresholds=thresholds, fmr=fmr, fnmr=fnmr, eer=eer, mode=mode, orientation=orientation)


def _interpolated_eer(fmr: np.ndarray, fnmr: np.ndarray) -> float:
    """EER at the FMR = FNMR crossing, linearly interpolated between the two
    bracketing operating points; exact-tie thresholds win over interpolation,
    lowest threshold first."""
    diff = fmr - fnmr
    exact = np.flatnonzero(diff == 0.0)
    crossing = np.flatnonzero(np.signbit(diff[:-1]) != np.signbit(diff[1:]))
    if exact.size and (not crossing.size or exact[0] <= crossing[0] + 1):
        return float(fmr[exact[0]])
    if not crossing.size:
        # no crossing: one class dominates everywhere; closest approach
        i = int(np.argmin(np.abs(diff)))
        return float((fmr[i] + fnmr[i]) / 2.0)
    i = int(crossing[0])
    d1, d2 = abs(float(diff[i])), abs(float(diff[i + 1]))
    lam = d1 / (d1 + d2)
    return float(fnmr[i] + lam * (fnmr[i + 1] - fnmr[i]))


def cross_key_det(single_key_scores, cross_key_scores, orientation: str = ORIENT_SIMILARITY) -> tuple[DetCurve, DetCurve]:
    """Accuracy-mode curve beside the cross-key (CMR/FCMR) curve.

    single_key_scores and cross_key_scores are ScoreSets: the first from
    ordinary verification comparisons, the second with mated pairs protected
    under different keys.
    """
    accuracy = det_curve(
        single_key_scores.mated, single_key_scores.non_mated, orientation, MODE_ACCURACY
    )
    crosskey = det_curve(
        cross_key_scores.mated, cross_key_scores.non_mated, orientation, MODE_CROSSKEY
    )
    return accuracy, crosskey


def rtmr_curve(same_key_mated, cross_key_non_mated, orientation: str = ORIENT_SIMILARITY) -> DetCurve:
    """FNMR vs renewable-template match rate.

    The false-non-match side comes from same-key mated comparisons; the
    match-rate side counts cross-key comparisons of different instances that
    a threshold would link.
    """
    return det_curve(same_key_mated, cross_key_non_mated, orientation, MODE_RTMR)
