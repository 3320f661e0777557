"""Kaplan-Meier product-limit estimator with Greenwood / log-log bands."""

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, PreconditionError
from .special import ndtri

__all__ = ["KmCurve", "km_fit", "km_confidence", "KM_CSV_COLUMNS"]

KM_CSV_COLUMNS = ("t", "s", "lower", "upper", "n_risk", "n_event")


@dataclass(frozen=True)
class KmCurve:
    """Right-continuous step estimate evaluated at the distinct event times.

    ``lower``/``upper`` are ``None`` until :func:`km_confidence` fills them.
    """

    event_times: np.ndarray
    estimates: np.ndarray
    at_risk: np.ndarray
    deaths: np.ndarray
    lower: np.ndarray = None
    upper: np.ndarray = None
    level: float = None

    def __len__(self):
        return self.event_times.size

    def __call__(self, t):
        """S(t) as a right-continuous step function."""
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.event_times, t, side="right") - 1
        out = np.where(idx >= 0, self.estimates[np.clip(idx, 0, None)] if len(self) else 1.0, 1.0)
        return float(out) if out.ndim == 0 else out

    def left_limit(self, t):
        """S(t-), the value just before ``t``."""
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.event_times, t, side="left") - 1
        out = np.where(idx >= 0, self.estimates[np.clip(idx, 0, None)] if len(self) else 1.0, 1.0)
        return float(out) if out.ndim == 0 else out

    def band(self, t):
        """``(lower, upper)`` at ``t``, stepping like the estimate."""
        if self.lower is None:
            raise PreconditionError("curve has no bands; call km_confidence first")
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.event_times, t, side="right") - 1
        safe = np.clip(idx, 0, None)
        lo = np.where(idx >= 0, self.lower[safe] if len(self) else 1.0, 1.0)
        hi = np.where(idx >= 0, self.upper[safe] if len(self) else 1.0, 1.0)
        if lo.ndim == 0:
            return float(lo), float(hi)
        return lo, hi

    def greenwood_sum(self):
        n, d = self.at_risk, self.deaths
        with np.errstate(divide="ignore", invalid="ignore"):
            term = np.where(n > d, d / (n * (n - d)), np.inf)
        return np.cumsum(term)

    def rows(self):
        lo = self.lower if self.lower is not None else np.full(len(self), np.nan)
        hi = self.upper if self.upper is not None else np.full(len(self), np.nan)
        for k in range(len(self)):
            yield {"t": float(self.event_times[k]), "s": float(self.estimates[k]),
                   "lower": float(lo[k]), "upper": float(hi[k]),
                   "n_risk": int(self.at_risk[k]), "n_event": int(self.deaths[k])}

    def to_dict(self):
        return {"level": self.level, "rows": list(self.rows())}

    @classmethod
    def from_dict(cls, d):
        rows = d["rows"]
        col = lambda k, dtype=float: np.array([r[k] for r in rows], dtype=dtype)  # noqa: E731
        has_band = bool(rows) and not np.isnan(rows[0]["lower"])
        return cls(col("t"), col("s"), col("n_risk", int), col("n_event", int),
                   col("lower") if has_band or not rows else None,
                   col("upper") if has_band or not rows else None, d.get("level"))

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=KM_CSV_COLUMNS, lineterminator="\n")
            w.writeheader()
            for row in self.rows():
                w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})


def km_fit(durations, events=None):
    """Product-limit estimate from right-censored data.

    ``durations`` may also be a sequence of objects with ``duration`` and
    ``event`` attributes. At tied times events are counted before censorings,
    so a censoring at ``t_k`` is still in the risk set at ``t_k``.
    """
    if events is None:
        recs = list(durations)
        durations = [r.duration for r in recs]
        events = [r.event for r in recs]
    t = np.asarray(durations, dtype=float).ravel()
    e = np.asarray(events, dtype=bool).ravel()
    if t.size == 0:
        raise PreconditionError("km_fit needs at least one record")
    if np.any(~(t > 0)):
        raise DomainError("durations must be positive")
    times = np.unique(t[e])
    n_risk = t.size - np.searchsorted(np.sort(t), times, side="left")
    deaths = np.searchsorted(np.sort(t[e]), times, side="right") - np.searchsorted(np.sort(t[e]), times, side="left")
    s = np.cumprod(1.0 - deaths / n_risk)
    return KmCurve(times, s, n_risk.astype(int), deaths.astype(int))


def km_confidence(curve, level=0.95):
    """Pointwise bands on the complementary log-log scale.

    The Greenwood variance of ``log(-log S)`` is
    ``sum d/(n(n-d)) / log(S)^2``; bands are pinned to the estimate where
    ``S`` is 0 or 1.
    """
    z = float(ndtri(0.5 + level / 2))
    s = curve.estimates
    gw = curve.greenwood_sum()
    lower = s.copy()
    upper = s.copy()
    ok = (s > 0) & (s < 1) & np.isfinite(gw)
    if np.any(ok):
        log_s = np.log(s[ok])
        se = np.sqrt(gw[ok]) / np.abs(log_s)
        c = np.log(-log_s)
        # S = exp(-exp(c)) decreases in c, so c + z*se gives the lower band.
        lower[ok] = np.exp(-np.exp(c + z * se))
        upper[ok] = np.exp(-np.exp(c - z * se))
    return KmCurve(curve.event_times, s, curve.at_risk, curve.deaths,
                   np.clip(lower, 0, 1), np.clip(upper, 0, 1), level)
