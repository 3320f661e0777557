"""Error-term families for log-linear survival models.

A time law is ``log T = location + scale * W`` where ``W`` follows a
standardized error law. Every function here works on the standardized
residual ``w = (log t - location) / scale``.

Families
--------
exponential, weibull
    ``W`` is the minimum extreme-value law, ``g(w) = exp(w - e^w)``. The
    exponential fixes ``scale = 1``.
lognormal
    ``W`` is standard normal.
generalized_f
    ``W`` is log-F with shapes ``(m1, m2)``:
    ``g(w) = (m1/m2)^m1 e^{m1 w} / (B(m1, m2) (1 + (m1/m2) e^w)^{m1 + m2})``.
    ``m1 = m2 = 1`` gives the log-logistic model, ``m2 -> inf`` the Weibull,
    and both shapes to infinity the lognormal.
"""

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy import special as sp

from .errors import DomainError, ParameterError
from .special import log_betainc, log_ndtr, ndtri

__all__ = [
    "Family",
    "ErrorLaw",
    "TimeLaw",
    "error_terms",
    "log_density",
    "survival",
    "log_survival",
    "hazard",
    "quantile",
]

_HALF_LOG_2PI = 0.5 * math.log(2 * math.pi)


class Family(str, enum.Enum):
    EXPONENTIAL = "exponential"
    WEIBULL = "weibull"
    LOGNORMAL = "lognormal"
    GENERALIZED_F = "generalized_f"

    @property
    def n_shapes(self):
        return 2 if self is Family.GENERALIZED_F else 0

    @property
    def has_scale(self):
        return self is not Family.EXPONENTIAL

    @classmethod
    def parse(cls, name):
        if isinstance(name, cls):
            return name
        key = str(name).strip().lower().replace("-", "_").replace(" ", "_")
        aliases = {"exp": "exponential", "wei": "weibull", "lnorm": "lognormal",
                   "log_normal": "lognormal", "genf": "generalized_f", "gen_f": "generalized_f",
                   "generalizedf": "generalized_f"}
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise ParameterError(f"unknown family {name!r}") from None


# Fixed order for tie-breaks and reporting.
FAMILY_ORDER = (Family.EXPONENTIAL, Family.WEIBULL, Family.LOGNORMAL, Family.GENERALIZED_F)


@dataclass(frozen=True)
class ErrorLaw:
    family: Family
    shapes: tuple = ()

    def __post_init__(self):
        fam = Family.parse(self.family)
        object.__setattr__(self, "family", fam)
        shapes = tuple(float(s) for s in self.shapes)
        if fam is Family.GENERALIZED_F and not shapes:
            shapes = (1.0, 1.0)
        if len(shapes) != fam.n_shapes:
            raise ParameterError(f"{fam.value} takes {fam.n_shapes} shape parameters, got {len(shapes)}")
        if any(not (s > 0 and math.isfinite(s)) for s in shapes):
            raise ParameterError(f"shape parameters must be positive, got {shapes}")
        object.__setattr__(self, "shapes", shapes)


@dataclass(frozen=True)
class TimeLaw:
    law: ErrorLaw
    location: float = 0.0
    scale: float = 1.0

    def __post_init__(self):
        if not isinstance(self.law, ErrorLaw):
            object.__setattr__(self, "law", ErrorLaw(self.law))
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise ParameterError(f"scale must be positive, got {self.scale}")
        if self.law.family is Family.EXPONENTIAL and self.scale != 1.0:
            raise ParameterError("exponential law has scale fixed at 1")

    @classmethod
    def of(cls, family, location=0.0, scale=1.0, shapes=()):
        return cls(ErrorLaw(Family.parse(family), shapes), float(location), float(scale))

    def residual(self, t):
        return (np.log(t) - self.location) / self.scale


def error_terms(family, w, shapes=(), grad=True, survival=True):
    """Log density and log survival of the standardized error at ``w``.

    Returns a dict with ``log_g`` and ``log_s``; with ``grad`` also their
    derivatives in ``w`` (``dlog_g``, ``dlog_s``) and in each shape
    parameter (``dlog_g_shape``, ``dlog_s_shape``, shape ``(k, n)``).
    ``survival=False`` skips the survival terms (left as ``None``).
    """
    family = Family.parse(family)
    w = np.asarray(w, dtype=float)
    out = {"log_s": None, "dlog_s": None, "dlog_s_shape": None}
    if family in (Family.EXPONENTIAL, Family.WEIBULL):
        ew = np.exp(w)
        out["log_g"] = w - ew
        if survival:
            out["log_s"] = -ew
        if grad:
            out["dlog_g"] = 1.0 - ew
            if survival:
                out["dlog_s"] = -ew
    elif family is Family.LOGNORMAL:
        out["log_g"] = -0.5 * w * w - _HALF_LOG_2PI
        if survival:
            out["log_s"] = log_ndtr(-w)
        if grad:
            out["dlog_g"] = -w
            if survival:
                out["dlog_s"] = -np.exp(out["log_g"] - out["log_s"])
    else:
        m1, m2 = shapes
        log_u = math.log(m1) - math.log(m2) + w
        # X = u / (1 + u) is Beta(m1, m2); survival is the upper tail of X.
        log_1pu = np.logaddexp(0.0, log_u)
        x = sp.expit(log_u)
        y = sp.expit(-log_u)
        log_g = m1 * log_u - sp.betaln(m1, m2) - (m1 + m2) * log_1pu
        out["log_g"] = log_g
        if grad:
            psi_sum = sp.digamma(m1 + m2)
            out["dlog_g"] = m1 - (m1 + m2) * x
            dg1 = log_u - log_1pu + 1.0 - sp.digamma(m1) + psi_sum - (m1 + m2) * x / m1
            dg2 = -m1 / m2 - sp.digamma(m2) + psi_sum - log_1pu + (m1 + m2) * x / m2
            out["dlog_g_shape"] = np.stack([dg1, dg2])
        if survival and grad:
            log_s, ds_a, ds_b = log_betainc(m2, m1, y, xc=x)
            out["log_s"] = log_s
            dlog_s_w = -np.exp(log_g - log_s)
            out["dlog_s"] = dlog_s_w
            # log u moves like w under a change of m1 (+1/m1) or m2 (-1/m2).
            out["dlog_s_shape"] = np.stack([ds_b + dlog_s_w / m1, ds_a - dlog_s_w / m2])
        elif survival:
            out["log_s"] = _log_upper_beta(m2, m1, y, x)
    if grad and family is not Family.GENERALIZED_F:
        out["dlog_g_shape"] = np.zeros((0,) + w.shape)
        if survival:
            out["dlog_s_shape"] = np.zeros((0,) + w.shape)
    return out


def _log_upper_beta(a, b, y, x):
    """``log I_y(a, b)`` via scipy, with the continued fraction where it underflows."""
    y1, x1 = np.atleast_1d(y), np.atleast_1d(x)
    with np.errstate(divide="ignore"):
        out = np.log(sp.betainc(a, b, y1))
    bad = ~np.isfinite(out)
    if np.any(bad):
        out[bad] = log_betainc(a, b, y1[bad], xc=x1[bad])[0]
    return out.reshape(np.shape(y))


def _scalar_or_array(value, like):
    return float(value) if np.ndim(like) == 0 else value


def log_density(tl, t):
    """Log density of ``T`` at ``t > 0``."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(~(t_arr > 0)):
        raise DomainError("log_density requires t > 0")
    w = tl.residual(t_arr)
    terms = error_terms(tl.law.family, w, tl.law.shapes, grad=False, survival=False)
    out = terms["log_g"] - math.log(tl.scale) - np.log(t_arr)
    return _scalar_or_array(out, t)


def log_survival(tl, t):
    t_arr = np.asarray(t, dtype=float)
    if np.any(~(t_arr >= 0)):
        raise DomainError("survival requires t >= 0")
    out = np.zeros(t_arr.shape)
    pos = t_arr > 0
    if np.any(pos):
        w = tl.residual(t_arr[pos])
        out[pos] = error_terms(tl.law.family, w, tl.law.shapes, grad=False)["log_s"]
    return _scalar_or_array(out, t)


def survival(tl, t):
    """``P(T > t)``; equals 1 at ``t = 0``."""
    return _scalar_or_array(np.exp(log_survival(tl, t)), t)


def hazard(tl, t):
    """``f(t) / S(t)``."""
    if tl.law.family in (Family.EXPONENTIAL, Family.WEIBULL):
        # log g - log s = w exactly; the difference form cancels in the far tail.
        t_arr = np.asarray(t, dtype=float)
        if np.any(~(t_arr > 0)):
            raise DomainError("hazard requires t > 0")
        out = np.exp(tl.residual(t_arr) - math.log(tl.scale) - np.log(t_arr))
        return _scalar_or_array(out, t)
    ls = np.asarray(log_survival(tl, t))
    if np.any(np.isneginf(ls)):
        raise OverflowError("survival is numerically zero; hazard undefined")
    out = np.exp(np.asarray(log_density(tl, t)) - ls)
    return _scalar_or_array(out, t)


def quantile(tl, p):
    """``t`` with ``P(T <= t) = p`` for ``0 < p < 1``."""
    p_arr = np.asarray(p, dtype=float)
    if np.any(~((p_arr > 0) & (p_arr < 1))):
        raise ParameterError("quantile requires 0 < p < 1")
    fam = tl.law.family
    if fam in (Family.EXPONENTIAL, Family.WEIBULL):
        w = np.log(-np.log1p(-p_arr))
    elif fam is Family.LOGNORMAL:
        w = ndtri(p_arr)
    else:
        m1, m2 = tl.law.shapes
        # Lower-tail quantile of X for small p, upper tail of 1 - X otherwise.
        x = sp.betaincinv(m1, m2, p_arr)
        y = sp.betaincinv(m2, m1, 1.0 - p_arr)
        logit = np.where(p_arr < 0.5, np.log(x) - np.log1p(-x), np.log1p(-y) - np.log(y))
        w = logit - math.log(m1) + math.log(m2)
    out = np.exp(tl.location + tl.scale * w)
    return _scalar_or_array(out, p)
