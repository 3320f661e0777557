"""Accelerated failure time regression on right-censored durations.

The model is ``log T_i = a0 + a . z_i + sigma * W`` with ``W`` drawn from one
of the error laws in :mod:`neurosurv.distributions`. Covariates are z-scored
with the fitting sample's means and standard deviations; coefficients are
reported on that standardized scale.

The free parameter vector is ``theta = (a0, a_1..a_p, log sigma, log m1,
log m2)``, where ``log sigma`` is absent for the exponential family and the
shape terms are present only for the generalized F.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .distributions import Family, TimeLaw, error_terms, survival
from .errors import ConvergenceError, DomainError, FitError, ParameterError
from .optim import fd_hessian, minimize
from .special import ndtr, ndtri

__all__ = [
    "AftFit",
    "WaldEntry",
    "WaldReport",
    "loglik",
    "loglik_gradient",
    "fit_aft",
    "wald_test",
    "select_covariates",
    "conditional_survival",
    "FORMAT_VERSION",
]

FORMAT_VERSION = 1


def n_params(family, p):
    family = Family.parse(family)
    return 1 + p + int(family.has_scale) + family.n_shapes


def param_names(family, names):
    family = Family.parse(family)
    out = ["intercept", *names]
    if family.has_scale:
        out.append("log_scale")
    if family is Family.GENERALIZED_F:
        out += ["log_m1", "log_m2"]
    return out


def _unpack(family, theta, p):
    theta = np.asarray(theta, dtype=float)
    if theta.size != n_params(family, p):
        raise ParameterError(f"expected {n_params(family, p)} parameters, got {theta.size}")
    a0 = theta[0]
    a = theta[1:1 + p]
    pos = 1 + p
    log_sigma = 0.0
    if family.has_scale:
        log_sigma = theta[pos]
        pos += 1
    log_shapes = theta[pos:]
    return a0, a, log_sigma, log_shapes


def _as_design(t, event, Z):
    t = np.asarray(t, dtype=float).ravel()
    event = np.asarray(event, dtype=bool).ravel()
    if Z is None:
        Z = np.zeros((t.size, 0))
    Z = np.asarray(Z, dtype=float)
    if Z.ndim == 1:
        Z = Z[:, None]
    if not (t.size == event.size == Z.shape[0]):
        raise ParameterError("durations, events and covariates differ in length")
    return t, event, Z


def _evaluate(family, theta, t, event, Z, grad):
    family = Family.parse(family)
    t, event, Z = _as_design(t, event, Z)
    p = Z.shape[1]
    a0, a, log_sigma, log_shapes = _unpack(family, theta, p)
    if t.size == 0:
        return 0.0, np.zeros(n_params(family, p))
    if np.any(~(t > 0)):
        raise DomainError("durations must be positive")
    sigma = math.exp(log_sigma)
    shapes = tuple(np.exp(log_shapes))
    if not (np.isfinite(sigma) and all(np.isfinite(shapes)) and sigma > 0 and all(s > 0 for s in shapes)):
        return -np.inf, None
    y = np.log(t)
    eta = a0 + Z @ a
    w = (y - eta) / sigma
    with np.errstate(all="ignore"):
        # Events need only the density, censorings only the survival term.
        te = error_terms(family, w[event], shapes, grad=grad, survival=False)
        tc = error_terms(family, w[~event], shapes, grad=grad)
        ll = float(np.sum(te["log_g"]) - event.sum() * log_sigma - np.sum(y[event]) + np.sum(tc["log_s"]))
        if not np.isfinite(ll):
            return -np.inf, None
        if not grad:
            return ll, None
        q = np.empty(t.size)  # dl_i / dw_i
        q[event], q[~event] = te["dlog_g"], tc["dlog_s"]
        g = np.empty(n_params(family, p))
        g[0] = -np.sum(q) / sigma
        g[1:1 + p] = -(Z.T @ q) / sigma
        pos = 1 + p
        if family.has_scale:
            g[pos] = -np.sum(q * w) - np.sum(event)
            pos += 1
        if family.n_shapes:
            dshape = te["dlog_g_shape"].sum(axis=1) + tc["dlog_s_shape"].sum(axis=1)
            g[pos:] = np.asarray(shapes) * dshape
    if not np.all(np.isfinite(g)):
        return -np.inf, None
    return ll, g


def loglik(family, params, t, event, Z=None):
    """Censored log-likelihood: events contribute ``log f``, censorings ``log S``.

    Returns ``-inf`` when any term is non-finite.
    """
    return _evaluate(family, params, t, event, Z, grad=False)[0]


def loglik_gradient(family, params, t, event, Z=None):
    """Gradient of :func:`loglik` in ``(a0, a, log sigma, log shapes)``."""
    ll, g = _evaluate(family, params, t, event, Z, grad=True)
    if g is None:
        return np.full(n_params(Family.parse(family), _as_design(t, event, Z)[2].shape[1]), np.nan)
    return g


@dataclass(frozen=True)
class WaldEntry:
    index: int
    name: str
    estimate: float
    se: float
    z: float
    p_value: float
    significant: bool
    degenerate: bool = False


@dataclass(frozen=True)
class WaldReport:
    entries: tuple
    level: float = 0.10

    @property
    def significant(self):
        return tuple(e.index for e in self.entries if e.significant)

    def to_dict(self):
        return {"level": self.level, "entries": [e.__dict__.copy() for e in self.entries]}


@dataclass(frozen=True)
class AftFit:
    """A fitted AFT model.

    ``retained`` indexes the columns of the raw feature matrix used by the
    model; ``center`` and ``spread`` are their standardization constants.
    """

    family: Family
    params: np.ndarray
    covariance: np.ndarray
    max_loglik: float
    retained: tuple
    center: np.ndarray
    spread: np.ndarray
    n_events: int
    n_censored: int
    names: tuple = ()
    n_iter: int = 0
    grad_norm: float = 0.0
    screening: WaldReport = field(default=None, compare=False)

    @property
    def p(self):
        return len(self.retained)

    @property
    def intercept(self):
        return float(self.params[0])

    @property
    def coefficients(self):
        return np.asarray(self.params[1:1 + self.p])

    @property
    def scale(self):
        return math.exp(self.params[1 + self.p]) if self.family.has_scale else 1.0

    @property
    def shapes(self):
        if self.family is Family.GENERALIZED_F:
            return tuple(float(v) for v in np.exp(self.params[-2:]))
        return ()

    @property
    def param_names(self):
        return param_names(self.family, self.names)

    def standardize(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.p == 0:
            return np.zeros((X.shape[0], 0))
        return (X[:, list(self.retained)] - self.center) / self.spread

    def linear_predictor(self, X):
        return self.intercept + self.standardize(X) @ self.coefficients

    def time_law(self, x):
        eta = float(self.linear_predictor(np.asarray(x, dtype=float)[None, :])[0])
        return TimeLaw.of(self.family, eta, self.scale, self.shapes)

    def survival_matrix(self, X, times):
        """Conditional survival, rows = subjects, columns = ``times``."""
        eta = self.linear_predictor(X)
        times = np.asarray(times, dtype=float)
        if np.any(times < 0):
            raise DomainError("survival requires t >= 0")
        out = np.ones((eta.size, times.size))
        pos = times > 0
        if np.any(pos):
            w = (np.log(times[pos])[None, :] - eta[:, None]) / self.scale
            ls = error_terms(self.family, w.ravel(), self.shapes, grad=False)["log_s"]
            out[:, pos] = np.exp(ls.reshape(w.shape))
        return out

    def raw_coefficients(self):
        """Intercept and coefficients on the unstandardized feature scale."""
        a = self.coefficients / self.spread if self.p else np.zeros(0)
        a0 = self.intercept - float(np.sum(a * self.center)) if self.p else self.intercept
        return a0, a

    def to_dict(self):
        return {
            "format_version": FORMAT_VERSION,
            "family": self.family.value,
            "retained": [int(i) for i in self.retained],
            "names": list(self.names),
            "center": [float(v) for v in self.center],
            "spread": [float(v) for v in self.spread],
            "params": [float(v) for v in self.params],
            "covariance": [float(v) for v in np.asarray(self.covariance).ravel()],
            "max_loglik": float(self.max_loglik),
            "n_events": int(self.n_events),
            "n_censored": int(self.n_censored),
            "n_iter": int(self.n_iter),
            "grad_norm": float(self.grad_norm),
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("format_version") != FORMAT_VERSION:
            raise ParameterError(f"unsupported AFT model format {d.get('format_version')!r}")
        params = np.array(d["params"], dtype=float)
        k = params.size
        return cls(
            family=Family.parse(d["family"]),
            params=params,
            covariance=np.array(d["covariance"], dtype=float).reshape(k, k),
            max_loglik=float(d["max_loglik"]),
            retained=tuple(int(i) for i in d["retained"]),
            center=np.array(d["center"], dtype=float),
            spread=np.array(d["spread"], dtype=float),
            n_events=int(d["n_events"]),
            n_censored=int(d["n_censored"]),
            names=tuple(d.get("names", ())),
            n_iter=int(d.get("n_iter", 0)),
            grad_norm=float(d.get("grad_norm", 0.0)),
        )

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _column_names(X_cols, columns, names):
    if names is not None:
        return tuple(names[j] for j in columns)
    from .data import FEATURE_NAMES

    if X_cols == len(FEATURE_NAMES):
        return tuple(FEATURE_NAMES[j] for j in columns)
    return tuple(f"x{j}" for j in columns)


def fit_aft(family, t, event, X=None, columns=None, names=None, maxiter=500, gtol=1e-6,
            shape_bound=8.0):
    """Maximum-likelihood AFT fit.

    Parameters
    ----------
    family : Family or str
    t, event : array_like
        Positive durations and event indicators (``False`` = right-censored).
    X : array_like, optional
        Raw feature matrix ``(n, k)``.
    columns : sequence of int, optional
        Columns of ``X`` to enter the model; all by default.
    shape_bound : float
        Generalized F log-shapes are confined to ``[-shape_bound, shape_bound]``.
        A shape that ends within 1 of the bound is a boundary estimate: it is
        held fixed and gets zero variance in ``covariance``.

    Raises
    ------
    FitError
        ``"no events"``, or ``"non-identifiable"`` for a constant covariate or
        a singular information matrix.
    ConvergenceError
        If the optimizer reaches ``maxiter``.
    """
    family = Family.parse(family)
    t = np.asarray(t, dtype=float).ravel()
    event = np.asarray(event, dtype=bool).ravel()
    if X is None:
        X = np.zeros((t.size, 0))
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[0] != t.size:
        X = X.reshape(t.size, -1)
    columns = tuple(range(X.shape[1])) if columns is None else tuple(int(c) for c in columns)
    if not event.any():
        raise FitError("no events")
    if np.any(~(t > 0)):
        raise DomainError("durations must be positive")

    raw = X[:, list(columns)] if columns else np.zeros((t.size, 0))
    center = raw.mean(axis=0)
    spread = raw.std(axis=0)
    if np.any(spread <= 1e-12 * np.maximum(1.0, np.abs(center))):
        bad = [columns[j] for j in np.flatnonzero(spread <= 1e-12 * np.maximum(1.0, np.abs(center)))]
        raise FitError(f"non-identifiable: constant covariate column(s) {bad}")
    Z = (raw - center) / spread if columns else raw
    p = Z.shape[1]

    k = n_params(family, p)
    n_sh = family.n_shapes
    B = float(shape_bound)

    # Shapes are searched through log m = B tanh(phi / B): the generalized F
    # drifts to m -> inf when the data sit on its Weibull/lognormal boundary.
    def to_theta(phi):
        if not n_sh:
            return phi
        theta = phi.copy()
        theta[-n_sh:] = B * np.tanh(phi[-n_sh:] / B)
        return theta

    def fun(phi):
        ll = loglik(family, to_theta(phi), t, event, Z)
        return -ll if np.isfinite(ll) else np.inf

    def grad(phi):
        g = -loglik_gradient(family, to_theta(phi), t, event, Z)
        if n_sh:
            g[-n_sh:] *= 1.0 / np.cosh(phi[-n_sh:] / B) ** 2
        return g

    def grad_theta(theta):
        return -loglik_gradient(family, theta, t, event, Z)

    def active(phi, g):
        # A shape is parked once it is near the bound and still pushing outward.
        m = np.ones(k, dtype=bool)
        if n_sh:
            sh = B * np.tanh(phi[-n_sh:] / B)
            m[-n_sh:] = ~((np.abs(sh) > B - 1.0) & (g[-n_sh:] * np.sign(sh) <= 0))
        return m

    phi0 = np.zeros(k)
    phi0[0] = float(np.mean(np.log(t[event])))
    res = minimize(fun, grad, phi0, gtol=gtol, maxiter=maxiter, active=active)
    if not res.converged:
        raise ConvergenceError(
            f"{family.value} fit did not converge in {maxiter} iterations "
            f"(gradient norm {np.linalg.norm(res.grad):.3g})",
            last=to_theta(res.x),
        )
    theta_hat = to_theta(res.x)
    free = active(res.x, res.grad)
    info = fd_hessian(grad_theta, theta_hat)[np.ix_(free, free)]
    try:
        eig = np.linalg.eigvalsh(info)
    except np.linalg.LinAlgError:
        raise FitError("non-identifiable: information matrix is not finite") from None
    if not np.all(np.isfinite(eig)) or eig[0] <= 1e-10 * max(1.0, eig[-1]):
        raise FitError("non-identifiable: singular information matrix")
    cov = np.zeros((k, k))
    block = np.linalg.inv(info)
    cov[np.ix_(free, free)] = 0.5 * (block + block.T)
    return AftFit(
        family=family,
        params=theta_hat,
        covariance=cov,
        max_loglik=-res.fun,
        retained=columns,
        center=center,
        spread=spread,
        n_events=int(event.sum()),
        n_censored=int((~event).sum()),
        names=_column_names(X.shape[1], columns, names),
        n_iter=res.n_iter,
        grad_norm=float(np.linalg.norm(res.grad[free])),
    )


def wald_test(fit, level=0.10):
    """Per-covariate Wald z tests; flag set when ``p < level``."""
    entries = []
    for j, col in enumerate(fit.retained):
        est = float(fit.params[1 + j])
        var = float(fit.covariance[1 + j, 1 + j])
        se = math.sqrt(var) if var > 0 else 0.0
        if se == 0.0:
            entries.append(WaldEntry(col, fit.names[j] if fit.names else f"x{col}", est, 0.0,
                                     math.nan, math.nan, False, degenerate=True))
            continue
        z = est / se
        pval = float(2 * ndtr(-abs(z)))
        entries.append(WaldEntry(col, fit.names[j] if fit.names else f"x{col}", est, se, z,
                                 pval, pval < level))
    return WaldReport(tuple(entries), level)


def select_covariates(family, t, event, X, level=0.10, columns=None, names=None, **fit_kw):
    """Full fit, keep covariates with Wald ``p < level``, refit once.

    The returned fit carries the first-stage Wald report in ``screening``.
    """
    full = fit_aft(family, t, event, X, columns=columns, names=names, **fit_kw)
    report = wald_test(full, level)
    keep = report.significant
    if keep == full.retained:
        refit = full
    else:
        refit = fit_aft(family, t, event, X, columns=keep, names=names, **fit_kw)
    return _with_screening(refit, report)


def _with_screening(fit, report):
    d = dict(fit.__dict__)
    d["screening"] = report
    return AftFit(**d)


def conditional_survival(fit, x, t):
    """``P(T > t | x)`` under the fitted model."""
    return survival(fit.time_law(x), t)


def wald_boundary(level=0.10):
    """|z| at which the two-sided Wald p-value equals ``level``."""
    return float(ndtri(1 - level / 2))
