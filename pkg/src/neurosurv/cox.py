"""Cox partial likelihood, Schoenfeld residuals and the Grambsch-Therneau test.

Only used as a diagnostic of the proportional-hazards assumption; the Cox
model never feeds predictions downstream.
"""

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import FitError, ParameterError, PreconditionError
from .km import km_fit

__all__ = [
    "CoxFit",
    "PhaReport",
    "cox_partial",
    "fit_cox",
    "schoenfeld_residuals",
    "grambsch_therneau",
    "pha_test",
]


def _prepare(t, event, X):
    t = np.asarray(t, dtype=float).ravel()
    event = np.asarray(event, dtype=bool).ravel()
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if not (t.size == event.size == X.shape[0]):
        raise ParameterError("durations, events and covariates differ in length")
    return t, event, X


def _risk_sets(t, event):
    """Distinct event times, and for each: risk-set start (in time-sorted order) and death count."""
    order = np.argsort(t, kind="stable")
    ts = t[order]
    times = np.unique(t[event])
    start = np.searchsorted(ts, times, side="left")
    te = np.sort(t[event])
    deaths = np.searchsorted(te, times, side="right") - np.searchsorted(te, times, side="left")
    return order, times, start, deaths


def cox_partial(beta, t, event, X):
    """Breslow partial log-likelihood, score vector and information matrix."""
    t, event, X = _prepare(t, event, X)
    beta = np.asarray(beta, dtype=float)
    Xc = X - X.mean(axis=0)
    order, times, start, deaths = _risk_sets(t, event)
    xs = Xc[order]
    eta = xs @ beta
    shift = eta.max() if eta.size else 0.0
    w = np.exp(eta - shift)
    # Reverse cumulative sums give sums over {j : t_j >= t_k}.
    S0 = np.cumsum(w[::-1])[::-1][start]
    S1 = np.cumsum((w[:, None] * xs)[::-1], axis=0)[::-1][start]
    S2 = np.cumsum((w[:, None, None] * xs[:, :, None] * xs[:, None, :])[::-1], axis=0)[::-1][start]
    ev = event[order]
    tk = np.searchsorted(times, t[order])
    sum_x = np.zeros((times.size, X.shape[1]))
    np.add.at(sum_x, tk[ev], xs[ev])
    sum_eta = np.zeros(times.size)
    np.add.at(sum_eta, tk[ev], eta[ev])
    ll = float(np.sum(sum_eta - deaths * (np.log(S0) + shift)))
    xbar = S1 / S0[:, None]
    score = np.sum(sum_x - deaths[:, None] * xbar, axis=0)
    info = np.sum(deaths[:, None, None] * (S2 / S0[:, None, None] - xbar[:, :, None] * xbar[:, None, :]), axis=0)
    return ll, score, info


@dataclass(frozen=True)
class CoxFit:
    coefficients: np.ndarray
    covariance: np.ndarray
    loglik: float
    n_events: int
    n_iter: int
    names: tuple = ()

    @property
    def p(self):
        return self.coefficients.size


def fit_cox(t, event, X, names=None, tol=1e-8, maxiter=100):
    """Newton-Raphson with step halving on the Breslow partial likelihood.

    Raises
    ------
    FitError
        ``"non-identifiable"`` for constant covariates or singular
        information, ``"separation"`` when the likelihood is monotone in some
        direction (coefficients diverge).
    """
    t, event, X = _prepare(t, event, X)
    if not event.any():
        raise FitError("no events")
    sd = X.std(axis=0)
    if np.any(sd <= 1e-12 * np.maximum(1.0, np.abs(X.mean(axis=0)))):
        raise FitError("non-identifiable: constant covariate")
    p = X.shape[1]
    beta = np.zeros(p)
    ll, U, I = cox_partial(beta, t, event, X)
    n_iter = 0
    # Newton converges quadratically; polishing past ``tol`` costs a step or two.
    target = 1e-3 * tol
    while np.linalg.norm(U) >= target:
        if n_iter >= maxiter:
            break
        if np.any(np.abs(beta) * sd > 25):
            raise FitError("separation: partial likelihood is monotone (coefficients diverge)")
        try:
            step = np.linalg.solve(I, U)
        except np.linalg.LinAlgError:
            raise FitError("non-identifiable: singular information matrix") from None
        for _ in range(40):
            cand = beta + step
            ll_new, U_new, I_new = cox_partial(cand, t, event, X)
            if np.isfinite(ll_new) and ll_new >= ll - 1e-12 * abs(ll):
                break
            step = step / 2
        else:
            break
        gain = np.linalg.norm(U_new) / np.linalg.norm(U)
        beta, ll, U, I = cand, ll_new, U_new, I_new
        n_iter += 1
        if np.linalg.norm(U) < tol and gain > 0.5:
            break  # score at its rounding floor
    if np.any(np.abs(beta) * sd > 25):
        raise FitError("separation: partial likelihood is monotone (coefficients diverge)")
    if np.linalg.norm(U) >= tol * max(1.0, math.sqrt(event.sum())):
        raise FitError(f"Cox fit did not converge (score norm {np.linalg.norm(U):.3g})")
    eig = np.linalg.eigvalsh(I)
    if eig[0] <= 1e-10 * max(1.0, eig[-1]):
        raise FitError("non-identifiable: singular information matrix")
    cov = np.linalg.inv(I)
    names = tuple(names) if names is not None else tuple(f"x{j}" for j in range(p))
    return CoxFit(beta, 0.5 * (cov + cov.T), ll, int(event.sum()), n_iter, names)


def schoenfeld_residuals(fit, t, event, X):
    """One row per event, ordered by event time: ``x_i - E_beta[x | risk set]``.

    Returns ``(residuals, event_times)``.
    """
    t, event, X = _prepare(t, event, X)
    order = np.argsort(t, kind="stable")
    ts, es, xs = t[order], event[order], X[order]
    eta = xs @ fit.coefficients
    w = np.exp(eta - eta.max())
    S0 = np.cumsum(w[::-1])[::-1]
    S1 = np.cumsum((w[:, None] * xs)[::-1], axis=0)[::-1]
    # Risk set of an event at t_i starts at the first index with t >= t_i.
    first = np.searchsorted(ts, ts[es], side="left")
    xbar = S1[first] / S0[first][:, None]
    return xs[es] - xbar, ts[es]


@dataclass(frozen=True)
class PhaReport:
    names: tuple
    chisq: np.ndarray
    p_values: np.ndarray
    global_chisq: float
    df: int
    global_p: float
    transform: str
    alpha: float = 0.05

    @property
    def rejected(self):
        return bool(self.global_p < self.alpha)

    def to_dict(self):
        return {
            "transform": self.transform,
            "alpha": self.alpha,
            "covariates": [{"name": n, "chisq": float(c), "p_value": float(p)}
                           for n, c, p in zip(self.names, self.chisq, self.p_values)],
            "global": {"chisq": float(self.global_chisq), "df": int(self.df),
                       "p_value": float(self.global_p)},
            "global_p_value": float(self.global_p),
            "rejected": self.rejected,
        }

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)


def grambsch_therneau(resid, gtime, covariance, names=None, transform="km", alpha=0.05):
    """Score-type test of zero slope of scaled Schoenfeld residuals on g(t)."""
    resid = np.atleast_2d(np.asarray(resid, dtype=float))
    gtime = np.asarray(gtime, dtype=float)
    V = np.atleast_2d(np.asarray(covariance, dtype=float))
    d, p = resid.shape
    xx = gtime - gtime.mean()
    sxx = float(xx @ xx)
    if sxx <= 0:
        raise PreconditionError("transformed event times are constant")
    u = xx @ resid
    scaled = d * (u @ V)
    with np.errstate(divide="ignore", invalid="ignore"):
        chisq = scaled ** 2 / (np.diag(V) * d * sxx)
    glob = float(u @ V @ u) * d / sxx
    pv = stats.chi2.sf(chisq, 1)
    gp = float(stats.chi2.sf(glob, p))
    names = tuple(names) if names is not None else tuple(f"x{j}" for j in range(p))
    return PhaReport(names, chisq, pv, glob, p, gp, transform, alpha)


def transformed_times(t, event, event_times, transform="km"):
    if transform == "km":
        km = km_fit(t, event)
        return 1.0 - km.left_limit(event_times)
    if transform == "identity":
        return np.asarray(event_times, dtype=float)
    if transform == "rank":
        return stats.rankdata(event_times)
    if transform == "log":
        return np.log(event_times)
    raise ParameterError(f"unknown time transform {transform!r}")


def pha_test(fit, t, event, X, transform="km", alpha=0.05):
    """Per-covariate and global proportional-hazards test for a fitted Cox model."""
    t, event, X = _prepare(t, event, X)
    if event.sum() < 2:
        raise PreconditionError("pha_test needs at least 2 events")
    resid, etimes = schoenfeld_residuals(fit, t, event, X)
    g = transformed_times(t, event, etimes, transform)
    return grambsch_therneau(resid, g, fit.covariance, fit.names, transform, alpha)
