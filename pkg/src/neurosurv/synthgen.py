"""Synthetic multi-sector company data with known AFT ground truth.

Generation runs in two passes. The first draws firm structure: foundation
date, funding rounds, investors from a power-law pool and round VIX. The
second computes the 14 features from investor ranks, exactly as the fitting
code does. It then standardizes them per sector and draws outcomes:

* latent time to IPO ``T`` with ``log T = a0 + a . z + sigma W``;
* a bankrupt/acquired label from ``logit P(BA) = b0 + b . z``, independent of ``T``.

Non-BA firms with ``foundation + T <= study_end`` are IPOs, the rest stay private.

Randomness comes from numpy's PCG64 seeded with ``SeedSequence([seed, sector])``.
Every sector stream is split into ``structure`` and ``outcome`` children
with ``SeedSequence.spawn(2)``. A sector's data therefore does not depend on
which other sectors are generated alongside it.
"""

import datetime as dt
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import distributions as D
from .data import (
    DAYS_PER_YEAR,
    DEFAULT_STUDY_END,
    FEATURE_NAMES,
    CompanyRecord,
    Dataset,
    Provenance,
    RoundRecord,
    Status,
    compute_investor_ranks,
    feature_matrix,
)
from .distributions import Family
from .errors import ParameterError

__all__ = [
    "SectorSpec",
    "coefficient_vector",
    "generate_sector",
    "generate_study",
    "expected_censoring",
    "write_truth",
    "to_truth_scale",
]


def coefficient_vector(coefs=None):
    """14-vector from a ``{feature name or index: value}`` mapping or a sequence."""
    out = np.zeros(len(FEATURE_NAMES))
    if coefs is None:
        return out
    if isinstance(coefs, dict):
        for key, val in coefs.items():
            j = FEATURE_NAMES.index(key) if isinstance(key, str) else int(key)
            out[j] = float(val)
        return out
    arr = np.asarray(coefs, dtype=float).ravel()
    if arr.size != out.size:
        raise ParameterError(f"expected {out.size} coefficients, got {arr.size}")
    return arr


@dataclass(frozen=True)
class SectorSpec:
    """Ground truth for one sector.

    Coefficients act on features z-scored with the sector's own mean and
    (population) standard deviation. Constant features map to 0.
    """

    sector: int = 1
    n: int = 2000
    family: Family = Family.WEIBULL
    a0: float = 1.0
    coefficients: tuple = field(default_factory=lambda: tuple(np.zeros(14)))
    sigma: float = 0.5
    shapes: tuple = ()
    ba_intercept: float = -2.2
    ba_coefficients: tuple = field(default_factory=lambda: tuple(np.zeros(14)))
    investor_pool: int = 400
    power_law: float = 1.1
    round_probs: tuple = (0.3, 0.35, 0.35)
    mean_investors: float = 1.5
    max_investors: int = 8
    foundation_start: dt.date = dt.date(1998, 1, 1)
    foundation_end: dt.date = dt.date(2016, 12, 31)
    study_end: dt.date = DEFAULT_STUDY_END

    def __post_init__(self):
        fam = Family.parse(self.family)
        object.__setattr__(self, "family", fam)
        object.__setattr__(self, "coefficients", tuple(coefficient_vector(self.coefficients)))
        object.__setattr__(self, "ba_coefficients", tuple(coefficient_vector(self.ba_coefficients)))
        sigma = 1.0 if fam is Family.EXPONENTIAL else float(self.sigma)
        object.__setattr__(self, "sigma", sigma)
        # Validates family/scale/shape domains.
        law = D.ErrorLaw(fam, self.shapes)
        object.__setattr__(self, "shapes", law.shapes)
        if self.n < 1:
            raise ParameterError("n must be >= 1")
        if int(self.sector) < 1:
            raise ParameterError("sector id must be a positive integer")
        if self.investor_pool < 1 or self.max_investors < 1 or self.mean_investors < 0:
            raise ParameterError("investor pool settings out of range")
        if len(self.round_probs) != 3 or abs(sum(self.round_probs) - 1) > 1e-9 or min(self.round_probs) < 0:
            raise ParameterError("round_probs must be three probabilities summing to 1")
        if not self.foundation_start <= self.foundation_end < self.study_end:
            raise ParameterError("need foundation_start <= foundation_end < study_end")

    def to_dict(self):
        d = asdict(self)
        d["family"] = self.family.value
        for k in ("foundation_start", "foundation_end", "study_end"):
            d[k] = d[k].isoformat()
        for k in ("coefficients", "ba_coefficients", "shapes", "round_probs"):
            d[k] = [float(v) for v in d[k]]
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        for k in ("foundation_start", "foundation_end", "study_end"):
            if k in d and isinstance(d[k], str):
                d[k] = dt.date.fromisoformat(d[k])
        for k in ("shapes", "round_probs"):
            if k in d:
                d[k] = tuple(d[k])
        return cls(**d)


def _streams(seed, sector):
    ss = np.random.SeedSequence([int(seed), int(sector)])
    a, b = ss.spawn(2)
    return np.random.Generator(np.random.PCG64(a)), np.random.Generator(np.random.PCG64(b))


def _draw_structure(spec, rng, prefix):
    """Foundation dates and rounds; investors follow a discrete power law."""
    n = spec.n
    span = (spec.foundation_end - spec.foundation_start).days
    found_off = rng.integers(0, span + 1, size=n)
    n_rounds = rng.choice(3, size=n, p=spec.round_probs) + 1
    weights = np.arange(1, spec.investor_pool + 1, dtype=float) ** -spec.power_law
    cdf = np.cumsum(weights / weights.sum())
    k = np.minimum(1 + rng.poisson(spec.mean_investors, size=(n, 3)), spec.max_investors)
    picks = np.searchsorted(cdf, rng.random((n, 3, spec.max_investors)), side="right")
    picks = np.minimum(picks, spec.investor_pool - 1)
    gaps = rng.exponential([0.8, 1.2, 1.2], size=(n, 3)).cumsum(axis=1)
    vix = 10.0 + rng.gamma(2.0, 5.0, size=(n, 2))
    last_day = spec.study_end.toordinal()
    out = []
    for i in range(n):
        f_ord = spec.foundation_start.toordinal() + int(found_off[i])
        rounds = []
        for r in range(n_rounds[i]):
            # Repeat draws of the same investor collapse, keeping draw order.
            ids = dict.fromkeys(picks[i, r, :k[i, r]].tolist())
            names = tuple(f"{prefix}{j:04d}" for j in ids)
            day = min(f_ord + int(round(gaps[i, r] * DAYS_PER_YEAR)), last_day)
            rounds.append(RoundRecord(names, dt.date.fromordinal(day),
                                      float(vix[i, r]) if r < 2 else None))
        out.append((dt.date.fromordinal(f_ord), tuple(rounds)))
    return out


def _zscore(X):
    center = X.mean(axis=0)
    spread = X.std(axis=0)
    spread = np.where(spread > 0, spread, 1.0)
    return (X - center) / spread, center, spread


def expected_censoring(spec, locations):
    """Analytic share of non-BA firms still private at ``study_end``.

    Averages ``P(T > (days left + 1/2) / 365.25)`` over the uniform
    foundation-day distribution and the given linear predictors.
    """
    locations = np.asarray(locations, dtype=float).ravel()
    if locations.size == 0:
        return math.nan
    span = (spec.foundation_end - spec.foundation_start).days
    days = np.arange(span + 1) if span < 400 else np.linspace(0, span, 401)
    left = (spec.study_end - spec.foundation_start).days - days + 0.5
    u = left / DAYS_PER_YEAR
    w = (np.log(u)[None, :] - locations[:, None]) / spec.sigma
    s = np.exp(D.error_terms(spec.family, w.ravel(), spec.shapes, grad=False)["log_s"]).reshape(w.shape)
    if span < 400:
        return float(s.mean())
    # Trapezoid over the foundation window.
    return float(np.mean((s[:, 1:] + s[:, :-1]) / 2))


def _draw_outcomes(spec, structure, X, rng, prefix):
    Z, center, spread = _zscore(X)
    eta = spec.a0 + Z @ np.asarray(spec.coefficients)
    law = D.TimeLaw.of(spec.family, 0.0, spec.sigma, spec.shapes)
    u = rng.random(spec.n)
    u = np.clip(u, 1e-300, 1 - 1e-16)
    T = np.exp(eta) * D.quantile(law, u)
    ba_logit = spec.ba_intercept + Z @ np.asarray(spec.ba_coefficients)
    ba = rng.random(spec.n) < 1.0 / (1.0 + np.exp(-ba_logit))
    bankrupt = rng.random(spec.n) < 0.5
    companies = []
    for i, (found, rounds) in enumerate(structure):
        cid = f"{prefix}{i:06d}"
        if ba[i]:
            status = Status.BANKRUPT if bankrupt[i] else Status.ACQUISITION
            companies.append(CompanyRecord(cid, spec.sector, status, found, None, rounds))
            continue
        left = (spec.study_end - found).days
        days = T[i] * DAYS_PER_YEAR
        if days < left + 0.5:
            ipo = found + dt.timedelta(days=max(1, int(round(days))))
            companies.append(CompanyRecord(cid, spec.sector, Status.IPO, found, ipo, rounds))
        else:
            companies.append(CompanyRecord(cid, spec.sector, Status.PRIVATE, found, None, rounds))
    non_ba = ~ba
    statuses = [c.status for c in companies]
    n_private = sum(s is Status.PRIVATE for s in statuses)
    truth = {
        "spec": spec.to_dict(),
        "feature_names": list(FEATURE_NAMES),
        "feature_center": center.tolist(),
        "feature_spread": spread.tolist(),
        "n_ba": int(ba.sum()),
        "n_ipo": sum(s is Status.IPO for s in statuses),
        "n_private": n_private,
        "censoring_fraction": n_private / max(1, int(non_ba.sum())),
        "expected_censoring": expected_censoring(spec, eta[non_ba]),
    }
    return companies, truth


def generate_sector(spec, seed):
    """One sector; investor ranks are computed over this sector alone.

    Returns ``(dataset, truth)``.
    """
    s_rng, o_rng = _streams(seed, spec.sector)
    prefix = f"S{spec.sector}-"
    structure = _draw_structure(spec, s_rng, f"{prefix}inv")
    stubs = Dataset(tuple(CompanyRecord("x", spec.sector, Status.PRIVATE, f, None, r) for f, r in structure))
    X = feature_matrix(stubs, compute_investor_ranks(stubs))
    companies, truth = _draw_outcomes(spec, structure, X, o_rng, prefix)
    truth["seed"] = int(seed)
    prov = Provenance(source=f"synthgen(seed={seed})", rows_read=len(companies))
    return Dataset(tuple(companies), prov), truth


def generate_study(specs, seed, shared_pool=True):
    """Union of sectors with derived sub-seeds.

    With ``shared_pool`` all sectors hire from one investor pool and ranks
    are computed across the whole study, as the pipeline does.

    Returns ``(dataset, truth)`` where ``truth["sectors"]`` maps sector id to
    its ground truth.
    """
    specs = list(specs)
    ids = [s.sector for s in specs]
    if len(set(ids)) != len(ids):
        dup = sorted({i for i in ids if ids.count(i) > 1})
        raise ParameterError(f"duplicate sector id(s) {dup}")
    streams = {s.sector: _streams(seed, s.sector) for s in specs}
    structures = {}
    for s in specs:
        pool = "inv" if shared_pool else f"S{s.sector}-inv"
        structures[s.sector] = _draw_structure(s, streams[s.sector][0], pool)
    stubs = {s.sector: Dataset(tuple(CompanyRecord("x", s.sector, Status.PRIVATE, f, None, r)
                                     for f, r in structures[s.sector])) for s in specs}
    if shared_pool:
        ranks = compute_investor_ranks(Dataset(tuple(c for d in stubs.values() for c in d)))
    companies, truth = [], {"seed": int(seed), "shared_pool": bool(shared_pool), "sectors": {}}
    for s in specs:
        r = ranks if shared_pool else compute_investor_ranks(stubs[s.sector])
        X = feature_matrix(stubs[s.sector], r)
        comp, tr = _draw_outcomes(s, structures[s.sector], X, streams[s.sector][1], f"S{s.sector}-")
        companies.extend(comp)
        truth["sectors"][str(s.sector)] = tr
    prov = Provenance(source=f"synthgen(seed={seed})", rows_read=len(companies))
    return Dataset(tuple(companies), prov), truth


def to_truth_scale(fit, truth):
    """Express a fitted AFT model on the ground truth's feature standardization.

    Returns ``(a0, a)`` with ``a`` a 14-vector (zeros for dropped columns).
    """
    a0_raw, a_raw = fit.raw_coefficients()
    center = np.asarray(truth["feature_center"])
    spread = np.asarray(truth["feature_spread"])
    a = np.zeros(center.size)
    a[list(fit.retained)] = a_raw * spread[list(fit.retained)]
    return a0_raw + float(np.sum(a_raw * center[list(fit.retained)])), a


def write_truth(truth, path):
    with open(path, "w") as fh:
        json.dump(truth, fh, indent=2, sort_keys=True)
