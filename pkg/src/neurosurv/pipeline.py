"""End-to-end run: split, rank, PHA diagnostic, AFT selection, classifier, de-conditioning."""

import hashlib
import json
import math
import os
import platform
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .aft import AftFit, select_covariates
from .classifier import classify, metrics, predict_proba, train_mlp
from .config import PipelineConfig
from .cox import fit_cox, pha_test
from .data import (
    FEATURE_NAMES,
    Dataset,
    compute_investor_ranks,
    feature_matrix,
    filter_conditional,
    split,
    survival_arrays,
)
from .distributions import FAMILY_ORDER, Family
from .errors import FitError, NeurosurvError, ParameterError, PreconditionError
from .km import KM_CSV_COLUMNS, KmCurve, km_confidence, km_fit

__all__ = [
    "FamilyEntry",
    "SelectionRecord",
    "SectorResult",
    "Report",
    "fit_quality",
    "population_curve",
    "choose_family",
    "select_model",
    "marginal_probability",
    "run_pipeline",
    "run_to_dir",
    "emit_curves",
]

REPORT_VERSION = 1
CURVE_COLUMNS = KM_CSV_COLUMNS + ("aft_cond", "aft_uncond")


def marginal_probability(s_cond, p_v):
    """``P(T <= t) = 1 - S(t | not BA) P(not BA)``; a BA firm counts as exited at t = 0."""
    s = np.asarray(s_cond, dtype=float)
    p = np.asarray(p_v, dtype=float)
    out = 1.0 - s * p
    return float(out) if out.ndim == 0 else out


def population_curve(fit, X, times):
    """Mean of the subjects' conditional survival curves."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[0] == 0:
        raise PreconditionError("empty subject set")
    return fit.survival_matrix(X, times).mean(axis=0)


def fit_quality(fit, X_hold, km, level=0.95):
    """Share of ``km`` event times where the population curve lies inside the KM band."""
    if len(km) == 0:
        raise PreconditionError("KM curve has no event times")
    if km.lower is None or km.level != level:
        km = km_confidence(km, level)
    curve = population_curve(fit, X_hold, km.event_times)
    inside = (curve >= km.lower) & (curve <= km.upper)
    return float(inside.mean())


@dataclass(frozen=True)
class FamilyEntry:
    family: Family
    max_loglik: float = math.nan
    n_retained: int = 0
    coverage: float = math.nan
    error: str = None

    @property
    def ok(self):
        return self.error is None

    def to_dict(self):
        return {"family": self.family.value, "max_loglik": self.max_loglik,
                "n_retained": self.n_retained, "coverage": self.coverage, "error": self.error}

    @classmethod
    def from_dict(cls, d):
        return cls(Family.parse(d["family"]), d["max_loglik"], d["n_retained"], d["coverage"], d["error"])


@dataclass(frozen=True)
class SelectionRecord:
    entries: tuple
    chosen: Family
    rationale: str
    slack: float = 0.02
    fits: dict = field(default=None, compare=False, repr=False)

    def to_dict(self):
        return {"entries": [e.to_dict() for e in self.entries], "chosen": self.chosen.value,
                "rationale": self.rationale, "slack": self.slack}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(FamilyEntry.from_dict(e) for e in d["entries"]), Family.parse(d["chosen"]),
                   d["rationale"], d["slack"])


def _fmt(e):
    return f"{e.family.value}(MaxLLE={e.max_loglik:.4f}, k={e.n_retained}, coverage={e.coverage:.3f})"


def choose_family(entries, slack=0.02):
    """Apply the three-criterion rule to fitted ``entries``.

    Families within ``slack`` of the best KM coverage are shortlisted; the
    highest MaxLLE wins, ties go to fewer retained covariates and then to the
    fixed family order. Returns ``(family, rationale)``.
    """
    ok = [e for e in entries if e.ok]
    if not ok:
        causes = "; ".join(f"{e.family.value}: {e.error}" for e in entries)
        raise FitError(f"no family could be fitted ({causes})")
    ok.sort(key=lambda e: FAMILY_ORDER.index(e.family))
    best_cov = max(e.coverage for e in ok)
    cut = best_cov - slack
    shortlist = [e for e in ok if e.coverage >= cut - 1e-12]
    parts = [f"best coverage {best_cov:.3f}; shortlist coverage >= {cut:.3f}"]
    for e in ok:
        parts.append(("kept " if e in shortlist else "dropped ") + _fmt(e))
    for e in entries:
        if not e.ok:
            parts.append(f"failed {e.family.value}: {e.error}")
    top = max(e.max_loglik for e in shortlist)
    tol = 1e-9 * max(1.0, abs(top))
    tied = [e for e in shortlist if e.max_loglik >= top - tol]
    winner = min(tied, key=lambda e: (e.n_retained, FAMILY_ORDER.index(e.family)))
    if len(tied) == 1:
        parts.append(f"chosen {winner.family.value}: highest MaxLLE in shortlist")
    else:
        parts.append(f"chosen {winner.family.value}: MaxLLE tie among "
                     f"{[e.family.value for e in tied]}, fewest covariates then family order")
    return winner.family, "; ".join(parts)


def select_model(t, event, X, X_hold, km, families=FAMILY_ORDER, level=0.10, slack=0.02,
                 columns=None, km_level=0.95):
    """Wald-screened fit per family, scored by MaxLLE, covariate count and KM coverage."""
    fams = sorted({Family.parse(f) for f in families}, key=FAMILY_ORDER.index)
    entries, fits = [], {}
    for fam in fams:
        try:
            fit = select_covariates(fam, t, event, X, level=level, columns=columns)
            cov = fit_quality(fit, X_hold, km, km_level)
        except (NeurosurvError, np.linalg.LinAlgError, FloatingPointError) as exc:
            entries.append(FamilyEntry(fam, error=f"{type(exc).__name__}: {exc}"))
            continue
        fits[fam] = fit
        entries.append(FamilyEntry(fam, float(fit.max_loglik), fit.p, cov))
    chosen, why = choose_family(entries, slack)
    return SelectionRecord(tuple(entries), chosen, why, slack, fits)


@dataclass
class SectorResult:
    sector: int
    status: str
    error: str = None
    pha: dict = None
    selection: SelectionRecord = None
    fit: AftFit = None
    km_train: KmCurve = None
    km_holdout: KmCurve = None
    curves: dict = None
    marginal: dict = None
    counts: dict = None

    @property
    def ok(self):
        return self.status == "ok"

    def to_dict(self):
        return {
            "sector": self.sector, "status": self.status, "error": self.error, "pha": self.pha,
            "selection": self.selection.to_dict() if self.selection else None,
            "fit": self.fit.to_dict() if self.fit else None,
            "km_train": self.km_train.to_dict() if self.km_train else None,
            "km_holdout": self.km_holdout.to_dict() if self.km_holdout else None,
            "curves": self.curves, "marginal": self.marginal, "counts": self.counts,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            d["sector"], d["status"], d.get("error"), d.get("pha"),
            SelectionRecord.from_dict(d["selection"]) if d.get("selection") else None,
            AftFit.from_dict(d["fit"]) if d.get("fit") else None,
            KmCurve.from_dict(d["km_train"]) if d.get("km_train") else None,
            KmCurve.from_dict(d["km_holdout"]) if d.get("km_holdout") else None,
            d.get("curves"), d.get("marginal"), d.get("counts"),
        )


@dataclass
class Report:
    config: dict
    provenance: dict
    seeds: dict
    classifier: dict
    sectors: dict

    @property
    def partial(self):
        return any(not r.ok for r in self.sectors.values())

    def to_dict(self):
        return {
            "format_version": REPORT_VERSION,
            "partial": self.partial,
            "config": self.config,
            "seeds": self.seeds,
            "provenance": self.provenance,
            "classifier": self.classifier,
            "sectors": {str(k): v.to_dict() for k, v in sorted(self.sectors.items())},
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("format_version") != REPORT_VERSION:
            raise NeurosurvError(f"unsupported report format {d.get('format_version')!r}")
        return cls(d["config"], d["provenance"], d["seeds"], d["classifier"],
                   {int(k): SectorResult.from_dict(v) for k, v in d["sectors"].items()})

    def dumps(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.dumps())

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _floats(a):
    return [float(v) for v in np.asarray(a, dtype=float).ravel()]


def _train_classifier(train, ranks, cfg):
    clf_train, clf_hold = split(train, cfg.clf_holdout_fraction, cfg.clf_split_seed)
    Xc = feature_matrix(clf_train, ranks)
    yc = np.array([c.status.is_ba for c in clf_train], dtype=float)
    model = train_mlp(Xc, yc, cfg.train)
    Xh = feature_matrix(clf_hold, ranks)
    yh = np.array([c.status.is_ba for c in clf_hold], dtype=int)
    rep = metrics(classify(predict_proba(model, Xh)), yh)
    summary = {
        "metrics": rep.to_dict(),
        "n_train": len(clf_train), "n_holdout": len(clf_hold),
        "n_ba_train": int(yc.sum()), "n_ba_holdout": int(yh.sum()),
        "final_loss": float(model.loss_history[-1]),
        "model": model.to_dict(),
    }
    return model, summary


def _run_sector(sector, train, hold, ranks, model, cfg):
    counts = {"train": len(train), "holdout": len(hold)}
    cond = filter_conditional(train)
    if any(c.status.is_ba for c in cond):
        raise AssertionError("bankrupt/acquired record reached the conditional stage")
    cond_h = filter_conditional(hold)
    counts.update(train_conditional=len(cond), holdout_conditional=len(cond_h))
    if len(cond) == 0 or len(cond_h) == 0:
        raise PreconditionError("no IPO/private companies in the training or holdout part")
    t, e = survival_arrays(cond, cfg.study_end)
    X = feature_matrix(cond, ranks)
    th, eh = survival_arrays(cond_h, cfg.study_end)
    Xh = feature_matrix(cond_h, ranks)
    if not eh.any():
        raise PreconditionError("holdout part has no IPO events")
    sd = X.std(axis=0)
    columns = tuple(int(j) for j in np.flatnonzero(sd > 1e-12 * np.maximum(1.0, np.abs(X.mean(axis=0)))))
    counts["dropped_constant"] = [FEATURE_NAMES[j] for j in range(X.shape[1]) if j not in columns]

    try:
        cox = fit_cox(t, e, X[:, list(columns)], names=[FEATURE_NAMES[j] for j in columns])
        pha = pha_test(cox, t, e, X[:, list(columns)], cfg.pha_transform, cfg.pha_alpha).to_dict()
    except (NeurosurvError, np.linalg.LinAlgError) as exc:
        pha = {"error": f"{type(exc).__name__}: {exc}"}

    km_tr = km_confidence(km_fit(t, e), cfg.km_level)
    km_ho = km_confidence(km_fit(th, eh), cfg.km_level)
    sel = select_model(t, e, X, Xh, km_ho, cfg.families, cfg.wald_level, cfg.selection_slack,
                       columns, cfg.km_level)
    fit = sel.fits[sel.chosen]

    X_all = feature_matrix(hold, ranks)
    p_v = 1.0 - np.atleast_1d(predict_proba(model, X_all))
    mean_pv = float(p_v.mean())
    curves = {}
    for name, km, Xs in (("train", km_tr, X), ("holdout", km_ho, Xh)):
        cond_curve = population_curve(fit, Xs, km.event_times)
        curves[name] = {"aft_cond": _floats(cond_curve), "aft_uncond": _floats(mean_pv * cond_curve),
                        "mean_p_v": mean_pv}
    grid = np.concatenate([[0.0], km_ho.event_times])
    S = fit.survival_matrix(X_all, grid)
    P = marginal_probability(S, p_v[:, None])
    marginal = {
        "t": _floats(grid),
        "companies": [{"company_id": c.company_id, "status": c.status.value, "p_v": float(p_v[i]),
                       "p_ipo": _floats(P[i])} for i, c in enumerate(hold)],
    }
    return SectorResult(sector, "ok", None, pha, sel, fit, km_tr, km_ho, curves, marginal, counts)


def run_pipeline(config, data=None):
    """Run the full procedure; per-sector failures are recorded, not raised."""
    if not isinstance(config, PipelineConfig):
        config = PipelineConfig.from_dict(config)
    if data is None:
        data = Dataset.load(config.dataset)
    train, hold = split(data, config.holdout_fraction, config.split_seed)
    ranks = compute_investor_ranks(train)
    model, clf_summary = _train_classifier(train, ranks, config)

    configured = set(config.sectors)
    sector_ids = sorted(set(data.sectors) | configured)
    results = {}
    for s in sector_ids:
        if configured and s not in configured:
            results[s] = SectorResult(s, "failed", "sector not in configuration")
            continue
        tr_s, ho_s = train.sector(s), hold.sector(s)
        if len(tr_s) == 0 and len(ho_s) == 0:
            results[s] = SectorResult(s, "failed", "no companies for this sector in the data")
            continue
        try:
            results[s] = _run_sector(s, tr_s, ho_s, ranks, model, config)
        except (NeurosurvError, np.linalg.LinAlgError) as exc:
            results[s] = SectorResult(s, "failed", f"{type(exc).__name__}: {exc}")

    seeds = {"split": config.split_seed, "classifier_split": config.clf_split_seed,
             "classifier_train": config.train.seed}
    prov = data.provenance.to_dict()
    prov["n_companies"] = len(data)
    prov["n_train"], prov["n_holdout"] = len(train), len(hold)
    prov["n_ranked_investors"] = len(ranks)
    return Report(config.to_dict(), prov, seeds, clf_summary, results)


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _versions():
    import scipy

    return {"neurosurv": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def run_to_dir(config, out_dir=None, data=None):
    """Run and write ``report.json`` plus ``manifest.json``; returns the report."""
    if not isinstance(config, PipelineConfig):
        config = PipelineConfig.from_dict(config)
    out_dir = out_dir or config.out_dir
    os.makedirs(out_dir, exist_ok=True)
    report = run_pipeline(config, data)
    rpath = os.path.join(out_dir, "report.json")
    report.save(rpath)
    inputs = {}
    if config.dataset and os.path.exists(config.dataset):
        inputs[config.dataset] = _sha256(config.dataset)
    manifest = {"inputs": inputs, "seeds": report.seeds, "versions": _versions(),
                "hashes": {"report.json": _sha256(rpath)}, "partial": report.partial,
                "failed_sectors": sorted(k for k, r in report.sectors.items() if not r.ok)}
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return report


def _curve_rows(km, curve):
    for row, c, u in zip(km.rows(), curve["aft_cond"], curve["aft_uncond"]):
        yield {**row, "aft_cond": c, "aft_uncond": u}


def _write_curve_csv(path, km, curve):
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CURVE_COLUMNS, lineterminator="\n")
        w.writeheader()
        for row in _curve_rows(km, curve):
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})


def _svg(sector, km, curve, width=640, height=400, pad=56):
    t_max = float(km.event_times[-1]) if len(km) else 1.0
    t_max = t_max if t_max > 0 else 1.0
    W, H = width - 2 * pad, height - 2 * pad

    def X(t):
        return pad + W * t / t_max

    def Y(s):
        return pad + H * (1.0 - s)

    def steps(values):
        pts = [(X(0.0), Y(1.0))]
        prev = 1.0
        for t, s in zip(km.event_times, values):
            pts += [(X(t), Y(prev)), (X(t), Y(s))]
            prev = s
        return " ".join(f"{x:.2f},{y:.2f}" for x, y in pts)

    def line(values, start=1.0):
        pts = [(X(0.0), Y(start))] + [(X(t), Y(s)) for t, s in zip(km.event_times, values)]
        return " ".join(f"{x:.2f},{y:.2f}" for x, y in pts)

    ticks = []
    for k in range(6):
        s = k / 5
        ticks.append(f'<line x1="{pad - 4}" y1="{Y(s):.2f}" x2="{pad}" y2="{Y(s):.2f}" stroke="black"/>'
                     f'<text x="{pad - 8}" y="{Y(s) + 4:.2f}" font-size="11" text-anchor="end">{s:.1f}</text>')
        t = t_max * k / 5
        ticks.append(f'<line x1="{X(t):.2f}" y1="{pad + H}" x2="{X(t):.2f}" y2="{pad + H + 4}" stroke="black"/>'
                     f'<text x="{X(t):.2f}" y="{pad + H + 18}" font-size="11" text-anchor="middle">{t:.1f}</text>')
    body = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2}" y="24" font-size="14" text-anchor="middle">Sector {sector}</text>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{pad + H}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad + H}" x2="{pad + W}" y2="{pad + H}" stroke="black"/>',
        *ticks,
        f'<text x="{pad + W / 2}" y="{height - 12}" font-size="12" text-anchor="middle">years</text>',
        f'<text x="16" y="{pad + H / 2}" font-size="12" text-anchor="middle" '
        f'transform="rotate(-90 16 {pad + H / 2})">survival probability</text>',
        f'<polyline fill="none" stroke="black" stroke-dasharray="4 3" points="{steps(km.lower)}"/>',
        f'<polyline fill="none" stroke="black" stroke-dasharray="4 3" points="{steps(km.upper)}"/>',
        f'<polyline fill="none" stroke="black" stroke-width="1.5" points="{steps(km.estimates)}"/>',
        f'<polyline fill="none" stroke="#1f77b4" stroke-width="1.5" points="{line(curve["aft_cond"])}"/>',
        f'<polyline fill="none" stroke="#d62728" stroke-width="1.5" points="{line(curve["aft_uncond"], curve.get("mean_p_v", 1.0))}"/>',
        f'<text x="{pad + W - 4}" y="{pad + 14}" font-size="11" text-anchor="end">'
        'KM (dashed: 95% band), blue: AFT conditional, red: AFT unconditioned</text>',
        "</svg>",
    ]
    return "\n".join(body) + "\n"


def emit_curves(report, out_dir, fmt="csv"):
    """Write per-sector curve files and ``curves_manifest.json``; returns the file list.

    CSV output is always written; ``fmt="svg"`` adds one figure per sector.
    """
    if fmt not in ("csv", "svg"):
        raise ParameterError(f"unknown format {fmt!r}")
    if not any(r.ok for r in report.sectors.values()):
        raise PreconditionError("report has no completed sector")
    os.makedirs(out_dir, exist_ok=True)
    files, gaps = [], {}
    for s, res in sorted(report.sectors.items()):
        if not res.ok:
            gaps[str(s)] = res.error
            continue
        for part, km in (("train", res.km_train), ("holdout", res.km_holdout)):
            name = f"sector_{s}_{part}.csv"
            _write_curve_csv(os.path.join(out_dir, name), km, res.curves[part])
            files.append(name)
        if fmt == "svg":
            name = f"sector_{s}_holdout.svg"
            with open(os.path.join(out_dir, name), "w") as fh:
                fh.write(_svg(s, res.km_holdout, res.curves["holdout"]))
            files.append(name)
    with open(os.path.join(out_dir, "curves_manifest.json"), "w") as fh:
        json.dump({"files": files, "gaps": gaps}, fh, indent=2, sort_keys=True)
    return files
