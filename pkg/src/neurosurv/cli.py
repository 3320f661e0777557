"""Command-line entry point: ``neurosurv <subcommand> ...``."""

import argparse
import json
import os
import sys

import numpy as np

from .aft import select_covariates, wald_test
from .classifier import TrainConfig, classify, metrics, predict_proba, train_mlp
from .config import PipelineConfig, load_config, load_synth_config
from .cox import fit_cox, pha_test
from .data import (
    DEFAULT_STUDY_END,
    FEATURE_NAMES,
    Dataset,
    compute_investor_ranks,
    feature_matrix,
    filter_conditional,
    parse_dataset,
    split,
    survival_arrays,
    write_csv,
)
from .errors import NeurosurvError
from .pipeline import Report, emit_curves, run_to_dir
from .synthgen import generate_study, write_truth


def _print(obj):
    print(json.dumps(obj, indent=2, sort_keys=True))


def _sector_arrays(path, sector, study_end):
    data = Dataset.load(path)
    ranks = compute_investor_ranks(data)
    cond = filter_conditional(data.sector(sector))
    if len(cond) == 0:
        raise NeurosurvError(f"sector {sector} has no IPO/private companies")
    t, e = survival_arrays(cond, study_end)
    X = feature_matrix(cond, ranks)
    keep = [j for j in range(X.shape[1]) if X[:, j].std() > 0]
    return t, e, X, keep


def cmd_ingest(args):
    data = parse_dataset(args.csv)
    data.to_json(args.out)
    _print({"companies": len(data), "rows_read": data.provenance.rows_read,
            "dropped": dict(data.provenance.dropped), "sectors": data.sectors, "out": args.out})


def cmd_synth(args):
    specs, shared = load_synth_config(args.config)
    data, truth = generate_study(specs, args.seed, shared_pool=shared)
    write_csv(data, args.out)
    tpath = os.path.join(os.path.dirname(os.path.abspath(args.out)), "truth.json")
    write_truth(truth, tpath)
    _print({"companies": len(data), "sectors": data.sectors, "out": args.out, "truth": tpath})


def cmd_pha(args):
    t, e, X, keep = _sector_arrays(args.dataset, args.sector, args.study_end)
    names = [FEATURE_NAMES[j] for j in keep]
    fit = fit_cox(t, e, X[:, keep], names=names)
    _print(pha_test(fit, t, e, X[:, keep], args.transform, args.alpha).to_dict())


def cmd_fit(args):
    t, e, X, keep = _sector_arrays(args.dataset, args.sector, args.study_end)
    fit = select_covariates(args.family, t, e, X, level=args.level, columns=keep)
    out = {"family": fit.family.value, "max_loglik": fit.max_loglik,
           "screening": fit.screening.to_dict(), "final": wald_test(fit, args.level).to_dict(),
           "scale": fit.scale, "shapes": list(fit.shapes), "intercept": fit.intercept}
    if args.out:
        fit.save(args.out)
        out["model"] = args.out
    _print(out)


def cmd_train_clf(args):
    data = Dataset.load(args.dataset)
    train, hold = split(data, args.holdout_fraction, args.seed)
    ranks = compute_investor_ranks(train)
    X = feature_matrix(train, ranks)
    y = np.array([c.status.is_ba for c in train], dtype=float)
    cfg = TrainConfig(epochs=args.epochs, seed=args.seed, resample=not args.no_smote)
    model = train_mlp(X, y, cfg)
    yh = np.array([c.status.is_ba for c in hold], dtype=int)
    rep = metrics(classify(predict_proba(model, feature_matrix(hold, ranks))), yh)
    if args.out:
        model.save(args.out)
    _print({"metrics": rep.to_dict(), "n_train": len(train), "n_holdout": len(hold),
            "final_loss": model.loss_history[-1]})


def cmd_run(args):
    cfg = load_config(args.config, dataset=args.dataset) if args.config else PipelineConfig(dataset=args.dataset)
    report = run_to_dir(cfg, args.out)
    _print({"out": args.out, "partial": report.partial,
            "sectors": {str(k): (r.selection.chosen.value if r.ok else f"failed: {r.error}")
                        for k, r in sorted(report.sectors.items())}})


def cmd_curves(args):
    files = emit_curves(Report.load(args.report), args.out, args.format)
    _print({"out": args.out, "files": files})


def build_parser():
    import datetime as dt

    p = argparse.ArgumentParser(prog="neurosurv", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def study_end(sp):
        sp.add_argument("--study-end", type=dt.date.fromisoformat, default=DEFAULT_STUDY_END)

    sp = sub.add_parser("ingest", help="parse a company CSV into a dataset file")
    sp.add_argument("csv")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_ingest)

    sp = sub.add_parser("synth", help="generate a synthetic study from a TOML spec")
    sp.add_argument("--config", required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("pha", help="proportional-hazards diagnostic for one sector")
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--sector", type=int, required=True)
    sp.add_argument("--transform", default="km", choices=["km", "identity", "rank", "log"])
    sp.add_argument("--alpha", type=float, default=0.05)
    study_end(sp)
    sp.set_defaults(func=cmd_pha)

    sp = sub.add_parser("fit", help="Wald-screened AFT fit for one sector and family")
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--sector", type=int, required=True)
    sp.add_argument("--family", required=True)
    sp.add_argument("--level", type=float, default=0.10)
    sp.add_argument("--out")
    study_end(sp)
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("train-clf", help="train the BA classifier")
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--epochs", type=int, default=70)
    sp.add_argument("--holdout-fraction", type=float, default=1.0 / 3.0)
    sp.add_argument("--no-smote", action="store_true")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_train_clf)

    sp = sub.add_parser("run", help="full pipeline; writes report.json and manifest.json")
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--config")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("curves", help="emit curve CSV/SVG files from a report")
    sp.add_argument("--report", required=True)
    sp.add_argument("--format", choices=["csv", "svg"], default="csv")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_curves)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (NeurosurvError, OSError) as exc:
        print(f"neurosurv {args.command}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
