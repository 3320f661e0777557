"""Run configuration, loaded from TOML.

Example::

    dataset = "data/companies.csv"
    study_end = 2018-12-31
    families = ["exponential", "weibull", "lognormal", "generalized_f"]
    sectors = [1, 2, 3]          # empty or absent: every sector in the data

    [split]
    holdout_fraction = 0.1
    seed = 0

    [selection]
    slack = 0.02
    wald_level = 0.10
    km_level = 0.95

    [pha]
    transform = "km"
    alpha = 0.05

    [classifier]
    holdout_fraction = 0.3333333333333333
    split_seed = 1
    epochs = 70
    seed = 0

    [output]
    dir = "out"
"""

import datetime as dt
from dataclasses import asdict, dataclass, field, fields

import tomli

from .classifier import TrainConfig
from .data import DEFAULT_STUDY_END
from .distributions import FAMILY_ORDER, Family
from .errors import ParameterError
from .synthgen import SectorSpec

__all__ = ["PipelineConfig", "load_config", "load_synth_config"]


def _date(v):
    if isinstance(v, dt.datetime):
        return v.date()
    if isinstance(v, dt.date):
        return v
    return dt.date.fromisoformat(str(v))


@dataclass(frozen=True)
class PipelineConfig:
    dataset: str = ""
    study_end: dt.date = DEFAULT_STUDY_END
    families: tuple = FAMILY_ORDER
    sectors: tuple = ()
    holdout_fraction: float = 0.1
    split_seed: int = 0
    selection_slack: float = 0.02
    wald_level: float = 0.10
    km_level: float = 0.95
    pha_transform: str = "km"
    pha_alpha: float = 0.05
    clf_holdout_fraction: float = 1.0 / 3.0
    clf_split_seed: int = 1
    train: TrainConfig = field(default_factory=TrainConfig)
    out_dir: str = "out"

    def __post_init__(self):
        object.__setattr__(self, "study_end", _date(self.study_end))
        fams = tuple(Family.parse(f) for f in self.families)
        if not fams:
            raise ParameterError("families must not be empty")
        object.__setattr__(self, "families", fams)
        object.__setattr__(self, "sectors", tuple(int(s) for s in self.sectors))
        for name in ("holdout_fraction", "clf_holdout_fraction", "wald_level", "km_level", "pha_alpha"):
            v = getattr(self, name)
            if not 0 < v < 1:
                raise ParameterError(f"{name} must lie in (0, 1), got {v}")
        if self.selection_slack < 0:
            raise ParameterError("selection_slack must be >= 0")

    def to_dict(self):
        d = asdict(self)
        d["study_end"] = self.study_end.isoformat()
        d["families"] = [f.value for f in self.families]
        d["sectors"] = list(self.sectors)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if isinstance(d.get("train"), dict):
            d["train"] = TrainConfig(**d["train"])
        return cls(**d)


_SECTION_KEYS = {
    "split": {"holdout_fraction": "holdout_fraction", "seed": "split_seed"},
    "selection": {"slack": "selection_slack", "wald_level": "wald_level", "km_level": "km_level"},
    "pha": {"transform": "pha_transform", "alpha": "pha_alpha"},
    "output": {"dir": "out_dir"},
}


def load_config(path, **overrides):
    """Read a :class:`PipelineConfig`; keyword ``overrides`` win over the file."""
    with open(path, "rb") as fh:
        raw = tomli.load(fh)
    kw = {}
    for key in ("dataset", "study_end", "families", "sectors"):
        if key in raw:
            kw[key] = raw[key]
    for section, mapping in _SECTION_KEYS.items():
        for src, dst in mapping.items():
            if src in raw.get(section, {}):
                kw[dst] = raw[section][src]
    clf = dict(raw.get("classifier", {}))
    if "holdout_fraction" in clf:
        kw["clf_holdout_fraction"] = clf.pop("holdout_fraction")
    if "split_seed" in clf:
        kw["clf_split_seed"] = clf.pop("split_seed")
    known = {f.name for f in fields(TrainConfig)}
    unknown = set(clf) - known
    if unknown:
        raise ParameterError(f"unknown classifier option(s): {sorted(unknown)}")
    kw["train"] = TrainConfig(**clf)
    kw.update({k: v for k, v in overrides.items() if v is not None})
    return PipelineConfig(**kw)


def load_synth_config(path):
    """Sector specs from ``[[sector]]`` tables; ``[defaults]`` fills unset fields."""
    with open(path, "rb") as fh:
        raw = tomli.load(fh)
    defaults = raw.get("defaults", {})
    tables = raw.get("sector", [])
    if not tables:
        raise ParameterError("synth config needs at least one [[sector]] table")
    specs = []
    for i, tab in enumerate(tables, start=1):
        d = {**defaults, **tab}
        d.setdefault("sector", i)
        for k in ("foundation_start", "foundation_end", "study_end"):
            if k in d:
                d[k] = _date(d[k])
        specs.append(SectorSpec.from_dict(d))
    return specs, bool(raw.get("shared_pool", True))
