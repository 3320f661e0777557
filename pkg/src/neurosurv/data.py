"""Company records, CSV ingestion and the 14-feature construction."""

import csv
import datetime as dt
import enum
import json
import math
from collections import Counter
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DataError, DomainError, ParameterError, PreconditionError, SchemaError

__all__ = [
    "Status",
    "RoundRecord",
    "CompanyRecord",
    "Provenance",
    "Dataset",
    "RankTable",
    "SurvivalRecord",
    "CSV_COLUMNS",
    "FEATURE_NAMES",
    "DAYS_PER_YEAR",
    "DEFAULT_STUDY_END",
    "parse_dataset",
    "write_csv",
    "normalize_name",
    "compute_investor_ranks",
    "build_features",
    "feature_matrix",
    "build_survival_record",
    "survival_arrays",
    "filter_conditional",
    "split",
]

CSV_COLUMNS = (
    "company_id", "sector", "status", "foundation_date", "ipo_date",
    "inv1", "inv2", "inv3", "date1", "date2", "date3", "vix1", "vix2",
)

FEATURE_NAMES = tuple(
    f"{stat}_{r}" for r in (1, 2, 3) for stat in ("avg_rank", "max_rank", "min_rank", "n_investors")
) + ("vix_1", "vix_2")

DAYS_PER_YEAR = 365.25
DEFAULT_STUDY_END = dt.date(2018, 12, 31)
PAD = 0.0


class Status(str, enum.Enum):
    IPO = "IPO"
    BANKRUPT = "BANKRUPT"
    ACQUISITION = "ACQUISITION"
    PRIVATE = "PRIVATE"

    @property
    def is_ba(self):
        return self in (Status.BANKRUPT, Status.ACQUISITION)

    @classmethod
    def parse(cls, text):
        key = str(text).strip().upper()
        if key in ("LBO", "M&A", "MA", "ACQUIRED"):
            return cls.ACQUISITION
        if key == "BANKRUPTCY":
            return cls.BANKRUPT
        try:
            return cls(key)
        except ValueError:
            raise DataError(f"unknown status {text!r}") from None


@dataclass(frozen=True)
class RoundRecord:
    investor_names: tuple
    round_date: dt.date
    vix: float = None

    def __post_init__(self):
        names = tuple(n for n in (s.strip() for s in self.investor_names) if n)
        if not names:
            raise DataError("round without investors")
        object.__setattr__(self, "investor_names", names)
        if self.vix is not None and not (self.vix >= 0):
            raise DataError(f"negative VIX {self.vix}")


@dataclass(frozen=True)
class CompanyRecord:
    company_id: str
    sector: int
    status: Status
    foundation_date: dt.date
    ipo_date: dt.date = None
    rounds: tuple = ()

    def __post_init__(self):
        if (self.status is Status.IPO) != (self.ipo_date is not None):
            raise DataError(f"{self.company_id}: ipo_date must be present exactly when status is IPO")
        if self.ipo_date is not None and self.ipo_date < self.foundation_date:
            raise DataError(f"{self.company_id}: ipo_date precedes foundation_date")
        if not 1 <= len(self.rounds) <= 3:
            raise DataError(f"{self.company_id}: expected 1-3 rounds, got {len(self.rounds)}")
        for k, r in enumerate(self.rounds[:2]):
            if r.vix is None:
                raise DataError(f"{self.company_id}: round {k + 1} has no VIX value")
        if int(self.sector) < 1:
            raise DataError(f"{self.company_id}: sector must be a positive integer")


@dataclass
class Provenance:
    source: str = ""
    rows_read: int = 0
    dropped: Counter = field(default_factory=Counter)
    log: list = field(default_factory=list)

    def to_dict(self):
        return {"source": self.source, "rows_read": self.rows_read,
                "dropped": dict(sorted(self.dropped.items())), "log": list(self.log)}

    @classmethod
    def from_dict(cls, d):
        return cls(d.get("source", ""), int(d.get("rows_read", 0)), Counter(d.get("dropped", {})),
                   list(d.get("log", [])))

    def copy(self):
        return Provenance(self.source, self.rows_read, Counter(self.dropped), list(self.log))


@dataclass(frozen=True)
class Dataset:
    companies: tuple
    provenance: Provenance = field(default_factory=Provenance, compare=False)

    def __len__(self):
        return len(self.companies)

    def __iter__(self):
        return iter(self.companies)

    def __getitem__(self, i):
        return self.companies[i]

    @property
    def sectors(self):
        return sorted({c.sector for c in self.companies})

    def sector(self, s):
        prov = self.provenance.copy()
        prov.log.append(f"sector {s} subset")
        return Dataset(tuple(c for c in self.companies if c.sector == s), prov)

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump({"provenance": self.provenance.to_dict(),
                       "companies": [_company_to_row(c) for c in self.companies]}, fh)

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            d = json.load(fh)
        return cls(tuple(_row_to_company(r) for r in d["companies"]), Provenance.from_dict(d["provenance"]))

    @classmethod
    def load(cls, path):
        """Read either an ingested JSON dataset or a raw CSV file."""
        if str(path).endswith(".json"):
            return cls.from_json(path)
        return parse_dataset(path)


@dataclass(frozen=True)
class SurvivalRecord:
    duration: float
    event: bool

    def __post_init__(self):
        if not self.duration > 0:
            raise DataError(f"duration must be positive, got {self.duration}")


def _parse_date(text):
    return dt.date.fromisoformat(text.strip())


def _row_to_company(row):
    """Build a CompanyRecord from a CSV row dict; raises on missing fields."""
    def req(key):
        v = (row.get(key) or "").strip()
        if not v:
            raise DataError(f"missing {key}")
        return v

    def opt(key):
        v = (row.get(key) or "").strip()
        return v or None

    rounds = []
    for r in (1, 2, 3):
        inv = opt(f"inv{r}")
        if inv is None:
            if r == 1:
                raise DataError("missing inv1")
            # A later round cannot exist without this one.
            if any(opt(f"inv{q}") for q in range(r + 1, 4)):
                raise DataError(f"round {r} missing before later rounds")
            break
        date = _parse_date(req(f"date{r}"))
        vix = float(req(f"vix{r}")) if r <= 2 else None
        if vix is not None and not math.isfinite(vix):
            raise DataError(f"non-finite vix{r}")
        rounds.append(RoundRecord(tuple(inv.split(";")), date, vix))
    ipo = opt("ipo_date")
    return CompanyRecord(
        company_id=req("company_id"),
        sector=int(req("sector")),
        status=Status.parse(req("status")),
        foundation_date=_parse_date(req("foundation_date")),
        ipo_date=_parse_date(ipo) if ipo else None,
        rounds=tuple(rounds),
    )


def _company_to_row(c):
    row = {k: "" for k in CSV_COLUMNS}
    row.update(company_id=c.company_id, sector=str(c.sector), status=c.status.value,
               foundation_date=c.foundation_date.isoformat(),
               ipo_date=c.ipo_date.isoformat() if c.ipo_date else "")
    for r, rnd in enumerate(c.rounds, start=1):
        row[f"inv{r}"] = ";".join(rnd.investor_names)
        row[f"date{r}"] = rnd.round_date.isoformat()
        if r <= 2:
            row[f"vix{r}"] = repr(float(rnd.vix))
    return row


def parse_dataset(csv_path):
    """Read a company CSV, dropping rows with missing or unparseable fields.

    Raises
    ------
    OSError
        If the file cannot be read.
    SchemaError
        If required header columns are missing; ``columns`` names them.
    """
    prov = Provenance(source=str(csv_path))
    companies = []
    with open(csv_path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = [h.strip() for h in (reader.fieldnames or [])]
        missing = [c for c in CSV_COLUMNS if c not in header]
        if missing:
            raise SchemaError(f"CSV header lacks required column(s): {', '.join(missing)}", missing)
        for lineno, row in enumerate(reader, start=2):
            prov.rows_read += 1
            row = {(k or "").strip(): v for k, v in row.items()}
            try:
                companies.append(_row_to_company(row))
            except (DataError, ValueError) as exc:
                reason = str(exc).split(":")[-1].strip() or type(exc).__name__
                prov.dropped[reason] += 1
                prov.log.append(f"line {lineno}: dropped ({exc})")
    return Dataset(tuple(companies), prov)


def write_csv(dataset, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for c in dataset:
            writer.writerow(_company_to_row(c))


def normalize_name(name):
    return name.strip().casefold()


@dataclass(frozen=True)
class RankTable:
    """Investor name -> number of rounds the investor took part in."""

    ranks: dict

    def __getitem__(self, name):
        return self.ranks[normalize_name(name)]

    def rank(self, name):
        """Rank of ``name``; 0 for investors never seen."""
        return self.ranks.get(normalize_name(name), 0)

    def __len__(self):
        return len(self.ranks)

    def total(self):
        return sum(self.ranks.values())


def compute_investor_ranks(training):
    if len(training) == 0:
        raise PreconditionError("cannot rank investors on an empty dataset")
    counts = Counter()
    for c in training:
        for rnd in c.rounds:
            for name in rnd.investor_names:
                counts[normalize_name(name)] += 1
    return RankTable(dict(sorted(counts.items())))


def build_features(company, ranks):
    """The 14 covariates: per-round avg/max/min rank and investor count, then VIX 1-2.

    Absent rounds are padded with 0 (below any observed rank).
    """
    if not company.rounds:
        raise PreconditionError(f"{company.company_id}: no investment rounds")
    out = np.full(14, PAD)
    for r, rnd in enumerate(company.rounds[:3]):
        vals = np.array([ranks.rank(n) for n in rnd.investor_names], dtype=float)
        out[4 * r:4 * r + 4] = vals.mean(), vals.max(), vals.min(), vals.size
    out[12] = company.rounds[0].vix
    if len(company.rounds) > 1:
        out[13] = company.rounds[1].vix
    return out


def feature_matrix(data, ranks):
    if len(data) == 0:
        return np.zeros((0, 14))
    return np.vstack([build_features(c, ranks) for c in data])


def _years(d0, d1):
    return (d1 - d0).days / DAYS_PER_YEAR


def build_survival_record(company, study_end=DEFAULT_STUDY_END):
    """Time from foundation to IPO, or to ``study_end`` (censored) for private companies."""
    if company.status.is_ba:
        raise DomainError(f"{company.company_id}: {company.status.value} companies have no IPO time; "
                          "apply filter_conditional first")
    if company.status is Status.IPO:
        duration = _years(company.foundation_date, company.ipo_date)
        event = True
    else:
        duration = _years(company.foundation_date, study_end)
        event = False
    if not duration > 0:
        raise DataError(f"{company.company_id}: non-positive duration {duration:.4f}")
    return SurvivalRecord(duration, event)


def survival_arrays(data, study_end=DEFAULT_STUDY_END):
    recs = [build_survival_record(c, study_end) for c in data]
    t = np.array([r.duration for r in recs], dtype=float)
    e = np.array([r.event for r in recs], dtype=bool)
    return t, e


def filter_conditional(data):
    """Keep only IPO and Private companies."""
    kept = tuple(c for c in data if not c.status.is_ba)
    prov = data.provenance.copy()
    excluded = Counter(c.status.value for c in data if c.status.is_ba)
    for status, n in sorted(excluded.items()):
        prov.dropped[f"conditional: {status}"] += n
    prov.log.append(f"filter_conditional: kept {len(kept)}, excluded {len(data) - len(kept)}")
    return Dataset(kept, prov)


def split(data, holdout_fraction, seed):
    """Random partition into (train, holdout); each part keeps the input order."""
    if not 0 < holdout_fraction < 1:
        raise ParameterError(f"holdout_fraction must lie in (0, 1), got {holdout_fraction}")
    n = len(data)
    if n < 2:
        raise PreconditionError("need at least 2 companies to split")
    n_hold = int(math.floor(holdout_fraction * n + 0.5))
    n_hold = min(max(n_hold, 1), n - 1)
    perm = np.random.default_rng(seed).permutation(n)
    hold_idx = np.sort(perm[:n_hold])
    mask = np.zeros(n, dtype=bool)
    mask[hold_idx] = True
    prov_t, prov_h = data.provenance.copy(), data.provenance.copy()
    prov_t.log.append(f"split(seed={seed}, fraction={holdout_fraction}): train part")
    prov_h.log.append(f"split(seed={seed}, fraction={holdout_fraction}): holdout part")
    train = Dataset(tuple(c for c, m in zip(data, mask) if not m), prov_t)
    hold = Dataset(tuple(c for c, m in zip(data, mask) if m), prov_h)
    return train, hold


def with_provenance(data, **changes):
    return replace(data, provenance=replace(data.provenance.copy(), **changes))
