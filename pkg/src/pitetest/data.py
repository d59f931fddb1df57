"""Trial data representation, CSV ingestion, arm splitting and label permutation."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Literal, Mapping, Sequence

import numpy as np

from .errors import (
    ConfigError,
    DataError,
    DegenerateArm,
    EmptyCovariates,
    MissingValue,
    NonBinaryCovariate,
    NonBinaryTreatment,
)

CONTINUOUS = "continuous"
BINARY = "binary"
_MISSING_TOKENS = {"", "na", "nan", "null", "none", "."}


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


def _is_binary(col):
    return bool(np.all((col == 0.0) | (col == 1.0)))


@dataclass(frozen=True, eq=False)
class Dataset:
    """Randomized-trial data: outcome, 0/1 treatment and an n x p covariate matrix.

    Arrays are stored read-only, so a Dataset can be shared freely between
    threads. ``covariate_kinds`` is inferred from the values when omitted.
    """

    outcome: np.ndarray
    treatment: np.ndarray
    covariates: np.ndarray
    covariate_names: tuple = None
    covariate_kinds: tuple = None

    def __post_init__(self):
        y = self.outcome if _readonly(self.outcome, np.float64) else _frozen(self.outcome, np.float64)
        t = self.treatment if _readonly(self.treatment, np.int8) else _frozen(self.treatment, np.int8)
        x = self.covariates if _readonly(self.covariates, np.float64) else _frozen(self.covariates, np.float64)
        if x.ndim == 1:
            x = _frozen(x.reshape(-1, 1), np.float64)
        if y.ndim != 1 or t.ndim != 1 or x.ndim != 2:
            raise DataError("outcome and treatment must be vectors, covariates a matrix")
        n = y.shape[0]
        if t.shape[0] != n or x.shape[0] != n:
            raise DataError(
                f"row counts differ: outcome {n}, treatment {t.shape[0]}, covariates {x.shape[0]}"
            )
        p = x.shape[1]
        if p == 0:
            raise EmptyCovariates()
        if not np.all(np.isfinite(y)):
            raise MissingValue(int(np.flatnonzero(~np.isfinite(y))[0]), "outcome")
        bad = ~np.isfinite(x)
        if bad.any():
            r, c = np.argwhere(bad)[0]
            raise MissingValue(int(r), int(c))
        nonbin = (t != 0) & (t != 1)
        if nonbin.any():
            r = int(np.flatnonzero(nonbin)[0])
            raise NonBinaryTreatment(r, int(t[r]))
        n_t = int(t.sum())
        if n_t < 2:
            raise DegenerateArm("treatment", n_t)
        if n - n_t < 2:
            raise DegenerateArm("control", n - n_t)

        names = self.covariate_names
        names = tuple(f"x{j + 1}" for j in range(p)) if names is None else tuple(names)
        if len(names) != p:
            raise DataError(f"{len(names)} covariate names for {p} columns")
        kinds = self.covariate_kinds
        if kinds is None:
            kinds = tuple(BINARY if _is_binary(x[:, j]) else CONTINUOUS for j in range(p))
        else:
            kinds = tuple(kinds)
            if len(kinds) != p:
                raise DataError(f"{len(kinds)} covariate kinds for {p} columns")
            for j, k in enumerate(kinds):
                if k not in (BINARY, CONTINUOUS):
                    raise DataError(f"unknown covariate kind {k!r}")
                if k == BINARY and not _is_binary(x[:, j]):
                    raise NonBinaryCovariate(names[j])

        object.__setattr__(self, "outcome", y)
        object.__setattr__(self, "treatment", t)
        object.__setattr__(self, "covariates", x)
        object.__setattr__(self, "covariate_names", names)
        object.__setattr__(self, "covariate_kinds", kinds)

    @property
    def n(self):
        return self.outcome.shape[0]

    @property
    def p(self):
        return self.covariates.shape[1]

    @property
    def n_treated(self):
        return int(self.treatment.sum())

    @property
    def n_control(self):
        return self.n - self.n_treated

    def with_treatment(self, treatment):
        """Copy sharing outcome and covariates, with a new treatment vector."""
        return replace(self, treatment=treatment)


def _readonly(a, dtype):
    return isinstance(a, np.ndarray) and a.dtype == dtype and not a.flags.writeable


@dataclass(frozen=True)
class ArmView:
    indices: np.ndarray
    arm: Literal["treatment", "control"]

    def __len__(self):
        return len(self.indices)


@dataclass
class Schema:
    """Column roles for ingestion.

    ``covariates=None`` selects every column other than outcome and treatment,
    in file order. ``kinds`` overrides value-based kind inference per column.
    """

    outcome: str
    treatment: str
    covariates: Sequence[str] | None = None
    kinds: Mapping[str, str] = field(default_factory=dict)


def _parse_real(value, row, col):
    if isinstance(value, str):
        if value.strip().lower() in _MISSING_TOKENS:
            raise MissingValue(row, col)
        try:
            v = float(value)
        except ValueError:
            raise DataError(f"row {row}, column {col!r}: cannot parse {value!r} as a number") from None
    elif value is None:
        raise MissingValue(row, col)
    else:
        v = float(value)
    if not math.isfinite(v):
        raise MissingValue(row, col)
    return v


def _parse_treatment(value, row, col):
    v = _parse_real(value, row, col)
    if v not in (0.0, 1.0):
        raise NonBinaryTreatment(row, value)
    return int(v)


def validate(raw: Mapping[str, Sequence], schema: Schema) -> Dataset:
    """Build a Dataset from named columns of raw (string or numeric) values.

    Row numbers in errors are 0-based data rows.
    """
    if not schema.outcome or not schema.treatment:
        raise ConfigError("schema must name an outcome and a treatment column")
    for col in (schema.outcome, schema.treatment):
        if col not in raw:
            raise ConfigError(f"column {col!r} not found")
    covs = schema.covariates
    if covs is None:
        covs = [c for c in raw if c not in (schema.outcome, schema.treatment)]
    covs = list(covs)
    if not covs:
        raise EmptyCovariates()
    for c in covs:
        if c not in raw:
            raise ConfigError(f"covariate column {c!r} not found")
        if c in (schema.outcome, schema.treatment):
            raise ConfigError(f"column {c!r} cannot be both a covariate and outcome/treatment")
    unknown = set(schema.kinds) - set(covs)
    if unknown:
        raise ConfigError(f"kind override for non-covariate columns {sorted(unknown)}")

    n = len(raw[schema.outcome])
    for c in [schema.treatment, *covs]:
        if len(raw[c]) != n:
            raise DataError(f"column {c!r} has {len(raw[c])} rows, expected {n}")

    y = np.empty(n)
    t = np.empty(n, dtype=np.int8)
    x = np.empty((n, len(covs)))
    for i in range(n):
        y[i] = _parse_real(raw[schema.outcome][i], i, schema.outcome)
        t[i] = _parse_treatment(raw[schema.treatment][i], i, schema.treatment)
        for j, c in enumerate(covs):
            x[i, j] = _parse_real(raw[c][i], i, c)

    kinds = None
    if schema.kinds:
        kinds = [
            schema.kinds.get(c, BINARY if _is_binary(x[:, j]) else CONTINUOUS)
            for j, c in enumerate(covs)
        ]
    return Dataset(y, t, x, tuple(covs), None if kinds is None else tuple(kinds))


def read_csv(path, schema: Schema) -> Dataset:
    """Read a header-first UTF-8 CSV and validate it against ``schema``."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if len(set(header)) != len(header):
            raise DataError(f"{path}: duplicate column names in header")
        cols = {h: [] for h in header}
        for lineno, row in enumerate(reader):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"{path}: data row {lineno} has {len(row)} fields, expected {len(header)}")
            for h, v in zip(header, row):
                cols[h].append(v)
    return validate(cols, schema)


def write_csv(d: Dataset, path, outcome="y", treatment="treatment"):
    """Write ``d`` as CSV; reals use shortest round-trip formatting so reading back is lossless."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([outcome, treatment, *d.covariate_names])
        binary = [k == BINARY for k in d.covariate_kinds]
        for i in range(d.n):
            row = [repr(float(d.outcome[i])), str(int(d.treatment[i]))]
            for j in range(d.p):
                v = d.covariates[i, j]
                row.append(str(int(v)) if binary[j] else repr(float(v)))
            w.writerow(row)
    return path


def split_arms(d: Dataset) -> tuple[ArmView, ArmView]:
    treated = np.flatnonzero(d.treatment == 1)
    control = np.flatnonzero(d.treatment == 0)
    return ArmView(treated, "treatment"), ArmView(control, "control")


def permute_treatment(d: Dataset, rng: np.random.Generator) -> Dataset:
    """Shuffle the treatment labels; arm sizes are preserved and ``d`` is untouched."""
    return d.with_treatment(rng.permutation(d.treatment))
