"""Tabular ingestion (Adult-style CSV) and deterministic train/validation splits."""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd
import yaml

from .errors import ValidationError
from .mixture import Dataset
from .rng import substream

log = logging.getLogger(__name__)

KINDS = ("numeric", "categorical", "ignore")


# --- splitting ---------------------------------------------------------------

def _round_half_up(fraction: float, n: int) -> int:
    return math.floor(Fraction(repr(float(fraction))) * n + Fraction(1, 2))


def split_indices(dataset: Dataset, val_fraction: float, seed: int,
                  stratify_by_subgroup: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Sorted train and validation row indices.

    Stratified: each subpopulation contributes ``round(val_fraction * size)``
    validation rows (halves round up); subpopulations with fewer than two
    rows stay entirely in train.
    """
    if not 0.0 < val_fraction < 1.0:
        raise ValidationError("val_fraction must lie strictly between 0 and 1")
    n = len(dataset)
    if not stratify_by_subgroup:
        perm = substream(seed, "split").permutation(n)
        n_val = _round_half_up(val_fraction, n)
        return np.sort(perm[n_val:]), np.sort(perm[:n_val])

    val_parts, singletons = [], []
    ids = dataset.subpop_ids
    for g in np.unique(ids).tolist():
        members = np.flatnonzero(ids == g)
        if members.size < 2:
            singletons.append(g)
            continue
        perm = substream(seed, "split", g).permutation(members.size)
        val_parts.append(members[perm[:_round_half_up(val_fraction, members.size)]])
    if singletons:
        warnings.warn(f"{len(singletons)} single-row subpopulation(s) kept entirely in train: "
                      f"{singletons}", stacklevel=2)
    val = np.sort(np.concatenate(val_parts)) if val_parts else np.zeros(0, dtype=np.int64)
    train = np.setdiff1d(np.arange(n), val)
    return train, val


def split(dataset: Dataset, val_fraction: float = 0.2, seed: int = 0,
          stratify_by_subgroup: bool = True) -> tuple[Dataset, Dataset]:
    tr, va = split_indices(dataset, val_fraction, seed, stratify_by_subgroup)
    return dataset.take(tr), dataset.take(va)


# --- tabular -----------------------------------------------------------------

@dataclass(frozen=True)
class AnnotationDef:
    """Binary annotation: 1 when the value in ``column`` is one of ``values``."""

    name: str
    column: str
    values: tuple[str, ...]

    def evaluate(self, frame: pd.DataFrame) -> np.ndarray:
        return frame[self.column].astype(str).isin(self.values).to_numpy().astype(np.uint8)


@dataclass(frozen=True)
class TabularSchema:
    columns: dict[str, str]
    target: str
    positive_labels: tuple[str, ...]
    annotations: tuple[AnnotationDef, ...] = ()
    subgroup_features: tuple[str, ...] = ()
    missing_values: tuple[str, ...] = ("?",)

    def __post_init__(self):
        bad = {c: k for c, k in self.columns.items() if k not in KINDS}
        if bad:
            raise ValidationError(f"unknown column kinds: {bad}")
        if self.target in self.columns:
            raise ValidationError("the target column must not also be a feature column")
        names = [a.name for a in self.annotations]
        if len(set(names)) != len(names):
            raise ValidationError("duplicate annotation names")
        missing = [s for s in self.subgroup_features if s not in names]
        if missing:
            raise ValidationError(f"subgroup_features not defined as annotations: {missing}")

    @property
    def annotation_names(self) -> tuple[str, ...]:
        return tuple(a.name for a in self.annotations)

    @property
    def required_columns(self) -> list[str]:
        cols = [c for c, k in self.columns.items() if k != "ignore"]
        cols += [a.column for a in self.annotations if a.column not in cols]
        return cols + [self.target]

    @classmethod
    def from_dict(cls, d: dict) -> "TabularSchema":
        anns = []
        for a in d.get("annotations", []):
            if "equals" in a:
                values = (str(a["equals"]),)
            elif "in" in a:
                values = tuple(str(v) for v in a["in"])
            else:
                raise ValidationError(f"annotation {a.get('name')!r} needs 'equals' or 'in'")
            anns.append(AnnotationDef(str(a["name"]), str(a["column"]), values))
        for block in d.get("one_hot_annotations", []):
            col = str(block["column"])
            prefix = block.get("prefix", col)
            for v in block["values"]:
                anns.append(AnnotationDef(f"{prefix}={v}", col, (str(v),)))
        tgt = d["target"]
        pos = tgt.get("positive") if isinstance(tgt, dict) else None
        if pos is None:
            raise ValidationError("target needs a 'positive' value list")
        selected = d.get("subgroup_features", "all")
        names = [a.name for a in anns]
        if selected == "all":
            selected = names
        else:
            # a bare column name selects every annotation derived from it
            expanded = []
            for s in selected:
                derived = [a.name for a in anns if a.column == s and a.name != s]
                expanded.extend(derived if s not in names and derived else [s])
            selected = expanded
        return cls(
            columns={str(k): str(v) for k, v in d["columns"].items()},
            target=str(tgt["column"]),
            positive_labels=tuple(str(v) for v in (pos if isinstance(pos, list) else [pos])),
            annotations=tuple(anns),
            subgroup_features=tuple(selected),
            missing_values=tuple(str(v) for v in d.get("missing_values", ["?"])),
        )

    @classmethod
    def from_yaml(cls, path: str | Path) -> "TabularSchema":
        with open(path) as fh:
            return cls.from_dict(yaml.safe_load(fh))


@dataclass
class TabularEncoder:
    """Standardises numeric columns and one-hot encodes categoricals.

    Statistics and category lists come from the rows passed to :meth:`fit`.
    Categories unseen at fit time encode as an all-zero block.
    """

    schema: TabularSchema
    means: dict[str, float] = field(default_factory=dict)
    stds: dict[str, float] = field(default_factory=dict)
    categories: dict[str, list[str]] = field(default_factory=dict)

    def fit(self, frame: pd.DataFrame) -> "TabularEncoder":
        for col, kind in self.schema.columns.items():
            if kind == "numeric":
                x = frame[col].to_numpy(dtype=np.float64)
                self.means[col] = float(x.mean())
                sd = float(x.std())
                self.stds[col] = sd if sd > 0 else 1.0
            elif kind == "categorical":
                self.categories[col] = sorted(frame[col].astype(str).unique().tolist())
        return self

    @property
    def feature_names(self) -> list[str]:
        names = []
        for col, kind in self.schema.columns.items():
            if kind == "numeric":
                names.append(col)
            elif kind == "categorical":
                names.extend(f"{col}={v}" for v in self.categories[col])
        return names

    def transform(self, frame: pd.DataFrame) -> np.ndarray:
        blocks = []
        for col, kind in self.schema.columns.items():
            if kind == "numeric":
                x = frame[col].to_numpy(dtype=np.float64)
                blocks.append(((x - self.means[col]) / self.stds[col])[:, None])
            elif kind == "categorical":
                cats = self.categories[col]
                codes = pd.Categorical(frame[col].astype(str), categories=cats).codes
                block = np.zeros((len(frame), len(cats)))
                seen = codes >= 0
                block[np.flatnonzero(seen), codes[seen]] = 1.0
                blocks.append(block)
        return np.hstack(blocks) if blocks else np.zeros((len(frame), 0))

    def decode_categorical(self, features: np.ndarray, column: str) -> list[str | None]:
        """Invert the one-hot block of ``column``; rows with no active slot give ``None``."""
        names = self.feature_names
        start = names.index(f"{column}={self.categories[column][0]}")
        block = np.asarray(features)[:, start:start + len(self.categories[column])]
        out = []
        for row in block:
            hot = np.flatnonzero(row == 1)
            out.append(self.categories[column][hot[0]] if hot.size == 1 else None)
        return out


def read_frame(path: str | Path, schema: TabularSchema) -> tuple[pd.DataFrame, int]:
    """Parse ``path`` as text columns; drop rows with missing values.

    Returns the cleaned frame (original row numbers kept as the index) and
    the number of dropped rows.
    """
    frame = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    absent = [c for c in schema.required_columns if c not in frame.columns]
    if absent:
        raise ValidationError(f"{path}: missing columns {absent}")
    frame = frame[schema.required_columns]
    frame = frame.apply(lambda s: s.str.strip())
    missing = frame.isin(schema.missing_values) | frame.eq("")
    dropped = int(missing.any(axis=1).sum())
    frame = frame[~missing.any(axis=1)]
    for col, kind in schema.columns.items():
        if kind == "numeric":
            parsed = pd.to_numeric(frame[col], errors="coerce")
            if parsed.isna().any():
                row = int(parsed[parsed.isna()].index[0])
                raise ValidationError(
                    f"{path}: data row {row}: column {col!r} value {frame[col][row]!r} is not numeric")
            frame[col] = parsed.astype(np.float64)
    target = frame[schema.target].str.rstrip(".")
    positives = {p.rstrip(".") for p in schema.positive_labels}
    frame = frame.assign(**{schema.target: target.isin(positives).astype(np.int64)})
    if dropped:
        log.info("%s: dropped %d row(s) with missing values", path, dropped)
    return frame, dropped


def _annotate(frame: pd.DataFrame, schema: TabularSchema) -> tuple[np.ndarray, np.ndarray]:
    """Annotation matrix plus a dense subpopulation id (rank of the selected pattern)."""
    if schema.annotations:
        A = np.column_stack([a.evaluate(frame) for a in schema.annotations])
    else:
        A = np.zeros((len(frame), 0), dtype=np.uint8)
    if schema.subgroup_features and len(frame):
        cols = [schema.annotation_names.index(s) for s in schema.subgroup_features]
        _, ids = np.unique(A[:, cols], axis=0, return_inverse=True)
        ids = ids.reshape(-1)
    else:
        ids = np.zeros(len(frame), dtype=np.int64)
    return A, ids


@dataclass(frozen=True, eq=False)
class TabularLoad:
    dataset: Dataset
    encoder: TabularEncoder
    dropped_rows: int


def read_tabular(path: str | Path, schema: TabularSchema,
                 encoder: TabularEncoder | None = None) -> TabularLoad:
    frame, dropped = read_frame(path, schema)
    if encoder is None:
        encoder = TabularEncoder(schema).fit(frame)
    A, ids = _annotate(frame, schema)
    ds = Dataset(encoder.transform(frame), frame[schema.target].to_numpy(), ids, A,
                 schema.annotation_names)
    return TabularLoad(ds, encoder, dropped)


def load_tabular(path: str | Path, schema: TabularSchema,
                 encoder: TabularEncoder | None = None) -> Dataset:
    """Encode a CSV file; without ``encoder`` the statistics come from this file."""
    return read_tabular(path, schema, encoder).dataset


def load_tabular_split(path: str | Path, schema: TabularSchema, val_fraction: float = 0.2,
                       seed: int = 0) -> tuple[Dataset, Dataset, TabularEncoder, int]:
    """Split first, then fit the encoder on the training rows only.

    Returns ``(train, val, encoder, dropped_rows)``. Stratification uses the
    subpopulation id derived from ``schema.subgroup_features``.
    """
    frame, dropped = read_frame(path, schema)
    A, ids = _annotate(frame, schema)
    shell = Dataset(np.zeros((len(frame), 0)), frame[schema.target].to_numpy(), ids, A,
                    schema.annotation_names)
    tr, va = split_indices(shell, val_fraction, seed, stratify_by_subgroup=True)
    encoder = TabularEncoder(schema).fit(frame.iloc[tr])
    X = encoder.transform(frame)
    full = Dataset(X, shell.labels, ids, A, schema.annotation_names)
    return full.take(tr), full.take(va), encoder, dropped
