"""Subpopulations from binary annotations (cartesian product over a selection)."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ValidationError
from .mixture import Dataset, Sample


@dataclass(frozen=True)
class AnnotationSchema:
    feature_names: tuple[str, ...]
    selected: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        object.__setattr__(self, "selected", tuple(self.selected))
        if len(set(self.feature_names)) != len(self.feature_names):
            raise ValidationError("duplicate annotation feature names")
        if not self.selected:
            raise ValidationError("select at least one annotation feature")
        if len(set(self.selected)) != len(self.selected):
            raise ValidationError("duplicate selected features")
        missing = [s for s in self.selected if s not in self.feature_names]
        if missing:
            raise ValidationError(f"selected features not in schema: {missing}")

    @property
    def m(self) -> int:
        return len(self.selected)

    @property
    def selected_columns(self) -> np.ndarray:
        return np.array([self.feature_names.index(s) for s in self.selected], dtype=np.int64)

    def project(self, annotations: np.ndarray) -> np.ndarray:
        A = np.asarray(annotations)
        if A.shape[-1] != len(self.feature_names):
            raise ValidationError(
                f"annotation length {A.shape[-1]} != schema width {len(self.feature_names)}")
        return A[..., self.selected_columns]


@dataclass(frozen=True, eq=False)
class Subgroup:
    id: int
    pattern: tuple[int, ...]
    member_indices: np.ndarray
    val_indices: np.ndarray

    @property
    def size(self) -> int:
        return int(self.member_indices.size)

    @property
    def val_size(self) -> int:
        return int(self.val_indices.size)

    @property
    def pattern_str(self) -> str:
        return "".join(str(v) for v in self.pattern)


def derive_subgroups(
    dataset: Dataset,
    schema: AnnotationSchema,
    min_train_size: int = 0,
    min_val_size: int = 0,
    val_dataset: Dataset | None = None,
) -> list[Subgroup]:
    """Partition ``dataset`` by the projection of its annotations onto ``schema.selected``.

    Ids are the lexicographic rank of each pattern among all patterns
    realised in train or validation data, so they do not move when the size
    thresholds change. Both thresholds are inclusive.
    """
    P_train = schema.project(dataset.annotations)
    if val_dataset is not None:
        P_val = schema.project(val_dataset.annotations)
    else:
        P_val = np.zeros((0, schema.m), dtype=P_train.dtype)
    patterns, inverse = np.unique(np.vstack([P_train, P_val]), axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    n = len(dataset)
    train_ids, val_ids = inverse[:n], inverse[n:]

    out = []
    for gid, pattern in enumerate(patterns):
        members = np.flatnonzero(train_ids == gid)
        val_members = np.flatnonzero(val_ids == gid)
        if members.size < min_train_size or val_members.size < min_val_size:
            continue
        members.setflags(write=False)
        val_members.setflags(write=False)
        out.append(Subgroup(gid, tuple(int(v) for v in pattern), members, val_members))
    return out


def filter_membership(subgroup: Subgroup, sample: Sample, schema: AnnotationSchema) -> int:
    return int(tuple(int(v) for v in schema.project(sample.annotations)) == subgroup.pattern)


def membership_mask(subgroup: Subgroup, dataset: Dataset, schema: AnnotationSchema) -> np.ndarray:
    """Vectorised filter function over a whole dataset."""
    P = schema.project(dataset.annotations)
    return (P == np.asarray(subgroup.pattern)).all(axis=1)


def component_schema(k: int) -> AnnotationSchema:
    # Columns run from the highest component id down, so the lexicographic
    # rank of a one-hot pattern equals its component id whenever every
    # component is realised.
    names = tuple(f"subpop_{j}" for j in reversed(range(k)))
    return AnnotationSchema(names, names)


def with_component_annotations(dataset: Dataset, k: int) -> Dataset:
    """One-hot encode ``subpop_id`` as annotations matching :func:`component_schema`."""
    ids = dataset.subpop_ids
    if ids.size and ids.max() >= k:
        raise ValidationError(f"subpop id {ids.max()} outside 0..{k - 1}")
    A = np.zeros((len(dataset), k), dtype=np.uint8)
    A[np.arange(len(dataset)), k - 1 - ids] = 1
    return dataset.with_annotations(A, component_schema(k).feature_names)


def write_subgroup_table(subgroups: Sequence[Subgroup], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["subgroup_id", "pattern", "train_size", "val_size"])
        for g in subgroups:
            w.writerow([g.id, g.pattern_str, g.size, g.val_size])
