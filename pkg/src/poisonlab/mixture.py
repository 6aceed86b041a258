"""Noisy k-subpopulation mixtures: specification, sampling and CSV round-trip."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .errors import ValidationError
from .rng import substream

WEIGHT_TOL = 1e-9


def exact_floor(x: float, n: int = 1) -> int:
    """``floor(x * n)`` using the shortest decimal that round-trips ``x``.

    Avoids ``0.29 * 100 -> 28`` style surprises from binary representation.
    """
    return math.floor(Fraction(repr(float(x))) * n)


@dataclass(frozen=True)
class ComponentSpec:
    id: int
    mean: tuple[float, ...]
    stddev: tuple[float, ...]
    class_label_prob: float

    def __post_init__(self):
        object.__setattr__(self, "mean", tuple(float(m) for m in self.mean))
        object.__setattr__(self, "stddev", tuple(float(s) for s in self.stddev))
        if len(self.mean) != len(self.stddev):
            raise ValidationError(f"component {self.id}: mean and stddev differ in length")
        if not all(s > 0 for s in self.stddev):
            raise ValidationError(f"component {self.id}: stddev must be strictly positive")
        if not 0.0 <= self.class_label_prob <= 1.0:
            raise ValidationError(f"component {self.id}: label probability outside [0, 1]")


@dataclass(frozen=True)
class MixtureSpec:
    """Mixture of axis-aligned Gaussian subpopulations with Bernoulli labels.

    ``weights[i]`` is the probability of drawing component ``i``; the label
    probability of component ``i`` lives on the component itself.
    """

    components: tuple[ComponentSpec, ...]
    weights: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        if not self.components:
            raise ValidationError("mixture needs at least one component")
        if len(self.weights) != len(self.components):
            raise ValidationError("one weight per component required")
        if any(w <= 0 for w in self.weights):
            raise ValidationError("mixture weights must be strictly positive")
        if abs(math.fsum(self.weights) - 1.0) > WEIGHT_TOL:
            raise ValidationError(f"mixture weights sum to {math.fsum(self.weights)!r}, not 1")
        ids = [c.id for c in self.components]
        if ids != list(range(len(ids))):
            raise ValidationError("component ids must be 0..k-1 in order")
        dims = {len(c.mean) for c in self.components}
        if len(dims) != 1:
            raise ValidationError("all components must share one feature dimension")

    @property
    def k(self) -> int:
        return len(self.components)

    @property
    def feature_dim(self) -> int:
        return len(self.components[0].mean)

    @property
    def label_probs(self) -> tuple[float, ...]:
        return tuple(c.class_label_prob for c in self.components)

    def to_dict(self) -> dict:
        return {
            "weights": list(self.weights),
            "components": [
                {"id": c.id, "mean": list(c.mean), "stddev": list(c.stddev),
                 "label_prob": c.class_label_prob}
                for c in self.components
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MixtureSpec":
        comps = tuple(
            ComponentSpec(int(c["id"]), c["mean"], c["stddev"], float(c["label_prob"]))
            for c in d["components"]
        )
        return cls(comps, tuple(d["weights"]))


@dataclass(frozen=True)
class Sample:
    features: np.ndarray
    label: int
    subpop_id: int
    annotations: np.ndarray


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """Columnar dataset; row ``i`` is one :class:`Sample`.

    Arrays are made read-only on construction, so derived datasets must be
    built with :meth:`with_labels` or :meth:`take`.
    """

    features: np.ndarray
    labels: np.ndarray
    subpop_ids: np.ndarray
    annotations: np.ndarray = field(default=None)
    annotation_names: tuple[str, ...] = ()

    def __post_init__(self):
        X = np.asarray(self.features, dtype=np.float64)
        if X.ndim != 2:
            raise ValidationError("features must be a 2-D array")
        n = X.shape[0]
        y = np.asarray(self.labels, dtype=np.int64)
        s = np.asarray(self.subpop_ids, dtype=np.int64)
        A = self.annotations
        A = np.zeros((n, 0), dtype=np.uint8) if A is None else np.asarray(A, dtype=np.uint8)
        if A.ndim == 1:
            A = A.reshape(n, -1)
        if y.shape != (n,) or s.shape != (n,) or A.shape[0] != n:
            raise ValidationError("features, labels, subpop_ids and annotations disagree on length")
        if n and not np.isin(y, (0, 1)).all():
            raise ValidationError("labels must be binary")
        if n and not np.isin(A, (0, 1)).all():
            raise ValidationError("annotations must be binary")
        if n and s.min() < 0:
            raise ValidationError("subpop ids must be non-negative")
        names = tuple(self.annotation_names)
        if names and len(names) != A.shape[1]:
            raise ValidationError("annotation_names length differs from annotation width")
        object.__setattr__(self, "features", _frozen(X))
        object.__setattr__(self, "labels", _frozen(y))
        object.__setattr__(self, "subpop_ids", _frozen(s))
        object.__setattr__(self, "annotations", _frozen(A))
        object.__setattr__(self, "annotation_names", names)

    def __len__(self) -> int:
        return self.features.shape[0]

    def __getitem__(self, i: int) -> Sample:
        return Sample(self.features[i], int(self.labels[i]), int(self.subpop_ids[i]),
                      self.annotations[i])

    def __iter__(self) -> Iterator[Sample]:
        return (self[i] for i in range(len(self)))

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    @property
    def samples(self) -> list[Sample]:
        return list(self)

    def with_labels(self, labels: np.ndarray) -> "Dataset":
        return Dataset(self.features, labels, self.subpop_ids, self.annotations,
                       self.annotation_names)

    def with_annotations(self, annotations: np.ndarray, names: Sequence[str] = ()) -> "Dataset":
        return Dataset(self.features, self.labels, self.subpop_ids, annotations, tuple(names))

    def take(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(self.features[idx], self.labels[idx], self.subpop_ids[idx],
                       self.annotations[idx], self.annotation_names)

    def equals(self, other: "Dataset") -> bool:
        return (
            np.array_equal(self.features, other.features)
            and np.array_equal(self.labels, other.labels)
            and np.array_equal(self.subpop_ids, other.subpop_ids)
            and np.array_equal(self.annotations, other.annotations)
        )


def _draw_components(spec: MixtureSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    weights = np.asarray(spec.weights)
    return rng.choice(spec.k, size=n, p=weights / weights.sum())


def sample_subpop_ids(spec: MixtureSpec, n: int, seed: int) -> np.ndarray:
    """The subpopulation ids ``sample_dataset(spec, n, seed)`` would draw, without features."""
    if n < 1:
        raise ValidationError("n must be at least 1")
    return _draw_components(spec, n, substream(seed, "sample_dataset"))


def sample_dataset(spec: MixtureSpec, n: int, seed: int) -> Dataset:
    if not isinstance(spec, MixtureSpec):
        raise ValidationError("spec must be a MixtureSpec")
    if n < 1:
        raise ValidationError("n must be at least 1")
    rng = substream(seed, "sample_dataset")
    comp = _draw_components(spec, n, rng)
    means = np.array([c.mean for c in spec.components])
    stds = np.array([c.stddev for c in spec.components])
    X = means[comp] + stds[comp] * rng.standard_normal((n, spec.feature_dim))
    p = np.asarray(spec.label_probs)
    y = (rng.random(n) < p[comp]).astype(np.int64)
    return Dataset(X, y, comp)


def make_gaussian_benchmark(
    class_separation: float = 4.0,
    subgroup_stddev: float = 2.0,
    n_subgroups: int = 25,
    points_per_subgroup_range: tuple[int, int] = (20, 60),
    label_noise: float = 0.1,
    seed: int = 0,
    point_stddev: float = 1.0,
) -> tuple[MixtureSpec, Dataset]:
    """Two-class 2-D dataset built from Gaussian subgroup clusters.

    Class centres sit at ``(-class_separation/2, 0)`` and
    ``(+class_separation/2, 0)``. Subgroup ``j`` belongs to class ``j % 2``;
    its centre is the class centre plus isotropic noise of scale
    ``subgroup_stddev``, and its points are drawn around that centre with
    scale ``point_stddev``. Point counts are uniform over the inclusive
    ``points_per_subgroup_range``.

    Label noise flips exactly ``floor(label_noise * N)`` labels, chosen as
    the prefix of a seeded permutation of all indices.

    The returned spec records realised frequencies as weights and the
    marginal label probability ``1 - label_noise`` (class 1) or
    ``label_noise`` (class 0) per component.
    """
    lo, hi = (int(v) for v in points_per_subgroup_range)
    if hi < lo or hi < 1:
        raise ValidationError(f"empty points range {points_per_subgroup_range!r}")
    lo = max(lo, 1)
    if n_subgroups < 2:
        raise ValidationError("need at least two subgroups")
    if not 0.0 <= label_noise < 0.5:
        raise ValidationError("label_noise must lie in [0, 0.5)")
    if class_separation <= 0 or subgroup_stddev <= 0 or point_stddev <= 0:
        raise ValidationError("separation and scales must be positive")

    classes = np.arange(n_subgroups) % 2
    class_centres = np.array([[-class_separation / 2, 0.0], [class_separation / 2, 0.0]])
    centres = class_centres[classes] + subgroup_stddev * substream(seed, "gaussian", "centres").standard_normal((n_subgroups, 2))
    counts = substream(seed, "gaussian", "counts").integers(lo, hi + 1, size=n_subgroups)

    point_rng = substream(seed, "gaussian", "points")
    comp = np.repeat(np.arange(n_subgroups), counts)
    X = centres[comp] + point_stddev * point_rng.standard_normal((comp.size, 2))
    y = classes[comp].copy()

    N = comp.size
    n_flip = exact_floor(label_noise, N)
    flip = substream(seed, "gaussian", "label_noise").permutation(N)[:n_flip]
    y[flip] = 1 - y[flip]

    comps = tuple(
        ComponentSpec(j, tuple(centres[j]), (point_stddev, point_stddev),
                      1.0 - label_noise if classes[j] == 1 else label_noise)
        for j in range(n_subgroups)
    )
    weights = counts / N
    # realised frequencies; renormalise the float sum exactly onto 1
    weights = tuple(weights[:-1]) + (1.0 - math.fsum(weights[:-1]),)
    return MixtureSpec(comps, weights), Dataset(X, y, comp)


def component_classes(spec: MixtureSpec) -> np.ndarray:
    """Noise-free class of each component (label probability rounded)."""
    return (np.asarray(spec.label_probs) >= 0.5).astype(np.int64)


def write_csv(dataset: Dataset, path: str | Path) -> None:
    d = dataset.feature_dim
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"feature_{j}" for j in range(d)] + ["label", "subpop_id", "annotations"])
        for i in range(len(dataset)):
            row = [repr(float(v)) for v in dataset.features[i]]
            row += [int(dataset.labels[i]), int(dataset.subpop_ids[i]),
                    "".join(str(int(a)) for a in dataset.annotations[i])]
            w.writerow(row)


def read_csv(path: str | Path, annotation_names: Sequence[str] = ()) -> Dataset:
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        d = sum(1 for h in header if h.startswith("feature_"))
        if header[d:] != ["label", "subpop_id", "annotations"]:
            raise ValidationError(f"unexpected dataset header {header!r}")
        X, y, s, A = [], [], [], []
        for lineno, row in enumerate(r, start=2):
            if len(row) != d + 3:
                raise ValidationError(f"line {lineno}: expected {d + 3} fields, got {len(row)}")
            X.append([float(v) for v in row[:d]])
            y.append(int(row[d]))
            s.append(int(row[d + 1]))
            A.append([int(ch) for ch in row[d + 2]])
    n = len(y)
    width = len(A[0]) if A else 0
    if any(len(a) != width for a in A):
        raise ValidationError("annotation strings differ in length")
    return Dataset(np.asarray(X, dtype=np.float64).reshape(n, d), y, s,
                   np.asarray(A, dtype=np.uint8).reshape(n, width), tuple(annotation_names))
