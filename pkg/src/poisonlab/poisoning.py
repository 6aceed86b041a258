"""Label-flipping attack restricted to one subpopulation."""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import ValidationError
from .mixture import Dataset
from .rng import substream
from .subgroups import Subgroup


def poison_budget(alpha: float, n_p: int) -> int:
    """Number of labels to flip so that poisoned:clean is at most ``alpha``.

    ``floor(alpha * n_p / (1 + alpha))``, computed exactly on the decimal
    value of ``alpha``.
    """
    if alpha < 0:
        raise ValidationError("alpha must be non-negative")
    if not np.isfinite(alpha):
        raise ValidationError("alpha must be finite")
    a = Fraction(repr(float(alpha)))
    return int((a * int(n_p)) // (1 + a))


@dataclass(frozen=True, eq=False)
class PoisonPlan:
    subgroup_id: int
    alpha: float
    budget: int
    flipped_indices: np.ndarray
    seed: int

    def to_dict(self) -> dict:
        return {
            "subgroup_id": int(self.subgroup_id),
            "alpha": float(self.alpha),
            "budget": int(self.budget),
            "seed": int(self.seed),
            "flipped_indices": [int(i) for i in self.flipped_indices],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "PoisonPlan":
        idx = np.asarray(d["flipped_indices"], dtype=np.int64)
        return cls(int(d["subgroup_id"]), float(d["alpha"]), int(d["budget"]), idx, int(d["seed"]))


def plan_attack(subgroup: Subgroup, alpha: float, seed: int) -> PoisonPlan:
    """Pick ``poison_budget(alpha, n_p)`` members uniformly at random.

    The flip set is a prefix of one seeded permutation of the members, so
    for a fixed seed the set at a smaller ``alpha`` is contained in the set
    at a larger one.
    """
    budget = poison_budget(alpha, subgroup.size)
    order = substream(seed, "apply_label_flip", int(subgroup.id)).permutation(subgroup.size)
    flipped = np.sort(subgroup.member_indices[order[:budget]])
    flipped.setflags(write=False)
    return PoisonPlan(subgroup.id, float(alpha), budget, flipped, int(seed))


def apply_plan(dataset: Dataset, plan: PoisonPlan) -> Dataset:
    idx = plan.flipped_indices
    if idx.size and (idx.min() < 0 or idx.max() >= len(dataset)):
        raise ValidationError("plan indices fall outside the dataset")
    labels = dataset.labels.copy()
    labels[idx] = 1 - labels[idx]
    return dataset.with_labels(labels)


def apply_label_flip(dataset: Dataset, subgroup: Subgroup, alpha: float,
                     seed: int) -> tuple[Dataset, PoisonPlan]:
    members = subgroup.member_indices
    if members.size and members.max() >= len(dataset):
        raise ValidationError(
            f"subgroup {subgroup.id} references index {members.max()} beyond dataset size {len(dataset)}")
    plan = plan_attack(subgroup, alpha, seed)
    return apply_plan(dataset, plan), plan
