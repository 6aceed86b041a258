"""Monte-Carlo checks of the 0-local attack guarantee and empirical locality (delta).

The attack guarantee: against a learner that predicts the majority training
label of each subpopulation, flipping ``2 * gamma_i * n`` labels inside
subpopulation ``i`` inverts its prediction whenever ``|D_i| < 4 gamma_i n``,
which fails with probability at most ``exp(-9 gamma_i n / 5)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ValidationError
from .learners import LearnerConfig, TrainedModel, train
from .mixture import ComponentSpec, Dataset, MixtureSpec, sample_dataset, sample_subpop_ids
from .rng import derive_seed, substream
from .subgroups import Subgroup


def chernoff_success_bound(gamma: float, n: int) -> float:
    """Lower bound ``1 - exp(-9 gamma n / 5)`` on the attack's success probability."""
    if not 0.0 <= gamma <= 1.0:
        raise ValidationError("gamma must lie in [0, 1]")
    if n < 0:
        raise ValidationError("n must be non-negative")
    return -math.expm1(-9.0 * gamma * n / 5.0)


def chernoff_tail_bound(gamma: float, n: int) -> float:
    """Upper bound ``exp(-9 gamma n / 5)`` on ``Pr[|D_i| > 4 gamma n]``."""
    if not 0.0 <= gamma <= 1.0 or n < 0:
        raise ValidationError("need gamma in [0, 1] and n >= 0")
    return math.exp(-9.0 * gamma * n / 5.0)


def theorem_attack_size(gamma: float, n: int) -> int:
    return math.floor(2.0 * gamma * n + 0.5)


def target_mixture(gamma: float, k: int = 10, target_label_prob: float = 1.0,
                   feature_dim: int = 2) -> MixtureSpec:
    """Mixture whose component 0 has weight ``gamma``; the rest share ``1 - gamma``.

    Non-target components alternate deterministic labels 0/1 and sit on a
    line, one unit apart.
    """
    if not 0.0 < gamma < 1.0 or k < 2:
        raise ValidationError("need 0 < gamma < 1 and k >= 2")
    rest = (1.0 - gamma) / (k - 1)
    weights = (gamma,) + (rest,) * (k - 2) + (1.0 - gamma - rest * (k - 2),)
    comps = [ComponentSpec(0, (0.0,) * feature_dim, (0.25,) * feature_dim, target_label_prob)]
    for j in range(1, k):
        mean = (float(j),) + (0.0,) * (feature_dim - 1)
        comps.append(ComponentSpec(j, mean, (0.25,) * feature_dim, float(j % 2)))
    return MixtureSpec(tuple(comps), weights)


# --- attack simulation -------------------------------------------------------

@dataclass(frozen=True)
class TheoremTrialResult:
    trial: int
    trial_seed: int
    subpop_size: int
    attack_size: int
    majority_flipped: bool
    misclassified: bool


@dataclass(frozen=True)
class TheoremSimulation:
    gamma: float
    n: int
    target_subpop: int
    success_rate: float
    bound: float
    trials: tuple[TheoremTrialResult, ...]

    @property
    def standard_error(self) -> float:
        p, t = self.success_rate, len(self.trials)
        return math.sqrt(p * (1.0 - p) / t)

    @property
    def passes(self) -> bool:
        """Success rate is at least the bound minus three standard errors."""
        return self.success_rate >= self.bound - 3.0 * self.standard_error


def _majority(labels: np.ndarray) -> int:
    return int(2 * int(labels.sum()) >= labels.size)  # ties go to 1, as in the oracle


def simulate_theorem1(spec: MixtureSpec, n: int, target_subpop: int, trials: int,
                      seed: int, attack_size: int | None = None) -> TheoremSimulation:
    """Estimate how often the subpopulation attack flips a 0-local learner.

    Per trial: sample ``n`` points, record the clean majority label of the
    target subpopulation, flip ``min(attack_size, |D_i|)`` of its labels,
    refit the oracle and classify one fresh draw from the subpopulation.
    The trial succeeds when that prediction differs from the clean majority.

    Flips are spent on members that carry the clean majority label first,
    in random order; with deterministic labels this is a uniform subset.
    ``attack_size`` defaults to ``round(2 * gamma_i * n)``.
    """
    if not 0 <= target_subpop < spec.k:
        raise ValidationError(f"target subpopulation {target_subpop} not in 0..{spec.k - 1}")
    if trials < 1:
        raise ValidationError("need at least one trial")
    gamma = spec.weights[target_subpop]
    if attack_size is None:
        attack_size = theorem_attack_size(gamma, n)
    oracle_cfg = LearnerConfig("zero_local_oracle")
    comp = spec.components[target_subpop]

    log = []
    for t in range(trials):
        t_seed = derive_seed(seed, "simulate_theorem1", t)
        data = sample_dataset(spec, n, t_seed)
        members = np.flatnonzero(data.subpop_ids == target_subpop)
        if members.size == 0:
            log.append(TheoremTrialResult(t, t_seed, 0, 0, False, False))
            continue
        clean_label = _majority(data.labels[members])
        rng = substream(t_seed, "simulate_theorem1", "attack")
        agree = members[data.labels[members] == clean_label]
        disagree = members[data.labels[members] != clean_label]
        ranked = np.concatenate([rng.permutation(agree), rng.permutation(disagree)])
        a = min(int(attack_size), members.size)
        labels = data.labels.copy()
        labels[ranked[:a]] = 1 - labels[ranked[:a]]
        poisoned = train(oracle_cfg, data.with_labels(labels))

        fresh = np.asarray(comp.mean) + np.asarray(comp.stddev) * rng.standard_normal(len(comp.mean))
        pred = int(poisoned.predict(fresh, np.array([target_subpop]))[0])
        flipped = poisoned.oracle_table[target_subpop] != clean_label
        log.append(TheoremTrialResult(t, t_seed, int(members.size), a, flipped,
                                      pred != clean_label))

    rate = sum(r.misclassified for r in log) / trials
    return TheoremSimulation(gamma, n, target_subpop, rate,
                             chernoff_success_bound(gamma, n), tuple(log))


@dataclass(frozen=True)
class TailEstimate:
    gamma: float
    n: int
    datasets: int
    exceed_count: int
    bound: float

    @property
    def frequency(self) -> float:
        return self.exceed_count / self.datasets

    @property
    def standard_error(self) -> float:
        f = self.frequency
        return math.sqrt(f * (1.0 - f) / self.datasets)

    @property
    def passes(self) -> bool:
        return self.frequency <= self.bound + 3.0 * self.standard_error


def subpop_size_tail(spec: MixtureSpec, n: int, target_subpop: int, datasets: int,
                     seed: int) -> TailEstimate:
    """Frequency of ``|D_i| > 4 gamma_i n`` over independently sampled datasets.

    Only the component draw of each dataset is generated; it is the same
    draw ``sample_dataset`` makes with that seed.
    """
    gamma = spec.weights[target_subpop]
    limit = 4.0 * gamma * n
    exceed = 0
    for t in range(datasets):
        ids = sample_subpop_ids(spec, n, derive_seed(seed, "subpop_size_tail", t))
        exceed += int(np.count_nonzero(ids == target_subpop) > limit)
    return TailEstimate(gamma, n, datasets, exceed, chernoff_tail_bound(gamma, n))


def write_trial_log(sim: TheoremSimulation, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["trial", "subpop_size", "attack_size", "misclassified"])
        for r in sim.trials:
            w.writerow([r.trial, r.subpop_size, r.attack_size, int(r.misclassified)])


# --- delta locality ----------------------------------------------------------

@dataclass(frozen=True)
class DeltaEstimate:
    subgroup_id: int
    point_distribution: float
    subpop_distribution: float
    delta_hat: float
    delta_mean: float
    probe_count: int
    ensemble_size: int


def delta_from_predictions(subgroup_id: int, predictions: np.ndarray,
                           probe_columns: np.ndarray | None = None) -> DeltaEstimate:
    """Locality estimate from an (ensemble x subgroup members) 0/1 matrix.

    For Bernoulli outputs the total-variation distance is ``|p - q|`` with
    ``p`` the ensemble's positive rate at one probe and ``q`` the positive
    rate pooled over the ensemble and all subgroup members.
    """
    P = np.asarray(predictions, dtype=np.float64)
    if P.ndim != 2 or P.size == 0:
        raise ValidationError("prediction matrix must be non-empty and 2-D")
    q = float(P.mean())
    cols = np.arange(P.shape[1]) if probe_columns is None else np.asarray(probe_columns)
    p = P[:, cols].mean(axis=0)
    d = np.abs(p - q)
    worst = int(np.argmax(d))
    return DeltaEstimate(int(subgroup_id), float(p[worst]), q, float(d[worst]),
                         float(d.mean()), int(cols.size), int(P.shape[0]))


def estimate_delta_from_models(models: Sequence[TrainedModel], val: Dataset,
                               subgroups: Sequence[Subgroup], max_probes: int | None = None,
                               seed: int = 0) -> list[DeltaEstimate]:
    out = []
    for g in subgroups:
        if g.val_size == 0:
            raise ValidationError(f"subgroup {g.id} has no validation members to probe")
        members = val.take(g.val_indices)
        P = np.stack([m.predict_dataset(members) for m in models])
        cols = None
        if max_probes is not None and g.val_size > max_probes:
            cols = np.sort(substream(seed, "estimate_delta", "probes", g.id)
                           .choice(g.val_size, size=max_probes, replace=False))
        out.append(delta_from_predictions(g.id, P, cols))
    return out


def estimate_delta(config: LearnerConfig, train_data: Dataset, val: Dataset,
                   subgroups: Sequence[Subgroup], ensemble_size: int = 5, seed: int = 0,
                   max_probes: int | None = None) -> list[DeltaEstimate]:
    """Train ``ensemble_size`` models on the same data and measure locality per subgroup.

    Ensemble members differ only in their training seed (initialisation and
    batch order). Probe points are the subgroup's validation members,
    optionally subsampled to ``max_probes``.
    """
    if ensemble_size < 2:
        raise ValidationError("ensemble_size must be at least 2")
    models = [train(config.with_seed(derive_seed(seed, "estimate_delta", r)), train_data)
              for r in range(ensemble_size)]
    return estimate_delta_from_models(models, val, subgroups, max_probes, seed)


def write_delta_csv(estimates: Sequence[DeltaEstimate], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["subgroup_id", "probe_count", "delta_max", "delta_mean"])
        for e in estimates:
            w.writerow([e.subgroup_id, e.probe_count, repr(e.delta_hat), repr(e.delta_mean)])
