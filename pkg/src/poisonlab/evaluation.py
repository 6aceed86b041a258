"""Target/collateral damage and the (subgroup x model x alpha x repeat) grid."""

from __future__ import annotations

import csv
import json
import logging
import traceback
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ValidationError
from .learners import LearnerConfig, TrainedModel, param_count, save_model, train
from .mixture import Dataset
from .poisoning import apply_plan, plan_attack
from .rng import derive_seed
from .subgroups import Subgroup

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DamageReport:
    subgroup_id: int
    alpha: float
    model_tag: str
    clean_target_acc: float
    poisoned_target_acc: float
    target_damage: float
    clean_rest_acc: float
    poisoned_rest_acc: float
    collateral_damage: float
    target_val_count: int
    subgroup_size: int = 0
    budget: int = 0
    param_count: int = 0
    repeat: int = 0
    train_seed: int = 0
    attack_seed: int = 0


@dataclass(frozen=True)
class CellFailure:
    subgroup_id: int
    alpha: float
    model_tag: str
    repeat: int
    error: str


def _accuracy_counts(model: TrainedModel, data: Dataset) -> tuple[int, int]:
    return int(np.sum(model.predict_dataset(data) == data.labels)), len(data)


def target_damage(clean: TrainedModel, poisoned: TrainedModel, val_target: Dataset) -> float:
    if len(val_target) == 0:
        raise ValidationError("target validation set is empty; filter the subgroup by min_val_size")
    if clean.feature_dim != poisoned.feature_dim:
        raise ValidationError("models disagree on feature dimension")
    c, n = _accuracy_counts(clean, val_target)
    p, _ = _accuracy_counts(poisoned, val_target)
    return c / n - p / n


def collateral_damage(clean: TrainedModel, poisoned: TrainedModel, val_rest: Dataset) -> float:
    if len(val_rest) == 0:
        raise ValidationError("no validation samples outside the target subgroup")
    c, n = _accuracy_counts(clean, val_rest)
    p, _ = _accuracy_counts(poisoned, val_rest)
    return c / n - p / n


def damage_from_predictions(subgroup: Subgroup, alpha: float, model_tag: str, val: Dataset,
                            clean_pred: np.ndarray, poisoned_pred: np.ndarray,
                            **extra) -> DamageReport:
    """Build a report from per-sample validation predictions of both models."""
    target = np.zeros(len(val), dtype=bool)
    target[subgroup.val_indices] = True
    if not target.any():
        raise ValidationError(f"subgroup {subgroup.id} has no validation members")
    y = val.labels
    ok_c, ok_p = clean_pred == y, poisoned_pred == y
    ct, pt = ok_c[target].mean(), ok_p[target].mean()
    rest = ~target
    cr = ok_c[rest].mean() if rest.any() else float("nan")
    pr = ok_p[rest].mean() if rest.any() else float("nan")
    return DamageReport(
        subgroup.id, float(alpha), model_tag, float(ct), float(pt), float(ct - pt),
        float(cr), float(pr), float(cr - pr), int(target.sum()),
        subgroup_size=subgroup.size, **extra)


# --- grid --------------------------------------------------------------------

@dataclass
class MatrixResult:
    reports: list[DamageReport] = field(default_factory=list)
    failures: list[CellFailure] = field(default_factory=list)

    def summary(self) -> list[dict]:
        return summarize(self.reports)

    def model_summary(self) -> list[dict]:
        return summarize_models(self.reports)


def attack_seed(master_seed: int, subgroup_id: int, repeat: int) -> int:
    return derive_seed(master_seed, "attack", int(subgroup_id), int(repeat))


def train_seed(master_seed: int, model_tag: str, repeat: int) -> int:
    return derive_seed(master_seed, "train", model_tag, int(repeat))


def _run_group(args) -> tuple[list[DamageReport], list[CellFailure]]:
    (train_data, val, subgroups, config, alphas, repeat, seed, model_dir) = args
    tag = config.tag
    reports, failures = [], []
    t_seed = train_seed(seed, tag, repeat)
    cfg = config.with_seed(t_seed)
    n_params = param_count(cfg, train_data.feature_dim)
    try:
        clean = train(cfg, train_data)
    except Exception as exc:  # every cell of the group fails with the clean model
        log.error("clean training failed for %s repeat %d: %s", tag, repeat, exc)
        msg = f"clean model: {type(exc).__name__}: {exc}"
        return [], [CellFailure(g.id, float(a), tag, repeat, msg) for g in subgroups for a in alphas]
    clean_pred = clean.predict_dataset(val)
    if model_dir is not None:
        save_model(clean, Path(model_dir) / f"{tag}_r{repeat}_clean.npz")

    for g in subgroups:
        a_seed = attack_seed(seed, g.id, repeat)
        for alpha in alphas:
            try:
                plan = plan_attack(g, alpha, a_seed)
                if plan.budget == 0:
                    # identical training input and seed: training is deterministic
                    poisoned, pred = clean, clean_pred
                else:
                    poisoned = train(cfg, apply_plan(train_data, plan))
                    pred = poisoned.predict_dataset(val)
                    if model_dir is not None:
                        save_model(poisoned, Path(model_dir) / f"{tag}_r{repeat}_g{g.id}_a{alpha:g}.npz")
                reports.append(damage_from_predictions(
                    g, alpha, tag, val, clean_pred, pred, budget=plan.budget,
                    param_count=n_params, repeat=repeat, train_seed=t_seed, attack_seed=a_seed))
            except Exception as exc:
                log.error("cell (%d, %g, %s, %d) failed: %s", g.id, alpha, tag, repeat, exc)
                failures.append(CellFailure(g.id, float(alpha), tag, repeat,
                                            f"{type(exc).__name__}: {exc}\n{traceback.format_exc(limit=3)}"))
    return reports, failures


def run_matrix(
    train_data: Dataset,
    val: Dataset,
    subgroups: Sequence[Subgroup],
    ladder: Sequence[LearnerConfig],
    alphas: Sequence[float],
    repeats: int = 1,
    seed: int = 0,
    workers: int = 1,
    model_dir: str | Path | None = None,
) -> MatrixResult:
    """Train a clean and a poisoned model for every grid cell and report damage.

    One clean model per (model config, repeat) serves every subgroup and
    alpha. The poisoned model reuses the clean model's training seed, and the
    flip set depends only on (seed, subgroup, repeat), so every model in the
    ladder is attacked with the same poisoned dataset.
    """
    if not subgroups or not ladder or not alphas or repeats < 1:
        raise ValidationError("empty grid")
    if any(a < 0 for a in alphas):
        raise ValidationError("alphas must be non-negative")
    tags = [c.tag for c in ladder]
    if len(set(tags)) != len(tags):
        raise ValidationError(f"duplicate model tags in ladder: {tags}")
    jobs = [(train_data, val, list(subgroups), cfg, list(alphas), r, seed, model_dir)
            for cfg in ladder for r in range(repeats)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outputs = list(pool.map(_run_group, jobs))
    else:
        outputs = [_run_group(j) for j in jobs]

    order = {t: i for i, t in enumerate(tags)}
    result = MatrixResult()
    for reports, failures in outputs:
        result.reports.extend(reports)
        result.failures.extend(failures)
    result.reports.sort(key=lambda r: (r.subgroup_id, r.alpha, order[r.model_tag], r.repeat))
    result.failures.sort(key=lambda f: (f.subgroup_id, f.alpha, order[f.model_tag], f.repeat))
    return result


# --- aggregation -------------------------------------------------------------

def summarize(reports: Sequence[DamageReport]) -> list[dict]:
    """Mean and (population) std over repeats per (subgroup, alpha, model)."""
    cells = defaultdict(list)
    for r in reports:
        cells[(r.subgroup_id, r.alpha, r.model_tag)].append(r)
    rows = []
    for (gid, alpha, tag), rs in cells.items():
        td = np.array([r.target_damage for r in rs])
        col = np.array([r.collateral_damage for r in rs])
        rows.append({
            "subgroup_id": gid,
            "subgroup_size": rs[0].subgroup_size,
            "alpha": alpha,
            "model_tag": tag,
            "param_count": rs[0].param_count,
            "td_mean": float(td.mean()),
            "td_std": float(td.std()),
            "collateral_mean": float(col.mean()),
            "collateral_std": float(col.std()),
            "clean_target_acc_mean": float(np.mean([r.clean_target_acc for r in rs])),
            "poisoned_target_acc_mean": float(np.mean([r.poisoned_target_acc for r in rs])),
            "target_val_count": rs[0].target_val_count,
            "repeats": len(rs),
        })
    return rows


def summarize_models(reports: Sequence[DamageReport]) -> list[dict]:
    """Per (alpha, model): target damage averaged across subgroups.

    Both the plain mean over subgroups and the mean weighted by subgroup
    training size are given.
    """
    groups = defaultdict(list)
    for row in summarize(reports):
        groups[(row["alpha"], row["model_tag"])].append(row)
    out = []
    for (alpha, tag), rows in groups.items():
        td = np.array([r["td_mean"] for r in rows])
        w = np.array([r["subgroup_size"] for r in rows], dtype=float)
        col = np.array([r["collateral_mean"] for r in rows])
        out.append({
            "alpha": alpha,
            "model_tag": tag,
            "param_count": rows[0]["param_count"],
            "subgroups": len(rows),
            "td_mean": float(td.mean()),
            "td_weighted_mean": float(np.average(td, weights=w)) if w.sum() else float("nan"),
            "collateral_mean": float(col.mean()),
        })
    return out


SUMMARY_COLUMNS = ["subgroup_id", "subgroup_size", "alpha", "model_tag", "param_count",
                   "td_mean", "td_std", "collateral_mean", "collateral_std",
                   "clean_target_acc_mean", "poisoned_target_acc_mean", "target_val_count",
                   "repeats"]
MODEL_SUMMARY_COLUMNS = ["alpha", "model_tag", "param_count", "subgroups", "td_mean",
                         "td_weighted_mean", "collateral_mean"]


def write_rows(rows: Sequence[dict], columns: Sequence[str], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(columns), lineterminator="\n",
                           extrasaction="ignore")
        w.writeheader()
        for row in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})


def write_reports_jsonl(reports: Sequence[DamageReport], path: str | Path) -> None:
    with open(path, "w") as fh:
        for r in reports:
            fh.write(json.dumps(asdict(r), sort_keys=True) + "\n")


def read_reports_jsonl(path: str | Path) -> list[DamageReport]:
    with open(path) as fh:
        return [DamageReport(**json.loads(line)) for line in fh if line.strip()]
