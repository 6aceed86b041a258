"""Command-line runner: ``poisonlab <command> --config run.yaml --out DIR``.

Exit status is 0 on success, 2 for configuration or input errors and 3 when
an experiment cell fails or a Monte-Carlo check does not hold.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import yaml

from . import __version__, boundary, evaluation, theory
from .config import ConfigError, ExperimentConfig
from .errors import UnsupportedOperation, ValidationError
from .ingestion import TabularSchema, load_tabular_split, split
from .learners import param_count, save_model, train
from .mixture import Dataset, MixtureSpec, make_gaussian_benchmark, write_csv
from .poisoning import apply_plan, plan_attack
from .rng import derive_seed
from .subgroups import (AnnotationSchema, Subgroup, component_schema, derive_subgroups,
                        with_component_annotations, write_subgroup_table)

log = logging.getLogger("poisonlab")

EXIT_OK, EXIT_CONFIG, EXIT_FAILURES = 0, 2, 3


@dataclass
class Prepared:
    full: Dataset | None
    spec: MixtureSpec | None
    train: Dataset
    val: Dataset
    subgroups: list[Subgroup]
    targets: list[Subgroup]
    inputs: dict[str, str]


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _select_targets(subgroups: list[Subgroup], rule) -> list[Subgroup]:
    if rule is None:
        return list(subgroups)
    by_id = {g.id: g for g in subgroups}
    if isinstance(rule, dict) and set(rule) == {"largest"}:
        ranked = sorted(subgroups, key=lambda g: (-g.size, g.id))
        return sorted(ranked[:int(rule["largest"])], key=lambda g: g.id)
    if isinstance(rule, list):
        missing = [i for i in rule if i not in by_id]
        if missing:
            raise ConfigError(f"target subgroups {missing} do not exist or were filtered out")
        return [by_id[i] for i in sorted(set(rule))]
    raise ConfigError("subgroups.targets must be null, a list of ids or {largest: N}")


def prepare(cfg: ExperimentConfig) -> Prepared:
    """Build or load the dataset, split it and derive subgroups."""
    sg = cfg.section("subgroups")
    vf = cfg.section("split")["val_fraction"]
    split_seed = derive_seed(cfg.seed, "split")
    if cfg.source == "gaussian":
        spec, full = make_gaussian_benchmark(seed=cfg.seed, **cfg.gaussian_params)
        full = with_component_annotations(full, spec.k)
        tr, va = split(full, vf, split_seed)
        schema = component_schema(spec.k)
        inputs = {}
    else:
        path, schema_path = cfg.data_path, cfg.schema_path
        if not path.is_file():
            raise ConfigError(f"data file not found: {path}")
        tab = TabularSchema.from_yaml(schema_path)
        tr, va, _, dropped = load_tabular_split(path, tab, vf, split_seed)
        log.info("loaded %s: %d train, %d val rows (%d dropped)", path, len(tr), len(va), dropped)
        schema = AnnotationSchema(tab.annotation_names, tab.subgroup_features)
        spec, full = None, None
        inputs = {str(path): _sha256(path), str(schema_path): _sha256(schema_path)}
    groups = derive_subgroups(tr, schema, sg["min_train_size"], sg["min_val_size"], va)
    if not groups:
        raise ConfigError("no subgroup passes the size thresholds")
    return Prepared(full, spec, tr, va, groups, _select_targets(groups, sg.get("targets")), inputs)


def write_manifest(out: Path, command: str, cfg: ExperimentConfig, inputs: dict,
                   extra: dict | None = None) -> None:
    files = sorted(p for p in out.rglob("*") if p.is_file() and p.name != "manifest.json")
    manifest = {
        "command": command,
        "config_hash": cfg.hash,
        "seed": cfg.seed,
        "rng": cfg.raw["rng"],
        "poisonlab_version": __version__,
        "numpy_version": np.__version__,
        "config": cfg.raw,
        "inputs": inputs,
        "outputs": {str(p.relative_to(out)): _sha256(p) for p in files},
        **(extra or {}),
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


# --- commands ----------------------------------------------------------------

def cmd_generate(cfg: ExperimentConfig, out: Path, args) -> int:
    if cfg.source != "gaussian":
        raise ConfigError("generate needs a gaussian dataset source")
    p = prepare(cfg)
    write_csv(p.full, out / "dataset.csv")
    with open(out / "spec.yaml", "w") as fh:
        yaml.safe_dump(p.spec.to_dict(), fh, sort_keys=False)
    write_subgroup_table(p.subgroups, out / "subgroups.csv")
    print(f"{'subgroup':>8} {'train':>6} {'val':>5}")
    for g in p.subgroups:
        print(f"{g.id:>8} {g.size:>6} {g.val_size:>5}")
    write_manifest(out, "generate", cfg, p.inputs)
    return EXIT_OK


def cmd_attack_matrix(cfg: ExperimentConfig, out: Path, args) -> int:
    p = prepare(cfg)
    write_subgroup_table(p.subgroups, out / "subgroups.csv")
    model_dir = None
    if args.save_models:
        model_dir = out / "models"
        model_dir.mkdir(exist_ok=True)
    res = evaluation.run_matrix(p.train, p.val, p.targets, cfg.ladder, cfg.alphas,
                                repeats=cfg.raw["repeats"], seed=cfg.seed,
                                workers=args.workers, model_dir=model_dir)
    rows = [asdict(r) for r in res.reports]
    evaluation.write_rows(rows, REPORT_COLUMNS, out / "reports.csv")
    evaluation.write_reports_jsonl(res.reports, out / "reports.jsonl")
    evaluation.write_rows(res.summary(), evaluation.SUMMARY_COLUMNS, out / "summary.csv")
    models = res.model_summary()
    evaluation.write_rows(models, evaluation.MODEL_SUMMARY_COLUMNS, out / "model_summary.csv")
    if res.failures:
        with open(out / "failures.jsonl", "w") as fh:
            for f in res.failures:
                fh.write(json.dumps(asdict(f), sort_keys=True) + "\n")
    for row in models:
        print(f"alpha={row['alpha']:<4g} {row['model_tag']:<22} td={row['td_mean']:+.4f} "
              f"collateral={row['collateral_mean']:+.4f}")
    write_manifest(out, "attack-matrix", cfg, p.inputs, {"failures": len(res.failures)})
    if res.failures:
        log.error("%d cell(s) failed; see failures.jsonl", len(res.failures))
        return EXIT_FAILURES
    return EXIT_OK


REPORT_COLUMNS = list(evaluation.DamageReport.__dataclass_fields__)


def cmd_theorem(cfg: ExperimentConfig, out: Path, args) -> int:
    th = cfg.section("theorem")
    trial_dir = out / "trials"
    trial_dir.mkdir(exist_ok=True)
    rows, tails, ok = [], [], True
    for gamma in th["gammas"]:
        spec = theory.target_mixture(float(gamma), k=th["k"])
        for n in th["ns"]:
            s = derive_seed(cfg.seed, "theorem", float(gamma), int(n))
            sims = [("theorem", theory.simulate_theorem1(spec, n, 0, th["trials"], s))]
            if th["include_disabled"]:
                sims.append(("disabled", theory.simulate_theorem1(spec, n, 0, th["trials"], s,
                                                                  attack_size=0)))
            for kind, sim in sims:
                if kind == "theorem":
                    status = "PASS" if sim.passes else "FAIL"
                    ok &= sim.passes
                else:
                    status = "PASS" if sim.success_rate == 0 else "FAIL"
                    ok &= sim.success_rate == 0
                size = 0 if kind == "disabled" else theory.theorem_attack_size(gamma, n)
                rows.append([kind, repr(float(gamma)), n, size, th["trials"], repr(sim.success_rate),
                             repr(sim.bound), repr(sim.standard_error), status])
                theory.write_trial_log(sim, trial_dir / f"{kind}_gamma={gamma:g}_n={n}.csv")
            tail = theory.subpop_size_tail(spec, n, 0, th["tail_datasets"],
                                           derive_seed(cfg.seed, "tail", float(gamma), int(n)))
            ok &= tail.passes
            tails.append([repr(float(gamma)), n, tail.datasets, tail.exceed_count, repr(tail.frequency),
                          repr(tail.bound), repr(tail.standard_error), "PASS" if tail.passes else "FAIL"])
    _write_table(out / "theorem.csv", ["attack", "gamma", "n", "attack_size", "trials", "success_rate",
                                       "bound", "standard_error", "status"], rows)
    _write_table(out / "tail.csv", ["gamma", "n", "datasets", "exceed_count", "frequency", "bound",
                                    "standard_error", "status"], tails)
    for r in rows:
        print(f"{r[0]:<9} gamma={float(r[1]):<5g} n={r[2]:<5} rate={float(r[5]):.4f} "
              f"bound={float(r[6]):.6f} {r[8]}")
    write_manifest(out, "theorem", cfg, {})
    return EXIT_OK if ok else EXIT_FAILURES


def _write_table(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _boundary_targets(rule, subgroups: list[Subgroup]) -> list[Subgroup]:
    by_id = {g.id: g for g in subgroups}
    if rule == "all":
        return list(subgroups)
    ids = [rule] if isinstance(rule, int) else rule
    if not isinstance(ids, list) or not ids:
        raise ConfigError("boundary.target must be a subgroup id, a list of ids or 'all'")
    missing = [i for i in ids if i not in by_id]
    if missing:
        raise ConfigError(f"boundary target subgroup(s) {missing} do not exist")
    return [by_id[i] for i in ids]


def cmd_boundary(cfg: ExperimentConfig, out: Path, args) -> int:
    bd = cfg.section("boundary")
    p = prepare(cfg)
    if p.train.feature_dim != 2:
        raise UnsupportedOperation(
            f"boundary needs 2-D features; this dataset has {p.train.feature_dim}")
    targets = _boundary_targets(bd["target"], p.subgroups)
    raster_dir = out / "rasters"
    raster_dir.mkdir(exist_ok=True)
    if args.save_models:
        (out / "models").mkdir(exist_ok=True)
    plans = {g.id: plan_attack(g, bd["alpha"], evaluation.attack_seed(cfg.seed, g.id, 0))
             for g in targets}
    with open(out / "plans.jsonl", "w") as fh:
        for plan in plans.values():
            fh.write(plan.to_json() + "\n")
    bbox = boundary.data_bbox(p.train.features)
    res = tuple(bd["resolution"])
    shifts, summary = [], []
    for cfg_m in cfg.ladder:
        if not cfg_m.trainable:
            log.warning("skipping %s: no spatial decision boundary", cfg_m.tag)
            continue
        mcfg = cfg_m.with_seed(evaluation.train_seed(cfg.seed, cfg_m.tag, 0))
        clean = train(mcfg, p.train)
        g_clean = boundary.rasterize(clean, bbox, res)
        boundary.write_grid_csv(g_clean, raster_dir / f"{cfg_m.tag}_clean.csv")
        if args.save_models:
            save_model(clean, out / "models" / f"{cfg_m.tag}_clean.npz")
        mine = []
        for g in targets:
            plan = plans[g.id]
            poisoned = clean if plan.budget == 0 else train(mcfg, apply_plan(p.train, plan))
            g_pois = boundary.rasterize(poisoned, bbox, res)
            boundary.write_grid_csv(g_pois, raster_dir / f"{cfg_m.tag}_g{g.id}_poisoned.csv")
            if args.save_models:
                save_model(poisoned, out / "models" / f"{cfg_m.tag}_g{g.id}_poisoned.npz")
            s = boundary.boundary_shift(g_clean, g_pois, boundary.target_region(p.train, g))
            shifts.append((g.id, cfg_m.tag, s))
            mine.append(s)
        row = [cfg_m.tag, param_count(cfg_m, 2), len(mine)]
        row += [repr(float(np.mean([getattr(s, k) for s in mine]))) for k in ("inside", "outside", "total")]
        summary.append(row)
        print(f"{cfg_m.tag:<22} inside={float(row[3]):.4f} outside={float(row[4]):.4f} "
              f"total={float(row[5]):.4f}")
    boundary.write_shift_csv(shifts, out / "shifts.csv")
    _write_table(out / "shift_summary.csv",
                 ["model_tag", "param_count", "targets", "inside_mean", "outside_mean", "total_mean"],
                 summary)
    write_manifest(out, "boundary", cfg, p.inputs, {"bbox": list(bbox)})
    return EXIT_OK


def cmd_delta(cfg: ExperimentConfig, out: Path, args) -> int:
    dl = cfg.section("delta")
    p = prepare(cfg)
    R = dl["ensemble_size"]
    summary = []
    for mcfg in cfg.ladder:
        if mcfg.trainable:
            est = theory.estimate_delta(mcfg, p.train, p.val, p.targets, R,
                                        derive_seed(cfg.seed, "delta", mcfg.tag), dl["max_probes"])
        else:
            # deterministic learner: every ensemble member is the same model
            model = train(mcfg, p.train)
            est = theory.estimate_delta_from_models([model] * R, p.val, p.targets, dl["max_probes"],
                                                    derive_seed(cfg.seed, "delta", mcfg.tag))
        theory.write_delta_csv(est, out / f"delta_{mcfg.tag}.csv")
        row = [mcfg.tag, param_count(mcfg, p.train.feature_dim), len(est),
               repr(float(np.mean([e.delta_hat for e in est]))),
               repr(float(np.mean([e.delta_mean for e in est])))]
        summary.append(row)
        print(f"{mcfg.tag:<22} params={row[1]:<7} mean delta_max={float(row[3]):.4f}")
    _write_table(out / "delta_summary.csv",
                 ["model_tag", "param_count", "subgroups", "delta_max_mean", "delta_mean_mean"], summary)
    write_manifest(out, "delta", cfg, p.inputs)
    return EXIT_OK


COMMANDS = {
    "generate": cmd_generate,
    "attack-matrix": cmd_attack_matrix,
    "theorem": cmd_theorem,
    "boundary": cmd_boundary,
    "delta": cmd_delta,
}


def _default_workers() -> int:
    env = os.environ.get("POISONLAB_WORKERS")
    if env is None:
        return 1
    try:
        return max(1, int(env))
    except ValueError:
        log.warning("ignoring non-integer POISONLAB_WORKERS=%r", env)
        return 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="poisonlab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, type=Path)
        sp.add_argument("--out", required=True, type=Path)
        sp.add_argument("--workers", type=int, default=None,
                        help="worker processes (default: $POISONLAB_WORKERS or 1)")
        sp.add_argument("--seed", type=int, default=None, help="override the config's master seed")
        sp.add_argument("--save-models", action="store_true")
        sp.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.workers is None:
        args.workers = _default_workers()
    if args.workers < 1:
        print("error: --workers must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = ExperimentConfig.from_yaml(args.config)
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
        args.out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, args.out, args)
    except (ValidationError, UnsupportedOperation, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
