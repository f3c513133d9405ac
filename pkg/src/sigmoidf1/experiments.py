"""Seeded multi-loss runs, (beta, eta) sensitivity grids and robust aggregation.

Output directory layout (all text, byte-deterministic for a fixed config)::

    config.ini          effective configuration
    training_hash.txt   digest guarding reuse of checkpoints across configs
    splits.json         train/val/test indices shared by every loss
    checkpoints/        <loss>__seed<k>.ckpt
    traces/             <loss>__seed<k>.txt, one training loss per line
    runs.jsonl          one flat record per (loss, seed, split, threshold)
    aggregates.jsonl    mean/median/IQR per (loss, threshold, metric)
    table.txt           losses x metrics comparison table
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import config as config_mod
from .config import ExperimentConfig
from .data import Dataset, SplitIndices, generate_synthetic, load_multilabel_file, split, split_indices
from .losses import LossSpec
from .metrics import evaluate
from .model import NonFiniteError, Optimizer, init_head, load_checkpoint, predict_scores, save_checkpoint, train

log = logging.getLogger(__name__)

METRICS = ("weightedF1", "microF1", "macroF1", "precision", "recall", "mAP")
TABLE_COLUMNS = (("weightedF1", "weightedF1"), ("microF1", "microF1"), ("macroF1", "macroF1"),
                 ("precision", "Precision"), ("mAP", "mAP"))


class ReportIntegrityError(RuntimeError):
    pass


def _dumps(record: dict) -> str:
    return json.dumps(record, sort_keys=True, allow_nan=False)


def build_dataset(cfg: ExperimentConfig) -> Dataset:
    if cfg.data.path:
        return load_multilabel_file(cfg.data.path)
    return generate_synthetic(cfg.data.synth())


def loss_spec(cfg: ExperimentConfig, name: str) -> LossSpec:
    spec = LossSpec(name)
    if spec.name == "sigmoidF1":
        s = cfg.sigmoidF1
        return LossSpec("sigmoidF1", beta=s.beta, eta=s.eta, scale=s.scale, aggregation=s.aggregation)
    if spec.name == "unboundedF1":
        return LossSpec("unboundedF1", aggregation=cfg.unboundedF1.aggregation)
    if spec.name == "focal":
        return LossSpec("focal", gamma=cfg.focal.gamma)
    return spec


def run_name(loss: str, seed: int) -> str:
    return f"{LossSpec(loss).name}__seed{seed}"


def prepare(cfg: ExperimentConfig, out: Path):
    """Write the effective config and shared splits; returns ``(dataset, splits)``.

    An existing ``splits.json`` is reused, so resumed or repeated invocations
    see the same partition as the first one.
    """
    out.mkdir(parents=True, exist_ok=True)
    config_mod.save(cfg, out / "config.ini")
    stamp = out / "training_hash.txt"
    if stamp.exists():
        if stamp.read_text(encoding="utf-8").strip() != cfg.training_hash():
            raise ReportIntegrityError(
                f"{out} holds runs from a different data/model/training configuration; use a fresh output directory"
            )
    else:
        stamp.write_text(cfg.training_hash() + "\n", encoding="utf-8")
    ds = build_dataset(cfg)
    split_path = out / "splits.json"
    if split_path.exists():
        splits = SplitIndices.from_json(split_path.read_text(encoding="utf-8"))
        if sum(len(a) for a in (splits.train, splits.val, splits.test)) != ds.n:
            raise ReportIntegrityError(f"{split_path} does not partition a dataset of {ds.n} examples")
    else:
        splits = split_indices(ds.n, cfg.data.split, cfg.data.split_seed)
        split_path.write_text(splits.to_json(), encoding="utf-8")
    return ds, splits


def train_one(cfg: ExperimentConfig, train_ds: Dataset, loss: LossSpec, seed: int):
    m = init_head(train_ds.n_features, cfg.model.hidden, train_ds.n_classes, seed)
    opt = Optimizer(cfg.train.optimizer, cfg.train.lr)
    return train(m, train_ds.X, train_ds.Y, loss, opt, cfg.train.epochs, cfg.train.batch_size, seed)


def _write_trace(path: Path, trace) -> None:
    path.write_text("".join(f"{v!r}\n" for v in trace), encoding="utf-8")


def train_runs(cfg: ExperimentConfig, out) -> dict:
    """Train every (loss, seed) pair; returns ``{run_name: "ok" | "failed: ..."}``.

    Runs whose checkpoint already exists are skipped.  A run that diverges
    leaves its trace prefix and a ``.failed`` marker instead of a checkpoint.
    """
    out = Path(out)
    ds, splits = prepare(cfg, out)
    train_ds, _, _ = split(ds, indices=splits)
    (out / "checkpoints").mkdir(exist_ok=True)
    (out / "traces").mkdir(exist_ok=True)
    status = {}
    for name in cfg.run.losses:
        spec = loss_spec(cfg, name)
        for seed in cfg.run.seeds:
            rn = run_name(name, seed)
            ckpt = out / "checkpoints" / f"{rn}.ckpt"
            failed = out / "checkpoints" / f"{rn}.failed"
            if ckpt.exists():
                status[rn] = "ok"
                continue
            if failed.exists():
                status[rn] = "failed: " + failed.read_text(encoding="utf-8").strip()
                continue
            try:
                model, trace = train_one(cfg, train_ds, spec, seed)
            except NonFiniteError as err:
                log.warning("run %s diverged: %s", rn, err)
                _write_trace(out / "traces" / f"{rn}.txt", getattr(err, "trace", []))
                failed.write_text(f"{err}\n", encoding="utf-8")
                status[rn] = f"failed: {err}"
                continue
            _write_trace(out / "traces" / f"{rn}.txt", trace)
            save_checkpoint(model, ckpt, spec)
            status[rn] = "ok"
    return status


def _records_for_model(cfg, model, parts, base: dict) -> list:
    records = []
    for split_name, part in parts:
        scores = predict_scores(model, part.X, cfg.eval.bounding)
        for t in cfg.eval.thresholds:
            rec = dict(base, split=split_name, status="ok")
            rec.update(evaluate(part.Y, scores, t).to_record())
            records.append(rec)
    return records


def evaluate_runs(cfg: ExperimentConfig, out) -> list:
    """Evaluate every checkpoint on the validation and test splits; writes ``runs.jsonl``."""
    out = Path(out)
    ds, splits = prepare(cfg, out)
    _, val_ds, test_ds = split(ds, indices=splits)
    records = []
    for name in cfg.run.losses:
        loss = LossSpec(name).name
        for seed in cfg.run.seeds:
            rn = run_name(name, seed)
            ckpt = out / "checkpoints" / f"{rn}.ckpt"
            failed = out / "checkpoints" / f"{rn}.failed"
            base = {"loss": loss, "seed": int(seed), "config_hash": cfg.hash()}
            if failed.exists():
                records.append(dict(base, status="failed", error=failed.read_text(encoding="utf-8").strip()))
                continue
            if not ckpt.exists():
                raise FileNotFoundError(f"missing checkpoint {ckpt}; run training first")
            model, _ = load_checkpoint(ckpt)
            records.extend(_records_for_model(cfg, model, [("val", val_ds), ("test", test_ds)], base))
    (out / "runs.jsonl").write_text("".join(_dumps(r) + "\n" for r in records), encoding="utf-8")
    return records


def _quantile_stats(values) -> dict:
    # sorted so the result does not depend on record order
    v = np.sort(np.asarray(values, dtype=np.float64))
    q1, med, q3 = np.percentile(v, [25, 50, 75], method="linear")
    return {"mean": float(math.fsum(v) / len(v)), "median": float(med), "iqr": float(q3 - q1)}


def aggregate_runs(records, split_name: str = "test", metrics=METRICS) -> list:
    """Per (loss, threshold, metric) statistics over seeds.

    Losses whose runs all failed yield one record with ``status="all_failed"``.
    """
    losses = []
    for r in records:
        if r["loss"] not in losses:
            losses.append(r["loss"])
    out = []
    for loss in losses:
        mine = [r for r in records if r["loss"] == loss]
        ok = [r for r in mine if r["status"] == "ok" and r["split"] == split_name]
        n_failed = len({r["seed"] for r in mine if r["status"] == "failed"})
        if not ok:
            out.append({"loss": loss, "status": "all_failed", "n_failed": n_failed})
            continue
        for t in sorted({r["threshold"] for r in ok}, reverse=True):
            sel = [r for r in ok if r["threshold"] == t]
            for metric in metrics:
                stats = _quantile_stats([r[metric] for r in sel])
                out.append({"loss": loss, "status": "ok", "split": split_name, "threshold": t,
                            "metric": metric, "n_runs": len(sel), "n_failed": n_failed, **stats})
    return out


def render_table(aggregates, stat: str = "mean") -> str:
    """Losses x metrics table per threshold (values x100); best value per column starred."""
    lines = []
    ok = [a for a in aggregates if a["status"] == "ok"]
    for t in sorted({a["threshold"] for a in ok}, reverse=True):
        rows = {}
        for a in ok:
            if a["threshold"] == t:
                rows.setdefault(a["loss"], {})[a["metric"]] = a[stat]
        n_runs = max(a["n_runs"] for a in ok if a["threshold"] == t)
        lines.append(f"@{t!r}  ({stat} over {n_runs} seed(s), test split, x100)")
        lines.append(f"{'loss':<16}" + "".join(f"{label:>13}" for _, label in TABLE_COLUMNS))
        best = {key: max(r.get(key, -np.inf) for r in rows.values()) for key, _ in TABLE_COLUMNS}
        for loss, row in rows.items():
            cells = []
            for key, _ in TABLE_COLUMNS:
                mark = "*" if row[key] == best[key] else " "
                cells.append(f"{100 * row[key]:>12.3f}{mark}")
            lines.append(f"{loss:<16}" + "".join(cells))
        lines.append("")
    failed = [a["loss"] for a in aggregates if a["status"] == "all_failed"]
    if failed:
        lines.append("excluded (every run diverged): " + ", ".join(failed))
    return "\n".join(lines).rstrip() + "\n"


def best_per_column(aggregates, threshold: float, stat: str = "mean") -> dict:
    """``{metric: [losses attaining the column maximum]}`` for one threshold."""
    ok = [a for a in aggregates if a["status"] == "ok" and a["threshold"] == threshold]
    result = {}
    for key, _ in TABLE_COLUMNS:
        col = {a["loss"]: a[stat] for a in ok if a["metric"] == key}
        top = max(col.values())
        result[key] = sorted(loss for loss, v in col.items() if v == top)
    return result


@dataclass
class RunReport:
    records: list
    aggregates: list
    out: Path
    config_hash: str = ""

    def aggregate(self, loss: str, metric: str, threshold: float, stat: str = "median") -> float:
        for a in self.aggregates:
            if a["status"] == "ok" and a["loss"] == LossSpec(loss).name and a["metric"] == metric \
                    and a["threshold"] == threshold:
                return a[stat]
        raise KeyError(f"no aggregate for {loss}/{metric}@{threshold}")

    def test_values(self, loss: str, metric: str, threshold: float) -> list:
        return [r[metric] for r in self.records if r["loss"] == LossSpec(loss).name and r["status"] == "ok"
                and r["split"] == "test" and r["threshold"] == threshold]


def write_report(records, out) -> RunReport:
    out = Path(out)
    aggregates = aggregate_runs(records)
    (out / "aggregates.jsonl").write_text("".join(_dumps(a) + "\n" for a in aggregates), encoding="utf-8")
    (out / "table.txt").write_text(render_table(aggregates), encoding="utf-8")
    h = records[0].get("config_hash", "") if records else ""
    return RunReport(records, aggregates, out, h)


def load_report(out) -> RunReport:
    """Read a run directory and check stored aggregates against the per-seed records."""
    out = Path(out)
    runs_path = out / "runs.jsonl"
    if not runs_path.exists():
        raise FileNotFoundError(f"no runs found in {out} (expected {runs_path.name})")
    records = [json.loads(line) for line in runs_path.read_text(encoding="utf-8").splitlines() if line]
    agg_path = out / "aggregates.jsonl"
    recomputed = aggregate_runs(records)
    if agg_path.exists():
        stored = [json.loads(line) for line in agg_path.read_text(encoding="utf-8").splitlines() if line]
        if stored != recomputed:
            raise ReportIntegrityError(f"{agg_path} disagrees with aggregates recomputed from {runs_path}")
    h = records[0].get("config_hash", "") if records else ""
    return RunReport(records, recomputed, out, h)


def run_experiment(cfg: ExperimentConfig, out=None) -> RunReport:
    """Train, evaluate and aggregate every (loss, seed) in ``cfg``."""
    cfg.validate()
    out = Path(out if out is not None else cfg.run.output_dir)
    train_runs(cfg, out)
    records = evaluate_runs(cfg, out)
    return write_report(records, out)


@dataclass
class SensitivityGrid:
    """Validation (selection) and test metric per (beta, eta) cell; NaN marks a failed cell."""

    betas: tuple
    etas: tuple
    metric: str
    threshold: float
    values: np.ndarray
    test_values: np.ndarray
    config_hash: str
    failed: list = field(default_factory=list)

    @property
    def best(self):
        """``(beta, eta)`` of the best validation cell; ties go to smaller beta, then smaller eta."""
        best, best_val = None, -np.inf
        for i, j in sorted(np.ndindex(self.values.shape), key=lambda ij: (self.betas[ij[0]], self.etas[ij[1]])):
            v = self.values[i, j]
            if not np.isnan(v) and v > best_val:
                best, best_val = (self.betas[i], self.etas[j]), v
        return best

    def to_csv(self, which: str = "val") -> str:
        grid = self.values if which == "val" else self.test_values
        lines = ["beta\\eta," + ",".join(repr(float(e)) for e in self.etas)]
        for i, b in enumerate(self.betas):
            cells = ["" if np.isnan(v) else repr(float(v)) for v in grid[i]]
            lines.append(repr(float(b)) + "," + ",".join(cells))
        return "\n".join(lines) + "\n"

    @staticmethod
    def read_csv(text: str):
        """Parse a grid CSV back into ``(betas, etas, values)``; empty cells become NaN."""
        rows = [line.split(",") for line in text.strip().splitlines()]
        etas = tuple(float(e) for e in rows[0][1:])
        betas = tuple(float(r[0]) for r in rows[1:])
        values = np.array([[float(c) if c else np.nan for c in r[1:]] for r in rows[1:]])
        return betas, etas, values


def grid_search(cfg: ExperimentConfig, betas=None, etas=None, metric=None, out=None) -> SensitivityGrid:
    """One sigmoidF1 training run per (beta, eta) at ``grid.seed`` on the shared splits."""
    cfg.validate()
    betas = tuple(float(b) for b in (betas if betas is not None else cfg.grid.betas))
    etas = tuple(float(e) for e in (etas if etas is not None else cfg.grid.etas))
    metric = metric or cfg.grid.metric
    if not betas or not etas:
        raise ValueError("beta and eta grids must be non-empty")
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}; expected one of {METRICS}")
    out = Path(out if out is not None else cfg.run.output_dir)
    ds, splits = prepare(cfg, out)
    train_ds, val_ds, test_ds = split(ds, indices=splits)
    t = cfg.grid.threshold
    values = np.full((len(betas), len(etas)), np.nan)
    test_values = np.full_like(values, np.nan)
    failed = []
    cells = []
    for i, b in enumerate(betas):
        for j, e in enumerate(etas):
            cell_cfg = config_mod.replace(cfg, {"sigmoidF1.beta": b, "sigmoidF1.eta": e})
            spec = loss_spec(cell_cfg, "sigmoidF1")
            rec = {"beta": b, "eta": e, "seed": cfg.grid.seed, "threshold": t, "metric": metric}
            try:
                model, _ = train_one(cell_cfg, train_ds, spec, cfg.grid.seed)
            except NonFiniteError as err:
                failed.append((b, e))
                cells.append(dict(rec, status="failed", error=str(err)))
                continue
            val = evaluate(val_ds.Y, predict_scores(model, val_ds.X, cfg.eval.bounding), t)
            test = evaluate(test_ds.Y, predict_scores(model, test_ds.X, cfg.eval.bounding), t)
            values[i, j] = getattr(val, metric)
            test_values[i, j] = getattr(test, metric)
            cells.append(dict(rec, status="ok", val=values[i, j], test=test_values[i, j]))
    grid = SensitivityGrid(betas, etas, metric, t, values, test_values, cfg.hash(), failed)
    (out / "grid.csv").write_text(grid.to_csv("val"), encoding="utf-8")
    (out / "grid_test.csv").write_text(grid.to_csv("test"), encoding="utf-8")
    (out / "grid.jsonl").write_text("".join(_dumps(c) + "\n" for c in cells), encoding="utf-8")
    best = grid.best
    summary = {"metric": metric, "threshold": t, "attempted": len(betas) * len(etas),
               "emitted": len(betas) * len(etas) - len(failed), "failed": len(failed),
               "best_beta": best[0] if best else None, "best_eta": best[1] if best else None,
               "config_hash": grid.config_hash}
    (out / "grid_best.json").write_text(_dumps(summary) + "\n", encoding="utf-8")
    return grid
