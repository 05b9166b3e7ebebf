"""End-to-end grid experiment: split, SPPMI, train every (mode, d, alpha)
cell, pick alpha on validation, report on test."""

from __future__ import annotations

import csv
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

from .core import Hyperparams, read_triplets
from .errors import CemfError, ParameterError
from .eval import DEFAULT_N, EvalReport, evaluate
from .ingest import SplitDataset, filter_activity, load_dataset, split_per_user, write_split
from .io import dump_json
from .solver import TrainConfig, fit
from .sppmi import build_sppmi, count_cooccurrences, sppmi_sparsity

_log = logging.getLogger(__name__)


@dataclass
class DatasetSpec:
    kind: str = "onlineretail"
    input: str | None = None
    # a directory written by `cemf prepare`; bypasses loading and splitting
    prepared: str | None = None
    rating_threshold: float = 4.0
    min_users_per_item: int = 0
    min_items_per_user: int = 0
    binarize: bool = False
    test_frac: float = 0.2
    val_frac: float = 0.1


@dataclass
class ExperimentConfig:
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    out: str = "experiment"
    modes: list[str] = field(default_factory=lambda: ["wmf", "cemf"])
    d: list[int] = field(default_factory=lambda: [30])
    alpha: list[float] = field(default_factory=lambda: [1.0, 10.0, 40.0, 100.0])
    lam: float = 0.01
    k: int = 1
    iterations: int = 20
    init_scale: float = 0.01
    tol: float | None = None
    n: list[int] = field(default_factory=lambda: list(DEFAULT_N))
    select_n: int = 10
    seeds: list[int] = field(default_factory=lambda: [0])
    workers: int = 1
    figures: bool = True

    def validate(self) -> None:
        if not (self.modes and self.d and self.alpha and self.seeds and self.n):
            raise ParameterError("experiment grid must be non-empty")
        for m in self.modes:
            if m not in ("wmf", "cemf"):
                raise ParameterError(f"unknown mode {m!r}")
        ds = self.dataset
        path = ds.prepared or ds.input
        if path is None:
            raise ParameterError("dataset needs 'input' or 'prepared'")
        if not os.path.exists(path):
            raise ParameterError(f"dataset path does not exist: {path}")
        if self.select_n not in self.n:
            self.n = sorted(set(self.n) | {self.select_n})

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        return d

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        raw = dict(raw)
        ds = DatasetSpec(**raw.pop("dataset", {}))
        if "lambda" in raw:
            raw["lam"] = raw.pop("lambda")
        known = set(cls.__dataclass_fields__)
        unknown = set(raw) - known
        if unknown:
            raise ParameterError(f"unknown experiment keys: {sorted(unknown)}")
        cfg = cls(dataset=ds, **raw)
        for name in ("d", "alpha", "n", "seeds", "modes"):
            val = getattr(cfg, name)
            if not isinstance(val, list):
                setattr(cfg, name, [val])
        return cfg


def _load_split(cfg: ExperimentConfig, seed: int, data_dir: str) -> SplitDataset:
    ds = cfg.dataset
    if ds.prepared:
        from .ingest import read_id_map

        def rd(name):
            return read_triplets(os.path.join(ds.prepared, name))

        users = read_id_map(os.path.join(ds.prepared, "users.map"))
        items = read_id_map(os.path.join(ds.prepared, "items.map"))
        return SplitDataset(rd("train.tsv"), rd("val.tsv"), rd("test.tsv"), users, items, {"prepared": ds.prepared})
    events = load_dataset(ds.kind, ds.input, ds.rating_threshold)
    events = filter_activity(events, ds.min_users_per_item, ds.min_items_per_user, ds.binarize)
    split = split_per_user(events, ds.test_frac, ds.val_frac, seed)
    write_split(split, data_dir, {"dataset": asdict(ds)})
    return split


def _train_cell(args):
    mode, d, alpha, seed, cfg, train, validation, S = args
    hp = Hyperparams(
        d=d, alpha=alpha, lam=cfg.lam, k=cfg.k, n_iterations=cfg.iterations,
        init_scale=cfg.init_scale, seed=seed,
    )
    try:
        model, _ = fit(train, S if mode == "cemf" else None, TrainConfig(hp, mode, tol=cfg.tol))
        val = evaluate(model, train, validation, cfg.n)
    except CemfError as exc:
        return {"error": exc.to_dict()}, None
    return {"validation": val.to_dict()}, model


def _cell_score(result, n) -> float:
    if "error" in result:
        return -math.inf
    v = result["validation"]["overall"]["recall"][str(n)]
    return -math.inf if v is None else v


def run_experiment(cfg: ExperimentConfig) -> str:
    """Run the full grid and write reports under ``cfg.out``. Returns the
    output directory."""
    cfg.validate()
    os.makedirs(cfg.out, exist_ok=True)
    dump_json(cfg.to_dict(), os.path.join(cfg.out, "config.json"))
    summary: dict = {"config": cfg.to_dict(), "runs": []}

    for seed in cfg.seeds:
        seed_dir = os.path.join(cfg.out, f"seed_{seed}")
        split = _load_split(cfg, seed, os.path.join(seed_dir, "data"))
        train, validation, test = split.train, split.validation, split.test
        S = None
        if "cemf" in cfg.modes:
            S = build_sppmi(count_cooccurrences(train), cfg.k)
            S.write(os.path.join(seed_dir, "sppmi.tsv"))
        cells = [(m, d, a) for m in cfg.modes for d in cfg.d for a in cfg.alpha]
        jobs = [(m, d, a, seed, cfg, train, validation, S) for m, d, a in cells]
        if cfg.workers > 1:
            with ProcessPoolExecutor(cfg.workers) as pool:
                outcomes = list(pool.map(_train_cell, jobs))
        else:
            outcomes = [_train_cell(j) for j in jobs]

        grid = []
        for (m, d, a), (res, _) in zip(cells, outcomes):
            grid.append({"mode": m, "d": d, "alpha": a, **res})
        finals: dict[tuple[str, int], EvalReport] = {}
        for m in cfg.modes:
            for d in cfg.d:
                idx = [k for k, c in enumerate(cells) if c[0] == m and c[1] == d]
                best = max(idx, key=lambda k: (_cell_score(outcomes[k][0], cfg.select_n), -k))
                res, model = outcomes[best]
                entry = {"seed": seed, "mode": m, "d": d, "alpha": cells[best][2]}
                if model is None:
                    entry["error"] = res.get("error")
                    summary["runs"].append(entry)
                    continue
                rep = evaluate(model, train, test, cfg.n, exclude=validation)
                rep.meta = {
                    "seed": seed, "mode": m, "hyperparams": model.hyperparams.to_dict(),
                    "selected_by": f"validation recall@{cfg.select_n}",
                }
                cell_dir = os.path.join(seed_dir, f"{m}_d{d}")
                model.save(os.path.join(cell_dir, "model"))
                dump_json(rep.to_dict(), os.path.join(cell_dir, "report.json"))
                rep.write_csv(os.path.join(cell_dir, "report.csv"))
                finals[(m, d)] = rep
                entry["test"] = rep.to_dict()
                summary["runs"].append(entry)
        dump_json(
            {
                "seed": seed,
                "grid": grid,
                "stats": split.stats(),
                "sppmi": None if S is None else {"pairs": S.n_pairs, "sparsity_pct": sppmi_sparsity(S)},
            },
            os.path.join(seed_dir, "grid.json"),
        )
        if cfg.figures and finals:
            from .plotting import render_report_figures

            for d in cfg.d:
                reps = {m: finals[(m, d)] for m in cfg.modes if (m, d) in finals}
                if reps:
                    render_report_figures(reps, seed_dir, stem=f"compare_d{d}", n=cfg.select_n)

    summary["comparison"] = _compare(summary["runs"], cfg)
    dump_json(summary, os.path.join(cfg.out, "summary.json"))
    _write_summary_csv(summary["runs"], cfg, os.path.join(cfg.out, "summary.csv"))
    return cfg.out


def _compare(runs, cfg) -> list[dict]:
    """CEMF minus WMF per (seed, d, n) where both succeeded."""
    by = {(r["seed"], r["mode"], r["d"]): r for r in runs if "test" in r}
    out = []
    for seed in cfg.seeds:
        for d in cfg.d:
            a, b = by.get((seed, "cemf", d)), by.get((seed, "wmf", d))
            if not (a and b):
                continue
            for n in cfg.n:
                row = {"seed": seed, "d": d, "n": n}
                for metric in ("precision", "recall"):
                    ca = a["test"]["overall"][metric][str(n)]
                    wb = b["test"]["overall"][metric][str(n)]
                    row[f"{metric}_cemf"] = ca
                    row[f"{metric}_wmf"] = wb
                    row[f"{metric}_delta"] = None if ca is None or wb is None else ca - wb
                out.append(row)
    return out


def _write_summary_csv(runs, cfg, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["seed", "mode", "d", "alpha", "group", "n", "metric", "value"])
        for r in runs:
            if "test" not in r:
                continue
            t = r["test"]
            for group, ms in [("all", t["overall"]), *t["groups"].items()]:
                for n in cfg.n:
                    for metric in ("precision", "recall"):
                        v = ms[metric][str(n)]
                        w.writerow([r["seed"], r["mode"], r["d"], r["alpha"], group, n, metric,
                                    "" if v is None else f"{v:.10g}"])

