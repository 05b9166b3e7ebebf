"""``cemf`` command line: prepare, sppmi, train, evaluate, recommend and
experiment.

Every flag can also be given in a TOML config file (``--config``) under a
table named after the subcommand; flags win over the file.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from .errors import CemfError, ParameterError

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

_log = logging.getLogger("cemf")


def _int_list(text):
    if isinstance(text, list):
        return [int(x) for x in text]
    return [int(x) for x in str(text).split(",") if x.strip()]


def _float_list(text):
    if isinstance(text, list):
        return [float(x) for x in text]
    return [float(x) for x in str(text).split(",") if x.strip()]


# (flag, dest, type, default, required, help); default None means "unset"
_SPECS = {
    "prepare": [
        ("--dataset", "dataset", str, None, True, "movielens | tasteprofile | onlineretail"),
        ("--input", "input", str, None, True, "raw dataset file"),
        ("--out", "out", str, None, True, "output directory"),
        ("--test-frac", "test_frac", float, 0.2, False, "per-user test share"),
        ("--val-frac", "val_frac", float, 0.1, False, "validation share of the remainder"),
        ("--seed", "seed", int, 0, False, "split seed"),
        ("--min-users-per-item", "min_users_per_item", int, 0, False, "drop rarer items"),
        ("--min-items-per-user", "min_items_per_user", int, 0, False, "drop less active users"),
        ("--rating-threshold", "rating_threshold", float, 4.0, False, "MovieLens positive cutoff"),
    ],
    "sppmi": [
        ("--train", "train", str, None, True, "training triplet file"),
        ("--k", "k", int, 1, False, "shift: subtract ln k"),
        ("--out", "out", str, None, True, "output SPPMI triplet file"),
        ("--pair-cap", "pair_cap", int, None, False, "subsample users above this many items"),
    ],
    "train": [
        ("--train", "train", str, None, True, "training triplet file"),
        ("--sppmi", "sppmi", str, None, False, "SPPMI file (cemf mode)"),
        ("--mode", "mode", str, "cemf", False, "wmf | cemf"),
        ("--d", "d", int, 30, False, "latent dimension"),
        ("--alpha", "alpha", float, 1.0, False, "confidence slope"),
        ("--lambda", "lam", float, 0.01, False, "L2 regularization"),
        ("--iters", "iters", int, 20, False, "ALS sweeps"),
        ("--seed", "seed", int, 0, False, "initialization seed"),
        ("--init-scale", "init_scale", float, 0.01, False, "initial factor std"),
        ("--tol", "tol", float, None, False, "stop when relative loss decrease falls below"),
        ("--item-sweep", "item_sweep", str, "gauss-seidel", False, "gauss-seidel | jacobi"),
        ("--out", "out", str, None, True, "model directory"),
    ],
    "evaluate": [
        ("--model", "model", str, None, True, "model directory"),
        ("--train", "train", str, None, True, "training triplet file"),
        ("--test", "test", str, None, True, "ground-truth triplet file"),
        ("--val", "val", str, None, False, "validation file; its items are excluded"),
        ("--n", "n", _int_list, "5,10,20,50,100", False, "comma-separated cutoffs"),
        ("--out", "out", str, "report.json", False, "report path; CSV and figures go alongside"),
    ],
    "recommend": [
        ("--model", "model", str, None, True, "model directory"),
        ("--train", "train", str, None, True, "training triplet file"),
        ("--val", "val", str, None, False, "also exclude these items"),
        ("--users", "users", _int_list, None, False, "user indices (default: all)"),
        ("--n", "n", int, 10, False, "list length"),
        ("--user-map", "user_map", str, None, False, "users.map for printing keys"),
        ("--item-map", "item_map", str, None, False, "items.map for printing keys"),
        ("--out", "out", str, None, False, "TSV output (default stdout)"),
    ],
    "experiment": [
        ("--out", "out", str, None, False, "experiment directory"),
        ("--workers", "workers", int, None, False, "grid cells run concurrently"),
    ],
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cemf", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="TOML config file")
    parser.add_argument("--log-level", default="WARNING")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, specs in _SPECS.items():
        p = sub.add_parser(name)
        for flag, dest, typ, _, _, help_ in specs:
            p.add_argument(flag, dest=dest, type=typ, default=None, help=help_)
        if name == "prepare":
            p.add_argument("--binarize", action="store_true", default=None)
        if name == "evaluate":
            p.add_argument("--no-figures", dest="figures", action="store_false", default=None)
    return parser


def _merge(command: str, args: argparse.Namespace, config: dict) -> dict:
    section = dict(config.get(command, {}))
    # accept dashed keys in the file as well
    section = {k.replace("-", "_"): v for k, v in section.items()}
    if "lambda" in section:
        section["lam"] = section.pop("lambda")
    merged = {}
    for flag, dest, typ, default, required, _ in _SPECS[command]:
        val = getattr(args, dest)
        if val is None and dest in section:
            val = section[dest]
            if typ in (_int_list, _float_list):
                val = typ(val)
        if val is None:
            val = typ(default) if isinstance(default, str) and typ is _int_list else default
        if val is None and required:
            raise ParameterError(f"{command}: missing required option {flag}")
        merged[dest] = val
    for extra in ("binarize", "figures"):
        if hasattr(args, extra):
            val = getattr(args, extra)
            merged[extra] = section.get(extra, extra == "figures") if val is None else val
    return merged


def cmd_prepare(o: dict) -> dict:
    from .ingest import filter_activity, load_dataset, split_per_user, write_split

    events = load_dataset(o["dataset"], o["input"], o["rating_threshold"])
    raw = len(events)
    events = filter_activity(events, o["min_users_per_item"], o["min_items_per_user"], o["binarize"])
    split = split_per_user(events, o["test_frac"], o["val_frac"], o["seed"])
    manifest = {"command": "prepare", "params": o, "raw_records": raw, "rejected": events.rejected}
    info = write_split(split, o["out"], manifest)
    print(json.dumps(info["stats"], sort_keys=True))
    return info


def cmd_sppmi(o: dict) -> dict:
    from .core import read_triplets
    from .sppmi import build_sppmi, count_cooccurrences, sppmi_sparsity

    train = read_triplets(o["train"])
    stats = count_cooccurrences(train, pair_cap=o["pair_cap"])
    S = build_sppmi(stats, o["k"])
    S.write(o["out"])
    summary = {
        "n_items": S.n_items,
        "nnz_pairs": S.n_pairs,
        "cooccurring_pairs": int(stats.pairs.nnz),
        "total_pairs": stats.total,
        "sparsity_pct": sppmi_sparsity(S) if S.n_items >= 2 else None,
        "k": o["k"],
        "log": "natural",
    }
    print(json.dumps(summary, sort_keys=True))
    return summary


def cmd_train(o: dict) -> dict:
    from .core import Hyperparams, read_triplets
    from .solver import TrainConfig, fit
    from .sppmi import SppmiMatrix

    train = read_triplets(o["train"])
    S = None
    if o["mode"] == "cemf":
        if not o["sppmi"]:
            raise ParameterError("cemf mode needs --sppmi")
        S = SppmiMatrix.read(o["sppmi"])
    hp = Hyperparams(
        d=o["d"], alpha=o["alpha"], lam=o["lam"], n_iterations=o["iters"],
        init_scale=o["init_scale"], seed=o["seed"],
    )
    model, trace = fit(train, S, TrainConfig(hp, o["mode"], o["item_sweep"], o["tol"]))
    model.save(o["out"])
    out = {"sweeps": len(trace), "final_loss": trace[-1].to_dict()}
    print(json.dumps(out, sort_keys=True))
    return out


def cmd_evaluate(o: dict) -> dict:
    from .core import FactorModel, read_triplets
    from .eval import evaluate
    from .io import dump_json

    model = FactorModel.load(o["model"])
    train = read_triplets(o["train"])
    test = read_triplets(o["test"])
    val = read_triplets(o["val"]) if o["val"] else None
    report = evaluate(model, train, test, o["n"], exclude=val)
    report.meta = {"model": o["model"], "mode": model.mode, "hyperparams": model.hyperparams.to_dict()}
    out = o["out"]
    stem, _ = os.path.splitext(out)
    os.makedirs(os.path.dirname(os.path.abspath(out)), exist_ok=True)
    dump_json(report.to_dict(), out)
    report.write_csv(stem + ".csv")
    if o["figures"]:
        from .plotting import render_report_figures

        render_report_figures({model.mode: report}, os.path.dirname(os.path.abspath(out)),
                              stem=os.path.basename(stem))
    print(json.dumps({"precision": report.precision, "recall": report.recall}, sort_keys=True))
    return report.to_dict()


def cmd_recommend(o: dict) -> None:
    from .core import FactorModel, read_triplets
    from .eval import recommend_all
    from .ingest import read_id_map

    model = FactorModel.load(o["model"])
    train = read_triplets(o["train"])
    val = read_triplets(o["val"]) if o["val"] else None
    users = o["users"] if o["users"] is not None else range(train.n_users)
    recs = recommend_all(model, train, o["n"], users, exclude=val)
    ukeys = read_id_map(o["user_map"]) if o["user_map"] else None
    ikeys = read_id_map(o["item_map"]) if o["item_map"] else None
    fh = open(o["out"], "w", encoding="utf-8") if o["out"] else sys.stdout
    try:
        fh.write("user\trank\titem\tscore\n")
        for u, items in recs.items():
            scores = model.scores(u)
            for rank, i in enumerate(items.tolist(), start=1):
                uk = ukeys[u] if ukeys else u
                ik = ikeys[i] if ikeys else i
                fh.write(f"{uk}\t{rank}\t{ik}\t{scores[i]:.10g}\n")
    finally:
        if fh is not sys.stdout:
            fh.close()


def cmd_experiment(o: dict, config: dict) -> None:
    from .experiment import ExperimentConfig, run_experiment

    raw = dict(config.get("experiment", {}))
    if o["out"] is not None:
        raw["out"] = o["out"]
    if o["workers"] is not None:
        raw["workers"] = o["workers"]
    if "dataset" not in raw and "dataset" in config:
        raw["dataset"] = config["dataset"]
    out = run_experiment(ExperimentConfig.from_dict(raw))
    print(json.dumps({"out": out}))


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), format="%(levelname)s %(name)s: %(message)s")
    try:
        config = {}
        if args.config:
            with open(args.config, "rb") as fh:
                config = tomllib.load(fh)
        if args.command == "experiment":
            cmd_experiment(_merge("experiment", args, config), config)
        else:
            opts = _merge(args.command, args, config)
            globals()[f"cmd_{args.command}"](opts)
    except CemfError as exc:
        print(json.dumps(exc.to_dict()), file=sys.stderr)
        return 1
    except (OSError, tomllib.TOMLDecodeError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
