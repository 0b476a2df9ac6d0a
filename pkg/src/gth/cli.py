"""Command-line driver: ``gth {synth,train,encode,eval,bench}``.

Settings resolve as command-line flag > ``--config`` file > built-in
default. Config files hold UTF-8 ``key=value`` lines with ``#`` comments;
keys use underscores (``outer_iters``), flags use dashes
(``--outer-iters``). Unknown keys are rejected. Failures print a single JSON
line ``{"error": ..., "message": ...}`` to stderr and exit non-zero.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields
from datetime import datetime, timezone
from functools import lru_cache
from pathlib import Path

import numpy as np

from . import data, serialize
from .core import GthModel, TrainConfig
from .errors import ConfigError, GthError
from .pipeline import GTH_METHODS, METHODS, codes, evaluate_model, fit
from .retrieval import pack, save_codes

log = logging.getLogger("gth")

BIT_GRID = (16, 24, 32, 48, 64)
FRACTION_GRID = (0.1, 0.3, 0.5, 0.7)
LAMBDA_GRID = (0.0001, 0.001, 0.01, 0.1, 1.0, 10.0)


# -- typed settings -----------------------------------------------------------

def _bool(raw) -> bool:
    low = str(raw).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def _list(conv):
    def parse(raw):
        if isinstance(raw, (list, tuple)):
            return [conv(v) for v in raw]
        return [conv(v) for v in str(raw).replace(" ", "").split(",") if v]
    parse.__name__ = f"list_of_{conv.__name__}"
    return parse


def _str_list(raw):
    return _list(str)(raw)


_SYNTH_KEYS = {
    "d": (int, 128), "p": (int, 10), "classes": (int, 5), "n_s": (int, 2000),
    "n_t": (int, 200), "angle": (float, 0.3), "noise_sigma": (float, 0.1),
    "mean_scale": (float, 1.0), "min_sep": (float, 1.0), "latent_sigma": (float, 1.0),
}
_TRAIN_KEYS = {
    "lambda1": (float, 0.1), "lambda2": (float, 1.0), "outer_iters": (int, 30),
    "inner_iters": (int, 5), "tau0": (float, 0.1), "q": (float, 0.8), "c": (float, 8.0),
    "stiefel_mode": (str, "right_cayley"), "tol_w": (float, 1e-5), "normalize": (_bool, False),
    "noda_method": (str, "itq"), "itq_iters": (int, 50),
}
_DATA_KEYS = {"labels": (_bool, True), "header": (_bool, False)}

COMMAND_KEYS = {
    "synth": {**_SYNTH_KEYS, "seed": (int, 0), "n_query": (int, 0)},
    "train": {**_TRAIN_KEYS, **_DATA_KEYS, "target": (str, None), "source": (str, None),
              "method": (str, "gth-h"), "variant": (str, "h"), "bits": (int, 32), "seed": (int, 0)},
    "encode": {**_DATA_KEYS, "model": (str, None), "data": (str, None), "domain": (str, "target")},
    "eval": {**_DATA_KEYS, "model": (str, None), "query": (str, None), "db": (str, None),
             "domain": (str, "target"), "ks": (_list(int), [10, 50, 100])},
    "bench": {**_SYNTH_KEYS, **_TRAIN_KEYS, **_DATA_KEYS,
              "target": (str, None), "source": (str, None), "n_query": (int, 100),
              "methods": (_str_list, ["gth-g", "gth-h", "noda"]), "bits": (_list(int), [32]),
              "seeds": (_list(int), [0]), "target_fractions": (_list(float), []),
              "lambda_grid": (_list(float), []), "jobs": (int, 1),
              "ks": (_list(int), [10, 50, 100])},
}


def read_config_file(path) -> dict:
    out = {}
    text = Path(path).read_text(encoding="utf-8")
    for n, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, val = line.partition("=")
        if not sep:
            raise ConfigError(f"{path}:{n}: expected key=value")
        out[key.strip()] = val.strip()
    return out


def resolve(command: str, file_values: dict, flag_values: dict) -> dict:
    keys = COMMAND_KEYS[command]
    unknown = sorted(set(file_values) - set(keys))
    if unknown:
        raise ConfigError(f"unknown {command} config key(s): {', '.join(unknown)}")
    eff = {k: default for k, (_, default) in keys.items()}
    for source in (file_values, flag_values):
        for key, raw in source.items():
            if raw is None:
                continue
            conv = keys[key][0]
            try:
                eff[key] = conv(raw)
            except ValueError as exc:
                raise ConfigError(f"bad value for {key}: {exc}") from None
    return eff


def _require(eff: dict, *keys):
    missing = [k for k in keys if eff.get(k) in (None, "")]
    if missing:
        raise ConfigError(f"missing required setting(s): {', '.join(missing)}")


def _echo(eff: dict) -> str:
    def fmt(v):
        if isinstance(v, bool):
            return "true" if v else "false"
        if isinstance(v, (list, tuple)):
            return ",".join(fmt(x) for x in v)
        return repr(v) if isinstance(v, float) else str(v)
    return "".join(f"{k}={fmt(v)}\n" for k, v in sorted(eff.items()) if v is not None)


def _stamp(args) -> dict:
    if args.no_timestamp:
        return {}
    return {"created": datetime.now(timezone.utc).isoformat(timespec="seconds")}


def _load(path, eff) -> data.Dataset:
    return data.load(path, has_labels=eff["labels"], header=eff["header"])


def _train_config(eff: dict, bits: int, seed: int, variant: str = "h") -> TrainConfig:
    names = {f.name for f in fields(TrainConfig)}
    kw = {k: v for k, v in eff.items() if k in names and k not in ("bits", "seed", "variant")}
    return TrainConfig(bits=bits, seed=seed, variant=variant, **kw)


def _synth_config(eff: dict, seed: int) -> data.SynthConfig:
    return data.SynthConfig(seed=seed, **{k: eff[k] for k in _SYNTH_KEYS})


def _write_csv(path: Path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    path.write_text(buf.getvalue())


# -- commands -----------------------------------------------------------------

def cmd_synth(eff: dict, out: Path, args) -> None:
    cfg = _synth_config(eff, eff["seed"])
    source, target = data.synth(cfg)
    out.mkdir(parents=True, exist_ok=True)
    data.save_fbin(source, out / "source.fbin")
    if eff["n_query"] > 0:
        target, query = data.split(target, eff["n_query"], eff["seed"])
        data.save_fbin(query, out / "query.fbin")
    data.save_fbin(target, out / "target.fbin")
    stamp = _stamp(args)
    header = "".join(f"# {k}: {v}\n" for k, v in stamp.items())
    (out / "manifest.txt").write_text("# gth synth manifest; replay with --config\n" + header + _echo(eff))
    log.info("wrote synthetic domains to %s", out)


def cmd_train(eff: dict, out: Path, args) -> None:
    method = eff["method"]
    variant = eff["variant"]
    if method == "gth":
        method = f"gth-{variant}"
    if method not in METHODS:
        raise ConfigError(f"unknown method {method!r}; expected one of {METHODS + ('gth',)}")
    _require(eff, "target")
    target = _load(eff["target"], eff)
    source = None
    if method == "noda":
        if eff["source"]:
            log.info("method=noda ignores the source data at %s", eff["source"])
    else:
        _require(eff, "source")
        source = _load(eff["source"], eff)
    cfg = _train_config(eff, eff["bits"], eff["seed"], method[-1] if method in GTH_METHODS else "h")
    model = fit(method, target, source, cfg, noda_method=eff["noda_method"], itq_iters=eff["itq_iters"])
    out.mkdir(parents=True, exist_ok=True)
    name = "model.gthm" if isinstance(model, GthModel) else "model.base"
    serialize.save(model, out / name)
    if isinstance(model, GthModel):
        _write_csv(out / "history.csv", ["iteration", "objective", "max_dw"],
                   [(i + 1, repr(h.objective), repr(h.max_dw)) for i, h in enumerate(model.history)])
    stamp = "".join(f"# {k}: {v}\n" for k, v in _stamp(args).items())
    (out / "train_config.txt").write_text(stamp + _echo({**eff, "method": method}))
    log.info("trained %s (%d bits) -> %s", method, cfg.bits, out / name)


def cmd_encode(eff: dict, out: Path, args) -> None:
    _require(eff, "model", "data")
    model = serialize.load(eff["model"])
    ds = _load(eff["data"], eff)
    out.mkdir(parents=True, exist_ok=True)
    save_codes(pack(codes(model, ds.features, eff["domain"])), out / "codes.gthc")


def cmd_eval(eff: dict, out: Path, args) -> None:
    _require(eff, "model", "query", "db")
    model = serialize.load(eff["model"])
    query, db = _load(eff["query"], eff), _load(eff["db"], eff)
    if query.labels is None or db.labels is None:
        raise GthError("evaluation requires labelled query and database files")
    report = evaluate_model(model, query, db, eff["ks"], eff["domain"])
    out.mkdir(parents=True, exist_ok=True)
    extra = {"config": {k: v for k, v in eff.items()}, **_stamp(args)}
    (out / "report.json").write_text(report.to_json(extra))
    (out / "pr_radius.csv").write_text(report.pr_csv())
    (out / "pr_at_k.csv").write_text(report.at_k_csv())
    log.info("MAP=%.4f over %d queries (%d excluded)", report.map, report.n_queries, report.n_excluded)


@dataclass(frozen=True)
class Cell:
    method: str
    bits: int
    seed: int
    fraction: float | None
    lambda1: float | None
    lambda2: float | None


def bench_cells(eff: dict) -> list[Cell]:
    """Grid in fixed order: method, bits, seed, target fraction, lambda1, lambda2."""
    fractions = eff["target_fractions"] or [None]
    grid = eff["lambda_grid"]
    cells = []
    for method in eff["methods"]:
        if method not in METHODS:
            raise ConfigError(f"unknown method {method!r}")
        lambdas = [(a, b) for a in grid for b in grid] if (grid and method in GTH_METHODS) else [(None, None)]
        for bits in eff["bits"]:
            for seed in eff["seeds"]:
                for frac in fractions:
                    for l1, l2 in lambdas:
                        cells.append(Cell(method, bits, seed, frac, l1, l2))
    return cells


@lru_cache(maxsize=8)
def _bench_data(eff_items: tuple, seed: int):
    eff = dict(eff_items)
    if eff["target"]:
        target = _load(eff["target"], eff)
        source = _load(eff["source"], eff) if eff["source"] else None
    else:
        source, target = data.synth(_synth_config(eff, seed))
    train_t, query = data.split(target, eff["n_query"], seed)
    return source, train_t, query


def _freeze(eff: dict) -> tuple:
    return tuple(sorted((k, tuple(v) if isinstance(v, list) else v) for k, v in eff.items()))


def run_cell(eff_items: tuple, cell: Cell) -> dict:
    eff = dict(eff_items)
    row = {"method": cell.method, "bits": cell.bits, "seed": cell.seed,
           "target_fraction": cell.fraction, "lambda1": cell.lambda1, "lambda2": cell.lambda2}
    try:
        source, train_t, query = _bench_data(eff_items, cell.seed)
        fit_t = data.subsample(train_t, cell.fraction, cell.seed) if cell.fraction else train_t
        local = dict(eff)
        if cell.lambda1 is not None:
            local["lambda1"], local["lambda2"] = cell.lambda1, cell.lambda2
        variant = cell.method[-1] if cell.method in GTH_METHODS else "h"
        cfg = _train_config(local, cell.bits, cell.seed, variant)
        model = fit(cell.method, fit_t, source, cfg, noda_method=eff["noda_method"],
                    itq_iters=eff["itq_iters"])
        rep = evaluate_model(model, query, train_t, eff["ks"])
        row.update(status="ok", reason="", map=rep.map,
                   **{f"p@{k}": v for k, v in rep.precision_at_k},
                   **{f"r@{k}": v for k, v in rep.recall_at_k})
    except Exception as exc:  # a failed cell is recorded, the sweep continues
        row.update(status="failed", reason=f"{type(exc).__name__}: {exc}", map=None)
    return row


def _mean_std(vals):
    if not vals:
        return None, None
    arr = np.asarray(vals)
    return float(arr.mean()), float(arr.std(ddof=1)) if arr.size > 1 else 0.0


def run_bench(eff: dict, jobs: int = 1) -> dict:
    cells = bench_cells(eff)
    frozen = _freeze(eff)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(run_cell, [frozen] * len(cells), cells))
    else:
        rows = [run_cell(frozen, c) for c in cells]
    groups: dict = {}
    for row in rows:
        key = (row["method"], row["bits"], row["lambda1"], row["lambda2"], row["target_fraction"])
        groups.setdefault(key, []).append(row)
    aggregates = []
    for (method, bits, l1, l2, frac), members in groups.items():
        maps = [m["map"] for m in members if m["status"] == "ok"]
        mean, std = _mean_std(maps)
        aggregates.append({"method": method, "bits": bits, "lambda1": l1, "lambda2": l2,
                           "target_fraction": frac, "map_mean": mean, "map_std": std,
                           "n_ok": len(maps), "n_failed": len(members) - len(maps)})
    return {"cells": rows, "aggregates": aggregates}


def _cell_str(v):
    if v is None:
        return ""
    return repr(v) if isinstance(v, float) else str(v)


def cmd_bench(eff: dict, out: Path, args) -> None:
    if eff["jobs"] < 1:
        raise ConfigError("jobs must be >= 1")
    result = run_bench(eff, eff["jobs"])
    out.mkdir(parents=True, exist_ok=True)
    ks = eff["ks"]
    cols = (["method", "bits", "seed", "target_fraction", "lambda1", "lambda2", "status", "map"]
            + [f"p@{k}" for k in ks] + [f"r@{k}" for k in ks] + ["reason"])
    _write_csv(out / "cells.csv", cols, [[_cell_str(r.get(c)) for c in cols] for r in result["cells"]])

    fractions = eff["target_fractions"] or [None]
    wide_cols = ["method", "bits", "lambda1", "lambda2"]
    for f in fractions:
        tag = "all" if f is None else repr(f)
        wide_cols += [f"map_mean_f{tag}", f"map_std_f{tag}", f"n_ok_f{tag}"]
    wide: dict = {}
    for agg in result["aggregates"]:
        key = (agg["method"], agg["bits"], agg["lambda1"], agg["lambda2"])
        wide.setdefault(key, {})[agg["target_fraction"]] = agg
    rows = []
    for key, per_frac in wide.items():
        row = list(key)
        for f in fractions:
            agg = per_frac.get(f, {})
            row += [agg.get("map_mean"), agg.get("map_std"), agg.get("n_ok", 0)]
        rows.append([_cell_str(v) for v in row])
    _write_csv(out / "summary.csv", wide_cols, rows)

    doc = {"config": eff, "aggregates": result["aggregates"],
           "n_cells": len(result["cells"]),
           "n_failed": sum(r["status"] != "ok" for r in result["cells"]), **_stamp(args)}
    (out / "summary.json").write_text(json.dumps(doc, indent=2, sort_keys=True, default=str) + "\n")
    log.info("bench: %d cells, %d failed", doc["n_cells"], doc["n_failed"])


COMMANDS = {"synth": cmd_synth, "train": cmd_train, "encode": cmd_encode,
            "eval": cmd_eval, "bench": cmd_bench}


# -- argument parsing ---------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


_FLAG_HELP = {
    "method": f"one of {', '.join(METHODS)} or 'gth' (uses --variant)",
    "methods": "comma-separated method list",
    "bits": "code length; a comma-separated list for bench",
    "seeds": "comma-separated seed list",
    "target_fractions": f"comma-separated target training fractions, e.g. {','.join(map(str, FRACTION_GRID))}",
    "lambda_grid": "values swept for both lambda1 and lambda2 (GTH methods only)",
    "stiefel_mode": "right_cayley (default) or full_cayley",
    "jobs": "parallel benchmark workers",
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gth", description="Projection-guided transfer hashing toolkit")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, keys in COMMAND_KEYS.items():
        p = sub.add_parser(name)
        p.add_argument("--config", help="key=value settings file")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--no-timestamp", action="store_true", help="omit creation times from outputs")
        for key in keys:
            flag = "--" + key.replace("_", "-")
            p.add_argument(flag, dest=key, default=None, help=_FLAG_HELP.get(key))
        if "seeds" in keys:
            p.add_argument("--seed", dest="seeds", default=None, help=argparse.SUPPRESS)
        if "target_fractions" in keys:
            p.add_argument("--target-fraction", dest="target_fractions", default=None,
                           help=argparse.SUPPRESS)
    return parser


def main(argv=None) -> int:
    try:
        parser = build_parser()
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                            format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
        keys = COMMAND_KEYS[args.command]
        file_values = read_config_file(args.config) if args.config else {}
        flags = {k: getattr(args, k) for k in keys}
        eff = resolve(args.command, file_values, flags)
        COMMANDS[args.command](eff, Path(args.out), args)
    except (GthError, ValueError, OSError, KeyError) as exc:
        msg = str(exc).replace("\n", " ")
        print(json.dumps({"error": type(exc).__name__, "message": msg}), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
