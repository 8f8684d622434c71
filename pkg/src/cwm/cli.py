"""Command-line interface: ``cwm <verb> [--config FILE] [--seed N] [--set key=value] [--force]``.

Verbs: gen, train, eval, analyze, predict, sweep. A run is configured by one
JSON document (defaults below, overlaid by ``--config`` and then ``--set``);
every output lands under ``output_dir`` in ``data/``, ``checkpoints/``,
``reports/`` or ``logs/``. Exit codes: 0 ok, 1 usage/config, 2 data,
3 numerical failure.
"""
from __future__ import annotations

import argparse
import copy
import csv
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import backbone as B
from . import metrics as M
from . import objective as O
from . import records as R
from . import synth
from . import transform as T

logger = logging.getLogger("cwm")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
METHODS = ("cwm", "vr", "pcr", "wtg", "d2q", "oracle")
BACKBONES = ("fm", "mlp")
ANALYSES = ("bimodal", "repeat_play", "feedback", "interest_labels", "delta_imp", "distribution_fit")
_SYNTH_FIELDS = ("n_users", "n_videos", "n_records", "true_embedding_dim", "durations", "weights",
                 "c_true", "sigma_true", "score_scale", "bias", "target_complete_ratio", "truth",
                 "feedback", "start_time")

DEFAULTS = {
    "seed": 0,
    "output_dir": "cwm_run",
    "name": None,
    "method": "cwm",
    "backbone": "fm",
    "cost": {"c": 1 / 40, "sigma": 2.0},
    "phi_mode": "exact",
    "objective": {"bin_width_s": 5.0, "group_count": 60},
    "train": {k: v for k, v in B.train_config_dict(B.TrainConfig()).items() if k != "seed"},
    "data": {
        "path": None, "train": None, "val": None, "test": None,
        "schema": ["user_id", "video_id"],
        "split": {"t1": None, "t2": None, "fractions": [0.7, 0.15]},
        "max_duration": None, "exclude_durations": [],
    },
    "synth": {"preset": None, **{k: None for k in _SYNTH_FIELDS}},
    "metrics": {"q": 0.7, "k": 3, "xauc_mode": "exhaustive", "xauc_pairs": 1_000_000,
                "n_bins": 10, "bin_mode": "equal_count"},
    "checkpoint": None,
    "eval": {"data": None},
    "analyze": {"name": None, "data": None, "predictions": None, "reports": [], "duration": None,
                "n_bins": 20, "duration_bins": 10, "bin_mode": "equal_width", "w_q": None},
    "sweep": {"c": [1 / 40], "sigma": [2.0], "split": "val"},
}


class DataError(Exception):
    """An input file is missing or unusable."""


# --------------------------------------------------------------------------
# configuration

def _merge(base: dict, over: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        key = f"{path}{k}"
        if k not in base:
            raise R.ConfigError(f"unknown config key {key!r}")
        if isinstance(base[k], dict) and base[k] and not isinstance(v, dict):
            raise R.ConfigError(f"config key {key!r} must be an object")
        if isinstance(base[k], dict) and base[k]:
            out[k] = _merge(base[k], v, key + ".")
        else:
            out[k] = copy.deepcopy(v)
    return out


def _parse_value(raw: str):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def _apply_set(cfg: dict, assignment: str) -> None:
    if "=" not in assignment:
        raise R.ConfigError(f"--set expects key=value, got {assignment!r}")
    key, raw = assignment.split("=", 1)
    node = cfg
    parts = key.split(".")
    for p in parts[:-1]:
        if not isinstance(node.get(p), dict):
            raise R.ConfigError(f"unknown config key {key!r}")
        node = node[p]
    if parts[-1] not in node:
        raise R.ConfigError(f"unknown config key {key!r}")
    node[parts[-1]] = _parse_value(raw)


def load_config(path=None, sets=(), seed=None) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise R.ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise R.ConfigError(f"config file {path} is not valid JSON: {exc}") from None
        if not isinstance(doc, dict):
            raise R.ConfigError("config root must be a JSON object")
        cfg = _merge(cfg, doc)
    for s in sets:
        _apply_set(cfg, s)
    if seed is not None:
        cfg["seed"] = seed
    _validate(cfg)
    return cfg


def _validate(cfg: dict) -> None:
    if cfg["method"] not in METHODS:
        raise R.ConfigError(f"unknown method {cfg['method']!r}; expected one of {', '.join(METHODS)}")
    if cfg["backbone"] not in BACKBONES:
        raise R.ConfigError(f"unknown backbone {cfg['backbone']!r}; expected fm or mlp")
    if not isinstance(cfg["seed"], int) or cfg["seed"] < 0:
        raise R.ConfigError("seed must be a non-negative integer")
    try:
        T.CostParams(float(cfg["cost"]["c"]), float(cfg["cost"]["sigma"]))
        O.PhiMode.parse(cfg["phi_mode"])
        _train_config(cfg)
    except (TypeError, ValueError) as exc:
        raise R.ConfigError(str(exc)) from None


def _train_config(cfg: dict) -> B.TrainConfig:
    return B.TrainConfig(seed=cfg["seed"], **cfg["train"])


def _run_name(cfg: dict) -> str:
    return cfg["name"] or f"{cfg['method']}_{cfg['backbone']}"


# --------------------------------------------------------------------------
# I/O helpers

def _out(cfg: dict, sub: str, name: str) -> Path:
    return Path(cfg["output_dir"]) / sub / name


def _claim(paths, force: bool) -> None:
    """Refuse to overwrite existing outputs unless ``--force``; create parent dirs."""
    taken = [str(p) for p in paths if Path(p).exists()]
    if taken and not force:
        raise R.ConfigError(f"output exists: {', '.join(taken)} (pass --force to overwrite)")
    for p in paths:
        Path(p).parent.mkdir(parents=True, exist_ok=True)


def _json_safe(x):
    if isinstance(x, dict):
        return {str(k): _json_safe(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_json_safe(v) for v in x]
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else None
    return x


def _write_json(path, doc) -> None:
    Path(path).write_text(json.dumps(_json_safe(doc), indent=1, sort_keys=True, allow_nan=False) + "\n",
                          encoding="utf-8")


def _cell(x):
    if isinstance(x, (bool, np.bool_)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, np.integer):
        return int(x)
    return x


def _write_rows(path, header, rows) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(row[h]) for h in header])


def _load(path, schema, vocab=None) -> R.Dataset:
    if path is None or not Path(path).is_file():
        raise DataError(f"data file not found: {path}")
    return R.load_csv(path, schema, vocab)


def _filtered(cfg: dict, ds: R.Dataset) -> R.Dataset:
    dc = cfg["data"]
    if dc["max_duration"] is None and not dc["exclude_durations"]:
        return ds
    vocab = ds.vocab
    out = R.filter_records(ds, dc["max_duration"], dc["exclude_durations"])
    out.vocab = vocab
    return out


def _datasets(cfg: dict):
    """(train, val, test) per the data section; missing parts come back as None."""
    dc = cfg["data"]
    schema = tuple(dc["schema"])
    gen_dir = Path(cfg["output_dir"]) / "data"
    train_path = dc["train"]
    if train_path is None and dc["path"] is None and (gen_dir / "train.csv").is_file():
        train_path = gen_dir / "train.csv"
        dc = dict(dc, val=dc["val"] or gen_dir / "val.csv", test=dc["test"] or gen_dir / "test.csv")
    if train_path is not None:
        train = _filtered(cfg, _load(train_path, schema))
        if len(train) == 0:
            raise R.ConfigError("train split is empty")
        val = _filtered(cfg, _load(dc["val"], schema, train.vocab)) if dc["val"] else None
        test = _filtered(cfg, _load(dc["test"], schema, train.vocab)) if dc["test"] else None
        return train, val, test
    if dc["path"] is None:
        raise R.ConfigError("no data: set data.path or data.train (or run `cwm gen` first)")
    ds = _filtered(cfg, _load(dc["path"], schema))
    sp = dc["split"]
    if sp["t1"] is None or sp["t2"] is None:
        t1, t2 = R.split_points(ds, tuple(sp["fractions"]))
    else:
        t1, t2 = float(sp["t1"]), float(sp["t2"])
    return R.temporal_split(ds, t1, t2)


def _checkpoint_path(cfg: dict) -> Path:
    return Path(cfg["checkpoint"]) if cfg["checkpoint"] else _out(cfg, "checkpoints", f"{_run_name(cfg)}.json")


def _open_checkpoint(cfg: dict):
    path = _checkpoint_path(cfg)
    if not path.is_file():
        raise DataError(f"checkpoint not found: {path}")
    model, doc = B.load_checkpoint(path)
    return model, doc, O.objective_from_config(doc["objective_config"])


def _eval_data(cfg: dict, doc: dict) -> R.Dataset:
    """Evaluation/prediction records, encoded later with the checkpoint's vocab."""
    schema = tuple(doc["schema"])
    vocab = doc["vocab"]
    path = cfg["eval"]["data"] or cfg["data"]["test"]
    if path is None and cfg["data"]["path"] is None:
        path = Path(cfg["output_dir"]) / "data" / "test.csv"
    if path is not None:
        return _filtered(cfg, _load(path, schema, vocab))
    cfg = copy.deepcopy(cfg)
    cfg["data"]["schema"] = list(schema)
    test = _datasets(cfg)[2]
    test.vocab = vocab
    return test


def _make_objective(cfg: dict, cost=None) -> O.Objective:
    oc = cfg["objective"]
    cost = cost or T.CostParams(float(cfg["cost"]["c"]), float(cfg["cost"]["sigma"]))
    return O.make_objective(cfg["method"], cost, cfg["phi_mode"], oc["bin_width_s"], oc["group_count"],
                            cfg["metrics"]["q"])


def _report(cfg: dict, scores, watch_pred, ds: R.Dataset, w_q: float) -> M.EvalReport:
    mc = cfg["metrics"]
    d = ds.durations()
    edges = M.duration_bins(d, mc["n_bins"], mc["bin_mode"]) if len(d) else None
    return M.evaluate(scores, watch_pred, ds.watch_times(), d, [r.user_id for r in ds.records], w_q,
                      k=mc["k"], xauc_mode=mc["xauc_mode"], xauc_pairs=mc["xauc_pairs"],
                      seed=cfg["seed"], edges=edges)


def _stats_doc(ds: R.Dataset) -> dict:
    s = R.stats(ds)
    return {"n_users": s.n_users, "n_videos": s.n_videos, "n_interactions": s.n_interactions,
            "mean_complete_ratio": s.mean_complete_ratio,
            "durations": sorted(set(ds.durations().tolist()))}


def _print_json(doc) -> None:
    print(json.dumps(_json_safe(doc), sort_keys=True))


# --------------------------------------------------------------------------
# verbs

def cmd_gen(cfg: dict, force: bool = False) -> dict:
    sc = cfg["synth"]
    kw = {k: (tuple(v) if isinstance(v, list) else v) for k, v in sc.items()
          if k != "preset" and v is not None}
    preset = sc["preset"]
    if preset in ("kuairand", "kuairand_like"):
        scfg = synth.kuairand_like(seed=cfg["seed"], **kw)
    elif preset in ("wechat", "wechat_like"):
        scfg = synth.wechat_like(seed=cfg["seed"], **kw)
    elif preset is None:
        scfg = synth.SynthConfig(seed=cfg["seed"], **kw)
    else:
        raise R.ConfigError(f"unknown synth preset {preset!r}")
    names = ["records.csv", "ground_truth.csv", "train.csv", "val.csv", "test.csv", "stats.json"]
    paths = {n: _out(cfg, "data", n) for n in names}
    _claim(paths.values(), force)
    ds, gt = synth.generate(scfg)
    R.write_csv(ds, paths["records.csv"])
    synth.write_ground_truth(gt, paths["ground_truth.csv"])
    t1, t2 = R.split_points(ds, tuple(cfg["data"]["split"]["fractions"]))
    for part, name in zip(R.temporal_split(ds, t1, t2), ("train.csv", "val.csv", "test.csv")):
        R.write_csv(part, paths[name])
    doc = _stats_doc(ds)
    doc["score_bias"] = gt.bias
    _write_json(paths["stats.json"], doc)
    _print_json(doc)
    return doc


def cmd_train(cfg: dict, force: bool = False) -> dict:
    name = _run_name(cfg)
    ck = _checkpoint_path(cfg)
    log_path = _out(cfg, "logs", f"train_{name}.csv")
    _claim([ck, log_path], force)
    train, val, _ = _datasets(cfg)
    obj = _make_objective(cfg)
    tcfg = _train_config(cfg)
    res = B.train(train, val, obj, cfg["backbone"], tcfg)
    w_q = M.fit_interest_threshold(train.watch_times(), cfg["metrics"]["q"]).w_q
    extra = {"interest_threshold": {"q": cfg["metrics"]["q"], "w_q": w_q},
             "method": cfg["method"], "best_epoch": res.best_epoch}
    B.save_checkpoint(ck, res.model, train.schema, train.vocab, B.train_config_dict(tcfg),
                      obj.config(), extra)
    _write_rows(log_path, ["epoch", "train_loss", "val_loss"], res.log)
    best = res.log[res.best_epoch - 1]
    doc = {"checkpoint": str(ck), "best_epoch": res.best_epoch, "epochs": len(res.log),
           "val_loss": best["val_loss"], "train_loss": best["train_loss"]}
    _print_json(doc)
    return doc


def _predict(model, doc, obj, ds: R.Dataset):
    scores = model.score(ds.encode(doc["vocab"])) if len(ds) else np.zeros(0)
    return scores, obj.predict_watch_time(scores, ds.durations())


def cmd_eval(cfg: dict, force: bool = False) -> dict:
    model, doc, obj = _open_checkpoint(cfg)
    name = Path(_checkpoint_path(cfg)).stem
    outs = [_out(cfg, "reports", f"eval_{name}.json"), _out(cfg, "reports", f"eval_{name}.csv"),
            _out(cfg, "reports", f"eval_{name}_bins.csv")]
    _claim(outs, force)
    ds = _eval_data(cfg, doc)
    if len(ds) == 0:
        raise DataError("evaluation data is empty")
    scores, wp = _predict(model, doc, obj, ds)
    w_q = doc["interest_threshold"]["w_q"]
    rep = _report(cfg, scores, wp, ds, w_q)
    k = cfg["metrics"]["k"]
    summary = {"method": doc.get("method"), "n_records": len(ds), "w_q": w_q, "k": k,
               "overall": rep.summary(), "bins": rep.bins}
    _write_json(outs[0], summary)
    _write_rows(outs[1], ["metric", "value"], [{"metric": m, "value": v} for m, v in rep.summary().items()])
    _write_rows(outs[2], ["bin", "range", "n", "mae", "xauc", "auc", f"ndcg@{k}"], rep.bins)
    _print_json(rep.summary())
    return summary


def cmd_predict(cfg: dict, force: bool = False) -> dict:
    model, doc, obj = _open_checkpoint(cfg)
    name = Path(_checkpoint_path(cfg)).stem
    out = _out(cfg, "reports", f"predictions_{name}.csv")
    _claim([out], force)
    ds = _eval_data(cfg, doc)
    scores, wp = _predict(model, doc, obj, ds)
    # keep r_hat inside the open interval even where Phi rounds to 0 or 1
    r_hat = np.clip(T.normal_cdf(scores), np.nextafter(0.0, 1.0), np.nextafter(1.0, 0.0))
    rows = [{"record_index": i, "user_id": r.user_id, "video_id": r.video_id, "duration_s": r.duration_s,
             "score": float(scores[i]), "r_hat": float(r_hat[i]), "watch_time_hat": float(wp[i])}
            for i, r in enumerate(ds.records)]
    _write_rows(out, ["record_index", "user_id", "video_id", "duration_s", "score", "r_hat",
                      "watch_time_hat"], rows)
    doc_out = {"predictions": str(out), "n_records": len(rows)}
    _print_json(doc_out)
    return doc_out


def _analysis_data(cfg: dict) -> R.Dataset:
    ac = cfg["analyze"]
    path = ac["data"] or cfg["data"]["path"] or Path(cfg["output_dir"]) / "data" / "records.csv"
    return _filtered(cfg, _load(path, tuple(cfg["data"]["schema"])))


def _fixed_duration(ac: dict, d: np.ndarray) -> float:
    if ac["duration"] is not None:
        return float(ac["duration"])
    vals, counts = np.unique(d, return_counts=True)
    return float(vals[np.argmax(counts)])


def _flags(ds: R.Dataset):
    if not ds.has_feedback:
        return None, None
    return (np.array([r.like_flag for r in ds.records]), np.array([r.forward_flag for r in ds.records]))


def _bin_rows(counts, edges, key="count"):
    return [{"bin": i, "lo": float(edges[i]), "hi": float(edges[i + 1]), key: int(c)}
            for i, c in enumerate(counts)]


def cmd_analyze(cfg: dict, force: bool = False) -> dict:
    ac = cfg["analyze"]
    kind = ac["name"]
    if kind not in ANALYSES:
        raise R.ConfigError(f"unknown analysis {kind!r}; expected one of {', '.join(ANALYSES)}")
    out = _out(cfg, "reports", f"analysis_{kind}.csv")
    _claim([out], force)

    if kind == "delta_imp":
        if len(ac["reports"]) != 2:
            raise R.ConfigError("delta_imp needs analyze.reports = [method_report, reference_report]")
        docs = []
        for p in ac["reports"]:
            if not Path(p).is_file():
                raise DataError(f"report not found: {p}")
            docs.append(json.loads(Path(p).read_text(encoding="utf-8")))
        rows = _delta_rows(*docs)
        _write_rows(out, ["bin", "range", "metric", "method_value", "reference_value", "delta_imp"], rows)
    elif kind == "distribution_fit":
        rows = _distribution_fit(cfg)
        _write_rows(out, ["bin", "lo", "hi", "true_count", "pred_count"], rows)
    else:
        ds = _analysis_data(cfg)
        if len(ds) == 0:
            raise DataError("analysis data is empty")
        w, d = ds.watch_times(), ds.durations()
        if kind == "bimodal":
            counts, edges = synth.fixed_duration_histogram(w, d, _fixed_duration(ac, d), ac["n_bins"])
            rows = _bin_rows(counts, edges)
            _write_rows(out, ["bin", "lo", "hi", "count"], rows)
        else:
            edges = M.duration_bins(d, ac["duration_bins"], ac["bin_mode"])
            like, fwd = _flags(ds)
            if kind == "repeat_play":
                rows = M.repeat_play_stats(w, d, edges)
                header = ["bin", "range", "n", "repeat_proportion", "mean_repeat_ratio"]
            elif kind == "feedback":
                if like is None:
                    raise DataError("feedback analysis needs like_flag and forward_flag columns")
                rows = M.feedback_proportion(w, d, like, fwd, edges)
                header = ["bin", "range", "n", "feedback_proportion"]
            else:
                w_q = ac["w_q"] if ac["w_q"] is not None else M.fit_interest_threshold(w, cfg["metrics"]["q"]).w_q
                rows = M.interest_label_report(w, d, like, fwd, w_q, edges)
                header = ["bin", "range", "n", "label_proportion"] + (
                    ["feedback_given_label"] if like is not None else [])
            _write_rows(out, header, rows)
    doc = {"analysis": kind, "output": str(out), "rows": len(rows)}
    _print_json(doc)
    return doc


def _delta_rows(method_doc: dict, ref_doc: dict) -> list[dict]:
    metrics = [m for m in method_doc["overall"] if m in ref_doc["overall"]]
    pairs = [("all", "all", method_doc["overall"], ref_doc["overall"])]
    ref_bins = {b["range"]: b for b in ref_doc["bins"]}
    for b in method_doc["bins"]:
        if b["range"] not in ref_bins:
            raise DataError(f"bin {b['range']} missing from the reference report")
        pairs.append((b["bin"], b["range"], b, ref_bins[b["range"]]))
    rows = []
    for bin_id, rng, vm, v0 in pairs:
        for m in metrics:
            a, b = vm.get(m), v0.get(m)
            if a is None or b is None or b == 0:
                delta = float("nan")
            else:
                delta = M.delta_imp(a, b)
            rows.append({"bin": bin_id, "range": rng, "metric": m,
                         "method_value": float("nan") if a is None else float(a),
                         "reference_value": float("nan") if b is None else float(b),
                         "delta_imp": delta})
    return rows


def _distribution_fit(cfg: dict) -> list[dict]:
    """True vs predicted watch-time histograms at one duration."""
    ac = cfg["analyze"]
    if ac["predictions"]:
        p = Path(ac["predictions"])
        if not p.is_file():
            raise DataError(f"predictions not found: {p}")
        with p.open(newline="", encoding="utf-8") as fh:
            pred_rows = list(csv.DictReader(fh))
        ds = _analysis_data(cfg)
        if len(pred_rows) != len(ds):
            raise DataError(f"{len(pred_rows)} predictions for {len(ds)} records")
        wp = np.array([float(r["watch_time_hat"]) for r in pred_rows])
    else:
        model, doc, obj = _open_checkpoint(cfg)
        ds = _analysis_data(cfg)
        ds.vocab = doc["vocab"]
        if set(doc["schema"]) - set(ds.schema):
            ds = _load(ac["data"] or cfg["data"]["path"], tuple(doc["schema"]), doc["vocab"])
        _, wp = _predict(model, doc, obj, ds)
    if not np.all(np.isfinite(wp)):
        raise DataError("predictions carry no watch times (oracle checkpoint?)")
    w, d = ds.watch_times(), ds.durations()
    dur = _fixed_duration(ac, d)
    tc, edges = synth.fixed_duration_histogram(w, d, dur, ac["n_bins"])
    pc, _ = synth.fixed_duration_histogram(wp, d, dur, ac["n_bins"])
    return [{"bin": i, "lo": float(edges[i]), "hi": float(edges[i + 1]), "true_count": int(a),
             "pred_count": int(b)} for i, (a, b) in enumerate(zip(tc, pc))]


def _grid(values, name) -> list[float]:
    if not isinstance(values, list) or not values:
        raise R.ConfigError(f"sweep.{name} must be a non-empty list")
    try:
        vals = sorted({float(v) for v in values})
    except (TypeError, ValueError):
        raise R.ConfigError(f"sweep.{name} must hold numbers") from None
    if any(not (v > 0 and math.isfinite(v)) for v in vals):
        raise R.ConfigError(f"sweep.{name} values must be positive and finite")
    return vals


def cmd_sweep(cfg: dict, force: bool = False) -> dict:
    sc = cfg["sweep"]
    cs, sigmas = _grid(sc["c"], "c"), _grid(sc["sigma"], "sigma")
    if sc["split"] not in ("val", "test"):
        raise R.ConfigError("sweep.split must be 'val' or 'test'")
    if cfg["method"] != "cwm":
        logger.warning("sweep always trains the cwm objective; method=%s ignored", cfg["method"])
    out = _out(cfg, "reports", "sweep.csv")
    _claim([out], force)
    train, val, test = _datasets(cfg)
    target = val if sc["split"] == "val" else test
    if target is None or len(target) == 0:
        raise DataError(f"sweep needs a non-empty {sc['split']} split")
    w_q = M.fit_interest_threshold(train.watch_times(), cfg["metrics"]["q"]).w_q
    k = cfg["metrics"]["k"]
    rows = []
    for c in cs:
        for sigma in sigmas:
            params = T.CostParams(c, sigma)
            obj = O.CWMObjective(params, O.PhiMode.parse(cfg["phi_mode"]))
            res = B.train(train, val, obj, cfg["backbone"], _train_config(cfg))
            scores = res.model.score(target.encode(train.vocab))
            wp = obj.predict_watch_time(scores, target.durations())
            rep = _report(cfg, scores, wp, target, w_q)
            nll = -float(np.mean(O.cwm_log_likelihood(scores, target.watch_times(), target.durations(), params)))
            rows.append({"c": c, "sigma": sigma, "best_epoch": res.best_epoch, "val_nll": nll,
                         "mae": rep.mae, "xauc": rep.xauc, "auc": rep.auc, f"ndcg@{k}": rep.ndcg})
            logger.info("sweep c=%g sigma=%g nll=%.6f", c, sigma, nll)
    _write_rows(out, ["c", "sigma", "best_epoch", "val_nll", "mae", "xauc", "auc", f"ndcg@{k}"], rows)
    best = min(rows, key=lambda r: r["val_nll"])
    doc = {"sweep": str(out), "rows": len(rows), "best": {"c": best["c"], "sigma": best["sigma"]}}
    _print_json(doc)
    return doc


COMMANDS = {"gen": cmd_gen, "train": cmd_train, "eval": cmd_eval, "analyze": cmd_analyze,
            "predict": cmd_predict, "sweep": cmd_sweep}


# --------------------------------------------------------------------------
# entry point

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--seed", type=int, help="master seed (overrides the config)")
    common.add_argument("--force", action="store_true", help="overwrite existing outputs")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key by dotted path; VALUE is parsed as JSON when possible")
    parser = _Parser(prog="cwm", description="Counterfactual watch-time models: data, training, evaluation.")
    sub = parser.add_subparsers(dest="verb", required=True)
    helps = {"gen": "generate a synthetic play log", "train": "train a model and write a checkpoint",
             "eval": "evaluate a checkpoint", "analyze": "run a data or report analysis",
             "predict": "write per-record predictions", "sweep": "grid over cost c and sigma"}
    for verb in COMMANDS:
        sub.add_parser(verb, parents=[common], help=helps[verb])
    return parser


def _setup_logging() -> None:
    level = {"debug": logging.DEBUG, "info": logging.INFO, "warn": logging.WARNING,
             "warning": logging.WARNING}.get(os.environ.get("CWM_LOG", "warn").lower(), logging.WARNING)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr,
                        force=True)


def main(argv=None) -> int:
    _setup_logging()
    try:
        args = _build_parser().parse_args(argv)
    except SystemExit as exc:  # --help or a usage error
        return int(exc.code or 0)
    if args.seed is not None and args.seed < 0:
        print("cwm: error: --seed must be non-negative", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config, args.set, args.seed)
        COMMANDS[args.verb](cfg, force=args.force)
    except (R.SchemaError, R.ParseError, DataError) as exc:
        print(f"cwm: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (B.TrainingDiverged, ArithmeticError) as exc:
        print(f"cwm: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (R.ConfigError, ValueError, KeyError, TypeError, OSError) as exc:
        print(f"cwm: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
