"""End-to-end analysis driven by one config mapping.

Config keys (all but ``data`` and ``schema`` optional)::

    data: adult.csv                 # relative to the config file
    schema: {...} | schema.yaml
    subsample: {n: 5000, seed: 0}
    k: 15
    max_distance: null
    alpha: 0.0
    fallback: paper-literal
    selection: {proxy_threshold: 0.95, exclude: [], include: []}
    propensity: {l2: 1.0e-4, max_iters: 1000, tol: 1.0e-6, clip_epsilon: 0.01,
                 binarize_numeric: false}
    trends: {bins: 10, min_count: 5}
    tree: {min_leaf: 25, max_depth: 6}
    tamper: {rule: ["marital-status=Divorced"], fraction: 0.8, seed: 0}
"""

from __future__ import annotations

import copy
import hashlib
import io
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from .dataset import (PROTECTED, UNPROTECTED, Dataset, base_rates, load_dataset,
                      load_schema_config, normalize_numeric, write_dataset)
from .discovery import (compare_rule_across_groups, extract_rules, score_all, scores_frame,
                        tree_frame)
from .exceptions import StageError
from .propensity import fit_propensity, select_covariates
from .tamper import TamperSpec, tamper
from .tree import RegressionTree
from .trends import all_trends

logger = logging.getLogger(__name__)

DEFAULTS = {
    "k": 15,
    "max_distance": None,
    "alpha": 0.0,
    "fallback": "paper-literal",
    "seed": 0,
    "selection": {"proxy_threshold": 0.95, "exclude": [], "include": [], "n_bins": 10},
    "propensity": {"l2": 1e-4, "max_iters": 1000, "tol": 1e-6, "clip_epsilon": 0.01,
                   "binarize_numeric": False},
    "trends": {"bins": 10, "min_count": 5},
    "tree": {"min_leaf": 25, "max_depth": 6},
}

TREE_MODES = {
    # mode: (group is protected, decision is positive)
    "discrimination": (True, False),
    "favoritism": (False, True),
}


def merged_config(config) -> dict:
    """Defaults overlaid with ``config`` (one level deep for nested sections)."""
    out = copy.deepcopy(DEFAULTS)
    for key, value in dict(config).items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = {**out[key], **value}
        else:
            out[key] = value
    return out


def read_config(path) -> dict:
    import yaml

    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        cfg = yaml.safe_load(fh) or {}
    cfg.setdefault("base_dir", str(path.parent))
    return cfg


def _resolve(cfg, value):
    if value is None or isinstance(value, dict):
        return value
    p = Path(value)
    if not p.is_absolute() and cfg.get("base_dir"):
        p = Path(cfg["base_dir"]) / p
    return p


def _stage(name):
    def deco(fn):
        def wrapper(*args, **kwargs):
            try:
                return fn(*args, **kwargs)
            except StageError:
                raise
            except Exception as exc:
                raise StageError(name, exc) from exc
        wrapper.__name__ = fn.__name__
        wrapper.__doc__ = fn.__doc__
        return wrapper
    return deco


@_stage("load")
def load_from_config(cfg) -> Dataset:
    if "data" not in cfg or "schema" not in cfg:
        raise ValueError("config needs 'data' and 'schema'")
    schema = cfg["schema"]
    schema = load_schema_config(schema if isinstance(schema, dict) else _resolve(cfg, schema))
    data = load_dataset(_resolve(cfg, cfg["data"]), schema)
    sub = cfg.get("subsample")
    if sub:
        data = subsample(data, int(sub["n"]), int(sub.get("seed", 0)))
    return data


def subsample(dataset: Dataset, n: int, seed: int) -> Dataset:
    """Seeded sample of ``n`` records without replacement, kept in original order."""
    from dataclasses import replace

    if n >= len(dataset):
        return dataset
    rng = np.random.Generator(np.random.PCG64(seed))
    idx = np.sort(rng.choice(len(dataset), size=n, replace=False))
    return replace(dataset, table=dataset.table.iloc[idx].reset_index(drop=True),
                   protected=dataset.protected[idx], positive=dataset.positive[idx])


@dataclass
class Analysis:
    """Everything computed for one dataset."""

    dataset: Dataset
    selection: object
    model: object
    scores: pd.DataFrame
    trends: pd.DataFrame
    trees: dict = field(default_factory=dict)
    rules: dict = field(default_factory=dict)
    comparison: pd.DataFrame | None = None
    notes: list = field(default_factory=list)


def analyse(dataset: Dataset, cfg) -> Analysis:
    """Run normalize -> select -> fit -> score -> trends -> trees -> rules -> compare."""
    cfg = merged_config(cfg)
    data = _stage("normalize")(lambda d: d if d.normalized else normalize_numeric(d))(dataset)
    sel = cfg["selection"]
    selection = _stage("select_covariates")(select_covariates)(
        data, sel["proxy_threshold"], sel.get("n_bins", 10),
        tuple(sel.get("exclude") or ()), tuple(sel.get("include") or ()))
    pr = cfg["propensity"]
    model = _stage("fit_propensity")(fit_propensity)(
        data, selection, pr["l2"], pr["max_iters"], pr["tol"], pr["clip_epsilon"],
        pr["binarize_numeric"])
    scores = _stage("score")(score_all)(data, model, cfg["k"], cfg["max_distance"],
                                        cfg["alpha"], cfg["fallback"])
    sframe = scores_frame(scores)
    tr = cfg["trends"]
    trends = _stage("trends")(all_trends)(sframe, tr["bins"], tr["min_count"])
    analysis = Analysis(data, selection, model, sframe, trends)
    _stage("tree")(_trees)(analysis, cfg)
    _stage("compare_rules")(_compare)(analysis)
    return analysis


def _trees(analysis: Analysis, cfg):
    data = analysis.dataset
    frame = tree_frame(data)
    labels = analysis.scores["rd_causal"].to_numpy(dtype=float)
    params = cfg["tree"]
    for mode, (want_prot, want_pos) in TREE_MODES.items():
        mask = (data.protected == want_prot) & (data.positive == want_pos)
        if mask.sum() < max(1, params["min_leaf"]):
            analysis.notes.append(
                f"{mode} tree skipped: {int(mask.sum())} records < min_leaf={params['min_leaf']}")
            continue
        tree = RegressionTree(min_leaf=params["min_leaf"], max_depth=params["max_depth"])
        tree.fit(frame[mask], labels[mask])
        analysis.trees[mode] = tree
        analysis.rules[mode] = extract_rules(tree, data, frame)


def _compare(analysis: Analysis):
    data = analysis.dataset
    frame = tree_frame(data)
    rows = []
    for mode, rules in analysis.rules.items():
        for i, rule in enumerate(rules):
            cmp = compare_rule_across_groups(rule, analysis.scores, data, frame)
            rows.append({
                "mode": mode, "rule_index": i, "rule": str(rule),
                "predicted_rdc": rule.predicted_rdc,
                "protected_count": cmp[PROTECTED]["count"],
                "protected_mean_rd_causal": cmp[PROTECTED]["mean_rd_causal"],
                "unprotected_count": cmp[UNPROTECTED]["count"],
                "unprotected_mean_rd_causal": cmp[UNPROTECTED]["mean_rd_causal"],
            })
    analysis.comparison = pd.DataFrame(rows, columns=[
        "mode", "rule_index", "rule", "predicted_rdc", "protected_count",
        "protected_mean_rd_causal", "unprotected_count", "unprotected_mean_rd_causal"])


# -- writing ------------------------------------------------------------------

def _csv(frame: pd.DataFrame, path: Path):
    frame.to_csv(path, index=False, lineterminator="\n")


def _json(doc, path: Path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, (set, frozenset)):
        return sorted(o)
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


def write_analysis(analysis: Analysis, out: Path) -> list[str]:
    out.mkdir(parents=True, exist_ok=True)
    written = []

    def put(name, writer, obj):
        writer(obj, out / name)
        written.append(name)

    put("covariates.csv", _csv, analysis.selection.report())
    put("propensity_model.json", _json, analysis.model.to_dict())
    put("scores.csv", _csv, analysis.scores)
    put("trends.csv", _csv, analysis.trends)
    for mode, tree in analysis.trees.items():
        put(f"tree_{mode}.json", _json, tree.to_dict())
        put(f"rules_{mode}.json", _json, [r.to_dict() for r in analysis.rules[mode]])
    if analysis.comparison is not None:
        put("rule_comparison.csv", _csv, analysis.comparison)
    return written


def _sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def summary(analysis: Analysis) -> dict:
    s = analysis.scores
    rates = base_rates(analysis.dataset)
    return {
        "n": len(s),
        "n_protected": int((s["group"] == PROTECTED).sum()),
        "p_neg": rates.p_neg,
        "p_pos": rates.p_pos,
        "selected_covariates": list(analysis.selection.selected),
        "dropped_proxies": dict(analysis.selection.dropped_proxies),
        "propensity_converged": bool(analysis.model.training_meta_["converged"]),
        "flags": {k: int(v) for k, v in s["flag"].value_counts().sort_index().items()},
        "notes": list(analysis.notes),
    }


def run_pipeline(config, out_dir=None) -> dict:
    """Run the whole analysis and write artifacts under ``out_dir``.

    Returns the report bundle: the manifest plus the in-memory analyses under
    ``"analyses"`` (``{"main": ...}`` or ``{"original": ..., "tampered": ...}``).
    """
    if isinstance(config, (str, os.PathLike)):
        config = read_config(config)
    cfg = merged_config(config)
    out_dir = Path(out_dir or cfg.get("out") or "causalrd-out")
    dataset = load_from_config(cfg)
    analyses = {}
    flipped = None
    if cfg.get("tamper"):
        t = cfg["tamper"]
        spec = _stage("tamper")(TamperSpec)(t["rule"], t["fraction"], t.get("seed", cfg["seed"]))
        tampered, flipped = _stage("tamper")(tamper)(dataset, spec)
        analyses["original"] = analyse(dataset, cfg)
        analyses["tampered"] = analyse(tampered, cfg)
    else:
        analyses["main"] = analyse(dataset, cfg)

    out_dir.mkdir(parents=True, exist_ok=True)
    files = {}
    for name, analysis in analyses.items():
        sub = out_dir if name == "main" else out_dir / name
        for f in write_analysis(analysis, sub):
            rel = (sub / f).relative_to(out_dir).as_posix()
            files[rel] = _sha256_file(sub / f)
    if flipped is not None:
        buf = io.StringIO()
        write_dataset(analyses["tampered"].dataset, buf)
        (out_dir / "tampered_dataset.csv").write_text(buf.getvalue(), encoding="utf-8")
        files["tampered_dataset.csv"] = _sha256_file(out_dir / "tampered_dataset.csv")

    inputs = {}
    if not isinstance(cfg.get("data"), dict):
        inputs["data"] = _sha256_file(_resolve(cfg, cfg["data"]))
    if not isinstance(cfg["schema"], dict):
        inputs["schema"] = _sha256_file(_resolve(cfg, cfg["schema"]))
    else:
        inputs["schema"] = hashlib.sha256(
            json.dumps(cfg["schema"], sort_keys=True).encode()).hexdigest()
    params = {k: v for k, v in cfg.items() if k not in ("base_dir", "out", "schema", "data")}
    manifest = {
        "version": __version__,
        "parameters": params,
        "inputs": inputs,
        "files": files,
        "summary": {name: summary(a) for name, a in analyses.items()},
    }
    if flipped is not None:
        manifest["tamper"] = {"rule": str(spec.rule), "fraction": spec.fraction,
                              "seed": spec.seed, "flipped_ids": flipped,
                              "n_flipped": len(flipped)}
    _json(manifest, out_dir / "manifest.json")
    return {**manifest, "analyses": analyses, "out_dir": str(out_dir)}
