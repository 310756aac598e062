"""Command line entry point: ``causalrd <subcommand> --config CFG [options]``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import pandas as pd

from .dataset import PROTECTED, UNPROTECTED, base_rates, write_dataset
from .discovery import Rule, compare_rule_across_groups, score_all, scores_frame, tree_frame
from .exceptions import CausalRDError, StageError
from .pipeline import (TREE_MODES, _csv, _json, analyse, load_from_config, merged_config,
                       read_config, run_pipeline)
from .tamper import TamperSpec, tamper
from .trends import bin_trends, trends_frame

log = logging.getLogger("causalrd")


def _common(p):
    p.add_argument("--config", required=True, help="pipeline/schema config (YAML or JSON)")
    p.add_argument("--k", type=int, help="neighbors per kset (default 15)")
    p.add_argument("--max-dist", type=float, help="maximum neighbor distance (default unbounded)")
    p.add_argument("--alpha", type=float, help="flagging threshold (default 0)")
    p.add_argument("--bins", type=int, help="propensity bins for trends (default 10)")
    p.add_argument("--seed", type=int, help="seed for tampering/subsampling")
    p.add_argument("--out", help="output directory")
    p.add_argument("--fallback", choices=["paper-literal", "expected-negative"])


def build_parser():
    parser = argparse.ArgumentParser(
        prog="causalrd",
        description="Causal discrimination discovery with kNN situation testing "
                    "and propensity score weighting.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    _common(sub.add_parser("validate", help="load and check the dataset, echo it to --out"))
    _common(sub.add_parser("propensity", help="select covariates and fit the propensity model"))
    _common(sub.add_parser("score", help="score every record"))
    p = sub.add_parser("trends", help="propensity-bin trend table")
    _common(p)
    p.add_argument("--scores", help="scores.csv from a previous run (default: recompute)")
    p.add_argument("--population", default="all", choices=["all", PROTECTED, UNPROTECTED])
    p.add_argument("--flag", default="discriminated",
                   choices=["all", "discriminated", "favored"])
    p.add_argument("--min-count", type=int, default=5)
    for name in ("tree", "rules"):
        p = sub.add_parser(name, help=f"regression {name} over causal risk differences")
        _common(p)
        p.add_argument("--mode", default="discrimination", choices=sorted(TREE_MODES))
    p = sub.add_parser("compare-rules", help="mean causal RD of rules in each group")
    _common(p)
    p.add_argument("--rules", required=True, help="rules JSON written by the rules command")
    p.add_argument("--scores", help="scores.csv from a previous run (default: recompute)")
    p = sub.add_parser("tamper", help="flip positive decisions matching a rule")
    _common(p)
    p.add_argument("--rule", action="append", required=True,
                   help="condition such as 'marital-status=Divorced' (repeat to AND)")
    p.add_argument("--fraction", type=float, default=0.8)
    _common(sub.add_parser("pipeline", help="run the full analysis"))
    return parser


def _config(args):
    cfg = read_config(args.config)
    for key, attr in (("k", "k"), ("max_distance", "max_dist"), ("alpha", "alpha"),
                      ("fallback", "fallback"), ("seed", "seed"), ("out", "out")):
        value = getattr(args, attr, None)
        if value is not None:
            cfg[key] = value
    if getattr(args, "bins", None) is not None:
        cfg["trends"] = {**cfg.get("trends", {}), "bins": args.bins}
    return merged_config(cfg)


def _out(cfg) -> Path:
    out = Path(cfg.get("out") or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _scores(args, cfg, data=None):
    if getattr(args, "scores", None):
        return pd.read_csv(args.scores)
    return analyse(data if data is not None else load_from_config(cfg), cfg).scores


def cmd_validate(args, cfg):
    data = load_from_config(cfg)
    rates = base_rates(data) if len(data) else None
    info = {"n": len(data), "n_protected": int(data.protected.sum()),
            "covariates": data.covariate_names,
            "p_neg": rates.p_neg if rates else None, "p_pos": rates.p_pos if rates else None}
    print(json.dumps(info, indent=2))
    if cfg.get("out"):
        write_dataset(data, _out(cfg) / "dataset.csv")


def cmd_propensity(args, cfg):
    a = analyse(load_from_config(cfg), cfg)
    out = _out(cfg)
    _csv(a.selection.report(), out / "covariates.csv")
    _json(a.model.to_dict(), out / "propensity_model.json")
    print(a.selection.report().to_string(index=False))


def cmd_score(args, cfg):
    from .dataset import normalize_numeric
    from .propensity import fit_propensity, select_covariates

    data = normalize_numeric(load_from_config(cfg))
    sel, pr = cfg["selection"], cfg["propensity"]
    selection = select_covariates(data, sel["proxy_threshold"], sel.get("n_bins", 10),
                                  tuple(sel.get("exclude") or ()), tuple(sel.get("include") or ()))
    model = fit_propensity(data, selection, pr["l2"], pr["max_iters"], pr["tol"],
                           pr["clip_epsilon"], pr["binarize_numeric"])
    frame = scores_frame(score_all(data, model, cfg["k"], cfg["max_distance"], cfg["alpha"],
                                   cfg["fallback"]))
    _csv(frame, _out(cfg) / "scores.csv")
    print(frame["flag"].value_counts().to_string())


def cmd_trends(args, cfg):
    scores = _scores(args, cfg)
    rows = bin_trends(scores, args.population, args.flag, cfg["trends"]["bins"], args.min_count)
    frame = trends_frame(rows)
    _csv(frame, _out(cfg) / "trends.csv")
    print(frame.to_string(index=False))


def cmd_tree(args, cfg):
    a = analyse(load_from_config(cfg), cfg)
    if args.mode not in a.trees:
        raise CausalRDError("; ".join(a.notes) or f"no {args.mode} tree")
    _json(a.trees[args.mode].to_dict(), _out(cfg) / f"tree_{args.mode}.json")
    print(f"tree with {len(a.trees[args.mode].leaves_)} leaves written")


def cmd_rules(args, cfg):
    a = analyse(load_from_config(cfg), cfg)
    if args.mode not in a.rules:
        raise CausalRDError("; ".join(a.notes) or f"no {args.mode} rules")
    rules = a.rules[args.mode]
    _json([r.to_dict() for r in rules], _out(cfg) / f"rules_{args.mode}.json")
    for r in rules:
        print(f"{r.predicted_rdc:+.3f}  {r}")


def cmd_compare_rules(args, cfg):
    from .dataset import normalize_numeric

    data = load_from_config(cfg)
    scores = _scores(args, cfg, data)
    with open(args.rules, encoding="utf-8") as fh:
        rules = [Rule.from_dict(d) for d in json.load(fh)]
    norm = normalize_numeric(data)
    frame = tree_frame(norm)
    rows = []
    for i, rule in enumerate(rules):
        cmp = compare_rule_across_groups(rule, scores, norm, frame)
        rows.append({"rule_index": i, "rule": str(rule),
                     "protected_count": cmp[PROTECTED]["count"],
                     "protected_mean_rd_causal": cmp[PROTECTED]["mean_rd_causal"],
                     "unprotected_count": cmp[UNPROTECTED]["count"],
                     "unprotected_mean_rd_causal": cmp[UNPROTECTED]["mean_rd_causal"]})
    frame = pd.DataFrame(rows)
    _csv(frame, _out(cfg) / "rule_comparison.csv")
    print(frame.to_string(index=False))


def cmd_tamper(args, cfg):
    data = load_from_config(cfg)
    spec = TamperSpec(args.rule, args.fraction, cfg.get("seed", 0))
    tampered, flipped = tamper(data, spec)
    out = _out(cfg)
    write_dataset(tampered, out / "tampered_dataset.csv")
    _json({"rule": str(spec.rule), "fraction": spec.fraction, "seed": spec.seed,
           "flipped_ids": flipped}, out / "tamper_manifest.json")
    print(f"flipped {len(flipped)} decisions")


def cmd_pipeline(args, cfg):
    bundle = run_pipeline(cfg, cfg.get("out"))
    print(json.dumps(bundle["summary"], indent=2, default=str))


COMMANDS = {
    "validate": cmd_validate, "propensity": cmd_propensity, "score": cmd_score,
    "trends": cmd_trends, "tree": cmd_tree, "rules": cmd_rules,
    "compare-rules": cmd_compare_rules, "tamper": cmd_tamper, "pipeline": cmd_pipeline,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        COMMANDS[args.command](args, cfg)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (CausalRDError, OSError, ValueError, KeyError) as exc:
        print(f"error: [{args.command}] {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
