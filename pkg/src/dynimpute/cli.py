"""Command-line interface: ``run``, ``synthgen``, ``summarize`` and ``impute``."""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys

import numpy as np

from .datamodel import LM, apply_lumen_rules, transform_labs
from .exceptions import ConfigError, ValidationError
from .harness import ExperimentConfig, build_cohort, load_config_file, run_experiment, summarize_dir
from .io import read_rows, write_episodes
from .serialization import load_model


def _cmd_run(args):
    raw = load_config_file(args.config)
    if args.out:
        raw["output_dir"] = args.out
    if args.n_jobs is not None:
        raw["n_jobs"] = args.n_jobs
    config = ExperimentConfig.from_dict(raw)
    if not config.output_dir:
        raise ConfigError("no output directory: set output_dir in the config or pass --out")
    result = run_experiment(config)
    cells = result.summary["cells"]
    print(f"wrote results to {config.output_dir}: " + ", ".join(f"{k}={v}" for k, v in sorted(cells.items())))
    return result.exit_code


def _cmd_synthgen(args):
    raw = load_config_file(args.config)
    data = raw.get("data", raw)
    frame, schema = build_cohort(data)
    frame = frame.drop(columns=[c for c in frame.columns if c not in
                                ("ID", "admission_id", "LM", "eventtime", "type", *schema.names)])
    write_episodes(frame, args.out, schema)
    print(f"wrote {frame['ID'].nunique()} episodes ({len(frame)} rows) to {args.out}")
    return 0


def _cmd_summarize(args):
    summary = summarize_dir(args.in_dir)
    for rec in summary["runtimes"]:
        if "median" in rec:
            print(f"{rec['strategy']:<22} {rec['phase']:<8} median {rec['median']:.3f}s "
                  f"(IQR {rec['q25']:.3f}, {rec['q75']:.3f})")
    print(f"summary written to {args.in_dir}/summary.json")
    return 0


def _clean(v):
    v = float(v)
    return None if math.isnan(v) else v


def _cmd_impute(args):
    imputer = load_model(args.model)
    schema = imputer.schema
    frame = read_rows(args.row, schema)
    if frame["ID"].nunique() != 1:
        raise ValidationError("the row file must hold the landmark history of a single episode")
    frame = transform_labs(apply_lumen_rules(frame, schema), schema)
    logged = schema.log_names
    completions = imputer.impute_row(frame)
    names = list(imputer.get_feature_names_out())
    eid = frame["ID"].iloc[0]
    eid = eid.item() if hasattr(eid, "item") else eid
    out = []
    for row in completions:
        rec = {"ID": eid, "LM": int(row[LM])}
        for name in names:
            value = row[name]
            rec[name] = _clean(np.exp(value) if name in logged else value)
        out.append(rec)
    text = json.dumps({"strategy": imputer.strategy, "completions": out}, indent=2)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        print(text)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="dynimpute", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a repeated-split experiment")
    p.add_argument("--config", required=True, help="TOML or JSON experiment config")
    p.add_argument("--out", help="output directory (overrides the config)")
    p.add_argument("--n-jobs", type=int, help="parallel cells (overrides the config)")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("synthgen", help="write a synthetic episode file")
    p.add_argument("--config", required=True, help="TOML or JSON generator config")
    p.add_argument("--out", required=True, help="episode file (.csv or .json)")
    p.set_defaults(func=_cmd_synthgen)

    p = sub.add_parser("summarize", help="summarize the CSV results of a run")
    p.add_argument("--in", dest="in_dir", required=True, help="run output directory")
    p.set_defaults(func=_cmd_summarize)

    p = sub.add_parser("impute", help="complete the last landmark row of one episode")
    p.add_argument("--model", required=True, help="saved imputer model file")
    p.add_argument("--row", required=True, help="episode file with the episode's landmark rows")
    p.add_argument("--out", help="write JSON here instead of stdout")
    p.set_defaults(func=_cmd_impute)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ValidationError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
