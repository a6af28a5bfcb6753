"""Command line entry point: ``rulxai <stage> [options]``.

Options may also come from a ``key = value`` config file given with
``--config``; flags on the command line take precedence.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from . import pipeline as pl
from . import synthetic

FLAG_FIELDS = {
    "data": str, "out": str, "seed": int, "epochs": int, "top_k": int,
    "clusters": int, "fuzziness": float, "neighbors": int, "min_dist": float,
    "truth": str, "population": str, "learning_rate": float, "batch_size": int,
    "umap_epochs": int, "shap_background": int, "shap_coalitions": int,
    "train_fraction": float,
}


def parse_cases(text: str) -> tuple[int, ...]:
    try:
        cases = tuple(int(tok) for tok in text.replace(" ", "").split(",") if tok)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad case list {text!r}") from None
    if not cases:
        raise argparse.ArgumentTypeError("empty case list")
    return cases


def _to_bool(text: str) -> bool:
    return text.strip().lower() in ("1", "true", "yes", "on")


def read_config_file(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key == "cases":
            out[key] = parse_cases(value)
        elif key == "include_cycle":
            out[key] = _to_bool(value)
        elif key in FLAG_FIELDS:
            out[key] = FLAG_FIELDS[key](value)
        else:
            raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
    return out


def build_config(args: argparse.Namespace) -> pl.PipelineConfig:
    values = read_config_file(args.config) if args.config else {}
    for field in [*FLAG_FIELDS, "cases", "include_cycle"]:
        v = getattr(args, field, None)
        if v is not None:
            values[field] = v
    known = {f.name for f in dataclasses.fields(pl.PipelineConfig)}
    return pl.PipelineConfig(**{k: v for k, v in values.items() if k in known})


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", help="key = value file mirroring the flags")
    p.add_argument("--data", help="C-MAPSS run-to-failure text file")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--learning-rate", dest="learning_rate", type=float)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--train-fraction", dest="train_fraction", type=float)
    p.add_argument("--include-cycle", dest="include_cycle", action="store_const", const=True,
                   help="also use the cycle number as a model input")
    p.add_argument("--top-k", dest="top_k", type=int)
    p.add_argument("--clusters", type=int)
    p.add_argument("--fuzziness", type=float)
    p.add_argument("--neighbors", type=int)
    p.add_argument("--min-dist", dest="min_dist", type=float)
    p.add_argument("--umap-epochs", dest="umap_epochs", type=int)
    p.add_argument("--shap-background", dest="shap_background", type=int)
    p.add_argument("--shap-coalitions", dest="shap_coalitions", type=int,
                   help="KernelSHAP budget (default 2d + 2048)")
    p.add_argument("--cases", type=parse_cases, help="comma separated, e.g. 1,2")
    p.add_argument("--truth", choices=["ann", "piecewise"])
    p.add_argument("--population", choices=["test", "all"])
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rulxai", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    common = _common()
    for name, help_ in [
        ("ingest", "parse, filter, label, normalise and split the data"),
        ("train", "train the RUL regressor"),
        ("explain", "Shapley attributions and sensor ranking"),
        ("embed", "2D embeddings for the selected data cases"),
        ("cluster", "fuzzy c-means on the embeddings"),
        ("validate", "cluster validation metrics and comparison table"),
        ("run-all", "every stage for every selected case"),
    ]:
        sub.add_parser(name, parents=[common], help=help_)
    syn = sub.add_parser("synthetic", help="write a synthetic run-to-failure file")
    syn.add_argument("path")
    syn.add_argument("--units", type=int, default=100)
    syn.add_argument("--seed", type=int, default=0)
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    if args.command == "synthetic":
        synthetic.write_fleet(args.path, args.units, args.seed)
        print(args.path)
        return 0

    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = build_config(args)
        p = pl.Pipeline(config)
        if args.command == "ingest":
            p.ingest()
            meta = json.loads((p.out / "manifest.json").read_text()).get("dataset", {})
            print(f"rows={meta.get('rows')} retained={len(meta.get('retained_features', []))}")
        elif args.command == "train":
            p.train()
            print((p.out / "train" / "history.csv").read_text().splitlines()[-1])
        elif args.command == "explain":
            p.explain()
            print("top features:", ", ".join(p.top_features()))
        elif args.command == "embed":
            for c in config.cases:
                p.embed_case(c)
        elif args.command == "cluster":
            for c in config.cases:
                p.cluster_case(c)
        elif args.command == "validate":
            results = {c: p.validate_case(c) for c in config.cases}
            pl.write_comparison(results, p.out)
            print(pl.format_comparison(results))
        elif args.command == "run-all":
            print(pl.format_comparison(p.run_all()))
    except (pl.PipelineError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
