"""``riskmap`` command line.

Exit codes: 0 success, 1 validation failure, 2 usage / parse error,
3 numerical divergence.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .cluster import ROMAN
from .index_engine import SCOPES, feature_matrix_to_csv
from .panel_data import PanelError, parse_panel, serialize_panel, validate_panel
from .pipeline import SCOPE_DEFAULTS, SYNTH_SEED_OFFSET, EmbedOptions, prepare_features, run_embed
from .sweep_harness import default_workers, format_table, run_sweep, sweep_to_csv
from .synth_data import city_config, merge_panels, planted_labels, province_config, synth_panel
from .tsne_core import TsneConfig, TsneDivergenceError

EXIT_OK, EXIT_INVALID, EXIT_USAGE, EXIT_DIVERGED = 0, 1, 2, 3

MODE_NAMES = {"precomputed": "precomputed_coefficients", "raw": "raw_indicators"}


class UsageError(Exception):
    pass


def _csv_list(cast):
    def parse(text):
        try:
            return [cast(v) for v in text.split(",") if v.strip()]
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected a comma-separated list, got {text!r}") from None
    return parse


def _add_input(p):
    p.add_argument("input_csv", type=Path, help="panel CSV (region_id,region_name,admin_level,business,indicator,month,value)")
    p.add_argument("--mode", choices=sorted(MODE_NAMES), default="precomputed",
                   help="value column holds precomputed coefficients or raw indicators")


def _add_features(p):
    p.add_argument("--scope", choices=sorted(SCOPES), default="provinces")
    p.add_argument("--no-standardize", dest="standardize", action="store_false")
    p.add_argument("--national", choices=["require", "aggregate"], default="require",
                   help="raw mode: require a national record, or average regions when it is absent")
    p.add_argument("--impute", choices=["none", "mean"], default="none")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="riskmap", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a panel for missing or duplicate cells")
    _add_input(p)

    p = sub.add_parser("embed", help="t-SNE or PCA embedding, k-means tiers, CSV/JSON/SVG outputs")
    _add_input(p)
    _add_features(p)
    p.add_argument("--method", choices=["tsne", "pca"], default="tsne")
    p.add_argument("--perplexity", type=float)
    p.add_argument("--exaggeration", type=float, default=12.0)
    p.add_argument("--exaggeration-iters", type=int, default=250)
    p.add_argument("--lr", type=float, default=200.0)
    p.add_argument("--iters", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--init", choices=["kmeans++", "random"], default="kmeans++")
    p.add_argument("--restarts", type=int, default=10)
    p.add_argument("--labels", action="store_true", help="write region ids next to points in the SVG")
    p.add_argument("--out", type=Path, default=Path("."), help="output directory")

    p = sub.add_parser("sweep", help="perplexity x iteration grid with distribution-form labels")
    _add_input(p)
    _add_features(p)
    p.add_argument("--perplexities", type=_csv_list(float), default=[5.0, 10.0, 20.0])
    p.add_argument("--iters", type=_csv_list(int), default=[200, 500])
    p.add_argument("--seeds", type=int, default=5, help="number of seeds per cell")
    p.add_argument("--seed", type=int, default=0, help="base seed; cell seeds are base + index")
    p.add_argument("--k", type=int)
    p.add_argument("--exaggeration", type=float, default=12.0)
    p.add_argument("--lr", type=float, default=200.0)
    p.add_argument("--out", type=Path, default=Path("."))

    p = sub.add_parser("synth", help="write a synthetic panel with planted tiers")
    p.add_argument("--scope", choices=sorted(SCOPES), default="provinces")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise-std", type=float)
    p.add_argument("--out", type=Path, required=True, help="panel CSV path")
    p.add_argument("--truth", type=Path, help="also write region_id,tier ground truth here")

    p = sub.add_parser("features", help="write the region x feature matrix as CSV")
    _add_input(p)
    _add_features(p)
    p.add_argument("--out", type=Path, required=True)
    return parser


def _load(args):
    try:
        data = args.input_csv.read_bytes()
    except OSError as exc:
        raise UsageError(f"cannot read {args.input_csv}: {exc}") from None
    try:
        return parse_panel(data, MODE_NAMES[args.mode])
    except PanelError as exc:
        raise UsageError(f"{args.input_csv}: {exc}") from None


def _check_complete(ds, scope, impute) -> bool:
    if impute == "mean":
        return True
    report = validate_panel(ds.subset(SCOPES[scope]))
    if not report.is_complete:
        print(json.dumps(report.to_dict(), indent=2))
        print(f"panel incomplete: {len(report.missing_cells)} missing, "
              f"{len(report.duplicate_cells)} duplicate cells", file=sys.stderr)
    return report.is_complete


def cmd_validate(args) -> int:
    ds = _load(args)
    report = validate_panel(ds)
    print(json.dumps(report.to_dict(), indent=2))
    return EXIT_OK if report.is_complete else EXIT_INVALID


def cmd_embed(args) -> int:
    ds = _load(args)
    if not _check_complete(ds, args.scope, args.impute):
        return EXIT_INVALID
    opts = EmbedOptions(
        method=args.method, scope=args.scope, perplexity=args.perplexity,
        exaggeration=args.exaggeration, exaggeration_iters=args.exaggeration_iters,
        lr=args.lr, iters=args.iters, k=args.k, seed=args.seed,
        standardize=args.standardize, national=args.national, impute=args.impute,
        init=args.init, restarts=args.restarts, labels=args.labels,
    )
    try:
        if args.method == "tsne":
            opts.tsne_config()
        result = run_embed(ds, opts)
    except (ValueError, PanelError) as exc:
        raise UsageError(str(exc)) from None

    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    (out / "embedding.csv").write_text(result.embedding_csv)
    (out / "report.json").write_text(result.report.to_json())
    (out / "scatter.svg").write_text(result.scatter_svg)
    if result.trace_csv is not None:
        (out / "cost_trace.csv").write_text(result.trace_csv)

    r = result.report
    tiers = r.tiers["region_tiers"]
    print(f"{r.method} embedding of {r.input_summary['rows']} regions ({args.scope}), k={r.clustering['k']}")
    if r.method == "tsne":
        print(f"final KL {r.metrics['final_kl']:.4f}")
    else:
        evr = r.metrics["explained_variance_ratio"]
        print(f"explained variance ratio {evr[0]:.3f}, {evr[1]:.3f}")
    if r.metrics.get("silhouette") is not None:
        print(f"silhouette {r.metrics['silhouette']:.3f}")
    for tier in dict.fromkeys(sorted(r.tiers["tier_of_cluster"].values(), key=_tier_rank)):
        members = [rid for rid, t in tiers.items() if t == tier]
        print(f"tier {tier:>4}: {len(members):3d}  {' '.join(members)}")
    print(f"wrote {out / 'embedding.csv'}, {out / 'report.json'}, {out / 'scatter.svg'}")
    return EXIT_OK


def _tier_rank(tier: str) -> int:
    return ROMAN.index(tier) if tier in ROMAN else int(tier)


def cmd_sweep(args) -> int:
    ds = _load(args)
    if not _check_complete(ds, args.scope, args.impute):
        return EXIT_INVALID
    if args.seeds < 1:
        raise UsageError("--seeds must be >= 1")
    if not args.perplexities or not args.iters:
        raise UsageError("--perplexities and --iters must be nonempty")
    k = args.k if args.k is not None else SCOPE_DEFAULTS[args.scope]["k"]
    opts = EmbedOptions(scope=args.scope, standardize=args.standardize, national=args.national, impute=args.impute)
    try:
        fm = prepare_features(ds, opts)
        base = TsneConfig(exaggeration_factor=args.exaggeration, learning_rate=args.lr)
        result = run_sweep(
            fm, args.perplexities, args.iters, k,
            seeds=[args.seed + i for i in range(args.seeds)],
            base_cfg=base, workers=default_workers(),
        )
    except (ValueError, PanelError) as exc:
        raise UsageError(str(exc)) from None
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "sweep.csv").write_text(sweep_to_csv(result.cells))
    (args.out / "sweep_runs.csv").write_text(_runs_csv(result.runs))
    print(format_table(result.cells))
    return EXIT_OK


def _runs_csv(runs) -> str:
    lines = ["perplexity,iters,seed,final_kl,silhouette,nn_cv,form"]
    for c in runs:
        lines.append(f"{c.perplexity!r},{c.max_iters},{c.seed},{c.final_kl!r},"
                     f"{c.silhouette_at_k!r},{c.nn_dist_cv!r},{c.form}")
    return "\n".join(lines) + "\n"


def cmd_synth(args) -> int:
    seed = args.seed + SYNTH_SEED_OFFSET
    overrides = {} if args.noise_std is None else {"noise_std": args.noise_std}
    configs = {
        "provinces": [province_config(seed, **overrides)],
        "cities": [city_config(seed, **overrides)],
        "all": [province_config(seed, **overrides), city_config(seed, **overrides)],
    }[args.scope]
    ds = merge_panels(*(synth_panel(c) for c in configs))
    args.out.parent.mkdir(parents=True, exist_ok=True)
    args.out.write_text(serialize_panel(ds))
    if args.truth:
        lines = ["region_id,tier"]
        for cfg in configs:
            lines += [f"{rid},{t}" for rid, t in planted_labels(cfg).items()]
        args.truth.write_text("\n".join(lines) + "\n")
    print(f"wrote {len(ds.observations)} observations for {len(ds.regions)} regions to {args.out}")
    return EXIT_OK


def cmd_features(args) -> int:
    ds = _load(args)
    if not _check_complete(ds, args.scope, args.impute):
        return EXIT_INVALID
    opts = EmbedOptions(scope=args.scope, standardize=args.standardize, national=args.national, impute=args.impute)
    try:
        fm = prepare_features(ds, opts)
    except (ValueError, PanelError) as exc:
        raise UsageError(str(exc)) from None
    args.out.write_text(feature_matrix_to_csv(fm))
    print(f"wrote {fm.n} x {fm.d} feature matrix to {args.out}")
    return EXIT_OK


COMMANDS = {
    "validate": cmd_validate,
    "embed": cmd_embed,
    "sweep": cmd_sweep,
    "synth": cmd_synth,
    "features": cmd_features,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"riskmap: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TsneDivergenceError as exc:
        print(f"riskmap: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
