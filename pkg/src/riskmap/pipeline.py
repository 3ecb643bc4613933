"""End-to-end run: panel -> feature matrix -> embedding -> k-means -> tiers."""
from __future__ import annotations

from dataclasses import asdict, dataclass, replace

from . import __version__
from .cluster import adjusted_rand, assign_tiers, kmeans_fit, silhouette
from .index_engine import Weights, build_feature_matrix, standardize
from .panel_data import PanelDataset, impute_mean
from .pca_baseline import pca_fit, pca_project, rank_regions
from .report import PipelineReport, cost_trace_csv, embedding_csv, render_svg
from .tsne_core import TsneConfig, run_tsne

SCOPE_DEFAULTS = {
    "provinces": {"perplexity": 5.0, "k": 4, "iters": 1000},
    "cities": {"perplexity": 30.0, "k": 7, "iters": 5000},
    "all": {"perplexity": 30.0, "k": 7, "iters": 1000},
}

KMEANS_SEED_OFFSET = 1
SYNTH_SEED_OFFSET = 2


@dataclass(frozen=True)
class EmbedOptions:
    method: str = "tsne"
    scope: str = "provinces"
    perplexity: float | None = None
    exaggeration: float = 12.0
    exaggeration_iters: int = 250
    lr: float = 200.0
    iters: int | None = None
    k: int | None = None
    seed: int = 0
    standardize: bool = True
    national: str = "require"
    impute: str = "none"
    init: str = "kmeans++"
    restarts: int = 10
    labels: bool = False

    def resolved(self) -> EmbedOptions:
        d = SCOPE_DEFAULTS[self.scope]
        return replace(
            self,
            perplexity=d["perplexity"] if self.perplexity is None else float(self.perplexity),
            k=d["k"] if self.k is None else self.k,
            iters=d["iters"] if self.iters is None else self.iters,
        )

    def tsne_config(self) -> TsneConfig:
        o = self.resolved()
        return TsneConfig(
            perplexity=o.perplexity,
            exaggeration_factor=o.exaggeration,
            exaggeration_iters=min(o.exaggeration_iters, o.iters),
            learning_rate=o.lr,
            max_iters=o.iters,
            momentum_switch_iter=min(250, o.iters),
            seed=o.seed,
        )


@dataclass
class EmbedResult:
    report: PipelineReport
    embedding_csv: str
    scatter_svg: str
    trace_csv: str | None


def prepare_features(ds: PanelDataset, opts: EmbedOptions):
    if opts.impute == "mean":
        ds = impute_mean(ds)
    fm = build_feature_matrix(ds, opts.scope, Weights(), national=opts.national)
    return standardize(fm) if opts.standardize else fm


def run_embed(ds: PanelDataset, opts: EmbedOptions, truth: dict | None = None) -> EmbedResult:
    """Run the whole pipeline.  ``truth`` (region_id -> label) adds an ARI metric."""
    opts = opts.resolved()
    fm = prepare_features(ds, opts)
    n = fm.n
    if not 1 <= opts.k <= n:
        raise ValueError(f"k must satisfy 1 <= k <= n (k={opts.k}, n={n})")

    config = asdict(opts)
    metrics: dict = {}
    pca_info = None
    if opts.method == "tsne":
        cfg = opts.tsne_config()
        if cfg.perplexity >= n:
            raise ValueError(f"perplexity must be < n (got {cfg.perplexity:g} with n={n})")
        emb = run_tsne(fm, cfg)
        config["tsne"] = cfg.to_dict()
        metrics["final_kl"] = emb.final_kl
        metrics["unconverged_rows"] = list(emb.unconverged_rows)
    elif opts.method == "pca":
        model = pca_fit(fm)
        emb = pca_project(model, fm)
        pca_info = model.to_dict()
        pca_info["ranking"] = [[rid, s] for rid, s in rank_regions(emb)]
        metrics["explained_variance_ratio"] = model.explained_variance_ratio.tolist()
    else:
        raise ValueError(f"unknown method {opts.method!r}")

    clustering = kmeans_fit(emb.coords, opts.k, restarts=opts.restarts,
                            seed=opts.seed + KMEANS_SEED_OFFSET, init=opts.init)
    tiers = assign_tiers(clustering, fm)
    metrics["inertia"] = clustering.inertia
    metrics["silhouette"] = silhouette(emb.coords, clustering.labels) if opts.k >= 2 else None
    if truth is not None:
        metrics["ari_vs_truth"] = adjusted_rand([truth[r] for r in fm.region_ids], clustering.labels)

    report = PipelineReport(
        tool_version=__version__,
        seed=opts.seed,
        method=opts.method,
        config=config,
        input_summary={
            "regions": len(ds.regions),
            "observations": len(ds.observations),
            "months": ds.months,
            "mode": ds.mode,
            "rows": n,
            "features": fm.d,
        },
        embedding={
            "region_ids": list(emb.region_ids),
            "coords": emb.coords.tolist(),
            "cost_trace": [[it, kl] for it, kl in emb.cost_trace],
        },
        clustering=clustering.to_dict(),
        tiers=tiers.to_dict(),
        metrics=metrics,
        pca=pca_info,
    )
    return EmbedResult(
        report=report,
        embedding_csv=embedding_csv(emb.region_ids, emb.coords, clustering.labels, tiers.region_tiers),
        scatter_svg=render_svg(emb.coords, clustering.labels, emb.region_ids, show_labels=opts.labels),
        trace_csv=cost_trace_csv(emb.cost_trace) if emb.cost_trace else None,
    )

