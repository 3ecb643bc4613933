"""Perplexity x iteration-budget grid with a distribution-form label per cell.

The form labels (uniform / clustered / discrete) are qualitative in the
source material; here they are decided by two metrics of the embedding:
the k-means silhouette and the coefficient of variation of
nearest-neighbour distances.  The thresholds are plain module constants,
not derived values.
"""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace

import numpy as np

from .cluster import kmeans_fit, silhouette
from .tsne_core import TsneConfig, pairwise_sq_dists, run_tsne

SILHOUETTE_THRESHOLD = 0.35
NN_CV_THRESHOLD = 1.0
FORMS = ("uniform", "clustered", "discrete")


@dataclass(frozen=True)
class SweepCell:
    perplexity: float
    max_iters: int
    final_kl: float
    silhouette_at_k: float
    nn_dist_cv: float
    form: str
    seed: int

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class SweepResult:
    cells: list[SweepCell]  # one per (perplexity, iters), grid order
    runs: list[SweepCell]  # every (perplexity, iters, seed) run


def nn_dist_cv(coords) -> float:
    d = np.sqrt(pairwise_sq_dists(coords))
    np.fill_diagonal(d, np.inf)
    nn = d.min(axis=1)
    mean = nn.mean()
    if mean == 0:
        return 0.0
    return float(nn.std() / mean)


def classify_form(
    silhouette_at_k: float,
    nn_cv: float,
    sil_threshold: float = SILHOUETTE_THRESHOLD,
    cv_threshold: float = NN_CV_THRESHOLD,
) -> str:
    if silhouette_at_k >= sil_threshold:
        return "clustered"
    if nn_cv >= cv_threshold:
        return "discrete"
    return "uniform"


def distribution_metrics(coords, k: int, seed: int = 0) -> tuple[float, float]:
    coords = np.asarray(coords, dtype=float)
    if coords.shape[0] < 2 * k:
        raise ValueError(f"need at least 2k points (n={coords.shape[0]}, k={k})")
    labels = kmeans_fit(coords, k, seed=seed).labels
    if k < 2:
        sil = 0.0
    else:
        sil = silhouette(coords, labels)
    return sil, nn_dist_cv(coords)


def classify_distribution(embedding, k: int, seed: int = 0, **thresholds) -> str:
    coords = getattr(embedding, "coords", embedding)
    return classify_form(*distribution_metrics(coords, k, seed), **thresholds)


def _scaled(phase: int, iters: int, base_iters: int) -> int:
    # keep the exaggeration/momentum phases at the same fraction of the budget,
    # so short budgets still spend most iterations on the un-exaggerated objective
    if base_iters <= 0:
        return min(phase, iters)
    return min(iters, int(round(phase * iters / base_iters)))


def _run_cell(args) -> SweepCell:
    x, region_ids, base_cfg, perplexity, iters, seed, k, thresholds = args
    cfg = replace(
        base_cfg,
        perplexity=perplexity,
        max_iters=iters,
        exaggeration_iters=_scaled(base_cfg.exaggeration_iters, iters, base_cfg.max_iters),
        momentum_switch_iter=_scaled(base_cfg.momentum_switch_iter, iters, base_cfg.max_iters),
        seed=seed,
    )
    emb = run_tsne(x, cfg, region_ids=region_ids)
    sil, cv = distribution_metrics(emb.coords, k, seed=seed + 1)
    return SweepCell(float(perplexity), int(iters), emb.final_kl, sil, cv, classify_form(sil, cv, **thresholds), seed)


def default_workers() -> int:
    env = os.environ.get("RISKMAP_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def run_sweep(
    fm,
    perplexities,
    iter_budgets,
    k: int,
    seeds,
    base_cfg: TsneConfig = TsneConfig(),
    workers: int = 1,
    sil_threshold: float = SILHOUETTE_THRESHOLD,
    cv_threshold: float = NN_CV_THRESHOLD,
) -> SweepResult:
    """One t-SNE + k-means per (perplexity, iters, seed); seeds reduced by median.

    Each aggregated cell is the run whose silhouette is the (lower) median
    across seeds, so its form always matches its own metrics.
    """
    x = np.asarray(getattr(fm, "values", fm), dtype=float)
    n = x.shape[0]
    region_ids = tuple(getattr(fm, "region_ids", (str(i) for i in range(n))))
    seeds = list(seeds)
    if not seeds:
        raise ValueError("at least one seed is required")
    for p in perplexities:
        if p >= n:
            raise ValueError(f"perplexity must be < n (got {p} with n={n})")
    thresholds = {"sil_threshold": sil_threshold, "cv_threshold": cv_threshold}
    jobs = [
        (x, region_ids, base_cfg, float(p), int(it), int(s), k, thresholds)
        for p in perplexities
        for it in iter_budgets
        for s in seeds
    ]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            runs = list(pool.map(_run_cell, jobs))
    else:
        runs = [_run_cell(j) for j in jobs]

    cells = []
    per = len(seeds)
    for start in range(0, len(runs), per):
        group = runs[start:start + per]
        ranked = sorted(range(per), key=lambda i: (group[i].silhouette_at_k, i))
        cells.append(group[ranked[(per - 1) // 2]])
    return SweepResult(cells, runs)


CSV_HEADER = ("perplexity", "iters", "final_kl", "silhouette", "nn_cv", "form")


def sweep_to_csv(cells) -> str:
    lines = [",".join(CSV_HEADER)]
    for c in cells:
        lines.append(
            f"{c.perplexity!r},{c.max_iters},{c.final_kl!r},{c.silhouette_at_k!r},{c.nn_dist_cv!r},{c.form}"
        )
    return "\n".join(lines) + "\n"


def format_table(cells) -> str:
    """Plain-text table laid out like a perplexity-by-budget comparison."""
    perps = list(dict.fromkeys(c.perplexity for c in cells))
    iters = list(dict.fromkeys(c.max_iters for c in cells))
    by_key = {(c.perplexity, c.max_iters): c for c in cells}
    cols = [(p, it) for p in perps for it in iters if (p, it) in by_key]
    rows = [
        ("perplexity", [f"P={p:g}" for p, _ in cols]),
        ("iterations", [f"L={it}" for _, it in cols]),
        ("final KL", [f"{by_key[c].final_kl:.4f}" for c in cols]),
        ("silhouette", [f"{by_key[c].silhouette_at_k:.3f}" for c in cols]),
        ("nn dist CV", [f"{by_key[c].nn_dist_cv:.3f}" for c in cols]),
        ("form", [by_key[c].form for c in cols]),
    ]
    head = max(len(r[0]) for r in rows)
    widths = [max(len(r[1][i]) for r in rows) for i in range(len(cols))]
    out = []
    for name, vals in rows:
        out.append("  ".join([name.ljust(head)] + [v.ljust(w) for v, w in zip(vals, widths)]).rstrip())
    return "\n".join(out)
