"""Output artifacts: embedding CSV, cost trace CSV, JSON report and SVG scatter."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from xml.sax.saxutils import escape

import numpy as np

PALETTE = (
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
)
WIDTH, HEIGHT = 800, 600
MARGIN = 0.05


@dataclass
class PipelineReport:
    tool_version: str
    seed: int
    method: str
    config: dict
    input_summary: dict
    embedding: dict
    clustering: dict | None = None
    tiers: dict | None = None
    metrics: dict = field(default_factory=dict)
    pca: dict | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, data: dict) -> PipelineReport:
        return cls(**data)

    @classmethod
    def from_json(cls, text: str) -> PipelineReport:
        return cls.from_dict(json.loads(text))


def embedding_csv(region_ids, coords, clusters=None, tiers=None) -> str:
    lines = ["region_id,x,y,cluster,tier"]
    for i, rid in enumerate(region_ids):
        cluster = "" if clusters is None else str(int(clusters[i]))
        tier = "" if tiers is None else tiers.get(rid, "")
        lines.append(f"{rid},{float(coords[i, 0])!r},{float(coords[i, 1])!r},{cluster},{tier}")
    return "\n".join(lines) + "\n"


def cost_trace_csv(trace) -> str:
    return "iter,kl\n" + "".join(f"{it},{kl!r}\n" for it, kl in trace)


def _axis_map(values: np.ndarray, size: float, flip: bool):
    lo, hi = float(values.min()), float(values.max())
    span = hi - lo
    if span <= 0:
        span = 1.0
        lo -= 0.5
    pad = MARGIN * span
    lo, span = lo - pad, span + 2 * pad
    if flip:
        return lambda v: size - (v - lo) / span * size
    return lambda v: (v - lo) / span * size


def render_svg(coords, labels=None, region_ids=None, show_labels: bool = False, title: str | None = None) -> str:
    """Scatter plot as a standalone SVG; identical input gives identical bytes."""
    coords = np.asarray(coords, dtype=float)
    if coords.ndim != 2 or coords.shape[0] == 0:
        raise ValueError("embedding must be a nonempty n x 2 array")
    n = coords.shape[0]
    labels = np.zeros(n, dtype=int) if labels is None else np.asarray(labels)
    fx = _axis_map(coords[:, 0], WIDTH, flip=False)
    fy = _axis_map(coords[:, 1], HEIGHT, flip=True)
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {WIDTH} {HEIGHT}" '
        f'width="{WIDTH}" height="{HEIGHT}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="#ffffff"/>',
    ]
    if title:
        out.append(f"<title>{escape(title)}</title>")
    out.append('<g stroke="#333333" stroke-width="0.5">')
    for i in range(n):
        color = PALETTE[int(labels[i]) % len(PALETTE)]
        out.append(f'<circle cx="{fx(coords[i, 0]):.3f}" cy="{fy(coords[i, 1]):.3f}" r="5" fill="{color}"/>')
    out.append("</g>")
    if show_labels and region_ids is not None:
        out.append('<g font-family="sans-serif" font-size="10" fill="#000000">')
        for i, rid in enumerate(region_ids):
            out.append(f'<text x="{fx(coords[i, 0]) + 6:.3f}" y="{fy(coords[i, 1]) + 3:.3f}">{escape(str(rid))}</text>')
        out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"
