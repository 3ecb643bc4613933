"""Synthetic panels with planted tier structure.

Values follow ``tier_mean * business_factor * month_drift * noise`` where the
business factor and noise are log-normal, so every value stays positive.
Tier membership is shuffled over region ids by the seed; use
:func:`planted_labels` to recover it.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .panel_data import BUSINESSES, NO_INDICATOR, Observation, PanelDataset, RegionRecord, month_range

START_MONTH = "2014-01"


def _default_imbalance(n_tiers: int) -> tuple[float, ...]:
    return tuple(0.0 if t in (0, n_tiers - 1) else 0.4 for t in range(n_tiers))


@dataclass(frozen=True)
class SynthConfig:
    tier_means: tuple[float, ...] = (8.0, 3.0, 1.5, 0.6)
    tier_sizes: tuple[int, ...] = (4, 7, 9, 11)
    months: int = 24
    noise_std: float = 0.15
    imbalance_std: tuple[float, ...] | None = None
    seed: int = 0
    admin_level: str = "province"
    id_prefix: str = "P"

    def __post_init__(self):
        object.__setattr__(self, "tier_means", tuple(float(m) for m in self.tier_means))
        object.__setattr__(self, "tier_sizes", tuple(int(s) for s in self.tier_sizes))
        if len(self.tier_means) != len(self.tier_sizes):
            raise ValueError("tier_means and tier_sizes must have equal length")
        if any(a <= b for a, b in zip(self.tier_means, self.tier_means[1:])):
            raise ValueError("tier_means must be strictly descending")
        if any(m <= 0 for m in self.tier_means) or any(s < 1 for s in self.tier_sizes):
            raise ValueError("tier means must be positive and sizes at least 1")
        if self.months < 1 or self.noise_std < 0:
            raise ValueError("months must be >= 1 and noise_std >= 0")
        if self.imbalance_std is None:
            object.__setattr__(self, "imbalance_std", _default_imbalance(len(self.tier_means)))
        else:
            imb = self.imbalance_std
            if isinstance(imb, (int, float)):
                imb = (float(imb),) * len(self.tier_means)
            object.__setattr__(self, "imbalance_std", tuple(float(s) for s in imb))
            if len(self.imbalance_std) != len(self.tier_means):
                raise ValueError("imbalance_std needs one entry per tier")

    @property
    def n_regions(self) -> int:
        return sum(self.tier_sizes)

    def region_ids(self) -> list[str]:
        width = len(str(self.n_regions))
        return [f"{self.id_prefix}{i + 1:0{width}d}" for i in range(self.n_regions)]

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def province_config(seed: int = 0, **overrides) -> SynthConfig:
    return SynthConfig(seed=seed, **overrides)


def city_config(seed: int = 0, **overrides) -> SynthConfig:
    """Seven city groups over 335 regions, means spaced by roughly 1.8x."""
    params = dict(
        tier_means=(12.0, 6.5, 3.6, 2.0, 1.1, 0.6, 0.33),
        tier_sizes=(10, 25, 40, 55, 65, 70, 70),
        imbalance_std=(0.0, 0.15, 0.15, 0.15, 0.15, 0.15, 0.0),
        admin_level="city",
        id_prefix="C",
        seed=seed,
    )
    params.update(overrides)
    return SynthConfig(**params)


def planted_labels(cfg: SynthConfig) -> dict[str, int]:
    """region_id -> planted tier index (0 = highest)."""
    rng = np.random.default_rng([cfg.seed, 1])
    tiers = np.repeat(np.arange(len(cfg.tier_sizes)), cfg.tier_sizes)
    rng.shuffle(tiers)
    return {rid: int(t) for rid, t in zip(cfg.region_ids(), tiers)}


def synth_panel(cfg: SynthConfig = SynthConfig()) -> PanelDataset:
    labels = planted_labels(cfg)
    rng = np.random.default_rng([cfg.seed, 2])
    T, B = cfg.months, len(BUSINESSES)
    drift = np.linspace(1.0, 1.2, T) if T > 1 else np.ones(1)
    regions = []
    obs = []
    for rid in cfg.region_ids():
        tier = labels[rid]
        factor = np.exp(rng.normal(0.0, 1.0, B) * cfg.imbalance_std[tier])
        noise = np.exp(rng.normal(0.0, 1.0, (B, T)) * cfg.noise_std)
        values = cfg.tier_means[tier] * factor[:, None] * drift[None, :] * noise
        regions.append(RegionRecord(rid, f"Synthetic {cfg.admin_level} {rid}", cfg.admin_level))
        for bi, b in enumerate(BUSINESSES):
            for t in range(T):
                obs.append(Observation(rid, b, NO_INDICATOR, t, float(values[bi, t])))
    return PanelDataset(tuple(regions), tuple(obs), month_range(START_MONTH, T), "precomputed_coefficients")


def merge_panels(*panels: PanelDataset) -> PanelDataset:
    first = panels[0]
    for p in panels[1:]:
        if p.month_labels != first.month_labels or p.mode != first.mode:
            raise ValueError("panels differ in months or mode")
    return PanelDataset(
        tuple(r for p in panels for r in p.regions),
        tuple(o for p in panels for o in p.observations),
        first.month_labels,
        first.mode,
    )


def synth_full_panel(seed: int = 0) -> PanelDataset:
    """31 provinces plus 335 cities: 366 regions x 4 businesses x 24 months."""
    return merge_panels(synth_panel(province_config(seed)), synth_panel(city_config(seed)))
