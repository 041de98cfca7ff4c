"""Deterministic generators for benchmark-shaped tabular fairness corpora.

Real deployments point the experiment config at their own CSV files; the
generators here produce desk-scale stand-ins with the same column flavor,
class-imbalance ratios and group structure as the usual benchmarks (adult,
bank, default, law, kdd), so every pipeline stage runs end to end without
external downloads.

The generative story has two latent causes of a positive label: a smooth
"skill" factor and a binary "tier" shortcut whose prevalence differs
strongly between sensitive groups. Features expose the tier sharply and the
skill only noisily, over a wide surface of binned categorical columns (the
wide one-hot encoding is what lets small-step SGD make progress, as on the
real one-hot encoded benchmarks). A classifier therefore converges to
firing on the tier, which reproduces the benchmark pattern of a large group
gap in positive predictions at mediocre accuracy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from .data import DatasetSchema


@dataclass(frozen=True)
class SynthSpec:
    """Knobs for one generated corpus.

    pos_rates are the per-group P(label positive) and tier_rates the
    per-group P(tier high); tier_purity is the per-group target
    P(label positive | tier high); signal scales the smooth skill's pull on
    the label within a tier; visibility and tier_flip control how cleanly
    features expose the skill and the tier.
    """

    name: str
    n_rows: int
    group_column: str
    group_values: tuple[str, ...]
    group_fracs: tuple[float, ...]
    pos_rates: tuple[float, ...]
    tier_rates: tuple[float, ...]
    mid_rates: tuple[float, ...]
    tier_purity: tuple[float, ...]
    mid_purity: float
    label_column: str
    label_values: tuple[str, str]  # (negative, positive)
    signal: float
    visibility: float
    tier_mix: float
    tier_flip: float
    tier_views: int
    cat_columns: int
    cat_bins: int
    cat_noise: float
    base_seed: int

    def band_names(self) -> list[str]:
        return [f"band{i:02d}" for i in range(self.cat_columns)]

    def tier_view_names(self) -> list[str]:
        return [f"tier_{chr(ord('a') + i)}" for i in range(self.tier_views)]


_HERM_NODES, _HERM_WEIGHTS = np.polynomial.hermite_e.hermegauss(61)
_HERM_WEIGHTS = _HERM_WEIGHTS / _HERM_WEIGHTS.sum()


def _mean_sigmoid(signal: float, c: float) -> float:
    return float(_HERM_WEIGHTS @ (1.0 / (1.0 + np.exp(-(signal * _HERM_NODES + c)))))


def _solve_intercept(signal: float, target_rate: float) -> float:
    # E_{t~N(0,1)}[sigmoid(signal*t + c)] = target_rate, by bisection.
    lo, hi = -30.0, 30.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if _mean_sigmoid(signal, mid) < target_rate:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


ADULT = SynthSpec(
    name="adult", n_rows=36000,
    group_column="sex", group_values=("Female", "Male"), group_fracs=(0.33, 0.67),
    pos_rates=(0.115, 0.333), tier_rates=(0.13, 0.545), mid_rates=(0.0, 0.12),
    tier_purity=(0.52, 0.54), mid_purity=0.30,
    label_column="income", label_values=("<=50K", ">50K"),
    signal=0.25, visibility=0.25, tier_mix=1.5, tier_flip=0.012, tier_views=24,
    cat_columns=16, cat_bins=8, cat_noise=1.0, base_seed=90210,
)

BANK = SynthSpec(
    name="bank", n_rows=12000,
    group_column="age_group", group_values=("25plus", "under25"), group_fracs=(0.78, 0.22),
    pos_rates=(0.135, 0.034), tier_rates=(0.18, 0.04), mid_rates=(0.0, 0.0),
    tier_purity=(0.55, 0.55), mid_purity=0.30,
    label_column="subscribed", label_values=("no", "yes"),
    signal=0.5, visibility=0.5, tier_mix=1.5, tier_flip=0.03, tier_views=24,
    cat_columns=16, cat_bins=8, cat_noise=0.4, base_seed=90211,
)

DEFAULT = SynthSpec(
    name="default", n_rows=12000,
    group_column="sex", group_values=("Female", "Male"), group_fracs=(0.55, 0.45),
    pos_rates=(0.185, 0.266), tier_rates=(0.22, 0.36), mid_rates=(0.0, 0.0),
    tier_purity=(0.56, 0.56), mid_purity=0.30,
    label_column="default_payment", label_values=("no", "yes"),
    signal=0.5, visibility=0.5, tier_mix=1.2, tier_flip=0.05, tier_views=24,
    cat_columns=16, cat_bins=8, cat_noise=0.5, base_seed=90212,
)

LAW = SynthSpec(
    name="law", n_rows=10000,
    group_column="sex", group_values=("Female", "Male"), group_fracs=(0.44, 0.56),
    pos_rates=(0.208, 0.233), tier_rates=(0.26, 0.30), mid_rates=(0.0, 0.0),
    tier_purity=(0.62, 0.62), mid_purity=0.30,
    label_column="pass_bar", label_values=("fail", "pass"),
    signal=0.7, visibility=0.7, tier_mix=1.2, tier_flip=0.03, tier_views=24,
    cat_columns=16, cat_bins=8, cat_noise=0.35, base_seed=90213,
)

KDD = SynthSpec(
    name="kdd", n_rows=16000,
    group_column="sex", group_values=("Female", "Male"), group_fracs=(0.52, 0.48),
    pos_rates=(0.050, 0.075), tier_rates=(0.06, 0.10), mid_rates=(0.0, 0.0),
    tier_purity=(0.58, 0.58), mid_purity=0.30,
    label_column="income", label_values=("-50000", "50000+"),
    signal=0.6, visibility=0.6, tier_mix=1.2, tier_flip=0.03, tier_views=24,
    cat_columns=16, cat_bins=8, cat_noise=0.4, base_seed=90214,
)

SPECS = {s.name: s for s in (ADULT, BANK, DEFAULT, LAW, KDD)}


def builtin_schema(name: str) -> DatasetSchema:
    spec = SPECS[name]
    return DatasetSchema(
        label_column=spec.label_column,
        label_positive_value=spec.label_values[1],
        sensitive_column=spec.group_column,
        categorical_columns=[spec.group_column, *spec.tier_view_names(),
                             *spec.band_names(), "region"],
        numeric_columns=["score_a", "score_b", "score_c", "tenure"],
    )


def generate_frame(name: str, n_rows: int | None = None, seed: int | None = None) -> pd.DataFrame:
    """One benchmark-shaped corpus as a raw (string-valued) frame."""
    if name not in SPECS:
        raise ValueError(f"unknown synthetic corpus {name!r}, expected one of {sorted(SPECS)}")
    spec = SPECS[name]
    n = spec.n_rows if n_rows is None else n_rows
    rng = np.random.default_rng((spec.base_seed if seed is None else seed, 0xDA7A))

    group = rng.choice(len(spec.group_values), size=n, p=np.array(spec.group_fracs))
    hi_rates = np.array(spec.tier_rates)
    mid_rates = np.array(spec.mid_rates)
    u = rng.random(n)
    # tier levels: 2 = high, 1 = mid, 0 = low
    tier = np.where(u < hi_rates[group], 2,
                    np.where(u < hi_rates[group] + mid_rates[group], 1, 0))
    skill = rng.standard_normal(n)

    # Per group: high-tier rows hit tier_purity, mid rows mid_purity, and
    # the low band absorbs the remainder so the group's base rate comes out
    # exactly as configured.
    p_pos = np.empty(n)
    for g, base in enumerate(spec.pos_rates):
        hi, mid = spec.tier_rates[g], spec.mid_rates[g]
        purity = spec.tier_purity[g]
        low_rate = (base - hi * purity - mid * spec.mid_purity) / (1.0 - hi - mid)
        if low_rate <= 0:
            raise ValueError(f"{name}: tier/mid rates and purities inconsistent with pos_rates")
        for t, target in ((2, purity), (1, spec.mid_purity), (0, low_rate)):
            cell = (group == g) & (tier == t)
            if not cell.any():
                continue
            c = _solve_intercept(spec.signal, target)
            p_pos[cell] = 1.0 / (1.0 + np.exp(-(spec.signal * skill[cell] + c)))
    label = (rng.random(n) < p_pos).astype(int)

    vis = spec.visibility
    noise = np.sqrt(max(1.0 - vis**2, 1e-9))
    centered_tier = 0.5 * tier - (0.5 * tier).mean()

    def noisy_skill(extra: float = 0.0) -> np.ndarray:
        sigma = np.sqrt(noise**2 + extra**2)
        return vis * skill + sigma * rng.standard_normal(n)

    def banded(extra: float) -> np.ndarray:
        # Quantile-binned view of skill plus tier; string levels sort by index.
        raw = noisy_skill(extra) + spec.tier_mix * centered_tier * 3.0
        edges = np.quantile(raw, np.linspace(0, 1, spec.cat_bins + 1)[1:-1])
        return np.char.add("q", np.digitize(raw, edges).astype(str))

    def tier_view(flip: float, view_group: int | None) -> np.ndarray:
        # Optionally group-gated view: meaningful for one group's rows, "na"
        # elsewhere (the usual shape of demographic-specific codes in these
        # corpora); ungated views read for everyone.
        scrambled = np.where(rng.random(n) < flip, rng.integers(0, 3, size=n), tier)
        levels = np.array(["lo", "mid", "hi"])[scrambled]
        if view_group is None:
            return levels
        return np.where(group == view_group, levels, "na")

    frame = pd.DataFrame({spec.group_column: np.array(spec.group_values)[group]})
    majority = int(np.argmax(spec.group_fracs))
    for j, col in enumerate(spec.tier_view_names()):
        gate = majority if j % 3 == 2 else None
        frame[col] = tier_view(spec.tier_flip * (1.0 + (j % 4)), gate)
    for i, col in enumerate(spec.band_names()):
        frame[col] = banded(spec.cat_noise * (1.0 + 0.15 * i))
    frame["region"] = np.array(["north", "south", "east", "west"])[rng.integers(0, 4, size=n)]
    frame["score_a"] = np.round(10.0 * noisy_skill() + 50.0 + 4.0 * centered_tier, 2)
    frame["score_b"] = np.round(2.5 * noisy_skill(0.3) + 10.0, 2)
    frame["score_c"] = np.round(noisy_skill(0.5), 3)
    frame["tenure"] = np.clip(np.round(8.0 + 5.0 * rng.standard_normal(n)), 0, 40)
    frame[spec.label_column] = np.array(spec.label_values)[label]
    return frame


def write_csv(name: str, path: str, n_rows: int | None = None, seed: int | None = None) -> str:
    frame = generate_frame(name, n_rows=n_rows, seed=seed)
    frame.to_csv(path, index=False)
    return path
