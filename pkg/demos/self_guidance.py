"""Self guidance without a reference: contrastive spreads a batch apart in
feature space, synonymous pulls it together.

Usage: python3 demos/self_guidance.py
"""

import numpy as np

from stylediff import RngStream, make_schedule, sample
from stylediff import metrics, style
from stylediff.denoisers import AnalyticGmmDenoiser, default_style_population
from stylediff.guidance import GuidanceConfig, GuidanceContext
from stylediff.harness import (
    DEFAULT_CONTRASTIVE_S0,
    DEFAULT_SYNONYMOUS_S0,
    TUNED_GUIDANCE_WEIGHTS,
)
from stylediff.style import PyramidConfig, equal_weights

data = default_style_population()
model = AnalyticGmmDenoiser(data)
sched = make_schedule()
eq = equal_weights(4)


def run(mode, s0, seed=5):
    ctx = None
    if mode != "none":
        ctx = GuidanceContext(
            GuidanceConfig(mode=mode, s0=s0, weights=TUNED_GUIDANCE_WEIGHTS),
            rng=RngStream(seed, 9000),
        )
    batch = sample(model, sched, (16, 16, 3), 8, RngStream(seed), guidance=ctx)
    feats = [style.extract(x, PyramidConfig(), eq) for x in batch]
    return metrics.batch_diversity(batch), style.feature_variance(feats)


print(f"{'mode':12s} {'batch diversity':>16s} {'feature variance':>17s}")
for mode, s0 in (
    ("none", 0.0),
    ("contrastive", DEFAULT_CONTRASTIVE_S0),
    ("synonymous", DEFAULT_SYNONYMOUS_S0),
):
    bd, fv = run(mode, s0)
    print(f"{mode:12s} {bd:16.4f} {fv:17.4f}")
