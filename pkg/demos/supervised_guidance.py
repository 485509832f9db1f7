"""Supervised style guidance versus unguided sampling, same chain noise.

Samples two batches from identical seeds, one pulled toward the 'blotches'
style template, and prints the style-loss / content-score trade.

Usage: python3 demos/supervised_guidance.py [out_dir]
"""

import sys
from pathlib import Path

import numpy as np

from stylediff import RngStream, make_schedule, sample
from stylediff import metrics, patterns, style
from stylediff.denoisers import AnalyticGmmDenoiser, default_style_population
from stylediff.guidance import GuidanceConfig, GuidanceContext
from stylediff.harness import DEFAULT_SUPERVISED_S0, TUNED_GUIDANCE_WEIGHTS, emit_image

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out/supervised")
out.mkdir(parents=True, exist_ok=True)

data = default_style_population()
model = AnalyticGmmDenoiser(data)
sched = make_schedule()

ref_img = patterns.style_template("blotches", 16, 16, 3, seed=0)
emit_image(ref_img, out / "reference.ppm")

gcfg = GuidanceConfig(mode="supervised", s0=DEFAULT_SUPERVISED_S0, weights=TUNED_GUIDANCE_WEIGHTS)
ref = style.extract(ref_img, gcfg.pyramid, gcfg.weights)
ctx = GuidanceContext(gcfg, reference=ref)

unguided = sample(model, sched, (16, 16, 3), 8, RngStream(3))
guided = sample(model, sched, (16, 16, 3), 8, RngStream(3), guidance=ctx)

ref_assess = metrics.assessment_features(ref_img)
for name, batch in (("unguided", unguided), ("guided", guided)):
    emit_image(batch[0], out / f"{name}_0.ppm")
    sl = np.mean([metrics.style_loss(x, ref_assess) for x in batch])
    cs = np.mean([metrics.content_score(x, data) for x in batch])
    print(f"{name:9s} style loss {sl:.4f}  content score {cs:.2f}")
print(f"images in {out}")
