"""Draw an unguided batch from the procedural texture population and save it.

Usage: python3 demos/unguided_sampling.py [out_dir]
"""

import sys
from pathlib import Path

import numpy as np

from stylediff import RngStream, make_schedule, sample
from stylediff.denoisers import AnalyticGmmDenoiser, default_style_population
from stylediff.harness import emit_image
from stylediff import metrics

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out/unguided")
out.mkdir(parents=True, exist_ok=True)

data = default_style_population()
model = AnalyticGmmDenoiser(data)
sched = make_schedule()

batch = sample(model, sched, (16, 16, 3), 8, RngStream(0))
for i, img in enumerate(batch):
    emit_image(img, out / f"sample_{i}.ppm")

scores = [metrics.content_score(x, data) for x in batch]
print(f"wrote {len(batch)} samples to {out}")
print(f"content score: mean {np.mean(scores):.2f}, min {np.min(scores):.2f}")
print(f"batch diversity: {metrics.batch_diversity(batch):.4f}")
