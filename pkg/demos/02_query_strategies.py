"""Gallery of query-construction strategies and their cardinality contracts.

Each strategy turns a standardized base set into query inputs. Sizes follow
fixed rules: flips and biased noise triple the base, grid composition emits
exactly `count` rows (tripled when biased noise is stacked on top).

Run:  python demos/02_query_strategies.py
"""

import numpy as np

from netrecon import (
    biased_noise,
    grid_composition,
    grid_composition_biased_noise,
    hv_flips,
    identity,
    make_synthetic_classification,
    random_rotations,
    standardize,
    uniform_noise,
)

raw = make_synthetic_classification(500, height=6, width=6, n_classes=10, seed=0)
ds, mean, std = standardize(raw)
print(f"base set: {ds.n_samples} images of {ds.height}x{ds.width}, "
      f"standardized with mean={mean:.2f} std={std:.2f}\n")

rows = []
for aug in (
    identity(ds),
    random_rotations(ds, copies=2, seed=1),
    hv_flips(ds),
    uniform_noise(ds, -1.0, 1.0, copies=2, seed=2),
    biased_noise(ds, 1.0, seed=3),
    grid_composition(ds, grid_x=3, grid_y=3, count=1500, seed=4),
    grid_composition_biased_noise(ds, grid_x=3, grid_y=3, count=500, seed=5, u=1.0),
):
    inputs = aug.inputs
    rows.append((aug.spec.describe(), aug.Q, inputs.mean(), inputs.std()))

width = max(len(name) for name, *_ in rows)
print(f"{'strategy':<{width}}  {'Q':>6}  {'mean':>7}  {'std':>6}")
for name, q, m, s in rows:
    print(f"{name:<{width}}  {q:>6}  {m:>7.3f}  {s:>6.3f}")

# Biased noise is one-sided per block: the positive block only ever adds
# intensity, the negative block only ever removes it.
aug = biased_noise(ds, 1.0, seed=3)
n = ds.n_samples
pos = aug.inputs[n:2 * n] - ds.images
neg = aug.inputs[2 * n:] - ds.images
print(f"\nbiased noise deltas: positive block in [{pos.min():.3f}, {pos.max():.3f}], "
      f"negative block in [{neg.min():.3f}, {neg.max():.3f}]")

# With D distinct bases, a 3x3 grid can reach D^9 distinct images.
from netrecon import ImageDataset

two = ImageDataset(images=np.vstack([np.zeros(36), np.ones(36)]), labels=[0, 1],
                   height=6, width=6)
out = grid_composition(two, 3, 3, count=20000, seed=6)
print(f"3x3 grid over 2 distinct bases: {len({r.tobytes() for r in out.inputs})} "
      f"distinct compositions (2^9 = 512)")
