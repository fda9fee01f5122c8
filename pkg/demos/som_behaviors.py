"""Organize evolved recipes on a self-organizing map.

Trains a Kohonen sheet on formulation vectors drawn from three behaviour
regimes and shows that each regime claims its own region of the map — the
step that turns a pile of recipes into a behaviour atlas.
"""

import numpy as np

from dropevo.som import best_matching_unit, train_som

rng = np.random.default_rng(1)


def around(center, n=60):
    raw = np.clip(rng.normal(center, 0.04, size=(n, 4)), 1e-3, None)
    return raw / raw.sum(axis=1, keepdims=True)


regimes = {
    "mover": around((0.70, 0.10, 0.10, 0.10)),
    "divider": around((0.10, 0.10, 0.70, 0.10)),
    "spinner": around((0.10, 0.40, 0.10, 0.40)),
}
data = np.vstack(list(regimes.values()))

grid = train_som(data, width=8, height=8, rng=np.random.default_rng(2))

cells = np.full((8, 8), ".", dtype=object)
for label, samples in regimes.items():
    for x in samples:
        r, c = best_matching_unit(grid, x)
        cells[r, c] = label[0].upper()

print("8x8 map, one letter per claimed node (M=mover, D=divider, S=spinner):")
for row in cells:
    print("  " + " ".join(row))

print("\nregime centroids land on separated nodes:")
for label, samples in regimes.items():
    print(f"  {label:8s} -> node {best_matching_unit(grid, samples.mean(axis=0))}")
