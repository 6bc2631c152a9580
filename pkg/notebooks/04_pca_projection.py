"""
Looking at embeddings in two dimensions
=======================================

PCA by power iteration: find the top axis, deflate, find the next.
"""

import numpy as np

from kgsim.analytics import export_projection, pca_2d
from kgsim.store import split
from kgsim.synthetic import planted_complex_kg
from kgsim.training import TrainConfig, train

store, _ = planted_complex_kg(seed=42)
tr, _ = split(store, 0.2, seed=42)
params, _ = train(tr, TrainConfig(kind="complex", dim=32, epochs=40, batch_size=64,
                                  init_scale=1e-3))

proj = pca_2d(params.entity_emb)
print("explained variance:", proj.explained_variance)
print("axes orthonormal:", np.allclose(proj.components.T @ proj.components, np.eye(2)))

# compare against numpy's dense solver
xc = params.entity_emb - params.entity_emb.mean(axis=0)
vals = np.linalg.eigvalsh(np.cov(xc, rowvar=False))[::-1][:2]
print("eigh:              ", vals)

# collinear data has no second direction
print(pca_2d(np.outer(np.arange(5.0), [1.0, 1.0])).explained_variance)

types = {i: ("drug" if i < 50 else "gene") for i in range(store.n_entities)}
export_projection(proj, store.entity_dict.id_to_label, types, "projection.csv")
print(open("projection.csv").read().splitlines()[:3])
