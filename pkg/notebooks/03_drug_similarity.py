"""
Similar entities from embeddings and predicted links
====================================================

Two entities are called similar when their embeddings point the same way
(high cosine) and the model predicts the same links for them (low mean
squared difference between prediction profiles). The ratio of the two
ranks candidates.
"""

import numpy as np

from kgsim.similarity import Fingerprint, prediction_profile, tanimoto, top_k_similar
from kgsim.store import split
from kgsim.synthetic import planted_complex_kg
from kgsim.training import TrainConfig, train

store, truth = planted_complex_kg(seed=42)
tr, _ = split(store, 0.2, seed=42)
params, _ = train(tr, TrainConfig(kind="complex", dim=32, epochs=60, batch_size=64,
                                  regularizer="l3", reg_constant=1e-2, init_scale=1e-3))

# pretend the first 50 entities are drugs and the rest are their targets
drugs = list(range(1, 50))
targets = list(range(50, 200))
query = 0

rows = top_k_similar(params, query, drugs, k=10, entities=targets)
print("rank drug   cosine      mse       ratio")
for i, r in enumerate(rows, 1):
    print("%4d e%-4d %7.4f %9.6f %11.2f" % (i, r.candidate, r.cosine, r.mse, r.ratio))

# does the trained model agree with the planted one about the best match?
best = rows[0].candidate
p_trained = prediction_profile(params, best, entities=targets)
p_truth = prediction_profile(truth, best, entities=targets)
print("profile correlation, trained vs planted:", np.corrcoef(p_trained, p_truth)[0, 1])

# Tanimoto compares structural fingerprints; here random 64-bit ones
rng = np.random.default_rng(0)
fp = {e: Fingerprint(int(rng.integers(1, 1 << 62)), 64) for e in [query] + drugs}
for r in rows[:3]:
    print("e%d tanimoto vs query: %.3f" % (r.candidate, tanimoto(fp[query], fp[r.candidate])))
