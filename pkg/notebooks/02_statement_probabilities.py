"""
From scores to probabilities
============================

Raw scores are unbounded; the logistic function maps them into (0, 1).
A fact's rank and its probability tell different stories, so we print both.
"""

import numpy as np

from kgsim import expit
from kgsim.inference import batch_assess
from kgsim.store import build_filter_index, split
from kgsim.synthetic import planted_complex_kg
from kgsim.training import TrainConfig, train

store, _ = planted_complex_kg(seed=42)
tr, te = split(store, 0.2, seed=42)
cfg = TrainConfig(kind="complex", dim=32, epochs=60, batch_size=64, regularizer="l3",
                  reg_constant=1e-2, init_scale=1e-3)
params, _ = train(tr, cfg)

# a few held-out facts, plus a few made-up ones
labels = store.entity_dict.id_to_label
rels = store.relation_dict.id_to_label
held_out = [store.labels(row) for row in te.triples[:4]]
made_up = [(labels[i], rels[i % 4], labels[i + 100]) for i in range(4)]

rows = batch_assess(params, held_out + made_up, store.entity_dict, store.relation_dict,
                    build_filter_index([tr, te]))
print("%-16s %6s %9s %8s" % ("statement", "rank", "score", "prob"))
for r in rows:
    print("%-16s %6.1f %9.4f %8.6f" % (r.statement, r.rank, r.score, r.probability))

# expit is symmetric about 0.5, and stable far into the tails
x = np.array([-700.0, -5.0, 0.0, 5.0, 700.0])
print(expit(x))
print(expit(x) + expit(-x))
