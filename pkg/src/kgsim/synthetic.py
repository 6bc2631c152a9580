"""Synthetic knowledge graphs drawn from a planted ComplEx model."""
from __future__ import annotations

import numpy as np

from .models import ModelKind, ModelParams, score_all_tails_batch
from .store import Dictionary, TripleStore


def planted_complex_kg(n_entities: int = 200, n_relations: int = 4, n_triples: int = 2000,
                       rank: int = 8, seed: int = 42):
    """Sample a KG whose facts are the top-scoring tails of a random low-rank ComplEx model.

    Every ``(head, relation)`` pair contributes its best-scoring tails (the
    pair itself excluded) until ``n_triples`` facts are drawn. Returns
    ``(store, truth_params)``.
    """
    rng = np.random.default_rng(seed)
    phases_e = rng.uniform(0, 2 * np.pi, size=(n_entities, rank))
    phases_r = rng.uniform(0, 2 * np.pi, size=(n_relations, rank))
    # Unit-modulus embeddings avoid hub entities dominating every relation.
    ent = np.concatenate([np.cos(phases_e), np.sin(phases_e)], axis=1)
    rel = np.concatenate([np.cos(phases_r), np.sin(phases_r)], axis=1)
    truth = ModelParams(ModelKind.COMPLEX, rank, ent, rel)

    per_pair = int(np.ceil(n_triples / (n_entities * n_relations)))
    candidates = []
    for r in range(n_relations):
        heads = np.arange(n_entities)
        s = score_all_tails_batch(truth, heads, np.full(n_entities, r))
        s[heads, heads] = -np.inf
        top = np.argsort(-s, axis=1, kind="stable")[:, :per_pair]
        for h in heads:
            candidates.extend((h, r, t) for t in top[h])
    candidates = np.array(candidates, dtype=np.int64)
    pick = np.sort(rng.choice(len(candidates), size=min(n_triples, len(candidates)), replace=False))
    triples = candidates[pick]

    ents = Dictionary(f"e{i}" for i in range(n_entities))
    rels = Dictionary(f"r{i}" for i in range(n_relations))
    return TripleStore(triples, ents, rels), truth
