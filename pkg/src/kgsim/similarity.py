"""Entity similarity from embeddings plus link-prediction profiles, and Tanimoto comparison.

The similarity of two entities is the cosine of their embedding rows
divided by the mean squared difference of their link-probability profiles
over a shared set of entities.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .inference import expit
from .models import ModelParams, score_all_heads_batch, score_all_tails_batch

MSE_FLOOR = 1e-12


@dataclass
class SimilarityRow:
    candidate: int
    cosine: float
    mse: float
    ratio: float
    degenerate: bool = False
    label: str | None = None
    name: str | None = None
    tanimoto: float | None = None


def cosine(v1, v2) -> float:
    v1 = np.asarray(v1, dtype=float).ravel()
    v2 = np.asarray(v2, dtype=float).ravel()
    if v1.shape != v2.shape:
        raise ValueError("vectors differ in length")
    n1, n2 = np.linalg.norm(v1), np.linalg.norm(v2)
    if n1 == 0 or n2 == 0:
        raise ValueError("cosine undefined for a zero vector")
    return float(np.clip(np.dot(v1, v2) / (n1 * n2), -1.0, 1.0))


def _relations(params, relations):
    rel = np.arange(params.n_relations) if relations is None else np.asarray(list(relations), dtype=np.int64)
    if rel.size == 0:
        raise ValueError("relation set is empty")
    return rel


def profile_matrix(params: ModelParams, drugs, relations=None, both_sides: bool = False) -> np.ndarray:
    """Link probabilities of each drug against every entity, ``(len(drugs), |E|)``.

    Entry ``[a, i]`` is the mean over ``relations`` of ``expit(score(drug_a, r, i))``;
    with ``both_sides`` the reversed statements ``(i, r, drug_a)`` are averaged in.
    """
    drugs = np.atleast_1d(np.asarray(drugs, dtype=np.int64))
    rel = _relations(params, relations)
    out = np.zeros((len(drugs), params.n_entities))
    for r in rel:
        rr = np.full(len(drugs), r)
        p = expit(score_all_tails_batch(params, drugs, rr))
        if both_sides:
            p = 0.5 * (p + expit(score_all_heads_batch(params, rr, drugs)))
        out += p
    return out / len(rel)


def prediction_profile(params: ModelParams, drug: int, relations=None, entities=None,
                       both_sides: bool = False) -> np.ndarray:
    """Probability vector of ``drug`` against ``entities`` (all entities by default)."""
    ent = np.arange(params.n_entities) if entities is None else np.asarray(list(entities), dtype=np.int64)
    if ent.size == 0:
        raise ValueError("entity set is empty")
    return profile_matrix(params, [drug], relations, both_sides)[0][ent]


def profile_mse(p_a, p_z) -> float:
    p_a = np.asarray(p_a, dtype=float)
    p_z = np.asarray(p_z, dtype=float)
    if p_a.shape != p_z.shape:
        raise ValueError("profiles differ in length")
    if p_a.size == 0:
        raise ValueError("profiles are empty")
    return float(np.mean((p_a - p_z) ** 2))


def ratio(cos: float, mse: float) -> tuple[float, bool]:
    degenerate = mse < MSE_FLOOR
    return cos / max(mse, MSE_FLOOR), degenerate


def _entity_set(params, entities, d1, d2):
    # The compared pair never belongs to its own comparison set.
    ent = np.arange(params.n_entities) if entities is None else np.asarray(list(entities), dtype=np.int64)
    ent = ent[(ent != d1) & (ent != d2)]
    if ent.size == 0:
        raise ValueError("entity set is empty")
    return ent


def sim_score(params: ModelParams, d1: int, d2: int, relations=None, entities=None,
              both_sides: bool = False) -> SimilarityRow:
    if d1 == d2:
        raise ValueError("self-similarity is degenerate (MSE = 0)")
    ent = _entity_set(params, entities, d1, d2)
    prof = profile_matrix(params, [d1, d2], relations, both_sides)[:, ent]
    cos = cosine(params.entity_emb[d1], params.entity_emb[d2])
    mse = profile_mse(prof[0], prof[1])
    r, degenerate = ratio(cos, mse)
    return SimilarityRow(int(d2), cos, mse, r, degenerate)


def top_k_similar(params: ModelParams, query: int, candidates=None, k: int = 10,
                  relations=None, entities=None, both_sides: bool = False,
                  n_jobs: int = 1) -> list[SimilarityRow]:
    """Candidates sorted by similarity ratio (descending, ties by id), truncated to ``k``.

    Each candidate is compared on the entity set with the query and the
    candidate removed, exactly as :func:`sim_score` does.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    cand = (np.setdiff1d(np.arange(params.n_entities), [query]) if candidates is None
            else np.asarray(list(candidates), dtype=np.int64))
    if np.any(cand == query):
        raise ValueError("candidate set must exclude the query")
    if cand.size == 0:
        raise ValueError("no candidates")
    base = np.arange(params.n_entities) if entities is None else np.unique(np.asarray(list(entities), dtype=np.int64))
    base = base[base != query]
    in_base = np.zeros(params.n_entities, dtype=bool)
    in_base[base] = True

    q_prof = profile_matrix(params, [query], relations, both_sides)[0]

    def block(c):
        prof = profile_matrix(params, c, relations, both_sides)
        sq = (prof[:, base] - q_prof[base]) ** 2
        total = sq.sum(axis=1)
        count = np.full(len(c), len(base), dtype=float)
        hit = in_base[c]
        # Drop each candidate's own column from its comparison set.
        own = (prof[np.arange(len(c)), c] - q_prof[c]) ** 2
        total = total - np.where(hit, own, 0.0)
        count -= hit
        return total, count

    chunks = [cand[s:s + 256] for s in range(0, len(cand), 256)]
    if n_jobs > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(n_jobs) as pool:
            parts = list(pool.map(block, chunks))
    else:
        parts = [block(c) for c in chunks]
    total = np.concatenate([p[0] for p in parts])
    count = np.concatenate([p[1] for p in parts])
    if np.any(count == 0):
        raise ValueError("entity set is empty for some candidate")

    qv = params.entity_emb[query]
    rows = []
    for c, t, n in zip(cand.tolist(), total, count):
        cos = cosine(qv, params.entity_emb[c])
        mse = float(max(t, 0.0) / n)
        r, degenerate = ratio(cos, mse)
        rows.append(SimilarityRow(c, cos, mse, r, degenerate))
    rows.sort(key=lambda row: (-row.ratio, row.candidate))
    return rows[:k]


# -- fingerprints ---------------------------------------------------------

@dataclass(frozen=True)
class Fingerprint:
    bits: int
    width: int

    @property
    def on_count(self) -> int:
        return self.bits.bit_count()

    @classmethod
    def from_hex(cls, text: str) -> "Fingerprint":
        text = text.strip().lower().removeprefix("0x")
        return cls(int(text, 16) if text else 0, 4 * len(text))

    @classmethod
    def from_bits(cls, bits) -> "Fingerprint":
        bits = [int(bool(b)) for b in bits]
        return cls(int("".join(map(str, bits)) or "0", 2), len(bits))


def tanimoto(a: Fingerprint, b: Fingerprint) -> float:
    """``c / (a + b - c)`` over on-bit counts."""
    if a.width != b.width:
        raise ValueError("fingerprints differ in width")
    c = (a.bits & b.bits).bit_count()
    denom = a.on_count + b.on_count - c
    if denom == 0:
        raise ValueError("Tanimoto undefined for two empty fingerprints")
    return c / denom


def load_fingerprints(path) -> dict[str, Fingerprint]:
    out = {}
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            fields = line.split("\t")
            if len(fields) < 2:
                raise ValueError(f"{path}:{lineno}: expected entity<TAB>hexbits")
            out[fields[0]] = Fingerprint.from_hex(fields[1])
    return out


def annotate(rows, entity_dict=None, names=None, fingerprints=None, query_label=None):
    """Fill label, display name and Tanimoto columns in place."""
    qfp = fingerprints.get(query_label) if fingerprints and query_label else None
    for row in rows:
        if entity_dict is not None:
            row.label = entity_dict.lookup(row.candidate)
        if names is not None and row.label is not None:
            row.name = names.get(row.label)
        if qfp is not None and row.label in fingerprints:
            row.tanimoto = tanimoto(qfp, fingerprints[row.label])
    return rows


def write_similarity_csv(rows, path, with_names: bool = False, with_tanimoto: bool = False) -> None:
    header = ["rank_no", "drug_id", "cosine", "mse", "ratio"]
    if with_names:
        header.append("drug_name")
    if with_tanimoto:
        header.append("tanimoto")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i, row in enumerate(rows, start=1):
            rec = [i, row.label if row.label is not None else row.candidate,
                   f"{row.cosine:.6f}", f"{row.mse:.6f}", f"{row.ratio:.6f}"]
            if with_names:
                rec.append(row.name or "")
            if with_tanimoto:
                rec.append("" if row.tanimoto is None else f"{row.tanimoto:.6f}")
            writer.writerow(rec)
