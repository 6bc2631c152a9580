"""Shallow embedding models: parameter layout, scores, analytic gradients, checkpoints.

All scores follow a higher-is-better convention; TransE returns the negated
distance. ComplEx rows have width ``2 * dim``: real parts then imaginary parts.
"""
from __future__ import annotations

import enum
import struct
from dataclasses import dataclass

import numpy as np

from .store import Dictionary


class ModelKind(enum.Enum):
    TRANSE_L1 = "transe_l1"
    TRANSE_L2 = "transe_l2"
    DISTMULT = "distmult"
    COMPLEX = "complex"
    HOLE = "hole"

    @property
    def norm(self) -> int | None:
        return {ModelKind.TRANSE_L1: 1, ModelKind.TRANSE_L2: 2}.get(self)

    @property
    def is_transe(self) -> bool:
        return self.norm is not None

    def width(self, dim: int) -> int:
        return 2 * dim if self is ModelKind.COMPLEX else dim

    @classmethod
    def parse(cls, text: str) -> "ModelKind":
        key = text.strip().lower().replace("-", "_")
        aliases = {"transe": "transe_l2", "transe_l1": "transe_l1", "transe_l2": "transe_l2",
                   "distmult": "distmult", "complex": "complex", "hole": "hole"}
        if key not in aliases:
            raise ValueError(f"unknown model kind {text!r}")
        return cls(aliases[key])


@dataclass
class ModelParams:
    kind: ModelKind
    dim: int
    entity_emb: np.ndarray
    relation_emb: np.ndarray
    # HolE correlation backend: "direct" (modular double sum) or "fft".
    correlation: str = "direct"

    def __post_init__(self):
        w = self.kind.width(self.dim)
        if self.entity_emb.ndim != 2 or self.entity_emb.shape[1] != w:
            raise ValueError(f"entity table must have width {w}")
        if self.relation_emb.ndim != 2 or self.relation_emb.shape[1] != w:
            raise ValueError(f"relation table must have width {w}")

    @property
    def n_entities(self) -> int:
        return self.entity_emb.shape[0]

    @property
    def n_relations(self) -> int:
        return self.relation_emb.shape[0]

    @property
    def width(self) -> int:
        return self.entity_emb.shape[1]

    def copy(self) -> "ModelParams":
        return ModelParams(self.kind, self.dim, self.entity_emb.copy(),
                           self.relation_emb.copy(), self.correlation)

    def check_ids(self, heads, relations, tails) -> None:
        for name, ids, bound in (("head", heads, self.n_entities),
                                 ("relation", relations, self.n_relations),
                                 ("tail", tails, self.n_entities)):
            ids = np.asarray(ids)
            if ids.size and (ids.min() < 0 or ids.max() >= bound):
                raise IndexError(f"{name} id out of range [0, {bound})")


def init_params(kind: ModelKind, dim: int, n_entities: int, n_relations: int,
                seed: int, scale: float = 1.0) -> ModelParams:
    """Uniform init in ``[-b, b]`` with ``b = scale * 6 / sqrt(dim)``, deterministic per seed."""
    if dim < 1 or n_entities < 1 or n_relations < 1:
        raise ValueError("dim and table sizes must be positive")
    if not scale > 0:
        raise ValueError("scale must be positive")
    rng = np.random.default_rng(seed)
    bound = scale * 6.0 / np.sqrt(dim)
    w = kind.width(dim)
    ent = rng.uniform(-bound, bound, size=(n_entities, w))
    rel = rng.uniform(-bound, bound, size=(n_relations, w))
    return ModelParams(kind, dim, ent, rel)


# -- circular correlation -------------------------------------------------

def circular_correlation(a: np.ndarray, b: np.ndarray, method: str = "direct") -> np.ndarray:
    """``out[..., k] = sum_i a[..., i] * b[..., (i + k) % d]``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if method == "fft":
        return np.fft.irfft(np.conj(np.fft.rfft(a)) * np.fft.rfft(b), n=a.shape[-1])
    if method != "direct":
        raise ValueError(f"unknown correlation method {method!r}")
    d = a.shape[-1]
    a, b = np.broadcast_arrays(a, b)
    out = np.empty(a.shape)
    for k in range(d):
        out[..., k] = np.sum(a * np.roll(b, -k, axis=-1), axis=-1)
    return out


def circular_convolution(a: np.ndarray, b: np.ndarray, method: str = "direct") -> np.ndarray:
    """``out[..., j] = sum_k a[..., k] * b[..., (j - k) % d]``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if method == "fft":
        return np.fft.irfft(np.fft.rfft(a) * np.fft.rfft(b), n=a.shape[-1])
    if method != "direct":
        raise ValueError(f"unknown correlation method {method!r}")
    d = a.shape[-1]
    a, b = np.broadcast_arrays(a, b)
    out = np.zeros(a.shape)
    for k in range(d):
        out += a[..., k:k + 1] * np.roll(b, k, axis=-1)
    return out


# -- row-level scoring ----------------------------------------------------

def _split_complex(x, dim):
    return x[..., :dim], x[..., dim:]


def score_rows(params: ModelParams, h: np.ndarray, r: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Scores for aligned embedding rows (any broadcastable leading shape)."""
    kind = params.kind
    if kind.is_transe:
        return -np.linalg.norm(h + r - t, ord=kind.norm, axis=-1)
    if kind is ModelKind.DISTMULT:
        return np.sum(h * r * t, axis=-1)
    if kind is ModelKind.COMPLEX:
        d = params.dim
        hr, hi = _split_complex(h, d)
        rr, ri = _split_complex(r, d)
        tr, ti = _split_complex(t, d)
        return np.sum(hr * rr * tr + hi * rr * ti + hr * ri * ti - hi * ri * tr, axis=-1)
    # HolE
    return np.sum(r * circular_correlation(h, t, params.correlation), axis=-1)


def gradient_rows(params: ModelParams, h, r, t):
    """Partial derivatives of the score with respect to the h, r and t rows."""
    kind = params.kind
    if kind.is_transe:
        u = h + r - t
        if kind.norm == 1:
            g = -np.sign(u)
        else:
            n = np.linalg.norm(u, axis=-1, keepdims=True)
            safe = np.where(n > 0, n, 1.0)
            g = np.where(n > 0, -u / safe, 0.0)
        return g, g.copy(), -g
    if kind is ModelKind.DISTMULT:
        return r * t, h * t, h * r
    if kind is ModelKind.COMPLEX:
        d = params.dim
        hr, hi = _split_complex(h, d)
        rr, ri = _split_complex(r, d)
        tr, ti = _split_complex(t, d)
        gh = np.concatenate([rr * tr + ri * ti, rr * ti - ri * tr], axis=-1)
        gr = np.concatenate([hr * tr + hi * ti, hr * ti - hi * tr], axis=-1)
        gt = np.concatenate([hr * rr - hi * ri, hi * rr + hr * ri], axis=-1)
        return gh, gr, gt
    m = params.correlation
    return (circular_correlation(r, t, m), circular_correlation(h, t, m),
            circular_convolution(r, h, m))


# -- id-level API ---------------------------------------------------------

def _rows(params, heads, relations, tails):
    params.check_ids(heads, relations, tails)
    return (params.entity_emb[heads], params.relation_emb[relations],
            params.entity_emb[tails])


def score(params: ModelParams, triple) -> float:
    h, r, t = (int(x) for x in triple)
    return float(score_rows(params, *_rows(params, h, r, t)))


def score_triples(params: ModelParams, triples: np.ndarray) -> np.ndarray:
    triples = np.asarray(triples, dtype=np.int64)
    return score_rows(params, *_rows(params, triples[..., 0], triples[..., 1], triples[..., 2]))


def score_gradient(params: ModelParams, triple):
    """``(d score/d head_row, d score/d relation_row, d score/d tail_row)``."""
    h, r, t = (int(x) for x in triple)
    return gradient_rows(params, *_rows(params, h, r, t))


def _transe_all(params, query, sign):
    # -|| query - sign * E || row-wise, chunked to bound memory.
    ent = params.entity_emb
    query = np.atleast_2d(query)
    out = np.empty((query.shape[0], ent.shape[0]))
    step = max(1, 2 ** 22 // max(1, ent.size))
    for s in range(0, query.shape[0], step):
        diff = query[s:s + step, None, :] - sign * ent[None, :, :]
        out[s:s + step] = -np.linalg.norm(diff, ord=params.kind.norm, axis=-1)
    return out


def score_all_tails_batch(params: ModelParams, heads, relations) -> np.ndarray:
    """``(n, |E|)`` matrix of scores for every tail replacement."""
    heads = np.atleast_1d(np.asarray(heads, dtype=np.int64))
    relations = np.atleast_1d(np.asarray(relations, dtype=np.int64))
    params.check_ids(heads, relations, [])
    h = params.entity_emb[heads]
    r = params.relation_emb[relations]
    if params.kind.is_transe:
        return _transe_all(params, h + r, 1.0)
    # Multilinear models: score is linear in the tail row.
    _, _, gt = gradient_rows(params, h, r, np.zeros_like(h))
    return gt @ params.entity_emb.T


def score_all_heads_batch(params: ModelParams, relations, tails) -> np.ndarray:
    relations = np.atleast_1d(np.asarray(relations, dtype=np.int64))
    tails = np.atleast_1d(np.asarray(tails, dtype=np.int64))
    params.check_ids([], relations, tails)
    r = params.relation_emb[relations]
    t = params.entity_emb[tails]
    if params.kind.is_transe:
        # -||E + r - t|| = -||(t - r) - E||
        return _transe_all(params, t - r, 1.0)
    gh, _, _ = gradient_rows(params, np.zeros_like(t), r, t)
    return gh @ params.entity_emb.T


def score_all_tails(params: ModelParams, head: int, relation: int) -> np.ndarray:
    return score_all_tails_batch(params, [head], [relation])[0]


def score_all_heads(params: ModelParams, relation: int, tail: int) -> np.ndarray:
    return score_all_heads_batch(params, [relation], [tail])[0]


# -- checkpoints ----------------------------------------------------------

MAGIC = b"KGE1"


class CheckpointError(ValueError):
    pass


def _pack_str(s: str) -> bytes:
    raw = s.encode("utf-8")
    return struct.pack("<I", len(raw)) + raw


def save_checkpoint(path, params: ModelParams, entity_dict: Dictionary,
                    relation_dict: Dictionary) -> None:
    """Binary layout: magic, kind tag, dim, |E|, |R|, float64 tables, label lists."""
    if len(entity_dict) != params.n_entities or len(relation_dict) != params.n_relations:
        raise ValueError("dictionary sizes do not match parameter tables")
    parts = [MAGIC, _pack_str(params.kind.value),
             struct.pack("<QQQ", params.dim, params.n_entities, params.n_relations),
             np.ascontiguousarray(params.entity_emb, dtype="<f8").tobytes(),
             np.ascontiguousarray(params.relation_emb, dtype="<f8").tobytes()]
    for d in (entity_dict, relation_dict):
        parts.append(struct.pack("<I", len(d)))
        parts.extend(_pack_str(label) for label in d.id_to_label)
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise CheckpointError("truncated checkpoint")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def string(self) -> str:
        (n,) = self.unpack("<I")
        return self.take(n).decode("utf-8")


def load_checkpoint(path):
    """Inverse of :func:`save_checkpoint`; returns ``(params, entity_dict, relation_dict)``."""
    with open(path, "rb") as fh:
        rd = _Reader(fh.read())
    if rd.take(4) != MAGIC:
        raise CheckpointError("bad magic: not a KGE1 checkpoint")
    try:
        kind = ModelKind(rd.string())
    except ValueError as exc:
        raise CheckpointError(str(exc)) from None
    dim, n_ent, n_rel = rd.unpack("<QQQ")
    w = kind.width(dim)
    ent = np.frombuffer(rd.take(8 * n_ent * w), dtype="<f8").reshape(n_ent, w).copy()
    rel = np.frombuffer(rd.take(8 * n_rel * w), dtype="<f8").reshape(n_rel, w).copy()
    dicts = []
    for expected in (n_ent, n_rel):
        (count,) = rd.unpack("<I")
        if count != expected:
            raise CheckpointError("dictionary size does not match table")
        dicts.append(Dictionary(rd.string() for _ in range(count)))
    if rd.pos != len(rd.buf):
        raise CheckpointError("trailing bytes after checkpoint payload")
    return ModelParams(kind, int(dim), ent, rel), dicts[0], dicts[1]
