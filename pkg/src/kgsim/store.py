"""Triple storage: label dictionaries, TSV ingestion/export, splitting, filter indexes."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)


class TripleFormatError(ValueError):
    """Raised when a triple file cannot be parsed."""


class Dictionary:
    """Bijection between string labels and dense integer ids.

    Ids are assigned in first-appearance order starting at 0.
    """

    def __init__(self, labels=()):
        self.label_to_id: dict[str, int] = {}
        self.id_to_label: list[str] = []
        for label in labels:
            self.add(label)

    def add(self, label: str) -> int:
        idx = self.label_to_id.get(label)
        if idx is None:
            idx = len(self.id_to_label)
            self.label_to_id[label] = idx
            self.id_to_label.append(label)
        return idx

    def encode(self, label: str) -> int:
        try:
            return self.label_to_id[label]
        except KeyError:
            raise KeyError(f"unknown label {label!r}") from None

    def lookup(self, idx: int) -> str:
        return self.id_to_label[idx]

    def __contains__(self, label) -> bool:
        return label in self.label_to_id

    def __len__(self) -> int:
        return len(self.id_to_label)

    def __eq__(self, other) -> bool:
        return isinstance(other, Dictionary) and self.id_to_label == other.id_to_label

    def __repr__(self) -> str:
        return f"Dictionary(n={len(self)})"


@dataclass
class TripleStore:
    """Integer-encoded triples plus the dictionaries that decode them.

    ``triples`` is an ``(n, 3)`` int64 array of ``(head, relation, tail)``
    rows. Stores produced by :func:`split` share their dictionaries with
    the parent store.
    """

    triples: np.ndarray
    entity_dict: Dictionary
    relation_dict: Dictionary
    entity_type: dict[int, str] = field(default_factory=dict)
    n_duplicates: int = 0

    def __post_init__(self):
        self.triples = np.asarray(self.triples, dtype=np.int64).reshape(-1, 3)
        if len(self.triples):
            if self.triples.min() < 0:
                raise ValueError("negative id in triples")
            if self.triples[:, [0, 2]].max() >= len(self.entity_dict):
                raise ValueError("entity id out of range for dictionary")
            if self.triples[:, 1].max() >= len(self.relation_dict):
                raise ValueError("relation id out of range for dictionary")

    @property
    def n_entities(self) -> int:
        return len(self.entity_dict)

    @property
    def n_relations(self) -> int:
        return len(self.relation_dict)

    def __len__(self) -> int:
        return len(self.triples)

    def labels(self, row) -> tuple[str, str, str]:
        h, r, t = (int(x) for x in row)
        return (self.entity_dict.lookup(h), self.relation_dict.lookup(r),
                self.entity_dict.lookup(t))

    def subset(self, rows: np.ndarray) -> "TripleStore":
        return TripleStore(rows, self.entity_dict, self.relation_dict, self.entity_type)


def _read_rows(path):
    path = Path(path)
    rows = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line.strip() or line.startswith("#"):
                continue
            fields = line.split("\t")
            if len(fields) < 3:
                raise TripleFormatError(
                    f"{path}:{lineno}: expected 3 tab-separated fields, got {len(fields)}")
            rows.append((lineno, fields[0], fields[1], fields[2]))
    return rows


def ingest_tsv(path, entity_dict: Dictionary | None = None,
               relation_dict: Dictionary | None = None) -> TripleStore:
    """Read a ``head<TAB>relation<TAB>tail`` file into a :class:`TripleStore`.

    When dictionaries are passed they are treated as fixed: labels missing
    from them raise ``KeyError`` instead of being added. Duplicate lines are
    dropped and counted in ``n_duplicates``.
    """
    rows = _read_rows(path)
    if not rows:
        raise TripleFormatError(f"{path}: no triples found")
    frozen = entity_dict is not None
    ents = entity_dict if frozen else Dictionary()
    rels = relation_dict if relation_dict is not None else Dictionary()
    frozen_rels = relation_dict is not None

    seen = set()
    encoded = []
    for lineno, h, r, t in rows:
        try:
            key = (ents.encode(h) if frozen else ents.add(h),
                   rels.encode(r) if frozen_rels else rels.add(r),
                   ents.encode(t) if frozen else ents.add(t))
        except KeyError as exc:
            raise KeyError(f"{path}:{lineno}: {exc.args[0]}") from None
        if key in seen:
            continue
        seen.add(key)
        encoded.append(key)
    n_dup = len(rows) - len(encoded)
    if n_dup:
        logger.warning("%s: dropped %d duplicate triple(s)", path, n_dup)
    return TripleStore(np.array(encoded, dtype=np.int64), ents, rels, n_duplicates=n_dup)


def export_tsv(store: TripleStore, path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for row in store.triples:
            fh.write("\t".join(store.labels(row)) + "\n")


def load_entity_types(path, entity_dict: Dictionary) -> dict[int, str]:
    """Read an ``entity<TAB>type`` file; labels absent from the dictionary are skipped."""
    types = {}
    for label, value in _read_pairs(path):
        if label in entity_dict:
            types[entity_dict.encode(label)] = value
    return types


def load_names(path) -> dict[str, str]:
    return dict(_read_pairs(path))


def _read_pairs(path):
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line.strip() or line.startswith("#"):
                continue
            fields = line.split("\t")
            if len(fields) < 2:
                raise TripleFormatError(f"{path}:{lineno}: expected 2 tab-separated fields")
            yield fields[0], fields[1]


def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def _enforce_coverage(triples, train_idx, test_idx, n_entities, n_relations):
    # Move test triples whose entity or relation never occurs in train.
    ent_count = np.bincount(triples[train_idx][:, [0, 2]].ravel(), minlength=n_entities)
    rel_count = np.bincount(triples[train_idx][:, 1], minlength=n_relations)
    keep, moved = [], []
    for i in test_idx:
        h, r, t = triples[i]
        if ent_count[h] == 0 or ent_count[t] == 0 or rel_count[r] == 0:
            moved.append(i)
            ent_count[h] += 1
            ent_count[t] += 1
            rel_count[r] += 1
        else:
            keep.append(i)
    return np.array(moved, dtype=np.int64), np.array(keep, dtype=np.int64)


def split(store: TripleStore, test_fraction: float, seed: int):
    """Random train/test partition with every test entity and relation seen in train.

    Exactly ``round(test_fraction * n)`` triples are drawn for test; any that
    would introduce an entity or relation unseen in train are moved back to
    train, so the achieved fraction can be lower (a warning reports it).
    """
    train, _, test = _split(store, 0.0, test_fraction, seed)
    return train, test


def train_valid_test_split(store: TripleStore, valid_fraction: float,
                           test_fraction: float, seed: int):
    """Three-way variant of :func:`split`; coverage is enforced for both held-out parts."""
    return _split(store, valid_fraction, test_fraction, seed)


def _split(store, valid_fraction, test_fraction, seed):
    if not len(store):
        raise ValueError("cannot split an empty store")
    if not 0.0 < test_fraction < 1.0:
        raise ValueError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    if not 0.0 <= valid_fraction < 1.0 or valid_fraction + test_fraction >= 1.0:
        raise ValueError("valid_fraction + test_fraction must be below 1")
    n = len(store)
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    n_test = _round_half_up(test_fraction * n)
    n_valid = _round_half_up(valid_fraction * n)
    test_idx = order[:n_test]
    valid_idx = order[n_test:n_test + n_valid]
    train_idx = order[n_test + n_valid:]

    triples = store.triples
    held = np.concatenate([test_idx, valid_idx])
    moved, kept = _enforce_coverage(triples, train_idx, held, store.n_entities,
                                    store.n_relations)
    if len(moved):
        kept_set = set(kept.tolist())
        test_idx = np.array([i for i in test_idx if i in kept_set], dtype=np.int64)
        valid_idx = np.array([i for i in valid_idx if i in kept_set], dtype=np.int64)
        train_idx = np.concatenate([train_idx, moved])
        logger.warning("moved %d held-out triple(s) to train for coverage; "
                       "achieved test fraction %.4f", len(moved), len(test_idx) / n)

    def part(idx):
        return store.subset(triples[np.sort(idx)])

    return part(train_idx), part(valid_idx), part(test_idx)


class FilterIndex:
    """Exact membership index over the union of several triple stores."""

    def __init__(self, triples: np.ndarray, n_entities: int, n_relations: int):
        triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
        self.n_entities = n_entities
        self.n_relations = n_relations
        self._keys = np.unique(self._encode(triples))
        self.tails: dict[tuple[int, int], set[int]] = {}
        self.heads: dict[tuple[int, int], set[int]] = {}
        for h, r, t in triples.tolist():
            self.tails.setdefault((h, r), set()).add(t)
            self.heads.setdefault((r, t), set()).add(h)

    def _encode(self, triples):
        triples = np.asarray(triples, dtype=np.int64)
        return ((triples[..., 0] * self.n_relations + triples[..., 1])
                * self.n_entities + triples[..., 2])

    def __len__(self) -> int:
        return len(self._keys)

    def __contains__(self, triple) -> bool:
        h, r, t = (int(x) for x in triple)
        return t in self.tails.get((h, r), ())

    def contains_many(self, triples: np.ndarray) -> np.ndarray:
        """Vectorised membership test over the last axis of ``triples``."""
        keys = self._encode(triples)
        if not len(self._keys):
            return np.zeros(keys.shape, dtype=bool)
        pos = np.searchsorted(self._keys, keys)
        pos = np.minimum(pos, len(self._keys) - 1)
        return self._keys[pos] == keys

    def known_tails(self, head: int, relation: int) -> set[int]:
        return self.tails.get((head, relation), set())

    def known_heads(self, relation: int, tail: int) -> set[int]:
        return self.heads.get((relation, tail), set())


def build_filter_index(stores) -> FilterIndex:
    stores = list(stores)
    if not stores:
        raise ValueError("need at least one store")
    first = stores[0]
    for s in stores[1:]:
        if s.entity_dict != first.entity_dict or s.relation_dict != first.relation_dict:
            raise ValueError("stores do not share dictionaries")
    triples = np.concatenate([s.triples for s in stores])
    return FilterIndex(triples, first.n_entities, first.n_relations)
