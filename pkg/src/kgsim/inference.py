"""Statement scoring with expit-calibrated probabilities."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.special import expit as _expit

from .evaluation import rank_triple
from .models import ModelParams, score
from .store import Dictionary, FilterIndex


def expit(x):
    """Logistic map ``1 / (1 + exp(-x))``; stable for large ``|x|``."""
    out = _expit(np.asarray(x, dtype=float))
    return float(out) if np.ndim(out) == 0 else out


@dataclass
class StatementAssessment:
    head: str
    relation: str
    tail: str
    ids: tuple | None = None
    rank: float | None = None
    score: float | None = None
    probability: float | None = None
    protocol: str = "filtered"
    error: str | None = None

    @property
    def statement(self) -> str:
        return f"{self.head} {self.relation} {self.tail}"


def _encode(d: Dictionary, label: str, what: str) -> int:
    if label not in d:
        raise KeyError(f"unknown {what} label {label!r}")
    return d.encode(label)


def assess_statement(params: ModelParams, head: str, relation: str, tail: str,
                     entity_dict: Dictionary, relation_dict: Dictionary,
                     filter_index: FilterIndex | None = None,
                     protocol: str = "filtered") -> StatementAssessment:
    """Rank (tail replacement), raw score and probability for one labelled statement."""
    ids = (_encode(entity_dict, head, "entity"), _encode(relation_dict, relation, "relation"),
           _encode(entity_dict, tail, "entity"))
    s = score(params, ids)
    rank = rank_triple(params, ids, "tail", protocol, filter_index)
    return StatementAssessment(head, relation, tail, ids, rank, s, expit(s), protocol)


def batch_assess(params, statements, entity_dict, relation_dict, filter_index=None,
                 protocol: str = "filtered") -> list[StatementAssessment]:
    """Assess each ``(head, relation, tail)``; bad rows carry ``error`` and processing continues."""
    out = []
    for h, r, t in statements:
        try:
            out.append(assess_statement(params, h, r, t, entity_dict, relation_dict,
                                        filter_index, protocol))
        except (KeyError, IndexError, ValueError) as exc:
            msg = exc.args[0] if exc.args else str(exc)
            out.append(StatementAssessment(h, r, t, protocol=protocol, error=str(msg)))
    return out


def write_assessments_csv(rows, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["statement", "rank", "score", "probability", "protocol", "error"])
        for a in rows:
            if a.error is not None:
                writer.writerow([a.statement, "", "", "", a.protocol, a.error])
            else:
                writer.writerow([a.statement, f"{a.rank:g}", f"{a.score:.6f}",
                                 f"{a.probability:.6f}", a.protocol, ""])
