"""Link-prediction ranking: raw and filtered ranks, MRR and Hits@n."""
from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .models import ModelParams, score_all_heads_batch, score_all_tails_batch
from .store import FilterIndex, TripleStore

PROTOCOLS = ("raw", "filtered")
SIDES = ("head", "tail", "both")
DEFAULT_HITS = (1, 3, 10)


def _check(protocol, side=None, filter_index=None):
    if protocol not in PROTOCOLS:
        raise ValueError(f"protocol must be one of {PROTOCOLS}")
    if side is not None and side not in SIDES:
        raise ValueError(f"side must be one of {SIDES}")
    if protocol == "filtered" and filter_index is None:
        raise ValueError("filtered protocol requires a filter index")


def rank_from_scores(scores: np.ndarray, true_index: int, exclude=()) -> float:
    """Average-tie rank of ``scores[true_index]`` among the other non-excluded entries."""
    scores = np.asarray(scores, dtype=float)
    s = scores[true_index]
    keep = np.ones(len(scores), dtype=bool)
    keep[true_index] = False
    for e in exclude:
        keep[e] = False
    other = scores[keep]
    return 1.0 + np.count_nonzero(other > s) + 0.5 * np.count_nonzero(other == s)


def rank_triple(params: ModelParams, triple, side: str, protocol: str = "filtered",
                filter_index: FilterIndex | None = None) -> float:
    """Rank of the true head or tail against every entity replacement.

    ``rank = 1 + #greater + 0.5 * #equal`` over the other candidates; under
    the filtered protocol candidates forming a known true triple are skipped.
    """
    _check(protocol, side, filter_index)
    if side == "both":
        raise ValueError("rank_triple ranks one side at a time")
    h, r, t = (int(x) for x in triple)
    if side == "tail":
        scores = score_all_tails_batch(params, [h], [r])[0]
        true, known = t, (filter_index.known_tails(h, r) if protocol == "filtered" else ())
    else:
        scores = score_all_heads_batch(params, [r], [t])[0]
        true, known = h, (filter_index.known_heads(r, t) if protocol == "filtered" else ())
    return rank_from_scores(scores, true, [e for e in known if e != true])


def _chunk_ranks(params, triples, side, protocol, filter_index):
    h, r, t = triples[:, 0], triples[:, 1], triples[:, 2]
    if side == "tail":
        scores = score_all_tails_batch(params, h, r)
        true = t
    else:
        scores = score_all_heads_batch(params, r, t)
        true = h
    idx = np.arange(len(triples))
    s = scores[idx, true][:, None]
    # NaN drops a candidate from both comparisons below.
    scores[idx, true] = np.nan
    if protocol == "filtered":
        for i, (hh, rr, tt) in enumerate(triples.tolist()):
            known = filter_index.known_tails(hh, rr) if side == "tail" else filter_index.known_heads(rr, tt)
            if known:
                scores[i, list(known)] = np.nan
    greater = np.count_nonzero(scores > s, axis=1)
    equal = np.count_nonzero(scores == s, axis=1)
    return 1.0 + greater + 0.5 * equal


@dataclass
class RankReport:
    triples: np.ndarray
    head_ranks: np.ndarray
    tail_ranks: np.ndarray
    protocol: str
    hits_levels: tuple = DEFAULT_HITS
    side: str = "both"

    def ranks(self, side: str | None = None) -> np.ndarray:
        side = side or self.side
        if side == "head":
            return self.head_ranks
        if side == "tail":
            return self.tail_ranks
        return np.concatenate([self.head_ranks, self.tail_ranks])

    def mrr(self, side: str | None = None) -> float:
        return float(np.mean(1.0 / self.ranks(side)))

    def hits(self, n: int, side: str | None = None) -> float:
        return float(np.mean(self.ranks(side) <= n))

    def metrics(self, side: str | None = None) -> dict:
        out = {"mrr": self.mrr(side)}
        for n in self.hits_levels:
            out[f"hits@{n}"] = self.hits(n, side)
        return out


def evaluate(params: ModelParams, test: TripleStore, filter_index: FilterIndex | None = None,
             protocol: str = "filtered", hits_levels=DEFAULT_HITS, side: str = "both",
             n_jobs: int = 1, chunk_size: int = 256) -> RankReport:
    """Head and tail ranks for every test triple (``2 * |test|`` ranks)."""
    _check(protocol, side, filter_index)
    if not len(test):
        raise ValueError("test set is empty")
    triples = test.triples
    chunks = [triples[s:s + chunk_size] for s in range(0, len(triples), chunk_size)]
    out = {}
    for which in ("head", "tail"):
        def work(c, which=which):
            return _chunk_ranks(params, c, which, protocol, filter_index)
        if n_jobs > 1:
            with ThreadPoolExecutor(n_jobs) as pool:
                parts = list(pool.map(work, chunks))
        else:
            parts = [work(c) for c in chunks]
        out[which] = np.concatenate(parts)
    return RankReport(triples.copy(), out["head"], out["tail"], protocol,
                      tuple(hits_levels), side)


# -- report output --------------------------------------------------------

def report_rows(reports, sides=SIDES):
    rows = []
    for rep in reports:
        for side in sides:
            m = rep.metrics(side)
            rows.append({"protocol": rep.protocol, "side": side, **m})
    return rows


def format_table(reports, sides=SIDES) -> str:
    rows = report_rows(reports, sides)
    cols = list(rows[0])
    body = [[str(r["protocol"]), str(r["side"])] + [f"{r[c]:.4f}" for c in cols[2:]] for r in rows]
    widths = [max(len(c), *(len(b[i]) for b in body)) for i, c in enumerate(cols)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(cols, widths))]
    lines += ["  ".join(v.ljust(w) for v, w in zip(b, widths)) for b in body]
    return "\n".join(lines)


def write_report_csv(reports, path, sides=SIDES) -> None:
    rows = report_rows(reports, sides)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        for r in rows:
            writer.writerow({k: (f"{v:.6f}" if isinstance(v, float) else v) for k, v in r.items()})


def write_ranks_csv(report: RankReport, store: TripleStore, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["head", "relation", "tail", "side", "rank"])
        for row, hr, tr in zip(report.triples, report.head_ranks, report.tail_ranks):
            labels = store.labels(row)
            writer.writerow([*labels, "head", hr])
            writer.writerow([*labels, "tail", tr])
