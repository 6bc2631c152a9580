import csv

import numpy as np
import pytest
from hypothesis import given, strategies as st

from kgsim.inference import assess_statement, batch_assess, expit, write_assessments_csv
from kgsim.models import ModelKind, ModelParams, init_params
from kgsim.store import Dictionary, build_filter_index

from conftest import make_store

# (statement, rank, score, probability) as printed for the trained ComplEx model.
PUBLISHED_PROBS = [
    ("hsa04024 PATHWAY_GENE HSA:51196", 236, 3.704783, 0.975985),
    ("D11034 DRUG_EFFICACY_DISEASE H00409", 2, 4.851221, 0.992242),
    ("D04905 DRUG_TARGET_PATHWAY hsa05010", 1, 4.979891, 0.993172),
    ("N00060 NETWORK_GENE HSA:23401", 1, 5.399962, 0.995504),
    ("hsa04024 PATHWAY_GENE HSA:6336", 19814, -0.21121, 0.447393),
    ("D11056 DRUG_TARGET_GENE HSA:7388", 7636, 0.089212, 0.522288),
    ("D11056 DRUG_TARGET_GENE HSA:3352", 133, 2.823472, 0.943931),
    ("N00399 NETWORK_GENE HSA:9217", 27812, -0.44892, 0.389616),
    ("D04905 DRUG_TARGET_PATHWAY hsa04728", 25, 4.369776, 0.987504),
    ("N00399 NETWORK_GENE N00399", 16476, -0.05818, 0.485458),
    ("H00242 DISEASE_GENE D11034", 28037, -0.20788, 0.448214),
    ("N00060 DRUG_TARGET_PATHWAY hsa04380", 32017, -0.92776, 0.283378),
]


def test_expit_zero():
    assert expit(0.0) == 0.5


def _printed_interval(value):
    # Printed scores are cut (not rounded) to their shown decimals.
    decimals = len(repr(value).split(".")[1])
    step = 10.0 ** -decimals
    return (value, value + step) if value >= 0 else (value - step, value)


@pytest.mark.parametrize("row", PUBLISHED_PROBS, ids=[r[0] for r in PUBLISHED_PROBS])
def test_expit_published_within_print_precision(row):
    _, _, s, p = row
    lo, hi = _printed_interval(s)
    # Some score the printed digits could stand for maps onto the printed probability.
    assert expit(lo) - 5e-7 <= p <= expit(hi) + 5e-7


def test_expit_published_six_decimal_rows_exact():
    six = [r for r in PUBLISHED_PROBS if len(repr(r[2]).split(".")[1]) == 6]
    assert len(six) == 7
    for _, _, s, p in six:
        assert abs(expit(s) - p) <= 5e-7


def test_expit_extremes_stable():
    with np.errstate(all="raise"):
        assert expit(700.0) == 1.0
        assert 0.0 <= expit(-700.0) < 1e-300
    np.testing.assert_allclose(expit(np.array([-1.0, 0.0, 1.0])),
                               [1 / (1 + np.e), 0.5, 1 / (1 + np.exp(-1))])


@given(st.floats(-700, 700))
def test_expit_reflection(x):
    assert expit(-x) == pytest.approx(1 - expit(x), abs=1e-15)


@given(st.floats(-30, 30), st.floats(-30, 30))
def test_expit_monotone(a, b):
    if a < b:
        assert expit(a) <= expit(b)
    if b - a > 1e-9:
        assert expit(a) < expit(b)


def labelled_model():
    ents = Dictionary(["D1", "D2", "G1", "G2", "Z"])
    rels = Dictionary(["TARGET", "OTHER"])
    p = init_params(ModelKind.DISTMULT, 3, 5, 2, seed=0)
    return p, ents, rels


def test_zero_embedding_gives_half():
    p, ents, rels = labelled_model()
    p.entity_emb[4] = 0
    a = assess_statement(p, "D1", "TARGET", "Z", ents, rels, protocol="raw")
    assert a.score == 0.0 and a.probability == 0.5


def test_assessment_fields():
    p, ents, rels = labelled_model()
    store = make_store([(0, 0, 2), (1, 0, 3)], 5, 2)
    filt = build_filter_index([store])
    a = assess_statement(p, "D1", "TARGET", "G1", ents, rels, filt, "filtered")
    assert a.ids == (0, 0, 2)
    assert a.rank >= 1
    assert a.probability == pytest.approx(expit(a.score), abs=1e-12)
    assert a.protocol == "filtered"


def test_unknown_label_named():
    p, ents, rels = labelled_model()
    with pytest.raises(KeyError, match="NOPE"):
        assess_statement(p, "NOPE", "TARGET", "G1", ents, rels, protocol="raw")
    with pytest.raises(KeyError, match="relation"):
        assess_statement(p, "D1", "UNSEEN", "G1", ents, rels, protocol="raw")


def test_batch_assess_errors_and_order():
    p, ents, rels = labelled_model()
    assert batch_assess(p, [], ents, rels, protocol="raw") == []
    rows = batch_assess(p, [("D1", "TARGET", "G1"), ("D1", "BAD", "G1"), ("G2", "OTHER", "D2")],
                        ents, rels, protocol="raw")
    assert [r.error is None for r in rows] == [True, False, True]
    assert rows[2].statement == "G2 OTHER D2"


def test_batch_twelve_shape_and_order(tmp_path):
    # Twelve statements over a synthetic model; each row populated.
    p, ents, rels = labelled_model()
    labels = ents.id_to_label
    stmts = [(labels[i % 5], rels.id_to_label[i % 2], labels[(3 * i + 1) % 5]) for i in range(12)]
    rows = batch_assess(p, stmts, ents, rels, protocol="raw")
    assert len(rows) == 12
    for r in rows:
        assert r.rank is not None and r.score is not None
        assert r.probability == pytest.approx(expit(r.score), abs=1e-12)
    by_score = sorted(range(12), key=lambda i: rows[i].score)
    by_prob = sorted(range(12), key=lambda i: rows[i].probability)
    assert by_score == by_prob
    write_assessments_csv(rows, tmp_path / "a.csv")
    out = list(csv.DictReader(open(tmp_path / "a.csv")))
    assert len(out) == 12
    assert list(out[0])[:4] == ["statement", "rank", "score", "probability"]
    assert len(out[0]["probability"].split(".")[1]) == 6


def test_self_statement_allowed():
    p, ents, rels = labelled_model()
    a = assess_statement(p, "Z", "OTHER", "Z", ents, rels, protocol="raw")
    assert a.rank >= 1
