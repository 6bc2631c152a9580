"""Negative-sampling training loop, losses, regularizers, sparse optimizers, grid search."""
from __future__ import annotations

import logging
import re
import time
from dataclasses import dataclass, field, fields, replace

import numpy as np
from scipy.special import log_expit, logsumexp, softmax

from .models import ModelKind, ModelParams, gradient_rows, init_params, score_rows
from .store import FilterIndex, TripleStore, build_filter_index

logger = logging.getLogger(__name__)

LOSSES = ("nll", "bce")
OPTIMIZERS = ("adam", "sgd")
REGULARIZERS = ("none", "l1", "l2", "l3")


class DivergenceError(FloatingPointError):
    def __init__(self, epoch: int, batch: int, value: float):
        super().__init__(f"non-finite loss {value} at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch


@dataclass(frozen=True)
class TrainConfig:
    kind: ModelKind = ModelKind.COMPLEX
    dim: int = 100
    loss: str = "nll"
    optimizer: str = "adam"
    learning_rate: float = 1e-3
    regularizer: str = "none"
    reg_constant: float = 0.0
    negatives_per_positive: int = 10
    epochs: int = 200
    batch_size: int = 512
    seed: int = 42
    # Multiplier on the default uniform init bound.
    init_scale: float = 1.0

    def __post_init__(self):
        if isinstance(self.kind, str):
            object.__setattr__(self, "kind", ModelKind.parse(self.kind))
        for name in ("dim", "negatives_per_positive", "batch_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be nonnegative")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if not self.init_scale > 0:
            raise ValueError("init_scale must be positive")
        if self.reg_constant < 0:
            raise ValueError("reg_constant must be nonnegative")
        if self.loss not in LOSSES:
            raise ValueError(f"loss must be one of {LOSSES}")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}")
        if self.regularizer not in REGULARIZERS:
            raise ValueError(f"regularizer must be one of {REGULARIZERS}")

    def to_text(self) -> str:
        vals = {CONFIG_KEYS_REVERSE[f.name]: getattr(self, f.name) for f in fields(self)}
        vals["model"] = self.kind.value
        return " ".join(f"{k}={v}" for k, v in vals.items())


# Config-file key -> (TrainConfig field, parser)
CONFIG_KEYS = {
    "model": ("kind", ModelKind.parse),
    "dim": ("dim", int),
    "loss": ("loss", str.lower),
    "optimizer": ("optimizer", str.lower),
    "lr": ("learning_rate", float),
    "reg": ("regularizer", str.lower),
    "reg_lambda": ("reg_constant", float),
    "negatives": ("negatives_per_positive", int),
    "epochs": ("epochs", int),
    "batch": ("batch_size", int),
    "seed": ("seed", int),
    "init_scale": ("init_scale", float),
}
CONFIG_KEYS_REVERSE = {v[0]: k for k, v in CONFIG_KEYS.items()}


def parse_overrides(text: str) -> dict:
    """Parse ``key=value`` tokens (whitespace, comma or newline separated)."""
    out = {}
    for line in text.splitlines():
        line = line.split("#", 1)[0]
        for token in re.split(r"[\s,]+", line.strip()):
            if not token:
                continue
            if "=" not in token:
                raise ValueError(f"expected key=value, got {token!r}")
            key, value = token.split("=", 1)
            key = key.strip().lower()
            if key not in CONFIG_KEYS:
                raise ValueError(f"unknown config key {key!r}")
            name, conv = CONFIG_KEYS[key]
            out[name] = conv(value.strip())
    return out


def config_from_text(text: str, base: TrainConfig | None = None) -> TrainConfig:
    return replace(base or TrainConfig(), **parse_overrides(text))


def parse_grid(text: str, base: TrainConfig | None = None) -> list[TrainConfig]:
    """One config per nonblank line, each applied over ``base``."""
    grid = []
    for line in text.splitlines():
        if line.split("#", 1)[0].strip():
            grid.append(config_from_text(line, base))
    return grid


@dataclass
class TrainReport:
    epoch_losses: list[float]
    params: ModelParams
    wall_time: float
    config: TrainConfig


# -- negative sampling ----------------------------------------------------

MAX_RESAMPLE = 100


def corrupt_batch(triples: np.ndarray, k: int, n_entities: int,
                  filter_index: FilterIndex | None, rng: np.random.Generator):
    """Corrupt each triple ``k`` times by replacing its head or tail.

    Returns ``(negatives, unfiltered)`` where ``negatives`` has shape
    ``(n, k, 3)`` and ``unfiltered`` flags negatives that were still known
    true triples after the resampling budget ran out.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    if n_entities < 2:
        raise ValueError("need at least 2 entities to corrupt a triple")
    triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    n = len(triples)
    neg = np.repeat(triples[:, None, :], k, axis=1)
    side = np.where(rng.random((n, k)) < 0.5, 0, 2)
    rows, cols = np.nonzero(np.ones((n, k), dtype=bool))
    slot = side.ravel()

    def draw(idx):
        r, c, s = rows[idx], cols[idx], slot[idx]
        shift = rng.integers(1, n_entities, size=len(idx))
        neg[r, c, s] = (triples[r, s] + shift) % n_entities

    pending = np.arange(n * k)
    draw(pending)
    bad = np.zeros((n, k), dtype=bool)
    if filter_index is not None:
        for _ in range(MAX_RESAMPLE):
            hit = filter_index.contains_many(neg[rows[pending], cols[pending]])
            pending = pending[hit]
            if not len(pending):
                break
            draw(pending)
        else:
            hit = filter_index.contains_many(neg[rows[pending], cols[pending]])
            pending = pending[hit]
        bad[rows[pending], cols[pending]] = True
    return neg, bad


def sample_negatives(triple, k: int, n_entities: int, filter_index: FilterIndex | None,
                     rng: np.random.Generator) -> list[tuple[int, int, int]]:
    neg, _ = corrupt_batch(np.asarray(triple)[None, :], k, n_entities, filter_index, rng)
    return [tuple(int(x) for x in row) for row in neg[0]]


# -- losses ---------------------------------------------------------------

def _check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise ValueError("scores must be finite")


def loss_bce(pos_scores, neg_scores):
    """Binary cross-entropy on ``expit(score)``, targets 1 for positives, 0 for negatives.

    Returns ``(loss, d_pos, d_neg)``; the derivative w.r.t. each raw score is
    ``(expit(s) - target) / N``.
    """
    pos = np.asarray(pos_scores, dtype=float)
    neg = np.asarray(neg_scores, dtype=float)
    _check_finite(pos, neg)
    n = pos.size + neg.size
    loss = -(np.sum(log_expit(pos)) + np.sum(log_expit(-neg))) / n
    d_pos = -np.exp(log_expit(-pos)) / n
    d_neg = np.exp(log_expit(neg)) / n
    return float(loss), d_pos, d_neg


def loss_multiclass_nll(pos_score, neg_scores):
    """Softmax cross-entropy of one positive against its negatives.

    Returns ``(loss, d_pos, d_neg)``.
    """
    neg = np.asarray(neg_scores, dtype=float).ravel()
    _check_finite(np.asarray(pos_score), neg)
    s = np.concatenate([[float(pos_score)], neg])
    loss = logsumexp(s) - s[0]
    w = softmax(s)
    return float(max(loss, 0.0)), float(w[0] - 1.0), w[1:]


def _batch_loss(kind: str, scores: np.ndarray):
    # scores: (n, 1 + k), column 0 is the positive. Returns mean loss and dL/dscores.
    n = scores.shape[0]
    if kind == "nll":
        lse = logsumexp(scores, axis=1)
        loss = np.mean(lse - scores[:, 0])
        grad = softmax(scores, axis=1)
        grad[:, 0] -= 1.0
        return float(loss), grad / n
    targets = np.zeros_like(scores)
    targets[:, 0] = 1.0
    signed = np.where(targets > 0, scores, -scores)
    loss = -np.mean(log_expit(signed))
    grad = (np.exp(log_expit(scores)) - targets) / scores.size
    return float(loss), grad


# -- regularizers ---------------------------------------------------------

def reg_penalty(rows: np.ndarray, mode: str, lam: float):
    """Penalty and gradient for L1 (lasso), L2 (ridge) or L3 (N3) over the given rows."""
    if lam < 0:
        raise ValueError("regularization constant must be nonnegative")
    w = np.asarray(rows, dtype=float)
    mode = mode.lower()
    if mode == "none":
        return 0.0, np.zeros_like(w)
    if mode == "l1":
        return float(lam * np.sum(np.abs(w))), lam * np.sign(w)
    if mode == "l2":
        return float(lam * np.sum(w * w)), 2.0 * lam * w
    if mode == "l3":
        a = np.abs(w)
        return float(lam * np.sum(a ** 3)), 3.0 * lam * a * w
    raise ValueError(f"unknown regularizer {mode!r}")


# -- optimizers -----------------------------------------------------------

class SGD:
    def __init__(self, table: np.ndarray, lr: float):
        self.table = table
        self.lr = lr

    def step(self, rows: np.ndarray, grads: np.ndarray) -> None:
        if grads.shape != (len(rows), self.table.shape[1]):
            raise ValueError("gradient shape does not match rows")
        self.table[rows] -= self.lr * grads


class Adam:
    """Adam with lazily allocated per-row moments and per-row step counts.

    Moment storage grows only with the set of rows that have received a
    gradient, so untouched rows cost one int of bookkeeping each.
    """

    def __init__(self, table: np.ndarray, lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.table = table
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.slot = np.full(table.shape[0], -1, dtype=np.int64)
        w = table.shape[1]
        self.m = np.zeros((0, w))
        self.v = np.zeros((0, w))
        self.t = np.zeros(0, dtype=np.int64)

    def _slots(self, rows):
        new = rows[self.slot[rows] < 0]
        if len(new):
            start = len(self.t)
            self.slot[new] = np.arange(start, start + len(new))
            w = self.table.shape[1]
            self.m = np.concatenate([self.m, np.zeros((len(new), w))])
            self.v = np.concatenate([self.v, np.zeros((len(new), w))])
            self.t = np.concatenate([self.t, np.zeros(len(new), dtype=np.int64)])
        return self.slot[rows]

    def step(self, rows: np.ndarray, grads: np.ndarray) -> None:
        if grads.shape != (len(rows), self.table.shape[1]):
            raise ValueError("gradient shape does not match rows")
        s = self._slots(rows)
        self.t[s] += 1
        self.m[s] = self.beta1 * self.m[s] + (1 - self.beta1) * grads
        self.v[s] = self.beta2 * self.v[s] + (1 - self.beta2) * grads ** 2
        t = self.t[s][:, None]
        m_hat = self.m[s] / (1 - self.beta1 ** t)
        v_hat = self.v[s] / (1 - self.beta2 ** t)
        self.table[rows] -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def make_optimizer(name: str, table: np.ndarray, lr: float):
    return Adam(table, lr) if name == "adam" else SGD(table, lr)


# -- training loop --------------------------------------------------------

def _accumulate(ids: np.ndarray, grads: np.ndarray):
    uniq, inv = np.unique(ids.ravel(), return_inverse=True)
    acc = np.zeros((len(uniq), grads.shape[-1]))
    np.add.at(acc, inv, grads.reshape(-1, grads.shape[-1]))
    return uniq, acc


def train(store: TripleStore, config: TrainConfig, filter_index: FilterIndex | None = None,
          init: ModelParams | None = None):
    """Fit a model with mini-batch negative sampling.

    Negatives are filtered against ``filter_index`` (defaults to an index
    over ``store``). Returns ``(params, report)``.
    """
    if not len(store):
        raise ValueError("cannot train on an empty store")
    start = time.perf_counter()
    params = init.copy() if init is not None else init_params(
        config.kind, config.dim, store.n_entities, store.n_relations, config.seed,
        config.init_scale)
    if filter_index is None:
        filter_index = build_filter_index([store])
    rng = np.random.default_rng(config.seed)
    ent_opt = make_optimizer(config.optimizer, params.entity_emb, config.learning_rate)
    rel_opt = make_optimizer(config.optimizer, params.relation_emb, config.learning_rate)
    losses = []
    with np.errstate(over="ignore", invalid="ignore"):
        _run_epochs(params, store, config, filter_index, rng, ent_opt, rel_opt, losses)
    report = TrainReport(losses, params, time.perf_counter() - start, config)
    return params, report


def _run_epochs(params, store, config, filter_index, rng, ent_opt, rel_opt, losses):
    triples = store.triples
    k = config.negatives_per_positive
    for epoch in range(config.epochs):
        order = rng.permutation(len(triples))
        batch_losses = []
        for b, s in enumerate(range(0, len(order), config.batch_size)):
            pos = triples[order[s:s + config.batch_size]]
            neg, _ = corrupt_batch(pos, k, store.n_entities, filter_index, rng)
            allt = np.concatenate([pos[:, None, :], neg], axis=1)
            hid, rid, tid = allt[..., 0], allt[..., 1], allt[..., 2]
            h = params.entity_emb[hid]
            r = params.relation_emb[rid]
            t = params.entity_emb[tid]
            loss, dscore = _batch_loss(config.loss, score_rows(params, h, r, t))

            gh, gr, gt = gradient_rows(params, h, r, t)
            dscore = dscore[..., None]
            ent_rows, ent_grad = _accumulate(np.concatenate([hid.ravel(), tid.ravel()]),
                                             np.concatenate([(gh * dscore).reshape(-1, params.width),
                                                             (gt * dscore).reshape(-1, params.width)]))
            rel_rows, rel_grad = _accumulate(rid, gr * dscore)
            penalty = 0.0
            if config.regularizer != "none" and config.reg_constant > 0:
                # Scaled like the data loss, which is a mean over the batch.
                lam = config.reg_constant / len(pos)
                p_e, g_e = reg_penalty(params.entity_emb[ent_rows], config.regularizer, lam)
                p_r, g_r = reg_penalty(params.relation_emb[rel_rows], config.regularizer, lam)
                penalty = p_e + p_r
                ent_grad += g_e
                rel_grad += g_r
            total = loss + penalty
            if not np.isfinite(total):
                raise DivergenceError(epoch, b, total)
            ent_opt.step(ent_rows, ent_grad)
            rel_opt.step(rel_rows, rel_grad)
            batch_losses.append(total)
        losses.append(float(np.mean(batch_losses)))
        if not np.all(np.isfinite(params.entity_emb)) or not np.all(np.isfinite(params.relation_emb)):
            raise DivergenceError(epoch, len(batch_losses) - 1, float("nan"))
        logger.debug("epoch %d loss %.6f", epoch, losses[-1])


# -- grid search ----------------------------------------------------------

@dataclass
class GridRow:
    index: int
    config: TrainConfig
    metrics: dict = field(default_factory=dict)
    error: str | None = None


def grid_search(store: TripleStore, grid, test: TripleStore, metric: str = "mrr",
                filter_stores=(), protocol: str = "filtered"):
    """Train and evaluate every config; rows sorted by ``metric`` descending.

    ``metric`` is ``"mrr"`` or ``"hits@N"``. Failed cells are kept, carry
    the error text, and sort last. Ties keep grid order.
    """
    from .evaluation import evaluate

    grid = list(grid)
    if not grid:
        raise ValueError("empty grid")
    metric = metric.lower()
    filt = build_filter_index([store, test, *filter_stores])
    train_filter = build_filter_index([store])
    rows = []
    for i, cfg in enumerate(grid):
        row = GridRow(i, cfg)
        try:
            params, _ = train(store, cfg, train_filter)
            rep = evaluate(params, test, filt, protocol=protocol)
            row.metrics = rep.metrics()
            if metric not in row.metrics:
                raise ValueError(f"unknown metric {metric!r}")
        except (ValueError, FloatingPointError) as exc:
            row.error = str(exc)
            logger.warning("grid cell %d failed: %s", i, exc)
        rows.append(row)
    ok = sorted((r for r in rows if r.error is None), key=lambda r: (-r.metrics[metric], r.index))
    return ok + [r for r in rows if r.error is not None]
