"""Contrastive lower-bound estimation of the input-explanan relevance score.

The dataset estimate for a batch of N aligned pairs is ln N minus the mean
cross-entropy of identifying each pair among the in-batch candidates; the
per-instance score is ln N plus the log-probability assigned to the
aligned pair. Donsker-Varadhan style alternative bounds are provided for
comparison runs.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from explinfo import numerics
from explinfo.numerics import AdamState, BilinearCritic, adam_step, as_f64

ESTIMATORS = ("infonce", "mine", "nwj", "smile")


class EstimatorError(ValueError):
    pass


class TrainingDivergedError(RuntimeError):
    """Loss became non-finite; carries the history collected so far."""

    def __init__(self, message, history):
        super().__init__(message)
        self.history = history


@dataclass
class MiBatch:
    """Aligned (input vector, explanan vector) pairs with their ids."""

    xs: np.ndarray
    es: np.ndarray
    ids: list

    def __post_init__(self):
        self.xs = as_f64(self.xs)
        self.es = as_f64(self.es)
        if self.xs.shape[0] != self.es.shape[0]:
            raise EstimatorError(f"row mismatch: {self.xs.shape[0]} inputs vs {self.es.shape[0]} explanans")
        if len(self.ids) != self.xs.shape[0]:
            raise EstimatorError("ids must align with rows")

    @property
    def size(self) -> int:
        return self.xs.shape[0]


@dataclass
class MiEstimate:
    dataset_nats: float
    pointwise: dict
    batch_size: int
    estimator: str = "infonce"
    training_history: "TrainingHistory | None" = None


@dataclass
class TrainConfig:
    learning_rate: float
    batch_size: int
    epochs: int = 10


@dataclass
class TrainingHistory:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    best_epoch: int = -1


def make_batches(xs, es, ids=None, batch_size=64, seed=None) -> list:
    """Chunk aligned pairs into equal-size batches, dropping the remainder.

    A seed shuffles membership first; without one the order is kept. At
    least one full batch must be available.
    """
    xs = as_f64(xs)
    es = as_f64(es)
    n = xs.shape[0]
    if ids is None:
        ids = [str(i) for i in range(n)]
    if batch_size < 1:
        raise EstimatorError("batch size must be positive")
    if n < batch_size:
        raise EstimatorError(f"no full batch: {n} rows at batch size {batch_size}")
    order = np.arange(n)
    if seed is not None:
        order = np.random.default_rng(seed).permutation(n)
    batches = []
    for start in range(0, n - batch_size + 1, batch_size):
        idx = order[start : start + batch_size]
        batches.append(MiBatch(xs=xs[idx], es=es[idx], ids=[ids[i] for i in idx]))
    return batches


def infonce_batch_loss(batch: MiBatch, critic: BilinearCritic) -> float:
    """Mean cross-entropy of picking each aligned input among the batch."""
    loss, _ = numerics.infonce_loss_grad(batch.xs, batch.es, critic.W)
    return loss


def _pair_log_scores(batch: MiBatch, W) -> np.ndarray:
    """st[i, j] = log-score of input j as the candidate for explanan i."""
    return batch.es @ (batch.xs @ as_f64(W)).T


def infonce_pointwise(batch: MiBatch, critic: BilinearCritic) -> np.ndarray:
    """Per-instance estimate: ln N plus the aligned pair's log-probability."""
    st = _pair_log_scores(batch, critic.W)
    n = batch.size
    m = st.max(axis=1, keepdims=True)
    lse = m[:, 0] + np.log(np.exp(st - m).sum(axis=1))
    diag = np.arange(n)
    return np.log(n) + (st[diag, diag] - lse)


def infonce_estimate(batches, critic: BilinearCritic, history=None) -> MiEstimate:
    """Dataset estimate: the average of per-batch ln N - loss values.

    All batches must share one size (drop partial batches upstream); the
    per-instance scores never exceed ln N.
    """
    if not batches:
        raise EstimatorError("no full batch available")
    n = batches[0].size
    if batches[-1].size < n:
        batches = batches[:-1]
    if not batches or any(b.size != n for b in batches):
        raise EstimatorError("all batches must share one size (only the last may fall short)")
    per_batch = []
    pointwise = {}
    cap = np.log(n)
    for batch in batches:
        scores = infonce_pointwise(batch, critic)
        assert np.all(scores <= cap + 1e-9), "pointwise estimate exceeded ln(batch size)"
        per_batch.append(scores.mean())
        for rid, s in zip(batch.ids, scores):
            pointwise[rid] = float(s)
    return MiEstimate(
        dataset_nats=float(np.mean(per_batch)),
        pointwise=pointwise,
        batch_size=n,
        estimator="infonce",
        training_history=history,
    )


def _mean_loss(batches, W) -> float:
    total = 0.0
    for batch in batches:
        st = _pair_log_scores(batch, W)
        m = st.max(axis=1, keepdims=True)
        lse = m[:, 0] + np.log(np.exp(st - m).sum(axis=1))
        diag = np.arange(batch.size)
        total += float(np.mean(lse - st[diag, diag]))
    return total / len(batches)


def train_infonce(train_xs, train_es, val_xs, val_es, config: TrainConfig, seed: int):
    """Fit the bilinear critic by Adam, keeping the best-validation matrix.

    Deterministic under ``seed``: the same call yields an identical
    history and critic. Divergence aborts with the history attached.
    """
    train_xs = as_f64(train_xs)
    train_es = as_f64(train_es)
    rng = np.random.default_rng(seed)
    n = train_xs.shape[0]
    bs = config.batch_size
    if n < bs:
        raise EstimatorError(f"training set smaller than one batch ({n} < {bs})")
    critic = BilinearCritic.init(train_xs.shape[1], train_es.shape[1], rng)
    params = {"W": critic.W}
    state = AdamState.init(params, lr=config.learning_rate)
    val_batches = make_batches(val_xs, val_es, batch_size=bs)
    history = TrainingHistory()
    best_loss = np.inf
    best_W = critic.W.copy()
    for epoch in range(config.epochs):
        perm = rng.permutation(n)
        for start in range(0, n - bs + 1, bs):
            idx = perm[start : start + bs]
            loss, dW = numerics.infonce_loss_grad(train_xs[idx], train_es[idx], critic.W)
            if not np.isfinite(loss):
                raise TrainingDivergedError(f"non-finite training loss at epoch {epoch}", history)
            adam_step(params, {"W": dW}, state)
            history.train_loss.append(loss)
        val_loss = _mean_loss(val_batches, critic.W)
        if not np.isfinite(val_loss):
            raise TrainingDivergedError(f"non-finite validation loss at epoch {epoch}", history)
        history.val_loss.append(val_loss)
        if val_loss < best_loss:
            best_loss = val_loss
            best_W = critic.W.copy()
            history.best_epoch = epoch
    return BilinearCritic(W=best_W), history


def critic_scores(batch: MiBatch, critic: BilinearCritic):
    """Critic log-scores on aligned pairs and on all in-batch mismatches."""
    st = _pair_log_scores(batch, critic.W)
    diag = np.arange(batch.size)
    joint = st[diag, diag].copy()
    mask = np.ones_like(st, dtype=bool)
    mask[diag, diag] = False
    return joint, st[mask]


def _log_mean_exp(scores) -> float:
    m = float(np.max(scores))
    return m + float(np.log(np.mean(np.exp(scores - m))))


def alt_bound(kind: str, joint_scores, marginal_scores, tau: float | None = None) -> float:
    """Alternative variational bounds from critic scores.

    ``mine`` is the Donsker-Varadhan form, ``nwj`` its untied relaxation,
    and ``smile`` is DV with the marginal scores' exponentials clipped to
    [e^-tau, e^tau].
    """
    joint = as_f64(joint_scores).ravel()
    marginal = as_f64(marginal_scores).ravel()
    if joint.size == 0 or marginal.size == 0:
        raise EstimatorError("score lists must be non-empty")
    if kind == "mine":
        value = joint.mean() - _log_mean_exp(marginal)
    elif kind == "nwj":
        expm = np.exp(marginal - 1.0)
        if not np.all(np.isfinite(expm)):
            raise EstimatorError("non-finite after exponentiation; consider the clipped (smile) bound")
        value = joint.mean() - expm.mean()
    elif kind == "smile":
        if tau is None:
            raise EstimatorError("smile requires a clipping threshold tau")
        value = joint.mean() - _log_mean_exp(np.clip(marginal, -tau, tau))
    else:
        raise EstimatorError(f"unknown bound {kind!r}")
    if not np.isfinite(value):
        raise EstimatorError("bound is non-finite; consider the clipped (smile) bound")
    return float(value)


def write_pointwise_csv(estimate: MiEstimate, path, seed: int):
    """Per-instance scores as CSV: id, estimator, pointwise_nats, batch_size, seed."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "estimator", "pointwise_nats", "batch_size", "seed"])
        for rid in sorted(estimate.pointwise):
            writer.writerow([rid, estimate.estimator, repr(estimate.pointwise[rid]), estimate.batch_size, seed])


def read_pointwise_csv(path) -> dict:
    """Inverse of ``write_pointwise_csv``; returns id -> nats."""
    out = {}
    with Path(path).open("r", encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            out[row["id"]] = float(row["pointwise_nats"])
    return out
