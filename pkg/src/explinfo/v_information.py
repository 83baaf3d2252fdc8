"""Predictive usable-information estimate of explanan informativeness.

Two linear predictors of the label are fitted under identical budgets: one
reading the explanan embedding, one reading a fixed small-noise null
vector. Informativeness is the drop in mean negative log-likelihood from
the null predictor to the conditional one, in nats; the per-instance
score (PVI) is the same difference before averaging.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from explinfo import numerics
from explinfo.numerics import AdamState, LinearPredictor, adam_step, as_f64

NULL_INPUT_STD = 0.1


class VInformationError(ValueError):
    pass


@dataclass(frozen=True)
class NullInput:
    """One small Gaussian vector, drawn once per run and shared by every
    instance so the null predictor sees a constant input."""

    values: np.ndarray
    seed: int

    @property
    def dim(self) -> int:
        return self.values.shape[0]


@dataclass
class PredictorConfig:
    learning_rate: float
    batch_size: int
    epochs: int = 10


@dataclass
class FitHistory:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    best_epoch: int = -1


@dataclass
class VInfoEstimate:
    h_entropy: float
    h_conditional: float
    v_information: float
    pointwise: dict
    n_classes: int


def make_null_input(seed: int, d_e: int) -> NullInput:
    """d_e i.i.d. draws from a zero-mean normal with variance 0.01."""
    if d_e < 1:
        raise VInformationError("null input needs at least one dimension")
    rng = np.random.default_rng(seed)
    return NullInput(values=rng.normal(0.0, NULL_INPUT_STD, size=d_e), seed=seed)


def _check_labels(labels, n_classes):
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size == 0:
        raise VInformationError("no labels given")
    if labels.min() < 0 or labels.max() >= n_classes:
        raise VInformationError(f"labels must lie in [0, {n_classes})")
    return labels


def fit_predictor(train_inputs, train_labels, val_inputs, val_labels, n_classes, config, seed):
    """Fit a linear softmax classifier by Adam on mean negative
    log-likelihood, keeping the lowest-validation-loss weights.

    A single-class training set is allowed but warned about: the fit
    degenerates to a constant predictor. Deterministic under ``seed``.
    """
    train_inputs = as_f64(train_inputs)
    train_labels = _check_labels(train_labels, n_classes)
    val_inputs = as_f64(val_inputs)
    val_labels = _check_labels(val_labels, n_classes)
    if np.unique(train_labels).size == 1:
        warnings.warn("single-class training labels; predictor degenerates to a constant", stacklevel=2)
    rng = np.random.default_rng(seed)
    n, dim = train_inputs.shape
    bs = config.batch_size
    if n < bs:
        raise VInformationError(f"training set smaller than one batch ({n} < {bs})")
    model = LinearPredictor.init(dim, n_classes)
    params = {"weights": model.weights, "bias": model.bias}
    state = AdamState.init(params, lr=config.learning_rate)
    history = FitHistory()
    best_loss = np.inf
    best = (model.weights.copy(), model.bias.copy())
    for epoch in range(config.epochs):
        perm = rng.permutation(n)
        for start in range(0, n, bs):
            idx = perm[start : start + bs]
            loss, dw, db = numerics.xent_loss_grad(train_inputs[idx], train_labels[idx], model.weights, model.bias)
            if not np.isfinite(loss):
                raise VInformationError(f"non-finite training loss at epoch {epoch}")
            adam_step(params, {"weights": dw, "bias": db}, state)
            history.train_loss.append(loss)
        val_loss = mean_nll(model, val_inputs, val_labels)
        history.val_loss.append(val_loss)
        if val_loss < best_loss:
            best_loss = val_loss
            best = (model.weights.copy(), model.bias.copy())
            history.best_epoch = epoch
    return LinearPredictor(weights=best[0], bias=best[1]), history


def pointwise_nll(model: LinearPredictor, inputs, labels) -> np.ndarray:
    """Per-instance negative log-likelihood of the true label, in nats."""
    inputs = as_f64(inputs)
    labels = _check_labels(labels, model.bias.shape[0])
    if inputs.shape[0] != labels.size:
        raise VInformationError(f"count mismatch: {inputs.shape[0]} vectors vs {labels.size} labels")
    logp = model.log_proba(inputs)
    return -logp[np.arange(labels.size), labels]


def mean_nll(model: LinearPredictor, inputs, labels) -> float:
    return float(pointwise_nll(model, inputs, labels).mean())


def v_information(null_fit, cond_fit, eval_labels, eval_es, null_input: NullInput, eval_ids=None) -> VInfoEstimate:
    """Assemble the estimate from the two fitted predictors.

    h_entropy and h_conditional are mean NLLs over the evaluation split;
    the dataset value is their difference and the per-instance score is
    pvi = -ln h[null](y) + ln h[e](y). A slightly negative dataset value
    is legitimate (imperfect optimization), so no sign is asserted.
    """
    eval_es = as_f64(eval_es)
    n_classes = cond_fit.bias.shape[0]
    eval_labels = _check_labels(eval_labels, n_classes)
    if eval_es.shape[0] != eval_labels.size:
        raise VInformationError(f"count mismatch: {eval_es.shape[0]} vectors vs {eval_labels.size} labels")
    if eval_ids is None:
        eval_ids = [str(i) for i in range(eval_labels.size)]
    null_eval = np.broadcast_to(null_input.values, eval_es.shape).copy()
    cond_nll = pointwise_nll(cond_fit, eval_es, eval_labels)
    null_nll = pointwise_nll(null_fit, null_eval, eval_labels)
    pvi = null_nll - cond_nll
    h_entropy = float(null_nll.mean())
    h_conditional = float(cond_nll.mean())
    return VInfoEstimate(
        h_entropy=h_entropy,
        h_conditional=h_conditional,
        v_information=h_entropy - h_conditional,
        pointwise={rid: float(v) for rid, v in zip(eval_ids, pvi)},
        n_classes=n_classes,
    )


def estimate_v_information(
    train_es,
    train_labels,
    eval_es,
    eval_labels,
    n_classes,
    config: PredictorConfig,
    seed: int,
    eval_ids=None,
    null_seed: int | None = None,
    resample_null_per_instance: bool = False,
) -> VInfoEstimate:
    """Full pipeline: fit both predictors under one budget, then score.

    ``resample_null_per_instance`` is a sensitivity flag: instead of one
    shared null vector, every instance gets its own draw. The default
    (shared) is what the headline estimates use.
    """
    train_es = as_f64(train_es)
    eval_es = as_f64(eval_es)
    dim = train_es.shape[1]
    null = make_null_input(seed if null_seed is None else null_seed, dim)
    if resample_null_per_instance:
        rng = np.random.default_rng(null.seed)
        null_train = rng.normal(0.0, NULL_INPUT_STD, size=train_es.shape)
        null_eval = rng.normal(0.0, NULL_INPUT_STD, size=eval_es.shape)
    else:
        null_train = np.broadcast_to(null.values, train_es.shape).copy()
        null_eval = np.broadcast_to(null.values, eval_es.shape).copy()

    cond_fit, _ = fit_predictor(train_es, train_labels, eval_es, eval_labels, n_classes, config, seed)
    null_fit, _ = fit_predictor(null_train, train_labels, null_eval, eval_labels, n_classes, config, seed)

    if not resample_null_per_instance:
        return v_information(null_fit, cond_fit, eval_labels, eval_es, null, eval_ids=eval_ids)

    eval_labels = _check_labels(eval_labels, n_classes)
    if eval_ids is None:
        eval_ids = [str(i) for i in range(eval_labels.size)]
    cond_nll = pointwise_nll(cond_fit, eval_es, eval_labels)
    null_nll = pointwise_nll(null_fit, null_eval, eval_labels)
    pvi = null_nll - cond_nll
    h_entropy = float(null_nll.mean())
    h_conditional = float(cond_nll.mean())
    return VInfoEstimate(
        h_entropy=h_entropy,
        h_conditional=h_conditional,
        v_information=h_entropy - h_conditional,
        pointwise={rid: float(v) for rid, v in zip(eval_ids, pvi)},
        n_classes=n_classes,
    )


def write_pvi_csv(estimate: VInfoEstimate, path, seed: int):
    """Per-instance scores in the shared pointwise CSV layout, with
    estimator "v_info" and batch_size left empty (not a contrastive
    quantity)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "estimator", "pointwise_nats", "batch_size", "seed"])
        for rid in sorted(estimate.pointwise):
            writer.writerow([rid, "v_info", repr(estimate.pointwise[rid]), "", seed])


def read_pvi_csv(path) -> dict:
    out = {}
    with Path(path).open("r", encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            out[row["id"]] = float(row["pointwise_nats"])
    return out
