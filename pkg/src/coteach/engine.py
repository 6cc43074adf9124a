"""Training engine: pre-training, the co-teaching loop, Adam, selection.

The co-teaching loop keeps two peer models. Every iteration a batch is
split into two disjoint halves; each model builds a learning protocol for
its peer from a snapshot of its own parameters, then both models step on
the protocol they received. Because protocols and gradients come from the
snapshots taken at step entry, the order in which the two updates are
applied cannot matter.

Randomness is organized as one RNG stream per concern (init / shuffle /
split), each seeded by (seed, concern, epoch), so e.g. changing the
evaluation cadence never perturbs the data order.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import losses, matcher, strategies
from .corpus import Corpus, TokenizedDialogue, to_pointwise
from .losses import LearningProtocol

STRATEGIES = ("margin", "weighting", "curriculum", "none")

_CONCERN_IDS = {"init": 0, "shuffle": 1, "split": 2}


def _stream(seed: int, concern: str, epoch: int = 0) -> np.random.Generator:
    return np.random.default_rng([seed, _CONCERN_IDS[concern], epoch])


@dataclass(frozen=True)
class TrainConfig:
    strategy: str = "none"
    lam: float | None = None
    delta: float | None = None
    learning_rate: float = 1e-4
    batch_size: int = 50
    n_epochs: int = 1
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    eval_every: int = 50

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.learning_rate < 0:
            raise ValueError("learning rate must be non-negative")
        if self.batch_size < 2 or self.batch_size % 2 != 0:
            raise ValueError("batch size must be even and at least 2")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.strategy == "margin" and (self.lam is None or self.lam <= 0):
            raise ValueError("margin strategy requires lam > 0")
        if self.strategy == "curriculum" and (
                self.delta is None or not 0.0 < self.delta <= 1.0):
            raise ValueError("curriculum strategy requires delta in (0, 1]")
        if self.n_epochs < 0:
            raise ValueError("n_epochs must be non-negative")
        if self.eval_every <= 0:
            raise ValueError("eval_every must be positive")


@dataclass(frozen=True)
class OptimizerState:
    """Adam moment vectors and step counter; empty arrays for SGD."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0


def init_optimizer(config: TrainConfig, n: int) -> OptimizerState:
    if config.optimizer == "sgd":
        return OptimizerState(np.zeros(0), np.zeros(0), 0)
    return OptimizerState(np.zeros(n), np.zeros(n), 0)


def adam_update(params: np.ndarray, grad: np.ndarray, state: OptimizerState,
                lr: float, beta1: float = 0.9, beta2: float = 0.999,
                eps: float = 1e-8):
    """One bias-corrected Adam step; returns (new params, new state)."""
    if params.shape != grad.shape:
        raise ValueError("params/grad length mismatch")
    if not np.all(np.isfinite(grad)):
        bad = int(np.flatnonzero(~np.isfinite(grad))[0])
        raise FloatingPointError(f"non-finite gradient entry at index {bad}")
    t = state.t + 1
    m = beta1 * state.m + (1.0 - beta1) * grad
    v = beta2 * state.v + (1.0 - beta2) * grad * grad
    m_hat = m / (1.0 - beta1 ** t)
    v_hat = v / (1.0 - beta2 ** t)
    new_params = params - lr * m_hat / (np.sqrt(v_hat) + eps)
    return new_params, OptimizerState(m, v, t)


def _apply_update(model: matcher.ModelState, grad: np.ndarray,
                  opt: OptimizerState, config: TrainConfig):
    if config.optimizer == "sgd":
        if not np.all(np.isfinite(grad)):
            raise FloatingPointError("non-finite gradient")
        params = model.params - config.learning_rate * grad
        opt = replace(opt, t=opt.t + 1)
    else:
        params, opt = adam_update(model.params, grad, opt, config.learning_rate,
                                  config.beta1, config.beta2, config.adam_eps)
    return matcher.ModelState(model.spec, params), opt


def split_batch(batch, rng: np.random.Generator):
    """Randomly permute and halve a batch into two disjoint sub-batches."""
    if len(batch) % 2 != 0:
        raise ValueError("batch size must be even")
    perm = rng.permutation(len(batch))
    half = len(batch) // 2
    return ([batch[i] for i in perm[:half]], [batch[i] for i in perm[half:]])


def validation_p_at_1(model: matcher.ModelState, triples) -> float:
    """P@1 over validation triples framed as 2-candidate ranking.

    The positive candidate precedes the negative, so a score tie ranks the
    positive first.
    """
    if not triples:
        raise ValueError("empty validation set")
    hits = 0
    for t in triples:
        s_pos = matcher.score(model, TokenizedDialogue(t.context, t.pos_response))
        s_neg = matcher.score(model, TokenizedDialogue(t.context, t.neg_response))
        hits += s_pos >= s_neg
    return hits / len(triples)


def _plain_ce_protocol(triples) -> LearningProtocol:
    pointwise = tuple((ex, 1.0) for ex in to_pointwise(triples))
    return LearningProtocol(losses.CROSS_ENTROPY, pointwise=pointwise)


def build_protocol(strategy: str, teacher: matcher.ModelState, sub_batch,
                   config: TrainConfig) -> LearningProtocol:
    """Apply a teaching strategy to a sub-batch of pairwise triples."""
    if strategy == "margin":
        return strategies.margin_protocol(teacher, sub_batch, config.lam)
    if strategy == "weighting":
        return strategies.weighting_protocol(teacher, to_pointwise(sub_batch))
    if strategy == "curriculum":
        return strategies.curriculum_protocol(teacher, to_pointwise(sub_batch),
                                              config.delta)
    if strategy == "none":
        return _plain_ce_protocol(sub_batch)
    raise ValueError(f"unknown strategy {strategy!r}")


@dataclass(frozen=True)
class HistoryRecord:
    iteration: int
    loss_a: float
    loss_b: float
    valid_p1_a: float | None = None
    valid_p1_b: float | None = None


@dataclass
class RunHistory:
    """Append-only per-iteration log of the co-teaching loop."""

    records: list[HistoryRecord] = field(default_factory=list)

    def append(self, record: HistoryRecord) -> None:
        if self.records and record.iteration <= self.records[-1].iteration:
            raise ValueError("iteration indices must be strictly increasing")
        self.records.append(record)


HISTORY_COLUMNS = ["iter", "loss_A", "loss_B", "valid_P@1_A", "valid_P@1_B", "wall_ms"]


def write_history(history: RunHistory, path) -> None:
    """Write history.csv. The wall_ms column is kept for schema parity but
    written as 0 so identical runs produce byte-identical files."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(HISTORY_COLUMNS)
        for r in history.records:
            writer.writerow([
                r.iteration,
                repr(r.loss_a),
                repr(r.loss_b),
                "" if r.valid_p1_a is None else repr(r.valid_p1_a),
                "" if r.valid_p1_b is None else repr(r.valid_p1_b),
                0,
            ])


def read_history(path) -> RunHistory:
    history = RunHistory()
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        for row in reader:
            history.append(HistoryRecord(
                iteration=int(row["iter"]),
                loss_a=float(row["loss_A"]),
                loss_b=float(row["loss_B"]),
                valid_p1_a=float(row["valid_P@1_A"]) if row["valid_P@1_A"] else None,
                valid_p1_b=float(row["valid_P@1_B"]) if row["valid_P@1_B"] else None,
            ))
    return history


def pretrain(spec: matcher.MatcherSpec, corpus: Corpus,
             config: TrainConfig) -> matcher.ModelState:
    """Train a single model on the full (noisy) training set.

    Plain cross-entropy on the pointwise view, shuffled each epoch; returns
    the evaluated checkpoint with the best validation P@1 (the initial
    model counts as a candidate, ties keep the earlier checkpoint).
    """
    if config.strategy != "none":
        raise ValueError("pretrain requires strategy 'none'")
    if not corpus.train:
        raise ValueError("empty training set")
    model = matcher.init_params(spec, int(_stream(config.seed, "init").integers(2 ** 31)))
    if config.n_epochs == 0:
        return model
    opt = init_optimizer(config, model.params.size)
    best = model
    best_p1 = validation_p_at_1(model, corpus.valid)
    n_batches = len(corpus.train) // config.batch_size
    iteration = 0
    for epoch in range(config.n_epochs):
        rng = _stream(config.seed, "shuffle", epoch)
        perm = rng.permutation(len(corpus.train))
        for k in range(n_batches):
            batch = [corpus.train[i] for i in perm[k * config.batch_size:
                                                   (k + 1) * config.batch_size]]
            _, grad = matcher.loss_and_grad(model, _plain_ce_protocol(batch))
            model, opt = _apply_update(model, grad, opt, config)
            iteration += 1
            if iteration % config.eval_every == 0:
                p1 = validation_p_at_1(model, corpus.valid)
                if p1 > best_p1:
                    best, best_p1 = model, p1
    if iteration % config.eval_every != 0:
        p1 = validation_p_at_1(model, corpus.valid)
        if p1 > best_p1:
            best, best_p1 = model, p1
    return best


def coteach_step(model_a: matcher.ModelState, model_b: matcher.ModelState,
                 opt_a: OptimizerState, opt_b: OptimizerState,
                 batch, config: TrainConfig, rng: np.random.Generator,
                 update_order: tuple[str, str] = ("A", "B"),
                 split_hook=None):
    """One co-teaching iteration; returns (A, B, optA, optB, lossA, lossB).

    Protocols and gradients are computed from the entry snapshots of both
    models before either update is applied, so ``update_order`` cannot
    change the result; it exists to make that property testable.
    """
    sub_a, sub_b = split_batch(batch, rng)
    if split_hook is not None:
        split_hook(batch, sub_a, sub_b)
    protocol_a = build_protocol(config.strategy, model_b, sub_a, config)
    protocol_b = build_protocol(config.strategy, model_a, sub_b, config)
    loss_a, grad_a = matcher.loss_and_grad(model_a, protocol_a)
    loss_b, grad_b = matcher.loss_and_grad(model_b, protocol_b)
    for which in update_order:
        if which == "A":
            model_a, opt_a = _apply_update(model_a, grad_a, opt_a, config)
        elif which == "B":
            model_b, opt_b = _apply_update(model_b, grad_b, opt_b, config)
        else:
            raise ValueError(f"unknown model name {which!r}")
    return model_a, model_b, opt_a, opt_b, loss_a, loss_b


def coteach_train(init_a: matcher.ModelState, init_b: matcher.ModelState,
                  corpus: Corpus, config: TrainConfig,
                  checkpoint_dir=None, split_hook=None):
    """Run the full co-teaching loop; returns (A, B, RunHistory).

    Validation P@1 for both peers is recorded (and both models are
    checkpointed if ``checkpoint_dir`` is given) every ``eval_every``
    iterations. Fully deterministic in (seed, config, corpus).
    """
    if not corpus.train:
        raise ValueError("empty training set")
    model_a, model_b = init_a, init_b
    opt_a = init_optimizer(config, model_a.params.size)
    opt_b = init_optimizer(config, model_b.params.size)
    history = RunHistory()
    if checkpoint_dir is not None:
        checkpoint_dir = Path(checkpoint_dir)
        checkpoint_dir.mkdir(parents=True, exist_ok=True)
    n_batches = len(corpus.train) // config.batch_size
    iteration = 0
    for epoch in range(config.n_epochs):
        shuffle_rng = _stream(config.seed, "shuffle", epoch)
        split_rng = _stream(config.seed, "split", epoch)
        perm = shuffle_rng.permutation(len(corpus.train))
        for k in range(n_batches):
            batch = [corpus.train[i] for i in perm[k * config.batch_size:
                                                   (k + 1) * config.batch_size]]
            model_a, model_b, opt_a, opt_b, loss_a, loss_b = coteach_step(
                model_a, model_b, opt_a, opt_b, batch, config, split_rng,
                split_hook=split_hook)
            iteration += 1
            p1_a = p1_b = None
            if iteration % config.eval_every == 0:
                p1_a = validation_p_at_1(model_a, corpus.valid)
                p1_b = validation_p_at_1(model_b, corpus.valid)
                if checkpoint_dir is not None:
                    matcher.save_checkpoint(model_a, checkpoint_dir / f"A_{iteration}.ckpt")
                    matcher.save_checkpoint(model_b, checkpoint_dir / f"B_{iteration}.ckpt")
            history.append(HistoryRecord(iteration, loss_a, loss_b, p1_a, p1_b))
    return model_a, model_b, history


def select_model(model_a: matcher.ModelState, model_b: matcher.ModelState,
                 valid) -> matcher.ModelState:
    """Return the peer with higher validation P@1; ties go to A."""
    p_a = validation_p_at_1(model_a, valid)
    p_b = validation_p_at_1(model_b, valid)
    return model_a if p_a >= p_b else model_b
