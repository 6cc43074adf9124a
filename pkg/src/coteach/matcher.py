"""Context-response matching models with analytic gradients.

Two small reference architectures share one interface:

* ``mean-embedding-bilinear`` -- mean-pool token embeddings over the
  context and over the response, then score s = sigmoid(u^T W v + b).
* ``interaction-mlp`` -- the same pooled vectors u, v feed a one-hidden-
  layer tanh MLP over the feature [u, v, u*v].

Parameters live in a single flat float64 vector with a fixed layout
(embedding table first, then the head), which keeps optimizer state,
checkpoints and finite-difference checking trivial. All gradients are
hand-derived; a central finite-difference checker is provided as the
correctness oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import losses
from .corpus import TokenizedDialogue
from .losses import LearningProtocol

MEAN_EMBEDDING_BILINEAR = "mean-embedding-bilinear"
INTERACTION_MLP = "interaction-mlp"
MATCHER_KINDS = (MEAN_EMBEDDING_BILINEAR, INTERACTION_MLP)

# Sigmoid input clamp; keeps exp() finite and makes score deterministic for
# any finite parameters.
_Z_CLAMP = 30.0


@dataclass(frozen=True)
class MatcherSpec:
    kind: str
    vocab_size: int
    embedding_dim: int = 32
    hidden_dim: int = 32

    def __post_init__(self):
        if self.kind not in MATCHER_KINDS:
            raise ValueError(f"unknown matcher kind {self.kind!r}")
        if self.vocab_size <= 0 or self.embedding_dim <= 0 or self.hidden_dim <= 0:
            raise ValueError("spec dimensions must be positive")


def param_layout(spec: MatcherSpec) -> dict[str, slice]:
    """Slices of the flat parameter vector, in storage order.

    bilinear:        E (V*d), W (d*d), b (1)
    interaction-mlp: E (V*d), W1 (h*3d), b1 (h), w2 (h), b2 (1)
    """
    v, d, h = spec.vocab_size, spec.embedding_dim, spec.hidden_dim
    layout = {"E": slice(0, v * d)}
    off = v * d
    if spec.kind == MEAN_EMBEDDING_BILINEAR:
        layout["W"] = slice(off, off + d * d)
        off += d * d
        layout["b"] = slice(off, off + 1)
        off += 1
    else:
        layout["W1"] = slice(off, off + h * 3 * d)
        off += h * 3 * d
        layout["b1"] = slice(off, off + h)
        off += h
        layout["w2"] = slice(off, off + h)
        off += h
        layout["b2"] = slice(off, off + 1)
        off += 1
    layout["_total"] = slice(0, off)
    return layout


def n_params(spec: MatcherSpec) -> int:
    return param_layout(spec)["_total"].stop


@dataclass(frozen=True)
class ModelState:
    """A matcher spec plus its flat float64 parameter vector.

    Treated as immutable: optimizer steps build a new ModelState rather
    than writing into ``params``.
    """

    spec: MatcherSpec
    params: np.ndarray

    def __post_init__(self):
        expected = n_params(self.spec)
        if self.params.shape != (expected,):
            raise ValueError(
                f"params length {self.params.shape} does not match layout ({expected},)")
        if not np.all(np.isfinite(self.params)):
            raise ValueError("params contain non-finite entries")


def init_params(spec: MatcherSpec, seed: int) -> ModelState:
    """Initialize weights ~ uniform(-0.1, 0.1) and biases to 0."""
    rng = np.random.default_rng(seed)
    layout = param_layout(spec)
    params = np.zeros(n_params(spec))
    for name, sl in layout.items():
        if name.startswith("b") or name == "_total":
            continue
        params[sl] = rng.uniform(-0.1, 0.1, size=sl.stop - sl.start)
    return ModelState(spec, params)


def _sigmoid(z: float) -> tuple[float, float]:
    """Clamped logistic; returns (s, ds/dz)."""
    zc = min(max(z, -_Z_CLAMP), _Z_CLAMP)
    s = 1.0 / (1.0 + math.exp(-zc))
    dsdz = s * (1.0 - s) if -_Z_CLAMP < z < _Z_CLAMP else 0.0
    return s, dsdz


def _pool(dialogue: TokenizedDialogue, E: np.ndarray):
    """Mean-pooled context/response vectors plus what backward needs."""
    vocab = E.shape[0]
    utt_arrays = []
    u = np.zeros(E.shape[1])
    for utt in dialogue.context:
        ids = np.asarray(utt, dtype=np.intp)
        if ids.size == 0:
            raise ValueError("empty utterance")
        if ids.min() < 0 or ids.max() >= vocab:
            raise ValueError("token ID out of range for vocab")
        utt_arrays.append(ids)
        u += E[ids].mean(axis=0)
    if not utt_arrays:
        raise ValueError("dialogue has no context utterances")
    u /= len(utt_arrays)
    resp = np.asarray(dialogue.response, dtype=np.intp)
    if resp.size == 0:
        raise ValueError("empty response")
    if resp.min() < 0 or resp.max() >= vocab:
        raise ValueError("token ID out of range for vocab")
    v = E[resp].mean(axis=0)
    return u, v, utt_arrays, resp


class _Forward:
    """One forward pass with enough cached state to backpropagate dz."""

    __slots__ = ("model", "s", "dsdz", "u", "v", "utts", "resp", "cache")

    def __init__(self, model: ModelState, dialogue: TokenizedDialogue):
        spec = model.spec
        d = spec.embedding_dim
        layout = param_layout(spec)
        E = model.params[layout["E"]].reshape(spec.vocab_size, d)
        u, v, utts, resp = _pool(dialogue, E)
        if spec.kind == MEAN_EMBEDDING_BILINEAR:
            W = model.params[layout["W"]].reshape(d, d)
            b = model.params[layout["b"]][0]
            Wv = W @ v
            z = float(u @ Wv + b)
            self.cache = (W, Wv)
        else:
            h = spec.hidden_dim
            W1 = model.params[layout["W1"]].reshape(h, 3 * d)
            b1 = model.params[layout["b1"]]
            w2 = model.params[layout["w2"]]
            b2 = model.params[layout["b2"]][0]
            f = np.concatenate([u, v, u * v])
            a = np.tanh(W1 @ f + b1)
            z = float(w2 @ a + b2)
            self.cache = (W1, w2, f, a)
        self.model = model
        self.u, self.v, self.utts, self.resp = u, v, utts, resp
        self.s, self.dsdz = _sigmoid(z)

    def accumulate_grad(self, coeff: float, grad: np.ndarray) -> None:
        """Add coeff * dz/dtheta into ``grad`` (flat, same layout)."""
        if coeff == 0.0:
            return
        spec = self.model.spec
        d = spec.embedding_dim
        layout = param_layout(spec)
        u, v = self.u, self.v
        if spec.kind == MEAN_EMBEDDING_BILINEAR:
            W, Wv = self.cache
            du = coeff * Wv
            dv = coeff * (W.T @ u)
            grad[layout["W"]] += coeff * np.outer(u, v).ravel()
            grad[layout["b"]] += coeff
        else:
            W1, w2, f, a = self.cache
            dpre = coeff * w2 * (1.0 - a * a)
            grad[layout["W1"]] += np.outer(dpre, f).ravel()
            grad[layout["b1"]] += dpre
            grad[layout["w2"]] += coeff * a
            grad[layout["b2"]] += coeff
            df = W1.T @ dpre
            du = df[:d] + df[2 * d:] * v
            dv = df[d:2 * d] + df[2 * d:] * u
        E_grad = grad[layout["E"]].reshape(spec.vocab_size, d)
        n_utts = len(self.utts)
        for ids in self.utts:
            np.add.at(E_grad, ids, du / (n_utts * ids.size))
        np.add.at(E_grad, self.resp, dv / self.resp.size)


def score(model: ModelState, dialogue: TokenizedDialogue) -> float:
    """Matching score s(c, r) in (0, 1)."""
    return _Forward(model, dialogue).s


def _check_protocol(model: ModelState, protocol: LearningProtocol) -> None:
    if not protocol.pairwise and not protocol.pointwise:
        raise ValueError("empty protocol")


def loss_and_grad(model: ModelState, protocol: LearningProtocol):
    """Total protocol loss and its analytic gradient w.r.t. the flat params.

    Teacher-provided margins and weights are constants; no gradient flows
    through them.
    """
    _check_protocol(model, protocol)
    grad = np.zeros_like(model.params)
    total = 0.0
    if protocol.loss_kind == losses.HINGE_WITH_MARGIN:
        for triple, margin in protocol.pairwise:
            fwd_pos = _Forward(model, TokenizedDialogue(triple.context, triple.pos_response))
            fwd_neg = _Forward(model, TokenizedDialogue(triple.context, triple.neg_response))
            hinge = margin - fwd_pos.s + fwd_neg.s
            if hinge > 0.0:
                total += hinge
                fwd_pos.accumulate_grad(-fwd_pos.dsdz, grad)
                fwd_neg.accumulate_grad(fwd_neg.dsdz, grad)
    else:
        for example, weight in protocol.pointwise:
            if protocol.loss_kind == losses.CROSS_ENTROPY:
                weight = 1.0
            fwd = _Forward(model, example.dialogue)
            total += weight * losses.cross_entropy(example.y, fwd.s)
            # Inside the clamp, d(ce)/dz = s - y; at or beyond the clamp the
            # loss is locally constant in the parameters.
            if losses.CE_EPS < fwd.s < 1.0 - losses.CE_EPS:
                fwd.accumulate_grad(weight * (fwd.s - example.y), grad)
    return total, grad


def _score_value(spec: MatcherSpec, params: np.ndarray,
                 dialogue: TokenizedDialogue):
    """Dtype-generic forward pass (no gradient state).

    Works in whatever float dtype ``params`` carries; the fd checker runs
    it in extended precision so roundoff in the central differences stays
    far below the checked tolerance.
    """
    d = spec.embedding_dim
    layout = param_layout(spec)
    E = params[layout["E"]].reshape(spec.vocab_size, d)
    u, v, _, _ = _pool(dialogue, E)
    if spec.kind == MEAN_EMBEDDING_BILINEAR:
        W = params[layout["W"]].reshape(d, d)
        z = u @ (W @ v) + params[layout["b"]][0]
    else:
        h = spec.hidden_dim
        W1 = params[layout["W1"]].reshape(h, 3 * d)
        f = np.concatenate([u, v, u * v])
        a = np.tanh(W1 @ f + params[layout["b1"]])
        z = params[layout["w2"]] @ a + params[layout["b2"]][0]
    z = np.clip(z, -_Z_CLAMP, _Z_CLAMP)
    return 1.0 / (1.0 + np.exp(-z))


def _loss_value(spec: MatcherSpec, params: np.ndarray,
                protocol: LearningProtocol):
    """Dtype-generic total protocol loss."""
    one = params.dtype.type(1.0)
    eps = params.dtype.type(losses.CE_EPS)
    total = params.dtype.type(0.0)
    if protocol.loss_kind == losses.HINGE_WITH_MARGIN:
        for triple, margin in protocol.pairwise:
            s_pos = _score_value(spec, params, TokenizedDialogue(triple.context, triple.pos_response))
            s_neg = _score_value(spec, params, TokenizedDialogue(triple.context, triple.neg_response))
            total += max(params.dtype.type(0.0), margin - s_pos + s_neg)
    else:
        for example, weight in protocol.pointwise:
            if protocol.loss_kind == losses.CROSS_ENTROPY:
                weight = 1.0
            s = np.clip(_score_value(spec, params, example.dialogue), eps, one - eps)
            ce = -np.log(s) if example.y == 1 else -np.log(one - s)
            total += weight * ce
    return total


def protocol_loss(model: ModelState, protocol: LearningProtocol) -> float:
    """Total protocol loss without the gradient (used by the fd checker)."""
    _check_protocol(model, protocol)
    return float(_loss_value(model.spec, model.params, protocol))


def finite_diff_check(model: ModelState, protocol: LearningProtocol,
                      step: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    Per coordinate the relative error is |g - fd| / max(|g|, |fd|, 1e-8).
    The difference quotient is evaluated in extended precision so its
    roundoff cannot mask genuine gradient bugs at small step sizes.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    _check_protocol(model, protocol)
    _, grad = loss_and_grad(model, protocol)
    worst = 0.0
    params = model.params.astype(np.longdouble)
    step_ld = np.longdouble(step)
    for i in range(params.size):
        saved = params[i]
        params[i] = saved + step_ld
        f_plus = _loss_value(model.spec, params, protocol)
        params[i] = saved - step_ld
        f_minus = _loss_value(model.spec, params, protocol)
        params[i] = saved
        fd = float((f_plus - f_minus) / (2.0 * step_ld))
        err = abs(grad[i] - fd) / max(abs(grad[i]), abs(fd), 1e-8)
        worst = max(worst, err)
    return worst


def save_checkpoint(model: ModelState, path) -> None:
    """Write header line + little-endian float64 parameter vector."""
    spec = model.spec
    header = (f"{spec.kind} {spec.vocab_size} {spec.embedding_dim} "
              f"{spec.hidden_dim} {model.params.size}\n")
    with open(path, "wb") as f:
        f.write(header.encode("utf-8"))
        f.write(model.params.astype("<f8").tobytes())


def load_checkpoint(path) -> ModelState:
    with open(path, "rb") as f:
        header = f.readline().decode("utf-8").split()
        if len(header) != 5:
            raise ValueError(f"malformed checkpoint header in {path}")
        kind, vocab, d, h, count = header[0], *map(int, header[1:])
        spec = MatcherSpec(kind=kind, vocab_size=vocab, embedding_dim=d, hidden_dim=h)
        if count != n_params(spec):
            raise ValueError(f"checkpoint param count {count} does not match spec layout")
        params = np.frombuffer(f.read(count * 8), dtype="<f8").astype(np.float64)
    if params.size != count:
        raise ValueError(f"truncated checkpoint {path}")
    return ModelState(spec, params)
