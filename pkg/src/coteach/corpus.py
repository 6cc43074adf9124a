"""Dialogue corpus data model and synthetic noisy-corpus generation.

A corpus holds pairwise training/validation triples (context, positive
response, negative response) and judged test groups of ranked candidates.
The synthetic generator builds a topic-separable corpus with a controllable
false-negative rate: with probability ``false_negative_rate`` the sampled
negative comes from the same topic as the context, i.e. it would be a
perfectly good response that is nevertheless labeled negative.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class CorpusFormatError(ValueError):
    """Raised when a corpus file cannot be parsed; carries the line number."""

    def __init__(self, path, line_no: int, message: str):
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = str(path)
        self.line_no = line_no


@dataclass(frozen=True)
class TokenizedDialogue:
    """A conversation context paired with one response candidate.

    ``context`` is a tuple of utterances, each a tuple of token IDs; the
    most recent utterance is last.
    """

    context: tuple[tuple[int, ...], ...]
    response: tuple[int, ...]


@dataclass(frozen=True)
class PointwiseExample:
    """A labeled (y, context, response) training example with y in {0, 1}."""

    y: int
    dialogue: TokenizedDialogue

    def __post_init__(self):
        if self.y not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {self.y}")


@dataclass(frozen=True)
class PairwiseTriple:
    """A (context, positive response, negative response) training triple.

    ``noise_flag`` marks synthetic false negatives (negative drawn from the
    context's own topic). It exists for diagnostics only and is absent
    (None) for non-synthetic corpora; training code never reads it.
    """

    context: tuple[tuple[int, ...], ...]
    pos_response: tuple[int, ...]
    neg_response: tuple[int, ...]
    noise_flag: bool | None = None


@dataclass(frozen=True)
class TestGroup:
    """A judged test context with its candidate responses.

    ``candidates`` holds (response, human_label) pairs, label 1 meaning the
    response is appropriate for the context.
    """

    context: tuple[tuple[int, ...], ...]
    candidates: tuple[tuple[tuple[int, ...], int], ...]


@dataclass(frozen=True)
class Corpus:
    train: tuple[PairwiseTriple, ...]
    valid: tuple[PairwiseTriple, ...]
    test: tuple[TestGroup, ...]
    vocab_size: int
    n_candidates: int = 10
    seed: int | None = None
    noise_rate: float | None = None


@dataclass(frozen=True)
class GenConfig:
    """Settings for the synthetic corpus generator."""

    vocab_size: int = 1000
    n_topics: int = 10
    n_train: int = 5000
    n_valid: int = 500
    n_test_contexts: int = 200
    n_candidates: int = 10
    turns_per_context: int = 3
    tokens_per_utterance: int = 10
    false_negative_rate: float = 0.0
    seed: int = 0

    def __post_init__(self):
        for name in ("vocab_size", "n_topics", "n_train", "n_valid",
                     "n_test_contexts", "n_candidates", "turns_per_context",
                     "tokens_per_utterance"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 <= self.false_negative_rate <= 1.0:
            raise ValueError("false_negative_rate must lie in [0, 1]")
        if self.vocab_size // self.n_topics < 2:
            raise ValueError(
                "vocab_size too small to give each topic a disjoint token "
                "range of at least 2 tokens")


def _topic_range(config: GenConfig, topic: int) -> tuple[int, int]:
    # Topics own disjoint, equal-width token ranges so a bag-of-tokens model
    # can separate them; leftover tokens at the top of the vocab are unused.
    width = config.vocab_size // config.n_topics
    return topic * width, (topic + 1) * width


def _sample_utterance(rng, config: GenConfig, topic: int) -> tuple[int, ...]:
    lo, hi = _topic_range(config, topic)
    return tuple(int(t) for t in rng.integers(lo, hi, size=config.tokens_per_utterance))


def _sample_context(rng, config: GenConfig, topic: int):
    return tuple(_sample_utterance(rng, config, topic)
                 for _ in range(config.turns_per_context))


def _sample_triple(rng, config: GenConfig) -> PairwiseTriple:
    topic = int(rng.integers(config.n_topics))
    context = _sample_context(rng, config, topic)
    pos = _sample_utterance(rng, config, topic)
    is_noise = bool(rng.random() < config.false_negative_rate)
    if is_noise:
        neg_topic = topic
    else:
        neg_topic = int(rng.integers(config.n_topics - 1))
        if neg_topic >= topic:
            neg_topic += 1
    neg = _sample_utterance(rng, config, neg_topic)
    while neg == pos:
        neg = _sample_utterance(rng, config, neg_topic)
    return PairwiseTriple(context, pos, neg, noise_flag=is_noise)


# Probability that a test candidate is drawn from the context's own topic.
# Chosen so groups average ~2-3 positives out of 10 candidates.
_TEST_POSITIVE_PROB = 0.25


def _sample_test_group(rng, config: GenConfig) -> TestGroup:
    topic = int(rng.integers(config.n_topics))
    context = _sample_context(rng, config, topic)
    while True:
        candidates = []
        for _ in range(config.n_candidates):
            if config.n_topics == 1 or rng.random() < _TEST_POSITIVE_PROB:
                cand_topic = topic
            else:
                cand_topic = int(rng.integers(config.n_topics - 1))
                if cand_topic >= topic:
                    cand_topic += 1
            response = _sample_utterance(rng, config, cand_topic)
            candidates.append((response, int(cand_topic == topic)))
        labels = {label for _, label in candidates}
        if len(labels) == 2:  # regenerate degenerate groups
            return TestGroup(context, tuple(candidates))


def generate_synthetic_corpus(config: GenConfig) -> Corpus:
    """Generate a deterministic synthetic corpus from ``config``.

    Each context and its true response live in a single topic. Training and
    validation negatives come from the same topic with probability
    ``false_negative_rate`` (marked ``noise_flag=True``), otherwise from a
    different topic. Test groups carry clean labels (positive iff the
    candidate shares the context's topic) and always contain at least one
    positive and one negative.
    """
    rng = np.random.default_rng(config.seed)
    train = tuple(_sample_triple(rng, config) for _ in range(config.n_train))
    valid = tuple(_sample_triple(rng, config) for _ in range(config.n_valid))
    test = tuple(_sample_test_group(rng, config)
                 for _ in range(config.n_test_contexts))
    return Corpus(train=train, valid=valid, test=test,
                  vocab_size=config.vocab_size,
                  n_candidates=config.n_candidates,
                  seed=config.seed, noise_rate=config.false_negative_rate)


def to_pointwise(triples) -> list[PointwiseExample]:
    """Expand pairwise triples into the pointwise view.

    Each triple yields (1, c, r+) followed by (0, c, r-); order is
    preserved, so the output alternates labels 1, 0, 1, 0, ...
    """
    out = []
    for t in triples:
        out.append(PointwiseExample(1, TokenizedDialogue(t.context, t.pos_response)))
        out.append(PointwiseExample(0, TokenizedDialogue(t.context, t.neg_response)))
    return out


def truncate(dialogue: TokenizedDialogue, max_turns: int = 10,
             max_tokens: int = 50) -> TokenizedDialogue:
    """Truncate to the last ``max_turns`` utterances and the first
    ``max_tokens`` tokens of each utterance and of the response.

    Recent history is the informative part of a conversation, hence last
    turns but first tokens. Idempotent.
    """
    context = tuple(utt[:max_tokens] for utt in dialogue.context[-max_turns:])
    return TokenizedDialogue(context, dialogue.response[:max_tokens])


# ----------------------------------------------------------------------
# File IO
#
# Line-delimited UTF-8. Train/valid files hold two lines per triple:
#   POS<TAB>utt_1<TAB>...<TAB>utt_k<TAB>pos_response
#   NEG<TAB>utt_1<TAB>...<TAB>utt_k<TAB>neg_response
# Test files hold one line per candidate, n_candidates consecutive lines
# per context:
#   label<TAB>utt_1<TAB>...<TAB>utt_k<TAB>response
# Every file starts with the header line `#vocab=<V> candidates=<n>`.
# Tokens are space-separated decimal token IDs. Generation metadata and the
# diagnostic noise flags live in a sidecar meta.json, keeping the text
# format self-contained.
# ----------------------------------------------------------------------

_HEADER_PREFIX = "#vocab="


def _format_header(corpus: Corpus) -> str:
    return f"#vocab={corpus.vocab_size} candidates={corpus.n_candidates}"


def _format_utterances(context, response) -> str:
    fields = [" ".join(str(t) for t in utt) for utt in context]
    fields.append(" ".join(str(t) for t in response))
    return "\t".join(fields)


def save_corpus(corpus: Corpus, path) -> None:
    """Write ``corpus`` under directory ``path`` (created if needed)."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    header = _format_header(corpus)

    for name, triples in (("train.txt", corpus.train), ("valid.txt", corpus.valid)):
        lines = [header]
        for t in triples:
            lines.append("POS\t" + _format_utterances(t.context, t.pos_response))
            lines.append("NEG\t" + _format_utterances(t.context, t.neg_response))
        (path / name).write_text("\n".join(lines) + "\n", encoding="utf-8")

    lines = [header]
    for group in corpus.test:
        for response, label in group.candidates:
            lines.append(f"{label}\t" + _format_utterances(group.context, response))
    (path / "test.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")

    meta = {
        "seed": corpus.seed,
        "noise_rate": corpus.noise_rate,
        "train_noise_flags": _flag_list(corpus.train),
        "valid_noise_flags": _flag_list(corpus.valid),
    }
    (path / "meta.json").write_text(json.dumps(meta), encoding="utf-8")


def _flag_list(triples):
    flags = [t.noise_flag for t in triples]
    if any(f is None for f in flags):
        return None
    return [int(f) for f in flags]


def _parse_header(line: str, path, line_no: int) -> tuple[int, int]:
    if not line.startswith(_HEADER_PREFIX):
        raise CorpusFormatError(path, line_no, f"expected header line, got {line!r}")
    try:
        vocab_part, cand_part = line.split()
        vocab = int(vocab_part[len(_HEADER_PREFIX):])
        cands = int(cand_part.split("=", 1)[1])
    except (ValueError, IndexError) as exc:
        raise CorpusFormatError(path, line_no, f"malformed header: {line!r}") from exc
    return vocab, cands


def _parse_tokens(field: str, vocab_size: int, path, line_no: int) -> tuple[int, ...]:
    try:
        tokens = tuple(int(t) for t in field.split())
    except ValueError as exc:
        raise CorpusFormatError(path, line_no, f"non-integer token in {field!r}") from exc
    for t in tokens:
        if not 0 <= t < vocab_size:
            raise CorpusFormatError(
                path, line_no, f"token ID {t} outside vocab of size {vocab_size}")
    return tokens


def _parse_dialogue_fields(fields, vocab_size, path, line_no):
    if len(fields) < 2:
        raise CorpusFormatError(
            path, line_no, "need at least one utterance and a response")
    parsed = [_parse_tokens(f, vocab_size, path, line_no) for f in fields]
    return tuple(parsed[:-1]), parsed[-1]


def _read_lines(path):
    if not path.exists():
        return None, []
    text = path.read_text(encoding="utf-8")
    lines = text.splitlines()
    if not lines:
        return None, []
    header = _parse_header(lines[0], path, 1)
    return header, [(i + 2, line) for i, line in enumerate(lines[1:]) if line]


def _load_triples(path, noise_flags):
    header, lines = _read_lines(path)
    if header is None:
        return [], None
    vocab_size, _ = header
    if len(lines) % 2 != 0:
        raise CorpusFormatError(path, lines[-1][0], "dangling POS line without NEG")
    triples = []
    for (pos_no, pos_line), (neg_no, neg_line) in zip(lines[::2], lines[1::2]):
        pos_fields = pos_line.split("\t")
        neg_fields = neg_line.split("\t")
        if pos_fields[0] != "POS":
            raise CorpusFormatError(path, pos_no, f"expected POS line, got {pos_fields[0]!r}")
        if neg_fields[0] != "NEG":
            raise CorpusFormatError(path, neg_no, f"expected NEG line, got {neg_fields[0]!r}")
        context, pos = _parse_dialogue_fields(pos_fields[1:], vocab_size, path, pos_no)
        neg_context, neg = _parse_dialogue_fields(neg_fields[1:], vocab_size, path, neg_no)
        if neg_context != context:
            raise CorpusFormatError(path, neg_no, "NEG line context differs from its POS line")
        flag = None
        if noise_flags is not None:
            flag = bool(noise_flags[len(triples)])
        triples.append(PairwiseTriple(context, pos, neg, noise_flag=flag))
    return triples, header


def _load_test(path):
    header, lines = _read_lines(path)
    if header is None:
        return [], None
    vocab_size, n_candidates = header
    if len(lines) % n_candidates != 0:
        raise CorpusFormatError(
            path, lines[-1][0],
            f"test line count not a multiple of {n_candidates} candidates")
    groups = []
    for start in range(0, len(lines), n_candidates):
        block = lines[start:start + n_candidates]
        context = None
        candidates = []
        for line_no, line in block:
            fields = line.split("\t")
            if fields[0] not in ("0", "1"):
                raise CorpusFormatError(path, line_no, f"expected 0/1 label, got {fields[0]!r}")
            ctx, response = _parse_dialogue_fields(fields[1:], vocab_size, path, line_no)
            if context is None:
                context = ctx
            elif ctx != context:
                raise CorpusFormatError(path, line_no, "context changed inside a candidate block")
            candidates.append((response, int(fields[0])))
        groups.append(TestGroup(context, tuple(candidates)))
    return groups, header


def load_corpus(path) -> Corpus:
    """Load a corpus directory written by :func:`save_corpus`."""
    path = Path(path)
    meta = {}
    meta_path = path / "meta.json"
    if meta_path.exists():
        meta = json.loads(meta_path.read_text(encoding="utf-8"))

    train, h_train = _load_triples(path / "train.txt", meta.get("train_noise_flags"))
    valid, h_valid = _load_triples(path / "valid.txt", meta.get("valid_noise_flags"))
    test, h_test = _load_test(path / "test.txt")

    headers = [h for h in (h_train, h_valid, h_test) if h is not None]
    if not headers:
        raise CorpusFormatError(path, 0, "no corpus files with headers found")
    if len(set(headers)) != 1:
        raise CorpusFormatError(path, 1, f"inconsistent headers across files: {headers}")
    vocab_size, n_candidates = headers[0]

    return Corpus(train=tuple(train), valid=tuple(valid), test=tuple(test),
                  vocab_size=vocab_size, n_candidates=n_candidates,
                  seed=meta.get("seed"), noise_rate=meta.get("noise_rate"))
