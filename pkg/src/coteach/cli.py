"""Command-line front end for the co-teaching pipeline.

Subcommands: generate | pretrain | coteach | evaluate | sweep | report.
Configuration is a plain-text file of ``key = value`` lines with ``#``
comments. All outputs are CSV or checkpoint files; given the same config
and seed every command writes byte-identical data files.

Exit codes: 0 success, 1 usage/config error, 2 data error (missing or
malformed artifacts).
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

from . import engine, evaluation, matcher
from .corpus import (CorpusFormatError, GenConfig, generate_synthetic_corpus,
                     load_corpus, save_corpus)


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


# Per-strategy learning-rate defaults (margin trains with a 10x larger
# rate than the two cross-entropy strategies).
STRATEGY_LEARNING_RATES = {
    "margin": 1e-3,
    "weighting": 1e-4,
    "curriculum": 1e-4,
    "none": 1e-4,
}

METRICS_COLUMNS = ["run", "strategy", "MAP", "MRR", "P@1",
                   "R10@1", "R10@2", "R10@5", "n_contexts"]

# Order in which per-group metrics appear in dump files and reports.
METRIC_KEYS = ["AP", "RR", "P@1", "R@1", "R@2", "R@5"]


def parse_config(path) -> dict[str, str]:
    path = Path(path)
    if not path.exists():
        raise UsageError(f"config file not found: {path}")
    config: dict[str, str] = {}
    for line_no, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{line_no}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        config[key.strip()] = value.strip()
    return config


def _get(config, key, cast, default=None):
    if key not in config:
        if default is None:
            raise UsageError(f"missing config key {key!r}")
        return default
    try:
        return cast(config[key])
    except ValueError as exc:
        raise UsageError(f"config key {key!r}: {exc}") from exc


def _gen_config(config, seed_override=None) -> GenConfig:
    try:
        return GenConfig(
            vocab_size=_get(config, "vocab_size", int, 1000),
            n_topics=_get(config, "n_topics", int, 10),
            n_train=_get(config, "n_train", int, 5000),
            n_valid=_get(config, "n_valid", int, 500),
            n_test_contexts=_get(config, "n_test_contexts", int, 200),
            n_candidates=_get(config, "n_candidates", int, 10),
            turns_per_context=_get(config, "turns_per_context", int, 3),
            tokens_per_utterance=_get(config, "tokens_per_utterance", int, 10),
            false_negative_rate=_get(config, "false_negative_rate", float, 0.0),
            seed=seed_override if seed_override is not None
                 else _get(config, "seed", int, 0),
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _matcher_spec(config, vocab_size, prefix="") -> matcher.MatcherSpec:
    try:
        return matcher.MatcherSpec(
            kind=_get(config, prefix + "matcher_kind", str,
                      matcher.MEAN_EMBEDDING_BILINEAR),
            vocab_size=vocab_size,
            embedding_dim=_get(config, prefix + "embedding_dim", int, 32),
            hidden_dim=_get(config, prefix + "hidden_dim", int, 32),
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _corpus_dir(config, args) -> Path:
    return Path(_get(config, "corpus_dir", str, "corpus"))


def _run_dir(config, args) -> Path:
    if args.run_dir is not None:
        path = Path(args.run_dir)
    else:
        path = Path(_get(config, "run_dir", str, "run"))
    path.mkdir(parents=True, exist_ok=True)
    return path


def _load_corpus(path):
    if not Path(path).exists():
        raise DataError(f"corpus directory not found: {path} (run 'coteach generate')")
    try:
        return load_corpus(path)
    except CorpusFormatError as exc:
        raise DataError(str(exc)) from exc


def _train_config(config, args, strategy: str) -> engine.TrainConfig:
    seed = args.seed if args.seed is not None else _get(config, "seed", int, 0)
    lr_default = STRATEGY_LEARNING_RATES[strategy]
    try:
        return engine.TrainConfig(
            strategy=strategy,
            lam=_get(config, "lambda", float, -1.0) if strategy == "margin" else None,
            delta=_get(config, "delta", float, -1.0) if strategy == "curriculum" else None,
            learning_rate=_get(config, "learning_rate", float, lr_default),
            batch_size=_get(config, "batch_size", int, 50),
            n_epochs=_get(config, "n_epochs", int, 3),
            optimizer=_get(config, "optimizer", str, "adam"),
            seed=seed,
            eval_every=_get(config, "eval_every", int, 50),
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def cmd_generate(config, args) -> int:
    gen = _gen_config(config, args.seed)
    corpus = generate_synthetic_corpus(gen)
    out = _corpus_dir(config, args)
    try:
        save_corpus(corpus, out)
    except OSError as exc:
        raise DataError(f"cannot write corpus to {out}: {exc}") from exc
    noisy = sum(1 for t in corpus.train if t.noise_flag)
    print(f"wrote corpus to {out}")
    print(f"train={len(corpus.train)} valid={len(corpus.valid)} "
          f"test_contexts={len(corpus.test)} vocab={corpus.vocab_size}")
    print(f"configured_noise_rate={gen.false_negative_rate} "
          f"realized_noise_fraction={noisy / len(corpus.train):.4f}")
    return 0


def cmd_pretrain(config, args) -> int:
    corpus = _load_corpus(_corpus_dir(config, args))
    spec = _matcher_spec(config, corpus.vocab_size)
    seed = args.seed if args.seed is not None else _get(config, "seed", int, 0)
    try:
        train_config = engine.TrainConfig(
            strategy="none",
            learning_rate=_get(config, "pretrain_lr", float, 1e-3),
            batch_size=_get(config, "batch_size", int, 50),
            n_epochs=_get(config, "pretrain_epochs", int, 3),
            optimizer=_get(config, "optimizer", str, "adam"),
            seed=seed,
            eval_every=_get(config, "eval_every", int, 50),
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    model = engine.pretrain(spec, corpus, train_config)
    run_dir = _run_dir(config, args)
    matcher.save_checkpoint(model, run_dir / "pretrained.ckpt")
    p1 = engine.validation_p_at_1(model, corpus.valid)
    print(f"wrote {run_dir / 'pretrained.ckpt'} (validation P@1 = {p1:.4f})")
    return 0


def _init_peers(config, args, run_dir, corpus):
    """Clone the pre-trained checkpoint, or load two distinct checkpoints
    when the two-network mode keys are present."""
    ckpt_a = config.get("checkpoint_a")
    ckpt_b = config.get("checkpoint_b")
    if (ckpt_a is None) != (ckpt_b is None):
        raise UsageError("two-network mode needs both checkpoint_a and checkpoint_b")
    if ckpt_a is not None:
        for p in (ckpt_a, ckpt_b):
            if not Path(p).exists():
                raise DataError(f"checkpoint not found: {p}")
        model_a = matcher.load_checkpoint(ckpt_a)
        model_b = matcher.load_checkpoint(ckpt_b)
    else:
        path = run_dir / "pretrained.ckpt"
        if not path.exists():
            raise DataError(f"pretrained checkpoint not found: {path} "
                            "(run 'coteach pretrain')")
        model_a = matcher.load_checkpoint(path)
        model_b = matcher.load_checkpoint(path)
    for m in (model_a, model_b):
        if m.spec.vocab_size != corpus.vocab_size:
            raise DataError(
                f"checkpoint vocab {m.spec.vocab_size} does not match corpus "
                f"vocab {corpus.vocab_size}")
    return model_a, model_b


def _strategy(config, args) -> str:
    strategy = args.strategy or config.get("strategy")
    if strategy is None:
        raise UsageError("no strategy given (--strategy or config key 'strategy')")
    if strategy not in engine.STRATEGIES:
        raise UsageError(f"unknown strategy {strategy!r}")
    return strategy


def cmd_coteach(config, args) -> int:
    corpus = _load_corpus(_corpus_dir(config, args))
    run_dir = _run_dir(config, args)
    strategy = _strategy(config, args)
    train_config = _train_config(config, args, strategy)
    model_a, model_b = _init_peers(config, args, run_dir, corpus)
    model_a, model_b, history = engine.coteach_train(
        model_a, model_b, corpus, train_config, checkpoint_dir=run_dir)
    matcher.save_checkpoint(model_a, run_dir / "A_final.ckpt")
    matcher.save_checkpoint(model_b, run_dir / "B_final.ckpt")
    engine.write_history(history, run_dir / "history.csv")
    print(f"co-teaching done: {len(history.records)} iterations, "
          f"strategy={strategy}, outputs in {run_dir}")
    return 0


def _metrics_row(run_name, strategy, report, stars=None):
    stars = stars or {}
    cells = [run_name, strategy]
    for key, value in zip(METRIC_KEYS,
                          [report.map, report.mrr, report.p_at_1,
                           report.r10_at_1, report.r10_at_2, report.r10_at_5]):
        cells.append(f"{value:.6f}" + ("*" if stars.get(key) else ""))
    cells.append(str(report.n_contexts))
    return cells


def _write_per_group_dump(per_group, path):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["group_id"] + METRIC_KEYS)
        n = len(per_group[METRIC_KEYS[0]])
        for i in range(n):
            writer.writerow([i] + [repr(float(per_group[k][i])) for k in METRIC_KEYS])


def _read_per_group_dump(path):
    path = Path(path)
    if not path.exists():
        raise DataError(f"baseline per-group dump not found: {path}")
    columns = {k: [] for k in METRIC_KEYS}
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        for row in reader:
            for k in METRIC_KEYS:
                if k not in row or row[k] is None:
                    raise DataError(f"{path}: missing column {k!r}")
                columns[k].append(float(row[k]))
    return columns


def cmd_evaluate(config, args) -> int:
    corpus = _load_corpus(_corpus_dir(config, args))
    run_dir = _run_dir(config, args)
    path_a, path_b = run_dir / "A_final.ckpt", run_dir / "B_final.ckpt"
    for p in (path_a, path_b):
        if not p.exists():
            raise DataError(f"checkpoint not found: {p} (run 'coteach coteach')")
    model = engine.select_model(matcher.load_checkpoint(path_a),
                                matcher.load_checkpoint(path_b), corpus.valid)
    groups, n_removed = evaluation.filter_degenerate(corpus.test)
    if not groups:
        raise DataError("all test groups are degenerate")
    ranked = evaluation.rank_test_groups(model, groups)
    per_group = evaluation.per_group_metrics(ranked)
    report = evaluation.compute_metrics(ranked)

    stars = {}
    if args.baseline_dump:
        baseline = _read_per_group_dump(args.baseline_dump)
        for key in METRIC_KEYS:
            if len(baseline[key]) != len(per_group[key]):
                raise DataError("baseline dump group count does not match test set")
            _, p_value = evaluation.paired_t_test(per_group[key], baseline[key])
            stars[key] = p_value < 0.05
            print(f"t-test {key}: p={p_value:.6g}"
                  + (" *" if stars[key] else ""))

    if args.per_group_dump:
        _write_per_group_dump(per_group, args.per_group_dump)

    strategy = args.strategy or config.get("strategy", "none")
    row = _metrics_row(run_dir.name, strategy, report, stars)
    print(",".join(METRICS_COLUMNS))
    print(",".join(row))
    with open(run_dir / "metrics.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(METRICS_COLUMNS)
        writer.writerow(row)
    if n_removed:
        print(f"removed {n_removed} degenerate test contexts")
    return 0


def cmd_sweep(config, args) -> int:
    corpus = _load_corpus(_corpus_dir(config, args))
    run_dir = _run_dir(config, args)
    param = _get(config, "sweep_param", str, "")
    if param not in ("lambda", "delta"):
        raise UsageError("config key 'sweep_param' must be 'lambda' or 'delta'")
    raw_values = _get(config, "sweep_values", str, "")
    if not raw_values:
        raise UsageError("missing config key 'sweep_values'")
    try:
        values = [float(v) for v in raw_values.split(",")]
    except ValueError as exc:
        raise UsageError(f"sweep_values: {exc}") from exc

    strategy = args.strategy or config.get(
        "strategy", "margin" if param == "lambda" else "curriculum")
    rows = []
    for value in values:
        point_config = dict(config)
        point_config[param] = str(value)
        point_config["strategy"] = strategy
        train_config = _train_config(point_config, args, strategy)
        model_a, model_b = _init_peers(config, args, run_dir, corpus)
        model_a, model_b, _ = engine.coteach_train(model_a, model_b, corpus, train_config)
        model = engine.select_model(model_a, model_b, corpus.valid)
        groups, _ = evaluation.filter_degenerate(corpus.test)
        report = evaluation.compute_metrics(evaluation.rank_test_groups(model, groups))
        rows.append([param, repr(value)] + _metrics_row(run_dir.name, strategy, report))
        print(f"{param}={value}: P@1={report.p_at_1:.4f}")
    with open(run_dir / "sweep.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["param", "value"] + METRICS_COLUMNS)
        writer.writerows(rows)
    print(f"wrote {run_dir / 'sweep.csv'} ({len(rows)} rows)")
    return 0


def cmd_report(config, args) -> int:
    run_dir = _run_dir(config, args)
    history_path = run_dir / "history.csv"
    if not history_path.exists():
        raise DataError(f"history not found: {history_path} (run 'coteach coteach')")
    history = engine.read_history(history_path)
    alpha = _get(config, "ema_alpha", float, 0.3)
    try:
        loss_a = evaluation.ema([r.loss_a for r in history.records], alpha)
        loss_b = evaluation.ema([r.loss_b for r in history.records], alpha)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    eval_records = [r for r in history.records if r.valid_p1_a is not None]
    p1_a = evaluation.ema([r.valid_p1_a for r in eval_records], alpha)
    p1_b = evaluation.ema([r.valid_p1_b for r in eval_records], alpha)
    p1_by_iter = {r.iteration: (a, b) for r, a, b in zip(eval_records, p1_a, p1_b)}
    out = run_dir / "curves.csv"
    with open(out, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["iter", "loss_A_ema", "loss_B_ema",
                         "valid_P@1_A_ema", "valid_P@1_B_ema"])
        for r, la, lb in zip(history.records, loss_a, loss_b):
            pa, pb = p1_by_iter.get(r.iteration, ("", ""))
            writer.writerow([r.iteration, repr(la), repr(lb),
                             repr(pa) if pa != "" else "",
                             repr(pb) if pb != "" else ""])
    print(f"wrote {out} ({len(history.records)} rows, ema_alpha={alpha})")
    return 0


COMMANDS = {
    "generate": cmd_generate,
    "pretrain": cmd_pretrain,
    "coteach": cmd_coteach,
    "evaluate": cmd_evaluate,
    "sweep": cmd_sweep,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="coteach",
        description="Co-teaching pipeline for noisy response-selection training")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="path to key = value config file")
    parser.add_argument("--run-dir", default=None, help="override run directory")
    parser.add_argument("--strategy", default=None,
                        choices=list(engine.STRATEGIES), help="teaching strategy")
    parser.add_argument("--seed", type=int, default=None, help="override config seed")
    parser.add_argument("--baseline-dump", default=None,
                        help="per-group metrics CSV of a baseline run for t-tests")
    parser.add_argument("--per-group-dump", default=None,
                        help="write per-group metrics CSV to this path")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code not in (0, None) else 0
    try:
        config = parse_config(args.config)
        return COMMANDS[args.command](config, args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (DataError, CorpusFormatError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
