"""What each teaching strategy actually hands its peer.

A 'teacher' model turns a raw sub-batch into a learning protocol: dynamic
margins for pairwise hinge training, per-example weights for weighted
cross-entropy, or a small-loss subset for curriculum training. This script
trains a quick teacher on noisy data and dissects the three protocols it
produces for one sub-batch — including how each one treats the examples the
generator secretly flagged as false negatives.

Run:  python demos/02_strategy_anatomy.py
"""

from coteach import (GenConfig, MatcherSpec, TrainConfig, cross_entropy,
                     curriculum_protocol, generate_synthetic_corpus,
                     margin_protocol, pretrain, score, to_pointwise,
                     weighting_protocol)
from coteach.corpus import TokenizedDialogue

config = GenConfig(vocab_size=200, n_topics=5, n_train=2000, n_valid=200,
                   n_test_contexts=20, turns_per_context=2,
                   tokens_per_utterance=6, false_negative_rate=0.3, seed=1)
corpus = generate_synthetic_corpus(config)

spec = MatcherSpec("mean-embedding-bilinear", vocab_size=200, embedding_dim=12)
teacher = pretrain(spec, corpus, TrainConfig(
    strategy="none", learning_rate=1e-3, batch_size=10, n_epochs=3,
    seed=1, eval_every=1000))

sub_batch = list(corpus.train[:8])
flags = [t.noise_flag for t in sub_batch]
print(f"sub-batch noise flags (generator truth): {flags}\n")

print("== margin strategy: pairwise hinge with teacher-set margins ==")
protocol = margin_protocol(teacher, sub_batch, lam=0.5)
for (triple, margin), flag in zip(protocol.pairwise, flags):
    s_pos = score(teacher, TokenizedDialogue(triple.context, triple.pos_response))
    s_neg = score(teacher, TokenizedDialogue(triple.context, triple.neg_response))
    note = "suspected false negative -> margin collapses" if margin == 0 else ""
    print(f"  s+={s_pos:.3f} s-={s_neg:.3f} margin={margin:.3f} "
          f"noisy={flag!s:5} {note}")

examples = to_pointwise(sub_batch)
print("\n== weighting strategy: soft down-weighting of dubious negatives ==")
protocol = weighting_protocol(teacher, examples)
for example, weight in protocol.pointwise:
    if example.y == 0:
        s = score(teacher, example.dialogue)
        print(f"  y=0 teacher score={s:.3f} -> weight={weight:.3f}")
print("  (every y=1 example keeps weight 1.0)")

print("\n== curriculum strategy: keep the smallest-loss fraction ==")
for delta in (0.25, 0.5, 0.9):
    protocol = curriculum_protocol(teacher, examples, delta=delta)
    kept = {id(e) for e, _ in protocol.pointwise}
    losses = [cross_entropy(e.y, score(teacher, e.dialogue)) for e in examples]
    kept_losses = [l for e, l in zip(examples, losses) if id(e) in kept]
    print(f"  delta={delta}: kept {len(protocol.pointwise)}/{len(examples)} "
          f"examples, max kept loss {max(kept_losses):.3f} "
          f"(batch max {max(losses):.3f})")
