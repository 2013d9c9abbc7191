"""
Training linear adapters with a contrastive loss
================================================

The embedder stays frozen. What trains is a small linear map per level
(query vectors through one, corpus view vectors through another), pushed
by an InfoNCE loss whose negatives are the other positives in the batch
plus a few random corpus chunks.

The fixture below is engineered so the identity adapter struggles: every
query spends most of its mass on one shared token, and only a trailing
signature identifies the right passage. Training learns to mute the
shared direction.
"""

import numpy as np

from heterag import (
    HashEmbedder,
    TrainConfig,
    TrainingExample,
    embed_query,
    embed_retrieval_views,
    train_adapter,
)

examples = [
    TrainingExample(
        query=f"shared shared shared shared shared sig{i}",
        positive_chunk_id=f"p{i}:00000",
    )
    for i in range(16)
]
corpus = [(f"p{i}:00000", f"shared sig{i} sig{i} sig{i} sig{i} sig{i}") for i in range(16)]
corpus += [(f"n{j}:00000", f"noise{j} filler junk") for j in range(16)]

emb = HashEmbedder(64)
cfg = TrainConfig(
    batch_size=16,
    random_negatives=8,
    temperature=0.05,
    learning_rate=1e-2,
    steps=200,
    seed=0,
)
params, trace = train_adapter(examples, corpus, emb, cfg)

print(f"loss: {trace[0]:.4f} -> {trace[-1]:.4f} over {len(trace)} steps")
for step in (0, 10, 50, 100, 199):
    print(f"  step {step:>3}  loss {trace[step]:.4f}")

# Same seed, same trajectory, bit for bit.
params2, trace2 = train_adapter(examples, corpus, emb, cfg)
assert trace == trace2
print("\nrerun with the same seed reproduces the trace exactly")

# Measure what training bought us: the score margin between each query's
# true passage and its best distractor. The frozen embedder already ranks
# the positives first here, but barely; the adapter widens the gap, which
# is exactly what a low InfoNCE loss means.
def mean_margin(adapters):
    ids = [cid for cid, _ in corpus]
    vecs = emb.embed([text for _, text in corpus], level="view")
    if adapters is not None:
        vecs = adapters.apply("view", vecs)
    margins = []
    for i, ex in enumerate(examples):
        q = embed_query(ex.query, emb, adapters)
        scores = vecs @ q
        pos = ids.index(ex.positive_chunk_id)
        rest = np.delete(scores, pos)
        margins.append(scores[pos] - rest.max())
    return float(np.mean(margins))

print(f"mean score margin: before {mean_margin(None):.4f}, after {mean_margin(params):.4f}")
