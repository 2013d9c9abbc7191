"""
Deterministic hash embeddings and top-k search
==============================================

The built-in embedder needs no model weights: each token is FNV-1a hashed
into a signed bucket, the bag of buckets is L2-normalized, and identical
text always lands on the identical vector. Good enough to exercise every
other part of the stack, and fully reproducible.
"""

import numpy as np

from heterag import (
    HashEmbedder,
    build_index,
    hash_embed_text,
    load_index,
    save_index,
    search_topk,
)

# One token occupies one signed bucket.
v = hash_embed_text("rover", 16)
print("single token vector:", np.nonzero(v)[0], "sign", v[np.nonzero(v)[0]])

# Word order does not matter, repetition does not change direction.
assert np.array_equal(hash_embed_text("dust storm", 64), hash_embed_text("storm dust", 64))
assert np.allclose(hash_embed_text("dust dust", 64), hash_embed_text("dust", 64))

emb = HashEmbedder(dimension=64)
passages = {
    "log:00000": "dust storm cleared overnight panels recovered output",
    "log:00001": "drive team plotted a route around the crater rim",
    "wx:00000": "orbital weather shows another storm forming to the west",
    "ops:00000": "battery heaters cycled nominally through the cold soak",
}
keys = [(cid, cid.split(":")[0]) for cid in passages]
vectors = emb.embed(list(passages.values()), level="view")

index = build_index(keys, vectors)
print(f"\nindexed {len(index)} chunks at dimension {index.dimension}")

query = emb.embed(["storm damage to the panels"], level="query")[0]
for rank, hit in enumerate(search_topk(index, query, k=3), start=1):
    print(f"  {rank}. {hit.chunk_id:<12} score {hit.score:+.4f}")

# The index round-trips through its binary file without losing a bit:
# vectors are stored as float32 and compared exactly after reload.
save_index(index, "/tmp/demo_index.bin")
reloaded = load_index("/tmp/demo_index.bin")
assert np.array_equal(reloaded.vectors, index.vectors)
assert search_topk(reloaded, query, k=3) == search_topk(index, query, k=3)
print("\nreloaded index reproduces the exact ranking")

# Ties are broken by chunk_id, so equal scores still give a stable order.
dup_keys = [("b:00000", "b"), ("a:00000", "a"), ("c:00000", "c")]
dup_index = build_index(dup_keys, np.tile(query, (3, 1)))
print("tie order:", [h.chunk_id for h in search_topk(dup_index, query, k=3)])
