"""
Measuring what enrichment buys: naive vs heterogeneous retrieval
================================================================

A corpus is constructed so that the distinguishing words live only in
document titles and section names, never in chunk bodies. A bare-chunk
index is then blind: every chunk scores zero against every query and the
ranking is an arbitrary (if deterministic) tie order. The enriched index
carries the metadata inside each embedded view and ranks the right
document first every time.
"""

from heterag import Document, HashEmbedder, Query, Section, run_retrieval_eval

TOPICS = [
    "volcanology", "beekeeping", "cryostats", "shipwrecks", "orchards",
    "typography", "metallurgy", "wetlands", "gearboxes", "lighthouses",
]

body = (
    "the measurement procedure repeats until the detector saturates "
    "and the log is archived for later review"
)

docs = [
    Document(
        doc_id=f"doc-{topic}",
        title=f"{topic} handbook",
        sections=(Section(path=(f"{topic} methods",), text=body),),
    )
    for topic in TOPICS
]
queries = [Query(f"q-{topic}", f"{topic} handbook") for topic in TOPICS]
qrels = {f"q-{topic}": {f"doc-{topic}": 1} for topic in TOPICS}

report = run_retrieval_eval(
    docs,
    queries,
    qrels,
    chunk_sizes=(16, 64),
    methods=("naive", "heterag"),
    embedder=HashEmbedder(256),
    k_values=(1, 10),
)

print(report.to_table())

naive = report.rows[("hash", 64, "naive")]["ndcg@10"]
enriched = report.rows[("hash", 64, "heterag")]["ndcg@10"]
print(f"mean ndcg@10 gap at chunk size 64: {enriched - naive:+.4f}")

# The JSON form is byte-stable across reruns, which is what makes report
# files diffable in CI.
assert report.to_json() == run_retrieval_eval(
    docs, queries, qrels, chunk_sizes=(16, 64), methods=("naive", "heterag"),
    embedder=HashEmbedder(256), k_values=(1, 10),
).to_json()
print("report JSON is reproducible")
