"""Knowledge acquisition: keywords, bounded path search, verbalization.

Run from the repository root:  python3 demos/04_knowledge_paths.py
"""

import numpy as np

from empdial.cognition import (LexiconTagger, PASS_ONE, Triple, TripleStore,
                               extract_keywords, find_paths, load_triples,
                               search_with_fallback, verbalize)
from empdial.data import load_corpus, prepare_batch, tokenize

store, report = load_triples("tests/fixtures/triples.tsv")
print(f"ingested {report.kept} triples (reverse twins included); dropped "
      f"{report.dropped_removed} removed-relation rows: {report.removed_counts}")

corpus = load_corpus("tests/fixtures/corpus")
tagger = LexiconTagger.from_file("tests/fixtures/pos_lexicon.json")

# fixed random vectors stand in for the trained embeddings and contextual
# features; the offline stage in the CLI derives them from a seeded encoder
tokens = sorted({t for d in corpus.all_dialogues() for turn in d.turns
                 for t in tokenize(turn.text)} | set(store.heads()))
rng = np.random.default_rng(0)
vectors = {t: rng.standard_normal(16) for t in tokens}
fallback_vec = rng.standard_normal(16)
embed = lambda tok: vectors.get(tok, fallback_vec)

print("\n== per-dialogue search ==")
for dialogue in corpus.train:
    batch = prepare_batch(dialogue, corpus.vocab)
    keywords = extract_keywords(batch.speaker_token_seqs, tagger)
    result, stage = search_with_fallback(keywords, store, batch.ctx_tokens,
                                         embed, embed)
    print(f"{dialogue.dialogue_id}: keywords {keywords} -> stage {stage}")
    for p in result.paths:
        marker = " (pseudo)" if p.pseudo else ""
        print("   ", verbalize(p) + marker)

print("\n== the attention vector g over context positions ==")
batch = prepare_batch(corpus.train[0], corpus.vocab)
keywords = extract_keywords(batch.speaker_token_seqs, tagger)
result = find_paths(keywords, store, PASS_ONE, batch.ctx_tokens, embed, embed)
print("retained keywords:", result.tau_r)
print("g sums to", round(float(result.g.sum()), 9), "over",
      len(result.g), "positions")

print("\n== depth bound in action ==")
toy = TripleStore([Triple("a", "RelatedTo", "b", 1.0),
                   Triple("b", "Causes", "c", 1.0)])
toy_vecs = {t: rng.standard_normal(8) for t in "abc"}
toy_embed = lambda tok: toy_vecs.get(tok, np.zeros(8))
from empdial.cognition import PathSearchConfig
for m in (1, 2):
    res = find_paths(["a", "c"], toy, PathSearchConfig(m, 5, 3, 15),
                     ["a", "c"], toy_embed, toy_embed)
    chains = [verbalize(p) for p in res.paths]
    print(f"M={m}: {chains or 'no path (two hops needed)'}")
