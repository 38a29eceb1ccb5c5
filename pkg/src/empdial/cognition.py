"""Knowledge acquisition and fusion.

Offline stage: extract keywords from the speaker turns, search a triple
store for bounded multi-hop chains connecting pairs of keywords, verbalize
the chains into sentences. Online stage: encode the sentences with a
two-layer bidirectional GRU and attach them to the context representation
token by token.

Path search is deterministic given the store's insertion order and the
keyword ranking, which is what makes the brute-force oracle comparison in
the tests possible.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .layers import BiGRU, Linear, Module

# Relations dropped when ingesting triple files.
REMOVED_RELATIONS = frozenset({
    "ExternalURL", "NotDesires", "NotHasProperty", "NotCapableOf", "dbpedia",
    "DistinctFrom", "EtymologicallyDerivedFrom", "EtymologicallyRelatedTo",
    "SymbolOf", "FormOf", "AtLocation", "DerivedFrom", "CreatedBy", "MadeOf",
})

# Natural-language rendering for each usable relation. Reversed relations
# (head and tail swapped at ingestion) carry the Reverse- prefix.
RELATION_PHRASES = {
    "IsA": "is a", "Reverse-IsA": "is a",
    "HasProperty": "can", "Reverse-HasProperty": "is an attribute of",
    "Desires": "desires", "Reverse-Desires": "is desired by",
    "HasA": "has", "Reverse-HasA": "is owned by",
    "RelatedTo": "is related to", "Reverse-RelatedTo": "is related to",
    "ReceivesAction": "can be", "Reverse-ReceivesAction": "is",
    "Causes": "causes", "Reverse-Causes": "is because of",
    "HasSubevent": "then", "Reverse-HasSubevent": "before",
    "UsedFor": "is used for", "Reverse-UsedFor": "needs",
    "PartOf": "is part of", "Reverse-PartOf": "includes",
    "HasPrerequisite": "has prerequisite", "Reverse-HasPrerequisite": "is the condition of",
    "HasContext": "has meaning of", "Reverse-HasContext": "has meaning of",
    "MannerOf": "is one manner of", "Reverse-MannerOf": "is the result of",
    "SimilarTo": "is similar to", "Reverse-SimilarTo": "is similar to",
    "CapableOf": "can", "Reverse-CapableOf": "benefit from",
    "MotivatedByGoal": "becauses", "Reverse-MotivatedByGoal": "desires",
    "CausesDesire": "desires", "Reverse-CausesDesire": "is desired by",
    "LocatedNear": "is located near", "Reverse-LocatedNear": "is located near",
    "Entails": "entails", "Reverse-Entails": "is part of",
    "HasLastSubevent": "then", "Reverse-HasLastSubevent": "before",
    "HasFirstSubevent": "then", "Reverse-HasFirstSubevent": "before",
    "Antonym": "is opposite to", "Reverse-Antonym": "is opposite to",
    "Synonym": "is similar to", "Reverse-Synonym": "is similar to",
}

FORWARD_RELATIONS = tuple(r for r in RELATION_PHRASES if not r.startswith("Reverse-"))


@dataclass(frozen=True)
class Triple:
    head: str
    relation: str
    tail: str
    confidence: float


class TripleStore:
    """Triples indexed by head token; insertion order is preserved."""

    def __init__(self, triples=()):
        self._by_head: dict[str, list[Triple]] = {}
        self.size = 0
        for t in triples:
            self.add(t)

    def add(self, triple: Triple):
        self._by_head.setdefault(triple.head, []).append(triple)
        self.size += 1

    def by_head(self, head: str) -> list[Triple]:
        return self._by_head.get(head, [])

    def heads(self):
        return self._by_head.keys()


@dataclass
class IngestReport:
    kept: int = 0
    dropped_removed: int = 0
    dropped_unknown: int = 0
    removed_counts: dict = field(default_factory=dict)


def load_triples(path, add_reverse: bool = True):
    """Read a head<TAB>relation<TAB>tail<TAB>confidence file.

    Relations in the removed set are dropped and counted; relations
    outside the usable vocabulary are dropped separately. With
    add_reverse, each forward triple also stores its head/tail-swapped
    twin under the Reverse- relation.
    """
    store = TripleStore()
    report = IngestReport()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise ValueError(f"{path}:{lineno}: expected 4 tab-separated fields, "
                                 f"got {len(parts)}")
            head, relation, tail, conf = parts
            if relation in REMOVED_RELATIONS:
                report.dropped_removed += 1
                report.removed_counts[relation] = report.removed_counts.get(relation, 0) + 1
                continue
            if relation not in RELATION_PHRASES:
                report.dropped_unknown += 1
                continue
            try:
                confidence = float(conf)
            except ValueError:
                raise ValueError(f"{path}:{lineno}: bad confidence {conf!r}")
            store.add(Triple(head, relation, tail, confidence))
            report.kept += 1
            if add_reverse and not relation.startswith("Reverse-"):
                store.add(Triple(tail, f"Reverse-{relation}", head, confidence))
                report.kept += 1
    return store, report


@dataclass
class KnowledgePath:
    hops: list[Triple]
    origin: str
    target: str
    pseudo: bool = False

    def chain_ok(self) -> bool:
        return all(self.hops[i].tail == self.hops[i + 1].head
                   for i in range(len(self.hops) - 1))

    def hop_key(self):
        return tuple((h.head, h.relation, h.tail) for h in self.hops)


@dataclass(frozen=True)
class PathSearchConfig:
    max_hops: int      # M
    top_k_triples: int  # K, per-head retrieval size
    top_k_per_target: int  # k, per-target filter size
    max_paths: int     # Num, retained per dialogue


PASS_ONE = PathSearchConfig(max_hops=4, top_k_triples=5, top_k_per_target=3, max_paths=15)
PASS_TWO = PathSearchConfig(max_hops=1, top_k_triples=1, top_k_per_target=1, max_paths=15)


# ---------------------------------------------------------------------------
# keyword extraction


class LexiconTagger:
    """Part-of-speech lookup from a plain token->tag dictionary.

    Tokens absent from the lexicon default to nouns so corpora shipped
    without a lexicon still yield keywords; supply explicit tags to filter
    function words out.
    """

    CONTENT = frozenset({"noun", "verb", "adverb", "adjective"})

    def __init__(self, lexicon: dict[str, str] | None = None,
                 default: str = "noun"):
        self.lexicon = lexicon or {}
        self.default = default

    @classmethod
    def from_file(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls(json.load(fh))

    def is_content_word(self, token: str) -> bool:
        return self.lexicon.get(token, self.default) in self.CONTENT


def textrank_scores(token_seqs, window: int = 4, damping: float = 0.85,
                    tol: float = 1e-6, max_iter: int = 100) -> dict[str, float]:
    """Power iteration over the token co-occurrence graph.

    Edges connect distinct tokens within `window` positions of each other
    inside one utterance, weighted by co-occurrence count.
    """
    weights: dict[tuple[str, str], float] = {}
    nodes: list[str] = []
    seen = set()
    for seq in token_seqs:
        for i, tok in enumerate(seq):
            if tok not in seen:
                seen.add(tok)
                nodes.append(tok)
            for j in range(i + 1, min(i + window, len(seq))):
                other = seq[j]
                if other == tok:
                    continue
                key = (tok, other) if tok < other else (other, tok)
                weights[key] = weights.get(key, 0.0) + 1.0
    if not nodes:
        return {}
    adj: dict[str, list[tuple[str, float]]] = {n: [] for n in nodes}
    degree = {n: 0.0 for n in nodes}
    for (a, b), w in weights.items():
        adj[a].append((b, w))
        adj[b].append((a, w))
        degree[a] += w
        degree[b] += w
    scores = {n: 1.0 for n in nodes}
    for _ in range(max_iter):
        delta = 0.0
        new = {}
        for n in nodes:
            rank = sum(w / degree[m] * scores[m] for m, w in adj[n] if degree[m] > 0)
            new[n] = (1.0 - damping) + damping * rank
            delta = max(delta, abs(new[n] - scores[n]))
        scores = new
        if delta < tol:
            break
    return scores


def extract_keywords(speaker_token_seqs, tagger: LexiconTagger | None = None,
                     min_keywords: int = 3, max_keywords: int = 10):
    """Ranked content-word keywords from the speaker turns.

    The keyword budget scales with utterance length (one per ten tokens,
    clamped to [min, max]); ties in score break lexicographically.
    """
    tagger = tagger or LexiconTagger()
    total_tokens = sum(len(s) for s in speaker_token_seqs)
    if total_tokens == 0:
        return []
    scores = textrank_scores(speaker_token_seqs)
    budget = max(min_keywords, min(max_keywords, int(round(total_tokens / 10))))
    ranked = sorted(scores, key=lambda t: (-scores[t], t))
    top = ranked[:budget]
    return [t for t in top if tagger.is_content_word(t)]


# ---------------------------------------------------------------------------
# retrieval and path search


def contextual_feature(keyword: str, speaker_emb, itr_enc, token_row) -> np.ndarray:
    """Contextual semantic feature of one keyword: the keyword's embedding
    cross-attended over the speaker embeddings, first output row.

    ``token_row(token)`` returns the [1 x d] embedding row and is expected
    to map out-of-vocabulary keywords to the UNK row (counted in
    diagnostics by the caller's lookup).
    """
    query = token_row(keyword)
    return itr_enc(query, speaker_emb).data[0]


def minmax_normalize(values):
    """Scale to [0, 1]; a degenerate (constant) set maps to all ones."""
    values = list(values)
    lo, hi = min(values), max(values)
    if hi == lo:
        return [1.0] * len(values)
    return [(v - lo) / (hi - lo) for v in values]


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


def step_a_scores(candidates, delta: np.ndarray, embed):
    """Retrieval score per candidate: cosine(tail embedding, contextual
    feature) plus min-max normalized confidence over the candidate set."""
    conf_norm = minmax_normalize([t.confidence for t in candidates])
    return [_cosine(embed(t.tail), delta) + cn
            for t, cn in zip(candidates, conf_norm)]


def retrieve_top_k(head: str, delta: np.ndarray, store: TripleStore, k: int,
                   embed) -> list[Triple]:
    """Top-K triples for a head by retrieval score; ties prefer higher raw
    confidence, then lexicographic tail."""
    candidates = store.by_head(head)
    if not candidates:
        return []
    scores = step_a_scores(candidates, delta, embed)
    order = sorted(range(len(candidates)),
                   key=lambda i: (-scores[i], -candidates[i].confidence,
                                  candidates[i].tail))
    return [candidates[i] for i in order[:k]]


def filter_top_k_for_target(triples, target_delta: np.ndarray, k: int, embed):
    """Top-k of a retrieved set by tail similarity to one target keyword."""
    order = sorted(range(len(triples)),
                   key=lambda i: (-_cosine(embed(triples[i].tail), target_delta),
                                  -triples[i].confidence, triples[i].tail))
    return [triples[i] for i in order[:k]]


@dataclass
class PathSearchResult:
    paths: list[KnowledgePath]
    tau_r: list[str]     # retained keywords, discovery order
    g: np.ndarray        # attention weights over the context tokens


def attention_over_context(context_tokens, tau_r, embed) -> np.ndarray:
    """Softmax over context positions of each token's dot product with the
    mean embedding of the retained keywords; uniform when none retained."""
    c = len(context_tokens)
    if c == 0:
        return np.zeros(0)
    if not tau_r:
        return np.full(c, 1.0 / c)
    mean_vec = np.mean([embed(t) for t in tau_r], axis=0)
    scores = np.array([float(np.dot(embed(t), mean_vec)) for t in context_tokens])
    scores -= scores.max()
    e = np.exp(scores)
    return e / e.sum()


def find_paths(keywords, store: TripleStore, cfg: PathSearchConfig,
               context_tokens, embed, delta_fn) -> PathSearchResult:
    """Breadth-style expansion from each keyword.

    From a frontier node: retrieve its top-K triples, filter them per
    other keyword down to top-k by tail similarity, emit a path whenever a
    filtered tail string-equals that keyword, and push the remaining
    filtered tails back onto the frontier until the hop bound. At most
    `max_paths` paths are retained in discovery order.
    """
    keywords = list(keywords)
    paths: list[KnowledgePath] = []
    tau_r: list[str] = []
    seen_paths = set()
    kw_set = set(keywords)
    deltas = {kw: delta_fn(kw) for kw in keywords}

    frontier = [(kw, kw, ()) for kw in keywords]  # (origin, node, hops)
    while frontier and len(paths) < cfg.max_paths:
        origin, node, hops = frontier.pop(0)
        if len(hops) >= cfg.max_hops:
            continue
        node_delta = deltas[node] if node in deltas else delta_fn(node)
        retrieved = retrieve_top_k(node, node_delta, store, cfg.top_k_triples, embed)
        if not retrieved:
            continue
        chain_nodes = {origin} | {h.head for h in hops} | {h.tail for h in hops}
        targets = [kw for kw in keywords if kw != origin and kw not in chain_nodes]
        expansion: list[Triple] = []
        expansion_seen = set()
        for target in targets:
            filtered = filter_top_k_for_target(retrieved, deltas[target],
                                               cfg.top_k_per_target, embed)
            for triple in filtered:
                if triple.tail == target:
                    candidate = KnowledgePath(hops=list(hops) + [triple],
                                              origin=origin, target=target)
                    key = candidate.hop_key()
                    if key not in seen_paths and len(paths) < cfg.max_paths:
                        seen_paths.add(key)
                        paths.append(candidate)
                        for kw in (origin, target):
                            if kw not in tau_r:
                                tau_r.append(kw)
                elif (triple.tail not in kw_set
                      and triple.tail not in chain_nodes
                      and (triple.head, triple.relation, triple.tail) not in expansion_seen):
                    expansion_seen.add((triple.head, triple.relation, triple.tail))
                    expansion.append(triple)
        for triple in expansion:
            frontier.append((origin, triple.tail, tuple(hops) + (triple,)))

    g = attention_over_context(context_tokens, tau_r, embed)
    return PathSearchResult(paths=paths, tau_r=tau_r, g=g)


def best_step_a_triple(keywords, store: TripleStore, embed, delta_fn):
    """Best-scored triple of the highest-ranked keyword that has any."""
    for kw in keywords:
        top = retrieve_top_k(kw, delta_fn(kw), store, 1, embed)
        if top:
            return kw, top[0]
    return None, None


def search_with_fallback(keywords, store: TripleStore, context_tokens, embed,
                         delta_fn, pass_one: PathSearchConfig = PASS_ONE,
                         pass_two: PathSearchConfig = PASS_TWO, probe=None):
    """Two-pass search, then a single-triple pseudo-path as a last resort.

    Returns (result, stage) with stage one of "primary", "second_pass",
    "pseudo", "exhausted". ``probe(stage, cfg)`` is called before each
    attempt so callers can observe which parameters actually ran.
    """
    if probe:
        probe("primary", pass_one)
    result = find_paths(keywords, store, pass_one, context_tokens, embed, delta_fn)
    if result.paths:
        return result, "primary"
    if probe:
        probe("second_pass", pass_two)
    result = find_paths(keywords, store, pass_two, context_tokens, embed, delta_fn)
    if result.paths:
        return result, "second_pass"
    if probe:
        probe("pseudo", None)
    kw, triple = best_step_a_triple(keywords, store, embed, delta_fn)
    if triple is not None:
        pseudo = KnowledgePath(hops=[triple], origin=kw, target=triple.tail,
                               pseudo=True)
        tau_r = [kw, triple.tail]
        g = attention_over_context(context_tokens, tau_r, embed)
        return PathSearchResult(paths=[pseudo], tau_r=tau_r, g=g), "pseudo"
    g = attention_over_context(context_tokens, [], embed)
    return PathSearchResult(paths=[], tau_r=[], g=g), "exhausted"


# ---------------------------------------------------------------------------
# verbalization


def verbalize(path: KnowledgePath) -> str:
    """Render each hop as "<Head> <relation phrase> <tail>." with the head
    capitalized, hops joined by single spaces."""
    sentences = []
    for hop in path.hops:
        phrase = RELATION_PHRASES.get(hop.relation)
        if phrase is None:
            raise KeyError(f"no verbalization rule for relation {hop.relation!r}")
        head = hop.head[:1].upper() + hop.head[1:]
        sentences.append(f"{head} {phrase} {hop.tail}.")
    return " ".join(sentences)


# ---------------------------------------------------------------------------
# knowledge encoding and fusion


class KnowledgeEncoder(Module):
    """Two-layer bidirectional GRU over the verbalized path tokens."""

    def __init__(self, d_model: int, rng: np.random.Generator, n_layers: int = 2):
        super().__init__()
        self.gru = self.add_module("gru", BiGRU(d_model, d_model, n_layers, rng))

    def __call__(self, token_emb: Tensor) -> Tensor:
        return self.gru(token_emb)


class KnowledgeFusion(Module):
    """Token-level attachment of knowledge to the context representation.

    Each context row attends over the knowledge rows, the weighted sum is
    concatenated to the row, and a linear layer maps the widened rows back
    to model width. With no knowledge the same linear layer runs with a
    zeroed knowledge slot.
    """

    def __init__(self, d_model: int, rng: np.random.Generator):
        super().__init__()
        self.w_k = self.register("w_k", ad.param((2 * d_model, d_model), rng))
        self.out = self.add_module("out", Linear(3 * d_model, d_model, rng))
        self.d_model = d_model

    def __call__(self, h_ctx: Tensor, h_know: Tensor | None):
        c = h_ctx.shape[0]
        if h_know is None or h_know.shape[0] == 0:
            widened = ad.concat([h_ctx, Tensor(np.zeros((c, 2 * self.d_model)))], axis=1)
            return self.out(widened), None
        scores = ad.matmul(h_ctx, ad.transpose(ad.matmul(h_know, self.w_k)))
        alpha = ad.softmax(scores, axis=-1)           # [c x p]
        summary = ad.matmul(alpha, h_know)            # [c x 2d]
        widened = ad.concat([h_ctx, summary], axis=1)
        return self.out(widened), alpha


# ---------------------------------------------------------------------------
# path cache records


def path_record(dialogue_id: str, result: PathSearchResult, stage: str) -> dict:
    return {
        "id": dialogue_id,
        "stage": stage,
        "paths": [{"hops": [[h.head, h.relation, h.tail, h.confidence]
                            for h in p.hops],
                   "origin": p.origin, "target": p.target, "pseudo": p.pseudo}
                  for p in result.paths],
        "tau_r": list(result.tau_r),
        "verbalized": [verbalize(p) for p in result.paths],
    }


def record_to_paths(record: dict) -> list[KnowledgePath]:
    return [KnowledgePath(hops=[Triple(h, r, t, c) for h, r, t, c in p["hops"]],
                          origin=p["origin"], target=p["target"],
                          pseudo=p.get("pseudo", False))
            for p in record["paths"]]


def write_path_cache(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def read_path_cache(path) -> dict[str, dict]:
    cache = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise ValueError(f"{path}:{lineno}: bad path record: {e}")
            cache[rec["id"]] = rec
    return cache
