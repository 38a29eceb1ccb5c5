"""Command-line harness.

Subcommands: ingest (validate corpus and triples into caches), paths
(offline knowledge search), train, eval, generate, gradcheck. Structured
output goes to stdout as JSON; progress notes go to stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import fields as dataclass_fields

import numpy as np

from . import checkpoint as ckpt
from .cognition import (LexiconTagger, extract_keywords, load_triples,
                        path_record, read_path_cache, search_with_fallback,
                        write_path_cache)
from .data import Corpus, load_corpus, prepare_batch, read_embedding_file
from .gradsuite import run_suite
from .layers import InterEncoder
from .metrics import evaluate
from .model import EmpathyModel, ModelConfig
from .training import TrainConfig, restore_best, train

MODEL_KEYS = {f.name for f in dataclass_fields(ModelConfig)} - {"vocab_size"}
TRAIN_KEYS = {f.name for f in dataclass_fields(TrainConfig)}
EXTRA_KEYS = {"embedding_file", "pos_lexicon"}


def load_config_file(path) -> dict:
    if path is None:
        return {}
    with open(path, encoding="utf-8") as fh:
        cfg = json.load(fh)
    unknown = set(cfg) - MODEL_KEYS - TRAIN_KEYS - EXTRA_KEYS
    if unknown:
        raise SystemExit(f"unknown config keys: {sorted(unknown)}")
    return cfg


def build_configs(cfg: dict, vocab_size: int, seed: int, ablate):
    model_kwargs = {k: v for k, v in cfg.items() if k in MODEL_KEYS}
    train_kwargs = {k: v for k, v in cfg.items() if k in TRAIN_KEYS}
    train_kwargs["seed"] = seed
    ablate = ablate or []
    model_cfg = ModelConfig(vocab_size=vocab_size,
                            ablate_cog="cog" in ablate,
                            ablate_aff="aff" in ablate,
                            ablate_beh="beh" in ablate,
                            **model_kwargs)
    train_cfg = TrainConfig(no_cog="cog" in ablate, no_aff="aff" in ablate,
                            no_beh="beh" in ablate, **train_kwargs)
    return model_cfg, train_cfg


def note(msg: str):
    print(msg, file=sys.stderr)


def cmd_ingest(args):
    corpus = load_corpus(args.corpus)
    store, report = load_triples(args.triples)
    os.makedirs(args.out, exist_ok=True)
    vocab_path = os.path.join(args.out, "vocab.txt")
    with open(vocab_path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(corpus.vocab.id_to_token) + "\n")
    summary = {
        "splits": corpus.sizes(),
        "vocab_size": len(corpus.vocab),
        "triples_kept": report.kept,
        "triples_dropped_removed_relations": report.dropped_removed,
        "triples_dropped_unknown_relations": report.dropped_unknown,
        "removed_relation_counts": report.removed_counts,
        "store_heads": len(list(store.heads())),
    }
    with open(os.path.join(args.out, "ingest_report.json"), "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    print(json.dumps(summary, sort_keys=True))
    return 0


def run_paths(corpus: Corpus, store, seed: int, tagger: LexiconTagger,
              model_cfg: ModelConfig):
    """Offline path search over every dialogue; returns (records, stats).

    The contextual features come from a seeded inter-encoder over the
    initial embedding table, so the cache is reproducible.
    """
    rng = np.random.default_rng(seed)
    from .layers import EmbeddingTable
    table = EmbeddingTable(model_cfg.vocab_size, model_cfg.d_model, rng)
    itr = InterEncoder(model_cfg.d_model, model_cfg.n_heads, model_cfg.ffn_dim,
                       model_cfg.enc_layers, rng)
    vocab = corpus.vocab
    emb = table.table.data

    from . import autodiff
    from .autodiff import Tensor
    from .cognition import contextual_feature
    from .encoders import UNK

    def lookup(token: str) -> int:
        tid = vocab.token_to_id.get(token, UNK)
        if tid == UNK and token not in vocab.token_to_id:
            autodiff.diagnostics.oov_lookups += 1
        return tid

    def embed(token: str) -> np.ndarray:
        return emb[lookup(token)]

    def make_delta(speaker_ids):
        e_s = Tensor(emb[speaker_ids])

        def token_row(token: str) -> Tensor:
            return Tensor(emb[[lookup(token)]])

        def delta(token: str) -> np.ndarray:
            return contextual_feature(token, e_s, itr, token_row)
        return delta

    records = []
    stats = {"total": 0, "primary": 0, "second_pass": 0, "pseudo": 0,
             "exhausted": 0}
    for dialogue in corpus.all_dialogues():
        batch = prepare_batch(dialogue, vocab)
        keywords = extract_keywords(batch.speaker_token_seqs, tagger)
        delta = make_delta(batch.speaker_ids)
        result, stage = search_with_fallback(keywords, store, batch.ctx_tokens,
                                             embed, delta)
        records.append(path_record(dialogue.dialogue_id, result, stage))
        stats["total"] += 1
        stats[stage] += 1
    total = max(stats["total"], 1)
    stats["fallback_pct"] = round(
        100.0 * (stats["second_pass"] + stats["pseudo"] + stats["exhausted"]) / total, 2)
    stats["pseudo_pct"] = round(100.0 * stats["pseudo"] / total, 2)
    return records, stats


def cmd_paths(args):
    cfg = load_config_file(args.config)
    corpus = load_corpus(args.corpus)
    store, _ = load_triples(args.triples)
    tagger = (LexiconTagger.from_file(cfg["pos_lexicon"])
              if "pos_lexicon" in cfg else LexiconTagger())
    model_cfg, _ = build_configs(cfg, len(corpus.vocab), args.seed, None)
    records, stats = run_paths(corpus, store, args.seed, tagger, model_cfg)
    write_path_cache(args.out, records)
    print(json.dumps(stats, sort_keys=True))
    return 0


def cmd_train(args):
    cfg = load_config_file(args.config)
    corpus = load_corpus(args.corpus)
    path_cache = read_path_cache(args.paths) if args.paths else {}
    model_cfg, train_cfg = build_configs(cfg, len(corpus.vocab), args.seed,
                                         args.ablate)
    preload = None
    if "embedding_file" in cfg:
        preload = read_embedding_file(cfg["embedding_file"], corpus.vocab,
                                      dim=model_cfg.d_model)
    rng = np.random.default_rng(args.seed)
    model = EmpathyModel(model_cfg, rng, preload_embeddings=preload)
    note(f"training on {len(corpus.train)} dialogues, "
         f"{sum(p.data.size for p in model.parameters())} parameters")
    history = train(model, corpus, path_cache, train_cfg)
    if restore_best(model, history):
        note(f"saved best-validation parameters (ppl {history.best_validation:.3f})")
    ckpt.save(model, args.out)
    summary = {
        "batches": len(history.batch_losses),
        "final_loss": history.batch_losses[-1] if history.batch_losses else None,
        "checkpoint": args.out,
    }
    if history.validations:
        summary["best_validation_ppl"] = history.best_validation
    print(json.dumps(summary, sort_keys=True))
    return 0


def cmd_eval(args):
    corpus = load_corpus(args.corpus)
    path_cache = read_path_cache(args.paths) if args.paths else {}
    model, _ = ckpt.load_model(args.checkpoint)
    record = evaluate(model, corpus, path_cache, split=args.split)
    print(json.dumps(record.to_dict(), sort_keys=True))
    return 0


def cmd_generate(args):
    corpus = load_corpus(args.corpus)
    path_cache = read_path_cache(args.paths) if args.paths else {}
    model, _ = ckpt.load_model(args.checkpoint)
    dialogues = corpus.split(args.split)
    if args.dialogue_id is not None:
        dialogues = [d for d in dialogues if d.dialogue_id == args.dialogue_id]
        if not dialogues:
            raise SystemExit(f"dialogue id {args.dialogue_id!r} not in split {args.split}")
    merge = model.config.ablate_aff
    for d in dialogues:
        batch = prepare_batch(d, corpus.vocab, merge_speaker_stream=merge)
        trace = model.generate(batch, path_cache.get(d.dialogue_id), corpus.vocab)
        print(json.dumps({
            "id": d.dialogue_id,
            "response": " ".join(trace.response_tokens),
            "speaker_emotion": trace.speaker_emotion,
            "listener_emotion": trace.listener_emotion,
            "act": trace.act,
            "tau_r": trace.tau_r,
            "paths": trace.verbalized_paths,
            "beta": trace.beta,
        }, sort_keys=True))
    return 0


def cmd_gradcheck(args):
    seeds = tuple(range(args.seeds))
    report = run_suite(seeds=seeds)
    for line in report.lines():
        print(line)
    n_fail = sum(1 for r in report.results if not r.passed)
    print(f"{len(report.results)} checks, {n_fail} failures")
    return 0 if report.passed else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="empdial",
        description="Empathetic dialogue generation harness")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate corpus and triples into caches")
    p.add_argument("--corpus", required=True)
    p.add_argument("--triples", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_ingest)

    p = sub.add_parser("paths", help="run knowledge path search offline")
    p.add_argument("--corpus", required=True)
    p.add_argument("--triples", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_paths)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--corpus", required=True)
    p.add_argument("--paths")
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ablate", action="append", choices=("cog", "aff", "beh"))
    p.add_argument("--device", default="cpu", help="ignored; CPU only")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--paths")
    p.add_argument("--split", default="test", choices=("train", "valid", "test"))
    p.add_argument("--device", default="cpu", help="ignored; CPU only")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("generate", help="generate responses with trace")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--paths")
    p.add_argument("--split", default="test", choices=("train", "valid", "test"))
    p.add_argument("--dialogue-id")
    p.add_argument("--device", default="cpu", help="ignored; CPU only")
    p.set_defaults(fn=cmd_generate)

    p = sub.add_parser("gradcheck", help="run the finite-difference suite")
    p.add_argument("--seeds", type=int, default=5)
    p.set_defaults(fn=cmd_gradcheck)

    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    raise SystemExit(main())
