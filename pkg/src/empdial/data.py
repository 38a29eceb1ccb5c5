"""Corpus ingestion and batch preparation.

One dialogue per JSONL line: {"id": ..., "turns": [{"role": "speaker" |
"listener", "text": ..., "emotion": ..., "act": ...}]}. Roles alternate,
every turn carries an emotion label, listener turns carry an act label,
and the final turn is the gold listener response.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .behavior import ACT_INDEX
from .encoders import CLS, ContextBatch, Vocab

# Emotion catalog of the annotated benchmark corpus, fixed index order.
EMOTIONS = (
    "surprised", "excited", "annoyed", "proud", "angry", "sad", "grateful",
    "lonely", "impressed", "afraid", "disgusted", "confident", "terrified",
    "hopeful", "anxious", "disappointed", "joyful", "prepared", "guilty",
    "furious", "nostalgic", "jealous", "anticipating", "embarrassed",
    "content", "devastated", "sentimental", "caring", "trusting", "ashamed",
    "apprehensive", "faithful",
)
EMOTION_INDEX = {name: i for i, name in enumerate(EMOTIONS)}


def tokenize(text: str) -> list[str]:
    """Lowercased whitespace tokenization; keywords and triples match on
    exact lowercase strings."""
    return text.lower().split()


@dataclass
class Turn:
    role: str
    text: str
    emotion: str
    act: str | None = None

    @property
    def tokens(self) -> list[str]:
        return tokenize(self.text)


@dataclass
class Dialogue:
    dialogue_id: str
    turns: list[Turn]

    @property
    def history(self) -> list[Turn]:
        return self.turns[:-1]

    @property
    def gold(self) -> Turn:
        return self.turns[-1]


@dataclass
class Corpus:
    train: list[Dialogue]
    valid: list[Dialogue] = field(default_factory=list)
    test: list[Dialogue] = field(default_factory=list)
    vocab: Vocab | None = None

    def split(self, name: str) -> list[Dialogue]:
        return {"train": self.train, "valid": self.valid, "test": self.test}[name]

    def all_dialogues(self):
        yield from self.train
        yield from self.valid
        yield from self.test

    def sizes(self):
        return {"train": len(self.train), "valid": len(self.valid),
                "test": len(self.test)}


def _parse_dialogue(obj, where: str) -> Dialogue:
    if not isinstance(obj, dict) or "id" not in obj or "turns" not in obj:
        raise ValueError(f"{where}: dialogue record needs 'id' and 'turns'")
    turns = []
    for i, t in enumerate(obj["turns"]):
        for key in ("role", "text", "emotion"):
            if key not in t:
                raise ValueError(f"{where}: turn {i} is missing {key!r}")
        role = t["role"]
        if role not in ("speaker", "listener"):
            raise ValueError(f"{where}: turn {i} has unknown role {role!r}")
        if t["emotion"] not in EMOTION_INDEX:
            raise ValueError(f"{where}: unknown emotion label {t['emotion']!r}")
        act = t.get("act")
        if role == "listener":
            if act is None:
                raise ValueError(f"{where}: listener turn {i} is missing an act label")
            if act not in ACT_INDEX:
                raise ValueError(f"{where}: unknown act label {act!r}")
        turns.append(Turn(role=role, text=t["text"], emotion=t["emotion"], act=act))
    if not turns:
        raise ValueError(f"{where}: dialogue has no turns")
    if turns[-1].role != "listener":
        raise ValueError(f"{where}: final turn must be the listener's gold response")
    if not any(t.role == "speaker" for t in turns[:-1]):
        raise ValueError(f"{where}: dialogue needs at least one speaker turn")
    return Dialogue(dialogue_id=str(obj["id"]), turns=turns)


def load_split(path) -> list[Dialogue]:
    dialogues = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise ValueError(f"{path}:{lineno}: malformed record: {e}")
            dialogues.append(_parse_dialogue(obj, f"{path}:{lineno}"))
    if not dialogues:
        raise ValueError(f"{path}: no dialogues")
    return dialogues


def build_vocab(dialogues) -> Vocab:
    vocab = Vocab()
    for d in dialogues:
        for turn in d.turns:
            for tok in turn.tokens:
                vocab.add(tok)
    return vocab


def load_corpus(root) -> Corpus:
    """Load train/valid/test JSONL files from a directory; the vocabulary
    comes from the training split plus the reserved tokens."""
    import os
    train = load_split(os.path.join(root, "train.jsonl"))
    valid_path = os.path.join(root, "valid.jsonl")
    test_path = os.path.join(root, "test.jsonl")
    valid = load_split(valid_path) if os.path.exists(valid_path) else []
    test = load_split(test_path) if os.path.exists(test_path) else []
    return Corpus(train=train, valid=valid, test=test, vocab=build_vocab(train))


def serialize_split(dialogues) -> str:
    lines = []
    for d in dialogues:
        turns = []
        for t in d.turns:
            rec = {"role": t.role, "text": t.text, "emotion": t.emotion}
            if t.act is not None:
                rec["act"] = t.act
            turns.append(rec)
        lines.append(json.dumps({"id": d.dialogue_id, "turns": turns}, sort_keys=True))
    return "\n".join(lines) + "\n"


def prepare_batch(dialogue: Dialogue, vocab: Vocab,
                  merge_speaker_stream: bool = False) -> ContextBatch:
    """Build the id sequences and labels for one dialogue.

    The speaker emotion label comes from the last speaker turn; the
    listener emotion and act labels come from the gold response. With
    merge_speaker_stream the speaker segment covers the whole history
    (used when the listener branch is ablated).
    """
    history = dialogue.history
    gold = dialogue.gold
    ctx_tokens = [tok for turn in history for tok in turn.tokens]
    if merge_speaker_stream:
        speaker_turns = history
    else:
        speaker_turns = [t for t in history if t.role == "speaker"]
    listener_turns = [t for t in history if t.role == "listener"]
    speaker_token_seqs = [t.tokens for t in speaker_turns]
    speaker_tokens = [tok for seq in speaker_token_seqs for tok in seq]
    listener_tokens = [tok for t in listener_turns for tok in t.tokens]
    last_speaker = next(t for t in reversed(history) if t.role == "speaker")
    return ContextBatch(
        dialogue_id=dialogue.dialogue_id,
        ctx_ids=[CLS] + vocab.encode(ctx_tokens),
        speaker_ids=[CLS] + vocab.encode(speaker_tokens),
        listener_ids=[CLS] + vocab.encode(listener_tokens),
        response_ids=vocab.encode(gold.tokens),
        speaker_emotion=EMOTION_INDEX[last_speaker.emotion],
        listener_emotion=EMOTION_INDEX[gold.emotion],
        act=ACT_INDEX[gold.act],
        ctx_tokens=ctx_tokens,
        speaker_token_seqs=speaker_token_seqs,
    ).validate(len(EMOTIONS), len(ACT_INDEX))


def read_embedding_file(path, vocab: Vocab, dim: int = 300) -> np.ndarray:
    """Whitespace-separated vectors, one token per line followed by `dim`
    reals. Returns a [V x dim] array with zero rows for absent tokens
    (callers keep their random init for those)."""
    table = np.zeros((len(vocab), dim))
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.rstrip("\n").split()
            if not parts:
                continue
            if len(parts) != dim + 1:
                raise ValueError(f"{path}:{lineno}: expected token plus {dim} values, "
                                 f"got {len(parts) - 1}")
            token = parts[0]
            if token in vocab:
                table[vocab.token_to_id[token]] = [float(v) for v in parts[1:]]
    return table
