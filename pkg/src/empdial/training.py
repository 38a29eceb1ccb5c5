"""Training loop: Adam over per-dialogue graphs with KL annealing.

Gradients accumulate over the dialogues of a mini-batch (each dialogue
builds its own graph), then one optimizer step runs. The KL weight ramps
with the global batch index. Single-threaded and fully seeded, so a
repeated run produces bit-identical parameters.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from .autodiff import Graph, Tensor
from .affection import kl_anneal
from .data import Corpus, prepare_batch
from .model import EmpathyModel, ForwardRecord

# Loss weights in catalog order: speaker emotion, listener emotion,
# dialogue act, CVAE objective, bag of words.
DEFAULT_GAMMA = (0.03, 0.1, 0.05, 1.0, 0.1)
GAMMA_PART_NAMES = ("l_s", "l_l", "l_act", "l_cvae", "l_bow")


@dataclass
class TrainConfig:
    gamma: tuple = DEFAULT_GAMMA
    batch_size: int = 16
    epochs: int = 1
    max_steps: int | None = None
    learning_rate: float = 1e-4
    anneal_batches: int = 15000
    seed: int = 0
    eval_every: int = 0          # batches between validation passes; 0 = per epoch
    no_cog: bool = False
    no_aff: bool = False
    no_beh: bool = False

    def __post_init__(self):
        self.gamma = tuple(self.gamma)
        if len(self.gamma) != 5:
            raise ValueError(f"gamma needs 5 weights, got {len(self.gamma)}")
        if any(g < 0 for g in self.gamma):
            raise ValueError("gamma weights must be non-negative")

    def to_dict(self):
        return asdict(self)


class TrainingDiverged(RuntimeError):
    def __init__(self, batch_index: int):
        super().__init__(f"non-finite loss at batch {batch_index}")
        self.batch_index = batch_index


def total_loss(record: ForwardRecord, gamma=DEFAULT_GAMMA) -> Tensor:
    """Weighted sum of the loss parts present on the record.

    Parts removed by an ablation are skipped entirely rather than zeroed,
    so the objective matches the ablated architecture exactly.
    """
    from . import autodiff as ad
    total = None
    for weight, name in zip(gamma, GAMMA_PART_NAMES):
        part = record.losses.get(name)
        if part is None:
            continue
        term = ad.scale(part, weight)
        total = term if total is None else ad.add(total, term)
    return total


class Adam:
    """Plain Adam over an ordered parameter list."""

    def __init__(self, params: list[Tensor], lr: float = 1e-4,
                 betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in params]
        self.v = [np.zeros_like(p.data) for p in params]

    def step(self):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for i, p in enumerate(self.params):
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            self.m[i] = b1 * self.m[i] + (1 - b1) * g
            self.v[i] = b2 * self.v[i] + (1 - b2) * g * g
            m_hat = self.m[i] / (1 - b1 ** self.t)
            v_hat = self.v[i] / (1 - b2 ** self.t)
            p.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def zero_grad(self):
        for p in self.params:
            p.grad = None


@dataclass
class TrainHistory:
    batch_losses: list[float] = field(default_factory=list)
    part_logs: list[dict] = field(default_factory=list)
    validations: list[tuple[int, float]] = field(default_factory=list)
    best_validation: float = float("inf")
    best_state: dict | None = None


def parameter_checksum(model: EmpathyModel) -> float:
    return float(sum(np.sum(p.data) for p in model.parameters()))


def train(model: EmpathyModel, corpus: Corpus, path_cache: dict,
          config: TrainConfig, on_batch=None) -> TrainHistory:
    """Run the optimizer over the training split.

    path_cache maps dialogue id to its knowledge record (may be empty).
    Raises TrainingDiverged with the offending batch index if the loss
    stops being finite.
    """
    rng = np.random.default_rng(config.seed)
    optimizer = Adam(model.parameters(), lr=config.learning_rate)
    history = TrainHistory()
    vocab = corpus.vocab
    merge = model.config.ablate_aff
    prepared = [prepare_batch(d, vocab, merge_speaker_stream=merge)
                for d in corpus.train]

    def validate(batch_index):
        if not corpus.valid:
            return
        from .metrics import validation_ppl
        ppl = validation_ppl(model, corpus, path_cache)
        history.validations.append((batch_index, ppl))
        if ppl < history.best_validation:
            history.best_validation = ppl
            history.best_state = {name: p.data.copy()
                                  for name, p in model.named_parameters()}

    batch_index = 0
    step_budget = config.max_steps
    for _ in range(config.epochs):
        order = rng.permutation(len(prepared))
        for start in range(0, len(order), config.batch_size):
            if step_budget is not None and batch_index >= step_budget:
                validate(batch_index)
                return history
            chunk = order[start:start + config.batch_size]
            alpha = kl_anneal(batch_index, config.anneal_batches)
            optimizer.zero_grad()
            batch_total = 0.0
            part_sums: dict[str, float] = {}
            for idx in chunk:
                batch = prepared[idx]
                record_know = path_cache.get(batch.dialogue_id)
                with Graph() as graph:
                    rec = model.forward(batch, record_know, vocab, mode="train",
                                        alpha=alpha,
                                        sampler=lambda dim: rng.standard_normal(dim))
                    loss = total_loss(rec, config.gamma)
                    graph.backward(loss)
                value = loss.item()
                if not np.isfinite(value):
                    raise TrainingDiverged(batch_index)
                batch_total += value
                for name, part in rec.losses.items():
                    part_sums[name] = part_sums.get(name, 0.0) + part.item()
                if on_batch is not None:
                    on_batch(batch_index, rec)
            n = len(chunk)
            optimizer.step()
            history.batch_losses.append(batch_total / n)
            history.part_logs.append({k: v / n for k, v in part_sums.items()})
            batch_index += 1
            if config.eval_every and batch_index % config.eval_every == 0:
                validate(batch_index)
        if not config.eval_every:
            validate(batch_index)
    return history


def restore_best(model: EmpathyModel, history: TrainHistory) -> bool:
    """Copy the best-validation snapshot back into the model, if any."""
    if history.best_state is None:
        return False
    for name, p in model.named_parameters():
        p.data[...] = history.best_state[name]
    return True
