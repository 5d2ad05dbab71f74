"""Character-level autoregressive model over a context-lookup table.

The model conditions each next-character distribution on the previous
``context_size`` characters through a logit table, which keeps the
training objective fully auditable: the loss is the summed negative
log-likelihood of response characters given the instruction and the
response prefix, and each context's logits form an independent convex
cross-entropy subproblem.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

BOS = "\x00"


@dataclass(frozen=True)
class Position:
    context: str
    target_index: int


class CharTableModel:
    def __init__(
        self,
        vocab: list[str],
        context_size: int = 2,
        init_scale: float = 0.0,
        seed: int = 0,
    ):
        if context_size < 1:
            raise ValueError("context_size must be >= 1")
        if BOS in vocab:
            raise ValueError("vocabulary may not contain the padding character")
        self.vocab = list(vocab)
        self.index = {ch: i for i, ch in enumerate(self.vocab)}
        self.context_size = context_size
        self.init_scale = init_scale
        self._rng = np.random.default_rng(seed)
        self.table: dict[str, np.ndarray] = {}

    @property
    def vocab_size(self) -> int:
        return len(self.vocab)

    def ensure_context(self, context: str) -> np.ndarray:
        logits = self.table.get(context)
        if logits is None:
            if self.init_scale > 0:
                logits = self._rng.normal(0.0, self.init_scale, self.vocab_size)
            else:
                logits = np.zeros(self.vocab_size)
            self.table[context] = logits
        return logits

    def logits_for(self, context: str) -> np.ndarray:
        """Read-only lookup; unseen contexts behave as uniform."""
        logits = self.table.get(context)
        if logits is None:
            return np.zeros(self.vocab_size)
        return logits

    def response_positions(self, instruction: str, response: str) -> list[Position]:
        """(context, target) pairs for every response character.

        Instruction characters are never targets; they enter only as
        conditioning context, which is how the prompt stays masked out of
        the loss.
        """
        sequence = instruction + response
        padded = BOS * self.context_size + sequence
        positions = []
        for t in range(len(instruction), len(sequence)):
            context = padded[t : t + self.context_size]
            target = sequence[t]
            if target not in self.index:
                raise KeyError(f"character {target!r} is not in the vocabulary")
            positions.append(Position(context=context, target_index=self.index[target]))
        return positions

    def all_positions(self, instruction: str, response: str) -> list[Position]:
        """(context, target) pairs for every character, prompt included."""
        return self.response_positions("", instruction + response)

    def token_losses(self, positions: list[Position]) -> np.ndarray:
        losses = np.empty(len(positions))
        for i, position in enumerate(positions):
            log_probs = _log_softmax(self.logits_for(position.context))
            losses[i] = -log_probs[position.target_index]
        return losses

    def mean_nll(self, pairs) -> float:
        """Mean response-token NLL over a dataset."""
        total = 0.0
        count = 0
        for pair in pairs:
            losses = self.token_losses(self.response_positions(pair.instruction, pair.response))
            total += float(losses.sum())
            count += len(losses)
        if count == 0:
            raise ValueError("dataset contributes no response tokens")
        return total / count


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max()
    return shifted - np.log(np.exp(shifted).sum())


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = np.exp(logits - logits.max())
    return shifted / shifted.sum()


def loss_and_gradients(
    model: CharTableModel, pairs
) -> tuple[float, dict[str, np.ndarray]]:
    """Mean NLL plus per-context averaged gradients.

    Gradients are averaged within each context rather than over the whole
    batch, so every context's convex subproblem advances at the same rate
    regardless of how often it occurs. Descent on each subproblem is
    descent on the total loss.
    """
    grads: dict[str, np.ndarray] = {}
    counts: dict[str, int] = {}
    total = 0.0
    count = 0
    for pair in pairs:
        for position in model.response_positions(pair.instruction, pair.response):
            logits = model.ensure_context(position.context)
            probs = _softmax(logits)
            total += -float(np.log(probs[position.target_index]))
            count += 1
            grad = grads.get(position.context)
            if grad is None:
                grad = np.zeros(model.vocab_size)
                grads[position.context] = grad
            grad += probs
            grad[position.target_index] -= 1.0
            counts[position.context] = counts.get(position.context, 0) + 1
    if count == 0:
        raise ValueError("dataset contributes no response tokens")
    for context, grad in grads.items():
        grad /= counts[context]
    return total / count, grads
