"""Order-n count-based language model with add-k smoothing.

Supplies sequence log-probabilities to the decoder and the
adjacent-duplicate likelihood test to the transcript refiner. Counts are
exact; conditionals are smoothed add-k over the full vocabulary, with the
denominator taken as the history's continuation total so that every
conditional distribution sums to one (including end-of-sentence
histories).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import IO, Iterable, Sequence

BOS = "<s>"
EOS = "</s>"
UNK = "<unk>"


class ModelFormatError(ValueError):
    """Raised when a serialized model file is malformed."""


@dataclass(frozen=True)
class NGramModel:
    order: int
    add_k: float
    vocab: frozenset[str]
    counts: dict  # tuple[str, ...] -> int, for every k-gram with k <= order
    _context_totals: dict = field(repr=False, compare=False, default_factory=dict)

    def __post_init__(self):
        totals: dict[tuple[str, ...], int] = {}
        for gram, c in self.counts.items():
            if len(gram) == self.order and self.order >= 1:
                hist = gram[:-1]
                totals[hist] = totals.get(hist, 0) + c
        object.__setattr__(self, "_context_totals", totals)

    def _history(self, tokens: Sequence[str]) -> tuple[str, ...]:
        ctx = [BOS] * (self.order - 1) + [self.map_token(t) for t in tokens]
        return tuple(ctx[len(ctx) - (self.order - 1):]) if self.order > 1 else ()

    def map_token(self, token: str) -> str:
        return token if token in self.vocab else UNK

    def cond_prob(self, word: str, history: Sequence[str] = ()) -> float:
        """P(word | history) with history the preceding raw tokens."""
        hist = self._history(history)
        w = self.map_token(word)
        num = self.counts.get(hist + (w,), 0) + self.add_k
        den = self._context_totals.get(hist, 0) + self.add_k * len(self.vocab)
        return num / den

    def logprob_seq(self, tokens: Sequence[str]) -> float:
        """Natural-log probability of a sentence, including the </s> transition."""
        logp = 0.0
        seen: list[str] = []
        for tok in tokens:
            logp += math.log(self.cond_prob(tok, seen))
            seen.append(tok)
        logp += math.log(self.cond_prob(EOS, seen))
        return logp

    def adjacent_likelihood(
        self,
        left_context: Sequence[str],
        s1: Sequence[str],
        s2: Sequence[str],
    ) -> float:
        """Probability that s2 immediately follows left_context + s1.

        Used by the refiner with s1 == s2 to score an adjacent duplicate;
        an empty s2 scores 1.0.
        """
        seen = list(left_context) + list(s1)
        logp = 0.0
        for tok in s2:
            logp += math.log(self.cond_prob(tok, seen))
            seen.append(tok)
        return math.exp(logp)


def train(corpus: Iterable[Sequence[str]], order: int, add_k: float = 0.1) -> NGramModel:
    """Count k-grams (k <= order) over <s>-padded sentences."""
    if order < 1:
        raise ValueError(f"order must be >= 1, got {order}")
    if add_k <= 0:
        raise ValueError(f"add_k must be > 0, got {add_k}")
    sentences = [list(s) for s in corpus]
    if not sentences:
        raise ValueError("training corpus is empty")

    counts: dict[tuple[str, ...], int] = {}
    for sent in sentences:
        padded = [BOS] * (order - 1) + sent + [EOS]
        for k in range(1, order + 1):
            for i in range(len(padded) - k + 1):
                gram = tuple(padded[i : i + k])
                counts[gram] = counts.get(gram, 0) + 1

    vocab = {g[0] for g in counts if len(g) == 1}
    vocab.update((BOS, EOS, UNK))
    counts.setdefault((UNK,), 0)
    counts.setdefault((BOS,), 0)
    counts.setdefault((EOS,), 0)
    return NGramModel(order=order, add_k=add_k, vocab=frozenset(vocab), counts=counts)


def save(model: NGramModel, dest: IO[str]) -> None:
    """Write the model as plain-text count sections (\\data\\ ... \\end\\)."""
    by_len: dict[int, list[tuple[tuple[str, ...], int]]] = {}
    for gram, c in model.counts.items():
        by_len.setdefault(len(gram), []).append((gram, c))

    dest.write("\\data\\\n")
    dest.write(f"order {model.order}\n")
    dest.write(f"add_k {model.add_k!r}\n")
    for k in range(1, model.order + 1):
        dest.write(f"ngram {k}={len(by_len.get(k, []))}\n")
    for k in range(1, model.order + 1):
        dest.write(f"\n\\{k}-grams:\n")
        for gram, c in sorted(by_len.get(k, [])):
            dest.write(f"{c} {' '.join(gram)}\n")
    dest.write("\n\\end\\\n")


def load(source: IO[str] | str) -> NGramModel:
    """Parse a model written by ``save``; inverse up to equality."""
    text = source if isinstance(source, str) else source.read()
    lines = text.splitlines()
    pos = 0

    def next_content() -> str | None:
        nonlocal pos
        while pos < len(lines):
            line = lines[pos]
            pos += 1
            if line.strip():
                return line.strip()
        return None

    if next_content() != "\\data\\":
        raise ModelFormatError("missing \\data\\ header")
    order = add_k = None
    declared: dict[int, int] = {}
    line = next_content()
    while line is not None and not line.startswith("\\"):
        key, _, value = line.partition(" ")
        try:
            if key == "order":
                order = int(value)
            elif key == "add_k":
                add_k = float(value)
            elif key == "ngram":
                k_str, _, n_str = value.partition("=")
                declared[int(k_str)] = int(n_str)
            else:
                raise ValueError
        except ValueError:
            raise ModelFormatError(f"bad header line {line!r}") from None
        line = next_content()
    if order is None or order < 1 or add_k is None or add_k <= 0:
        raise ModelFormatError("header must declare order >= 1 and add_k > 0")

    counts: dict[tuple[str, ...], int] = {}
    saw_end = False
    while line is not None:
        if line == "\\end\\":
            saw_end = True
            break
        if not (line.startswith("\\") and line.endswith("-grams:")):
            raise ModelFormatError(f"unexpected section header {line!r}")
        try:
            k = int(line[1:].split("-")[0])
        except ValueError:
            raise ModelFormatError(f"bad section header {line!r}") from None
        for _ in range(declared.get(k, 0)):
            entry = next_content()
            if entry is None or entry.startswith("\\"):
                raise ModelFormatError(f"section \\{k}-grams: ended early")
            count_str, *gram = entry.split()
            if not count_str.lstrip("-").isdigit():
                raise ModelFormatError(f"non-integer count in {entry!r}")
            count = int(count_str)
            if count < 0 or len(gram) != k:
                raise ModelFormatError(f"bad {k}-gram entry {entry!r}")
            counts[tuple(gram)] = count
        line = next_content()
    if not saw_end:
        raise ModelFormatError("truncated file: missing \\end\\")

    vocab = {g[0] for g in counts if len(g) == 1}
    vocab.update((BOS, EOS, UNK))
    counts.setdefault((UNK,), 0)
    counts.setdefault((BOS,), 0)
    counts.setdefault((EOS,), 0)
    return NGramModel(order=order, add_k=add_k, vocab=frozenset(vocab), counts=counts)


def save_to_path(model: NGramModel, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        save(model, fh)


def load_from_path(path) -> NGramModel:
    with open(path, "r", encoding="utf-8") as fh:
        return load(fh)
