"""Utterance data model, tokenization, JSONL ingestion, and the seeded
dysfluency injector that turns fluent command phrases into paired
intended/articulated utterances with ground-truth event annotations.

All types are immutable after construction and safe to share across
threads.
"""

from __future__ import annotations

import enum
import json
import random
import statistics
from dataclasses import dataclass, replace
from typing import IO, Iterable

from .seeding import derive_seed

_STRIP_PUNCT = '.,!?;:"'


class DysfluencyKind(enum.Enum):
    PART_WORD_REPETITION = "part_word_repetition"
    WHOLE_WORD_REPETITION = "whole_word_repetition"
    PROLONGATION = "prolongation"
    BLOCK = "block"
    INTERJECTION = "interjection"


class Severity(enum.Enum):
    MILD = "mild"
    MODERATE = "moderate"
    SEVERE = "severe"


class CorpusError(ValueError):
    """Raised for malformed corpus files; carries line number and field path."""

    def __init__(self, message: str, line: int | None = None, field: str | None = None):
        self.line = line
        self.field = field
        prefix = ""
        if line is not None:
            prefix += f"line {line}: "
        if field:
            prefix += f"{field}: "
        super().__init__(prefix + message)


@dataclass(frozen=True)
class DysfluencyEvent:
    kind: DysfluencyKind
    start_ms: int
    end_ms: int
    surface: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "surface", tuple(self.surface))
        if self.start_ms < 0:
            raise ValueError(f"start_ms must be non-negative, got {self.start_ms}")
        if self.end_ms < self.start_ms:
            raise ValueError(f"end_ms {self.end_ms} precedes start_ms {self.start_ms}")


@dataclass(frozen=True)
class Utterance:
    id: str
    participant_id: str
    severity: Severity
    intended: tuple[str, ...]
    articulated: tuple[str, ...]
    events: tuple[DysfluencyEvent, ...]
    duration_ms: int

    def __post_init__(self):
        object.__setattr__(self, "intended", tuple(self.intended))
        object.__setattr__(self, "articulated", tuple(self.articulated))
        object.__setattr__(self, "events", tuple(self.events))
        _validate_utterance(self)

    def events_of(self, kind: DysfluencyKind) -> tuple[DysfluencyEvent, ...]:
        return tuple(e for e in self.events if e.kind is kind)

    def has(self, kind: DysfluencyKind) -> bool:
        return any(e.kind is kind for e in self.events)


def _validate_utterance(u: Utterance) -> None:
    if not u.intended:
        raise ValueError("intended must be non-empty")
    if not u.articulated:
        raise ValueError("articulated must be non-empty")
    if u.duration_ms <= 0:
        raise ValueError(f"duration_ms must be positive, got {u.duration_ms}")
    for name, toks in (("intended", u.intended), ("articulated", u.articulated)):
        for t in toks:
            if not t or t != t.lower() or any(c.isspace() for c in t):
                raise ValueError(f"{name} token {t!r} must be lowercase with no whitespace")
    last_start = 0
    for i, e in enumerate(u.events):
        if e.start_ms < last_start:
            raise ValueError(f"events[{i}] not sorted by start_ms")
        last_start = e.start_ms
        if e.end_ms > u.duration_ms:
            raise ValueError(f"events[{i}] extends past utterance duration")
        if e.kind is not DysfluencyKind.BLOCK and e.surface:
            if not _is_contiguous_subsequence(e.surface, u.articulated):
                raise ValueError(
                    f"events[{i}] surface {list(e.surface)} not contiguous in articulated"
                )


def _is_contiguous_subsequence(needle: tuple[str, ...], haystack: tuple[str, ...]) -> bool:
    n = len(needle)
    return any(haystack[j : j + n] == needle for j in range(len(haystack) - n + 1))


@dataclass(frozen=True)
class InjectionConfig:
    """Per-word corruption probabilities and the synthetic timing model."""

    part_word_rate: float = 0.0
    whole_word_rate: float = 0.0
    prolongation_rate: float = 0.0
    block_rate: float = 0.0
    interjection_rate: float = 0.0
    max_repeats: int = 2
    interjection_lexicon: tuple[str, ...] = ("um", "uh")
    rng_seed: int = 0
    word_duration_ms: int = 240
    block_duration_ms: int = 900

    def __post_init__(self):
        object.__setattr__(self, "interjection_lexicon", tuple(self.interjection_lexicon))
        for name in ("part_word_rate", "whole_word_rate", "prolongation_rate",
                     "block_rate", "interjection_rate"):
            rate = getattr(self, name)
            if not 0.0 <= rate <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {rate}")
        if self.max_repeats < 1:
            raise ValueError(f"max_repeats must be >= 1, got {self.max_repeats}")
        if self.interjection_rate > 0 and not self.interjection_lexicon:
            raise ValueError("interjection_lexicon must be non-empty when interjection_rate > 0")
        if self.word_duration_ms <= 0 or self.block_duration_ms <= 0:
            raise ValueError("durations must be positive")

    def rate_of(self, kind: DysfluencyKind) -> float:
        return {
            DysfluencyKind.PART_WORD_REPETITION: self.part_word_rate,
            DysfluencyKind.WHOLE_WORD_REPETITION: self.whole_word_rate,
            DysfluencyKind.PROLONGATION: self.prolongation_rate,
            DysfluencyKind.BLOCK: self.block_rate,
            DysfluencyKind.INTERJECTION: self.interjection_rate,
        }[kind]


# On six-word commands these per-word rates yield utterance prevalences of
# roughly 0.59 part-word repetition, 0.39 block, 0.37 prolongation,
# 0.06 whole-word repetition, 0.03 interjection.
MODERATE_RATES = dict(
    part_word_rate=0.14,
    whole_word_rate=0.01,
    prolongation_rate=0.074,
    block_rate=0.078,
    interjection_rate=0.005,
)


@dataclass(frozen=True)
class CorpusStats:
    prevalence: dict
    n_utterances: int
    median_intended_len: float


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace, strip edge punctuation per token.

    Apostrophes and hyphens survive, so part-word fragments like "be-"
    keep their trailing hyphen. Empty tokens are dropped.
    """
    out = []
    for raw in text.lower().split():
        tok = raw.strip(_STRIP_PUNCT)
        if tok:
            out.append(tok)
    return out


def inject_dysfluencies(
    intended: list[str] | tuple[str, ...], cfg: InjectionConfig
) -> tuple[list[str], list[DysfluencyEvent]]:
    """Corrupt a fluent token sequence with seeded synthetic dysfluencies.

    Per intended word, each kind fires independently at its configured
    rate. Insertions are placed before the word in a fixed order
    (interjection, block gap, part-word fragments, whole-word copies),
    and a prolongation rewrites the word itself by tripling its first
    letter. Every inserted token belongs to exactly one event, so the
    intended sequence is recoverable (see ``recover_intended``).
    """
    if not intended:
        raise ValueError("intended must be non-empty")
    if cfg.max_repeats < 1:
        raise ValueError(f"max_repeats must be >= 1, got {cfg.max_repeats}")

    rng = random.Random(cfg.rng_seed)
    articulated: list[str] = []
    events: list[DysfluencyEvent] = []
    t = 0

    def emit(token: str) -> tuple[int, int]:
        nonlocal t
        articulated.append(token)
        span = (t, t + cfg.word_duration_ms)
        t += cfg.word_duration_ms
        return span

    kind_order = (
        DysfluencyKind.PART_WORD_REPETITION,
        DysfluencyKind.WHOLE_WORD_REPETITION,
        DysfluencyKind.PROLONGATION,
        DysfluencyKind.BLOCK,
        DysfluencyKind.INTERJECTION,
    )
    for word in intended:
        fires = {k: rng.random() < cfg.rate_of(k) for k in kind_order}

        if fires[DysfluencyKind.INTERJECTION]:
            tok = rng.choice(cfg.interjection_lexicon)
            start, end = emit(tok)
            events.append(DysfluencyEvent(DysfluencyKind.INTERJECTION, start, end, (tok,)))

        if fires[DysfluencyKind.BLOCK]:
            start = t
            t += cfg.block_duration_ms
            events.append(DysfluencyEvent(DysfluencyKind.BLOCK, start, t, ()))

        if fires[DysfluencyKind.PART_WORD_REPETITION]:
            n_letters = min(rng.randint(1, 2), max(1, len(word) - 1))
            frag = word[:n_letters] + "-"
            k = rng.randint(1, cfg.max_repeats)
            start = t
            end = start
            for _ in range(k):
                _, end = emit(frag)
            events.append(
                DysfluencyEvent(DysfluencyKind.PART_WORD_REPETITION, start, end, (frag,) * k)
            )

        if fires[DysfluencyKind.WHOLE_WORD_REPETITION]:
            k = rng.randint(1, cfg.max_repeats)
            start = t
            end = start
            for _ in range(k):
                _, end = emit(word)
            events.append(
                DysfluencyEvent(DysfluencyKind.WHOLE_WORD_REPETITION, start, end, (word,) * k)
            )

        if fires[DysfluencyKind.PROLONGATION]:
            prolonged = word[0] * 3 + word[1:]
            start, end = emit(prolonged)
            events.append(
                DysfluencyEvent(DysfluencyKind.PROLONGATION, start, end, (prolonged,))
            )
        else:
            emit(word)

    return articulated, events


def utterance_duration_ms(articulated_len: int, n_blocks: int, cfg: InjectionConfig) -> int:
    return articulated_len * cfg.word_duration_ms + n_blocks * cfg.block_duration_ms


def recover_intended(u: Utterance) -> list[str]:
    """Invert the injector: strip event-attributed tokens, un-triple prolongations.

    Relies on the generator's uniform timing model (equal word slots,
    block gaps from events) to map event times back onto token indices.
    """
    blocks = sorted(
        (e for e in u.events if e.kind is DysfluencyKind.BLOCK), key=lambda e: e.start_ms
    )
    block_total = sum(e.end_ms - e.start_ms for e in blocks)
    speech_ms = u.duration_ms - block_total
    if speech_ms <= 0 or speech_ms % len(u.articulated) != 0:
        raise ValueError("utterance timing is not on the uniform generator grid")
    word_ms = speech_ms // len(u.articulated)

    starts: dict[int, int] = {}
    t = 0
    bi = 0
    for idx in range(len(u.articulated)):
        while bi < len(blocks) and blocks[bi].start_ms == t:
            t = blocks[bi].end_ms
            bi += 1
        starts[t] = idx
        t += word_ms

    drop: set[int] = set()
    restore: dict[int, str] = {}
    for e in u.events:
        if e.kind is DysfluencyKind.BLOCK:
            continue
        if e.start_ms not in starts:
            raise ValueError(f"event at {e.start_ms} ms does not align to a token slot")
        first = starts[e.start_ms]
        if e.kind is DysfluencyKind.PROLONGATION:
            restore[first] = e.surface[0][2:]
        else:
            drop.update(range(first, first + len(e.surface)))

    out = []
    for idx, tok in enumerate(u.articulated):
        if idx in drop:
            continue
        out.append(restore.get(idx, tok))
    return out


def generate_corpus(
    n_utterances: int,
    cfg: InjectionConfig,
    phrases: Iterable[str],
    n_participants: int = 8,
    severities: Iterable[Severity] = (Severity.MODERATE,),
    seed: int = 0,
) -> list[Utterance]:
    """Sample intended phrases and corrupt each one with a derived seed.

    Participants are assigned round-robin and carry a severity label
    cycled from ``severities``; the label does not change injection rates.
    """
    if n_utterances < 1:
        raise ValueError("n_utterances must be >= 1")
    if n_participants < 1:
        raise ValueError("n_participants must be >= 1")
    phrase_list = [tuple(tokenize(p)) for p in phrases]
    if not phrase_list or any(not p for p in phrase_list):
        raise ValueError("phrases must be non-empty")
    severity_cycle = list(severities)
    if not severity_cycle:
        raise ValueError("severities must be non-empty")

    picker = random.Random(derive_seed(seed, "phrase-choice"))
    utts = []
    for i in range(n_utterances):
        intended = picker.choice(phrase_list)
        ucfg = replace(cfg, rng_seed=derive_seed(seed, "inject", i))
        articulated, events = inject_dysfluencies(list(intended), ucfg)
        n_blocks = sum(1 for e in events if e.kind is DysfluencyKind.BLOCK)
        pid = i % n_participants
        utts.append(
            Utterance(
                id=f"u{i:05d}",
                participant_id=f"p{pid:02d}",
                severity=severity_cycle[pid % len(severity_cycle)],
                intended=intended,
                articulated=tuple(articulated),
                events=tuple(events),
                duration_ms=utterance_duration_ms(len(articulated), n_blocks, ucfg),
            )
        )
    return utts


def corpus_stats(utts: list[Utterance]) -> CorpusStats:
    if not utts:
        raise ValueError("corpus is empty")
    prevalence = {}
    for kind in DysfluencyKind:
        hit = sum(1 for u in utts if u.has(kind))
        prevalence[kind] = hit / len(utts)
    return CorpusStats(
        prevalence=prevalence,
        n_utterances=len(utts),
        median_intended_len=statistics.median(len(u.intended) for u in utts),
    )


# --- JSONL serialization -------------------------------------------------

def utterance_to_dict(u: Utterance) -> dict:
    return {
        "id": u.id,
        "participant_id": u.participant_id,
        "severity": u.severity.value,
        "intended": " ".join(u.intended),
        "articulated": " ".join(u.articulated),
        "duration_ms": u.duration_ms,
        "events": [
            {
                "kind": e.kind.value,
                "start_ms": e.start_ms,
                "end_ms": e.end_ms,
                "surface": " ".join(e.surface),
            }
            for e in u.events
        ],
    }


def serialize_corpus(utts: Iterable[Utterance]) -> str:
    return "".join(json.dumps(utterance_to_dict(u), sort_keys=True) + "\n" for u in utts)


_KIND_BY_NAME = {k.value: k for k in DysfluencyKind}
_SEVERITY_BY_NAME = {s.value: s for s in Severity}


def _require(obj: dict, key: str, typ, line: int, path: str = ""):
    field = f"{path}{key}"
    if key not in obj:
        raise CorpusError("missing field", line, field)
    val = obj[key]
    if typ is int and isinstance(val, bool) or not isinstance(val, typ):
        raise CorpusError(f"expected {typ.__name__}, got {type(val).__name__}", line, field)
    return val


def parse_corpus(source: IO | str | bytes) -> list[Utterance]:
    """Parse JSONL utterances; any bad line aborts the whole file."""
    if isinstance(source, (str, bytes)):
        data = source
    else:
        data = source.read()
    if isinstance(data, bytes):
        data = data.decode("utf-8")

    utts = []
    for line_no, line in enumerate(data.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CorpusError(f"malformed JSON ({exc.msg})", line_no) from exc
        if not isinstance(obj, dict):
            raise CorpusError("expected a JSON object", line_no)

        uid = _require(obj, "id", str, line_no)
        pid = _require(obj, "participant_id", str, line_no)
        sev_name = _require(obj, "severity", str, line_no)
        if sev_name not in _SEVERITY_BY_NAME:
            raise CorpusError(f"unknown severity {sev_name!r}", line_no, "severity")
        intended = tuple(_require(obj, "intended", str, line_no).split())
        articulated = tuple(_require(obj, "articulated", str, line_no).split())
        duration = _require(obj, "duration_ms", int, line_no)
        raw_events = _require(obj, "events", list, line_no)

        events = []
        for i, ev in enumerate(raw_events):
            path = f"events[{i}]."
            if not isinstance(ev, dict):
                raise CorpusError("expected a JSON object", line_no, f"events[{i}]")
            kind_name = _require(ev, "kind", str, line_no, path)
            if kind_name not in _KIND_BY_NAME:
                raise CorpusError(f"unknown dysfluency kind {kind_name!r}", line_no, path + "kind")
            start = _require(ev, "start_ms", int, line_no, path)
            end = _require(ev, "end_ms", int, line_no, path)
            surface = tuple(_require(ev, "surface", str, line_no, path).split())
            if start < 0:
                raise CorpusError("start_ms must be non-negative", line_no, path + "start_ms")
            if end < start:
                raise CorpusError("end_ms precedes start_ms", line_no, path + "end_ms")
            events.append(DysfluencyEvent(_KIND_BY_NAME[kind_name], start, end, surface))

        try:
            utts.append(
                Utterance(
                    id=uid,
                    participant_id=pid,
                    severity=_SEVERITY_BY_NAME[sev_name],
                    intended=intended,
                    articulated=articulated,
                    events=tuple(events),
                    duration_ms=duration,
                )
            )
        except ValueError as exc:
            raise CorpusError(str(exc), line_no) from exc
    return utts
