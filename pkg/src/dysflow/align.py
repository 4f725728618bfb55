"""Word-level alignment, WER with error-type breakdown, and aggregation.

The aligner is a minimum-edit-distance DP with unit costs. Among
cost-optimal paths it deterministically prefers fewer insertions, then
fewer substitutions (for a fixed length difference the insertion count
pins the whole decomposition, so this is a total tie-break).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from . import stats


@dataclass(frozen=True)
class WerReport:
    substitutions: int
    insertions: int
    deletions: int
    correct: int
    ref_len: int

    def __post_init__(self):
        if self.ref_len <= 0:
            raise ValueError("ref_len must be positive")
        if self.correct + self.substitutions + self.deletions != self.ref_len:
            raise ValueError("correct + substitutions + deletions must equal ref_len")

    @property
    def errors(self) -> int:
        return self.substitutions + self.insertions + self.deletions

    @property
    def wer(self) -> float:
        return self.errors / self.ref_len


# One aligned step: op in {"match", "sub", "ins", "del"}; absent side is None.
AlignStep = tuple[str, str | None, str | None]


def align(ref: Sequence[str], hyp: Sequence[str]) -> WerReport:
    report, _ = align_path(ref, hyp)
    return report


def align_path(ref: Sequence[str], hyp: Sequence[str]) -> tuple[WerReport, list[AlignStep]]:
    if not ref:
        raise ValueError("reference must be non-empty")
    n, m = len(ref), len(hyp)

    # dp[i][j] = (edits, insertions, substitutions) for ref[:i] vs hyp[:j],
    # minimized lexicographically.
    dp = [[(0, 0, 0)] * (m + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        dp[i][0] = (i, 0, 0)
    for j in range(1, m + 1):
        dp[0][j] = (j, j, 0)
    for i in range(1, n + 1):
        row = dp[i]
        prev = dp[i - 1]
        for j in range(1, m + 1):
            if ref[i - 1] == hyp[j - 1]:
                c, ins, sub = prev[j - 1]
                diag = (c, ins, sub)
            else:
                c, ins, sub = prev[j - 1]
                diag = (c + 1, ins, sub + 1)
            c, ins, sub = prev[j]
            dele = (c + 1, ins, sub)
            c, ins, sub = row[j - 1]
            inse = (c + 1, ins + 1, sub)
            row[j] = min(diag, dele, inse)

    # Backtrack, preferring diagonal, then deletion, then insertion.
    steps: list[AlignStep] = []
    i, j = n, m
    while i > 0 or j > 0:
        cur = dp[i][j]
        if i > 0 and j > 0:
            c, ins, sub = dp[i - 1][j - 1]
            if ref[i - 1] == hyp[j - 1] and (c, ins, sub) == cur:
                steps.append(("match", ref[i - 1], hyp[j - 1]))
                i, j = i - 1, j - 1
                continue
            if ref[i - 1] != hyp[j - 1] and (c + 1, ins, sub + 1) == cur:
                steps.append(("sub", ref[i - 1], hyp[j - 1]))
                i, j = i - 1, j - 1
                continue
        if i > 0:
            c, ins, sub = dp[i - 1][j]
            if (c + 1, ins, sub) == cur:
                steps.append(("del", ref[i - 1], None))
                i -= 1
                continue
        steps.append(("ins", None, hyp[j - 1]))
        j -= 1
    steps.reverse()

    cost, insertions, substitutions = dp[n][m]
    deletions = cost - insertions - substitutions
    report = WerReport(
        substitutions=substitutions,
        insertions=insertions,
        deletions=deletions,
        correct=n - substitutions - deletions,
        ref_len=n,
    )
    return report, steps


@dataclass(frozen=True)
class AggregateReport:
    mean_wer: float
    sd_wer: float
    median_wer: float
    iqr_wer: float
    thresholded: dict  # {"thr10": ..., "thr15": ...}
    corpus_wer: float
    ins_share: float
    sub_share: float
    del_share: float
    n_participants: int
    n_utterances: int

    def to_dict(self) -> dict:
        out = {
            "mean_wer": self.mean_wer,
            "sd_wer": self.sd_wer,
            "median_wer": self.median_wer,
            "iqr_wer": self.iqr_wer,
            "corpus_wer": self.corpus_wer,
            "ins_share": self.ins_share,
            "sub_share": self.sub_share,
            "del_share": self.del_share,
            "n_participants": self.n_participants,
            "n_utterances": self.n_utterances,
        }
        out.update(self.thresholded)
        return out


def aggregate(
    by_participant: Mapping[str, Iterable[WerReport]],
    thresholds: Sequence[float] = (0.10, 0.15),
    pooled_thresholds: bool = False,
) -> AggregateReport:
    """Summarize WER reports grouped by participant.

    A participant's WER pools their errors over their reference lengths;
    mean/SD/median/IQR are taken over those participant WERs (population
    SD, interpolated quartiles). Thresholded WER is the fraction of a
    participant's utterances strictly below each threshold, averaged
    across participants; ``pooled_thresholds`` switches to the fraction
    over all utterances regardless of speaker.
    """
    groups = {pid: list(reports) for pid, reports in by_participant.items()}
    if not groups or any(not reports for reports in groups.values()):
        raise ValueError("every participant needs at least one report")

    participant_wers = []
    per_thr_fracs: dict[float, list[float]] = {t: [] for t in thresholds}
    tot_err = tot_len = tot_i = tot_s = tot_d = n_utts = 0
    for pid in sorted(groups):
        reports = groups[pid]
        errs = sum(r.errors for r in reports)
        length = sum(r.ref_len for r in reports)
        participant_wers.append(errs / length)
        for t in thresholds:
            below = sum(1 for r in reports if r.wer < t)
            per_thr_fracs[t].append(below / len(reports))
        tot_err += errs
        tot_len += length
        tot_i += sum(r.insertions for r in reports)
        tot_s += sum(r.substitutions for r in reports)
        tot_d += sum(r.deletions for r in reports)
        n_utts += len(reports)

    if pooled_thresholds:
        all_reports = [r for pid in sorted(groups) for r in groups[pid]]
        thr = {
            _thr_key(t): sum(1 for r in all_reports if r.wer < t) / len(all_reports)
            for t in thresholds
        }
    else:
        thr = {_thr_key(t): stats.mean(per_thr_fracs[t]) for t in thresholds}

    desc = stats.descriptive(participant_wers)
    total_errors = tot_i + tot_s + tot_d
    return AggregateReport(
        mean_wer=desc["mean"],
        sd_wer=desc["sd"],
        median_wer=desc["median"],
        iqr_wer=desc["iqr"],
        thresholded=thr,
        corpus_wer=tot_err / tot_len,
        ins_share=tot_i / total_errors if total_errors else 0.0,
        sub_share=tot_s / total_errors if total_errors else 0.0,
        del_share=tot_d / total_errors if total_errors else 0.0,
        n_participants=len(groups),
        n_utterances=n_utts,
    )


def _thr_key(threshold: float) -> str:
    return f"thr{round(threshold * 100):d}"
