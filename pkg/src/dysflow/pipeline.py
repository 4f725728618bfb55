"""End-to-end experiment harness: generate (or load) a corpus, fix the
command-language model, tune the decoder on the dev split, then score four
conditions (baseline decode, tuned decode, and both with transcript
refinement) against the intended transcripts on the holdout split.

Everything is driven by an explicit config with explicit seeds, so a
config file maps to one byte-exact report.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

from . import align as align_mod
from . import decoder as decoder_mod
from . import refine as refine_mod
from . import stats as stats_mod
from .corpus import (
    DysfluencyKind,
    InjectionConfig,
    Severity,
    Utterance,
    generate_corpus,
    parse_corpus,
    serialize_corpus,
    tokenize,
)
from .ngram import BOS, EOS, UNK, NGramModel, load_from_path, train
from .phrases import DEFAULT_COMMANDS
from .seeding import derive_seed


class ConfigError(ValueError):
    """Bad experiment configuration (CLI exit code 2)."""


class DataError(ValueError):
    """Bad or missing input data (CLI exit code 3)."""


class PipelineError(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage {stage!r} failed: {cause}")


CONDITIONS = ("baseline", "tuned", "baseline_refined", "combined")


@dataclass(frozen=True)
class SplitSpec:
    dev_fraction: float = 0.5
    holdout_fraction: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.dev_fraction < 1 or not 0 < self.holdout_fraction <= 1:
            raise ConfigError("split fractions must be in (0, 1)")
        if self.dev_fraction + self.holdout_fraction > 1 + 1e-9:
            raise ConfigError("split fractions must sum to at most 1")


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    n_utterances: int = 240
    n_participants: int = 8
    severities: tuple[Severity, ...] = (Severity.MODERATE,)
    phrases: tuple[str, ...] = DEFAULT_COMMANDS
    injection: InjectionConfig = field(default_factory=InjectionConfig)
    corpus_path: str | None = None
    lm_path: str | None = None
    lm_order: int = 3
    lm_add_k: float = 0.1
    refine: refine_mod.RefineConfig = field(default_factory=refine_mod.RefineConfig)
    channel: decoder_mod.LatticeChannel = field(default_factory=decoder_mod.LatticeChannel)
    beam_width: int = 8
    lm_weights: tuple[float, ...] = tuple(decoder_mod.default_grid())
    insertion_penalties: tuple[float, ...] = tuple(decoder_mod.default_grid())
    baseline_lm_weight: float = 1.0
    baseline_insertion_penalty: float = 0.0
    endpointer_rise_horizon_ms: int = 1500
    endpointer_noise_sd: float = 0.05
    endpointer_target: float = 0.03
    endpointer_grid_step: float = 0.005
    endpointer_timeout_ms: int = 5000
    split: SplitSpec = field(default_factory=SplitSpec)


def config_from_dict(raw: dict) -> ExperimentConfig:
    """Build a validated config from parsed JSON; unknown keys are errors."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    raw = dict(raw)
    try:
        kwargs = {}
        if "seed" in raw:
            kwargs["seed"] = int(raw.pop("seed"))
        for key in ("n_utterances", "n_participants", "beam_width"):
            if key in raw:
                kwargs[key] = int(raw.pop(key))
        if "severities" in raw:
            kwargs["severities"] = tuple(Severity(s) for s in raw.pop("severities"))
        if "phrases" in raw:
            phrases = tuple(raw.pop("phrases"))
            if not phrases:
                raise ConfigError("phrases must be non-empty")
            kwargs["phrases"] = phrases
        if "injection" in raw:
            kwargs["injection"] = InjectionConfig(**raw.pop("injection"))
        for key in ("corpus_path", "lm_path"):
            if key in raw:
                kwargs[key] = str(raw.pop(key))
        if "lm" in raw:
            lm = raw.pop("lm")
            kwargs["lm_order"] = int(lm.get("order", 3))
            kwargs["lm_add_k"] = float(lm.get("add_k", 0.1))
        if "refine" in raw:
            ref = dict(raw.pop("refine"))
            if "filler_lexicon" in ref:
                ref["filler_lexicon"] = frozenset(ref["filler_lexicon"])
            if "digit_context" in ref:
                ref["digit_context"] = frozenset(ref["digit_context"])
            kwargs["refine"] = refine_mod.RefineConfig(**ref)
        if "channel" in raw:
            kwargs["channel"] = decoder_mod.LatticeChannel(**raw.pop("channel"))
        if "decoder_grid" in raw:
            grid = raw.pop("decoder_grid")
            kwargs["lm_weights"] = tuple(float(v) for v in grid["lm_weights"])
            kwargs["insertion_penalties"] = tuple(
                float(v) for v in grid["insertion_penalties"]
            )
        for key in ("baseline_lm_weight", "baseline_insertion_penalty"):
            if key in raw:
                kwargs[key] = float(raw.pop(key))
        if "endpointer" in raw:
            ep = raw.pop("endpointer")
            kwargs["endpointer_rise_horizon_ms"] = int(ep.get("rise_horizon_ms", 1500))
            kwargs["endpointer_noise_sd"] = float(ep.get("noise_sd", 0.05))
            kwargs["endpointer_target"] = float(ep.get("target", 0.03))
            kwargs["endpointer_grid_step"] = float(ep.get("grid_step", 0.005))
            kwargs["endpointer_timeout_ms"] = int(ep.get("timeout_ms", 5000))
        if "split" in raw:
            sp = raw.pop("split")
            kwargs["split"] = SplitSpec(
                dev_fraction=float(sp.get("dev_fraction", 0.5)),
                holdout_fraction=float(sp.get("holdout_fraction", 0.5)),
                seed=int(sp.get("seed", 0)),
            )
        if raw:
            raise ConfigError(f"unknown config keys: {sorted(raw)}")
        return ExperimentConfig(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path, seed_override: int | None = None) -> ExperimentConfig:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    cfg = config_from_dict(raw)
    if seed_override is not None:
        cfg = _with_seed(cfg, seed_override)
    return cfg


def _with_seed(cfg: ExperimentConfig, seed: int) -> ExperimentConfig:
    return replace(cfg, seed=seed, split=SplitSpec(
        dev_fraction=cfg.split.dev_fraction,
        holdout_fraction=cfg.split.holdout_fraction,
        seed=seed,
    ))


def split_utterances(
    utts: Sequence[Utterance], spec: SplitSpec
) -> tuple[list[Utterance], list[Utterance]]:
    """Disjoint dev/holdout split by shuffled utterance id."""
    ids = sorted(u.id for u in utts)
    if len(ids) != len(set(ids)):
        raise DataError("duplicate utterance ids")
    rng = random.Random(derive_seed(spec.seed, "split"))
    rng.shuffle(ids)
    n_dev = int(len(ids) * spec.dev_fraction)
    n_hold = int(len(ids) * spec.holdout_fraction)
    if n_dev < 1 or n_hold < 1:
        raise DataError("split produced an empty partition")
    dev_ids = set(ids[:n_dev])
    hold_ids = set(ids[n_dev : n_dev + n_hold])
    dev = [u for u in utts if u.id in dev_ids]
    hold = [u for u in utts if u.id in hold_ids]
    return dev, hold


def language_model_for(cfg: ExperimentConfig) -> NGramModel:
    """The fixed command-language model: loaded from lm_path when given,
    otherwise trained on the configured phrase templates. Only the decoder
    weights are tuned on the dev split, not the model itself."""
    if cfg.lm_path:
        try:
            return load_from_path(cfg.lm_path)
        except OSError as exc:
            raise DataError(f"cannot read model {cfg.lm_path}: {exc}") from exc
    return train([tokenize(p) for p in cfg.phrases], order=cfg.lm_order, add_k=cfg.lm_add_k)


def channel_with_lexicon(cfg: ExperimentConfig, model: NGramModel) -> decoder_mod.LatticeChannel:
    lexicon = tuple(sorted(model.vocab - {BOS, EOS, UNK}))
    return replace(cfg.channel, lexicon=lexicon)


def run_pipeline(cfg: ExperimentConfig, out_dir) -> dict:
    """Run the full comparison and write report.json / report.txt.

    Any stage failure removes partial outputs and re-raises with the
    stage name attached.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    try:
        report = _run(cfg, out, written)
    except Exception as exc:
        for path in written:
            path.unlink(missing_ok=True)
        if isinstance(exc, PipelineError):
            raise
        raise PipelineError("write-output", exc) from exc
    return report


def _run(cfg: ExperimentConfig, out: Path, written: list[Path]) -> dict:
    def stage(name: str):
        def wrap(fn, *args, **kwargs):
            try:
                return fn(*args, **kwargs)
            except Exception as exc:
                raise PipelineError(name, exc) from exc

        return wrap

    if cfg.corpus_path:
        def load_existing():
            try:
                with open(cfg.corpus_path, "r", encoding="utf-8") as fh:
                    return parse_corpus(fh)
            except OSError as exc:
                raise DataError(f"cannot read corpus {cfg.corpus_path}: {exc}") from exc

        utts = stage("load-corpus")(load_existing)
    else:
        utts = stage("generate")(
            generate_corpus,
            cfg.n_utterances,
            cfg.injection,
            cfg.phrases,
            n_participants=cfg.n_participants,
            severities=cfg.severities,
            seed=cfg.seed,
        )
    corpus_path = out / "corpus.jsonl"
    corpus_path.write_text(serialize_corpus(utts), encoding="utf-8")
    written.append(corpus_path)

    dev, holdout = stage("split")(split_utterances, utts, cfg.split)
    model = stage("train-lm")(language_model_for, cfg)
    channel = channel_with_lexicon(cfg, model)

    dev_lattices = stage("lattices")(
        decoder_mod.synthesize_lattices, dev, channel, derive_seed(cfg.seed, "dev")
    )
    hold_lattices = stage("lattices")(
        decoder_mod.synthesize_lattices, holdout, channel, derive_seed(cfg.seed, "holdout")
    )

    tuning = stage("tune-decoder")(
        decoder_mod.tune_decoder,
        [(lat, list(u.intended)) for lat, u in zip(dev_lattices, dev)],
        model,
        cfg.lm_weights,
        cfg.insertion_penalties,
        cfg.beam_width,
    )
    baseline_cfg = decoder_mod.DecoderConfig(
        lm_weight=cfg.baseline_lm_weight,
        insertion_penalty=cfg.baseline_insertion_penalty,
        beam_width=cfg.beam_width,
    )
    tuned_cfg = decoder_mod.DecoderConfig(
        lm_weight=tuning.lm_weight,
        insertion_penalty=tuning.insertion_penalty,
        beam_width=cfg.beam_width,
    )

    def evaluate_conditions() -> dict[str, list[align_mod.WerReport]]:
        per_condition: dict[str, list[align_mod.WerReport]] = {c: [] for c in CONDITIONS}
        for u, lattice in zip(holdout, hold_lattices):
            base_hyp = decoder_mod.decode(lattice, model, baseline_cfg)
            tuned_hyp = decoder_mod.decode(lattice, model, tuned_cfg)
            base_ref, _ = refine_mod.refine(base_hyp, model, cfg.refine)
            tuned_ref, _ = refine_mod.refine(tuned_hyp, model, cfg.refine)
            ref = list(u.intended)
            per_condition["baseline"].append(align_mod.align(ref, base_hyp))
            per_condition["tuned"].append(align_mod.align(ref, tuned_hyp))
            per_condition["baseline_refined"].append(align_mod.align(ref, base_ref))
            per_condition["combined"].append(align_mod.align(ref, tuned_ref))
        return per_condition

    per_condition = stage("evaluate")(evaluate_conditions)

    def aggregate_condition(reports: list[align_mod.WerReport]) -> dict:
        groups: dict[str, list[align_mod.WerReport]] = {}
        for u, r in zip(holdout, reports):
            groups.setdefault(u.participant_id, []).append(r)
        return align_mod.aggregate(groups).to_dict()

    aggregates = {c: stage("aggregate")(aggregate_condition, per_condition[c]) for c in CONDITIONS}

    wilcoxon = {}
    comparisons = [
        ("baseline", "tuned"),
        ("baseline", "baseline_refined"),
        ("baseline", "combined"),
        ("tuned", "combined"),
    ]
    participant_wers = {
        c: _participant_wers(holdout, per_condition[c]) for c in CONDITIONS
    }
    for a, b in comparisons:
        key = f"{a}_vs_{b}"
        try:
            res = stats_mod.wilcoxon_signed_rank(participant_wers[a], participant_wers[b])
            wilcoxon[key] = {
                "w": res.w,
                "z": res.z,
                "p_value": res.p_value,
                "n_effective": res.n_effective,
            }
        except ValueError:
            wilcoxon[key] = {"result": "no difference"}

    per_kind = _improved_regressed(holdout, per_condition)

    report = {
        "n_utterances": len(utts),
        "n_dev": len(dev),
        "n_holdout": len(holdout),
        "decoder_tuning": {
            "lm_weight": tuning.lm_weight,
            "insertion_penalty": tuning.insertion_penalty,
            "dev_wer": tuning.dev_wer,
        },
        "baseline_decoder": {
            "lm_weight": cfg.baseline_lm_weight,
            "insertion_penalty": cfg.baseline_insertion_penalty,
        },
        "conditions": aggregates,
        "wilcoxon": wilcoxon,
        "per_kind": per_kind,
    }

    report_path = out / "report.json"
    report_path.write_text(render_report_json(report), encoding="utf-8")
    written.append(report_path)
    table_path = out / "report.txt"
    table_path.write_text(render_report_table(report), encoding="utf-8")
    written.append(table_path)
    return report


def _participant_wers(
    utts: Sequence[Utterance], reports: Sequence[align_mod.WerReport]
) -> list[float]:
    pooled: dict[str, list[align_mod.WerReport]] = {}
    for u, r in zip(utts, reports):
        pooled.setdefault(u.participant_id, []).append(r)
    out = []
    for pid in sorted(pooled):
        errs = sum(r.errors for r in pooled[pid])
        length = sum(r.ref_len for r in pooled[pid])
        out.append(errs / length)
    return out


def _improved_regressed(
    utts: Sequence[Utterance], per_condition: dict[str, list[align_mod.WerReport]]
) -> dict:
    """Per dysfluency kind: share of utterances containing that kind whose
    WER strictly improved / regressed versus the baseline condition."""
    out = {}
    variants = {
        "tuned": "tuned",
        "refined": "baseline_refined",
        "combined": "combined",
    }
    for kind in DysfluencyKind:
        idxs = [i for i, u in enumerate(utts) if u.has(kind)]
        entry: dict = {"n": len(idxs)}
        for label, cond in variants.items():
            if not idxs:
                entry[label] = {"improved": 0.0, "regressed": 0.0}
                continue
            improved = regressed = 0
            for i in idxs:
                before = per_condition["baseline"][i].wer
                after = per_condition[cond][i].wer
                if after < before:
                    improved += 1
                elif after > before:
                    regressed += 1
            entry[label] = {
                "improved": improved / len(idxs),
                "regressed": regressed / len(idxs),
            }
        out[kind.value] = entry
    return out


def render_report_json(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=2) + "\n"


def render_report_table(report: dict) -> str:
    """Aligned plain-text summary of the four conditions."""
    cols = ["condition", "mean", "sd", "median", "iqr", "thr10", "thr15", "corpus"]
    rows = [cols]
    for cond in CONDITIONS:
        agg = report["conditions"][cond]
        rows.append(
            [
                cond,
                f"{agg['mean_wer']:.4f}",
                f"{agg['sd_wer']:.4f}",
                f"{agg['median_wer']:.4f}",
                f"{agg['iqr_wer']:.4f}",
                f"{agg['thr10']:.4f}",
                f"{agg['thr15']:.4f}",
                f"{agg['corpus_wer']:.4f}",
            ]
        )
    widths = [max(len(r[i]) for r in rows) for i in range(len(cols))]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip() for row in rows]
    tuning = report["decoder_tuning"]
    lines.append("")
    lines.append(
        "tuned decoder: lm_weight={lm_weight} insertion_penalty={insertion_penalty} "
        "dev_wer={dev_wer:.4f}".format(**tuning)
    )
    lines.append("wer statistics use population SD and interpolated quartiles")
    return "\n".join(lines) + "\n"
