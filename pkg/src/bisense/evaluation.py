"""Scoring and report surfaces.

Micro precision/recall/F1 with match-any-gold semantics: an instance is
correct iff its predicted sense is in the gold set. Unattempted instances
cost recall but not precision. Reports break performance down per POS, per
dataset (plus the ALL concatenation), and over the MFS/LFS and zero-shot
subsets of a partition.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .corpus import Corpus, EvalPartition, SenseFrequencyTable, training_mfs
from .errors import DataError, ResourceError
from .lexicon import POS_TAGS, SenseId, SenseInventory, candidate_senses, first_sense
from .model import (
    BiEncoderModel,
    LinearHead,
    argmax_by_rank,
    context_forward,
    embed_senses,
    linear_head_logits,
    score_candidates,
)
from .encoder import pool_word

PredictionSet = dict[str, SenseId]


@dataclass
class BucketScore:
    total: int = 0
    attempted: int = 0
    correct: int = 0

    @property
    def precision(self) -> float:
        return 100.0 * self.correct / self.attempted if self.attempted else 0.0

    @property
    def recall(self) -> float:
        return 100.0 * self.correct / self.total if self.total else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2.0 * p * r / (p + r) if p + r > 0 else 0.0

    def __add__(self, other: "BucketScore") -> "BucketScore":
        return BucketScore(
            self.total + other.total,
            self.attempted + other.attempted,
            self.correct + other.correct,
        )

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "attempted": self.attempted,
            "correct": self.correct,
            "precision": round(self.precision, 1),
            "recall": round(self.recall, 1),
            "f1": round(self.f1, 1),
        }


@dataclass
class EvalReport:
    overall: BucketScore
    per_pos: dict[str, BucketScore] = field(default_factory=dict)
    mfs: BucketScore | None = None
    lfs: BucketScore | None = None
    zero_shot_words: BucketScore | None = None
    zero_shot_senses: BucketScore | None = None

    def to_dict(self) -> dict:
        out = {
            "overall": self.overall.to_dict(),
            "per_pos": {pos: b.to_dict() for pos, b in self.per_pos.items()},
        }
        for name in ("mfs", "lfs", "zero_shot_words", "zero_shot_senses"):
            b = getattr(self, name)
            if b is not None:
                out[name] = b.to_dict()
        return out

    def __add__(self, other: "EvalReport") -> "EvalReport":
        def add_opt(a, b):
            if a is None and b is None:
                return None
            return (a or BucketScore()) + (b or BucketScore())

        per_pos = {
            pos: self.per_pos.get(pos, BucketScore()) + other.per_pos.get(pos, BucketScore())
            for pos in POS_TAGS
        }
        return EvalReport(
            overall=self.overall + other.overall,
            per_pos=per_pos,
            mfs=add_opt(self.mfs, other.mfs),
            lfs=add_opt(self.lfs, other.lfs),
            zero_shot_words=add_opt(self.zero_shot_words, other.zero_shot_words),
            zero_shot_senses=add_opt(self.zero_shot_senses, other.zero_shot_senses),
        )


def score(
    preds: PredictionSet, eval_c: Corpus, part: EvalPartition | None = None
) -> EvalReport:
    """Pure function of (predictions, corpus, partition)."""
    for iid in preds:
        eval_c.instance(iid)  # raises on unknown instance_id
    overall = BucketScore()
    per_pos = {pos: BucketScore() for pos in POS_TAGS}
    buckets = {}
    if part is not None:
        buckets = {
            "mfs": (part.mfs_ids, BucketScore()),
            "lfs": (part.lfs_ids, BucketScore()),
            "zero_shot_words": (part.zero_shot_word_ids, BucketScore()),
            "zero_shot_senses": (part.zero_shot_sense_ids, BucketScore()),
        }
    for inst in eval_c.instances:
        attempted = inst.instance_id in preds
        correct = attempted and preds[inst.instance_id] in inst.gold
        targets = [overall, per_pos[inst.lemma_key.pos]]
        for ids, bucket in buckets.values():
            if inst.instance_id in ids:
                targets.append(bucket)
        for b in targets:
            b.total += 1
            if attempted:
                b.attempted += 1
            if correct:
                b.correct += 1
    report = EvalReport(overall=overall, per_pos=per_pos)
    if part is not None:
        report.mfs = buckets["mfs"][1]
        report.lfs = buckets["lfs"][1]
        report.zero_shot_words = buckets["zero_shot_words"][1]
        report.zero_shot_senses = buckets["zero_shot_senses"][1]
    return report


def baseline_s1(eval_c: Corpus, inv: SenseInventory) -> PredictionSet:
    """Always predict the inventory's rank-1 sense; unknown lemmas are left
    unattempted."""
    preds: PredictionSet = {}
    for inst in eval_c.instances:
        if inv.has_lemma(inst.lemma_key):
            preds[inst.instance_id] = first_sense(inv, inst.lemma_key)
    return preds


def baseline_training_mfs(
    eval_c: Corpus, train_freq: SenseFrequencyTable, inv: SenseInventory
) -> PredictionSet:
    """Most frequent training sense per lemma, falling back to inventory
    rank for unseen or tied lemmas."""
    preds: PredictionSet = {}
    for inst in eval_c.instances:
        if inv.has_lemma(inst.lemma_key):
            preds[inst.instance_id] = training_mfs(train_freq, inst.lemma_key, inv)
    return preds


def predict_corpus(
    model: BiEncoderModel,
    eval_c: Corpus,
    inv: SenseInventory,
    gloss_batch: int = 256,
    ctx_batch: int = 32,
) -> tuple[PredictionSet, int]:
    """Bi-encoder predictions for every instance with a non-empty candidate
    set. Returns (predictions, number of skipped instances)."""
    needed: list[SenseId] = []
    for inst in eval_c.instances:
        needed.extend(candidate_senses(inv, inst.lemma_key))
    sense_vecs = embed_senses(model, needed, inv, gloss_batch_size=gloss_batch)

    preds: PredictionSet = {}
    skipped = 0
    by_sentence: dict[int, list] = {}
    for inst in eval_c.instances:
        by_sentence.setdefault(inst.sentence_index, []).append(inst)
    sent_ids = sorted(by_sentence)
    for start in range(0, len(sent_ids), ctx_batch):
        chunk = sent_ids[start : start + ctx_batch]
        rec, encoded = context_forward(model, [eval_c.sentences[si].words for si in chunk])
        for row, si in enumerate(chunk):
            for inst in by_sentence[si]:
                cands = candidate_senses(inv, inst.lemma_key)
                if not cands or inst.token_index >= len(encoded[row].word_spans):
                    skipped += 1
                    continue
                r_w = pool_word(rec.hidden[row], encoded[row].word_spans[inst.token_index])
                scores = score_candidates(r_w, np.stack([sense_vecs[s] for s in cands]))
                preds[inst.instance_id] = cands[argmax_by_rank(scores)]
    return preds, skipped


def linear_predict_corpus(
    model: BiEncoderModel,
    head: LinearHead,
    eval_c: Corpus,
    inv: SenseInventory,
    ctx_batch: int = 32,
) -> PredictionSet:
    """Frozen-encoder linear classifier with candidate masking; lemmas with
    no candidate in the head index back off to the rank-1 baseline."""
    preds: PredictionSet = {}
    by_sentence: dict[int, list] = {}
    for inst in eval_c.instances:
        by_sentence.setdefault(inst.sentence_index, []).append(inst)
    sent_ids = sorted(by_sentence)
    for start in range(0, len(sent_ids), ctx_batch):
        chunk = sent_ids[start : start + ctx_batch]
        rec, encoded = context_forward(model, [eval_c.sentences[si].words for si in chunk])
        for row, si in enumerate(chunk):
            for inst in by_sentence[si]:
                cands = candidate_senses(inv, inst.lemma_key)
                if not cands:
                    continue
                covered = [s for s in cands if s in head]
                if not covered or inst.token_index >= len(encoded[row].word_spans):
                    preds[inst.instance_id] = first_sense(inv, inst.lemma_key)
                    continue
                r_w = pool_word(rec.hidden[row], encoded[row].word_spans[inst.token_index])
                logits = linear_head_logits(head, r_w, covered)
                preds[inst.instance_id] = covered[argmax_by_rank(logits)]
    return preds


def run_system(
    system: str,
    eval_c: Corpus,
    *,
    inv: SenseInventory,
    train_freq: SenseFrequencyTable | None = None,
    model: BiEncoderModel | None = None,
    head: LinearHead | None = None,
    gloss_batch: int = 256,
) -> PredictionSet:
    """Dispatches one of the named systems over an evaluation corpus."""
    if system == "s1":
        return baseline_s1(eval_c, inv)
    if system == "mfs":
        if train_freq is None:
            raise ResourceError("mfs baseline needs training frequencies")
        return baseline_training_mfs(eval_c, train_freq, inv)
    if system == "bem":
        if model is None:
            raise ResourceError("bem system needs a model checkpoint")
        preds, _ = predict_corpus(model, eval_c, inv, gloss_batch=gloss_batch)
        return preds
    if system == "linear":
        if model is None or head is None:
            raise ResourceError("linear baseline needs a checkpoint with a head")
        return linear_predict_corpus(model, head, eval_c, inv)
    raise DataError(f"unknown system {system!r}")


def save_predictions(preds: PredictionSet, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for iid in sorted(preds):
            fh.write(f"{iid} {preds[iid]}\n")


def load_predictions(path: str) -> PredictionSet:
    preds: PredictionSet = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 2:
                raise DataError(f"{path}:{lineno}: expected 'instance_id sense_id'")
            preds[parts[0]] = parts[1]
    return preds


def render_report(reports: dict[str, EvalReport]) -> str:
    """Aligned text table: one row per dataset plus ALL, then the subset
    breakdown for ALL."""
    lines = []
    header = (
        f"{'dataset':<16}{'inst':>6}{'att':>6}{'P':>7}{'R':>7}{'F1':>7}"
        + "".join(f"{pos:>7}" for pos in POS_TAGS)
    )
    lines.append(header)
    lines.append("-" * len(header))
    for name, rep in reports.items():
        o = rep.overall
        row = (
            f"{name:<16}{o.total:>6}{o.attempted:>6}"
            f"{o.precision:>7.1f}{o.recall:>7.1f}{o.f1:>7.1f}"
        )
        for pos in POS_TAGS:
            b = rep.per_pos.get(pos)
            row += f"{b.f1:>7.1f}" if b and b.total else f"{'-':>7}"
        lines.append(row)
    all_rep = reports.get("ALL")
    if all_rep is not None and all_rep.mfs is not None:
        lines.append("")
        lines.append(f"{'ALL subset':<16}{'inst':>6}{'F1':>7}")
        lines.append("-" * 29)
        for label, b in (
            ("MFS", all_rep.mfs),
            ("LFS", all_rep.lfs),
            ("zero-shot word", all_rep.zero_shot_words),
            ("zero-shot sense", all_rep.zero_shot_senses),
        ):
            lines.append(f"{label:<16}{b.total:>6}{b.f1:>7.1f}")
    return "\n".join(lines) + "\n"
