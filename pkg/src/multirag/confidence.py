"""Token-distribution confidence metrics and most-confident answer selection.

Five metrics are computed from a completion's per-step distributions:

  avg-log-p       mean log probability of the chosen tokens
  gini            mean sum of squared probabilities (peakedness)
  entropy         mean Shannon entropy (natural log)
  dp              mean of exp(per-step entropy), a distribution-wide
                  perplexity; the exponential sits inside the step average
  self-certainty  mean KL-style divergence from the uniform distribution,
                  -(1/(n|v|)) sum log(|v| * p)

Truncated distributions are completed by spreading tail mass uniformly
over the unlisted tokens; probabilities are floored at EPSILON before
any logarithm so one-hot distributions stay finite. Entropy and dp read
"lower is confident", so their oriented score is the negated raw value:
a greater oriented score always means a more confident answer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .generation import GenerationRecord, TokenStep

EPSILON = 1e-12

METRICS = ("avg-log-p", "self-certainty", "gini", "entropy", "dp")
LOWER_IS_CONFIDENT = frozenset({"entropy", "dp"})


@dataclass(frozen=True)
class ConfidenceScore:
    metric: str
    raw: float
    oriented: float


def orientation(metric: str) -> str:
    _check_metric(metric)
    return "lower-is-confident" if metric in LOWER_IS_CONFIDENT else "higher-is-confident"


def orient(metric: str, raw: float) -> ConfidenceScore:
    _check_metric(metric)
    if not np.isfinite(raw):
        raise ValueError(f"non-finite raw score for {metric}: {raw}")
    oriented = -raw if metric in LOWER_IS_CONFIDENT else raw
    return ConfidenceScore(metric=metric, raw=raw, oriented=oriented)


def _check_metric(metric: str) -> None:
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}; expected one of {METRICS}")


def steps_to_arrays(steps: list[TokenStep]):
    """Pack ragged step distributions into the kernel array layout."""
    if not steps:
        raise ValueError("confidence metrics require at least one step")
    kmax = max(len(s.dist) for s in steps)
    n = len(steps)
    probs = np.zeros((n, kmax), dtype=np.float64)
    lens = np.empty(n, dtype=np.int64)
    tails = np.empty(n, dtype=np.float64)
    vocabs = np.empty(n, dtype=np.int64)
    chosen = np.empty(n, dtype=np.float64)
    for i, s in enumerate(steps):
        lens[i] = len(s.dist)
        probs[i, :lens[i]] = [p for _, p in s.dist]
        tails[i] = s.tail_mass
        vocabs[i] = s.vocab_size
        chosen[i] = s.prob
    return probs, lens, tails, vocabs, chosen


def avg_log_p(steps: list[TokenStep]) -> float:
    _, _, _, _, chosen = steps_to_arrays(steps)
    return float(kernels.avg_log_p_kernel(chosen, EPSILON))


def gini(steps: list[TokenStep]) -> float:
    probs, lens, tails, vocabs, _ = steps_to_arrays(steps)
    return float(kernels.gini_per_step(probs, lens, tails, vocabs).mean())


def entropy(steps: list[TokenStep]) -> float:
    probs, lens, tails, vocabs, _ = steps_to_arrays(steps)
    return float(kernels.step_entropies(probs, lens, tails, vocabs, EPSILON).mean())


def dp(steps: list[TokenStep]) -> float:
    probs, lens, tails, vocabs, _ = steps_to_arrays(steps)
    ents = kernels.step_entropies(probs, lens, tails, vocabs, EPSILON)
    return float(np.exp(ents).mean())


def self_certainty(steps: list[TokenStep]) -> float:
    probs, lens, tails, vocabs, _ = steps_to_arrays(steps)
    return float(kernels.self_certainty_per_step(probs, lens, tails, vocabs, EPSILON).mean())


_COMPUTE = {
    "avg-log-p": avg_log_p,
    "self-certainty": self_certainty,
    "gini": gini,
    "entropy": entropy,
    "dp": dp,
}


def score_record(record: GenerationRecord) -> GenerationRecord:
    """Fill record.confidence with all five metrics (raw and oriented)."""
    probs, lens, tails, vocabs, chosen = steps_to_arrays(record.steps)
    ents = kernels.step_entropies(probs, lens, tails, vocabs, EPSILON)
    raws = {
        "avg-log-p": float(kernels.avg_log_p_kernel(chosen, EPSILON)),
        "self-certainty": float(
            kernels.self_certainty_per_step(probs, lens, tails, vocabs, EPSILON).mean()),
        "gini": float(kernels.gini_per_step(probs, lens, tails, vocabs).mean()),
        "entropy": float(ents.mean()),
        "dp": float(np.exp(ents).mean()),
    }
    record.confidence = {m: orient(m, raws[m]) for m in METRICS}
    return record


def select_most_confident(records: list[GenerationRecord],
                          metric: str) -> tuple[GenerationRecord, int]:
    """Argmax of the oriented metric; ties go to the earliest record.

    Records arrive in embedding-model index order, so "earliest" is the
    lowest model index.
    """
    _check_metric(metric)
    if not records:
        raise ValueError("cannot select from an empty record list")
    best_index = 0
    best_score = None
    for i, record in enumerate(records):
        score = record.confidence.get(metric)
        if score is None:
            raise ValueError(
                f"record {i} ({record.embedding_model!r}) has no {metric!r} score")
        if best_score is None or score.oriented > best_score:
            best_score = score.oriented
            best_index = i
    return records[best_index], best_index
