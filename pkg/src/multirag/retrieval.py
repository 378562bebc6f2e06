"""Per-model retrieval, Z-score standardization, cross-model fusion, prompts.

Scores live in a ``SimilarityRow`` whose dict preserves corpus ingestion
order; every tie-break below ("ingestion order") means position in that
dict. Fusion pools each model's top candidates, deduplicates chunk ids
keeping the strongest standardized score, and re-sorts globally:
(standardized score descending, ingestion order ascending), with dedup
ties going to the lowest model index. All functions here are pure.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .corpus import Corpus, Chunk
from .errors import TemplateError
from .kernels import cosine_scores


@dataclass
class SimilarityRow:
    model_id: str
    question_id: str
    scores: dict[str, float]  # chunk id -> raw cosine similarity, ingestion order

    def __post_init__(self):
        if not self.scores:
            raise ValueError("similarity row must contain at least one score")
        for cid, w in self.scores.items():
            if not np.isfinite(w):
                raise ValueError(f"non-finite similarity for chunk {cid!r}")


@dataclass(frozen=True)
class RetrievalCandidate:
    model_id: str
    chunk_id: str
    raw: float
    standardized: float
    rank_within_model: int


def score_all(provider, question: str, corpus: Corpus,
              kind_filter: str | None = None,
              question_id: str = "") -> SimilarityRow:
    """Cosine-score the question against every (eligible) corpus chunk."""
    chunks = [c for c in corpus if kind_filter is None or c.kind == kind_filter]
    if not chunks:
        raise ValueError("corpus is empty after kind filtering")
    vectors = provider.embed([question] + [c.text for c in chunks])
    matrix = np.stack([v.values for v in vectors[1:]])
    scores = cosine_scores(vectors[0].values, matrix)
    return SimilarityRow(
        model_id=provider.model_id,
        question_id=question_id,
        scores={c.id: float(s) for c, s in zip(chunks, scores)},
    )


def top_k(row: SimilarityRow, k: int) -> list[str]:
    """The k highest-scoring chunk ids, ties broken by ingestion order."""
    if k < 0:
        raise ValueError("k must be >= 0")
    ranked = sorted(
        enumerate(row.scores.items()),
        key=lambda item: (-item[1][1], item[0]),
    )
    return [cid for _, (cid, _) in ranked[:k]]


def top_k_by_kind(row: SimilarityRow, quotas: dict[str, int],
                  kinds: dict[str, str]) -> list[str]:
    """Per-kind top selection; output merged in global score order."""
    ranked = sorted(
        enumerate(row.scores.items()),
        key=lambda item: (-item[1][1], item[0]),
    )
    taken: dict[str, int] = {k: 0 for k in quotas}
    out = []
    for _, (cid, _) in ranked:
        kind = kinds[cid]
        if kind in quotas and taken[kind] < quotas[kind]:
            taken[kind] += 1
            out.append(cid)
    return out


def standardize(row: SimilarityRow) -> dict[str, float]:
    """Z-scores over all scores in the row (population standard deviation).

    A zero-spread row standardizes to all zeros: it carries no ranking
    information and dividing by zero would poison fusion.
    """
    values = np.fromiter(row.scores.values(), dtype=np.float64)
    # zero spread means max == min; testing sigma == 0.0 would miss rows of
    # identical values whose float mean lands a rounding error away
    if values.max() == values.min():
        return {cid: 0.0 for cid in row.scores}
    mu = values.mean()
    sigma = values.std()  # population (1/m) by numpy default
    return {cid: float((w - mu) / sigma) for cid, w in row.scores.items()}


def fuse(rows: list[SimilarityRow], k: int,
         quotas: dict[str, int] | None = None,
         kinds: dict[str, str] | None = None) -> list[RetrievalCandidate]:
    """Merge per-model candidate lists into one deduplicated ranking.

    Each row contributes its own top selection (k, or per-kind quotas),
    scored by Z-standardized similarity so models with different score
    ranges are comparable. Duplicated chunk ids keep the maximum
    standardized score (ties: lowest model index); the pooled survivors
    are sorted by (standardized desc, ingestion order asc) and cut to k
    or to the per-kind quotas.
    """
    if not rows:
        raise ValueError("fuse requires at least one row")
    key_order = list(rows[0].scores.keys())
    for row in rows[1:]:
        if list(row.scores.keys()) != key_order:
            raise ValueError("rows score different corpora or different chunk orders")
    if quotas is not None and kinds is None:
        raise ValueError("per-kind quotas require a chunk-id -> kind mapping")

    position = {cid: i for i, cid in enumerate(key_order)}

    # per-model candidates at their standardized scores
    pooled: dict[str, tuple[float, int, RetrievalCandidate]] = {}
    for model_index, row in enumerate(rows):
        zs = standardize(row)
        if quotas is not None:
            selected = top_k_by_kind(row, quotas, kinds)
        else:
            selected = top_k(row, k)
        for rank, cid in enumerate(selected, start=1):
            cand = RetrievalCandidate(
                model_id=row.model_id, chunk_id=cid, raw=row.scores[cid],
                standardized=zs[cid], rank_within_model=rank)
            best = pooled.get(cid)
            if best is None or cand.standardized > best[0]:
                pooled[cid] = (cand.standardized, model_index, cand)
            # equal scores keep the earlier model (lowest index): no update

    merged = sorted(pooled.values(), key=lambda t: (-t[0], position[t[2].chunk_id]))
    candidates = [t[2] for t in merged]

    if quotas is not None:
        taken = {kind: 0 for kind in quotas}
        out = []
        for cand in candidates:
            kind = kinds[cand.chunk_id]
            if kind in quotas and taken[kind] < quotas[kind]:
                taken[kind] += 1
                out.append(cand)
        return out
    return candidates[:k]


_PLACEHOLDER = re.compile(r"\{\{(question|references)\}\}")


@dataclass(frozen=True)
class PromptTemplate:
    """Prompt text with {{question}} and {{references}} placeholders.

    ``reference_format`` renders one numbered reference; the joined blocks
    are wrapped in ``section_format``, and the whole section collapses to
    the empty string when there are no references (vanilla-LLM mode).
    """

    text: str
    reference_format: str = "[{index}] {text}"
    section_format: str = "References:\n{blocks}\n\n"

    def __post_init__(self):
        found = [m.group(1) for m in _PLACEHOLDER.finditer(self.text)]
        for name in ("question", "references"):
            if found.count(name) != 1:
                raise TemplateError(
                    f"template must contain exactly one {{{{{name}}}}} placeholder")


def assemble_prompt(template: PromptTemplate, question: str,
                    references: list[Chunk]) -> str:
    """Deterministic montage of the question and ordered references."""
    if references:
        blocks = "\n".join(
            template.reference_format.format(index=i, text=chunk.text)
            for i, chunk in enumerate(references, start=1))
        section = template.section_format.format(blocks=blocks)
    else:
        section = ""
    mapping = {"question": question, "references": section}
    return _PLACEHOLDER.sub(lambda m: mapping[m.group(1)], template.text)
