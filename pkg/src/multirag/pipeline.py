"""The three question-answering flows: vanilla, mixture, confident.

vanilla    retrieve with one embedding model, prompt, generate once.
mixture    retrieve with every model in the subset, fuse the candidate
           lists on standardized similarity, prompt once, generate once.
confident  run vanilla once per model in the subset, score each answer's
           confidence, keep the answer with the highest oriented score.

Every generation derives its decode seed from the master seed and a
stable key (question id plus the model subset), so results do not depend
on subset order or scheduling, and a rerun with the same config
reproduces them exactly.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

from . import confidence, retrieval
from .corpus import Corpus
from .errors import MultiragError, StageError
from .generation import DecodeParams, derive_seed, generate
from .retrieval import PromptTemplate

log = logging.getLogger(__name__)


@dataclass
class PipelineConfig:
    providers: list  # embedding providers; list position defines model index
    backend: object
    template: PromptTemplate
    k: int = 4
    quotas: dict[str, int] | None = None
    quotas_in_mixture: bool = True
    metric: str = "self-certainty"
    decode: DecodeParams = field(default_factory=DecodeParams)
    seed: int = 0
    concurrency: int = 1

    def __post_init__(self):
        ids = [p.model_id for p in self.providers]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate embedding model ids")
        confidence.orientation(self.metric)  # validates the metric name

    @property
    def model_ids(self) -> list[str]:
        return [p.model_id for p in self.providers]

    def provider(self, model_id: str):
        for p in self.providers:
            if p.model_id == model_id:
                return p
        raise ValueError(f"embedding model {model_id!r} is not configured")

    def model_index(self, model_id: str) -> int:
        return self.model_ids.index(model_id)


@dataclass
class QuestionResult:
    question_id: str
    pipeline: str
    answer: str
    winner_index: int | None
    records: list  # GenerationRecord, in model-index order
    retrieved: dict[str, list[str]]  # model id (or combo tag) -> chunk ids


def _stage(name: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except MultiragError as e:
        raise StageError(name, e) from e
    except Exception as e:  # noqa: BLE001 - annotate every stage failure
        raise StageError(name, e) from e


def _select_ids(row, config: PipelineConfig, corpus: Corpus) -> list[str]:
    if config.k == 0:
        return []
    if config.quotas:
        return retrieval.top_k_by_kind(row, config.quotas, corpus.kinds())
    return retrieval.top_k(row, config.k)


def run_vanilla(question_id: str, question: str, model_id: str,
                corpus: Corpus, config: PipelineConfig) -> QuestionResult:
    """Single-model RAG; k = 0 degenerates to the bare-question LLM."""
    if config.k > 0:
        row = _stage("retrieval", lambda: retrieval.score_all(
            config.provider(model_id), question, corpus, question_id=question_id))
        ids = _select_ids(row, config, corpus)
    else:
        ids = []
    references = [corpus.get(cid) for cid in ids]
    prompt = _stage("prompt", retrieval.assemble_prompt,
                    config.template, question, references)
    params = replace(config.decode,
                     seed=derive_seed(config.seed, "gen", question_id, model_id))
    record = _stage("generation", generate, config.backend, prompt, params,
                    question_id=question_id, combination=model_id,
                    embedding_model=model_id)
    _stage("confidence", confidence.score_record, record)
    return QuestionResult(
        question_id=question_id, pipeline="vanilla", answer=record.completion,
        winner_index=None, records=[record], retrieved={model_id: ids})


def run_mixture(question_id: str, question: str, model_ids: list[str],
                corpus: Corpus, config: PipelineConfig) -> QuestionResult:
    """Fused multi-model retrieval feeding a single generation."""
    if not model_ids:
        raise ValueError("mixture requires at least one model")
    combo = ",".join(model_ids)
    if config.k > 0:
        rows = [
            _stage("retrieval", lambda m=mid: retrieval.score_all(
                config.provider(m), question, corpus, question_id=question_id))
            for mid in model_ids
        ]
        quotas = config.quotas if (config.quotas and config.quotas_in_mixture) else None
        candidates = _stage(
            "fusion", retrieval.fuse, rows, config.k,
            quotas=quotas, kinds=corpus.kinds() if quotas else None)
        ids = [c.chunk_id for c in candidates]
    else:
        ids = []
    references = [corpus.get(cid) for cid in ids]
    prompt = _stage("prompt", retrieval.assemble_prompt,
                    config.template, question, references)
    params = replace(config.decode,
                     seed=derive_seed(config.seed, "gen", question_id, combo))
    record = _stage("generation", generate, config.backend, prompt, params,
                    question_id=question_id, combination=combo,
                    embedding_model=combo)
    _stage("confidence", confidence.score_record, record)
    return QuestionResult(
        question_id=question_id, pipeline="mixture", answer=record.completion,
        winner_index=None, records=[record], retrieved={combo: ids})


def run_confident(question_id: str, question: str, model_ids: list[str],
                  corpus: Corpus, config: PipelineConfig) -> QuestionResult:
    """One vanilla run per model; the highest-confidence answer wins.

    A single failed generation is dropped (with a log line) instead of
    sinking the whole question; at least one run must survive.
    """
    if not model_ids:
        raise ValueError("confident requires at least one model")
    ordered = sorted(model_ids, key=config.model_index)

    def one(mid: str):
        try:
            return run_vanilla(question_id, question, mid, corpus, config)
        except StageError as e:
            log.warning("dropping model %s for question %s: %s", mid, question_id, e)
            return e

    if config.concurrency > 1 and len(ordered) > 1:
        with ThreadPoolExecutor(max_workers=min(config.concurrency, len(ordered))) as ex:
            outcomes = list(ex.map(one, ordered))
    else:
        outcomes = [one(mid) for mid in ordered]

    survivors = [(mid, r) for mid, r in zip(ordered, outcomes)
                 if isinstance(r, QuestionResult)]
    if not survivors:
        raise StageError("confident", outcomes[0])

    records = [r.records[0] for _, r in survivors]
    winner, index = confidence.select_most_confident(records, config.metric)
    retrieved = {mid: r.retrieved[mid] for mid, r in survivors}
    return QuestionResult(
        question_id=question_id, pipeline="confident", answer=winner.completion,
        winner_index=index, records=records, retrieved=retrieved)
