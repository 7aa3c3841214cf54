"""Task execution: score every (prompt, item, candidate) triple, turn tables
into predictions/rankings/regression columns, and aggregate metrics over the
prompt ensemble as max / mean / unbiased sample std.

Task kinds:
- regression: each item's own word fills the slot; the table has one column of
  similarity (or mask log-prob) values, compared to numeric golds by
  correlation metrics.
- categorical: a shared or per-item candidate set; argmax prediction scored by
  accuracy against gold label sets.
- retrieval: per-item candidate pools ranked; recall@k with answer-equivalence
  classes.
- binary: per-prompt candidate pairs whose first member means the positive
  class; accuracy against {positive, negative} golds.

Items may carry their own template body (cloze questions, cloze sentences);
such tasks run as a single pseudo-prompt with id "p00". Per-item provider
failures drop the item for that prompt; a prompt with no surviving items
aborts the run with PromptFailure.
"""

from __future__ import annotations

import math
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

from . import metrics as M
from .errors import (
    EmptyList,
    MaskUnavailable,
    PromptFailure,
    ProviderError,
    TaskValidationError,
)
from .probing import (
    ADJECTIVE_FORM,
    PROVIDER_MASK,
    REMOVE_SLOT,
    CandidateSet,
    PromptTemplate,
    ScoreTable,
    SlotPolicy,
    predict_categorical,
    rank_candidates,
    render,
)
from .providers import ModelProvider

REGRESSION = "regression"
CATEGORICAL = "categorical"
RETRIEVAL = "retrieval"
BINARY = "binary"
KINDS = (REGRESSION, CATEGORICAL, RETRIEVAL, BINARY)

SP = "sp"
MLM = "mlm"

POSITIVE = "positive"
NEGATIVE = "negative"

_RECALL_RE = re.compile(r"^recall@(\d+)$")
_EMBED_BATCH = 128


@dataclass(frozen=True)
class TaskItem:
    """One evaluation unit. gold holds a float (regression), a label set
    (categorical/binary), or the answer string (retrieval)."""

    id: str
    gold: object
    word: str | None = None
    review: str | None = None
    body: str | None = None
    slot_value: str | None = None
    candidates: CandidateSet | None = None


@dataclass(frozen=True)
class BootstrapConfig:
    n_boot: int = 200
    level: float = 0.95
    seed: int = 0


@dataclass
class TaskSpec:
    name: str
    kind: str
    method: str
    prompts: list[PromptTemplate]
    items: list[TaskItem]
    metrics: list[str]
    candidates: CandidateSet | None = None
    surface_forms: dict[str, dict[str, str]] = field(default_factory=dict)
    equivalence: list[frozenset[str]] = field(default_factory=list)
    bootstrap: BootstrapConfig | None = None
    slot_policy: SlotPolicy | None = None  # per-item-body tasks only

    def __post_init__(self):
        if self.kind not in KINDS:
            raise TaskValidationError(f"unknown kind {self.kind!r}")
        if self.method not in (SP, MLM):
            raise TaskValidationError(f"unknown method {self.method!r}")
        if not self.items:
            raise TaskValidationError("task has no items")
        if not self.metrics:
            raise TaskValidationError("task requests no metrics")
        per_item_bodies = any(i.body is not None for i in self.items)
        if per_item_bodies:
            if self.prompts:
                raise TaskValidationError("per-item bodies exclude a prompt ensemble")
            policy = self.slot_policy if self.slot_policy is not None else SlotPolicy(REMOVE_SLOT)
            self.prompts = [PromptTemplate(body="[*]", slot_policy=policy)]
            self._per_item_body = True
        else:
            self._per_item_body = False
            if not self.prompts:
                raise TaskValidationError("task has no prompts")
        if self.kind == RETRIEVAL and any(i.candidates is None for i in self.items):
            raise TaskValidationError("retrieval items need candidate pools")

    def prompt_id(self, index: int) -> str:
        return f"p{index:02d}"


@dataclass(frozen=True)
class MetricReport:
    per_prompt: dict[str, float]
    max: float
    mean: float
    std: float
    ci: tuple[float, float] | None = None
    ci_level: float | None = None


@dataclass(frozen=True)
class TaskResult:
    name: str
    method: str
    kind: str
    prompt_bodies: dict[str, str]
    tables: list[ScoreTable]
    reports: dict[str, MetricReport]
    skipped: dict[str, list[str]]  # prompt-id -> item ids dropped there


def _surface(spec: TaskSpec, template: PromptTemplate, label: str) -> str:
    forms = spec.surface_forms.get(template.candidate_form)
    if forms is None:
        return label
    return forms.get(label, label)


def _item_candidates(spec: TaskSpec, template: PromptTemplate, item: TaskItem) -> CandidateSet:
    if item.candidates is not None:
        return item.candidates
    if template.candidates is not None:
        return CandidateSet(template.candidates)
    if spec.kind == REGRESSION:
        return CandidateSet((item.slot_value if item.slot_value is not None else item.id,))
    if spec.candidates is None:
        raise TaskValidationError(f"no candidate set for item {item.id!r}")
    return spec.candidates


def _template_for(spec: TaskSpec, template: PromptTemplate, item: TaskItem) -> PromptTemplate:
    if item.body is not None:
        return replace(template, body=item.body)
    return template


def _score_sp(
    spec: TaskSpec,
    template: PromptTemplate,
    items: Sequence[TaskItem],
    provider: ModelProvider,
) -> list[list[float] | None]:
    """Similarity rows for one prompt; None rows mark skipped items."""
    info = provider.info()
    texts: dict[str, list[float] | None] = {}
    plans = []
    for item in items:
        tpl = _template_for(spec, template, item)
        cands = _item_candidates(spec, tpl, item)
        masked = render(tpl, item=item.word, review=item.review, provider_info=info)
        completed = [
            render(tpl, item=item.word, review=item.review, slot_value=_surface(spec, tpl, c))
            for c in cands
        ]
        plans.append((masked, completed))
        texts[masked] = None
        for t in completed:
            texts[t] = None

    unique = list(texts.keys())
    vectors = _embed_tolerant(provider, unique)
    for t, v in zip(unique, vectors):
        texts[t] = _unit_or_none(v)

    rows: list[list[float] | None] = []
    for masked, completed in plans:
        vm = texts[masked]
        vcs = [texts[t] for t in completed]
        if vm is None or any(v is None for v in vcs):
            rows.append(None)
            continue
        row = []
        for vc in vcs:
            s = math.fsum(a * b for a, b in zip(vm, vc))
            row.append(max(-1.0, min(1.0, s)))
        rows.append(row)
    return rows


def _score_mlm(
    spec: TaskSpec,
    template: PromptTemplate,
    items: Sequence[TaskItem],
    provider: ModelProvider,
) -> list[list[float] | None]:
    info = provider.info()
    if not info.has_mask_token:
        raise MaskUnavailable(f"provider {info.name!r} cannot run MLM probing")
    mask_template_policy = SlotPolicy(PROVIDER_MASK)
    rows: list[list[float] | None] = []
    for item in items:
        tpl = replace(_template_for(spec, template, item), slot_policy=mask_template_policy)
        cands = _item_candidates(spec, tpl, item)
        masked = render(tpl, item=item.word, review=item.review, provider_info=info)
        surfaces = [_surface(spec, tpl, c) for c in cands]
        try:
            row = provider.mlm_logprobs(masked, surfaces)
            rows.append([min(0.0, v) for v in row])
        except ProviderError:
            rows.append(None)
    return rows


def _unit_or_none(vec: list[float] | None) -> list[float] | None:
    if vec is None:
        return None
    norm = math.sqrt(math.fsum(c * c for c in vec))
    if norm < 1e-12:
        return None
    return [c / norm for c in vec]


def _embed_tolerant(provider: ModelProvider, texts: Sequence[str]) -> list[list[float] | None]:
    """Embed in batches; on a batch failure fall back to singles so one bad
    text costs one item, not the batch."""
    out: list[list[float] | None] = []
    for start in range(0, len(texts), _EMBED_BATCH):
        batch = list(texts[start : start + _EMBED_BATCH])
        try:
            out.extend(provider.embed(batch))
        except ProviderError:
            for text in batch:
                try:
                    out.extend(provider.embed([text]))
                except ProviderError:
                    out.append(None)
    return out


def _metric_fn(name: str) -> Callable[[TaskSpec, ScoreTable, list[TaskItem]], float]:
    m = _RECALL_RE.match(name)
    if m:
        k = int(m.group(1))

        def recall(spec: TaskSpec, table: ScoreTable, items: list[TaskItem]) -> float:
            rankings = []
            for i, row in enumerate(table.rows):
                cands = table.candidates_for(i)
                rankings.append([cands[j] for j in rank_candidates(row)])
            golds = [str(it.gold) for it in items]
            return M.recall_at_k(rankings, golds, k, spec.equivalence)

        return recall

    if name == "accuracy":

        def acc(spec: TaskSpec, table: ScoreTable, items: list[TaskItem]) -> float:
            preds = []
            for i, row in enumerate(table.rows):
                cands = table.candidates_for(i)
                preds.append(cands[predict_categorical(row)])
            golds = [it.gold for it in items]
            return M.accuracy(preds, golds)

        return acc

    plain = {
        "pearson": M.pearson,
        "spearman": M.spearman,
        "kendall_tau_b": M.kendall_tau_b,
    }
    absolute = {f"abs_{k}": v for k, v in plain.items()}
    if name in plain or name in absolute:
        fn = plain.get(name) or absolute[name]
        take_abs = name in absolute

        def corr(spec: TaskSpec, table: ScoreTable, items: list[TaskItem]) -> float:
            xs = [row[0] for row in table.rows]
            ys = [float(it.gold) for it in items]
            value = fn(xs, ys)
            return abs(value) if take_abs else value

        return corr

    raise TaskValidationError(f"unknown metric {name!r}")


def _canonical_table(
    spec: TaskSpec,
    template: PromptTemplate,
    method: str,
    kept: list[TaskItem],
    rows: list[list[float]],
) -> ScoreTable:
    per_item = any(i.candidates is not None for i in kept) or spec._per_item_body
    if spec.kind == BINARY:
        labels: CandidateSet | tuple = CandidateSet((POSITIVE, NEGATIVE))
    elif per_item:
        labels = tuple(_item_candidates(spec, _template_for(spec, template, i), i) for i in kept)
    elif spec.kind == REGRESSION:
        labels = tuple(_item_candidates(spec, template, i) for i in kept)
    else:
        cands = template.candidates
        labels = CandidateSet(cands) if cands is not None else spec.candidates
    return ScoreTable(
        method=method,
        items=tuple(i.id for i in kept),
        candidates=labels,
        rows=tuple(tuple(r) for r in rows),
    )


def run_task(
    spec: TaskSpec,
    provider: ModelProvider,
    jobs: int = 1,
    provider_factory: Callable[[], ModelProvider] | None = None,
) -> TaskResult:
    """Score every prompt and aggregate the requested metrics.

    jobs > 1 splits items into contiguous chunks scored on separate provider
    connections (from provider_factory); assembly order is fixed, so results
    are identical to the sequential run.
    """
    metric_fns = {name: _metric_fn(name) for name in spec.metrics}
    scorer = _score_mlm if spec.method == MLM else _score_sp

    tables: list[ScoreTable] = []
    skipped: dict[str, list[str]] = {}
    prompt_bodies: dict[str, str] = {}
    per_prompt_items: list[list[TaskItem]] = []

    for p_idx, template in enumerate(spec.prompts):
        pid = spec.prompt_id(p_idx)
        prompt_bodies[pid] = "<item cloze>" if spec._per_item_body else template.body
        rows = _score_chunked(spec, template, provider, scorer, jobs, provider_factory)
        kept_items = [it for it, row in zip(spec.items, rows) if row is not None]
        kept_rows = [row for row in rows if row is not None]
        skipped[pid] = [it.id for it, row in zip(spec.items, rows) if row is None]
        if not kept_items:
            raise PromptFailure(pid)
        tables.append(_canonical_table(spec, template, spec.method, kept_items, kept_rows))
        per_prompt_items.append(kept_items)

    reports = {}
    for name, fn in metric_fns.items():
        per_prompt = {}
        for p_idx, table in enumerate(tables):
            per_prompt[spec.prompt_id(p_idx)] = fn(spec, table, per_prompt_items[p_idx])
        reports[name] = _aggregate(per_prompt, spec, tables, per_prompt_items, fn)
    return TaskResult(
        name=spec.name,
        method=spec.method,
        kind=spec.kind,
        prompt_bodies=prompt_bodies,
        tables=tables,
        reports=reports,
        skipped=skipped,
    )


def _score_chunked(spec, template, provider, scorer, jobs, provider_factory):
    items = spec.items
    if jobs <= 1 or provider_factory is None or len(items) < 2 * jobs:
        return scorer(spec, template, items, provider)
    bounds = [(w * len(items)) // jobs for w in range(jobs + 1)]
    chunks = [items[bounds[w] : bounds[w + 1]] for w in range(jobs)]
    workers = [provider] + [provider_factory() for _ in range(jobs - 1)]
    try:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            futures = [
                pool.submit(scorer, spec, template, chunk, worker)
                for chunk, worker in zip(chunks, workers)
            ]
            rows: list = []
            for fut in futures:
                rows.extend(fut.result())
        return rows
    finally:
        for worker in workers[1:]:
            worker.close()


def _aggregate(
    per_prompt: dict[str, float],
    spec: TaskSpec,
    tables: list[ScoreTable],
    per_prompt_items: list[list[TaskItem]],
    fn,
) -> MetricReport:
    values = list(per_prompt.values())
    if not values:
        raise EmptyList("no per-prompt values")
    vmax = max(values)
    mean = math.fsum(values) / len(values)
    if len(values) > 1:
        var = math.fsum((v - mean) ** 2 for v in values) / (len(values) - 1)
        std = math.sqrt(var)
    else:
        std = 0.0
    ci = None
    level = None
    if spec.bootstrap is not None:
        best_idx = values.index(vmax)
        table = tables[best_idx]
        items = per_prompt_items[best_idx]

        def stat(indices: Sequence[int]) -> float:
            sub_rows = tuple(table.rows[i] for i in indices)
            sub_items = [items[i] for i in indices]
            sub_cands = (
                tuple(table.candidates[i] for i in indices)
                if isinstance(table.candidates, tuple)
                else table.candidates
            )
            sub = ScoreTable(
                method=table.method,
                items=tuple(it.id for it in sub_items),
                candidates=sub_cands,
                rows=sub_rows,
            )
            return fn(spec, sub, sub_items)

        cfg = spec.bootstrap
        ci = M.bootstrap_ci(stat, len(items), cfg.n_boot, cfg.level, cfg.seed)
        level = cfg.level
    return MetricReport(per_prompt=per_prompt, max=vmax, mean=mean, std=std, ci=ci, ci_level=level)
