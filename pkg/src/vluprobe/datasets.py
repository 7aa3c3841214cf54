"""Normalized dataset schemas, loaders with exact filter accounting, and the
builders that bind datasets and prompt files into runnable task specs.

All datasets arrive as JSONL, one record per line:

  concreteness  {"word": str, "pos": str, "score": float in [1,5]}
  color         {"word": str, "colors": [str]}
  shapeit       {"phrase": str, "shape": "rectangle"|"circle"|"triangle"}
  cities        {"question": str containing one [*], "answer": str}
  cbt           {"sentence": str containing one [*], "answer": str,
                 "candidates": [str * 10], "pos_group": "N"|"V"|"P"}
  imdb          {"review_id": str|int, "text": str, "label": "positive"|"negative"}
  mnli          {"premise": str, "hypothesis": str,
                 "label": "contradiction"|"neutral"|"entailment"}

Every loader is total: each input line either yields a record or lands in the
load report under a named drop reason, and input_count = kept + sum(dropped).
Provider-dependent filters (single-token answers, sentence length) use the
providers passed in; an empty provider list disables them.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from pathlib import Path

from .errors import (
    ParseError,
    ScoreOutOfRange,
    TaskValidationError,
    UnknownColor,
    UnknownShape,
)
from .probing import (
    ADJECTIVE_FORM,
    FILLER,
    NOUN_FORM,
    PROVIDER_MASK,
    REMOVE_SLOT,
    CandidateSet,
    PromptTemplate,
    SlotPolicy,
    parse_prompt_file,
)
from .providers import ModelProvider
from .rng import choose_index
from .tasks import (
    BINARY,
    CATEGORICAL,
    REGRESSION,
    RETRIEVAL,
    BootstrapConfig,
    TaskItem,
    TaskSpec,
)

COLORS = ("red", "orange", "yellow", "green", "blue", "black", "white", "grey", "brown")
SHAPES = ("rectangle", "circle", "triangle")
SHAPE_ADJECTIVES = {"rectangle": "rectangular", "circle": "circular", "triangle": "triangular"}
USA_EQUIVALENCE = frozenset({"u.s.", "us", "usa", "u.s.a.", "u.s"})
CBT_GROUPS = ("N", "V", "P")

_SENTENCE_SPLIT = re.compile(r"(?<=[.!?])\s+")


@dataclass
class LoadReport:
    input_count: int = 0
    kept: int = 0
    dropped: dict[str, int] = field(default_factory=dict)
    notes: dict[str, int] = field(default_factory=dict)

    def drop(self, reason: str) -> None:
        self.dropped[reason] = self.dropped.get(reason, 0) + 1

    def note(self, what: str) -> None:
        self.notes[what] = self.notes.get(what, 0) + 1

    def balanced(self) -> bool:
        return self.input_count == self.kept + sum(self.dropped.values())


@dataclass
class LoadResult:
    """Records plus the accounting report; iterates like the record list."""

    records: list
    report: LoadReport

    def __iter__(self):
        return iter(self.records)

    def __len__(self):
        return len(self.records)

    def __getitem__(self, i):
        return self.records[i]


@dataclass(frozen=True)
class ConcretenessRecord:
    word: str
    pos: str
    score: float


@dataclass(frozen=True)
class ColorRecord:
    word: str
    colors: frozenset[str]


@dataclass(frozen=True)
class ShapeRecord:
    phrase: str
    shape: str


@dataclass(frozen=True)
class ClozeQuestion:
    text: str  # contains exactly one [*]
    answer: str
    candidate_pool: CandidateSet


@dataclass(frozen=True)
class CbtItem:
    sentence: str  # contains exactly one [*]
    answer: str
    candidates: tuple[str, ...]
    pos_group: str


@dataclass(frozen=True)
class ReviewRecord:
    review_id: str
    sentence: str
    label: str


@dataclass(frozen=True)
class NliPair:
    premise: str
    hypothesis: str
    label: int  # contradiction -> 0, entailment -> 1


def _read_jsonl(path):
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise ParseError(line_no, f"line {line_no}: {e}") from e
            if not isinstance(obj, dict):
                raise ParseError(line_no, f"line {line_no}: expected an object")
            yield line_no, obj


def _require(obj: dict, key: str, line_no: int):
    if key not in obj:
        raise ParseError(line_no, f"line {line_no}: missing field {key!r}")
    return obj[key]


def load_concreteness(path) -> LoadResult:
    """Keep unigram records with pos == "Noun"; scores must lie in [1, 5]."""
    report = LoadReport()
    records = []
    for line_no, obj in _read_jsonl(path):
        report.input_count += 1
        word = str(_require(obj, "word", line_no))
        pos = str(_require(obj, "pos", line_no))
        score = float(_require(obj, "score", line_no))
        if not 1.0 <= score <= 5.0:
            raise ScoreOutOfRange(f"line {line_no}: score {score} outside [1,5]")
        if len(word.split()) != 1:
            report.drop("not_unigram")
            continue
        if pos != "Noun":
            report.drop("not_noun")
            continue
        records.append(ConcretenessRecord(word=word, pos=pos, score=score))
        report.kept += 1
    return LoadResult(records, report)


def load_color(path, dataset: str) -> LoadResult:
    """CTD loads verbatim against the 9-color vocabulary. NCD additionally
    tolerates 'purple' labels: they are stripped (noted in the report) and
    records left with no labels are dropped."""
    dataset = dataset.lower()
    if dataset not in ("ctd", "ncd"):
        raise TaskValidationError(f"unknown color dataset {dataset!r}")
    report = LoadReport()
    records = []
    for line_no, obj in _read_jsonl(path):
        report.input_count += 1
        word = str(_require(obj, "word", line_no))
        raw_colors = _require(obj, "colors", line_no)
        if not isinstance(raw_colors, list) or not raw_colors:
            raise ParseError(line_no, f"line {line_no}: colors must be a non-empty list")
        labels = []
        for value in raw_colors:
            value = str(value).lower()
            if value in COLORS:
                labels.append(value)
            elif value == "purple" and dataset == "ncd":
                report.note("purple_label_stripped")
            else:
                raise UnknownColor(f"line {line_no}: {value!r}")
        if not labels:
            report.drop("purple_only")
            continue
        records.append(ColorRecord(word=word, colors=frozenset(labels)))
        report.kept += 1
    return LoadResult(records, report)


def load_shapeit(path) -> LoadResult:
    report = LoadReport()
    records = []
    for line_no, obj in _read_jsonl(path):
        report.input_count += 1
        phrase = str(_require(obj, "phrase", line_no))
        shape = str(_require(obj, "shape", line_no)).lower()
        if shape not in SHAPES:
            raise UnknownShape(f"line {line_no}: {shape!r}")
        records.append(ShapeRecord(phrase=phrase, shape=shape))
        report.kept += 1
    return LoadResult(records, report)


def save_shapeit(records, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps({"phrase": rec.phrase, "shape": rec.shape}) + "\n")


def shape_adjective(shape: str) -> str:
    if shape not in SHAPE_ADJECTIVES:
        raise UnknownShape(repr(shape))
    return SHAPE_ADJECTIVES[shape]


def shape_from_adjective(adjective: str) -> str:
    for noun, adj in SHAPE_ADJECTIVES.items():
        if adj == adjective:
            return noun
    raise UnknownShape(repr(adjective))


def _is_single_token(word: str, providers) -> bool:
    return all(p.token_count(word) == 1 for p in providers)


def load_cities(path, providers: list[ModelProvider] = ()) -> LoadResult:
    """Drop questions whose answer is multi-token for any provider; the
    candidate pool is the unique retained answers in first-seen order."""
    report = LoadReport()
    rows = []
    for line_no, obj in _read_jsonl(path):
        report.input_count += 1
        question = str(_require(obj, "question", line_no))
        answer = str(_require(obj, "answer", line_no))
        if question.count("[*]") != 1:
            raise ParseError(line_no, f"line {line_no}: question needs exactly one [*]")
        if providers and not _is_single_token(answer, providers):
            report.drop("multi_token_answer")
            continue
        rows.append((question, answer))
        report.kept += 1
    pool_order = []
    seen = set()
    for _, answer in rows:
        if answer not in seen:
            seen.add(answer)
            pool_order.append(answer)
    records = []
    if rows:
        pool = CandidateSet(tuple(pool_order))
        records = [ClozeQuestion(text=q, answer=a, candidate_pool=pool) for q, a in rows]
    return LoadResult(records, report)


def load_cbt(path, providers: list[ModelProvider] = ()) -> tuple[dict[str, list[CbtItem]], LoadReport]:
    """Returns items per POS group. Drops sentences longer than the smallest
    provider max_tokens and items whose answer is multi-token anywhere."""
    report = LoadReport()
    threshold = min((p.info().max_tokens for p in providers), default=None)
    groups: dict[str, list[CbtItem]] = {g: [] for g in CBT_GROUPS}
    for line_no, obj in _read_jsonl(path):
        report.input_count += 1
        sentence = str(_require(obj, "sentence", line_no))
        answer = str(_require(obj, "answer", line_no))
        candidates = _require(obj, "candidates", line_no)
        pos_group = str(_require(obj, "pos_group", line_no))
        if pos_group not in CBT_GROUPS:
            raise ParseError(line_no, f"line {line_no}: pos_group must be one of {CBT_GROUPS}")
        if not isinstance(candidates, list) or len(candidates) != 10:
            raise ParseError(line_no, f"line {line_no}: exactly 10 candidates required")
        if sentence.count("[*]") != 1:
            raise ParseError(line_no, f"line {line_no}: sentence needs exactly one [*]")
        if answer not in candidates:
            raise ParseError(line_no, f"line {line_no}: answer not among candidates")
        if threshold is not None and any(
            p.token_count(sentence) > threshold for p in providers
        ):
            report.drop("too_long")
            continue
        if providers and not _is_single_token(answer, providers):
            report.drop("multi_token_answer")
            continue
        groups[pos_group].append(
            CbtItem(
                sentence=sentence,
                answer=answer,
                candidates=tuple(str(c) for c in candidates),
                pos_group=pos_group,
            )
        )
        report.kept += 1
    return groups, report


def split_sentences(text: str) -> list[str]:
    """Split on '.', '!' or '?' followed by whitespace; keep terminators."""
    parts = [p.strip() for p in _SENTENCE_SPLIT.split(text)]
    return [p for p in parts if p]


def load_imdb(path, seed: int = 0, providers: list[ModelProvider] = ()) -> LoadResult:
    """One uniformly chosen sentence per review, keyed by (seed, review_id) so
    the choice is stable across runs; over-length choices are dropped."""
    report = LoadReport()
    threshold = min((p.info().max_tokens for p in providers), default=None)
    records = []
    for line_no, obj in _read_jsonl(path):
        report.input_count += 1
        review_id = str(_require(obj, "review_id", line_no))
        text = str(_require(obj, "text", line_no))
        label = str(_require(obj, "label", line_no)).lower()
        if label not in ("positive", "negative"):
            raise ParseError(line_no, f"line {line_no}: label must be positive|negative")
        sentences = split_sentences(text)
        if not sentences:
            report.drop("no_sentences")
            continue
        pick = sentences[choose_index(len(sentences), seed, review_id.encode("utf-8"))]
        if threshold is not None and any(p.token_count(pick) > threshold for p in providers):
            report.drop("too_long")
            continue
        records.append(ReviewRecord(review_id=review_id, sentence=pick, label=label))
        report.kept += 1
    return LoadResult(records, report)


def load_mnli(path) -> LoadResult:
    report = LoadReport()
    records = []
    label_map = {"contradiction": 0, "entailment": 1}
    for line_no, obj in _read_jsonl(path):
        report.input_count += 1
        premise = str(_require(obj, "premise", line_no))
        hypothesis = str(_require(obj, "hypothesis", line_no))
        label = str(_require(obj, "label", line_no)).lower()
        if label == "neutral":
            report.drop("neutral")
            continue
        if label not in label_map:
            raise ParseError(line_no, f"line {line_no}: unknown label {label!r}")
        records.append(NliPair(premise=premise, hypothesis=hypothesis, label=label_map[label]))
        report.kept += 1
    return LoadResult(records, report)


def single_token_filter(words, providers) -> list[str]:
    """Keep words that are one token under every provider; [] providers keep all."""
    return [w for w in words if _is_single_token(w, providers)]


# ---------------------------------------------------------------------------
# Task building: dataset + prompt file -> TaskSpec
# ---------------------------------------------------------------------------


def _slot_policy_from(config) -> SlotPolicy:
    if config is None:
        return SlotPolicy(REMOVE_SLOT)
    if isinstance(config, str):
        if config in (REMOVE_SLOT, PROVIDER_MASK):
            return SlotPolicy(config)
        raise TaskValidationError(f"unknown slot policy {config!r}")
    if isinstance(config, dict) and "filler" in config:
        return SlotPolicy(FILLER, filler=str(config["filler"]))
    raise TaskValidationError(f"bad slot policy {config!r}")


def _load_prompts(config: dict, base_dir: Path) -> list[PromptTemplate]:
    path = Path(config["file"])
    if not path.is_absolute():
        path = base_dir / path
    policy = _slot_policy_from(config.get("slot_policy"))
    forms = config.get("candidate_forms", [NOUN_FORM])
    for form in forms:
        if form not in (NOUN_FORM, ADJECTIVE_FORM):
            raise TaskValidationError(f"unknown candidate form {form!r}")
    bases = parse_prompt_file(path)
    out = []
    for form in forms:
        for tpl in bases:
            out.append(replace(tpl, slot_policy=policy, candidate_form=form))
    return out


def task_from_config(config: dict, base_dir, provider: ModelProvider | None = None) -> TaskSpec:
    """Build a runnable TaskSpec from a validated task description.

    provider participates in dataset filtering when the description sets
    filter_with_provider (default true) and a provider is given.
    """
    base_dir = Path(base_dir)
    ds = config["dataset"]
    fmt = ds["format"]
    path = Path(ds["path"])
    if not path.is_absolute():
        path = base_dir / path
    providers = [provider] if (provider is not None and config.get("filter_with_provider", True)) else []

    kind = config["kind"]
    method = config["method"]
    name = config["name"]
    metrics = list(config["metrics"])
    bootstrap = None
    if "bootstrap" in config:
        b = config["bootstrap"]
        bootstrap = BootstrapConfig(
            n_boot=int(b.get("n_boot", 200)),
            level=float(b.get("level", 0.95)),
            seed=int(b.get("seed", 0)),
        )

    prompts: list[PromptTemplate] = []
    if "prompts" in config:
        prompts = _load_prompts(config["prompts"], base_dir)

    # Per-item-body formats (cities, cbt) take the slot policy at top level;
    # cities defaults to inserting the word "place" into the blank.
    slot_policy: SlotPolicy | None = None
    if "slot_policy" in config:
        slot_policy = _slot_policy_from(config["slot_policy"])
    elif fmt == "cities":
        slot_policy = SlotPolicy(FILLER, filler="place")

    surface_forms: dict[str, dict[str, str]] = {}
    global_candidates: CandidateSet | None = None
    items: list[TaskItem] = []
    equivalence: list[frozenset[str]] = []

    if fmt == "concreteness":
        result = load_concreteness(path)
        items = [
            TaskItem(id=r.word, slot_value=r.word, gold=r.score) for r in result.records
        ]
    elif fmt == "color":
        result = load_color(path, ds.get("variant", "ctd"))
        candidates = config.get("candidates", list(COLORS))
        candidates = single_token_filter([str(c) for c in candidates], providers)
        global_candidates = CandidateSet(tuple(candidates))
        items = [TaskItem(id=r.word, word=r.word, gold=r.colors) for r in result.records]
    elif fmt == "shapeit":
        result = load_shapeit(path)
        candidates = config.get("candidates", list(SHAPES))
        global_candidates = CandidateSet(tuple(str(c) for c in candidates))
        surface_forms = {ADJECTIVE_FORM: dict(SHAPE_ADJECTIVES)}
        items = [
            TaskItem(id=r.phrase, word=r.phrase, gold=frozenset({r.shape}))
            for r in result.records
        ]
    elif fmt == "cities":
        result = load_cities(path, providers)
        equivalence = [USA_EQUIVALENCE]
        items = [
            TaskItem(id=f"q{idx:04d}", body=r.text, gold=r.answer, candidates=r.candidate_pool)
            for idx, r in enumerate(result.records)
        ]
    elif fmt == "cbt":
        groups, _report = load_cbt(path, providers)
        group = ds.get("group", "N")
        if group not in CBT_GROUPS:
            raise TaskValidationError(f"unknown CBT group {group!r}")
        items = [
            TaskItem(
                id=f"s{idx:05d}",
                body=r.sentence,
                gold=frozenset({r.answer}),
                candidates=CandidateSet(r.candidates),
            )
            for idx, r in enumerate(groups[group])
        ]
    elif fmt == "imdb":
        result = load_imdb(path, seed=int(ds.get("seed", 0)), providers=providers)
        items = [
            TaskItem(id=r.review_id, review=r.sentence, gold=frozenset({r.label}))
            for r in result.records
        ]
    else:
        raise TaskValidationError(f"unknown dataset format {fmt!r}")

    if not items:
        raise TaskValidationError(f"dataset {path} yielded no items")

    return TaskSpec(
        name=name,
        kind=kind,
        method=method,
        prompts=prompts,
        items=items,
        metrics=metrics,
        candidates=global_candidates,
        surface_forms=surface_forms,
        equivalence=equivalence,
        bootstrap=bootstrap,
        slot_policy=slot_policy,
    )
