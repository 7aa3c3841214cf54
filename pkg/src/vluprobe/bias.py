"""Streaming bigram counter for reporting-bias estimation.

Counts, over a line stream, every occurrence of each target word (n_w) and
every occurrence of a color token immediately preceding a target word (n_cw),
then estimates each word's color as argmax_c P(c|w) = n_cw / n_w with ties
broken by the earliest color in the configured order.

Tokenization is fixed: lowercase the line, then take maximal runs of Unicode
letters and digits; adjacency never crosses a line boundary. n_w counts the
word in every position, not only as a bigram's second element. Memory stays
bounded by |colors| * |targets| regardless of stream length, and counting
shards of a corpus then merging equals one pass over the whole corpus.
"""

from __future__ import annotations

import gzip
import re
from dataclasses import dataclass, field
from typing import Iterable

from .errors import NoColorEvidence, TaskValidationError, UnseenWord

_TOKEN = re.compile(r"[^\W_]+", re.UNICODE)


@dataclass
class BigramCounts:
    colors: tuple[str, ...]
    targets: frozenset[str]
    n_w: dict[str, int] = field(default_factory=dict)
    n_cw: dict[tuple[str, str], int] = field(default_factory=dict)

    def __post_init__(self):
        for word in self.targets:
            if len(word.split()) != 1:
                raise TaskValidationError(f"multiword target {word!r} rejected")
        for color in self.colors:
            if len(color.split()) != 1:
                raise TaskValidationError(f"multiword color {color!r} rejected")


def count_stream(lines: Iterable[str], colors, targets) -> BigramCounts:
    counts = BigramCounts(colors=tuple(colors), targets=frozenset(targets))
    color_set = set(counts.colors)
    target_set = counts.targets
    n_w = counts.n_w
    n_cw = counts.n_cw
    tokenize = _TOKEN.findall
    for line in lines:
        prev = None
        for token in tokenize(line.lower()):
            if token in target_set:
                n_w[token] = n_w.get(token, 0) + 1
                if prev in color_set:
                    key = (prev, token)
                    n_cw[key] = n_cw.get(key, 0) + 1
            prev = token
    return counts


def merge(parts: Iterable[BigramCounts]) -> BigramCounts:
    """Field-wise sum; all parts must share colors and targets."""
    parts = list(parts)
    if not parts:
        raise TaskValidationError("nothing to merge")
    first = parts[0]
    merged = BigramCounts(colors=first.colors, targets=first.targets)
    for part in parts:
        if part.colors != first.colors or part.targets != first.targets:
            raise TaskValidationError("cannot merge counters with different configs")
        for w, c in part.n_w.items():
            merged.n_w[w] = merged.n_w.get(w, 0) + c
        for key, c in part.n_cw.items():
            merged.n_cw[key] = merged.n_cw.get(key, 0) + c
    return merged


def color_prob(counts: BigramCounts, color: str, word: str) -> float:
    total = counts.n_w.get(word, 0)
    if total == 0:
        raise UnseenWord(repr(word))
    return counts.n_cw.get((color, word), 0) / total


def estimate_color(counts: BigramCounts, word: str) -> str:
    """argmax_c P(c|w); ties broken by earliest color in the ordered list."""
    if counts.n_w.get(word, 0) == 0:
        raise UnseenWord(repr(word))
    best = None
    best_count = 0
    for color in counts.colors:
        c = counts.n_cw.get((color, word), 0)
        if c > best_count:
            best, best_count = color, c
    if best is None:
        raise NoColorEvidence(repr(word))
    return best


def evaluate(counts: BigramCounts, golds) -> dict:
    """Accuracy over words with estimates; evidence-free words listed apart.

    golds is an iterable of ColorRecord-shaped objects (word, colors set).
    """
    per_word = {}
    no_evidence = []
    hits = 0
    evaluated = 0
    for record in golds:
        try:
            estimate = estimate_color(counts, record.word)
        except (UnseenWord, NoColorEvidence):
            no_evidence.append(record.word)
            continue
        hit = estimate in record.colors
        per_word[record.word] = {
            "estimate": estimate,
            "gold": sorted(record.colors),
            "hit": hit,
        }
        evaluated += 1
        hits += int(hit)
    accuracy = hits / evaluated if evaluated else float("nan")
    return {
        "accuracy": accuracy,
        "evaluated": evaluated,
        "no_evidence": no_evidence,
        "per_word": per_word,
    }


def write_tsv(counts: BigramCounts, path) -> None:
    """`word<TAB>color<TAB>count` rows plus a `word<TAB>*<TAB>total` row per
    word; words sorted, colors in configured order, zero rows omitted."""
    with open(path, "w", encoding="utf-8") as fh:
        for word in sorted(counts.n_w):
            for color in counts.colors:
                c = counts.n_cw.get((color, word), 0)
                if c:
                    fh.write(f"{word}\t{color}\t{c}\n")
            fh.write(f"{word}\t*\t{counts.n_w[word]}\n")


def open_lines(path) -> Iterable[str]:
    """Plain-text or gzip line stream, by extension."""
    if str(path).endswith(".gz"):
        return gzip.open(path, "rt", encoding="utf-8")
    return open(path, encoding="utf-8")


def read_word_list(path) -> list[str]:
    """One word per line; blanks and # comments skipped."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if line and not line.startswith("#"):
                out.append(line)
    return out
