# Copyright (c) 2024, the aspectprune authors
# All rights reserved.
#
# Redistribution and use in source and binary forms, with or without
# modification, are permitted provided that the following conditions are met:
#
# 1. Redistributions of source code must retain the above copyright notice,
#    this list of conditions and the following disclaimer.
#
# 2. Redistributions in binary form must reproduce the above copyright
#    notice, this list of conditions and the following disclaimer in the
#    documentation and/or other materials provided with the distribution.
#
# THIS SOFTWARE IS PROVIDED BY THE COPYRIGHT HOLDERS AND CONTRIBUTORS "AS IS"
# AND ANY EXPRESS OR IMPLIED WARRANTIES, INCLUDING, BUT NOT LIMITED TO, THE
# IMPLIED WARRANTIES OF MERCHANTABILITY AND FITNESS FOR A PARTICULAR PURPOSE
# ARE DISCLAIMED. IN NO EVENT SHALL THE COPYRIGHT HOLDER OR CONTRIBUTORS BE
# LIABLE FOR ANY DIRECT, INDIRECT, INCIDENTAL, SPECIAL, EXEMPLARY, OR
# CONSEQUENTIAL DAMAGES (INCLUDING, BUT NOT LIMITED TO, PROCUREMENT OF
# SUBSTITUTE GOODS OR SERVICES; LOSS OF USE, DATA, OR PROFITS; OR BUSINESS
# INTERRUPTION) HOWEVER CAUSED AND ON ANY THEORY OF LIABILITY, WHETHER IN
# CONTRACT, STRICT LIABILITY, OR TORT (INCLUDING NEGLIGENCE OR OTHERWISE)
# ARISING IN ANY WAY OUT OF THE USE OF THIS SOFTWARE, EVEN IF ADVISED OF THE
# POSSIBILITY OF SUCH DAMAGE.

r"""Summary evaluation metrics.

Reference implementations of ROUGE-1, ROUGE-2, ROUGE-L, and of METEOR
with exact and Porter stem matching stages (no synonym stage).

All the functions here are pure.
"""

import math
import string
from collections import Counter
from dataclasses import asdict
from dataclasses import dataclass
from typing import Dict
from typing import List
from typing import Optional
from typing import Sequence
from typing import Tuple

from nltk.stem.porter import PorterStemmer

from .base import Literal

StemmerName = Literal['none', 'porter']

Triple = Tuple[float, float, float]

EXACT_ALIGNMENT_MAX = 64
r"""Longest token sequence aligned exactly by METEOR."""

_PUNCT_TABLE = str.maketrans('', '', string.punctuation)

_stemmer = PorterStemmer()


@dataclass(frozen=True)
class MetricTokenization:
    r"""Metric tokenization settings."""

    lowercase: bool = True
    strip_punct: bool = True
    stemmer: StemmerName = 'none'

    def __post_init__(self):
        if self.stemmer not in ('none', 'porter'):
            raise ValueError(f'unknown stemmer: {self.stemmer!r}')


ROUGE_TOKENIZATION = MetricTokenization()
r"""Default ROUGE tokenization: lowercase, no punctuation, no stemming."""

METEOR_TOKENIZATION = MetricTokenization(stemmer='porter')
r"""Default METEOR tokenization: as ROUGE, with the stem matching stage."""


@dataclass(frozen=True)
class MetricReport:
    r"""Metrics of a candidate against a reference."""

    rouge1_p: float = 0.0
    rouge1_r: float = 0.0
    rouge1_f: float = 0.0
    rouge2_p: float = 0.0
    rouge2_r: float = 0.0
    rouge2_f: float = 0.0
    rougeL_p: float = 0.0
    rougeL_r: float = 0.0
    rougeL_f: float = 0.0
    meteor: float = 0.0

    def to_dict(self) -> Dict[str, float]:

        return asdict(self)


METRIC_NAMES: Tuple[str, ...] = tuple(MetricReport.__dataclass_fields__)
r"""Names of the :class:`MetricReport` values."""


def stem(word: str) -> str:
    r"""Porter stem of a word.

    Examples:
        >>> stem('cats')
        'cat'
        >>> stem('running')
        'run'
    """
    return _stemmer.stem(word)


def tokenize(text: str, cfg: MetricTokenization = ROUGE_TOKENIZATION) -> List[str]:
    r"""Splits a text into metric tokens.

    Examples:
        >>> tokenize('The cat, sat!')
        ['the', 'cat', 'sat']
        >>> tokenize('The cats sat', MetricTokenization(stemmer='porter'))
        ['the', 'cat', 'sat']
    """
    tokens = []
    for word in text.split():
        if cfg.lowercase:
            word = word.lower()
        if cfg.strip_punct:
            word = word.translate(_PUNCT_TABLE)
        if word:
            tokens.append(word)

    if cfg.stemmer == 'porter':
        tokens = [stem(token) for token in tokens]
    return tokens


def f1_score(precision: float, recall: float) -> float:
    r"""Harmonic mean of precision and recall; 0 when both are 0."""

    total = precision + recall
    return (2 * precision * recall / total) if total > 0 else 0.0


def ngrams(tokens: Sequence[str], n: int) -> Counter:
    r"""Counts the n-grams of a token sequence."""

    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def _overlap_triple(overlap: int, cand_total: int, ref_total: int) -> Triple:

    precision = overlap / cand_total if cand_total else 0.0
    recall = overlap / ref_total if ref_total else 0.0
    return precision, recall, f1_score(precision, recall)


# ----------------------------------------------------------------------------

def rouge_n(
    candidate: str,
    reference: str,
    n: int = 1,
    cfg: MetricTokenization = ROUGE_TOKENIZATION,
) -> Triple:
    r"""ROUGE-N score.

    Overlapping n-grams are counted with clipping, i.e. each n-gram counts
    at most as many times as it appears in the other text.

    Args:
        candidate (str):
            Candidate summary.

        reference (str):
            Reference summary.

        n (int):
            N-gram order.

        cfg (:class:`MetricTokenization`):
            Tokenization.

    Returns:
        tuple of float: ``(precision, recall, f1)``; all zeros when either
        n-gram set is empty.

    Examples:
        >>> p, r, f = rouge_n('the cat sat', 'the cat ran', 1)
        >>> round(p, 6), round(r, 6), round(f, 6)
        (0.666667, 0.666667, 0.666667)
        >>> rouge_n('a b', 'c d', 2)
        (0.0, 0.0, 0.0)
    """
    if n < 1:
        raise ValueError('non-positive n-gram order')

    cand = ngrams(tokenize(candidate, cfg), n)
    ref = ngrams(tokenize(reference, cfg), n)
    cand_total = sum(cand.values())
    ref_total = sum(ref.values())
    if not cand_total or not ref_total:
        return 0.0, 0.0, 0.0

    overlap = sum((cand & ref).values())
    return _overlap_triple(overlap, cand_total, ref_total)


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    r"""Longest common subsequence length, by dynamic programming.

    Examples:
        >>> lcs_length('the cat sat on mat'.split(), 'the cat mat'.split())
        3
    """
    if len(a) < len(b):
        a, b = b, a
    previous = [0] * (len(b) + 1)

    for item in a:
        current = [0]
        for j, other in enumerate(b):
            if item == other:
                current.append(previous[j] + 1)
            else:
                current.append(max(previous[j + 1], current[j]))
        previous = current

    return previous[-1]


def rouge_l(
    candidate: str,
    reference: str,
    cfg: MetricTokenization = ROUGE_TOKENIZATION,
) -> Triple:
    r"""ROUGE-L score, by longest common subsequence.

    Examples:
        >>> p, r, f = rouge_l('the cat sat on mat', 'the cat mat')
        >>> round(p, 6), round(r, 6), round(f, 6)
        (0.6, 1.0, 0.75)
        >>> rouge_l('', 'the cat')
        (0.0, 0.0, 0.0)
    """
    cand = tokenize(candidate, cfg)
    ref = tokenize(reference, cfg)
    if not cand or not ref:
        return 0.0, 0.0, 0.0

    return _overlap_triple(lcs_length(cand, ref), len(cand), len(ref))


# ----------------------------------------------------------------------------

Alignment = List[Tuple[int, int]]


def count_chunks(alignment: Alignment) -> int:
    r"""Counts the runs of an alignment contiguous in both sequences.

    Examples:
        >>> count_chunks([(0, 0), (1, 1), (2, 4), (3, 5)])
        2
        >>> count_chunks([])
        0
    """
    chunks = 0
    previous = None
    for i, j in sorted(alignment):
        if previous is None or (i, j) != (previous[0] + 1, previous[1] + 1):
            chunks += 1
        previous = (i, j)
    return chunks


def _greedy_stage(
    cand_keys: Sequence[str],
    ref_keys: Sequence[str],
    cand_free: List[bool],
    ref_free: List[bool],
    aligned: Dict[int, int],
) -> None:

    positions: Dict[str, List[int]] = {}
    for j, key in enumerate(ref_keys):
        if ref_free[j]:
            positions.setdefault(key, []).append(j)

    for i, key in enumerate(cand_keys):
        if not cand_free[i] or not positions.get(key):
            continue
        options = positions[key]
        follow = aligned.get(i - 1, -2) + 1
        j = follow if follow in options else options[0]
        options.remove(j)
        aligned[i] = j
        cand_free[i] = ref_free[j] = False


def _greedy_alignment(cand: Sequence[str], ref: Sequence[str],
                      cand_stems: Sequence[str], ref_stems: Sequence[str]) -> Tuple[Alignment, int]:

    cand_free = [True] * len(cand)
    ref_free = [True] * len(ref)
    aligned: Dict[int, int] = {}
    _greedy_stage(cand, ref, cand_free, ref_free, aligned)
    exact = len(aligned)
    _greedy_stage(cand_stems, ref_stems, cand_free, ref_free, aligned)
    return sorted(aligned.items()), exact


class _AlignmentSearch:
    r"""Branch and bound over the chunk count of maximal alignments.

    Candidate tokens are decided in order; a state is identified by the
    candidate index, the reference index continuing the current chunk, and
    the masks of used and exactly matched reference tokens. For each state,
    the chunk count still needed by any completion is memoized once the
    state is fully explored.
    """

    def __init__(self, cand, ref, cand_stems, ref_stems, exact, total, best):

        self.cand = cand
        self.ref = ref
        self.size = len(cand)
        self.exact = exact
        self.total = total
        self.best = best
        self.best_chunks = count_chunks(best)
        self.memo: Dict[Tuple[int, int, int, int], int] = {}

        width = len(ref)
        self.options: List[List[Tuple[int, bool]]] = []
        for i in range(self.size):
            row = [(j, True) for j in range(width) if cand[i] == ref[j]]
            row += [(j, False) for j in range(width)
                    if cand[i] != ref[j] and cand_stems[i] == ref_stems[j]]
            self.options.append(row)

        self.matchable_after = [0] * (self.size + 1)
        for i in range(self.size - 1, -1, -1):
            self.matchable_after[i] = self.matchable_after[i + 1] + bool(self.options[i])

        # Diagonal runs of matchable pairs bound the length of any chunk
        self.runs = [[0] * (width + 1) for _ in range(self.size + 1)]
        for i in range(self.size - 1, -1, -1):
            for j in range(width - 1, -1, -1):
                if cand[i] == ref[j] or cand_stems[i] == ref_stems[j]:
                    self.runs[i][j] = self.runs[i + 1][j + 1] + 1
        self.longest_after = [0] * (self.size + 1)
        for i in range(self.size - 1, -1, -1):
            self.longest_after[i] = max(self.longest_after[i + 1], max(self.runs[i]))

        cand_counts = Counter(cand)
        ref_counts = Counter(ref)
        self.exact_needed = {word: min(count, ref_counts[word]) for word, count in cand_counts.items()}
        self.exact_done: Dict[str, int] = Counter()
        self.cand_left: Dict[str, int] = cand_counts
        self.ref_left: Dict[str, int] = ref_counts

        self.used_mask = 0
        self.exact_mask = 0
        self.pairs: Alignment = []

    def run(self) -> Alignment:

        self._visit(0, None, 0, 0, 0)
        return self.best

    def _feasible(self, word: str) -> bool:

        needed = self.exact_needed.get(word, 0) - self.exact_done[word]
        return needed <= min(self.cand_left[word], self.ref_left[word])

    def _visit(self, i, follow, matched, exact, chunks):

        budget = self.best_chunks - chunks
        if budget <= 0:
            return
        remaining = self.total - matched
        if remaining > self.matchable_after[i]:
            return
        if i == self.size:
            if exact == self.exact:
                self.best = list(self.pairs)
                self.best_chunks = chunks
            return

        carry = self.runs[i][follow] if follow is not None else 0
        if remaining > carry and -(-(remaining - carry) // self.longest_after[i]) >= budget:
            return

        key = (i, -1 if follow is None else follow, self.used_mask, self.exact_mask)
        if self.memo.get(key, 0) >= budget:
            return

        word = self.cand[i]
        self.cand_left[word] -= 1
        runs = self.runs[i]
        ordered = sorted(self.options[i], key=lambda option: (option[0] != follow, -runs[option[0]]))

        for j, is_exact in ordered:
            bit = 1 << j
            if self.used_mask & bit:
                continue
            ref_word = self.ref[j]
            self.used_mask |= bit
            self.ref_left[ref_word] -= 1
            if is_exact:
                self.exact_mask |= bit
                self.exact_done[word] += 1

            if self._feasible(word) and self._feasible(ref_word):
                self.pairs.append((i, j))
                self._visit(i + 1, j + 1, matched + 1, exact + is_exact, chunks + (j != follow))
                self.pairs.pop()

            if is_exact:
                self.exact_done[word] -= 1
                self.exact_mask ^= bit
            self.ref_left[ref_word] += 1
            self.used_mask ^= bit

        if self._feasible(word):
            self._visit(i + 1, None, matched, exact, chunks)

        self.cand_left[word] += 1
        self.memo[key] = self.best_chunks - chunks


def meteor_alignment(
    cand: Sequence[str],
    ref: Sequence[str],
    cand_stems: Optional[Sequence[str]] = None,
    ref_stems: Optional[Sequence[str]] = None,
) -> Alignment:
    r"""Aligns candidate and reference tokens, METEOR style.

    The exact matching stage comes first, then the stem stage matches the
    remaining tokens. Among the alignments with the most matches, the one
    with the fewest chunks is searched exhaustively for sequences up to
    :data:`EXACT_ALIGNMENT_MAX` tokens, greedily beyond.

    Args:
        cand (list of str):
            Candidate tokens.

        ref (list of str):
            Reference tokens.

        cand_stems (list of str):
            Candidate stems; no stem stage if ``None``.

        ref_stems (list of str):
            Reference stems; no stem stage if ``None``.

    Returns:
        list: Sorted ``(candidate_index, reference_index)`` pairs.
    """
    if cand_stems is None or ref_stems is None:
        cand_stems = [f'\0{i}' for i in range(len(cand))]
        ref_stems = [f'\1{j}' for j in range(len(ref))]

    greedy, exact = _greedy_alignment(cand, ref, cand_stems, ref_stems)
    if max(len(cand), len(ref)) > EXACT_ALIGNMENT_MAX or len(greedy) < 2:
        return greedy

    search = _AlignmentSearch(cand, ref, cand_stems, ref_stems, exact, len(greedy), greedy)
    return search.run()


def meteor(
    candidate: str,
    reference: str,
    cfg: MetricTokenization = METEOR_TOKENIZATION,
) -> float:
    r"""METEOR score, with exact and stem matching.

    With *m* matches, precision ``P = m / len(candidate)`` and recall
    ``R = m / len(reference)`` combine into ``Fmean = 10PR / (R + 9P)``;
    the fragmentation penalty is ``0.5 * (chunks / m) ** 3``, and the score
    is ``Fmean * (1 - penalty)``.

    Args:
        candidate (str):
            Candidate summary.

        reference (str):
            Reference summary.

        cfg (:class:`MetricTokenization`):
            Tokenization; its ``stemmer`` enables the stem stage.

    Returns:
        float: Score in ``[0, 1]``; 0 without matches.

    Examples:
        >>> round(meteor('a quick brown fox jumps', 'a quick brown fox jumps'), 6)
        0.996
        >>> round(meteor('cats run', 'cat runs'), 6)
        0.9375
        >>> meteor('one two', 'three four')
        0.0
    """
    surface = MetricTokenization(cfg.lowercase, cfg.strip_punct, 'none')
    cand = tokenize(candidate, surface)
    ref = tokenize(reference, surface)
    if not cand or not ref:
        return 0.0

    if cfg.stemmer == 'porter':
        alignment = meteor_alignment(cand, ref, [stem(t) for t in cand], [stem(t) for t in ref])
    else:
        alignment = meteor_alignment(cand, ref)

    matches = len(alignment)
    if not matches:
        return 0.0

    precision = matches / len(cand)
    recall = matches / len(ref)
    fmean = 10 * precision * recall / (recall + 9 * precision)
    penalty = 0.5 * (count_chunks(alignment) / matches) ** 3
    return min(max(fmean * (1 - penalty), 0.0), 1.0)


# ----------------------------------------------------------------------------

def score_pair(
    candidate: str,
    reference: str,
    rouge_cfg: MetricTokenization = ROUGE_TOKENIZATION,
    meteor_cfg: MetricTokenization = METEOR_TOKENIZATION,
) -> MetricReport:
    r"""Computes all the metrics of a candidate against its reference."""

    r1 = rouge_n(candidate, reference, 1, rouge_cfg)
    r2 = rouge_n(candidate, reference, 2, rouge_cfg)
    rl = rouge_l(candidate, reference, rouge_cfg)
    return MetricReport(*r1, *r2, *rl, meteor(candidate, reference, meteor_cfg))


def mean_report(reports: Sequence[MetricReport]) -> MetricReport:
    r"""Arithmetic mean of metric reports.

    Raises:
        :obj:`ValueError`: No reports.
    """
    if not reports:
        raise ValueError('no reports')

    count = len(reports)
    means = [math.fsum(getattr(report, name) for report in reports) / count
             for name in METRIC_NAMES]
    return MetricReport(*means)
