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

r"""Aspect-driven document pruning.

Sentences are scored by the cosine similarity of their embeddings with the
embedding of the aspect; within each chunk, the best scoring sentences are
kept until their word count reaches a per-chunk budget *W*. Kept sentences
are then put back in their original document order.

Short documents bypass pruning altogether. Optionally, the least relevant
chunks are dropped first, and the pruning can be repeated with a decaying
budget until a global word target is met.

Ties are always broken in favour of the earlier document position.
"""

import logging
import math
import random
from dataclasses import dataclass
from typing import Callable
from typing import Dict
from typing import List
from typing import Mapping
from typing import Optional
from typing import Sequence
from typing import Tuple

from .base import BudgetUnreachable
from .embedder import EmbeddingVector
from .embedder import cosine
from .segmenter import Chunk
from .segmenter import Sentence
from .segmenter import chunk_per_sentence

_log = logging.getLogger(__name__)

Encoder = Callable[[Sequence[str]], List[EmbeddingVector]]
r"""Callable embedding a list of texts, like
:class:`aspectprune.embedder.CachedEmbedder`."""

DEFAULT_ASPECT_TEMPLATE = '{aspect}'
r"""Aspect embedding template; the bare aspect by default."""


@dataclass(frozen=True)
class AspectQuery:
    r"""Aspect text, with its embedding."""

    aspect: str
    embedding: EmbeddingVector


@dataclass(frozen=True)
class ScoredSentence:
    r"""Sentence with its aspect similarity."""

    sentence: Sentence
    chunk_index: int
    score: float


@dataclass(frozen=True)
class ScoredChunk:
    r"""Chunk with its aspect similarity."""

    chunk: Chunk
    score: float


@dataclass(frozen=True)
class PruneConfig:
    r"""Pruning settings.

    Attributes:
        per_chunk_budget_w (int):
            Per-chunk word budget *W*.

        global_target_words (int):
            Optional document word target, for :func:`recursive_prune`.

        bypass_threshold_words (int):
            Documents with fewer words are not pruned.

        chunk_drop_fraction (float):
            Fraction of least relevant chunks dropped before selection.

        recursion_decay (float):
            Budget multiplier between recursive rounds.

        max_recursion_rounds (int):
            Maximum recursive rounds.
    """

    per_chunk_budget_w: int = 128
    global_target_words: Optional[int] = None
    bypass_threshold_words: int = 1024
    chunk_drop_fraction: float = 0.0
    recursion_decay: float = 0.8
    max_recursion_rounds: int = 8

    def __post_init__(self):
        if self.per_chunk_budget_w < 1:
            raise ValueError('non-positive chunk budget')
        if self.global_target_words is not None and self.global_target_words < 1:
            raise ValueError('non-positive global target')
        if self.bypass_threshold_words < 1:
            raise ValueError('non-positive bypass threshold')
        if not 0.0 <= self.chunk_drop_fraction < 1.0:
            raise ValueError('chunk drop fraction out of range')
        if not 0.0 < self.recursion_decay < 1.0:
            raise ValueError('recursion decay out of range')
        if self.max_recursion_rounds < 1:
            raise ValueError('non-positive recursion rounds')


@dataclass(frozen=True)
class PrunedDocument:
    r"""Pruned document.

    Attributes:
        sentences (tuple of :class:`Sentence`):
            Kept sentences, in document order.

        total_words (int):
            Word count of the kept sentences.

        provenance (tuple):
            ``(chunk_index, score)`` for each kept sentence; the score is
            ``None`` when bypassed.

        bypassed (bool):
            The document was short enough to skip pruning.

        rounds (int):
            Pruning rounds applied.

        round_words (tuple of int):
            Word count before the first round, and after each round.
    """

    sentences: Tuple[Sentence, ...]
    total_words: int
    provenance: Tuple[Tuple[int, Optional[float]], ...]
    bypassed: bool = False
    rounds: int = 0
    round_words: Tuple[int, ...] = ()

    @property
    def text(self) -> str:
        return ' '.join(sentence.text for sentence in self.sentences)

    @property
    def doc_indices(self) -> List[int]:
        return [sentence.doc_index for sentence in self.sentences]


def make_query(
    aspect: str,
    encoder: Encoder,
    template: str = DEFAULT_ASPECT_TEMPLATE,
) -> AspectQuery:
    r"""Embeds an aspect.

    Args:
        aspect (str):
            Aspect text; must not be blank.

        encoder (callable):
            Text embedder.

        template (str):
            Format string applied to the aspect before embedding, with an
            ``{aspect}`` field.

    Returns:
        :class:`AspectQuery`: Aspect query.
    """
    if not aspect or not aspect.strip():
        raise ValueError('empty aspect')

    embedding, = encoder([template.format(aspect=aspect)])
    return AspectQuery(aspect, embedding)


def score_chunks(
    chunks: Sequence[Chunk],
    query: AspectQuery,
    encoder: Encoder,
) -> List[ScoredChunk]:
    r"""Scores whole chunks against the aspect.

    Returns:
        list of :class:`ScoredChunk`: One per chunk, in order.
    """
    vectors = encoder([chunk.text for chunk in chunks])
    return [ScoredChunk(chunk, cosine(vector, query.embedding))
            for chunk, vector in zip(chunks, vectors)]


def filter_chunks(
    scored: Sequence[ScoredChunk],
    drop_fraction: float,
) -> List[Chunk]:
    r"""Drops the least relevant chunks.

    The ``floor(n * drop_fraction)`` lowest scoring chunks are dropped; among
    equal scores, the later chunk is dropped first.

    Returns:
        list of :class:`Chunk`: Surviving chunks, in order.

    Examples:
        >>> from aspectprune.segmenter import Chunk
        >>> chunks = [Chunk(i, (), 0) for i in range(4)]
        >>> scored = [ScoredChunk(c, s) for c, s in zip(chunks, [0.9, 0.1, 0.5, 0.7])]
        >>> [c.chunk_index for c in filter_chunks(scored, 0.25)]
        [0, 2, 3]
    """
    if not 0.0 <= drop_fraction < 1.0:
        raise ValueError('chunk drop fraction out of range')

    count = len(scored)
    drop_count = int(math.floor(count * drop_fraction + 1e-9))
    if not drop_count:
        return [item.chunk for item in scored]

    ranking = sorted(range(count), key=lambda i: (scored[i].score, -i))
    dropped = set(ranking[:drop_count])
    return [item.chunk for i, item in enumerate(scored) if i not in dropped]


def _score_chunk_sentences(
    chunks: Sequence[Chunk],
    query: AspectQuery,
    encoder: Encoder,
) -> List[List[ScoredSentence]]:

    texts = [sentence.text for chunk in chunks for sentence in chunk.sentences]
    vectors = iter(encoder(texts) if texts else [])
    target = query.embedding

    return [[ScoredSentence(sentence, chunk.chunk_index, cosine(next(vectors), target))
             for sentence in chunk.sentences]
            for chunk in chunks]


def score_sentences(
    chunk: Chunk,
    query: AspectQuery,
    encoder: Encoder,
) -> List[ScoredSentence]:
    r"""Scores the sentences of a chunk against the aspect.

    Returns:
        list of :class:`ScoredSentence`: One per sentence, in document order.
    """
    return _score_chunk_sentences([chunk], query, encoder)[0]


def _take_until(
    ordered: Sequence[ScoredSentence],
    w: int,
) -> List[ScoredSentence]:

    selected = []
    words = 0
    for item in ordered:
        selected.append(item)
        words += item.sentence.word_count
        if words >= w:
            break
    selected.sort(key=lambda item: item.sentence.doc_index)
    return selected


def select_top_w(
    scored: Sequence[ScoredSentence],
    w: int,
) -> List[ScoredSentence]:
    r"""Selects the best sentences of a chunk, up to a word budget.

    Sentences are taken by descending score (ties: earlier first), and the
    selection stops as soon as the cumulative word count reaches `w`; the
    sentence crossing the budget is kept.

    Args:
        scored (list of :class:`ScoredSentence`):
            Scored sentences of one chunk.

        w (int):
            Word budget.

    Returns:
        list of :class:`ScoredSentence`: Selection, in document order.

    Examples:
        >>> from aspectprune.segmenter import Sentence
        >>> items = [ScoredSentence(Sentence(f's{i}', i, 10), 0, s)
        ...          for i, s in enumerate([0.9, 0.5, 0.8])]
        >>> [item.sentence.text for item in select_top_w(items, 15)]
        ['s0', 's2']
    """
    if w < 1:
        raise ValueError('non-positive budget')

    ordered = sorted(scored, key=lambda item: (-item.score, item.sentence.doc_index))
    return _take_until(ordered, w)


def select_random_w(
    scored: Sequence[ScoredSentence],
    w: int,
    rng: random.Random,
) -> List[ScoredSentence]:
    r"""Selects random sentences of a chunk, up to a word budget.

    Same stopping rule as :func:`select_top_w`, with a random order instead
    of the score order; a relevance-blind baseline.
    """
    if w < 1:
        raise ValueError('non-positive budget')

    ordered = list(scored)
    rng.shuffle(ordered)
    return _take_until(ordered, w)


def restrict_chunks(
    chunks: Sequence[Chunk],
    sentences: Sequence[Sentence],
) -> List[Chunk]:
    r"""Restricts chunks to a subset of their sentences.

    Chunk indices are kept; chunks left empty are removed.
    """
    keep = {sentence.doc_index for sentence in sentences}
    restricted = []
    for chunk in chunks:
        members = tuple(s for s in chunk.sentences if s.doc_index in keep)
        if members:
            restricted.append(Chunk(chunk.chunk_index, members, sum(s.word_count for s in members)))
    return restricted


def _assemble(
    selections: Sequence[Sequence[ScoredSentence]],
    rounds: int,
    round_words: Sequence[int],
) -> PrunedDocument:

    items = sorted((item for selection in selections for item in selection),
                   key=lambda item: item.sentence.doc_index)
    sentences = tuple(item.sentence for item in items)
    provenance = tuple((item.chunk_index, item.score) for item in items)
    total = sum(sentence.word_count for sentence in sentences)
    return PrunedDocument(sentences, total, provenance, False, rounds, tuple(round_words) + (total,))


def _bypass(
    sentences: Sequence[Sentence],
    chunks: Sequence[Chunk],
) -> PrunedDocument:

    owner: Dict[int, int] = {}
    for chunk in chunks:
        for sentence in chunk.sentences:
            owner[sentence.doc_index] = chunk.chunk_index

    total = sum(sentence.word_count for sentence in sentences)
    provenance = tuple((owner.get(s.doc_index, 0), None) for s in sentences)
    return PrunedDocument(tuple(sentences), total, provenance, True, 0, (total,))


def prune_document(
    sentences: Sequence[Sentence],
    chunks: Sequence[Chunk],
    query: AspectQuery,
    cfg: PruneConfig,
    encoder: Encoder,
) -> PrunedDocument:
    r"""Prunes a document around an aspect.

    Documents shorter than :attr:`PruneConfig.bypass_threshold_words` are
    returned whole, flagged as bypassed.
    Otherwise, the least relevant chunks are dropped as per
    :attr:`PruneConfig.chunk_drop_fraction`, then :func:`select_top_w` is
    applied to each surviving chunk, and the selections are concatenated in
    document order.

    Args:
        sentences (list of :class:`Sentence`):
            Document sentences.

        chunks (list of :class:`Chunk`):
            Document chunks, covering `sentences`.

        query (:class:`AspectQuery`):
            Aspect query.

        cfg (:class:`PruneConfig`):
            Pruning settings.

        encoder (callable):
            Text embedder.

    Returns:
        :class:`PrunedDocument`: Pruned document.
    """
    total = sum(sentence.word_count for sentence in sentences)
    if total < cfg.bypass_threshold_words:
        return _bypass(sentences, chunks)

    kept = list(chunks)
    if cfg.chunk_drop_fraction:
        kept = filter_chunks(score_chunks(kept, query, encoder), cfg.chunk_drop_fraction)

    scored = _score_chunk_sentences(kept, query, encoder)
    selections = [select_top_w(items, cfg.per_chunk_budget_w) for items in scored]
    return _assemble(selections, 1, (total,))


def recursive_prune(
    sentences: Sequence[Sentence],
    chunks: Sequence[Chunk],
    query: AspectQuery,
    cfg: PruneConfig,
    encoder: Encoder,
) -> PrunedDocument:
    r"""Prunes a document repeatedly, until a global word target is met.

    The first round is :func:`prune_document`; each further round applies
    :func:`select_top_w` again to the surviving sentences of each chunk,
    with the budget multiplied by :attr:`PruneConfig.recursion_decay`.
    Sentence scores are computed once.
    Word counts never increase across rounds.

    Bypassed documents are returned unchanged, whatever the target.

    Returns:
        :class:`PrunedDocument`: Pruned document within the target.

    Raises:
        :class:`BudgetUnreachable`: Target not met within the allowed rounds,
            or every chunk is already down to a single sentence.
    """
    target = cfg.global_target_words
    if target is None:
        raise ValueError('global target required')

    total = sum(sentence.word_count for sentence in sentences)
    if total < cfg.bypass_threshold_words:
        return _bypass(sentences, chunks)

    if total <= target:
        provenance = []
        for chunk in chunks:
            provenance.extend((chunk.chunk_index, None) for _ in chunk.sentences)
        return PrunedDocument(tuple(sentences), total, tuple(provenance), False, 0, (total,))

    kept = list(chunks)
    if cfg.chunk_drop_fraction:
        kept = filter_chunks(score_chunks(kept, query, encoder), cfg.chunk_drop_fraction)

    scored = _score_chunk_sentences(kept, query, encoder)
    scores: Mapping[int, ScoredSentence] = {item.sentence.doc_index: item
                                            for items in scored for item in items}
    budget = float(cfg.per_chunk_budget_w)
    selections = [select_top_w(items, cfg.per_chunk_budget_w) for items in scored]
    round_words = [total]
    pruned = _assemble(selections, 1, round_words)
    kept = restrict_chunks(kept, pruned.sentences)

    while pruned.total_words > target:
        if all(len(chunk.sentences) <= 1 for chunk in kept):
            raise BudgetUnreachable('budget unreachable: single sentence chunks', pruned)

        if pruned.rounds >= cfg.max_recursion_rounds:
            raise BudgetUnreachable('budget unreachable: rounds exhausted', pruned)

        budget *= cfg.recursion_decay
        w = max(1, int(budget))
        round_words.append(pruned.total_words)

        selections = [select_top_w([scores[s.doc_index] for s in chunk.sentences], w)
                      for chunk in kept]
        pruned = _assemble(selections, pruned.rounds + 1, round_words)
        kept = restrict_chunks(kept, pruned.sentences)
        _log.debug('recursive prune round %d: budget %d, %d words', pruned.rounds, w, pruned.total_words)

    return pruned


def prune_sentence_level(
    sentences: Sequence[Sentence],
    chunks: Sequence[Chunk],
    query: AspectQuery,
    cfg: PruneConfig,
    encoder: Encoder,
) -> PrunedDocument:
    r"""Prunes a document by sentences, without chunk boundaries.

    Every sentence is its own chunk, and :func:`select_top_w` is applied
    once to the whole document, with a budget of ``len(chunks) * W`` so as
    to match the word count of chunk-based pruning.

    Returns:
        :class:`PrunedDocument`: Pruned document; provenance chunk indices
        equal sentence indices.
    """
    total = sum(sentence.word_count for sentence in sentences)
    if total < cfg.bypass_threshold_words:
        return _bypass(sentences, chunks)

    singletons = chunk_per_sentence(sentences)
    scored = [item for items in _score_chunk_sentences(singletons, query, encoder) for item in items]
    budget = max(1, len(chunks)) * cfg.per_chunk_budget_w
    return _assemble([select_top_w(scored, budget)], 1, (total,))
