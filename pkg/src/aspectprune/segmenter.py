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

r"""Word tokenization, sentence splitting, and chunking.

A *word* is a maximal run of non-whitespace characters, punctuation
included. Sentences are found by a small rule set, and then grouped into
sequential chunks by a greedy word count target.

All the functions here are pure.
"""

import re
from dataclasses import dataclass
from dataclasses import field
from typing import List
from typing import Mapping
from typing import Sequence
from typing import Tuple

_WORD_REGEX = re.compile(r'\S+')
_BLANK_LINE_REGEX = re.compile(r'\n[ \t\r\f\v]*\n')

_TERMINATORS = '.?!'
_CLOSERS = '"\')]}”’'
_OPENERS = '"\'([{“‘'

DEFAULT_ABBREVIATIONS: Tuple[str, ...] = (
    'mr.', 'mrs.', 'ms.', 'dr.', 'prof.', 'sr.', 'jr.', 'st.', 'mt.',
    'vs.', 'etc.', 'e.g.', 'i.e.', 'inc.', 'ltd.', 'co.', 'corp.',
    'gen.', 'gov.', 'sen.', 'rep.', 'rev.', 'col.', 'lt.', 'sgt.',
    'jan.', 'feb.', 'mar.', 'apr.', 'jun.', 'jul.', 'aug.', 'sep.',
    'sept.', 'oct.', 'nov.', 'dec.', 'no.', 'fig.', 'u.s.', 'u.k.',
)
r"""Words never considered as sentence ends (lowercase)."""

SENTENCE_RULES: Mapping[str, Mapping[str, bool]] = {
    # Terminator, whitespace, then capital letter or end of text
    'default': {'capital': True, 'paragraphs': False},

    # Like default, also breaking on blank lines
    'paragraphs': {'capital': True, 'paragraphs': True},

    # Any terminator followed by whitespace
    'loose': {'capital': False, 'paragraphs': False},
}
r"""Sentence splitting rule sets."""


@dataclass(frozen=True)
class WordToken:
    r"""Word token, with its half-open character span in the source text."""

    text: str
    char_span: Tuple[int, int]


@dataclass(frozen=True)
class Sentence:
    r"""Document sentence."""

    text: str
    doc_index: int
    word_count: int


@dataclass(frozen=True)
class Chunk:
    r"""Sequential group of sentences."""

    chunk_index: int
    sentences: Tuple[Sentence, ...]
    word_count: int

    @property
    def text(self) -> str:
        return ' '.join(sentence.text for sentence in self.sentences)


@dataclass(frozen=True)
class SegmentationConfig:
    r"""Segmentation settings.

    Attributes:
        target_words (int):
            Greedy chunk word target.

        sentence_rule (str):
            Key of :data:`SENTENCE_RULES`.

        abbreviations (tuple of str):
            Lowercase words never ending a sentence.
    """

    target_words: int = 256
    sentence_rule: str = 'default'
    abbreviations: Tuple[str, ...] = field(default=DEFAULT_ABBREVIATIONS)

    def __post_init__(self):
        if self.target_words < 1:
            raise ValueError('non-positive target words')
        if self.sentence_rule not in SENTENCE_RULES:
            raise ValueError(f'unknown sentence rule: {self.sentence_rule!r}')


def tokenize_words(text: str) -> List[WordToken]:
    r"""Splits text into words.

    Args:
        text (str):
            Source text.

    Returns:
        list of :class:`WordToken`: Maximal non-whitespace runs, in order.

    Examples:
        >>> [token.text for token in tokenize_words('Hello, world!')]
        ['Hello,', 'world!']
        >>> tokenize_words('  a  b ')[1]
        WordToken(text='b', char_span=(5, 6))
        >>> tokenize_words('')
        []
    """
    return [WordToken(m.group(), m.span()) for m in _WORD_REGEX.finditer(text)]


def count_words(text: str) -> int:
    r"""Counts the words of a text, as per :func:`tokenize_words`."""

    return sum(1 for _ in _WORD_REGEX.finditer(text))


def _is_terminal(word: str, abbreviations: Sequence[str]) -> bool:

    core = word.rstrip(_CLOSERS)
    if not core or core[-1] not in _TERMINATORS:
        return False

    if core.lower().lstrip(_OPENERS) in abbreviations:
        return False

    # Initials like "J."
    bare = core.lstrip(_OPENERS)
    if len(bare) == 2 and bare[0].isalpha() and bare[1] == '.':
        return False

    return True


def _starts_capital(word: str) -> bool:

    bare = word.lstrip(_OPENERS)
    return bool(bare) and bare[0].isupper()


def split_sentences(
    text: str,
    rule: str = 'default',
    abbreviations: Sequence[str] = DEFAULT_ABBREVIATIONS,
) -> List[Sentence]:
    r"""Splits text into sentences.

    A sentence ends after a word ending with ``.``, ``?``, or ``!``
    (possibly followed by closing quotes or brackets), when the next word
    starts with a capital letter or there is no next word.
    Words listed in `abbreviations` and single-letter initials never end a
    sentence.

    Args:
        text (str):
            Source text.

        rule (str):
            Key of :data:`SENTENCE_RULES`.

        abbreviations (list of str):
            Lowercase abbreviations, terminator included.

    Returns:
        list of :class:`Sentence`: Sentences, with sequential indices.

    Examples:
        >>> [s.text for s in split_sentences('A cat sat. Did it? Yes!')]
        ['A cat sat.', 'Did it?', 'Yes!']
        >>> len(split_sentences('No terminator here'))
        1
        >>> split_sentences('   ')
        []
    """
    try:
        settings = SENTENCE_RULES[rule]
    except KeyError:
        raise ValueError(f'unknown sentence rule: {rule!r}') from None

    tokens = tokenize_words(text)
    if not tokens:
        return []

    breaks = set()
    if settings['paragraphs']:
        for m in _BLANK_LINE_REGEX.finditer(text):
            breaks.add(m.start())

    sentences: List[Sentence] = []
    first = 0
    last_index = len(tokens) - 1

    for i, token in enumerate(tokens):
        if i == last_index:
            end = True
        else:
            following = tokens[i + 1]
            end = _is_terminal(token.text, abbreviations)
            if end and settings['capital']:
                end = _starts_capital(following.text)
            if not end and breaks:
                gap_start, gap_endex = token.char_span[1], following.char_span[0]
                end = any(gap_start <= b < gap_endex for b in breaks)

        if end:
            start = tokens[first].char_span[0]
            endex = token.char_span[1]
            sentences.append(Sentence(text[start:endex], len(sentences), i + 1 - first))
            first = i + 1

    return sentences


def chunk_document(
    sentences: Sequence[Sentence],
    cfg: SegmentationConfig = SegmentationConfig(),
) -> List[Chunk]:
    r"""Groups sentences into sequential chunks.

    Sentences are accumulated until their word count reaches or crosses
    :attr:`SegmentationConfig.target_words`, which closes the chunk.
    The last chunk may be shorter, and is never merged backwards.

    Args:
        sentences (list of :class:`Sentence`):
            Sentences in document order.

        cfg (:class:`SegmentationConfig`):
            Segmentation settings.

    Returns:
        list of :class:`Chunk`: Sequential chunks.

    Examples:
        >>> sentences = split_sentences('One two. Three four. Five six.')
        >>> [c.word_count for c in chunk_document(sentences, SegmentationConfig(target_words=3))]
        [4, 2]
    """
    target = cfg.target_words
    chunks: List[Chunk] = []
    pending: List[Sentence] = []
    count = 0

    for sentence in sentences:
        pending.append(sentence)
        count += sentence.word_count
        if count >= target:
            chunks.append(Chunk(len(chunks), tuple(pending), count))
            pending = []
            count = 0

    if pending:
        chunks.append(Chunk(len(chunks), tuple(pending), count))

    return chunks


def chunk_per_sentence(sentences: Sequence[Sentence]) -> List[Chunk]:
    r"""Makes each sentence its own chunk."""

    return [Chunk(i, (sentence,), sentence.word_count) for i, sentence in enumerate(sentences)]


def segment(
    text: str,
    cfg: SegmentationConfig = SegmentationConfig(),
) -> Tuple[List[Sentence], List[Chunk]]:
    r"""Splits text into sentences, and then into chunks."""

    sentences = split_sentences(text, cfg.sentence_rule, cfg.abbreviations)
    return sentences, chunk_document(sentences, cfg)
