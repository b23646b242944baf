import random

import pytest

from aspectprune.segmenter import DEFAULT_ABBREVIATIONS
from aspectprune.segmenter import Chunk
from aspectprune.segmenter import SegmentationConfig
from aspectprune.segmenter import Sentence
from aspectprune.segmenter import WordToken
from aspectprune.segmenter import chunk_document
from aspectprune.segmenter import chunk_per_sentence
from aspectprune.segmenter import count_words
from aspectprune.segmenter import segment
from aspectprune.segmenter import split_sentences
from aspectprune.segmenter import tokenize_words


def random_text(rng, sentence_count, min_words=1, max_words=30):
    sentences = []
    for _ in range(sentence_count):
        size = rng.randint(min_words, max_words)
        words = [f'w{rng.randrange(1000)}' for _ in range(size)]
        words[0] = words[0].capitalize()
        sentences.append(' '.join(words) + rng.choice('.?!'))
    return ' '.join(sentences)


def test_tokenize_words():
    tokens = tokenize_words('  Hello,\tworld! ')
    assert tokens == [WordToken('Hello,', (2, 8)), WordToken('world!', (9, 15))]
    assert tokenize_words('') == []
    assert tokenize_words(' \n ') == []


def test_count_words():
    assert count_words('') == 0
    assert count_words('one') == 1
    assert count_words(' one,  two\nthree. ') == 3


class TestSplitSentences:

    def test_basic(self):
        texts = [s.text for s in split_sentences('A cat sat. Did it? Yes!')]
        assert texts == ['A cat sat.', 'Did it?', 'Yes!']

    def test_indices_and_counts(self):
        sentences = split_sentences('One two three. Four five.')
        assert sentences == [Sentence('One two three.', 0, 3), Sentence('Four five.', 1, 2)]

    def test_abbreviations(self):
        texts = [s.text for s in split_sentences('Dr. Smith arrived. He sat down.')]
        assert texts == ['Dr. Smith arrived.', 'He sat down.']

        texts = [s.text for s in split_sentences('See e.g. This one. Done.')]
        assert texts == ['See e.g. This one.', 'Done.']

    def test_custom_abbreviations(self):
        text = 'Call Dr. Smith now.'
        assert len(split_sentences(text, abbreviations=DEFAULT_ABBREVIATIONS)) == 1
        assert len(split_sentences(text, abbreviations=())) == 2

    def test_initials(self):
        texts = [s.text for s in split_sentences('J. R. Tolkien wrote it. Then he left.')]
        assert texts == ['J. R. Tolkien wrote it.', 'Then he left.']

    def test_closing_quotes(self):
        texts = [s.text for s in split_sentences('He said "Stop." Then he left.')]
        assert texts == ['He said "Stop."', 'Then he left.']

        texts = [s.text for s in split_sentences('It works (mostly.) Good.')]
        assert texts == ['It works (mostly.)', 'Good.']

    def test_lowercase_continuation(self):
        assert len(split_sentences('It grew 3.5 percent. then it fell.')) == 1
        assert len(split_sentences('It grew 3.5 percent. then it fell.', 'loose')) == 2

    def test_paragraphs(self):
        text = 'First line without end\n\nsecond paragraph here'
        assert len(split_sentences(text)) == 1
        texts = [s.text for s in split_sentences(text, 'paragraphs')]
        assert texts == ['First line without end', 'second paragraph here']

    def test_no_terminator(self):
        sentences = split_sentences('No terminator here')
        assert sentences == [Sentence('No terminator here', 0, 3)]

    def test_empty(self):
        assert split_sentences('') == []
        assert split_sentences('  \n ') == []

    def test_unknown_rule(self):
        with pytest.raises(ValueError, match='unknown sentence rule'):
            split_sentences('Some text.', 'nope')

    def test_random_cover(self):
        rng = random.Random(0)
        for _ in range(200):
            count = rng.randint(1, 20)
            text = random_text(rng, count)
            sentences = split_sentences(text)
            assert len(sentences) == count
            assert [s.doc_index for s in sentences] == list(range(count))
            assert sum(s.word_count for s in sentences) == count_words(text)
            assert ' '.join(s.text for s in sentences) == text


class TestSegmentationConfig:

    def test_defaults(self):
        cfg = SegmentationConfig()
        assert cfg.target_words == 256
        assert cfg.sentence_rule == 'default'
        assert cfg.abbreviations == DEFAULT_ABBREVIATIONS

    def test_raises(self):
        with pytest.raises(ValueError, match='non-positive target words'):
            SegmentationConfig(target_words=0)
        with pytest.raises(ValueError, match='unknown sentence rule'):
            SegmentationConfig(sentence_rule='nope')


class TestChunkDocument:

    def test_doctest(self):
        sentences = split_sentences('One two. Three four. Five six.')
        chunks = chunk_document(sentences, SegmentationConfig(target_words=3))
        assert [c.word_count for c in chunks] == [4, 2]
        assert chunks[0].text == 'One two. Three four.'
        assert chunks[1].chunk_index == 1

    def test_empty(self):
        assert chunk_document([]) == []

    def test_long_sentence(self):
        sentence = Sentence('x ' * 10, 0, 10)
        chunks = chunk_document([sentence], SegmentationConfig(target_words=3))
        assert chunks == [Chunk(0, (sentence,), 10)]

    def test_greedy_random(self):
        rng = random.Random(1)
        for _ in range(300):
            text = random_text(rng, rng.randint(1, 40))
            target = rng.randint(1, 120)
            sentences, chunks = segment(text, SegmentationConfig(target_words=target))

            flattened = [s for chunk in chunks for s in chunk.sentences]
            assert flattened == sentences
            assert [c.chunk_index for c in chunks] == list(range(len(chunks)))

            for chunk in chunks:
                assert chunk.sentences
                assert chunk.word_count == sum(s.word_count for s in chunk.sentences)

            for chunk in chunks[:-1]:
                assert chunk.word_count >= target
                assert chunk.word_count - chunk.sentences[-1].word_count < target

            assert chunks[-1].word_count - chunks[-1].sentences[-1].word_count < target

    def test_per_sentence(self):
        sentences = split_sentences('One two. Three four. Five six.')
        chunks = chunk_per_sentence(sentences)
        assert [c.chunk_index for c in chunks] == [0, 1, 2]
        assert [c.sentences for c in chunks] == [(s,) for s in sentences]
