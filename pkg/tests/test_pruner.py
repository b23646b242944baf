import random
from typing import List

import pytest
from test_base import make_planted_document

from aspectprune.base import BudgetUnreachable
from aspectprune.embedder import CachedEmbedder
from aspectprune.embedder import EmbeddingCache
from aspectprune.embedder import OfflineEmbedder
from aspectprune.harness import retention_study
from aspectprune.pruner import DEFAULT_ASPECT_TEMPLATE
from aspectprune.pruner import AspectQuery
from aspectprune.pruner import PruneConfig
from aspectprune.pruner import ScoredChunk
from aspectprune.pruner import ScoredSentence
from aspectprune.pruner import filter_chunks
from aspectprune.pruner import make_query
from aspectprune.pruner import prune_document
from aspectprune.pruner import prune_sentence_level
from aspectprune.pruner import recursive_prune
from aspectprune.pruner import restrict_chunks
from aspectprune.pruner import score_chunks
from aspectprune.pruner import score_sentences
from aspectprune.pruner import select_random_w
from aspectprune.pruner import select_top_w
from aspectprune.segmenter import Chunk
from aspectprune.segmenter import SegmentationConfig
from aspectprune.segmenter import Sentence
from aspectprune.segmenter import segment


@pytest.fixture(scope='module')
def encoder():
    return CachedEmbedder(OfflineEmbedder(dim=1024), EmbeddingCache())


class RecordingEncoder(CachedEmbedder):

    def __init__(self):
        super().__init__(OfflineEmbedder(dim=64))
        self.calls: List[List[str]] = []

    def __call__(self, texts):
        self.calls.append(list(texts))
        return super().__call__(texts)


def random_document(rng, sentence_count=None, aspect='health'):
    if sentence_count is None:
        sentence_count = rng.randint(1, 40)
    sentences = []
    for _ in range(sentence_count):
        size = rng.randint(1, 25)
        words = [rng.choice((aspect, f'w{rng.randrange(50)}', f'v{rng.randrange(500)}'))
                 for _ in range(size)]
        words[0] = words[0].capitalize()
        sentences.append(' '.join(words) + '.')
    return ' '.join(sentences)


def random_scored(rng, count=None, chunk_index=0):
    if count is None:
        count = rng.randint(1, 20)
    return [ScoredSentence(Sentence(f's{i}', i, rng.randint(1, 30)), chunk_index,
                           round(rng.uniform(-1, 1), 1))
            for i in range(count)]


def oracle_top_w(scored, w):
    ranking = sorted(range(len(scored)), key=lambda i: (-scored[i].score, scored[i].sentence.doc_index))
    for size in range(1, len(ranking) + 1):
        prefix = ranking[:size]
        if sum(scored[i].sentence.word_count for i in prefix) >= w:
            return sorted(scored[i].sentence.doc_index for i in prefix)
    return sorted(item.sentence.doc_index for item in scored)


class TestPruneConfig:

    def test_defaults(self):
        cfg = PruneConfig()
        assert cfg.per_chunk_budget_w == 128
        assert cfg.global_target_words is None
        assert cfg.bypass_threshold_words == 1024
        assert cfg.chunk_drop_fraction == 0.0

    @pytest.mark.parametrize('kwargs, message', [
        ({'per_chunk_budget_w': 0}, 'non-positive chunk budget'),
        ({'global_target_words': 0}, 'non-positive global target'),
        ({'bypass_threshold_words': 0}, 'non-positive bypass threshold'),
        ({'chunk_drop_fraction': 1.0}, 'chunk drop fraction'),
        ({'chunk_drop_fraction': -0.1}, 'chunk drop fraction'),
        ({'recursion_decay': 1.0}, 'recursion decay'),
        ({'max_recursion_rounds': 0}, 'non-positive recursion rounds'),
    ])
    def test_raises(self, kwargs, message):
        with pytest.raises(ValueError, match=message):
            PruneConfig(**kwargs)


class TestMakeQuery:

    def test_template(self):
        encoder = RecordingEncoder()
        query = make_query('health', encoder, 'aspect: {aspect}')
        assert encoder.calls == [['aspect: health']]
        assert isinstance(query, AspectQuery)
        assert query.aspect == 'health'

    def test_default_template(self):
        encoder = RecordingEncoder()
        make_query('health', encoder)
        assert encoder.calls == [['health']]
        assert DEFAULT_ASPECT_TEMPLATE == '{aspect}'

    def test_raises(self):
        with pytest.raises(ValueError, match='empty aspect'):
            make_query('  ', RecordingEncoder())


class TestSelectTopW:

    def test_doctest(self):
        items = [ScoredSentence(Sentence(f's{i}', i, 10), 0, s) for i, s in enumerate([0.9, 0.5, 0.8])]
        assert [item.sentence.text for item in select_top_w(items, 15)] == ['s0', 's2']

    def test_ties(self):
        items = [ScoredSentence(Sentence(f's{i}', i, 5), 0, 0.5) for i in range(4)]
        assert [item.sentence.doc_index for item in select_top_w(items[::-1], 10)] == [0, 1]

    def test_crossing_sentence_kept(self):
        items = [ScoredSentence(Sentence('a', 0, 3), 0, 0.9), ScoredSentence(Sentence('b', 1, 50), 0, 0.8)]
        assert len(select_top_w(items, 10)) == 2

    def test_all_when_short(self):
        items = [ScoredSentence(Sentence(f's{i}', i, 2), 0, 0.1 * i) for i in range(3)]
        assert select_top_w(items, 100) == items

    def test_raises(self):
        with pytest.raises(ValueError, match='non-positive budget'):
            select_top_w([], 0)

    def test_oracle(self):
        rng = random.Random(0)
        for _ in range(1000):
            scored = random_scored(rng)
            w = rng.randint(1, 200)
            selected = select_top_w(scored, w)
            indices = [item.sentence.doc_index for item in selected]
            assert indices == oracle_top_w(scored, w)

            words = sum(item.sentence.word_count for item in selected)
            longest = max(item.sentence.word_count for item in scored)
            assert words < w + longest
            assert words >= w or len(selected) == len(scored)

    def test_order_preserving_rescale(self):
        rng = random.Random(9)
        for _ in range(500):
            scored = random_scored(rng)
            w = rng.randint(1, 200)
            scale = rng.choice((0.5, 2.0, 3.0, 10.0))
            shift = rng.randint(-5, 5)
            moved = [ScoredSentence(item.sentence, item.chunk_index, item.score * scale + shift)
                     for item in scored]
            expected = [item.sentence.doc_index for item in select_top_w(scored, w)]
            assert [item.sentence.doc_index for item in select_top_w(moved, w)] == expected


class TestSelectRandomW:

    def test_deterministic(self):
        rng = random.Random(0)
        scored = random_scored(rng, 20)
        a = select_random_w(scored, 40, random.Random(5))
        b = select_random_w(scored, 40, random.Random(5))
        assert a == b

    def test_budget(self):
        rng = random.Random(1)
        for _ in range(200):
            scored = random_scored(rng)
            w = rng.randint(1, 100)
            selected = select_random_w(scored, w, rng)
            indices = [item.sentence.doc_index for item in selected]
            assert indices == sorted(set(indices))
            words = sum(item.sentence.word_count for item in selected)
            assert words >= w or len(selected) == len(scored)
            assert words < w + max(item.sentence.word_count for item in scored)

    def test_raises(self):
        with pytest.raises(ValueError):
            select_random_w([], 0, random.Random(0))


class TestFilterChunks:

    def test_doctest(self):
        chunks = [Chunk(i, (), 0) for i in range(4)]
        scored = [ScoredChunk(c, s) for c, s in zip(chunks, [0.9, 0.1, 0.5, 0.7])]
        assert [c.chunk_index for c in filter_chunks(scored, 0.25)] == [0, 2, 3]
        assert [c.chunk_index for c in filter_chunks(scored, 0.5)] == [0, 3]
        assert [c.chunk_index for c in filter_chunks(scored, 0.0)] == [0, 1, 2, 3]

    def test_ties_drop_later(self):
        chunks = [Chunk(i, (), 0) for i in range(3)]
        scored = [ScoredChunk(c, 0.5) for c in chunks]
        assert [c.chunk_index for c in filter_chunks(scored, 0.34)] == [0, 1]

    def test_floor(self):
        chunks = [Chunk(i, (), 0) for i in range(3)]
        scored = [ScoredChunk(c, float(i)) for i, c in enumerate(chunks)]
        assert len(filter_chunks(scored, 0.3)) == 3

    def test_raises(self):
        with pytest.raises(ValueError):
            filter_chunks([], 1.0)


class TestScoring:

    def test_score_sentences(self, encoder):
        sentences, chunks = segment('Health health matters. Cars are fast. Health again.',
                                    SegmentationConfig(target_words=100))
        query = make_query('health', encoder)
        scored = score_sentences(chunks[0], query, encoder)
        assert [item.sentence for item in scored] == sentences
        assert scored[0].score > scored[1].score
        assert scored[2].score > scored[1].score

    def test_score_chunks(self, encoder):
        _, chunks = segment('Health is good. Health care. Cars go. Roads are wide.',
                            SegmentationConfig(target_words=5))
        query = make_query('health', encoder)
        scored = score_chunks(chunks, query, encoder)
        assert len(scored) == len(chunks) == 2
        assert scored[0].score > scored[1].score

    def test_restrict_chunks(self):
        sentences = [Sentence(f's{i}', i, i + 1) for i in range(5)]
        chunks = [Chunk(0, tuple(sentences[:2]), 3), Chunk(1, tuple(sentences[2:4]), 7),
                  Chunk(2, (sentences[4],), 5)]
        restricted = restrict_chunks(chunks, [sentences[1], sentences[4]])
        assert [c.chunk_index for c in restricted] == [0, 2]
        assert restricted[0].sentences == (sentences[1],)
        assert restricted[0].word_count == 2


class TestPruneDocument:

    def test_bypass(self, encoder):
        text = 'Short text here. Another one.'
        sentences, chunks = segment(text)
        query = make_query('health', encoder)
        pruned = prune_document(sentences, chunks, query, PruneConfig(), encoder)
        assert pruned.bypassed
        assert pruned.sentences == tuple(sentences)
        assert pruned.text == text
        assert pruned.total_words == 5
        assert pruned.provenance == ((0, None), (0, None))
        assert pruned.rounds == 0

    def test_keeps_planted(self, encoder):
        rng = random.Random(0)
        text, planted = make_planted_document(rng, 30, 3)
        sentences, chunks = segment(text, SegmentationConfig(target_words=100))
        assert len(chunks) == 3
        query = make_query('health', encoder)
        cfg = PruneConfig(per_chunk_budget_w=30, bypass_threshold_words=1)
        pruned = prune_document(sentences, chunks, query, cfg, encoder)
        assert not pruned.bypassed
        assert pruned.rounds == 1
        assert planted <= set(pruned.doc_indices)
        assert pruned.total_words == 90
        assert [index for index, _ in pruned.provenance] == [i // 10 for i in pruned.doc_indices]
        assert all(score is not None for _, score in pruned.provenance)
        assert pruned.round_words == (300, 90)

    def test_subsequence(self, encoder):
        rng = random.Random(1)
        for _ in range(300):
            text = random_document(rng, rng.randint(5, 200))
            target = rng.randint(5, 150)
            w = rng.randint(1, 120)
            sentences, chunks = segment(text, SegmentationConfig(target_words=target))
            query = make_query('health', encoder)
            cfg = PruneConfig(per_chunk_budget_w=w, bypass_threshold_words=rng.choice((1, 50, 200)))
            pruned = prune_document(sentences, chunks, query, cfg, encoder)

            indices = pruned.doc_indices
            assert indices == sorted(set(indices))
            assert all(sentences[i] == s for i, s in zip(indices, pruned.sentences))
            assert pruned.total_words == sum(s.word_count for s in pruned.sentences)
            assert pruned.total_words <= sum(s.word_count for s in sentences)

            if pruned.bypassed:
                assert pruned.sentences == tuple(sentences)
                continue

            for chunk in chunks:
                kept = [s for s in chunk.sentences if s.doc_index in set(indices)]
                assert kept
                words = sum(s.word_count for s in kept)
                longest = max(s.word_count for s in chunk.sentences)
                assert words < w + longest
                assert words >= w or len(kept) == len(chunk.sentences)

    def test_deterministic(self, encoder):
        rng = random.Random(2)
        text = random_document(rng, 30)
        sentences, chunks = segment(text, SegmentationConfig(target_words=40))
        query = make_query('health', encoder)
        cfg = PruneConfig(per_chunk_budget_w=10, bypass_threshold_words=1)
        a = prune_document(sentences, chunks, query, cfg, encoder)
        b = prune_document(sentences, chunks, query, cfg, encoder)
        assert a == b

    def test_within_budget_unchanged(self, encoder):
        rng = random.Random(10)
        query = make_query('health', encoder)
        for _ in range(100):
            text = random_document(rng, rng.randint(5, 60))
            sentences, chunks = segment(text, SegmentationConfig(target_words=rng.randint(10, 80)))
            w = max(chunk.word_count for chunk in chunks) + rng.randint(0, 20)
            cfg = PruneConfig(per_chunk_budget_w=w, bypass_threshold_words=1)
            pruned = prune_document(sentences, chunks, query, cfg, encoder)
            assert pruned.sentences == tuple(sentences)
            assert pruned.text == ' '.join(s.text for s in sentences)

    def test_idempotent(self, encoder):
        rng = random.Random(11)
        query = make_query('health', encoder)
        for _ in range(200):
            text = random_document(rng, rng.randint(5, 80))
            sentences, chunks = segment(text, SegmentationConfig(target_words=rng.randint(10, 100)))
            cfg = PruneConfig(per_chunk_budget_w=rng.randint(1, 60), bypass_threshold_words=1)
            once = prune_document(sentences, chunks, query, cfg, encoder)
            survivors = restrict_chunks(chunks, once.sentences)
            twice = prune_document(list(once.sentences), survivors, query, cfg, encoder)
            assert twice.sentences == once.sentences
            assert twice.provenance == once.provenance

    def test_chunk_drop(self, encoder):
        rng = random.Random(3)
        text, _ = make_planted_document(rng, 40, 1)
        sentences, chunks = segment(text, SegmentationConfig(target_words=100))
        query = make_query('health', encoder)
        cfg = PruneConfig(per_chunk_budget_w=1000, bypass_threshold_words=1, chunk_drop_fraction=0.5)
        pruned = prune_document(sentences, chunks, query, cfg, encoder)
        kept_chunks = {index for index, _ in pruned.provenance}
        assert len(kept_chunks) == 2
        assert pruned.total_words == 200


class TestRecursivePrune:

    def test_raises(self, encoder):
        sentences, chunks = segment('One two. Three four.')
        query = make_query('health', encoder)
        with pytest.raises(ValueError, match='global target required'):
            recursive_prune(sentences, chunks, query, PruneConfig(), encoder)

    def test_within_target(self, encoder):
        sentences, chunks = segment('One two. Three four.')
        query = make_query('health', encoder)
        cfg = PruneConfig(global_target_words=10, bypass_threshold_words=1)
        pruned = recursive_prune(sentences, chunks, query, cfg, encoder)
        assert pruned.sentences == tuple(sentences)
        assert pruned.rounds == 0
        assert not pruned.bypassed

    def test_idempotent(self, encoder):
        rng = random.Random(12)
        text, _ = make_planted_document(rng, 40, 2)
        sentences, chunks = segment(text, SegmentationConfig(target_words=100))
        query = make_query('health', encoder)
        cfg = PruneConfig(per_chunk_budget_w=50, global_target_words=100, bypass_threshold_words=1,
                          recursion_decay=0.5)
        once = recursive_prune(sentences, chunks, query, cfg, encoder)
        survivors = restrict_chunks(chunks, once.sentences)
        twice = recursive_prune(list(once.sentences), survivors, query, cfg, encoder)
        assert twice.sentences == once.sentences
        assert twice.rounds == 0

    def test_reaches_target(self, encoder):
        rng = random.Random(4)
        text, planted = make_planted_document(rng, 40, 2)
        sentences, chunks = segment(text, SegmentationConfig(target_words=100))
        query = make_query('health', encoder)
        cfg = PruneConfig(per_chunk_budget_w=50, global_target_words=100, bypass_threshold_words=1,
                          recursion_decay=0.5)
        pruned = recursive_prune(sentences, chunks, query, cfg, encoder)
        assert pruned.total_words <= 100
        assert pruned.rounds == 3
        assert pruned.round_words == (400, 200, 120, 80)
        assert planted <= set(pruned.doc_indices)

    def test_single_sentence_chunks(self, encoder):
        rng = random.Random(5)
        text, _ = make_planted_document(rng, 40, 2)
        sentences, chunks = segment(text, SegmentationConfig(target_words=100))
        query = make_query('health', encoder)
        cfg = PruneConfig(per_chunk_budget_w=1, global_target_words=10, bypass_threshold_words=1)
        with pytest.raises(BudgetUnreachable, match='single sentence') as info:
            recursive_prune(sentences, chunks, query, cfg, encoder)
        assert info.value.pruned.total_words == 40

    def test_random(self, encoder):
        rng = random.Random(6)
        for _ in range(200):
            text = random_document(rng, rng.randint(5, 40))
            sentences, chunks = segment(text, SegmentationConfig(target_words=rng.randint(10, 100)))
            query = make_query('health', encoder)
            cfg = PruneConfig(
                per_chunk_budget_w=rng.randint(5, 100),
                global_target_words=rng.randint(1, 300),
                bypass_threshold_words=1,
                recursion_decay=rng.choice((0.5, 0.8, 0.9)),
                max_recursion_rounds=rng.randint(1, 8),
            )
            try:
                pruned = recursive_prune(sentences, chunks, query, cfg, encoder)
            except BudgetUnreachable as exc:
                pruned = exc.pruned
                assert pruned.total_words > cfg.global_target_words
            else:
                assert pruned.total_words <= cfg.global_target_words

            assert pruned.rounds <= cfg.max_recursion_rounds
            assert len(pruned.round_words) == pruned.rounds + 1
            assert list(pruned.round_words) == sorted(pruned.round_words, reverse=True)
            assert pruned.round_words[-1] == pruned.total_words
            assert pruned.doc_indices == sorted(set(pruned.doc_indices))


class TestPruneSentenceLevel:

    def test_budget(self, encoder):
        rng = random.Random(7)
        text, planted = make_planted_document(rng, 30, 3)
        sentences, chunks = segment(text, SegmentationConfig(target_words=100))
        query = make_query('health', encoder)
        cfg = PruneConfig(per_chunk_budget_w=10, bypass_threshold_words=1)
        pruned = prune_sentence_level(sentences, chunks, query, cfg, encoder)
        assert pruned.total_words == 30
        assert set(pruned.doc_indices) == planted
        assert [index for index, _ in pruned.provenance] == pruned.doc_indices

    def test_bypass(self, encoder):
        sentences, chunks = segment('Short. Text.')
        query = make_query('health', encoder)
        pruned = prune_sentence_level(sentences, chunks, query, PruneConfig(), encoder)
        assert pruned.bypassed


class TestRetention:

    def test_planted_recall(self, encoder):
        rng = random.Random(8)
        documents = []
        for _ in range(100):
            text, planted = make_planted_document(rng, 30, 3)
            documents.append(('health', text, planted))

        result = retention_study(documents, SegmentationConfig(target_words=100),
                                 PruneConfig(per_chunk_budget_w=30, bypass_threshold_words=1),
                                 encoder, baseline_seeds=20)
        assert result.documents == 100
        assert result.pruned_recall >= 0.9
        assert result.random_recall <= 0.4

    def test_raises(self, encoder):
        cfg = PruneConfig(bypass_threshold_words=1)
        with pytest.raises(ValueError, match='no documents'):
            retention_study([], SegmentationConfig(), cfg, encoder)
        with pytest.raises(ValueError, match='no planted'):
            retention_study([('health', 'Text here.', set())], SegmentationConfig(), cfg, encoder)
