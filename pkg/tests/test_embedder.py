import json
import math
import random
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import List
from typing import Sequence

import httpx
import numpy as np
import pytest

from aspectprune.base import DimensionMismatch
from aspectprune.base import InputTooLong
from aspectprune.base import RemoteUnavailable
from aspectprune.embedder import EMBED_API_KEY_ENV
from aspectprune.embedder import BaseEmbedder
from aspectprune.embedder import CachedEmbedder
from aspectprune.embedder import EmbeddingCache
from aspectprune.embedder import EmbeddingRequest
from aspectprune.embedder import EmbeddingVector
from aspectprune.embedder import OfflineEmbedder
from aspectprune.embedder import RemoteEmbedder
from aspectprune.embedder import cosine
from aspectprune.embedder import embed_texts
from aspectprune.embedder import offline_embed
from aspectprune.embedder import offline_features


@pytest.fixture
def tmppath(tmpdir):
    return Path(str(tmpdir))


class CountingEmbedder(OfflineEmbedder):

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.sent: List[str] = []
        self.closed = False

    def _embed_batch(self, texts: Sequence[str]):
        self.sent.extend(texts)
        return super()._embed_batch(texts)

    def close(self):
        self.closed = True


class RaggedEmbedder(BaseEmbedder):

    @property
    def backend_id(self):
        return 'ragged'

    def _embed_batch(self, texts):
        return [[1.0] * (2 + len(text)) for text in texts]


def embeddings_handler(dim=3, fail_first=0, calls=None):
    state = {'count': 0}

    def handler(request: httpx.Request) -> httpx.Response:
        state['count'] += 1
        if calls is not None:
            calls.append(request)
        if state['count'] <= fail_first:
            return httpx.Response(503, text='busy')
        body = json.loads(request.content)
        data = [{'index': i, 'embedding': [float(len(text))] + [1.0] * (dim - 1)}
                for i, text in enumerate(body['input'])]
        return httpx.Response(200, json={'data': data[::-1], 'model': body['model']})

    return handler


class TestEmbeddingVector:

    def test_init(self):
        v = EmbeddingVector([3, 4], 'demo')
        assert v.dim == 2
        assert len(v) == 2
        assert v.norm == 5.0
        assert not v.degenerate
        assert v.backend_id == 'demo'
        assert v.values.dtype == np.float64

    def test_readonly(self):
        v = EmbeddingVector([1, 2])
        with pytest.raises(ValueError):
            v.values[0] = 5

    def test_degenerate(self):
        assert EmbeddingVector([0, 0, 0]).degenerate

    def test_raises(self):
        with pytest.raises(ValueError, match='empty vector'):
            EmbeddingVector([])
        with pytest.raises(ValueError, match='non-finite'):
            EmbeddingVector([1.0, math.nan])
        with pytest.raises(ValueError, match='non-finite'):
            EmbeddingVector([math.inf])

    def test_eq(self):
        assert EmbeddingVector([1, 2], 'a') == EmbeddingVector([1.0, 2.0], 'a')
        assert EmbeddingVector([1, 2], 'a') != EmbeddingVector([1, 2], 'b')
        assert EmbeddingVector([1, 2], 'a') != EmbeddingVector([1, 3], 'a')
        assert EmbeddingVector([1, 2]) != [1, 2]

    def test_repr(self):
        assert repr(EmbeddingVector([1, 2], 'a')) == "<EmbeddingVector backend_id='a' dim=2>"


class TestCosine:

    def test_doctest(self):
        assert cosine([1, 0], [1, 0]) == 1.0
        assert cosine([1, 0], [0, 1]) == 0.0
        assert round(cosine([1, 2, 3], [4, 5, 6]), 6) == 0.974632
        assert cosine([0, 0], [1, 1]) == 0.0

    def test_raises(self):
        with pytest.raises(DimensionMismatch):
            cosine([1, 2], [1, 2, 3])

    def test_vectors(self):
        a = EmbeddingVector([1, 1])
        assert cosine(a, np.array([2.0, 2.0])) == pytest.approx(1.0)
        assert cosine(a, [-1, -1]) == pytest.approx(-1.0)

    def test_properties(self):
        rng = np.random.default_rng(0)
        for _ in range(10000):
            dim = int(rng.integers(1, 17))
            a = rng.normal(size=dim)
            b = rng.normal(size=dim)
            ab = cosine(a, b)
            assert ab == cosine(b, a)
            assert -1.0 <= ab <= 1.0
            assert cosine(a, a) == pytest.approx(1.0, abs=1e-12)
            assert cosine(a * 3.5, b) == pytest.approx(ab, abs=1e-12)
            assert cosine(-a, b) == pytest.approx(-ab, abs=1e-12)
            assert cosine(np.zeros(dim), b) == 0.0


class TestOffline:

    def test_features(self):
        assert offline_features('The Cat, the HAT!') == ['the', 'cat', 'the', 'hat']
        assert offline_features('-- ...') == []

    def test_embed(self):
        v = offline_embed('some text here', 64)
        assert v.dim == 64
        assert v.norm == pytest.approx(1.0)
        assert v.backend_id == 'offline:64:0'
        assert offline_embed('', 64).degenerate
        assert offline_embed('', 64).backend_id == 'offline:64:0'

    def test_deterministic(self):
        assert offline_embed('a b c', 128, 7) == offline_embed('a b c', 128, 7)
        assert offline_embed('a b c', 128, 7) != offline_embed('a b c', 128, 8)

    def test_normalization(self):
        assert cosine(offline_embed('cat cat', 64), offline_embed('cat', 64)) == 1.0
        assert offline_embed('Cat!', 64).values.tolist() == offline_embed('cat', 64).values.tolist()

    def test_word_order(self):
        a = offline_embed('the cat sat', 256)
        b = offline_embed('sat the cat', 256)
        assert cosine(a, b) == pytest.approx(1.0)

    def test_raises(self):
        with pytest.raises(ValueError, match='dimension too small'):
            offline_embed('x', 4)
        with pytest.raises(ValueError, match='dimension too small'):
            OfflineEmbedder(dim=4)

    def test_embedder(self):
        backend = OfflineEmbedder(dim=32, seed=3, batch_size=2)
        assert backend.backend_id == 'offline:32:3'
        assert backend.dim == 32
        vectors = backend.embed(['a', 'b', 'c'])
        assert [v.dim for v in vectors] == [32, 32, 32]
        assert vectors[0] == offline_embed('a', 32, 3)

    def test_batch_size_raises(self):
        with pytest.raises(ValueError, match='non-positive batch size'):
            OfflineEmbedder(batch_size=0)


class TestBaseEmbedder:

    def test_input_too_long(self):
        backend = OfflineEmbedder(dim=16)
        backend.max_input_chars = 5
        backend.embed(['12345'])
        with pytest.raises(InputTooLong):
            backend.embed(['ok', '123456'])

    def test_dimension_mismatch(self):
        backend = RaggedEmbedder()
        assert backend.dim is None
        backend.embed(['ab', 'cd'])
        assert backend.dim == 4
        with pytest.raises(DimensionMismatch):
            backend.embed(['abc'])


class TestEmbeddingCache:

    def test_memory(self):
        cache = EmbeddingCache()
        vector = offline_embed('abc', 16)
        assert cache.get(vector.backend_id, 'abc') is None
        assert (cache.hits, cache.misses) == (0, 1)
        entry = cache.put('abc', vector)
        assert entry.key in cache
        assert len(cache) == 1
        assert cache.get(vector.backend_id, 'abc') == vector
        assert cache.get('other', 'abc') is None
        assert (cache.hits, cache.misses) == (1, 2)

    def test_put_twice(self):
        cache = EmbeddingCache()
        vector = offline_embed('abc', 16)
        first = cache.put('abc', vector)
        second = cache.put('abc', vector)
        assert first is second
        assert len(cache) == 1

    def test_persistence(self, tmppath):
        path = tmppath / 'cache' / 'embeddings.jsonl'
        cache = EmbeddingCache(path)
        vectors = [offline_embed(text, 16) for text in ('a', 'b')]
        for text, vector in zip(('a', 'b'), vectors):
            cache.put(text, vector)

        reloaded = EmbeddingCache(path)
        assert len(reloaded) == 2
        assert reloaded.get(vectors[0].backend_id, 'a') == vectors[0]
        assert reloaded.get(vectors[1].backend_id, 'b') == vectors[1]

    def test_corrupt_lines(self, tmppath):
        path = tmppath / 'embeddings.jsonl'
        cache = EmbeddingCache(path)
        vector = offline_embed('a', 16)
        cache.put('a', vector)
        with open(str(path), 'at', encoding='utf-8') as stream:
            stream.write('{not json\n')
            stream.write('\n')
            stream.write('{"key": "k", "backend_id": "x", "values": [], "created_at": 0}\n')
            stream.write('{"key": "k", "values": [1.0]}\n')

        reloaded = EmbeddingCache(path)
        assert len(reloaded) == 1
        assert reloaded.get(vector.backend_id, 'a') == vector

        lines = path.read_text(encoding='utf-8').splitlines()
        assert len(lines) == 1
        assert json.loads(lines[0])['backend_id'] == vector.backend_id

    def test_missing_file(self, tmppath):
        cache = EmbeddingCache(tmppath / 'missing.jsonl')
        assert len(cache) == 0
        assert not (tmppath / 'missing.jsonl').exists()

    def test_concurrent_counts(self):
        cache = EmbeddingCache()
        vector = offline_embed('a', 16)
        cache.put('a', vector)

        def lookup(index):
            text = 'a' if index % 2 else 'b'
            for _ in range(500):
                cache.get(vector.backend_id, text)

        with ThreadPoolExecutor(max_workers=8) as executor:
            list(executor.map(lookup, range(8)))

        assert cache.hits == 2000
        assert cache.misses == 2000


class TestEmbedTexts:

    def test_doctest(self):
        backend = OfflineEmbedder(dim=64)
        req = EmbeddingRequest(['abc', 'abc'], backend.backend_id)
        a, b = embed_texts(req, backend)
        assert a == b

    def test_dedup_and_cache(self):
        backend = CountingEmbedder(dim=16)
        cache = EmbeddingCache()
        req = EmbeddingRequest(['a', 'b', 'a', 'c'], backend.backend_id)
        vectors = embed_texts(req, backend, cache)
        assert backend.sent == ['a', 'b', 'c']
        assert vectors[0] == vectors[2]
        assert cache.misses == 3

        backend.sent.clear()
        again = embed_texts(EmbeddingRequest(['c', 'a', 'd'], backend.backend_id), backend, cache)
        assert backend.sent == ['d']
        assert again[0] == vectors[3]
        assert cache.hits == 2

    def test_cached_equals_fresh(self):
        backend = OfflineEmbedder(dim=32)
        cache = EmbeddingCache()
        texts = [f'text {i}' for i in range(10)]
        first = embed_texts(EmbeddingRequest(texts, backend.backend_id), backend, cache)
        second = embed_texts(EmbeddingRequest(texts, backend.backend_id), backend, cache)
        assert first == second
        assert cache.hits == 10

    def test_raises(self):
        backend = OfflineEmbedder(dim=16)
        with pytest.raises(ValueError, match='backend mismatch'):
            embed_texts(EmbeddingRequest(['a'], 'other'), backend)
        with pytest.raises(ValueError, match='no texts'):
            EmbeddingRequest([], backend.backend_id)


class TestCachedEmbedder:

    def test_call(self):
        backend = CountingEmbedder(dim=16)
        encoder = CachedEmbedder(backend, EmbeddingCache())
        assert encoder([]) == []
        a, = encoder(['a'])
        b, = encoder(['a'])
        assert a == b
        assert backend.sent == ['a']

    def test_no_cache(self):
        backend = CountingEmbedder(dim=16)
        encoder = CachedEmbedder(backend)
        encoder(['a'])
        encoder(['a'])
        assert backend.sent == ['a', 'a']

    def test_close(self):
        backend = CountingEmbedder(dim=16)
        CachedEmbedder(backend).close()
        assert backend.closed


class TestRemoteEmbedder:

    def test_embed(self, monkeypatch):
        monkeypatch.setenv(EMBED_API_KEY_ENV, 'secret')
        calls = []
        backend = RemoteEmbedder('http://embed.test/v1', 'embed-model', batch_size=2,
                                 transport=httpx.MockTransport(embeddings_handler(calls=calls)))
        assert backend.backend_id == 'remote:embed-model'
        assert backend.dim is None

        vectors = backend.embed(['a', 'bbb', 'cc'])
        assert backend.dim == 3
        assert [v.values[0] for v in vectors] == [1.0, 3.0, 2.0]
        assert backend.requests == 2

        request = calls[0]
        assert request.url.path == '/v1/embeddings'
        assert request.headers['Authorization'] == 'Bearer secret'
        assert json.loads(request.content) == {'model': 'embed-model', 'input': ['a', 'bbb']}
        backend.close()

    def test_no_token(self, monkeypatch):
        monkeypatch.delenv(EMBED_API_KEY_ENV, raising=False)
        calls = []
        backend = RemoteEmbedder('http://embed.test/v1', 'm',
                                 transport=httpx.MockTransport(embeddings_handler(calls=calls)))
        backend.embed(['a'])
        assert 'Authorization' not in calls[0].headers

    def test_retry(self):
        backend = RemoteEmbedder('http://embed.test/v1', 'm', max_retries=2, backoff_base=0.0,
                                 transport=httpx.MockTransport(embeddings_handler(fail_first=2)))
        vector, = backend.embed(['abcd'])
        assert vector.values[0] == 4.0

    def test_retries_exhausted(self):
        backend = RemoteEmbedder('http://embed.test/v1', 'm', max_retries=1, backoff_base=0.0,
                                 transport=httpx.MockTransport(embeddings_handler(fail_first=5)))
        with pytest.raises(RemoteUnavailable) as info:
            backend.embed(['a'])
        assert info.value.attempts == 2

    def test_expected_dim(self):
        backend = RemoteEmbedder('http://embed.test/v1', 'm', dim=5,
                                 transport=httpx.MockTransport(embeddings_handler(dim=3)))
        with pytest.raises(DimensionMismatch):
            backend.embed(['a'])

    def test_malformed(self):
        def handler(request):
            return httpx.Response(200, json={'nope': []})

        backend = RemoteEmbedder('http://embed.test/v1', 'm', transport=httpx.MockTransport(handler))
        with pytest.raises(RemoteUnavailable, match='malformed'):
            backend.embed(['a'])

    def test_input_too_long(self):
        backend = RemoteEmbedder('http://embed.test/v1', 'm', max_input_chars=3,
                                 transport=httpx.MockTransport(embeddings_handler()))
        with pytest.raises(InputTooLong):
            backend.embed(['abcd'])
        assert backend.requests == 0

    def test_in_flight_raises(self):
        with pytest.raises(ValueError, match='in-flight'):
            RemoteEmbedder('http://embed.test/v1', 'm', max_in_flight=0)

    def test_cached(self):
        calls = []
        backend = RemoteEmbedder('http://embed.test/v1', 'm',
                                 transport=httpx.MockTransport(embeddings_handler(calls=calls)))
        encoder = CachedEmbedder(backend, EmbeddingCache())
        texts = [f'text {random.Random(i).random()}' for i in range(5)]
        first = encoder(texts)
        second = encoder(texts)
        assert first == second
        assert len(calls) == 1
