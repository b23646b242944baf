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

r"""Text embeddings, cosine similarity, and the embedding cache.

Embedding backends derive from :class:`BaseEmbedder` and are registered
into :data:`aspectprune.base.EMBEDDERS`:

* ``offline`` -- :class:`OfflineEmbedder`, a deterministic hashed
  bag-of-words embedder, needing neither network nor models.
* ``remote`` -- :class:`RemoteEmbedder`, an OpenAI-compatible embeddings
  endpoint client.

:class:`CachedEmbedder` puts an :class:`EmbeddingCache` in front of a
backend.
"""

import abc
import hashlib
import json
import logging
import math
import os
import string
import threading
import time
from dataclasses import dataclass
from typing import Any
from typing import Dict
from typing import List
from typing import Mapping
from typing import Optional
from typing import Sequence
from typing import Union

import httpx
import numpy as np

from .base import AnyPath
from .base import DimensionMismatch
from .base import InputTooLong
from .base import RemoteUnavailable
from .remote import bearer_headers
from .remote import make_client
from .remote import post_json
from .segmenter import tokenize_words
from .utils import chop
from .utils import dump_json_line
from .utils import stable_hash

_log = logging.getLogger(__name__)

EMBED_API_KEY_ENV = 'EMBED_API_KEY'
r"""Environment variable holding the embeddings endpoint token."""


class EmbeddingVector:
    r"""Fixed-dimension embedding vector.

    Args:
        values (array):
            Finite real values; copied into a read-only ``float64`` array.

        backend_id (str):
            Identifier of the backend which computed it.

    Examples:
        >>> v = EmbeddingVector([3, 4], 'demo')
        >>> v.dim, v.norm, v.degenerate
        (2, 5.0, False)
    """

    __slots__ = ('values', 'backend_id')

    def __init__(self, values: Any, backend_id: str = ''):

        array = np.array(values, dtype=np.float64).reshape(-1)
        if not array.size:
            raise ValueError('empty vector')
        if not np.all(np.isfinite(array)):
            raise ValueError('non-finite vector value')
        array.flags.writeable = False

        self.values: np.ndarray = array
        self.backend_id: str = backend_id

    def __eq__(self, other: Any) -> bool:

        if not isinstance(other, EmbeddingVector):
            return NotImplemented
        return (self.backend_id == other.backend_id and
                np.array_equal(self.values, other.values))

    def __len__(self) -> int:

        return self.values.size

    def __repr__(self) -> str:

        return f'<{type(self).__name__} backend_id={self.backend_id!r} dim={self.dim}>'

    @property
    def degenerate(self) -> bool:
        r"""bool: The vector is all zeros."""

        return not np.any(self.values)

    @property
    def dim(self) -> int:
        r"""int: Vector dimension."""

        return self.values.size

    @property
    def norm(self) -> float:
        r"""float: Euclidean norm."""

        return _norm(self.values)


@dataclass(frozen=True)
class EmbeddingRequest:
    r"""Batch of texts to embed with a given backend."""

    texts: Sequence[str]
    backend_id: str

    def __post_init__(self):
        if not self.texts:
            raise ValueError('no texts to embed')


@dataclass(frozen=True)
class CacheEntry:
    r"""Cached embedding."""

    key: str
    vector: EmbeddingVector
    created_at: float


AnyVector = Union[EmbeddingVector, Sequence[float], np.ndarray]


def _as_array(vector: AnyVector) -> np.ndarray:

    if isinstance(vector, EmbeddingVector):
        return vector.values
    return np.asarray(vector, dtype=np.float64).reshape(-1)


def _norm(values: np.ndarray) -> float:

    return math.sqrt(math.fsum(values * values))


def cosine(a: AnyVector, b: AnyVector) -> float:
    r"""Cosine similarity.

    Products are summed with :func:`math.fsum`, so that the result does not
    depend on the argument order.
    A zero norm vector has zero similarity with anything.

    Args:
        a (vector):
            First vector.

        b (vector):
            Second vector.

    Returns:
        float: Similarity, within ``[-1, 1]``.

    Raises:
        :class:`DimensionMismatch`: Vectors have different dimensions.

    Examples:
        >>> cosine([1, 0], [1, 0])
        1.0
        >>> cosine([1, 0], [0, 1])
        0.0
        >>> round(cosine([1, 2, 3], [4, 5, 6]), 6)
        0.974632
        >>> cosine([0, 0], [1, 1])
        0.0
    """
    x = _as_array(a)
    y = _as_array(b)
    if x.size != y.size:
        raise DimensionMismatch(f'dimension mismatch: {x.size} != {y.size}')

    norms = _norm(x) * _norm(y)
    if not norms:
        return 0.0

    value = math.fsum(x * y) / norms
    return min(1.0, max(-1.0, value))


def _word_hash(word: str, seed: int) -> int:

    digest = hashlib.blake2b(f'{seed}\x1f{word}'.encode('utf-8'), digest_size=8).digest()
    return int.from_bytes(digest, 'little')


def offline_features(text: str) -> List[str]:
    r"""Lowercase words, stripped of surrounding punctuation.

    Examples:
        >>> offline_features('The Cat, the HAT!')
        ['the', 'cat', 'the', 'hat']
    """
    features = []
    for token in tokenize_words(text.lower()):
        word = token.text.strip(string.punctuation)
        if word:
            features.append(word)
    return features


def offline_embed(
    text: str,
    dim: int = 256,
    seed: int = 0,
    backend_id: Optional[str] = None,
) -> EmbeddingVector:
    r"""Hashed bag-of-words embedding.

    Each word of :func:`offline_features` is hashed together with `seed`
    into a coordinate and a sign, which are accumulated in word order.
    The sum is then normalized; an empty text yields the zero vector.

    Args:
        text (str):
            Text to embed.

        dim (int):
            Vector dimension, at least 8.

        seed (int):
            Hashing seed.

        backend_id (str):
            Backend identifier; by default ``offline:<dim>:<seed>``.

    Returns:
        :class:`EmbeddingVector`: Unit or zero vector.

    Examples:
        >>> offline_embed('', 64).degenerate
        True
        >>> cosine(offline_embed('cat cat', 64), offline_embed('cat', 64))
        1.0
    """
    if dim < 8:
        raise ValueError('dimension too small')

    values = np.zeros(dim, dtype=np.float64)
    for word in offline_features(text):
        h = _word_hash(word, seed)
        values[h % dim] += -1.0 if (h >> 63) else 1.0

    norm = _norm(values)
    if norm:
        values /= norm

    if backend_id is None:
        backend_id = f'offline:{dim}:{seed}'
    return EmbeddingVector(values, backend_id)


# ----------------------------------------------------------------------------

class BaseEmbedder(abc.ABC):
    r"""Embedding backend.

    Subclasses implement :meth:`_embed_batch`; :meth:`embed` takes care of
    input limits, batching, and dimension consistency.
    """

    max_input_chars: Optional[int] = None
    r"""Backend input limit, in characters; ``None`` for unlimited."""

    def __init__(self, batch_size: int = 64):

        if batch_size < 1:
            raise ValueError('non-positive batch size')
        self.batch_size: int = batch_size
        self._dim: Optional[int] = None
        self._dim_lock = threading.Lock()

    @property
    @abc.abstractmethod
    def backend_id(self) -> str:
        r"""str: Backend identifier, part of the cache keys."""
        ...

    @property
    def dim(self) -> Optional[int]:
        r"""int: Vector dimension, ``None`` until known."""

        return self._dim

    @abc.abstractmethod
    def _embed_batch(self, texts: Sequence[str]) -> List[Sequence[float]]:
        ...

    def close(self) -> None:
        pass

    def check_input(self, text: str) -> None:
        r"""Checks a text against :attr:`max_input_chars`.

        Raises:
            :class:`InputTooLong`: Text too long.
        """
        limit = self.max_input_chars
        if limit is not None and len(text) > limit:
            raise InputTooLong(f'input too long: {len(text)} > {limit} chars')

    def embed(self, texts: Sequence[str]) -> List[EmbeddingVector]:
        r"""Embeds texts, without caching.

        Args:
            texts (list of str):
                Texts to embed.

        Returns:
            list of :class:`EmbeddingVector`: One vector per text, in order.

        Raises:
            :class:`InputTooLong`: Some text exceeds the backend limit.

            :class:`DimensionMismatch`: Inconsistent vector dimensions.
        """
        for text in texts:
            self.check_input(text)

        vectors: List[EmbeddingVector] = []
        backend_id = self.backend_id

        for batch in chop(list(texts), self.batch_size):
            rows = self._embed_batch(batch)
            if len(rows) != len(batch):
                raise DimensionMismatch(f'expected {len(batch)} vectors, got {len(rows)}')

            for row in rows:
                vector = EmbeddingVector(row, backend_id)
                with self._dim_lock:
                    if self._dim is None:
                        self._dim = vector.dim
                if vector.dim != self._dim:
                    raise DimensionMismatch(f'dimension mismatch: {vector.dim} != {self._dim}')
                vectors.append(vector)

        return vectors


class OfflineEmbedder(BaseEmbedder):
    r"""Deterministic hashed bag-of-words backend.

    See :func:`offline_embed`.
    """

    def __init__(self, dim: int = 256, seed: int = 0, batch_size: int = 64):

        super().__init__(batch_size=batch_size)
        if dim < 8:
            raise ValueError('dimension too small')
        self._dim = dim
        self.seed: int = seed

    @property
    def backend_id(self) -> str:

        return f'offline:{self._dim}:{self.seed}'

    def _embed_batch(self, texts: Sequence[str]) -> List[Sequence[float]]:

        return [offline_embed(text, self._dim, self.seed).values for text in texts]


class RemoteEmbedder(BaseEmbedder):
    r"""OpenAI-compatible embeddings endpoint.

    Requests are ``POST <base_url>/embeddings`` with body
    ``{"model": ..., "input": [...]}``; the bearer token is read from the
    :data:`EMBED_API_KEY_ENV` environment variable.

    Args:
        base_url (str):
            Endpoint base URL.

        model (str):
            Model identifier.

        dim (int):
            Expected dimension; learnt from the first answer if ``None``.

        batch_size (int):
            Texts per request.

        max_retries (int):
            Retries per request.

        max_in_flight (int):
            Concurrent requests limit, shared by all threads.

        timeout (float):
            Request timeout, in seconds.

        max_input_chars (int):
            Input limit, in characters.

        backoff_base (float):
            Initial retry delay, in seconds.

        transport (:class:`httpx.BaseTransport`):
            Optional transport, mostly for testing.
    """

    def __init__(
        self,
        base_url: str,
        model: str,
        dim: Optional[int] = None,
        batch_size: int = 64,
        max_retries: int = 3,
        max_in_flight: int = 4,
        timeout: float = 60.0,
        max_input_chars: Optional[int] = 32000,
        backoff_base: float = 1.0,
        transport: Optional[httpx.BaseTransport] = None,
    ):
        super().__init__(batch_size=batch_size)
        if max_in_flight < 1:
            raise ValueError('non-positive in-flight limit')

        self._dim = dim
        self.model: str = model
        self.max_retries: int = max_retries
        self.max_input_chars = max_input_chars
        self.backoff_base: float = backoff_base
        self.requests: int = 0
        self._client: httpx.Client = make_client(base_url, timeout, transport)
        self._gate = threading.BoundedSemaphore(max_in_flight)
        self._count_lock = threading.Lock()

    @property
    def backend_id(self) -> str:

        return f'remote:{self.model}'

    def close(self) -> None:

        self._client.close()

    def _embed_batch(self, texts: Sequence[str]) -> List[Sequence[float]]:

        payload = {'model': self.model, 'input': list(texts)}
        with self._gate:
            body, _ = post_json(self._client, '/embeddings', payload,
                                bearer_headers(EMBED_API_KEY_ENV),
                                max_retries=self.max_retries,
                                backoff_base=self.backoff_base)
        with self._count_lock:
            self.requests += 1

        try:
            items = sorted(body['data'], key=lambda item: item.get('index', 0))
            return [item['embedding'] for item in items]
        except (KeyError, TypeError, AttributeError):
            raise RemoteUnavailable('malformed embeddings response') from None


# ----------------------------------------------------------------------------

class EmbeddingCache:
    r"""Content-addressed embedding cache.

    Entries are keyed by :func:`aspectprune.utils.stable_hash` of the
    backend identifier and the text.
    With a `path`, entries are appended as JSON lines to that file, and
    loaded back on construction; corrupt lines are dropped and the file is
    rebuilt from the valid ones.

    Lookups are lock-free; insertions are serialized.

    Args:
        path (str):
            Optional cache file path; ``None`` keeps entries in memory only.
    """

    def __init__(self, path: Optional[AnyPath] = None):

        self.path: Optional[str] = None if path is None else os.fspath(path)
        self.hits: int = 0
        self.misses: int = 0
        self._entries: Dict[str, CacheEntry] = {}
        self._lock = threading.Lock()

        if self.path is not None:
            self._load()

    def __contains__(self, key: str) -> bool:

        return key in self._entries

    def __len__(self) -> int:

        return len(self._entries)

    @staticmethod
    def make_key(backend_id: str, text: str) -> str:

        return stable_hash(backend_id, text)

    @staticmethod
    def _entry_to_json(entry: CacheEntry) -> Mapping[str, Any]:

        return {
            'key': entry.key,
            'backend_id': entry.vector.backend_id,
            'values': entry.vector.values.tolist(),
            'created_at': entry.created_at,
        }

    def _load(self) -> None:

        path = self.path
        if not os.path.exists(path):
            return

        corrupt = 0
        try:
            with open(path, 'rt', encoding='utf-8', errors='strict') as stream:
                for line in stream:
                    if not line.strip():
                        continue
                    try:
                        item = json.loads(line)
                        vector = EmbeddingVector(item['values'], item['backend_id'])
                        entry = CacheEntry(item['key'], vector, float(item['created_at']))
                    except (ValueError, KeyError, TypeError):
                        corrupt += 1
                        continue
                    self._entries[entry.key] = entry

        except (OSError, UnicodeDecodeError) as exc:
            _log.warning('embedding cache %s unreadable (%s), rebuilding', path, exc)
            corrupt += 1

        if corrupt:
            _log.warning('embedding cache %s: dropped %d corrupt entries', path, corrupt)
            self._rewrite()

        _log.info('embedding cache %s: %d entries loaded', path, len(self._entries))

    def _rewrite(self) -> None:

        temp_path = self.path + '.tmp'
        with open(temp_path, 'wt', encoding='utf-8') as stream:
            for entry in self._entries.values():
                stream.write(dump_json_line(self._entry_to_json(entry)))
                stream.write('\n')
        os.replace(temp_path, self.path)

    def get(self, backend_id: str, text: str) -> Optional[EmbeddingVector]:
        r"""Looks up an embedding, counting hits and misses."""

        key = self.make_key(backend_id, text)
        with self._lock:
            entry = self._entries.get(key)
            if entry is None or entry.vector.backend_id != backend_id:
                self.misses += 1
                return None
            self.hits += 1
            return entry.vector

    def put(self, text: str, vector: EmbeddingVector) -> CacheEntry:
        r"""Stores an embedding, appending it to the cache file if any."""

        key = self.make_key(vector.backend_id, text)
        entry = CacheEntry(key, vector, time.time())

        with self._lock:
            if key in self._entries:
                return self._entries[key]
            self._entries[key] = entry

            if self.path is not None:
                directory = os.path.dirname(self.path)
                if directory:
                    os.makedirs(directory, exist_ok=True)
                with open(self.path, 'at', encoding='utf-8') as stream:
                    stream.write(dump_json_line(self._entry_to_json(entry)))
                    stream.write('\n')
        return entry


def embed_texts(
    req: EmbeddingRequest,
    backend: BaseEmbedder,
    cache: Optional[EmbeddingCache] = None,
) -> List[EmbeddingVector]:
    r"""Embeds texts, consulting the cache first.

    Only texts missing from the cache are sent to the backend, each distinct
    text once; the fresh vectors are then cached.

    Args:
        req (:class:`EmbeddingRequest`):
            Texts to embed; its backend identifier must match `backend`.

        backend (:class:`BaseEmbedder`):
            Embedding backend.

        cache (:class:`EmbeddingCache`):
            Optional cache.

    Returns:
        list of :class:`EmbeddingVector`: One vector per text, in order.

    Examples:
        >>> backend = OfflineEmbedder(dim=64)
        >>> req = EmbeddingRequest(['abc', 'abc'], backend.backend_id)
        >>> a, b = embed_texts(req, backend)
        >>> a == b
        True
    """
    backend_id = backend.backend_id
    if req.backend_id != backend_id:
        raise ValueError(f'backend mismatch: {req.backend_id!r} != {backend_id!r}')

    found: Dict[str, EmbeddingVector] = {}
    missing: List[str] = []
    pending = set()

    for text in req.texts:
        if text in found or text in pending:
            continue
        vector = cache.get(backend_id, text) if cache is not None else None
        if vector is None:
            missing.append(text)
            pending.add(text)
        else:
            found[text] = vector

    if missing:
        _log.debug('embedding %d texts with %s', len(missing), backend_id)
        for text, vector in zip(missing, backend.embed(missing)):
            found[text] = vector
            if cache is not None:
                cache.put(text, vector)

    return [found[text] for text in req.texts]


class CachedEmbedder:
    r"""Embedding backend with an optional cache in front.

    Calling it embeds a list of texts via :func:`embed_texts`.
    """

    def __init__(self, backend: BaseEmbedder, cache: Optional[EmbeddingCache] = None):

        self.backend: BaseEmbedder = backend
        self.cache: Optional[EmbeddingCache] = cache

    def close(self) -> None:

        self.backend.close()

    def __call__(self, texts: Sequence[str]) -> List[EmbeddingVector]:

        if not texts:
            return []
        req = EmbeddingRequest(list(texts), self.backend.backend_id)
        return embed_texts(req, self.backend, self.cache)
