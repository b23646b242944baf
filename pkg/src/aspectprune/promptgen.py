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

r"""Prompt assembly and summary generation.

Prompts are rendered from a versioned template (see
:class:`PromptTemplate`), and kept within a token budget by truncating the
document words from its end; the system instruction and the in-context
example are never truncated.

Generation backends derive from :class:`BaseGenerator` and are registered
into :data:`aspectprune.base.GENERATORS`:

* ``chat`` -- :class:`ChatGenerator`, an OpenAI-compatible chat-completions
  endpoint client.
* ``lead`` -- :class:`LeadGenerator`, an offline extractive backend taking
  the leading sentences of the prompt document.
"""

import abc
import logging
import math
import os
import random
import re
import threading
import time
from dataclasses import dataclass
from typing import Any
from typing import Callable
from typing import Dict
from typing import List
from typing import Mapping
from typing import Optional
from typing import Sequence
from typing import Tuple

import httpx

from .base import AnyPath
from .base import BudgetTooSmall
from .base import EmptyCompletion
from .base import EmptyTrainingSet
from .base import Literal
from .base import RemoteUnavailable
from .remote import bearer_headers
from .remote import make_client
from .remote import post_json
from .segmenter import count_words
from .segmenter import split_sentences
from .segmenter import tokenize_words

_log = logging.getLogger(__name__)

LLM_API_KEY_ENV = 'LLM_API_KEY'
r"""Environment variable holding the chat endpoint token."""

DEFAULT_TOKEN_BUDGET = 4096
r"""Default prompt token budget."""

DEFAULT_CHARS_PER_TOKEN = 4.0
r"""Default characters per token ratio of the estimator."""

DEFAULT_SYSTEM_INSTRUCTION = (
    'You are an expert summarizer. '
    'You write faithful summaries of documents, focused on a given aspect.'
)
r"""Default system instruction."""

DEFAULT_TEMPLATE_PATH = os.path.join(os.path.dirname(__file__), 'templates', 'default.txt')
r"""Path of the template shipped with the package."""

IclPolicy = Literal['shortest', 'aspect_matched', 'random']

_PLACEHOLDER_REGEX = re.compile(r'\{\{(\w+)\}\}')

TEMPLATE_SECTIONS = ('system', 'example', 'target')

TEMPLATE_PLACEHOLDERS = frozenset({
    'system', 'example_doc', 'example_aspect', 'example_summary', 'document', 'aspect',
})


@dataclass(frozen=True)
class IclExample:
    r"""In-context example."""

    document: str
    aspect: str
    summary: str
    source_id: str
    word_count: int

    def __post_init__(self):
        for name in ('document', 'aspect', 'summary', 'source_id'):
            if not getattr(self, name).strip():
                raise ValueError(f'empty example {name}')


@dataclass(frozen=True)
class PromptSpec:
    r"""Assembled prompt.

    Attributes:
        system_instruction (str):
            System instruction.

        icl_example (:class:`IclExample`):
            Optional in-context example.

        document_text (str):
            Document text, after truncation.

        aspect (str):
            Target aspect.

        token_budget (int):
            Token budget.

        system_text (str):
            Rendered system message.

        user_text (str):
            Rendered user message.

        prompt_tokens_est (int):
            Estimated tokens of both messages.

        truncated (bool):
            The document was truncated to fit.
    """

    system_instruction: str
    icl_example: Optional[IclExample]
    document_text: str
    aspect: str
    token_budget: int = DEFAULT_TOKEN_BUDGET
    system_text: str = ''
    user_text: str = ''
    prompt_tokens_est: int = 0
    truncated: bool = False

    @property
    def messages(self) -> List[Mapping[str, str]]:
        r"""list of dict: Chat messages."""

        messages = []
        if self.system_text:
            messages.append({'role': 'system', 'content': self.system_text})
        messages.append({'role': 'user', 'content': self.user_text})
        return messages


@dataclass(frozen=True)
class GenerationResult:
    r"""Generated summary."""

    summary: str
    model_id: str
    prompt_tokens_est: int
    latency_ms: int
    attempts: int = 1


# ----------------------------------------------------------------------------

def estimate_tokens(text: str, chars_per_token: float = DEFAULT_CHARS_PER_TOKEN) -> int:
    r"""Estimates the tokens of a text, by its length.

    Args:
        text (str):
            Text to estimate.

        chars_per_token (float):
            Average characters per token.

    Returns:
        int: ``ceil(len(text) / chars_per_token)``.

    Examples:
        >>> estimate_tokens('')
        0
        >>> estimate_tokens('x' * 400)
        100
        >>> estimate_tokens('abcde')
        2
    """
    if chars_per_token <= 0:
        raise ValueError('non-positive chars per token')
    return int(math.ceil(len(text) / chars_per_token))


class TokenEstimator:
    r"""Configurable token estimator.

    Args:
        mode (str):
            ``chars`` for :func:`estimate_tokens`, ``words`` for one token
            per word.

        chars_per_token (float):
            Ratio for the ``chars`` mode.

    Examples:
        >>> TokenEstimator('words')('one two three')
        3
        >>> TokenEstimator('chars', 2.0)('one two')
        4
    """

    MODES = ('chars', 'words')

    def __init__(self, mode: str = 'chars', chars_per_token: float = DEFAULT_CHARS_PER_TOKEN):

        if mode not in self.MODES:
            raise ValueError(f'unknown estimator mode: {mode!r}')
        if chars_per_token <= 0:
            raise ValueError('non-positive chars per token')
        self.mode: str = mode
        self.chars_per_token: float = chars_per_token

    def __call__(self, text: str) -> int:

        if self.mode == 'words':
            return count_words(text)
        return estimate_tokens(text, self.chars_per_token)


Estimator = Callable[[str], int]


def truncate_to_budget(
    document: str,
    budget_tokens: int,
    fixed_overhead_tokens: int = 0,
    estimator: Optional[Estimator] = None,
) -> str:
    r"""Truncates words from the end of a document, to fit a token budget.

    The result is the longest word prefix of `document` such that its
    estimate plus `fixed_overhead_tokens` fits `budget_tokens`; a document
    already fitting is returned unchanged.
    As the estimate grows with the prefix length, the prefix is found by
    bisection, with the same outcome as dropping one word at a time.

    Args:
        document (str):
            Document text.

        budget_tokens (int):
            Token budget.

        fixed_overhead_tokens (int):
            Tokens already taken by the rest of the prompt.

        estimator (callable):
            Token estimator; :func:`estimate_tokens` by default.

    Returns:
        str: Word prefix of `document`.

    Raises:
        :class:`BudgetTooSmall`: Not even one word fits.

    Examples:
        >>> truncate_to_budget('a b c d e', 3, estimator=TokenEstimator('words'))
        'a b c'
    """
    if estimator is None:
        estimator = estimate_tokens

    room = budget_tokens - fixed_overhead_tokens
    if room <= 0:
        raise BudgetTooSmall(f'budget too small: {budget_tokens} <= {fixed_overhead_tokens}')

    if estimator(document) <= room:
        return document

    tokens = tokenize_words(document)

    def prefix(count: int) -> str:
        return document[:tokens[count - 1].char_span[1]] if count else ''

    low, high = 0, len(tokens)  # prefix(low) fits, prefix(high) does not
    while high - low > 1:
        middle = (low + high) // 2
        if estimator(prefix(middle)) <= room:
            low = middle
        else:
            high = middle

    if not low:
        raise BudgetTooSmall('budget too small: no document word fits')
    return prefix(low)


# ----------------------------------------------------------------------------

def icl_pool(
    records: Sequence[Any],
    pool_size: int = 20,
    aspect: Optional[str] = None,
) -> List[Any]:
    r"""Shortest training records, the in-context example candidates.

    Args:
        records (list):
            Training records, with ``id``, ``document``, and ``aspect``.

        pool_size (int):
            Pool size.

        aspect (str):
            If not ``None``, only records with this aspect are considered.

    Returns:
        list: Up to `pool_size` records, by word count and then by ``id``.
    """
    if pool_size < 1:
        raise ValueError('non-positive pool size')

    if aspect is not None:
        records = [record for record in records if record.aspect == aspect]

    ranked = sorted(records, key=lambda record: (count_words(record.document), record.id))
    return ranked[:pool_size]


def _to_example(record: Any) -> IclExample:

    return IclExample(record.document, record.aspect, record.reference_summary,
                      record.id, count_words(record.document))


def select_icl_example(
    training_records: Sequence[Any],
    policy: IclPolicy = 'shortest',
    aspect: Optional[str] = None,
    pool_size: int = 20,
    seed: int = 0,
) -> IclExample:
    r"""Selects the in-context example.

    Policies:

    * ``shortest`` -- the shortest record of the :func:`icl_pool` (ties:
      smallest ``id``).
    * ``aspect_matched`` -- as ``shortest``, among the records with the given
      `aspect`; falls back to ``shortest`` when none matches.
    * ``random`` -- a record drawn from the :func:`icl_pool` with a `seed`
      random generator.

    Args:
        training_records (list):
            Training records, with ``id``, ``document``, ``aspect``, and
            ``reference_summary``.

        policy (str):
            Selection policy.

        aspect (str):
            Query aspect, for ``aspect_matched``.

        pool_size (int):
            Candidate pool size.

        seed (int):
            Random seed, for ``random``.

    Returns:
        :class:`IclExample`: Selected example.

    Raises:
        :class:`EmptyTrainingSet`: No training records.
    """
    if not training_records:
        raise EmptyTrainingSet('empty training set')

    if policy == 'shortest':
        pool = icl_pool(training_records, pool_size)
        return _to_example(pool[0])

    elif policy == 'aspect_matched':
        if aspect is None:
            raise ValueError('aspect required')
        pool = icl_pool(training_records, pool_size, aspect=aspect)
        if not pool:
            _log.info('no training record with aspect %r, using the shortest', aspect)
            pool = icl_pool(training_records, pool_size)
        return _to_example(pool[0])

    elif policy == 'random':
        pool = icl_pool(training_records, pool_size)
        return _to_example(random.Random(seed).choice(pool))

    else:
        raise ValueError(f'unknown example policy: {policy!r}')


# ----------------------------------------------------------------------------

class PromptTemplate:
    r"""Sectioned prompt template.

    The template text is split into sections by ``### <name>`` lines; lines
    starting with ``## `` are comments.
    Section ``system`` renders the system message; sections ``example``
    (skipped without an in-context example) and ``target`` render the user
    message.
    Placeholders are written as ``{{name}}``, with names from
    :data:`TEMPLATE_PLACEHOLDERS`.

    Args:
        text (str):
            Template text.
    """

    def __init__(self, text: str):

        sections: Dict[str, List[str]] = {}
        current = None

        for line in text.splitlines():
            if line.startswith('### '):
                current = line[4:].strip()
                if current not in TEMPLATE_SECTIONS:
                    raise ValueError(f'unknown template section: {current!r}')
                sections[current] = []
            elif line.startswith('## ') or line == '##':
                continue
            elif current is not None:
                sections[current].append(line)
            elif line.strip():
                raise ValueError('text before first template section')

        for name in ('system', 'target'):
            if name not in sections:
                raise ValueError(f'missing template section: {name!r}')

        self.sections: Mapping[str, str] = {name: '\n'.join(lines).strip('\n') + '\n'
                                            for name, lines in sections.items()}

        for body in self.sections.values():
            for name in _PLACEHOLDER_REGEX.findall(body):
                if name not in TEMPLATE_PLACEHOLDERS:
                    raise ValueError(f'unknown template placeholder: {name!r}')

    @classmethod
    def load(cls, path: Optional[AnyPath] = None) -> 'PromptTemplate':
        r"""Loads a template file; the shipped one by default."""

        if path is None:
            path = DEFAULT_TEMPLATE_PATH
        with open(path, 'rt', encoding='utf-8') as stream:
            return cls(stream.read())

    @staticmethod
    def _fill(body: str, values: Mapping[str, str]) -> str:

        return _PLACEHOLDER_REGEX.sub(lambda m: values.get(m.group(1), ''), body)

    def render(
        self,
        system: str,
        example: Optional[IclExample],
        document: str,
        aspect: str,
    ) -> Tuple[str, str]:
        r"""Renders the template.

        Returns:
            tuple of str: ``(system_text, user_text)``.
        """
        values = {
            'system': system,
            'document': document,
            'aspect': aspect,
            'example_doc': example.document if example else '',
            'example_aspect': example.aspect if example else '',
            'example_summary': example.summary if example else '',
        }
        system_text = self._fill(self.sections['system'], values).strip()

        parts = []
        if example is not None and 'example' in self.sections:
            parts.append(self._fill(self.sections['example'], values))
        parts.append(self._fill(self.sections['target'], values))
        user_text = '\n'.join(parts)
        return system_text, user_text


def build_prompt(
    system_instruction: str,
    example: Optional[IclExample],
    document: str,
    aspect: str,
    token_budget: int = DEFAULT_TOKEN_BUDGET,
    template: Optional[PromptTemplate] = None,
    estimator: Optional[Estimator] = None,
) -> PromptSpec:
    r"""Assembles a prompt within a token budget.

    The system instruction and the optional example are rendered first;
    their tokens are the fixed overhead. The document is then truncated via
    :func:`truncate_to_budget` to fit the remaining budget.

    Args:
        system_instruction (str):
            System instruction.

        example (:class:`IclExample`):
            Optional in-context example.

        document (str):
            Document text, usually pruned.

        aspect (str):
            Target aspect; must not be blank.

        token_budget (int):
            Token budget of the whole prompt.

        template (:class:`PromptTemplate`):
            Prompt template; the shipped one by default.

        estimator (callable):
            Token estimator; :func:`estimate_tokens` by default.

    Returns:
        :class:`PromptSpec`: Assembled prompt.

    Raises:
        :class:`BudgetTooSmall`: The budget cannot hold a single document word.
    """
    if not aspect or not aspect.strip():
        raise ValueError('empty aspect')
    if template is None:
        template = PromptTemplate.load()
    if estimator is None:
        estimator = estimate_tokens

    system_text, user_shell = template.render(system_instruction, example, '', aspect)
    overhead = estimator(system_text) + estimator(user_shell)

    fitted = truncate_to_budget(document, token_budget, overhead, estimator)
    system_text, user_text = template.render(system_instruction, example, fitted, aspect)
    tokens = estimator(system_text) + estimator(user_text)

    return PromptSpec(
        system_instruction=system_instruction,
        icl_example=example,
        document_text=fitted,
        aspect=aspect,
        token_budget=token_budget,
        system_text=system_text,
        user_text=user_text,
        prompt_tokens_est=tokens,
        truncated=(fitted != document),
    )


# ----------------------------------------------------------------------------

class BaseGenerator(abc.ABC):
    r"""Summary generation backend."""

    @property
    @abc.abstractmethod
    def model_id(self) -> str:
        ...

    @abc.abstractmethod
    def _complete(self, spec: PromptSpec) -> Tuple[str, int]:
        r"""Returns the raw completion text, and the attempts taken."""
        ...

    def close(self) -> None:
        pass

    def generate(self, spec: PromptSpec) -> GenerationResult:
        r"""Generates a summary for an assembled prompt.

        Raises:
            :class:`EmptyCompletion`: Blank completion.
        """
        start = time.perf_counter()
        text, attempts = self._complete(spec)
        latency_ms = int(round((time.perf_counter() - start) * 1000))

        summary = (text or '').strip()
        if not summary:
            raise EmptyCompletion('empty completion', attempts)
        return GenerationResult(summary, self.model_id, spec.prompt_tokens_est, latency_ms, attempts)


class ChatGenerator(BaseGenerator):
    r"""OpenAI-compatible chat-completions endpoint.

    Requests are ``POST <base_url>/chat/completions`` with body
    ``{"model", "messages", "temperature", "max_tokens"}``; the bearer token
    is read from the :data:`LLM_API_KEY_ENV` environment variable.

    Args:
        base_url (str):
            Endpoint base URL.

        model (str):
            Model identifier.

        temperature (float):
            Sampling temperature.

        max_tokens (int):
            Completion token limit.

        max_retries (int):
            Retries per request.

        max_in_flight (int):
            Concurrent requests limit, shared by all threads.

        timeout (float):
            Request timeout, in seconds.

        backoff_base (float):
            Initial retry delay, in seconds.

        transport (:class:`httpx.BaseTransport`):
            Optional transport, mostly for testing.
    """

    def __init__(
        self,
        base_url: str,
        model: str,
        temperature: float = 0.0,
        max_tokens: int = 256,
        max_retries: int = 3,
        max_in_flight: int = 2,
        timeout: float = 120.0,
        backoff_base: float = 1.0,
        transport: Optional[httpx.BaseTransport] = None,
    ):
        if max_in_flight < 1:
            raise ValueError('non-positive in-flight limit')

        self.model: str = model
        self.temperature: float = temperature
        self.max_tokens: int = max_tokens
        self.max_retries: int = max_retries
        self.backoff_base: float = backoff_base
        self._client: httpx.Client = make_client(base_url, timeout, transport)
        self._gate = threading.BoundedSemaphore(max_in_flight)

    @property
    def model_id(self) -> str:

        return self.model

    def close(self) -> None:

        self._client.close()

    def _complete(self, spec: PromptSpec) -> Tuple[str, int]:

        payload = {
            'model': self.model,
            'messages': spec.messages,
            'temperature': self.temperature,
            'max_tokens': self.max_tokens,
        }
        with self._gate:
            body, attempts = post_json(self._client, '/chat/completions', payload,
                                       bearer_headers(LLM_API_KEY_ENV),
                                       max_retries=self.max_retries,
                                       backoff_base=self.backoff_base)
        try:
            content = body['choices'][0]['message']['content']
        except (KeyError, IndexError, TypeError):
            raise RemoteUnavailable('malformed chat response', attempts) from None
        return content or '', attempts


class LeadGenerator(BaseGenerator):
    r"""Offline extractive backend.

    The summary is made of the leading sentences of the prompt document,
    up to `max_tokens` words; at least one sentence is taken.
    """

    def __init__(self, max_tokens: int = 256, **kwargs: Any):

        del kwargs
        if max_tokens < 1:
            raise ValueError('non-positive max tokens')
        self.max_tokens: int = max_tokens

    @property
    def model_id(self) -> str:

        return 'lead'

    def _complete(self, spec: PromptSpec) -> Tuple[str, int]:

        taken = []
        words = 0
        for sentence in split_sentences(spec.document_text):
            if taken and words + sentence.word_count > self.max_tokens:
                break
            taken.append(sentence.text)
            words += sentence.word_count
        return ' '.join(taken), 1


def generate_summary(spec: PromptSpec, generator: BaseGenerator) -> GenerationResult:
    r"""Generates a summary for an assembled prompt.

    Args:
        spec (:class:`PromptSpec`):
            Assembled prompt.

        generator (:class:`BaseGenerator`):
            Generation backend.

    Returns:
        :class:`GenerationResult`: Generated summary.

    Raises:
        :class:`RemoteUnavailable`: Endpoint unreachable after retries.

        :class:`EmptyCompletion`: Blank completion.

        :class:`BudgetExceededByServer`: Endpoint reported a context overflow.
    """
    return generator.generate(spec)
