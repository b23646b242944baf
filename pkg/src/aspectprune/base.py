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

r"""Shared types, registries, and exceptions.

The registries map short identifiers to implementation classes, so that
configuration files and the command line can refer to them by name:

* :data:`EMBEDDERS` -- embedding backends (:mod:`aspectprune.embedder`).
* :data:`GENERATORS` -- summary generation backends
  (:mod:`aspectprune.promptgen`).
* :data:`ADAPTERS` -- dataset adapters (:mod:`aspectprune.adapters`).

They are populated on package import by :mod:`aspectprune`.
"""

import abc
import json
import os
from dataclasses import dataclass
from typing import TYPE_CHECKING
from typing import Any
from typing import Mapping
from typing import MutableMapping
from typing import Optional
from typing import Type
from typing import Union

try:
    from typing import TypeAlias
except ImportError:  # pragma: no cover
    TypeAlias = Any  # Python < 3.10

try:
    from typing import Literal
except ImportError:  # pragma: no cover
    Literal: TypeAlias = str  # Python < 3.8

if TYPE_CHECKING:  # pragma: no cover
    from .embedder import BaseEmbedder
    from .promptgen import BaseGenerator

AnyPath: TypeAlias = Union[str, os.PathLike]

EMBEDDERS: MutableMapping[str, Type['BaseEmbedder']] = {}
r"""Registered embedding backends."""

GENERATORS: MutableMapping[str, Type['BaseGenerator']] = {}
r"""Registered summary generation backends."""

ADAPTERS: MutableMapping[str, Type['BaseAdapter']] = {}
r"""Registered dataset adapters."""


# ----------------------------------------------------------------------------

class ConfigError(ValueError):
    r"""Invalid or inconsistent configuration."""


class AdapterUnknown(ConfigError):
    r"""Dataset adapter identifier not registered."""


class DimensionMismatch(ValueError):
    r"""Embedding vectors of different dimensions."""


class InputTooLong(ValueError):
    r"""Text exceeds the embedding backend input limit."""


class BudgetTooSmall(ValueError):
    r"""Token budget cannot hold even a single document word."""


class BudgetUnreachable(RuntimeError):
    r"""Recursive pruning cannot reach the global word target.

    The best effort result is kept in :attr:`pruned`, so that callers can
    still hard-truncate it.
    """

    def __init__(self, message: str, pruned: Any = None):
        super().__init__(message)
        self.pruned = pruned


class EmptyTrainingSet(ValueError):
    r"""No training records to draw in-context examples from."""


class EmptyAfterFilter(ValueError):
    r"""Dataset filters left no records."""


class LengthMismatch(ValueError):
    r"""Generations and references are not aligned."""


class RemoteError(RuntimeError):
    r"""Base class for remote endpoint failures."""

    def __init__(self, message: str, attempts: int = 0):
        super().__init__(message)
        self.attempts = attempts


class RemoteUnavailable(RemoteError):
    r"""Remote endpoint unreachable after bounded retries."""


class EmptyCompletion(RemoteError):
    r"""Remote endpoint answered with no usable text."""


class BudgetExceededByServer(RemoteError):
    r"""Remote endpoint reported a context length overflow."""


class FailureBudgetExceeded(RuntimeError):
    r"""Too many records failed within a run.

    The partial report is kept in :attr:`report`.
    """

    def __init__(self, message: str, report: Optional[Any] = None):
        super().__init__(message)
        self.report = report


# ----------------------------------------------------------------------------

SPLITS = ('train', 'test')
r"""Dataset splits."""


@dataclass(frozen=True)
class DatasetRecord:
    r"""Normalized dataset record.

    All the fields are non-empty strings; `split` is one of :data:`SPLITS`.
    """

    id: str
    document: str
    aspect: str
    reference_summary: str
    split: str = 'test'

    def __post_init__(self):
        for name in ('id', 'document', 'aspect', 'reference_summary'):
            value = getattr(self, name)
            if not isinstance(value, str) or not value.strip():
                raise ValueError(f'empty {name}')
        if self.split not in SPLITS:
            raise ValueError(f'invalid split: {self.split!r}')


class BaseAdapter(abc.ABC):
    r"""Dataset adapter.

    An adapter maps the JSON objects of one dataset export, one per line,
    onto :class:`DatasetRecord`.
    """

    @classmethod
    @abc.abstractmethod
    def parse_object(cls, obj: Mapping[str, Any], line_no: int) -> DatasetRecord:
        r"""Parses a decoded JSON line.

        Args:
            obj (dict):
                Decoded JSON object.

            line_no (int):
                One-based line number, for fallback identifiers.

        Returns:
            :class:`DatasetRecord`: Normalized record.

        Raises:
            :obj:`ValueError`: Malformed object.
        """
        ...

    @classmethod
    def parse_line(cls, line: str, line_no: int) -> DatasetRecord:
        r"""Parses a JSON line.

        Raises:
            :obj:`ValueError`: Invalid JSON, or malformed object.
        """
        obj = json.loads(line)
        if not isinstance(obj, Mapping):
            raise ValueError('not a JSON object')
        return cls.parse_object(obj, line_no)

    @staticmethod
    def get_text(obj: Mapping[str, Any], *keys: str) -> str:
        r"""Gets the first available text field.

        Lists of strings are joined with spaces.

        Examples:
            >>> BaseAdapter.get_text({'b': ['x.', 'y.']}, 'a', 'b')
            'x. y.'
        """
        for key in keys:
            value = obj.get(key)
            if value is None:
                continue
            if isinstance(value, (list, tuple)):
                if not all(isinstance(item, str) for item in value):
                    raise ValueError(f'invalid {key}')
                value = ' '.join(item.strip() for item in value if item.strip())
            if isinstance(value, (int, float)) and not isinstance(value, bool) and key == 'id':
                value = str(value)
            if not isinstance(value, str):
                raise ValueError(f'invalid {key}')
            return value.strip()
        return ''
