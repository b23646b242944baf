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

r"""Native JSONL schema.

One JSON object per line, with fields ``id``, ``document``, ``aspect``,
``summary``, and optionally ``split`` (``test`` by default).

Examples:
    >>> from aspectprune.adapters.jsonl import JsonlAdapter
    >>> line = '{"id": "a1", "document": "Text.", "aspect": "x", "summary": "S."}'
    >>> JsonlAdapter.parse_line(line, 1)
    DatasetRecord(id='a1', document='Text.', aspect='x', reference_summary='S.', split='test')
"""

from typing import Any
from typing import Mapping

from ..base import BaseAdapter
from ..base import DatasetRecord


class JsonlAdapter(BaseAdapter):
    r"""Native JSONL schema adapter."""

    @classmethod
    def parse_object(cls, obj: Mapping[str, Any], line_no: int) -> DatasetRecord:

        for key in ('id', 'document', 'aspect', 'summary'):
            if key not in obj:
                raise ValueError(f'missing {key}')

        return DatasetRecord(
            id=cls.get_text(obj, 'id'),
            document=cls.get_text(obj, 'document'),
            aspect=cls.get_text(obj, 'aspect'),
            reference_summary=cls.get_text(obj, 'summary'),
            split=cls.get_text(obj, 'split') or 'test',
        )
