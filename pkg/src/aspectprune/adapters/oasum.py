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

r"""OASum style exports.

Objects carry the ``document`` as a list of sentences, the ``aspect``, and
the ``summary`` as a string or a list of sentences; ``title`` plus line
number make the identifier when ``id`` is missing.

Examples:
    >>> from aspectprune.adapters.oasum import OasumAdapter
    >>> obj = {'title': 'Rome', 'document': ['A.', 'B.'], 'aspect': 'history',
    ...        'summary': ['B.']}
    >>> OasumAdapter.parse_object(obj, 7).id
    'Rome-7'
"""

from typing import Any
from typing import Mapping

from ..base import BaseAdapter
from ..base import DatasetRecord


class OasumAdapter(BaseAdapter):
    r"""OASum export adapter."""

    @classmethod
    def parse_object(cls, obj: Mapping[str, Any], line_no: int) -> DatasetRecord:

        record_id = cls.get_text(obj, 'id')
        if not record_id:
            title = cls.get_text(obj, 'title')
            record_id = f'{title}-{line_no}' if title else f'oasum-{line_no}'

        return DatasetRecord(
            id=record_id,
            document=cls.get_text(obj, 'document'),
            aspect=cls.get_text(obj, 'aspect'),
            reference_summary=cls.get_text(obj, 'summary', 'aspect_summary'),
            split=cls.get_text(obj, 'split') or 'test',
        )
