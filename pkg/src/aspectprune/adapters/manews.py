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

r"""MA-News style exports.

Objects carry the news ``article``, the ``aspect`` (a news category
label), and the ``summary``; ``id`` is optional and defaults to the line
number.
"""

from typing import Any
from typing import Mapping

from ..base import BaseAdapter
from ..base import DatasetRecord


class ManewsAdapter(BaseAdapter):
    r"""MA-News export adapter."""

    @classmethod
    def parse_object(cls, obj: Mapping[str, Any], line_no: int) -> DatasetRecord:

        return DatasetRecord(
            id=cls.get_text(obj, 'id') or f'manews-{line_no}',
            document=cls.get_text(obj, 'article', 'document'),
            aspect=cls.get_text(obj, 'aspect'),
            reference_summary=cls.get_text(obj, 'summary'),
            split=cls.get_text(obj, 'split') or 'test',
        )
