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

r"""Generic utility functions."""

import hashlib
import json
import re
from typing import IO
from typing import Any
from typing import Iterable
from typing import Iterator
from typing import Mapping
from typing import Optional
from typing import Sequence
from typing import TypeVar
from typing import Union

T = TypeVar('T')

SUFFIX_SCALE: Mapping[str, int] = {
    'k': 10**3,
    'm': 10**6,
    'g': 10**9,

    'ki': 2**10,
    'mi': 2**20,
    'gi': 2**30,
}
r"""Integer suffix to scale factor."""

INT_REGEX = re.compile(r'^\s*(?P<sign>[+-]?)\s*'
                       r'(?P<value>[0-9][0-9_]*)'
                       r'\s*(?P<scale>(k|m|g|ki|mi|gi)?)\s*$')


def chop(
    vector: Sequence[T],
    window: int,
) -> Iterator[Sequence[T]]:
    r"""Chops a sequence.

    Iterates through the sequence grouping its items into windows.
    Used to batch remote requests.

    Args:
        vector (sequence):
            Sequence to chop.

        window (int):
            Window length.

    Yields:
        sequence: `vector` slices of up to `window` elements.

    Examples:
        >>> list(chop('ABCDEFG', 2))
        ['AB', 'CD', 'EF', 'G']

        >>> list(chop([1, 2, 3], 5))
        [[1, 2, 3]]
    """
    window = int(window)
    if window <= 0:
        raise ValueError('non-positive window')

    for i in range(0, len(vector), window):
        yield vector[i:(i + window)]


def parse_int(
    value: Union[str, Any],
) -> Optional[int]:
    r"""Parses an integer.

    Args:
        value:
            A generic object to convert to integer.
            In case `value` is a :obj:`str` (case-insensitive), it holds
            decimal digits, optionally grouped by underscores.
            A suffix applies a scale factor as per
            :data:`SUFFIX_SCALE`, handy for word budgets like ``4k``.
            A ``None`` value evaluates as ``None``.
            Any other object class will call the standard :func:`int`.

    Returns:
        int: None if `value` is ``None``, its integer conversion otherwise.

    Examples:
        >>> parse_int('4k')
        4000

        >>> parse_int('1Ki')
        1024

        >>> parse_int(None) is None
        True

        >>> parse_int(256.7)
        256
    """
    if value is None:
        return None

    elif isinstance(value, str):
        text = value.lower()
        m = INT_REGEX.match(text)
        if not m:
            raise ValueError(f'invalid syntax: {value!r}')
        g = m.groupdict()
        i = int(g['value'], 10)
        i *= SUFFIX_SCALE.get(g['scale'] or '', 1)

        if g['sign'] == '-':
            i = -i

        return i

    else:
        return int(value)


def stable_hash(*parts: str) -> str:
    r"""Content hash of text parts.

    Args:
        parts (str):
            Text parts, hashed in order with an unambiguous separator.

    Returns:
        str: SHA-256 hexadecimal digest.

    Examples:
        >>> stable_hash('offline', 'abc') == stable_hash('offline', 'abc')
        True
        >>> stable_hash('ab', 'c') == stable_hash('a', 'bc')
        False
    """
    h = hashlib.sha256()
    for part in parts:
        data = part.encode('utf-8')
        h.update(len(data).to_bytes(8, 'big'))
        h.update(data)
    return h.hexdigest()


def dump_json_line(obj: Any) -> str:
    r"""Serializes a JSON line, with stable key order."""

    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(',', ':'))


def write_jsonl(stream: IO, items: Iterable[Any]) -> int:
    r"""Writes JSON lines onto a text stream.

    Returns:
        int: Number of lines written.
    """
    count = 0
    for item in items:
        stream.write(dump_json_line(item))
        stream.write('\n')
        count += 1
    return count
