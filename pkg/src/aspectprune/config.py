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

r"""Experiment configuration.

The configuration is a tree of frozen dataclasses, rooted at
:class:`ExperimentConfig`.
It can be loaded from a YAML mapping, with one section per subtree:

.. code-block:: yaml

    method: pruned
    seed: 0
    workers: 4
    dataset:
      path: data/test.jsonl
      adapter: jsonl
    segmentation:
      target_words: 256
    prune:
      per_chunk_budget_w: 128
    embedder:
      backend: offline
    generator:
      backend: chat
      base_url: http://localhost:8000/v1
      model: mixtral-8x7b

Values are taken from the dataclass defaults, then from the file, then from
the command line overrides (see :func:`apply_overrides`).
"""

import dataclasses
import logging
from dataclasses import dataclass
from dataclasses import field
from typing import Any
from typing import Dict
from typing import Mapping
from typing import Optional

import yaml

from .base import AnyPath
from .base import ConfigError
from .promptgen import DEFAULT_CHARS_PER_TOKEN
from .promptgen import DEFAULT_SYSTEM_INSTRUCTION
from .promptgen import DEFAULT_TOKEN_BUDGET
from .pruner import DEFAULT_ASPECT_TEMPLATE
from .pruner import PruneConfig
from .segmenter import SegmentationConfig

_log = logging.getLogger(__name__)

METHODS = ('original', 'pruned', 'truncated_icl', 'pruned_icl')
r"""Pipeline methods.

* ``original`` -- full document, zero-shot.
* ``pruned`` -- pruned document, zero-shot.
* ``truncated_icl`` -- one-shot, document truncated from its end.
* ``pruned_icl`` -- one-shot, pruned document.
"""

ICL_METHODS = frozenset({'truncated_icl', 'pruned_icl'})
PRUNING_METHODS = frozenset({'pruned', 'pruned_icl'})

PRUNE_MODES = ('chunk', 'sentence')
r"""Pruning granularity: per chunk, or sentence level over the whole document."""


@dataclass(frozen=True)
class DatasetConfig:
    r"""Dataset settings."""

    path: Optional[str] = None
    adapter: str = 'jsonl'
    max_records: int = 2000
    max_record_words: int = 1024
    split: str = 'test'

    def __post_init__(self):
        if self.max_records < 1:
            raise ConfigError('non-positive max records')
        if self.max_record_words < 1:
            raise ConfigError('non-positive max record words')


@dataclass(frozen=True)
class EmbedderConfig:
    r"""Embedding backend settings."""

    backend: str = 'offline'
    dim: Optional[int] = None
    seed: int = 0
    base_url: Optional[str] = None
    model: Optional[str] = None
    batch_size: int = 64
    max_retries: int = 3
    max_in_flight: int = 4
    timeout: float = 60.0
    cache_path: Optional[str] = None
    aspect_template: str = DEFAULT_ASPECT_TEMPLATE

    def __post_init__(self):
        if self.backend == 'remote' and not (self.base_url and self.model):
            raise ConfigError('remote embedder requires base_url and model')
        if '{aspect}' not in self.aspect_template:
            raise ConfigError('aspect template without {aspect}')


@dataclass(frozen=True)
class PromptConfig:
    r"""Prompt assembly settings."""

    template_path: Optional[str] = None
    system_instruction: str = DEFAULT_SYSTEM_INSTRUCTION
    token_budget: int = DEFAULT_TOKEN_BUDGET
    chars_per_token: float = DEFAULT_CHARS_PER_TOKEN
    estimator: str = 'chars'
    icl_policy: str = 'shortest'
    pool_size: int = 20
    train_path: Optional[str] = None

    def __post_init__(self):
        if self.token_budget < 1:
            raise ConfigError('non-positive token budget')
        if self.estimator not in ('chars', 'words'):
            raise ConfigError(f'unknown estimator: {self.estimator!r}')
        if self.icl_policy not in ('shortest', 'aspect_matched', 'random'):
            raise ConfigError(f'unknown example policy: {self.icl_policy!r}')
        if self.pool_size < 1:
            raise ConfigError('non-positive pool size')


@dataclass(frozen=True)
class GeneratorConfig:
    r"""Generation backend settings."""

    backend: str = 'lead'
    base_url: Optional[str] = None
    model: Optional[str] = None
    temperature: float = 0.0
    max_tokens: int = 256
    max_retries: int = 3
    max_in_flight: int = 2
    timeout: float = 120.0

    def __post_init__(self):
        if self.backend == 'chat' and not (self.base_url and self.model):
            raise ConfigError('chat generator requires base_url and model')
        if self.max_tokens < 1:
            raise ConfigError('non-positive max tokens')


@dataclass(frozen=True)
class ExperimentConfig:
    r"""Whole experiment settings."""

    method: str = 'pruned'
    prune_mode: str = 'chunk'
    seed: int = 0
    workers: int = 4
    failure_budget: float = 0.5
    output_dir: Optional[str] = None
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    segmentation: SegmentationConfig = field(default_factory=SegmentationConfig)
    prune: PruneConfig = field(default_factory=PruneConfig)
    embedder: EmbedderConfig = field(default_factory=EmbedderConfig)
    prompt: PromptConfig = field(default_factory=PromptConfig)
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f'unknown method: {self.method!r}')
        if self.prune_mode not in PRUNE_MODES:
            raise ConfigError(f'unknown prune mode: {self.prune_mode!r}')
        if self.workers < 1:
            raise ConfigError('non-positive workers')
        if not 0.0 < self.failure_budget <= 1.0:
            raise ConfigError('failure budget out of range')


SECTIONS: Mapping[str, type] = {
    'dataset': DatasetConfig,
    'segmentation': SegmentationConfig,
    'prune': PruneConfig,
    'embedder': EmbedderConfig,
    'prompt': PromptConfig,
    'generator': GeneratorConfig,
}
r"""Configuration sections, by key."""


def _build(cls: type, values: Mapping[str, Any], where: str) -> Any:

    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(values) - names)
    if unknown:
        raise ConfigError(f'unknown {where} keys: {", ".join(unknown)}')

    values = dict(values)
    if 'abbreviations' in values:
        values['abbreviations'] = tuple(values['abbreviations'])
    try:
        return cls(**values)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f'invalid {where}: {exc}') from None


def config_from_mapping(data: Optional[Mapping[str, Any]]) -> ExperimentConfig:
    r"""Builds the configuration from a nested mapping.

    Raises:
        :class:`ConfigError`: Unknown keys, or invalid values.

    Examples:
        >>> cfg = config_from_mapping({'method': 'original', 'prune': {'per_chunk_budget_w': 64}})
        >>> cfg.method, cfg.prune.per_chunk_budget_w
        ('original', 64)
    """
    if data is None:
        data = {}
    if not isinstance(data, Mapping):
        raise ConfigError('configuration must be a mapping')

    top: Dict[str, Any] = {}
    for key, value in data.items():
        if key in SECTIONS:
            if value is None:
                value = {}
            if not isinstance(value, Mapping):
                raise ConfigError(f'section {key!r} must be a mapping')
            top[key] = _build(SECTIONS[key], value, key)
        else:
            top[key] = value

    return _build(ExperimentConfig, top, 'top-level')


def load_config(path: AnyPath) -> ExperimentConfig:
    r"""Loads the configuration from a YAML file.

    Raises:
        :obj:`FileNotFoundError`: Missing file.

        :class:`ConfigError`: Invalid content.
    """
    with open(path, 'rt', encoding='utf-8') as stream:
        try:
            data = yaml.safe_load(stream)
        except yaml.YAMLError as exc:
            raise ConfigError(f'invalid YAML: {exc}') from None

    _log.debug('loaded configuration from %s', path)
    return config_from_mapping(data)


def apply_overrides(cfg: ExperimentConfig, overrides: Mapping[str, Any]) -> ExperimentConfig:
    r"""Applies overrides on top of a configuration.

    Keys are either top-level field names, or ``section.field``; ``None``
    values are ignored.

    Raises:
        :class:`ConfigError`: Unknown keys, or invalid values.

    Examples:
        >>> cfg = apply_overrides(ExperimentConfig(), {'prune.per_chunk_budget_w': 32, 'seed': None})
        >>> cfg.prune.per_chunk_budget_w, cfg.seed
        (32, 0)
    """
    top: Dict[str, Any] = {}
    nested: Dict[str, Dict[str, Any]] = {}

    for key, value in overrides.items():
        if value is None:
            continue
        section, dot, name = key.partition('.')
        if dot:
            if section not in SECTIONS:
                raise ConfigError(f'unknown section: {section!r}')
            nested.setdefault(section, {})[name] = value
        else:
            top[key] = value

    for section, values in nested.items():
        current = dataclasses.asdict(getattr(cfg, section))
        unknown = sorted(set(values) - set(current))
        if unknown:
            raise ConfigError(f'unknown {section} keys: {", ".join(unknown)}')
        current.update(values)
        top[section] = _build(SECTIONS[section], current, section)

    unknown = sorted(set(top) - {f.name for f in dataclasses.fields(cfg)})
    if unknown:
        raise ConfigError(f'unknown top-level keys: {", ".join(unknown)}')
    try:
        return dataclasses.replace(cfg, **top)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f'invalid configuration: {exc}') from None


def config_to_dict(cfg: ExperimentConfig) -> Dict[str, Any]:
    r"""Plain nested dictionary of a configuration, for report snapshots."""

    data = dataclasses.asdict(cfg)
    data['segmentation']['abbreviations'] = list(data['segmentation']['abbreviations'])
    return data
