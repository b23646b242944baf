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

r"""Dataset ingestion, experiment runs, ablations, and reports.

A run processes each test record with one of the methods of
:data:`aspectprune.config.METHODS`:

#. the document is pruned around the record aspect (``pruned`` methods);
#. an in-context example is chosen from the training records (``_icl``
   methods);
#. the prompt is assembled within the token budget, and a summary is
   generated;
#. the summary is scored against the reference.

Records are processed by a thread pool; a failing record only marks its
own row as failed, unless too many records fail, in which case the run
is aborted.

Reports are written as JSON lines (one row per record, sorted by
identifier) plus a summary JSON file; ablations also write CSV series.
"""

import concurrent.futures
import csv
import dataclasses
import json
import logging
import os
import random
import threading
import time
from collections import defaultdict
from dataclasses import dataclass
from dataclasses import field
from typing import Any
from typing import Dict
from typing import Iterable
from typing import List
from typing import Optional
from typing import Sequence
from typing import Set
from typing import Tuple

from .base import ADAPTERS
from .base import EMBEDDERS
from .base import GENERATORS
from .base import AdapterUnknown
from .base import AnyPath
from .base import BudgetUnreachable
from .base import ConfigError
from .base import DatasetRecord
from .base import EmptyAfterFilter
from .base import EmptyTrainingSet
from .base import FailureBudgetExceeded
from .base import LengthMismatch
from .base import RemoteError
from .config import ICL_METHODS
from .config import PRUNING_METHODS
from .config import EmbedderConfig
from .config import ExperimentConfig
from .config import GeneratorConfig
from .config import config_to_dict
from .embedder import CachedEmbedder
from .embedder import EmbeddingCache
from .metrics import MetricReport
from .metrics import mean_report
from .metrics import score_pair
from .promptgen import BaseGenerator
from .promptgen import IclExample
from .promptgen import PromptSpec
from .promptgen import PromptTemplate
from .promptgen import TokenEstimator
from .promptgen import build_prompt
from .promptgen import generate_summary
from .promptgen import select_icl_example
from .pruner import Encoder
from .pruner import PruneConfig
from .pruner import PrunedDocument
from .pruner import ScoredSentence
from .pruner import make_query
from .pruner import prune_document
from .pruner import prune_sentence_level
from .pruner import recursive_prune
from .pruner import select_random_w
from .segmenter import Chunk
from .segmenter import SegmentationConfig
from .segmenter import Sentence
from .segmenter import count_words
from .segmenter import segment
from .utils import write_jsonl

_log = logging.getLogger(__name__)

SERIES_METRICS = ('rouge1_f', 'rouge2_f', 'rougeL_f', 'meteor')
r"""Corpus metrics reported by ablation series."""


@dataclass
class LoadStats:
    r"""Dataset loading counters.

    ``loaded == kept + skipped_malformed + filtered_long`` always holds.
    """

    loaded: int = 0
    kept: int = 0
    skipped_malformed: int = 0
    filtered_long: int = 0
    malformed_lines: List[int] = field(default_factory=list)


def read_dataset(
    path: AnyPath,
    adapter: str = 'jsonl',
    max_records: int = 2000,
    max_record_words: int = 1024,
) -> Tuple[List[DatasetRecord], LoadStats]:
    r"""Reads a JSONL dataset export.

    The first `max_records` non-blank lines are read; malformed lines and
    duplicate identifiers are skipped with a warning, then records whose
    document has `max_record_words` words or more are filtered out.

    Args:
        path (str):
            JSONL file path.

        adapter (str):
            Key of :data:`aspectprune.base.ADAPTERS`.

        max_records (int):
            Maximum lines read.

        max_record_words (int):
            Document length limit, exclusive.

    Returns:
        tuple: Records and :class:`LoadStats`.

    Raises:
        :obj:`FileNotFoundError`: Missing file.

        :class:`AdapterUnknown`: Adapter not registered.
    """
    try:
        adapter_type = ADAPTERS[adapter]
    except KeyError:
        raise AdapterUnknown(f'unknown adapter: {adapter!r}') from None

    stats = LoadStats()
    parsed: List[DatasetRecord] = []
    seen: Set[str] = set()

    with open(path, 'rt', encoding='utf-8') as stream:
        for line_no, line in enumerate(stream, 1):
            if not line.strip():
                continue
            if stats.loaded >= max_records:
                break
            stats.loaded += 1

            try:
                record = adapter_type.parse_line(line, line_no)
                if record.id in seen:
                    raise ValueError(f'duplicate id: {record.id!r}')
            except ValueError as exc:
                _log.warning('%s:%d: skipped malformed record (%s)', path, line_no, exc)
                stats.skipped_malformed += 1
                stats.malformed_lines.append(line_no)
                continue

            seen.add(record.id)
            parsed.append(record)

    records = []
    for record in parsed:
        if count_words(record.document) < max_record_words:
            records.append(record)
        else:
            stats.filtered_long += 1

    stats.kept = len(records)
    _log.info('%s: %d records kept of %d loaded (%d malformed, %d too long)',
              path, stats.kept, stats.loaded, stats.skipped_malformed, stats.filtered_long)
    return records, stats


def load_dataset(
    path: AnyPath,
    adapter: str = 'jsonl',
    max_records: int = 2000,
    max_record_words: int = 1024,
) -> List[DatasetRecord]:
    r"""Loads a JSONL dataset export.

    See :func:`read_dataset`.

    Raises:
        :obj:`FileNotFoundError`: Missing file.

        :class:`AdapterUnknown`: Adapter not registered.

        :class:`EmptyAfterFilter`: No records left.
    """
    records, _ = read_dataset(path, adapter, max_records, max_record_words)
    if not records:
        raise EmptyAfterFilter(f'no records left: {path}')
    return records


# ----------------------------------------------------------------------------

def make_encoder(
    cfg: EmbedderConfig,
    transport: Optional[Any] = None,
) -> CachedEmbedder:
    r"""Creates the embedding backend of a configuration, with its cache."""

    try:
        backend_type = EMBEDDERS[cfg.backend]
    except KeyError:
        raise ConfigError(f'unknown embedder: {cfg.backend!r}') from None

    if cfg.backend == 'offline':
        backend = backend_type(dim=cfg.dim or 256, seed=cfg.seed, batch_size=cfg.batch_size)
    else:
        backend = backend_type(cfg.base_url, cfg.model, dim=cfg.dim,
                               batch_size=cfg.batch_size, max_retries=cfg.max_retries,
                               max_in_flight=cfg.max_in_flight, timeout=cfg.timeout,
                               transport=transport)
    return CachedEmbedder(backend, EmbeddingCache(cfg.cache_path))


def make_generator(
    cfg: GeneratorConfig,
    transport: Optional[Any] = None,
) -> BaseGenerator:
    r"""Creates the generation backend of a configuration."""

    try:
        generator_type = GENERATORS[cfg.backend]
    except KeyError:
        raise ConfigError(f'unknown generator: {cfg.backend!r}') from None

    kwargs = dataclasses.asdict(cfg)
    del kwargs['backend']
    if cfg.backend == 'chat':
        kwargs['transport'] = transport
    return generator_type(**kwargs)


def prune_text(
    document: str,
    aspect: str,
    segmentation: SegmentationConfig,
    prune_cfg: PruneConfig,
    encoder: Encoder,
    mode: str = 'chunk',
    aspect_template: str = '{aspect}',
) -> Tuple[PrunedDocument, List[Sentence], List[Chunk]]:
    r"""Prunes a document around an aspect.

    With a global word target, :func:`aspectprune.pruner.recursive_prune` is
    used; when the target is unreachable, the best effort is kept.

    Returns:
        tuple: Pruned document, source sentences, and source chunks.
    """
    sentences, chunks = segment(document, segmentation)
    query = make_query(aspect, encoder, aspect_template)

    if mode == 'sentence':
        pruned = prune_sentence_level(sentences, chunks, query, prune_cfg, encoder)
    elif prune_cfg.global_target_words is not None:
        try:
            pruned = recursive_prune(sentences, chunks, query, prune_cfg, encoder)
        except BudgetUnreachable as exc:
            _log.info('%s', exc)
            pruned = exc.pruned
    else:
        pruned = prune_document(sentences, chunks, query, prune_cfg, encoder)

    return pruned, sentences, chunks


# ----------------------------------------------------------------------------

@dataclass
class RecordResult:
    r"""Outcome of one record."""

    id: str
    aspect: str
    summary: str = ''
    metrics: Optional[MetricReport] = None
    input_words: int = 0
    prompt_tokens_est: int = 0
    truncated: bool = False
    bypassed: bool = False
    rounds: int = 0
    example_id: Optional[str] = None
    attempts: int = 0
    error: Optional[str] = None
    latency_ms: int = 0

    @property
    def failed(self) -> bool:
        return self.error is not None

    def to_dict(self, timing: bool = False) -> Dict[str, Any]:

        data = {
            'id': self.id,
            'aspect': self.aspect,
            'summary': self.summary,
            'metrics': None if self.metrics is None else self.metrics.to_dict(),
            'input_words': self.input_words,
            'prompt_tokens_est': self.prompt_tokens_est,
            'truncated': self.truncated,
            'bypassed': self.bypassed,
            'rounds': self.rounds,
            'example_id': self.example_id,
            'attempts': self.attempts,
            'error': self.error,
        }
        if timing:
            data['latency_ms'] = self.latency_ms
        return data


@dataclass
class RunReport:
    r"""Outcome of a run.

    Corpus means are arithmetic means over the successful rows.
    """

    name: str
    method: str
    rows: List[RecordResult]
    means: Optional[MetricReport]
    aspect_means: Dict[str, MetricReport]
    mean_input_words: float
    counts: Dict[str, int]
    failed_ids: List[str]
    config: Dict[str, Any]
    elapsed_s: float = 0.0
    cache_hits: int = 0
    cache_misses: int = 0

    def summary_dict(self, timing: bool = True) -> Dict[str, Any]:
        r"""Report summary, without rows."""

        data = {
            'name': self.name,
            'method': self.method,
            'means': None if self.means is None else self.means.to_dict(),
            'aspect_means': {key: value.to_dict() for key, value in sorted(self.aspect_means.items())},
            'mean_input_words': self.mean_input_words,
            'counts': dict(self.counts),
            'failed_ids': list(self.failed_ids),
            'config': self.config,
        }
        if timing:
            latencies = [row.latency_ms for row in self.rows if not row.failed]
            data['timing'] = {
                'elapsed_s': self.elapsed_s,
                'mean_latency_ms': (sum(latencies) / len(latencies)) if latencies else 0.0,
                'cache_hits': self.cache_hits,
                'cache_misses': self.cache_misses,
            }
        return data


def write_report(report: RunReport, output_dir: AnyPath) -> Tuple[str, str]:
    r"""Writes a run report.

    Rows go to ``<name>.jsonl``, the summary to ``<name>.summary.json``;
    timing figures only appear in the summary, under ``timing``.

    Returns:
        tuple of str: Rows and summary file paths.
    """
    os.makedirs(output_dir, exist_ok=True)
    rows_path = os.path.join(output_dir, f'{report.name}.jsonl')
    summary_path = os.path.join(output_dir, f'{report.name}.summary.json')

    with open(rows_path, 'wt', encoding='utf-8', newline='\n') as stream:
        write_jsonl(stream, (row.to_dict() for row in report.rows))

    with open(summary_path, 'wt', encoding='utf-8', newline='\n') as stream:
        json.dump(report.summary_dict(), stream, indent=2, sort_keys=True)
        stream.write('\n')

    _log.info('report written: %s, %s', rows_path, summary_path)
    return rows_path, summary_path


def _group_means(rows: Iterable[RecordResult]) -> Dict[str, MetricReport]:

    groups: Dict[str, List[MetricReport]] = defaultdict(list)
    for row in rows:
        if row.metrics is not None:
            groups[row.aspect].append(row.metrics)
    return {aspect: mean_report(reports) for aspect, reports in groups.items()}


# ----------------------------------------------------------------------------

class Pipeline:
    r"""Record processor of a run.

    Args:
        cfg (:class:`ExperimentConfig`):
            Experiment settings.

        encoder (callable):
            Text embedder.

        generator (:class:`BaseGenerator`):
            Generation backend.

        train_records (list of :class:`DatasetRecord`):
            In-context example candidates.

        example (:class:`IclExample`):
            Fixed in-context example, overriding the selection policy.
    """

    def __init__(
        self,
        cfg: ExperimentConfig,
        encoder: Encoder,
        generator: BaseGenerator,
        train_records: Sequence[DatasetRecord] = (),
        example: Optional[IclExample] = None,
    ):
        self.cfg = cfg
        self.encoder = encoder
        self.generator = generator
        self.train_records = list(train_records)
        self.template = PromptTemplate.load(cfg.prompt.template_path)
        self.estimator = TokenEstimator(cfg.prompt.estimator, cfg.prompt.chars_per_token)
        self._example = example
        self._examples: Dict[str, IclExample] = {}
        self._examples_lock = threading.Lock()

        if cfg.method in ICL_METHODS and example is None and not self.train_records:
            raise EmptyTrainingSet('empty training set')

    def example_for(self, aspect: str) -> Optional[IclExample]:
        r"""In-context example for an aspect, if the method uses one."""

        if self.cfg.method not in ICL_METHODS:
            return None
        if self._example is not None:
            return self._example

        prompt = self.cfg.prompt
        key = aspect if prompt.icl_policy == 'aspect_matched' else ''
        with self._examples_lock:
            if key not in self._examples:
                self._examples[key] = select_icl_example(
                    self.train_records, prompt.icl_policy, aspect=aspect,
                    pool_size=prompt.pool_size, seed=self.cfg.seed)
            return self._examples[key]

    def prepare(self, document: str, aspect: str) -> Tuple[PromptSpec, Optional[PrunedDocument]]:
        r"""Builds the prompt of a document.

        Returns:
            tuple: Prompt, and pruned document for pruning methods.
        """
        cfg = self.cfg
        pruned = None
        if cfg.method in PRUNING_METHODS:
            pruned, _, _ = prune_text(document, aspect, cfg.segmentation, cfg.prune, self.encoder,
                                      cfg.prune_mode, cfg.embedder.aspect_template)
            document = pruned.text

        spec = build_prompt(cfg.prompt.system_instruction, self.example_for(aspect), document,
                            aspect, cfg.prompt.token_budget, self.template, self.estimator)
        return spec, pruned

    def process(self, record: DatasetRecord) -> RecordResult:
        r"""Processes a record, capturing its failure if any."""

        result = RecordResult(record.id, record.aspect)
        try:
            spec, pruned = self.prepare(record.document, record.aspect)
            result.input_words = count_words(spec.document_text)
            result.prompt_tokens_est = spec.prompt_tokens_est
            result.truncated = spec.truncated
            result.example_id = spec.icl_example.source_id if spec.icl_example else None
            if pruned is not None:
                result.bypassed = pruned.bypassed
                result.rounds = pruned.rounds

            generation = generate_summary(spec, self.generator)
            result.summary = generation.summary
            result.attempts = generation.attempts
            result.latency_ms = generation.latency_ms
            result.metrics = score_pair(generation.summary, record.reference_summary)

        except (RemoteError, ValueError) as exc:
            result.error = f'{type(exc).__name__}: {exc}'
            result.attempts = getattr(exc, 'attempts', result.attempts)
            _log.error('record %s failed: %s', record.id, result.error)

        return result


def _load_records(cfg: ExperimentConfig) -> Tuple[List[DatasetRecord], List[DatasetRecord], LoadStats]:

    dataset = cfg.dataset
    if not dataset.path:
        raise ConfigError('dataset path required')

    records, stats = read_dataset(dataset.path, dataset.adapter,
                                  dataset.max_records, dataset.max_record_words)
    tests = [record for record in records if record.split == dataset.split]
    if not tests:
        raise EmptyAfterFilter(f'no {dataset.split} records left: {dataset.path}')

    if cfg.prompt.train_path:
        train, _ = read_dataset(cfg.prompt.train_path, dataset.adapter,
                                dataset.max_records, dataset.max_record_words)
    else:
        train = [record for record in records if record.split == 'train']
    return tests, train, stats


def run_pipeline(
    cfg: ExperimentConfig,
    records: Optional[Sequence[DatasetRecord]] = None,
    train_records: Optional[Sequence[DatasetRecord]] = None,
    encoder: Optional[Encoder] = None,
    generator: Optional[BaseGenerator] = None,
    example: Optional[IclExample] = None,
    name: Optional[str] = None,
) -> RunReport:
    r"""Runs a method over the test records.

    Records and backends are taken from the configuration, unless given.
    The report is written into :attr:`ExperimentConfig.output_dir` if set.

    Args:
        cfg (:class:`ExperimentConfig`):
            Experiment settings.

        records (list of :class:`DatasetRecord`):
            Test records; loaded from :attr:`DatasetConfig.path` if ``None``.

        train_records (list of :class:`DatasetRecord`):
            In-context example candidates; loaded along with the test
            records if ``None``.

        encoder (callable):
            Text embedder; created from the configuration if ``None``.

        generator (:class:`BaseGenerator`):
            Generation backend; created from the configuration if ``None``.

        example (:class:`IclExample`):
            Fixed in-context example.

        name (str):
            Report name; the method by default.

    Returns:
        :class:`RunReport`: Run report, rows sorted by record identifier.

    Raises:
        :class:`FailureBudgetExceeded`: Too many records failed; the
            partial report is attached.
    """
    start = time.perf_counter()

    if records is None:
        records, loaded_train, stats = _load_records(cfg)
        if train_records is None:
            train_records = loaded_train
        counts = dataclasses.asdict(stats)
        del counts['malformed_lines']
    else:
        records = list(records)
        counts = {'loaded': len(records), 'kept': len(records),
                  'skipped_malformed': 0, 'filtered_long': 0}
    if not records:
        raise EmptyAfterFilter('no records')

    own_encoder = encoder is None
    own_generator = generator is None
    if own_encoder:
        encoder = make_encoder(cfg.embedder)
    if own_generator:
        generator = make_generator(cfg.generator)

    try:
        pipeline = Pipeline(cfg, encoder, generator, train_records or (), example)
        rows, aborted = _run_records(pipeline, records, cfg.workers, cfg.failure_budget)
    finally:
        if own_generator:
            generator.close()
        if own_encoder:
            encoder.close()

    rows.sort(key=lambda row: row.id)
    succeeded = [row for row in rows if not row.failed]
    failed_ids = [row.id for row in rows if row.failed]
    counts['evaluated'] = len(succeeded)
    counts['failed'] = len(failed_ids)

    cache = getattr(encoder, 'cache', None)
    report = RunReport(
        name=name or cfg.method,
        method=cfg.method,
        rows=rows,
        means=mean_report([row.metrics for row in succeeded]) if succeeded else None,
        aspect_means=_group_means(succeeded),
        mean_input_words=(sum(row.input_words for row in succeeded) / len(succeeded)) if succeeded else 0.0,
        counts=counts,
        failed_ids=failed_ids,
        config=config_to_dict(cfg),
        elapsed_s=round(time.perf_counter() - start, 3),
        cache_hits=getattr(cache, 'hits', 0),
        cache_misses=getattr(cache, 'misses', 0),
    )
    if cache is not None:
        _log.info('embedding cache: %d hits, %d misses', report.cache_hits, report.cache_misses)

    _log.info('run %s: %d evaluated, %d failed, %.3f s',
              report.name, len(succeeded), len(failed_ids), report.elapsed_s)

    if aborted:
        raise FailureBudgetExceeded(f'failure budget exceeded: {len(failed_ids)} of {len(records)} records failed',
                                    report)

    if cfg.output_dir:
        write_report(report, cfg.output_dir)
    return report


def _run_records(
    pipeline: Pipeline,
    records: Sequence[DatasetRecord],
    workers: int,
    failure_budget: float,
) -> Tuple[List[RecordResult], bool]:

    limit = failure_budget * len(records)
    rows: List[RecordResult] = []
    failures = 0

    with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as executor:
        futures = [executor.submit(pipeline.process, record) for record in records]
        for future in concurrent.futures.as_completed(futures):
            row = future.result()
            rows.append(row)
            if row.failed:
                failures += 1
                if failures > limit:
                    for other in futures:
                        other.cancel()
                    return rows, True

    return rows, False


# ----------------------------------------------------------------------------

def evaluate_run(
    generations: Sequence[str],
    references: Sequence[str],
) -> Tuple[List[MetricReport], MetricReport]:
    r"""Scores generated summaries against their references.

    Returns:
        tuple: Per-pair reports, and their arithmetic mean.

    Raises:
        :class:`LengthMismatch`: Lists of different lengths, or empty.

    Examples:
        >>> _, means = evaluate_run(['the cat sat'], ['the cat ran'])
        >>> round(means.rouge1_f, 6)
        0.666667
    """
    if len(generations) != len(references):
        raise LengthMismatch(f'length mismatch: {len(generations)} != {len(references)}')
    if not generations:
        raise LengthMismatch('empty input')

    reports = [score_pair(candidate, reference)
               for candidate, reference in zip(generations, references)]
    return reports, mean_report(reports)


# ----------------------------------------------------------------------------

def normalize_space(text: str) -> str:

    return ' '.join(text.split())


def reference_sentences(sentences: Sequence[Sentence], reference: str) -> Set[int]:
    r"""Indices of the sentences quoted verbatim by the reference summary.

    Examples:
        >>> from aspectprune.segmenter import split_sentences
        >>> sentences = split_sentences('One here. Two there. Three.')
        >>> sorted(reference_sentences(sentences, 'Three. One  here.'))
        [0, 2]
    """
    reference = normalize_space(reference)
    return {sentence.doc_index for sentence in sentences
            if normalize_space(sentence.text) in reference}


def colocation_counts(chunks: Sequence[Chunk], marked: Set[int]) -> Tuple[int, int]:
    r"""Counts the marked sentences sharing a chunk with another marked one.

    Returns:
        tuple of int: Co-located count, and marked count.

    Examples:
        >>> from aspectprune.segmenter import Sentence
        >>> s = [Sentence(f's{i}', i, 1) for i in range(4)]
        >>> chunks = [Chunk(0, tuple(s[:2]), 2), Chunk(1, tuple(s[2:]), 2)]
        >>> colocation_counts(chunks, {0, 1, 3})
        (2, 3)
    """
    colocated = 0
    total = 0
    for chunk in chunks:
        count = sum(1 for sentence in chunk.sentences if sentence.doc_index in marked)
        total += count
        if count > 1:
            colocated += count
    return colocated, total


def colocation_fraction(
    records: Sequence[DatasetRecord],
    segmentation: SegmentationConfig,
) -> float:
    r"""Fraction of reference sentences sharing a chunk with another one.

    Reference sentences are found by :func:`reference_sentences`; the
    fraction is pooled over all the records, 0 without reference sentences.
    """
    colocated = 0
    total = 0
    for record in records:
        sentences, chunks = segment(record.document, segmentation)
        marked = reference_sentences(sentences, record.reference_summary)
        pair = colocation_counts(chunks, marked)
        colocated += pair[0]
        total += pair[1]
    return (colocated / total) if total else 0.0


@dataclass
class AblationReport:
    r"""Comparative report of several runs."""

    kind: str
    columns: Tuple[str, ...]
    rows: List[Dict[str, Any]]
    reports: List[RunReport]

    def write_csv(self, path: AnyPath) -> None:
        r"""Writes the rows as a CSV series."""

        directory = os.path.dirname(os.fspath(path))
        if directory:
            os.makedirs(directory, exist_ok=True)
        with open(path, 'wt', encoding='utf-8', newline='') as stream:
            writer = csv.DictWriter(stream, fieldnames=list(self.columns), lineterminator='\n')
            writer.writeheader()
            for row in self.rows:
                writer.writerow(row)


def _metric_columns(means: Optional[MetricReport]) -> Dict[str, float]:

    if means is None:
        return {name: 0.0 for name in SERIES_METRICS}
    return {name: getattr(means, name) for name in SERIES_METRICS}


def _resolve_inputs(
    cfg: ExperimentConfig,
    records: Optional[Sequence[DatasetRecord]],
    train_records: Optional[Sequence[DatasetRecord]],
) -> Tuple[List[DatasetRecord], List[DatasetRecord]]:

    if records is None:
        loaded, loaded_train, _ = _load_records(cfg)
        records = loaded
        if train_records is None:
            train_records = loaded_train
    return list(records), list(train_records or ())


def run_ablation_chunk_size(
    cfg: ExperimentConfig,
    sizes: Sequence[int],
    records: Optional[Sequence[DatasetRecord]] = None,
    train_records: Optional[Sequence[DatasetRecord]] = None,
    encoder: Optional[Encoder] = None,
    generator: Optional[BaseGenerator] = None,
) -> AblationReport:
    r"""Runs the same experiment once per chunk size.

    Each row holds the chunk size, the corpus metric means, the mean input
    words, and the :func:`colocation_fraction` of the reference sentences.

    Raises:
        :class:`ConfigError`: Fewer than two sizes, or non-positive sizes.
    """
    if len(sizes) < 2:
        raise ConfigError('at least two chunk sizes required')
    if any(size < 1 for size in sizes):
        raise ConfigError('non-positive chunk size')

    records, train_records = _resolve_inputs(cfg, records, train_records)
    own_encoder = encoder is None
    if own_encoder:
        encoder = make_encoder(cfg.embedder)

    rows = []
    reports = []
    try:
        for size in sizes:
            segmentation = dataclasses.replace(cfg.segmentation, target_words=size)
            sized = dataclasses.replace(cfg, segmentation=segmentation)
            report = run_pipeline(sized, records, train_records, encoder, generator,
                                  name=f'{cfg.method}-chunk{size}')
            reports.append(report)

            row: Dict[str, Any] = {'chunk_words': size}
            row.update(_metric_columns(report.means))
            row['mean_input_words'] = report.mean_input_words
            row['colocation'] = colocation_fraction(records, segmentation)
            rows.append(row)
    finally:
        if own_encoder:
            encoder.close()

    columns = ('chunk_words',) + SERIES_METRICS + ('mean_input_words', 'colocation')
    return AblationReport('chunk_size', columns, rows, reports)


def run_ablation_sentence_retrieval(
    cfg: ExperimentConfig,
    records: Optional[Sequence[DatasetRecord]] = None,
    train_records: Optional[Sequence[DatasetRecord]] = None,
    encoder: Optional[Encoder] = None,
    generator: Optional[BaseGenerator] = None,
) -> AblationReport:
    r"""Compares chunk level and sentence level pruning.

    Non-pruning methods are replaced by ``pruned``.

    Returns:
        :class:`AblationReport`: Exactly two rows, ``chunk`` and ``sentence``.
    """
    method = cfg.method if cfg.method in PRUNING_METHODS else 'pruned'
    records, train_records = _resolve_inputs(cfg, records, train_records)
    own_encoder = encoder is None
    if own_encoder:
        encoder = make_encoder(cfg.embedder)

    rows = []
    reports = []
    try:
        for mode in ('chunk', 'sentence'):
            moded = dataclasses.replace(cfg, method=method, prune_mode=mode)
            report = run_pipeline(moded, records, train_records, encoder, generator, name=f'{method}-{mode}')
            reports.append(report)

            row: Dict[str, Any] = {'mode': mode}
            row.update(_metric_columns(report.means))
            row['mean_input_words'] = report.mean_input_words
            rows.append(row)
    finally:
        if own_encoder:
            encoder.close()

    columns = ('mode',) + SERIES_METRICS + ('mean_input_words',)
    return AblationReport('sentence_retrieval', columns, rows, reports)


def run_ablation_icl_aspect(
    cfg: ExperimentConfig,
    example_aspects: Optional[Sequence[str]] = None,
    records: Optional[Sequence[DatasetRecord]] = None,
    train_records: Optional[Sequence[DatasetRecord]] = None,
    encoder: Optional[Encoder] = None,
    generator: Optional[BaseGenerator] = None,
) -> AblationReport:
    r"""Crosses the aspect of the in-context example with the test aspects.

    For each example aspect, the shortest training record of that aspect is
    used as the example of every test record; non one-shot methods are
    replaced by ``pruned_icl``.

    Returns:
        :class:`AblationReport`: One row per example aspect and test aspect.

    Raises:
        :class:`EmptyTrainingSet`: No training records.
    """
    method = cfg.method if cfg.method in ICL_METHODS else 'pruned_icl'
    records, train_records = _resolve_inputs(cfg, records, train_records)
    if not train_records:
        raise EmptyTrainingSet('empty training set')
    if example_aspects is None:
        example_aspects = sorted({record.aspect for record in train_records})
    own_encoder = encoder is None
    if own_encoder:
        encoder = make_encoder(cfg.embedder)

    moded = dataclasses.replace(cfg, method=method)
    rows = []
    reports = []
    try:
        for example_aspect in example_aspects:
            example = select_icl_example(train_records, 'aspect_matched', aspect=example_aspect,
                                         pool_size=cfg.prompt.pool_size, seed=cfg.seed)
            report = run_pipeline(moded, records, train_records, encoder, generator,
                                  example=example, name=f'{method}-example-{example_aspect}')
            reports.append(report)

            for test_aspect, means in sorted(report.aspect_means.items()):
                row: Dict[str, Any] = {'example_aspect': example_aspect, 'test_aspect': test_aspect}
                row.update(_metric_columns(means))
                rows.append(row)
    finally:
        if own_encoder:
            encoder.close()

    columns = ('example_aspect', 'test_aspect') + SERIES_METRICS
    return AblationReport('icl_aspect', columns, rows, reports)


# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class RetentionResult:
    r"""Recall of planted sentences, for aspect pruning and random selection."""

    pruned_recall: float
    random_recall: float
    documents: int


def retention_study(
    documents: Sequence[Tuple[str, str, Set[int]]],
    segmentation: SegmentationConfig,
    prune_cfg: PruneConfig,
    encoder: Encoder,
    baseline_seeds: int = 20,
    aspect_template: str = '{aspect}',
) -> RetentionResult:
    r"""Measures how many planted sentences survive pruning.

    Each document comes as ``(aspect, text, planted)``, where `planted` holds
    the indices of the aspect-bearing sentences.
    Aspect pruning is compared with a random selection of the same per-chunk
    budget, averaged over `baseline_seeds` seeds.

    Returns:
        :class:`RetentionResult`: Recalls averaged over the documents.
    """
    if not documents:
        raise ValueError('no documents')
    if baseline_seeds < 1:
        raise ValueError('non-positive baseline seeds')

    pruned_total = 0.0
    random_total = 0.0
    w = prune_cfg.per_chunk_budget_w

    for aspect, text, planted in documents:
        if not planted:
            raise ValueError('no planted sentences')

        sentences, chunks = segment(text, segmentation)
        query = make_query(aspect, encoder, aspect_template)
        pruned = prune_document(sentences, chunks, query, prune_cfg, encoder)
        pruned_total += len(planted & set(pruned.doc_indices)) / len(planted)

        recalls = []
        for seed in range(baseline_seeds):
            rng = random.Random(seed)
            kept: Set[int] = set()
            for chunk in chunks:
                items = [ScoredSentence(sentence, chunk.chunk_index, 0.0) for sentence in chunk.sentences]
                kept.update(item.sentence.doc_index for item in select_random_w(items, w, rng))
            recalls.append(len(planted & kept) / len(planted))
        random_total += sum(recalls) / len(recalls)

    count = len(documents)
    return RetentionResult(pruned_total / count, random_total / count, count)

