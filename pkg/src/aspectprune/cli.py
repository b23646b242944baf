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

r"""Command line interface.

The ``aspectprune`` command group prunes single articles around an aspect,
summarizes them, scores summaries against references, and runs whole
experiments and ablation series from a YAML configuration.

Exit codes are ``0`` on success, ``1`` on configuration or input errors,
``2`` on remote backend errors, and ``3`` when a run exceeds its failure
budget.
"""

import functools
import json
import logging
from typing import Any
from typing import Callable
from typing import Dict
from typing import List
from typing import Mapping
from typing import Optional
from typing import Sequence
from typing import Tuple

import click
import colorama

from .__init__ import ADAPTERS
from .__init__ import __version__
from .base import ConfigError
from .base import FailureBudgetExceeded
from .base import RemoteError
from .config import METHODS
from .config import ExperimentConfig
from .config import apply_overrides
from .config import load_config
from .harness import AblationReport
from .harness import Pipeline
from .harness import RunReport
from .harness import evaluate_run
from .harness import make_encoder
from .harness import make_generator
from .harness import prune_text
from .harness import read_dataset
from .harness import run_ablation_chunk_size
from .harness import run_ablation_icl_aspect
from .harness import run_ablation_sentence_retrieval
from .harness import run_pipeline
from .metrics import MetricReport
from .promptgen import generate_summary
from .utils import parse_int

_log = logging.getLogger(__name__)

LOG_FORMAT = '%(levelname)s:%(name)s: %(message)s'

EXIT_CONFIG = 1
EXIT_REMOTE = 2
EXIT_FAILURE_BUDGET = 3


class ScaledIntParamType(click.ParamType):
    name = 'integer'

    def convert(self, value, param, ctx):
        try:
            return parse_int(value)
        except ValueError:
            self.fail(f'invalid integer: {value!r}', param, ctx)


class WordCountParamType(click.ParamType):
    name = 'words'

    def convert(self, value, param, ctx):
        try:
            count = parse_int(value)
            if count < 1:
                raise ValueError()
            return count
        except ValueError:
            self.fail(f'invalid word count: {value!r}', param, ctx)


class WordCountListParamType(click.ParamType):
    name = 'words,...'

    def convert(self, value, param, ctx):
        if isinstance(value, (list, tuple)):
            return list(value)
        try:
            counts = [parse_int(token) for token in value.split(',') if token.strip()]
            if not counts or any(count < 1 for count in counts):
                raise ValueError()
            return counts
        except ValueError:
            self.fail(f'invalid word count list: {value!r}', param, ctx)


SCALED_INT = ScaledIntParamType()
WORD_COUNT = WordCountParamType()
WORD_COUNT_LIST = WordCountListParamType()

FILE_PATH_IN = click.Path(dir_okay=False, allow_dash=True, readable=True, exists=True)
FILE_PATH_OUT = click.Path(dir_okay=False, allow_dash=True, writable=True)
DIR_PATH_OUT = click.Path(file_okay=False, writable=True)

ADAPTER_CHOICE = click.Choice(list(sorted(ADAPTERS.keys())))
METHOD_CHOICE = click.Choice(list(METHODS))

OVERRIDE_KEYS: Mapping[str, str] = {
    'dataset': 'dataset.path',
    'adapter': 'dataset.adapter',
    'max_records': 'dataset.max_records',
    'max_record_words': 'dataset.max_record_words',
    'train': 'prompt.train_path',
    'method': 'method',
    'seed': 'seed',
    'workers': 'workers',
    'output_dir': 'output_dir',
    'chunk_words': 'segmentation.target_words',
    'budget_w': 'prune.per_chunk_budget_w',
    'global_target': 'prune.global_target_words',
    'bypass_threshold': 'prune.bypass_threshold_words',
    'chunk_drop': 'prune.chunk_drop_fraction',
    'recursion_decay': 'prune.recursion_decay',
    'embedder': 'embedder.backend',
    'embed_url': 'embedder.base_url',
    'embed_model': 'embedder.model',
    'embed_cache': 'embedder.cache_path',
    'generator': 'generator.backend',
    'llm_url': 'generator.base_url',
    'llm_model': 'generator.model',
    'token_budget': 'prompt.token_budget',
    'icl_policy': 'prompt.icl_policy',
}
r"""Command line option names, mapped onto configuration keys."""

METRIC_COLUMNS: Sequence[Tuple[str, str]] = (
    ('R-1', 'rouge1_f'),
    ('R-2', 'rouge2_f'),
    ('R-L', 'rougeL_f'),
    ('METEOR', 'meteor'),
)

TABLE_COLORS: Mapping[str, str] = {
    'header': colorama.Fore.CYAN + colorama.Style.BRIGHT,
    'label': colorama.Fore.YELLOW,
    'value': colorama.Style.RESET_ALL,
    'failed': colorama.Fore.RED,
    '': colorama.Style.RESET_ALL,
}


# ----------------------------------------------------------------------------

def print_version(ctx, _, value):

    if not value or ctx.resilient_parsing:
        return

    click.echo(str(__version__))
    ctx.exit()


def setup_logging(verbose: int, quiet: bool) -> None:
    r"""Configures the root logger, once per command."""

    if quiet:
        level = logging.ERROR
    elif verbose >= 2:
        level = logging.DEBUG
    elif verbose == 1:
        level = logging.INFO
    else:
        level = logging.WARNING
    logging.basicConfig(level=level, format=LOG_FORMAT, force=True)


def guarded(func: Callable) -> Callable:
    r"""Maps library exceptions onto exit codes."""

    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        ctx = click.get_current_context()
        try:
            return func(*args, **kwargs)
        except FailureBudgetExceeded as exc:
            click.echo(f'error: {exc}', err=True)
            ctx.exit(EXIT_FAILURE_BUDGET)
        except RemoteError as exc:
            click.echo(f'error: {exc}', err=True)
            ctx.exit(EXIT_REMOTE)
        except (ConfigError, FileNotFoundError, ValueError) as exc:
            click.echo(f'error: {exc}', err=True)
            ctx.exit(EXIT_CONFIG)

    return wrapper


def make_config(ctx: click.Context, options: Mapping[str, Any]) -> ExperimentConfig:
    r"""Builds the configuration: defaults, then file, then options."""

    config_path = ctx.obj.get('config_path') if ctx.obj else None
    cfg = load_config(config_path) if config_path else ExperimentConfig()
    overrides = {OVERRIDE_KEYS[name]: value for name, value in options.items() if name in OVERRIDE_KEYS}
    return apply_overrides(cfg, overrides)


def _option_decorators() -> List[Callable]:

    return [
        click.option('--dataset', type=FILE_PATH_IN, help='Dataset JSONL file.'),
        click.option('--adapter', type=ADAPTER_CHOICE, help='Dataset adapter.'),
        click.option('--max-records', type=WORD_COUNT, help='Maximum dataset rows read.'),
        click.option('--max-record-words', type=WORD_COUNT, help='Document length limit, exclusive.'),
        click.option('--train', type=FILE_PATH_IN, help='Training JSONL file, for in-context examples.'),
        click.option('--method', type=METHOD_CHOICE, help='Pipeline method.'),
        click.option('--seed', type=SCALED_INT, help='Random seed.'),
        click.option('--workers', type=WORD_COUNT, help='Worker threads.'),
        click.option('--output-dir', type=DIR_PATH_OUT, help='Report output directory.'),
        click.option('--chunk-words', type=WORD_COUNT, help='Chunk word target.'),
        click.option('--budget-w', type=WORD_COUNT, help='Per-chunk word budget.'),
        click.option('--global-target', type=WORD_COUNT, help='Document word target, pruning recursively.'),
        click.option('--bypass-threshold', type=WORD_COUNT, help='Documents shorter than this are not pruned.'),
        click.option('--chunk-drop', type=float, help='Fraction of least relevant chunks dropped.'),
        click.option('--recursion-decay', type=float, help='Budget multiplier between recursive rounds.'),
        click.option('--embedder', type=str, help='Embedding backend.'),
        click.option('--embed-url', type=str, help='Embeddings endpoint base URL.'),
        click.option('--embed-model', type=str, help='Embeddings model.'),
        click.option('--embed-cache', type=click.Path(dir_okay=False), help='Embedding cache file.'),
        click.option('--generator', type=str, help='Generation backend.'),
        click.option('--llm-url', type=str, help='Chat endpoint base URL.'),
        click.option('--llm-model', type=str, help='Chat model.'),
        click.option('--token-budget', type=WORD_COUNT, help='Prompt token budget.'),
        click.option('--icl-policy', type=click.Choice(['shortest', 'aspect_matched', 'random']),
                     help='In-context example policy.'),
    ]


def experiment_options(func: Callable) -> Callable:
    r"""Adds the configuration override options to a command."""

    for decorator in reversed(_option_decorators()):
        func = decorator(func)
    return func


def _split_options(kwargs: Dict[str, Any]) -> Dict[str, Any]:

    return {name: kwargs.pop(name) for name in list(kwargs) if name in OVERRIDE_KEYS}


# ----------------------------------------------------------------------------

def format_table(
    title: str,
    rows: Sequence[Tuple[str, Optional[MetricReport]]],
) -> str:
    r"""Formats a colored metric table, one line per row; values are percentages."""

    titles = [title] + [label for label, _ in METRIC_COLUMNS]
    cells = []
    for label, means in rows:
        if means is None:
            values = ['-'] * len(METRIC_COLUMNS)
        else:
            values = [f'{getattr(means, key) * 100:.2f}' for _, key in METRIC_COLUMNS]
        cells.append([label] + values)

    widths = [max(len(cell) for cell in column) for column in zip(titles, *cells)]
    reset = TABLE_COLORS['']

    lines = [TABLE_COLORS['header'] + '  '.join(t.ljust(w) for t, w in zip(titles, widths)) + reset]
    for (_, means), row in zip(rows, cells):
        color = TABLE_COLORS['failed'] if means is None else TABLE_COLORS['value']
        label = TABLE_COLORS['label'] + row[0].ljust(widths[0]) + reset
        values = '  '.join(cell.rjust(width) for cell, width in zip(row[1:], widths[1:]))
        lines.append(f'{label}  {color}{values}{reset}')
    return '\n'.join(lines)


def echo_run_report(report: RunReport) -> None:

    rows: List[Tuple[str, Optional[MetricReport]]] = [(report.name, report.means)]
    rows.extend((f'  {aspect}', means) for aspect, means in sorted(report.aspect_means.items()))
    click.echo(format_table('run', rows))
    counts = report.counts
    click.echo(f'records: {counts.get("evaluated", 0)} evaluated, {counts.get("failed", 0)} failed, '
               f'mean input words: {report.mean_input_words:.1f}')


def echo_ablation_report(ablation: AblationReport) -> None:

    key = ablation.columns[0]
    rows = []
    for row in ablation.rows:
        label = ' / '.join(str(row[column]) for column in ablation.columns
                           if column in ('chunk_words', 'mode', 'example_aspect', 'test_aspect'))
        rows.append((label, MetricReport(**{name: row[name] for _, name in METRIC_COLUMNS})))
    click.echo(format_table(key, rows))


# ============================================================================

@click.group()
@click.option('-c', '--config', 'config_path', type=FILE_PATH_IN, help="""
    YAML configuration file; command line options take precedence.
""")
@click.option('-v', '--verbose', count=True, help="""
    Increase verbosity: ``-v`` for INFO, ``-vv`` for DEBUG.
""")
@click.option('-q', '--quiet', is_flag=True, help="""
    Only log errors.
""")
@click.option('-V', '--version', is_flag=True, is_eager=True, expose_value=False,
              callback=print_version, help="""
    Prints the package version number.
""")
@click.pass_context
def main(ctx: click.Context, config_path: Optional[str], verbose: int, quiet: bool) -> None:
    """
    Aspect-based summarization with embedding-driven document pruning.

    Being built with `Click <https://click.palletsprojects.com/>`_, all the
    commands follow POSIX-like syntax rules, as well as reserving the virtual
    file path ``-`` for standard input/output.

    Exit codes: 0 success, 1 configuration error, 2 remote endpoint failure,
    3 too many failed records.
    """
    setup_logging(verbose, quiet)
    ctx.ensure_object(dict)
    ctx.obj['config_path'] = config_path


# ----------------------------------------------------------------------------

@main.command()
@experiment_options
@click.option('-a', '--aspect', required=True, help="""
    Target aspect.
""")
@click.option('--sentence-level', is_flag=True, help="""
    Selects sentences over the whole document, ignoring chunks.
""")
@click.option('-p', '--provenance', type=FILE_PATH_OUT, help="""
    Writes the provenance of the kept sentences as JSON.
""")
@click.argument('infile', type=FILE_PATH_IN)
@click.argument('outfile', type=FILE_PATH_OUT, required=False)
@click.pass_context
@guarded
def prune(ctx: click.Context, aspect: str, sentence_level: bool, provenance: Optional[str],
          infile: str, outfile: Optional[str], **kwargs) -> None:
    r"""Prunes a text document around an aspect.

    ``INFILE`` is a plain text document; the pruned text goes to ``OUTFILE``,
    or standard output.
    """
    cfg = make_config(ctx, _split_options(kwargs))

    with click.open_file(infile, 'rt', encoding='utf-8') as stream:
        document = stream.read()

    encoder = make_encoder(cfg.embedder)
    try:
        mode = 'sentence' if sentence_level else cfg.prune_mode
        pruned, sentences, _ = prune_text(document, aspect, cfg.segmentation, cfg.prune, encoder,
                                          mode, cfg.embedder.aspect_template)
    finally:
        encoder.close()

    with click.open_file(outfile or '-', 'wt', encoding='utf-8') as stream:
        stream.write(pruned.text)
        stream.write('\n')

    if provenance:
        data = {
            'aspect': aspect,
            'source_words': sum(sentence.word_count for sentence in sentences),
            'total_words': pruned.total_words,
            'bypassed': pruned.bypassed,
            'rounds': pruned.rounds,
            'round_words': list(pruned.round_words),
            'sentences': [
                {'doc_index': sentence.doc_index, 'chunk_index': chunk_index, 'score': score,
                 'word_count': sentence.word_count}
                for sentence, (chunk_index, score) in zip(pruned.sentences, pruned.provenance)
            ],
        }
        with click.open_file(provenance, 'wt', encoding='utf-8') as stream:
            json.dump(data, stream, indent=2, sort_keys=True)
            stream.write('\n')


# ----------------------------------------------------------------------------

@main.command()
@experiment_options
@click.option('-a', '--aspect', required=True, help="""
    Target aspect.
""")
@click.argument('infile', type=FILE_PATH_IN)
@click.argument('outfile', type=FILE_PATH_OUT, required=False)
@click.pass_context
@guarded
def summarize(ctx: click.Context, aspect: str, infile: str, outfile: Optional[str], **kwargs) -> None:
    r"""Summarizes a text document with respect to an aspect.

    The configured method, generator, and in-context example settings apply;
    one-shot methods need ``--train``.
    """
    cfg = make_config(ctx, _split_options(kwargs))

    with click.open_file(infile, 'rt', encoding='utf-8') as stream:
        document = stream.read()

    train = []
    if cfg.prompt.train_path:
        train, _ = read_dataset(cfg.prompt.train_path, cfg.dataset.adapter,
                                cfg.dataset.max_records, cfg.dataset.max_record_words)

    encoder = make_encoder(cfg.embedder)
    generator = make_generator(cfg.generator)
    try:
        pipeline = Pipeline(cfg, encoder, generator, train)
        spec, _ = pipeline.prepare(document, aspect)
        result = generate_summary(spec, generator)
    finally:
        generator.close()
        encoder.close()

    _log.info('prompt tokens: %d, truncated: %s', spec.prompt_tokens_est, spec.truncated)
    with click.open_file(outfile or '-', 'wt', encoding='utf-8') as stream:
        stream.write(result.summary)
        stream.write('\n')


# ----------------------------------------------------------------------------

@main.command()
@click.option('-o', '--output', type=FILE_PATH_OUT, help="""
    Writes per-pair metrics and means as JSON.
""")
@click.argument('generations', type=FILE_PATH_IN)
@click.argument('references', type=FILE_PATH_IN)
@guarded
def evaluate(output: Optional[str], generations: str, references: str) -> None:
    r"""Scores generated summaries against references.

    Both files hold one summary per line, aligned by line.
    """
    def read_lines(path):
        with click.open_file(path, 'rt', encoding='utf-8') as stream:
            return [line.rstrip('\r\n') for line in stream]

    reports, means = evaluate_run(read_lines(generations), read_lines(references))
    click.echo(format_table('pairs', [(str(len(reports)), means)]))

    if output:
        data = {'means': means.to_dict(), 'pairs': [report.to_dict() for report in reports]}
        with click.open_file(output, 'wt', encoding='utf-8') as stream:
            json.dump(data, stream, indent=2, sort_keys=True)
            stream.write('\n')


# ----------------------------------------------------------------------------

@main.command()
@experiment_options
@click.pass_context
@guarded
def run(ctx: click.Context, **kwargs) -> None:
    r"""Runs a method over a dataset, and reports its metrics."""

    cfg = make_config(ctx, _split_options(kwargs))
    report = run_pipeline(cfg)
    echo_run_report(report)


@main.command('ablate-chunk-size')
@experiment_options
@click.option('--sizes', type=WORD_COUNT_LIST, default='64,128,256', show_default=True, help="""
    Comma separated chunk word targets.
""")
@click.option('--csv', 'csv_path', type=FILE_PATH_OUT, help="""
    Writes the series as CSV.
""")
@click.pass_context
@guarded
def ablate_chunk_size(ctx: click.Context, sizes: List[int], csv_path: Optional[str], **kwargs) -> None:
    r"""Repeats a run for several chunk sizes."""

    cfg = make_config(ctx, _split_options(kwargs))
    ablation = run_ablation_chunk_size(cfg, sizes)
    echo_ablation_report(ablation)
    if csv_path:
        ablation.write_csv(csv_path)


@main.command('ablate-sentence')
@experiment_options
@click.option('--csv', 'csv_path', type=FILE_PATH_OUT, help="""
    Writes the comparison as CSV.
""")
@click.pass_context
@guarded
def ablate_sentence(ctx: click.Context, csv_path: Optional[str], **kwargs) -> None:
    r"""Compares chunk level and sentence level pruning."""

    cfg = make_config(ctx, _split_options(kwargs))
    ablation = run_ablation_sentence_retrieval(cfg)
    echo_ablation_report(ablation)
    if csv_path:
        ablation.write_csv(csv_path)


@main.command('ablate-icl-aspect')
@experiment_options
@click.option('--aspects', type=str, help="""
    Comma separated example aspects; all the training aspects by default.
""")
@click.option('--csv', 'csv_path', type=FILE_PATH_OUT, help="""
    Writes the grid as CSV.
""")
@click.pass_context
@guarded
def ablate_icl_aspect(ctx: click.Context, aspects: Optional[str], csv_path: Optional[str], **kwargs) -> None:
    r"""Crosses in-context example aspects with test aspects."""

    cfg = make_config(ctx, _split_options(kwargs))
    example_aspects = None
    if aspects:
        example_aspects = [aspect.strip() for aspect in aspects.split(',') if aspect.strip()]
    ablation = run_ablation_icl_aspect(cfg, example_aspects)
    echo_ablation_report(ablation)
    if csv_path:
        ablation.write_csv(csv_path)
