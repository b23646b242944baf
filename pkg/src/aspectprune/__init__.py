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

__version__ = '0.1.0'

from .adapters.jsonl import JsonlAdapter
from .adapters.manews import ManewsAdapter
from .adapters.oasum import OasumAdapter
from .adapters.usb import UsbAdapter
from .base import ADAPTERS
from .base import EMBEDDERS
from .base import GENERATORS
from .base import DatasetRecord
from .config import ExperimentConfig
from .config import load_config
from .embedder import OfflineEmbedder
from .embedder import RemoteEmbedder
from .embedder import cosine
from .harness import evaluate_run
from .harness import load_dataset
from .harness import run_ablation_chunk_size
from .harness import run_ablation_icl_aspect
from .harness import run_ablation_sentence_retrieval
from .harness import run_pipeline
from .metrics import meteor
from .metrics import rouge_l
from .metrics import rouge_n
from .promptgen import ChatGenerator
from .promptgen import LeadGenerator
from .promptgen import build_prompt
from .promptgen import select_icl_example
from .promptgen import truncate_to_budget
from .pruner import PruneConfig
from .pruner import prune_document
from .pruner import recursive_prune
from .pruner import select_top_w
from .segmenter import SegmentationConfig
from .segmenter import chunk_document
from .segmenter import split_sentences


def _register_default_embedders():

    defaults = {
        # Network-free, deterministic
        'offline': OfflineEmbedder,

        # OpenAI-compatible endpoint
        'remote': RemoteEmbedder,
    }

    for key, value in defaults.items():
        EMBEDDERS.setdefault(key, value)


def _register_default_generators():

    defaults = {
        'chat': ChatGenerator,
        'lead': LeadGenerator,
    }

    for key, value in defaults.items():
        GENERATORS.setdefault(key, value)


def _register_default_adapters():

    defaults = {
        # Native schema first
        'jsonl': JsonlAdapter,

        'manews': ManewsAdapter,
        'oasum': OasumAdapter,
        'usb': UsbAdapter,
    }

    for key, value in defaults.items():
        ADAPTERS.setdefault(key, value)


# Automatically register default backends and adapters on module load
_register_default_embedders()
_register_default_generators()
_register_default_adapters()
