# Copyright 2026 The wavecap Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Audio captioning with a WaveTransformer model."""

from wavecap._core import (
    Captioner,
    CheckpointError,
    ConfigError,
    DataError,
    DimensionError,
    FormatError,
    UsageError,
    WavecapError,
    bleu,
    build_vocab,
    cider_d,
    evaluate,
    extract_features,
    load_features,
    load_wav,
    rouge_l,
    save_features,
    tokenize,
)

__version__ = "0.1.0"

__all__ = [
    "Captioner",
    "CheckpointError",
    "ConfigError",
    "DataError",
    "DimensionError",
    "FormatError",
    "UsageError",
    "WavecapError",
    "bleu",
    "build_vocab",
    "cider_d",
    "evaluate",
    "extract_features",
    "load_features",
    "load_wav",
    "rouge_l",
    "save_features",
    "tokenize",
]
