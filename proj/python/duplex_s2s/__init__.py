# Copyright 2026 The duplex-s2s Authors
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
"""Streaming full-duplex speech-to-speech pipeline (toy scale)."""

from ._core import (
    S2SError,
    Session,
    TokenFifo,
    builtin_stages,
    codec_decode,
    encode,
    frame_features,
    num_frames,
    param_registry,
    run_scenario,
    sentence_split,
    top_k_indices,
    top_k_sample,
    validate_stage,
)

SAMPLES_PER_TOKEN = 600
INPUT_RATE = 16000
OUTPUT_RATE = 24000

__all__ = [
    "INPUT_RATE",
    "OUTPUT_RATE",
    "SAMPLES_PER_TOKEN",
    "S2SError",
    "Session",
    "TokenFifo",
    "builtin_stages",
    "codec_decode",
    "encode",
    "frame_features",
    "num_frames",
    "param_registry",
    "run_scenario",
    "sentence_split",
    "top_k_indices",
    "top_k_sample",
    "validate_stage",
]
