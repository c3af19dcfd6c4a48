"""Desk-scale simulator for broadband digital over-the-air computation.

Quantized model parameters from two users are convolutionally encoded,
transmitted over a phase-asynchronous multi-user OFDM uplink, and the
receiver decodes the per-position arithmetic sum of the source bits
directly from the superimposed signal.
"""
from .convcodec import (
    TEST_CODE,
    WIFI_CODE,
    CodeSpec,
    DecodeResult,
    SoftObservation,
    conv_encode,
    fsjd_decode,
    psud_decode,
    rsjd_decode,
    single_user_viterbi,
)
from .quantizer import (
    PackedParameters,
    QuantMode,
    QuantizerConfig,
    dequantize,
    pack_parameters,
    quantize,
    reconstruct_sum,
)

__all__ = [
    "CodeSpec",
    "DecodeResult",
    "PackedParameters",
    "QuantMode",
    "QuantizerConfig",
    "SoftObservation",
    "TEST_CODE",
    "WIFI_CODE",
    "conv_encode",
    "dequantize",
    "fsjd_decode",
    "pack_parameters",
    "psud_decode",
    "quantize",
    "reconstruct_sum",
    "rsjd_decode",
    "single_user_viterbi",
]
