"""Inference-side learned image codec.

A four-stage attention-augmented transform maps RGB images to latents, a
hyperprior plus multistage context model predicts per-symbol Gaussians, and
a byte-oriented range coder writes progressively decodable bitstreams. Pure
numpy/scipy; weights travel in `.tlwt` files, compressed images in `.tlic`
containers.
"""

from . import errors
from .codec import (
    LAMBDA_GRID,
    Codec,
    ImageBuffer,
    RdReport,
    decode_image,
    encode_image,
    j_cost,
    mse_unit,
    ms_ssim,
    parse_ppm,
    psnr,
    read_ppm,
    report,
    serialize_ppm,
    write_ppm,
)
from .container import (
    Container,
    inspect_container,
    read_container,
    write_container,
)
from .mcm import (
    McmModel,
    SliceSpec,
    build_schedule,
    cosine_slice,
    linear_slice,
    mcm_decode,
    mcm_encode,
    progressive_decode,
)
from .selftest import run_selftest
from .transform import (
    DEFAULT_CONFIG,
    TINY_CONFIG,
    NetworkConfig,
    TransformModel,
    analysis_hyper,
    analysis_main,
    synthesis_hyper,
    synthesis_main,
)
from .weights import (
    WeightStore,
    check_complete,
    load_weights,
    model_hash,
    model_parameter_shapes,
    parameter_count,
    read_weights,
    save_weights,
    seeded_init,
    write_weights,
)

__version__ = "0.1.0"

__all__ = [
    "LAMBDA_GRID",
    "Codec",
    "Container",
    "DEFAULT_CONFIG",
    "ImageBuffer",
    "McmModel",
    "NetworkConfig",
    "RdReport",
    "SliceSpec",
    "TINY_CONFIG",
    "TransformModel",
    "WeightStore",
    "analysis_hyper",
    "analysis_main",
    "build_schedule",
    "check_complete",
    "cosine_slice",
    "decode_image",
    "encode_image",
    "errors",
    "inspect_container",
    "j_cost",
    "linear_slice",
    "load_weights",
    "mcm_decode",
    "mcm_encode",
    "model_hash",
    "model_parameter_shapes",
    "mse_unit",
    "ms_ssim",
    "parameter_count",
    "parse_ppm",
    "progressive_decode",
    "psnr",
    "read_container",
    "read_ppm",
    "read_weights",
    "report",
    "run_selftest",
    "save_weights",
    "seeded_init",
    "serialize_ppm",
    "synthesis_hyper",
    "synthesis_main",
    "write_container",
    "write_ppm",
    "write_weights",
]
