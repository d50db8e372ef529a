"""Ear-biometric identification pipeline.

Preprocessing (zoom-crop, Canny edge detection), seeded augmentation,
dataset manifests, a compact from-scratch CNN classifier, and a harness
that compares the four experimental conditions (BM, PP, AZ, CES).
"""

from .augment import AugmentConfig, TransformChain, TransformStep, apply_chain, expand_dataset, sample_chain
from .canny import (
    CannyParams,
    EdgeMap,
    GradientField,
    canny,
    convolve2d,
    double_threshold,
    gaussian_kernel,
    hysteresis_link,
    non_max_suppression,
    sobel_gradients,
)
from .classifier import CompactCnn, TrainConfig, evaluate, gradient_check, load_model, save_model, train
from .dataset import (
    DatasetManifest,
    DatasetProfile,
    Record,
    read_manifest,
    scan_dataset,
    split_manifest,
    write_manifest,
)
from .geometry import (
    ZoomSpec,
    make_crop_resize,
    make_flip_h,
    make_perspective,
    make_rotation,
    resize_bilinear,
    warp_affine,
    warp_perspective,
    zoom_crop,
)
from .harness import ExperimentConfig, prepare_condition, run_experiment
from .image import Image, PixelRect, load_image, save_image, to_grayscale
from .photometric import JitterSpec, adjust_brightness, adjust_contrast, adjust_hue, adjust_saturation
from .report import ExperimentReport, ReportRow, emit_report, render_report_figure

__version__ = "0.1.0"
