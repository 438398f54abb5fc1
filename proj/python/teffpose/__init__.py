"""Pose estimation against a template feature field by render-and-compare."""

from ._teffpose import (
    DimensionError,
    FeatureField,
    FormatError,
    PoseBank,
    ValidationError,
    build_bank,
    estimate_scale_rotation,
    kl_divergence,
    make_instance,
    make_template,
    phase_correlate,
    pose_pdf,
    read_feature_map,
    render,
    sample_indices,
    warp,
    write_feature_map,
)

__version__ = "0.1.0"
