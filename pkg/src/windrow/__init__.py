"""Windrow centerline detection from tractor point clouds."""

from windrow.agreement import AgreementReport, FrameAgreement, frame_agreement, pair_rows, sequence_report
from windrow.centerline import (
    Centerline,
    CenterlineConfig,
    CenterlinePoint,
    GuidanceTarget,
    extract_centerline,
    guidance_target,
    row_threshold,
    topk_centerline,
    weighted_centroid_row,
)
from windrow.frame_io import (
    FrameSequence,
    PointCloudFrame,
    PreprocessConfig,
    crop_range,
    load_frame_csv,
    load_frame_pcd,
    read_manifest,
    remove_statistical_outliers,
)
from windrow.grid import GridConfig, HeightGrid, ground_offset, rasterize
from windrow.pipeline import PipelineConfig, process_frame
from windrow.synth import SynthConfig, SynthScene, generate_scene, generate_sequence

__version__ = "0.1.0"
