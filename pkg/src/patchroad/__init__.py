"""Patch-wise road keypoint representation: encode, decode, refine and score road graphs."""
from .codec import DecodeParams, KeypointChoice, KeypointKind, decode_graph, encode_psl, select_keypoint
from .geometry import (
    PatchGrid,
    PslTensors,
    RoadGraph,
    clip_polyline_to_patch,
    neighbor,
    patch_of_point,
    rasterize_centerline,
    rasterize_graph,
)
from .graphopt import (
    OptimizeParams,
    connect_endpoints,
    optimize,
    remove_quadrilaterals,
    remove_triangles,
)
from .losses import LossWeights, loss_joint, loss_l, loss_p, loss_s, loss_seg
from .metrics import MetricParams, apls, eval_all, iou, pixel_f1
from .skeleton import mask_to_graph, thin_mask, vectorize_skeleton
from .synth import NoiseParams, SynthParams, generate_network, perturb_psl

__version__ = "0.1.0"
