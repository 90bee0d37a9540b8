"""Zero-shot multimodal command grounding for tabletop human-robot interaction.

Given a word-timestamped transcript, hand landmarks, open-vocabulary
detections and (when needed) depth for selected frames, the engine
extracts the (object, action, target) triple, resolves references and
pointing deixis geometrically, and emits a grounded command with
pixel-level localization.
"""

from .bundle import PerceptionBundle, decode_bundle, encode_bundle
from .codec import decode_json, encode_json
from .errors import DecodeError, UncomError
from .extraction import (
    ExtractionResult,
    SpatialRelation,
    classify_concreteness,
    detect_spatial_relation,
    extract_fallback,
    extract_via_adapter,
    transcript_from_text,
)
from .gesture import (
    PointingRay,
    Ray3D,
    distance_point_to_ray,
    lift_ray_3d,
    pointing_ray,
    select_nearest_detection,
    select_pointing_hand,
)
from .pipeline import (
    GroundOutcome,
    PipelineConfig,
    ground,
    resolve_object,
    resolve_target,
    select_frame,
)
from .providers import BridgeClient, FixtureProvider, PerceptionProvider
from .tablemap import (
    annotate_depth,
    build_table_map,
    find_empty_cell_directional,
    select_cell_by_ray3d,
)
from .types import (
    SCHEMA_VERSION,
    CommandElements,
    Detection,
    DepthMap,
    EmptyCellTarget,
    FrameRef,
    GroundedCommand,
    HandObservation,
    Landmark,
    Mention,
    ObjectGrounding,
    ObjectTarget,
    PixelMask,
    TableMap,
    TargetResult,
    Transcript,
    VoronoiCell,
    WordToken,
)

__version__ = "0.1.0"
