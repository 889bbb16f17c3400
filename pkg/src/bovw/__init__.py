"""Bag-of-visual-words instance search over dense local-feature tensors."""

from .bow import (
    BowVector,
    MapRegion,
    cosine,
    encode_region,
    mean_vectors,
    normalized,
    pixel_region_to_map_region,
    region_for_map,
    region_pixel_footprint,
    scale,
    spm_regions,
    sum_vectors,
)
from .codebook import (
    AssignmentMap,
    Codebook,
    assign,
    assign_features,
    build_assignment_map,
    fit_codebook,
    load_assignment_map,
    load_codebook,
    save_assignment_map,
    save_codebook,
)
from .errors import (
    ConflictError,
    DataError,
    FitError,
    FormatError,
    TruncationError,
    ValidationError,
)
from .evaluation import GroundTruth, average_precision, load_ground_truth, mean_average_precision
from .index import InvertedIndex, QuerySpec, RankedList, build_query
from .preprocess import (
    CenterPriorGrid,
    TransformModel,
    apply_transform,
    bilinear_upsample,
    center_prior_grid,
    fit_transform_model,
    l2_normalize,
    l2_normalize_rows,
    load_transform_model,
    save_transform_model,
    transform_features,
)
from .qe import global_expand, local_expand
from .rerank import (
    Localization,
    WindowSet,
    aspect_ratio_score,
    build_query_pyramid,
    enumerate_windows,
    rerank_top,
    spm_score,
    write_localizations,
)
from .synth import PlantedCorpus, gen_planted_corpus, gen_random_tensor
from .tensor_io import FeatureTensor, read_tensor, write_tensor

__version__ = "0.1.0"
