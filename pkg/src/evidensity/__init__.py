"""Evidential fusion of crowd-density ensembles with multiscale evaluation.

The package turns a stack of per-source likelihood maps into a fused
density estimate with per-pixel uncertainty (belief-function machinery in
:mod:`evidensity.evidential`) and scores any estimator's count intervals
across a square pyramid (:mod:`evidensity.multiscale`).  Supporting modules
cover array/annotation I/O, ground-truth rendering, and deterministic
synthetic benchmarks; ``evidensity`` on the command line wires them
together.
"""

from .errors import (
    BoundsError,
    CalibrationError,
    DataError,
    EvidensityError,
    NpyFormatError,
    PackingError,
    ParameterError,
    RankError,
    SchemaError,
    ShapeError,
    TotalConflictError,
    ValidationError,
)
from .evidential import (
    BbaMap,
    DiscountMap,
    FusionResult,
    allocate_bayesian,
    belief_plausibility,
    combine_conjunctive,
    compute_discount_maps,
    discount,
    fuse_ensemble,
    pignistic,
)
from .groundtruth import GaussianSpec, build_density_map, region_count
from .multiscale import (
    EvalCurve,
    EvalRecord,
    Region,
    RegionStats,
    ScaleSpec,
    calibrate_w,
    compute_bounds,
    enumerate_scales,
    evaluate,
    integral_image,
    pep,
    region_sum,
    ri,
    scale_sides,
)
from .synth import NoiseModel, generate_realizations, generate_scene
from .tensor_io import (
    HeadAnnotations,
    read_annotations,
    read_array,
    write_annotations,
    write_array,
)

__version__ = "0.1.0"
