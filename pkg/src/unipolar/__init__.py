"""Compound-channel polar coding toolkit.

Builds and simulates two constructions that stay reliable over every
binary-input memoryless output-symmetric channel of a given capacity:
a staircase of shifted polar blocks with Reed-Solomon column codes, and
chained/aligned polar blocks whose good index sets are matched across
channels.  Includes the supporting channel machinery (capacity,
Bhattacharyya, degradation, quantization, dominating families) and a CLI.
"""

from .channels import (
    BmsChannel,
    ChannelFamily,
    GridDensity,
    bhattacharyya,
    capacity,
    degradation_check,
    dominating_set,
    h2,
    h2_inv,
    make_channel,
    parse_channel,
    quantize,
    sample_llrs,
    wasserstein,
)
from .chaining import (
    AlignedBlock,
    ChainSpec,
    LeafBlock,
    align,
    align_recurse,
    aligned_decode,
    aligned_encode,
    build_universal_block,
    chain_decode,
    chain_encode,
    chain_spec_from_channels,
    classify_indices,
    compound_gap,
)
from .errors import (
    CapacityLimitError,
    ConstructionError,
    DecodingError,
    UnrecoverableErasure,
)
from .gf_rs import GfElement, GfField, RsCode, gf_mul
from .polar import (
    PinnedMap,
    PolarCodeSpec,
    SCBatch,
    blocklength_helper,
    build_spec,
    evolve_bhattacharyya,
    genie_failures,
    polar_transform,
    sc_decode,
)
from .staircase import (
    StaircaseCode,
    StaircaseParams,
    choose_params,
    column_occupancy,
    s1_decode,
    s1_encode,
)

__version__ = "0.1.0"
