"""Linear graph-signal layers as ``theta x S x input`` contractions.

``theta`` holds the distinct parameter values, the sparse allocation
tensor ``S`` encodes how they are shared across (output, input) neuron
pairs.  Builders for FC, 1-D convolution, ChebNet, GCN, GAT and TAGCN
produce ``S``; ``reference`` evaluates each layer directly for checking.
"""

from .errors import (
    CapacityError,
    ConvergenceError,
    DegenerateNeighborhoodError,
    DimensionError,
    GeometryError,
    ParseError,
    RangeError,
    TernaryError,
    UnsupportedGraphError,
    ValidationError,
)
from .graph_core import (
    Graph,
    RescaleMode,
    chebyshev_basis,
    degree_matrix,
    lambda_max,
    laplacian,
    matrix_power_series,
    normalized_adjacency,
    parse_edge_list,
    rescaled_laplacian,
)
from .schemes import (
    ChebVariant,
    GatMode,
    GatParams,
    SchemeSpec,
    attention_coefficients,
    build_chebnet_scheme,
    build_conv1d_scheme,
    build_fc_scheme,
    build_gat_scheme,
    build_gcn_scheme,
    build_tagcn_scheme,
)
from .tensor_core import (
    AllocationTensor,
    DenseTensor,
    ParamTensor,
    TernaryLayer,
    contract_sx,
    contract_theta,
    dense_forward,
    grad_theta,
    grad_x,
    materialize_w,
    ternary_forward,
)

__version__ = "0.1.0"
