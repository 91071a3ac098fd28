"""Desk-scale toolkit for kernel-based clustering of quantum phases.

Dense and stabilizer state backends, spin-model ground states, circuit
complexity bound checks, classical shadows, fidelity/entanglement/shadow
kernels and spectral embeddings.
"""

__version__ = "0.1.0"

from ._validation import BackendCapError, NumericalError, ValidationError
from .circuits import (
    BoundReport,
    BrickworkCircuit,
    GeneratorPath,
    apply_brickwork,
    brickwork_circuit,
    nielsen_path_cost,
    qfc_path_cost,
    qfi_along_path,
    random_local_path,
    trotter_evolve,
    verify_theorem1,
    verify_theorem2,
)
from .embed import (
    ClusterAssignment,
    DiffusionMap,
    EmbeddingResult,
    KernelPCAEmbedding,
    KMeans,
    diffusion_map,
    kernel_pca,
    kmeans,
)
from .kernels import (
    EntanglementKernel,
    FidelityKernel,
    KernelConfig,
    KernelMatrix,
    ShadowKernel,
    build_kernel_matrix,
    entanglement_kernel,
    fidelity_kernel,
)
from .models import (
    ETCParams,
    PauliSum,
    ToricLattice,
    XXZParams,
    build_etc,
    build_toric,
    build_xxz,
    ground_state,
    random_product_state,
)
from .shadows import ShadowEnsemble, collect_shadows, shadow_kernel, shadow_rdm
from .stabilizer import StabilizerState, toric_stabilizer_state
from .statespace import (
    ChainOrdering,
    DensityMatrix,
    EntanglementProfile,
    PureState,
    bures_distance,
    entanglement_profile,
    partial_trace,
    uhlmann_fidelity,
)
