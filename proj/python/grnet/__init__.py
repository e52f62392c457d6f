"""Deep learning on Grassmann subspace data.

The heavy lifting lives in the compiled extension ``grnet._core``: exact
forward/backward passes for every subspace layer (FRMap, ReOrth, ProjMap,
A-/W-ProjPooling, OrthMap, FC+softmax), Riemannian SGD over the connection
weights, synthetic dataset generation, binary dataset/model formats and a
finite-difference gradient-check harness.
"""

from grnet._core import (
    Dataset,
    GrNet,
    GrnetError,
    asym,
    bsym,
    check_layer,
    check_network,
    frob_inner,
    gen_synthetic,
    gradcheck_all,
    layer_targets,
    load_dataset,
    nearest_prototype_accuracy,
    orthmap,
    principal_angles,
    projection_metric,
    projmap,
    reorth,
    retract,
    riemannian_grad,
    subspace_from_features,
    sym_eig,
    thin_qr,
    tril_strict,
)

__all__ = [
    "Dataset",
    "GrNet",
    "GrnetError",
    "asym",
    "bsym",
    "check_layer",
    "check_network",
    "frob_inner",
    "gen_synthetic",
    "gradcheck_all",
    "layer_targets",
    "load_dataset",
    "nearest_prototype_accuracy",
    "orthmap",
    "principal_angles",
    "projection_metric",
    "projmap",
    "reorth",
    "retract",
    "riemannian_grad",
    "subspace_from_features",
    "sym_eig",
    "thin_qr",
    "tril_strict",
]

__version__ = "0.1.0"
