"""Metric-aware variational optimization of parameterized quantum mixed states."""

from .linalg import PauliString, hs_inner, matrix_exp, matrix_log, pauli_dense, pseudo_inverse
from .states import (
    DensityOperator,
    density_from_matrix,
    fidelity,
    gibbs_state,
    relative_entropy,
    third_order_symmetry_gap,
    von_neumann_entropy,
)
from .qhbm import (
    BoltzmannMachine,
    QheaCircuit,
    QhbmModel,
    ebm_energy,
    ebm_log_partition,
    ebm_probabilities,
    ebm_sample,
    qhbm_density,
    qhbm_modular_hamiltonian,
    qhbm_sample_state,
    qnn_unitary,
)
from .metrics import (
    BH,
    BKM,
    InformationMatrix,
    bh_info_qhbm,
    bkm_hessian_check,
    bkm_info_qhbm,
    generalized_covariance,
    info_matrix_oracle,
    logarithmic_derivative,
)
from .exp_family import (
    ExpFamilyModel,
    MixtureCoords,
    ef_bkm_info_matrix,
    ef_density,
    ef_from_mixture,
    ef_learning_gradient,
    ef_learning_gradient_online,
    ef_log_partition,
    ef_simulation_gradient,
    ef_to_mixture,
    full_pauli_basis,
)
from .losses import LossEvaluation, qmhl_loss, relative_entropy_to_anchor_grad, vqt_loss
from .optimizers import (
    OptimizationProblem,
    OptimizerConfig,
    Trajectory,
    adam_step,
    lagrange_step,
    qpmd_step,
    qpngd_step,
    run_optimization,
    sgd_step,
)
from .targets import (
    ChannelSpec,
    GpDriveSpec,
    TfimSpec,
    apply_channel,
    gp_sample,
    tfim_gibbs_target,
    tfim_hamiltonian,
    trotter_unitary,
)
from .sequences import (
    SequenceResult,
    SequenceSpec,
    chained_optimize,
    chained_with_history,
    metric_variation,
    qvartz_propagate,
)

__version__ = "0.1.0"
