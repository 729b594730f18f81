"""Certified fold analysis for zero sets of F(x, t) = 0.

Typical use::

    from transfold import get_problem, Point, certify
    cert = certify(get_problem("fold1d"), Point([0.0], 0.0))
"""

__version__ = "0.1.0"

from .continuation import (  # noqa: E402
    BranchCurve,
    FoldRecord,
    ScanConfig,
    StepConfig,
    detect_folds,
    quadratic_separation_check,
    refine_fold,
    scan_folds,
    trace_branch,
)
from .energy import EnergyProblem, build_allen_cahn, d3_dir, energy_value, sweep_and_certify  # noqa: E402
from .genericity import (  # noqa: E402
    GenericityReport,
    PerturbationSample,
    SymmetricPerturbation,
    check_full_regularity,
    genericity_experiment,
    perturb_energy,
    perturb_problem,
    rescue_linear,
    rescue_symmetric,
    sample_perturbation,
)
from .kernels import BACKEND  # noqa: E402
from .problem import Point, ProblemSpec, get_problem, problem_from_config, problem_from_expressions  # noqa: E402
from .singular_limit import (  # noqa: E402
    FlowTrace,
    LimitCurve,
    build_limit_curve,
    convergence_study,
    inner_gradient_flow,
    integrate_eps_flow,
)
from .solve import NewtonConfig, ZeroSetSection, enumerate_section, newton_augmented, newton_fixed_t  # noqa: E402
from .spectral import KernelPair, RankReport, TolPolicy, is_invertible, kernel_pair, rank_report  # noqa: E402
from .transversality import (  # noqa: E402
    AugmentedPoint,
    CertTolerances,
    EnergyCertificate,
    TransversalityCertificate,
    augmented_G,
    certify,
    certify_energy,
    check_dF_onto,
    check_regular_value_G,
    dG_total,
)
