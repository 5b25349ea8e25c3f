"""tvx: exchange and sliding algorithms for TV-regularized recovery of
sparse measures, with certificate diagnostics and a reproducible experiment
harness."""

from .certificate import (Cell, CellBudgetError, MaximizerConfig,
                          NondegeneracyReport, cell_bounds,
                          certified_maximizers, extract_maximizers,
                          find_maximizers, nondegeneracy_report, tile_domain)
from .exchange import (ExchangeConfig, ExchangeResult, ExchangeState,
                       MetricsRow, attach_reference_metrics, exchange_step,
                       initial_grid, run_exchange)
from .fidelity import QuadraticFidelity
from .finite_solver import (FiniteProblem, KKTReport, SolveReport, duality_gap,
                            kkt_report, soft_threshold, solve_finite)
from .harness import (BatchSpec, BoundCheck, BoundReport, basin_study,
                      check_bounds, gen_fourier1d, gen_gauss2d, load_run_dir,
                      run_batch, write_run_dir)
from .hybrid import HybridConfig, HybridResult, run_hybrid
from .measures import (DiscreteMeasure, Domain, DomainError, as_points,
                       merge_atoms, set_distance, tv_norm)
from .operators import (Fourier1D, Gaussian2D, MeasurementOperator,
                        OperatorConstants, atom_response, certificate_eval,
                        forward, operator_constants)
from .problem import GroundTruth, Problem
from .sliding import (NondifferentiableError, Parameterization, SlideConfig,
                      SlideResult, TransitionReport, amplitude_error_bound,
                      gradient_G, objective_G, run_sliding, transition_gram)

__version__ = "0.1.0"
