"""Random Reshuffling, Incremental Gradient and Shuffled Proximal Point methods
with diminishing step sizes, plus inequality checks and rate estimation."""
from .errors import (ConditionError, ConfigurationError, InsufficientDataError,
                     InvalidParameterError, NumericalFailure)
from .problems import (BUILTIN, FiniteSumProblem, KLDescriptor, descent_lemma_check,
                       full_gradient, full_value, make_double_well, make_power,
                       make_problem, make_quadratic)
from .schedules import (StepSchedule, admissible_bound, check_conditions,
                        first_valid_iteration, g_constant, step_size,
                        tail_series_bracket, u_sequence)
from .permutations import PermutationSource, sample_permutation
from .optim import Trajectory, rr_epoch, run, sppm_epoch

__version__ = "0.1.0"
