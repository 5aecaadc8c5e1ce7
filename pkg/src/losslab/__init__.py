"""Loss-surface experiments for small fully connected networks in numpy."""
from .analysis import ComparisonReport, bump_statistic, compare, disagreement_rate, functional_distance
from .checkpoint import Checkpoint, load_checkpoint, make_checkpoint, save_checkpoint
from .config import RunConfig, load_config, load_data
from .data import Dataset, load_mnist, synth_dataset
from .errors import (FormatError, LayoutMismatchError, LossLabError, NonFiniteError, ScheduleError,
                     ShapeError, TraceError)
from .landscape import (BNRefreshPolicy, InterpolationSpec, SurfaceSample, basin_profile_alpha,
                        basin_profile_lambda, evaluate_point, interp_barycentric, interp_bilinear,
                        interp_linear, refresh_bn_stats, sweep)
from .model import (InitScheme, Model, ModelSpec, ParameterVector, backward, build, fc2, forward,
                    initialize, loss_and_grad, predict)
from .optim import (OptimizerSpec, OptimizerState, RK2Coefficients, SwitchSchedule, init_state,
                    optimizer_step, run_schedule, vector_field)
from .rng import Stream, StreamKey

__version__ = "0.1.0"
