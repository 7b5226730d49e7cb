"""Derivative-free neural solver for quasilinear elliptic PDEs driven by Brownian walkers."""
import os as _os

# Pin BLAS threads before numpy loads; DFLM_NUM_THREADS overrides the default of 1.
for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    _os.environ.setdefault(_var, _os.environ.get("DFLM_NUM_THREADS", "1"))

from .autodiff import Activation, ParamVector, Tape
from .bellman import ProblemSpec, sample_target, sample_targets
from .nets import Network, NetworkSpec
from .problems import make_problem
from .train import TrainConfig

__version__ = "0.1.0"
