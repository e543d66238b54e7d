"""Data generation, discrepancy metrics and Monte Carlo experiments."""

from .design import *  # noqa: F401,F403
from .experiment import *  # noqa: F401,F403
from .metrics import *  # noqa: F401,F403
from .optimism import *  # noqa: F401,F403
from .wilcoxon import *  # noqa: F401,F403
from . import design, experiment, metrics, optimism, wilcoxon

__all__ = design.__all__ + experiment.__all__ + metrics.__all__ + optimism.__all__ + wilcoxon.__all__
