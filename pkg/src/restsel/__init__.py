"""Linear regression under linear equality restrictions, with information-criterion model selection."""

__version__ = "0.1.0"

from .core import *  # noqa: E402,F401,F403
from .criteria import *  # noqa: E402,F401,F403
from .errors import *  # noqa: E402,F401,F403
from .selection import *  # noqa: E402,F401,F403
from . import core, criteria, errors, selection  # noqa: E402

__all__ = ["__version__"] + core.__all__ + criteria.__all__ + selection.__all__ + errors.__all__
