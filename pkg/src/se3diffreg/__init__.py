"""SE(3) diffusion-based rigid point-cloud registration."""

__version__ = "0.1.0"

from .errors import *  # noqa: E402,F401,F403
from .lie import RigidTransform  # noqa: E402,F401
