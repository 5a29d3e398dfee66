"""HTTP sidecar serving NLI scoring and text generation over real checkpoints."""

from .app import build_app
from .config import SidecarConfig

__all__ = ["SidecarConfig", "build_app"]
