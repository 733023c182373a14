"""Fine-tunable encoder classifier serving plausibility scores over HTTP."""

from .app import create_app
from .config import ServiceConfig
from .model import NeuralScorer

__version__ = "0.1.0"
