"""Resolution-independent enhanced bottom drag for tidal turbines in shallow water models."""
from . import correction, errors, lmadt, mesh

__version__ = "0.1.0"
