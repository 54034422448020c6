from .encoders import DummyEncoder, EncoderUnavailableError, get_encoder
from .export import export_features
from .preprocess import preprocess_acdc

__version__ = "0.1.0"

__all__ = [
    "DummyEncoder",
    "EncoderUnavailableError",
    "get_encoder",
    "export_features",
    "preprocess_acdc",
    "__version__",
]
