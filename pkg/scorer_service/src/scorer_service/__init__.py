"""HTTP microservice scoring (image, texts) pairs for the navigation harness."""

from .app import create_app
from .model import LITE_MODEL_NAME, LiteVisionLanguageModel, load_model

__all__ = ["create_app", "load_model", "LiteVisionLanguageModel", "LITE_MODEL_NAME"]
