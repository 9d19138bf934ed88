"""HTTP service around the online learner and the experiment runner."""
from .app import app, create_app

__all__ = ["app", "create_app"]
