"""HTTP layer: FastAPI application and its request/response schemas."""

from .app import API_VERSION, app, create_app

__all__ = ["API_VERSION", "app", "create_app"]
