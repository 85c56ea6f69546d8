"""Service layer: pydantic schemas, shared handlers, FastAPI app."""

from .app import app, create_app
from .handlers import (
    handle_bench,
    handle_fit_ols,
    handle_fit_robust,
    handle_generate,
    handle_gexp,
    handle_sp500,
)

__all__ = [
    "app",
    "create_app",
    "handle_bench",
    "handle_fit_ols",
    "handle_fit_robust",
    "handle_generate",
    "handle_gexp",
    "handle_sp500",
]
