"""HTTP front end: one POST route per operation, JSON in, JSON out.

Endpoints run the same handlers as the CLI. Library errors map to 422
responses whose body names the exception type, so clients can distinguish
a bad request shape (FastAPI's own validation) from a request that parsed
but names an impossible computation.
"""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__
from ..core import UncregError
from . import handlers, schemas


def create_app() -> FastAPI:
    app = FastAPI(
        title="uncreg",
        version=__version__,
        description=(
            "Linear regression under mean and variance uncertainty: "
            "moving-block robust estimation, variance-band expectations, "
            "seeded generators, and a benchmark harness."
        ),
    )

    @app.exception_handler(UncregError)
    async def _domain_error(request: Request, exc: UncregError) -> JSONResponse:
        return JSONResponse(
            status_code=422,
            content={"error": type(exc).__name__, "detail": str(exc)},
        )

    @app.get("/healthz")
    def healthz() -> dict:
        return {"status": "ok", "version": __version__}

    @app.post("/fit/ols", response_model=schemas.FitOlsResponse)
    def fit_ols(req: schemas.FitOlsRequest) -> schemas.FitOlsResponse:
        return handlers.handle_fit_ols(req)

    @app.post("/fit/robust", response_model=schemas.FitRobustResponse)
    def fit_robust(req: schemas.FitRobustRequest) -> schemas.FitRobustResponse:
        return handlers.handle_fit_robust(req)

    @app.post("/generate", response_model=schemas.GenerateResponse)
    def generate(req: schemas.GenerateRequest) -> schemas.GenerateResponse:
        return handlers.handle_generate(req)

    @app.post("/gexp", response_model=schemas.GexpResponse)
    def gexp(req: schemas.GexpRequest) -> schemas.GexpResponse:
        return handlers.handle_gexp(req)

    @app.post("/bench", response_model=schemas.BenchResponse)
    def bench(req: schemas.BenchRequest) -> schemas.BenchResponse:
        return handlers.handle_bench(req)

    @app.post("/sp500", response_model=schemas.Sp500Response)
    def sp500(req: schemas.Sp500Request) -> schemas.Sp500Response:
        return handlers.handle_sp500(req)

    return app


app = create_app()
