"""HTTP surface over the job handlers.

Error contract: bad requests and unreadable inputs return 400 with
``{"error_type": "input"}``; numerical failures inside a job return 500
with ``{"error_type": "numerical"}``. Clients map these to exit codes 1
and 2 respectively.
"""

from __future__ import annotations

import logging

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__
from ..errors import InputError, NumericalError
from . import handlers, models

logger = logging.getLogger(__name__)


def create_app() -> FastAPI:
    app = FastAPI(title="pyramvs", version=__version__)

    @app.exception_handler(InputError)
    async def input_error(request: Request, exc: InputError) -> JSONResponse:
        return JSONResponse(
            status_code=400,
            content=models.ErrorPayload(error_type="input", message=str(exc)).model_dump(),
        )

    @app.exception_handler(OSError)
    async def os_error(request: Request, exc: OSError) -> JSONResponse:
        return JSONResponse(
            status_code=400,
            content=models.ErrorPayload(error_type="input", message=str(exc)).model_dump(),
        )

    @app.exception_handler(NumericalError)
    async def numerical_error(request: Request, exc: NumericalError) -> JSONResponse:
        logger.error("numerical failure: %s", exc)
        return JSONResponse(
            status_code=500,
            content=models.ErrorPayload(error_type="numerical", message=str(exc)).model_dump(),
        )

    @app.get("/health")
    def health() -> models.HealthResponse:
        return handlers.health()

    @app.post("/depth")
    def depth(req: models.DepthRequest) -> models.DepthResponse:
        return handlers.depth(req)

    @app.post("/synth")
    def synth(req: models.SynthRequest) -> models.SynthResponse:
        return handlers.synth(req)

    @app.post("/fuse")
    def fuse(req: models.FuseRequest) -> models.FuseResponse:
        return handlers.fuse_job(req)

    @app.post("/eval/depth")
    def eval_depth(req: models.EvalDepthRequest) -> models.EvalDepthResponse:
        return handlers.eval_depth_job(req)

    @app.post("/eval/cloud")
    def eval_cloud(req: models.EvalCloudRequest) -> models.EvalCloudResponse:
        return handlers.eval_cloud_job(req)

    @app.post("/losscheck")
    def losscheck(req: models.LosscheckRequest) -> models.LosscheckResponse:
        return handlers.losscheck_job(req)

    @app.post("/calibrate-interval")
    def calibrate(req: models.CalibrateRequest) -> models.CalibrateResponse:
        return handlers.calibrate_job(req)

    @app.post("/ablate")
    def ablate(req: models.AblateRequest) -> models.AblateResponse:
        return handlers.ablate_job(req)

    return app
