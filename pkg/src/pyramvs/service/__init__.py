"""Service surface: pydantic job models, handlers, and the FastAPI app.

The command line and the HTTP service share one contract: every job is a
request model in, a response model out. `handlers` runs jobs in-process;
`app.create_app` exposes the same handlers over HTTP.
"""

from .app import create_app
from .models import (
    AblateRequest,
    AblateResponse,
    CalibrateRequest,
    CalibrateResponse,
    DepthRequest,
    DepthResponse,
    EvalCloudRequest,
    EvalCloudResponse,
    EvalDepthRequest,
    EvalDepthResponse,
    FuseRequest,
    FuseResponse,
    LosscheckRequest,
    LosscheckResponse,
    SynthRequest,
    SynthResponse,
)

__all__ = [
    "AblateRequest",
    "AblateResponse",
    "CalibrateRequest",
    "CalibrateResponse",
    "DepthRequest",
    "DepthResponse",
    "EvalCloudRequest",
    "EvalCloudResponse",
    "EvalDepthRequest",
    "EvalDepthResponse",
    "FuseRequest",
    "FuseResponse",
    "LosscheckRequest",
    "LosscheckResponse",
    "SynthRequest",
    "SynthResponse",
    "create_app",
]
