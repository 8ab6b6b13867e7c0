"""FastAPI server exposing the engine behind the chat-completions wire protocol."""

from __future__ import annotations

import argparse
import logging
import os

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .engine import ShimConfig, ShimEngine, ShimError
from .schemas import (
    ChatCompletionRequest,
    ChatCompletionResponse,
    ErrorDetail,
    ErrorResponse,
    HealthResponse,
)

logger = logging.getLogger(__name__)


def create_app(engine: ShimEngine) -> FastAPI:
    app = FastAPI(title="llava-shim", version="0.1.0")

    @app.exception_handler(ShimError)
    async def protocol_error(request: Request, exc: ShimError):
        body = ErrorResponse(error=ErrorDetail(message=str(exc), type="protocol_error"))
        return JSONResponse(status_code=400, content=body.model_dump())

    @app.get("/healthz", response_model=HealthResponse)
    def healthz():
        return HealthResponse(
            status="ok",
            model=engine.config.model_path,
            device=engine.config.device,
            max_top_logprobs=engine.config.max_top_logprobs,
        )

    @app.post("/v1/chat/completions", response_model=ChatCompletionResponse,
              response_model_exclude_none=True)
    def chat_completions(payload: ChatCompletionRequest):
        return engine.generate(payload)

    return app


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="llava-shim",
        description="Serve a llava-family vision-language model with top-K logprobs.",
    )
    parser.add_argument("--model", default=os.environ.get("SHIM_MODEL"),
                        help="Local path or hub id of the model checkpoint (env: SHIM_MODEL)")
    parser.add_argument("--device", default=os.environ.get("SHIM_DEVICE", "cpu"),
                        help="torch device (env: SHIM_DEVICE)")
    parser.add_argument("--max-top-logprobs", type=int,
                        default=int(os.environ.get("SHIM_MAX_TOP_LOGPROBS", "40")))
    parser.add_argument("--host", default=os.environ.get("SHIM_HOST", "127.0.0.1"))
    parser.add_argument("--port", type=int, default=int(os.environ.get("SHIM_PORT", "8000")))
    args = parser.parse_args(argv)
    if not args.model:
        parser.error("--model (or SHIM_MODEL) is required")

    logging.basicConfig(level=logging.INFO)
    config = ShimConfig(
        model_path=args.model, device=args.device,
        max_top_logprobs=args.max_top_logprobs, host=args.host, port=args.port,
    )
    try:
        engine = ShimEngine(config)
    except RuntimeError as exc:
        logger.error("%s", exc)
        return 1

    import uvicorn

    uvicorn.run(create_app(engine), host=config.host, port=config.port)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
