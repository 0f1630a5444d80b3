from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from starlette.concurrency import run_in_threadpool

from monitor.api import ApiRequest, MonitorApi


def create_monitor_app(api: MonitorApi) -> FastAPI:
    """Mount the monitor router on every path under /~/ (and bare paths)."""
    app = FastAPI(title="CityOps monitor", docs_url=None, redoc_url=None)

    @app.api_route("/{path:path}", methods=["GET", "POST", "PUT", "DELETE"])
    async def handle(path: str, request: Request):
        uri = request.url.path
        if request.url.query:
            uri = f"{uri}?{request.url.query}"
        body = await request.body() if request.method in ("POST", "PUT") else None
        response = await run_in_threadpool(api.handle, ApiRequest(
            method=request.method,
            uri=uri,
            headers=dict(request.headers),
            body=body,
        ))
        return JSONResponse(status_code=response.status, content=response.body)

    return app
