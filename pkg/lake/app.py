from typing import Iterable, Optional

from fastapi import FastAPI, Query, Request
from fastapi.responses import JSONResponse
from starlette.concurrency import run_in_threadpool

from lake.errors import LakeError
from lake.intake import LakeIntake


def create_lake_app(intake: LakeIntake, allowlist: Iterable[str]) -> FastAPI:
    """Notification intake (allowlisted to the monitor host) plus read-only queries."""
    app = FastAPI(title="CityOps lake", docs_url=None, redoc_url=None)
    allowed = set(allowlist)

    @app.exception_handler(LakeError)
    async def lake_error(request: Request, exc: LakeError):
        return JSONResponse(status_code=exc.status, content={"error": type(exc).__name__, "detail": exc.message})

    @app.post("/notify")
    async def notify(request: Request):
        host = request.client.host if request.client else ""
        if host not in allowed:
            return JSONResponse(status_code=403, content={"error": "Forbidden", "detail": f"{host} may not insert data"})
        try:
            body = await request.json()
        except ValueError:
            return JSONResponse(status_code=400, content={"error": "BadEnvelope", "detail": "Body is not valid JSON"})
        return intake.receive(body)

    @app.get("/health")
    async def health():
        return {"status": "ok", "stats": dict(intake.lake.stats), "intake": dict(intake.stats)}

    @app.get("/tenants/{tenant}/nodes/{node_id}/data")
    async def temporal(tenant: str, node_id: str, start: int, end: int, attrs: Optional[str] = Query(None)):
        projection = [a for a in attrs.split(",") if a] if attrs else None
        rows = await run_in_threadpool(intake.lake.query_temporal, tenant, node_id, start, end, projection)
        return {"tenant": tenant, "node": node_id, "rows": rows}

    @app.get("/dead-letters")
    async def dead_letters():
        return {"records": intake.dead_letter_records()}

    return app
