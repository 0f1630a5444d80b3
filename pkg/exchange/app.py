from typing import Optional

from fastapi import FastAPI, Header, Query, Request
from fastapi.middleware.gzip import GZipMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel
from starlette.concurrency import run_in_threadpool

from exchange.catalogue import Catalogue
from exchange.errors import ExchangeError, Unauthenticated
from exchange.resource_server import ResourceServer
from exchange.tokens import CONSUMER, TokenService
from utils.logging_setup import get_logger

logger = get_logger("ExchangeApp")


class TokenRequest(BaseModel):
    itemId: str
    itemType: str
    role: str = CONSUMER


class ConsumerRequest(BaseModel):
    userId: str


class RevokeRequest(BaseModel):
    request: str


class GrantRequest(BaseModel):
    userId: str
    groupId: str


def _token(token: Optional[str], authorization: Optional[str]) -> Optional[str]:
    if token:
        return token
    if authorization and authorization.lower().startswith("bearer "):
        return authorization[7:].strip()
    return None


def create_exchange_app(
    server: ResourceServer, tokens: TokenService, catalogue: Catalogue, gzip: bool = False,
) -> FastAPI:
    app = FastAPI(title="CityOps exchange", docs_url=None, redoc_url=None)
    if gzip:
        app.add_middleware(GZipMiddleware, minimum_size=500)

    @app.exception_handler(ExchangeError)
    async def exchange_error(request: Request, exc: ExchangeError):
        logger.info(f"[ExchangeApp] REJECT | path={request.url.path} | status={exc.status} | reason={exc.message}")
        return JSONResponse(status_code=exc.status, content=exc.body())

    @app.get("/entities/latest")
    async def latest(id: str, token: Optional[str] = Header(None), authorization: Optional[str] = Header(None)):
        return await run_in_threadpool(server.latest, _token(token, authorization), id)

    @app.get("/meta")
    async def meta(id: str, token: Optional[str] = Header(None), authorization: Optional[str] = Header(None)):
        return await run_in_threadpool(server.metadata, _token(token, authorization), id)

    @app.get("/temporal/entities")
    async def temporal(
        id: str,
        timerel: str,
        time: str,
        endTime: Optional[str] = None,
        attrs: Optional[str] = None,
        q: Optional[str] = None,
        offset: int = Query(0),
        token: Optional[str] = Header(None),
        authorization: Optional[str] = Header(None),
    ):
        projection = attrs.split(",") if attrs else None
        return await run_in_threadpool(
            server.temporal, _token(token, authorization), id, timerel, time, endTime, projection, q, offset,
        )

    @app.post("/revoke")
    async def revoke(body: RevokeRequest):
        return await run_in_threadpool(server.revoke, body.request)

    @app.post("/consumers")
    async def register(body: ConsumerRequest):
        tokens.register(body.userId)
        return {"type": "urn:dx:as:Success", "title": "Registered", "results": [{"userId": body.userId}]}

    @app.post("/grants")
    async def grant(body: GrantRequest):
        tokens.grant(body.userId, body.groupId)
        return {"type": "urn:dx:as:Success", "title": "Policy created", "results": [{"userId": body.userId, "groupId": body.groupId}]}

    @app.post("/token")
    async def token(body: TokenRequest, user: Optional[str] = Header(None, alias="x-consumer-id")):
        if not user:
            raise Unauthenticated("Token requests need the x-consumer-id header")
        signed = tokens.issue(user, body.itemId, body.itemType, body.role)
        return {"type": "urn:dx:as:Success", "title": "Token created", "results": {"accessToken": signed}}

    @app.get("/catalogue")
    async def lookup(id: Optional[str] = None):
        if id is None:
            return {"type": "urn:dx:cat:Success", "results": catalogue.groups()}
        return {"type": "urn:dx:cat:Success", "results": [catalogue.lookup(id)]}

    return app
