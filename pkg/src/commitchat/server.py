"""HTTP surface: request/response endpoints plus a server-sent-event stream.

Thin translation layer over `ChatService`; endpoint paths and payload schemas
are documented in protocol.md. Typed core errors map onto HTTP statuses with
the error code preserved in the body.
"""

from __future__ import annotations

import json
import queue
from datetime import timedelta
from typing import Any, Optional

from fastapi import FastAPI, Query, Request
from fastapi.responses import JSONResponse, StreamingResponse
from pydantic import BaseModel, Field

from . import core
from .clock import VirtualClock
from .core import Condition, Enforcement, GroupConfig, MessageKind, ReactionKind
from .events import format_ts, parse_ts
from .service import AuthError, ChatService, UnknownGroup

_STATUS_BY_CODE = {
    "INVALID_TOKEN": 401,
    "UNKNOWN_GROUP": 404,
    "UNKNOWN_MEMBER": 404,
    "UNKNOWN_MESSAGE": 404,
    "REJECT_NOT_COMMITTED": 403,
    "REJECT_WRONG_CONDITION": 403,
    "REJECT_AHEAD_LIMIT": 403,
    "REJECT_PAST_CYCLE": 403,
    "BEFORE_GROUP_START": 400,
    "VALIDATION_ERROR": 400,
    "DUPLICATE_COMMIT": 409,
}


class CreateGroupRequest(BaseModel):
    group_id: str
    name: str = ""
    condition: str = "COMMIT"
    epoch: Optional[str] = None
    cycle_hours: float = Field(default=48, gt=0)
    expectation_count: int = 1
    commit_ahead_limit: int = 1
    null_commit_allowed: bool = False
    enforcement: str = "SOCIAL_ONLY"
    forfeit_after: Optional[int] = None
    auto_renew: bool = False
    urgency_fraction: float = 0.75
    utc_offset_minutes: int = 0
    morning_hour: int = 9


class JoinRequest(BaseModel):
    member_id: str
    display_name: str = ""


class SessionResponse(BaseModel):
    token: str
    group_id: str
    member_id: str


class CommitRequest(BaseModel):
    token: str
    target_cycle: Optional[int] = None
    null_commit: bool = False


class MessageRequest(BaseModel):
    token: str
    body: str
    kind: str = "TEXT"


class ReactionRequest(BaseModel):
    token: str
    message_id: str
    kind: str = "EMOJI"
    emoji: Optional[str] = None


class AdvanceRequest(BaseModel):
    to: str


def create_app(service: ChatService) -> FastAPI:
    app = FastAPI(title="commitchat", version="0.1.0")
    app.state.service = service

    @app.exception_handler(core.ChatError)
    async def chat_error_handler(_request: Request, exc: core.ChatError):
        status = _STATUS_BY_CODE.get(exc.code, 400)
        return JSONResponse(status_code=status,
                            content={"error": exc.code, "detail": exc.detail})

    @app.get("/groups")
    def list_groups() -> list[dict[str, Any]]:
        return service.list_groups()

    @app.post("/groups")
    def create_group(req: CreateGroupRequest) -> dict[str, Any]:
        epoch = parse_ts(req.epoch) if req.epoch else service.now()
        config = GroupConfig(
            group_id=req.group_id,
            name=req.name,
            condition=Condition(req.condition),
            epoch=epoch,
            cycle_length=timedelta(hours=req.cycle_hours),
            expectation_count=req.expectation_count,
            commit_ahead_limit=req.commit_ahead_limit,
            null_commit_allowed=req.null_commit_allowed,
            enforcement=Enforcement(req.enforcement),
            forfeit_after=req.forfeit_after,
            auto_renew=req.auto_renew,
            urgency_fraction=req.urgency_fraction,
            utc_offset_minutes=req.utc_offset_minutes,
            morning_hour=req.morning_hour,
        )
        config.validate()
        service.create_group(config)
        return {"group_id": config.group_id, "epoch": format_ts(config.epoch)}

    @app.post("/groups/{group_id}/join", response_model=SessionResponse)
    def join_group(group_id: str, req: JoinRequest) -> SessionResponse:
        session = service.join_group(group_id, req.member_id, req.display_name)
        return SessionResponse(token=session.token, group_id=session.group_id,
                               member_id=session.member_id)

    @app.get("/groups/{group_id}/feed")
    def get_feed(group_id: str, token: str = Query(...), since_seq: int = 0):
        _check_group(service, group_id, token)
        return service.get_feed(token, since_seq)

    @app.post("/groups/{group_id}/commit")
    def do_commit(group_id: str, req: CommitRequest):
        _check_group(service, group_id, req.token)
        return service.do_commit(req.token, req.target_cycle, req.null_commit)

    @app.post("/groups/{group_id}/messages")
    def send_message(group_id: str, req: MessageRequest):
        _check_group(service, group_id, req.token)
        return service.send_message(req.token, req.body, MessageKind(req.kind))

    @app.post("/groups/{group_id}/reactions")
    def send_reaction(group_id: str, req: ReactionRequest):
        _check_group(service, group_id, req.token)
        return service.send_reaction(req.token, req.message_id,
                                     ReactionKind(req.kind), req.emoji)

    @app.get("/groups/{group_id}/members")
    def get_members(group_id: str, token: str = Query(...)):
        _check_group(service, group_id, token)
        return service.get_members(token)

    @app.get("/groups/{group_id}/banner")
    def get_banner(group_id: str, token: str = Query(...)):
        _check_group(service, group_id, token)
        return service.get_banner(token)

    @app.get("/groups/{group_id}/notifications")
    def get_notifications(group_id: str, token: str = Query(...), since_seq: int = 0):
        _check_group(service, group_id, token)
        return service.get_notifications(token, since_seq)

    @app.post("/groups/{group_id}/open")
    def open_app(group_id: str, req: CommitRequest):
        _check_group(service, group_id, req.token)
        service.open_app(req.token)
        return {"ok": True}

    @app.get("/groups/{group_id}/stream")
    def stream(group_id: str, token: str = Query(...)):
        _check_group(service, group_id, token)
        events: "queue.Queue[dict[str, Any]]" = queue.Queue()
        service.subscribe(token, events.put)

        def event_source():
            try:
                while True:
                    try:
                        item = events.get(timeout=1.0)
                    except queue.Empty:
                        yield ": keepalive\n\n"
                        continue
                    yield (f"event: {item['type']}\n"
                           f"data: {json.dumps(item, ensure_ascii=False)}\n\n")
            finally:
                service.unsubscribe(token)

        return StreamingResponse(event_source(), media_type="text/event-stream")

    @app.post("/clock/advance")
    def advance_clock(req: AdvanceRequest):
        if not isinstance(service.clock, VirtualClock):
            raise core.ValidationError("clock advance requires --virtual-clock mode")
        to = parse_ts(req.to)
        delivered = service.advance_to(to)
        return {"now": format_ts(service.now()), "notifications": len(delivered)}

    @app.get("/clock")
    def get_clock():
        return {"now": format_ts(service.now()),
                "virtual": isinstance(service.clock, VirtualClock)}

    return app


def _check_group(service: ChatService, group_id: str, token: str) -> None:
    session = service.sessions.get(token)
    if session is None:
        raise AuthError("invalid session token")
    if session.group_id != group_id:
        raise UnknownGroup(f"session is not for group {group_id!r}")
