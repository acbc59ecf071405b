"""Service endpoints and push channel, in-process and over HTTP."""

from __future__ import annotations

import json
from datetime import timedelta

import pytest
from fastapi.testclient import TestClient

from commitchat import core
from commitchat.clock import VirtualClock
from commitchat.core import Condition, MessageKind, ReactionKind
from commitchat.server import create_app
from commitchat.service import ChatService, build_service
from commitchat.store import GroupStore

from helpers import EPOCH, make_config

H = timedelta(hours=1)


@pytest.fixture()
def service(tmp_path):
    svc = build_service(tmp_path / "logs", virtual_start=EPOCH)
    svc.create_group(make_config(group_id="g1", name="reading-circle"))
    return svc


def join_all(svc, members=("a", "b", "c")):
    return {m: svc.join_group("g1", m, m.upper()) for m in members}


class TestFeedGating:
    def test_committed_member_sees_full_history(self, service):
        sessions = join_all(service)
        service.do_commit(sessions["a"].token)
        service.do_commit(sessions["b"].token)
        service.send_message(sessions["a"].token, "first")
        service.advance_to(EPOCH + H)
        feed = service.get_feed(sessions["b"].token, since_seq=0)
        assert feed["kind"] == "messages"
        assert [m["body"] for m in feed["messages"]] == ["first"]

    def test_lapsed_member_gets_obscured_view(self, service):
        sessions = join_all(service)
        service.do_commit(sessions["a"].token, 0)
        service.do_commit(sessions["b"].token, 0)
        service.send_message(sessions["a"].token, "secret")
        service.advance_to(EPOCH + 49 * H)  # cycle 1, nobody recommitted
        service.do_commit(sessions["a"].token, 1)
        feed = service.get_feed(sessions["b"].token)
        assert feed == {"kind": "obscured", "group_name": "reading-circle",
                        "committed_member_count": 1}

    def test_control_member_always_reads(self, tmp_path):
        svc = build_service(tmp_path / "logs", virtual_start=EPOCH)
        svc.create_group(make_config(group_id="g1", condition=Condition.CONTROL))
        s = svc.join_group("g1", "solo")
        svc.send_message(s.token, "hello")
        svc.advance_to(EPOCH + timedelta(days=12))
        feed = svc.get_feed(s.token)
        assert feed["kind"] == "messages" and len(feed["messages"]) == 1

    def test_feed_request_straddling_lapse_rechecks(self, service):
        sessions = join_all(service)
        service.do_commit(sessions["a"].token, 0)
        assert service.get_feed(sessions["a"].token)["kind"] == "messages"
        service.advance_to(EPOCH + 50 * H)
        assert service.get_feed(sessions["a"].token)["kind"] == "obscured"

    def test_mid_cycle_commit_restores_history(self, service):
        sessions = join_all(service)
        service.do_commit(sessions["a"].token, 0)
        service.send_message(sessions["a"].token, "early content")
        service.advance_to(EPOCH + 60 * H)
        assert service.get_feed(sessions["b"].token)["kind"] == "obscured"
        service.do_commit(sessions["b"].token)
        feed = service.get_feed(sessions["b"].token)
        assert [m["body"] for m in feed["messages"]] == ["early content"]


class TestCommitEndpoint:
    def test_duplicate_commit_is_idempotent(self, service):
        sessions = join_all(service)
        first = service.do_commit(sessions["a"].token, 0)
        again = service.do_commit(sessions["a"].token, 0)
        assert again == first

    def test_default_target_picks_next_uncommitted(self, service):
        sessions = join_all(service)
        assert service.do_commit(sessions["a"].token)["cycle"] == 0
        assert service.do_commit(sessions["a"].token)["cycle"] == 1

    def test_ahead_limit_enforced(self, service):
        sessions = join_all(service)
        with pytest.raises(core.RejectAheadLimit):
            service.do_commit(sessions["a"].token, 2)


class TestReactions:
    def test_commit_reaction_commits_next_cycle(self, service):
        sessions = join_all(service)
        service.do_commit(sessions["a"].token, 0)
        service.do_commit(sessions["b"].token, 0)
        msg = service.send_message(sessions["a"].token, "react to me")
        result = service.send_reaction(sessions["b"].token, msg["message_id"],
                                       ReactionKind.COMMIT_REACTION)
        assert result["commitment"]["cycle"] == 1
        assert result["commitment"]["via"] == "REACTION"

    def test_commit_reaction_degrades_when_window_full(self, service):
        sessions = join_all(service)
        service.do_commit(sessions["a"].token, 0)
        service.do_commit(sessions["b"].token, 0)
        service.do_commit(sessions["b"].token, 1)
        msg = service.send_message(sessions["a"].token, "react to me")
        result = service.send_reaction(sessions["b"].token, msg["message_id"],
                                       ReactionKind.COMMIT_REACTION)
        assert result["commitment"] is None


class TestPushChannel:
    def test_committed_subscriber_receives_body(self, service):
        sessions = join_all(service)
        service.do_commit(sessions["a"].token, 0)
        service.do_commit(sessions["b"].token, 0)
        got = []
        service.subscribe(sessions["b"].token, got.append)
        service.send_message(sessions["a"].token, "visible text")
        msgs = [e for e in got if e["type"] == "message"]
        assert msgs[0]["record"]["payload"]["body"] == "visible text"
        assert msgs[0]["content_visible"] is True

    def test_lapsed_subscriber_gets_marker_without_body(self, service):
        sessions = join_all(service)
        service.do_commit(sessions["a"].token, 0)
        got = []
        service.subscribe(sessions["b"].token, got.append)
        service.send_message(sessions["a"].token, "hidden text")
        msgs = [e for e in got if e["type"] == "message"]
        assert msgs[0]["content_visible"] is False
        assert msgs[0]["record"]["payload"]["body"] is None
        assert msgs[0]["record"]["payload"]["sender_id"] == "a"
        assert "hidden text" not in json.dumps(msgs)

    def test_cycle_boundary_reaches_all_subscribers(self, service):
        sessions = join_all(service)
        inboxes = {m: [] for m in sessions}
        for m, s in sessions.items():
            service.subscribe(s.token, inboxes[m].append)
        service.advance_to(EPOCH + 49 * H)
        for events in inboxes.values():
            assert {"type": "cycle_started", "cycle": 1,
                    "at": "2024-01-03T00:00:00.000Z"} in events

    def test_banner_change_pushed_on_urgency_crossing(self, service):
        sessions = join_all(service)
        service.do_commit(sessions["a"].token, 0)
        got = []
        service.subscribe(sessions["a"].token, got.append)
        service.advance_to(EPOCH + 37 * H)
        banners = [e for e in got if e["type"] == "banner"]
        assert banners[-1]["banner"]["kind"] == "COMMITTED_UNFULFILLED_URGENT"

    def test_notification_pushed_to_its_member_only(self, service):
        sessions = join_all(service)
        service.do_commit(sessions["a"].token, 0)
        inbox_a, inbox_b = [], []
        service.subscribe(sessions["a"].token, inbox_a.append)
        service.subscribe(sessions["b"].token, inbox_b.append)
        service.advance_to(EPOCH + 37 * H)  # unfulfilled reminder at 36h
        a_rules = [e["record"]["payload"]["rule_id"]
                   for e in inbox_a if e["type"] == "notification"]
        b_rules = [e["record"]["payload"]["rule_id"]
                   for e in inbox_b if e["type"] == "notification"]
        assert "commit_ending_unfulfilled" in a_rules
        assert b_rules == []


class TestLogEquivalence:
    def test_replay_matches_live_state_after_requests(self, service):
        sessions = join_all(service)
        service.do_commit(sessions["a"].token, 0)
        service.do_commit(sessions["b"].token, 0)
        service.send_message(sessions["a"].token, "one")
        service.advance_to(EPOCH + 37 * H)
        msg = service.send_message(sessions["b"].token, "two")
        service.send_reaction(sessions["a"].token, msg["message_id"],
                              ReactionKind.EMOJI, emoji="like")
        service.advance_to(EPOCH + 60 * H)
        rt = service.runtimes["g1"]
        assert rt.log.replay() == rt.log.state

    def test_restart_resumes_without_duplicate_notifications(self, tmp_path):
        svc = build_service(tmp_path / "logs", virtual_start=EPOCH)
        svc.create_group(make_config(group_id="g1"))
        s = svc.join_group("g1", "a")
        svc.do_commit(s.token, 0)
        svc.advance_to(EPOCH + 37 * H)
        count = len(svc.runtimes["g1"].log.state.notifications)
        assert count >= 1

        resumed = ChatService(GroupStore(tmp_path / "logs"), VirtualClock(EPOCH + 37 * H))
        resumed.advance_to(EPOCH + 38 * H)
        assert len(resumed.runtimes["g1"].log.state.notifications) == count


class TestHttpSurface:
    @pytest.fixture()
    def client(self, service):
        return TestClient(create_app(service))

    def test_join_and_feed_roundtrip(self, client):
        token = client.post("/groups/g1/join",
                            json={"member_id": "a", "display_name": "A"}).json()["token"]
        r = client.post("/groups/g1/commit", json={"token": token})
        assert r.status_code == 200 and r.json()["cycle"] == 0
        r = client.post("/groups/g1/messages", json={"token": token, "body": "hello"})
        assert r.status_code == 200
        feed = client.get("/groups/g1/feed", params={"token": token}).json()
        assert feed["kind"] == "messages" and feed["messages"][0]["body"] == "hello"

    def test_uncommitted_post_maps_to_403_with_code(self, client):
        token = client.post("/groups/g1/join", json={"member_id": "a"}).json()["token"]
        r = client.post("/groups/g1/messages", json={"token": token, "body": "x"})
        assert r.status_code == 403
        assert r.json()["error"] == "REJECT_NOT_COMMITTED"

    def test_invalid_token_is_401(self, client):
        r = client.get("/groups/g1/feed", params={"token": "nope"})
        assert r.status_code == 401
        assert r.json()["error"] == "INVALID_TOKEN"

    def test_members_and_banner_endpoints(self, client):
        token = client.post("/groups/g1/join", json={"member_id": "a"}).json()["token"]
        client.post("/groups/g1/commit", json={"token": token})
        members = client.get("/groups/g1/members", params={"token": token}).json()
        assert members[0]["currently_committed"] is True
        banner = client.get("/groups/g1/banner", params={"token": token}).json()
        assert banner["kind"] == "COMMITTED_UNFULFILLED"

    def test_clock_advance_and_notifications_endpoint(self, client):
        token = client.post("/groups/g1/join", json={"member_id": "a"}).json()["token"]
        client.post("/groups/g1/commit", json={"token": token})
        r = client.post("/clock/advance", json={"to": "2024-01-02T13:00:00.000Z"})
        assert r.status_code == 200
        notes = client.get("/groups/g1/notifications", params={"token": token}).json()
        assert [n["payload"]["rule_id"] for n in notes] == ["commit_ending_unfulfilled"]

    def test_group_create_validation(self, client):
        r = client.post("/groups", json={"group_id": "bad", "cycle_hours": 0})
        assert r.status_code == 422  # pydantic rejects non-positive cycle


class TestLiveStream:
    def test_stream_delivers_message_event(self, service):
        import httpx

        from live_server import run_live_server

        with run_live_server(service) as base:
            with httpx.Client(base_url=base, timeout=10.0) as http:
                token_a = http.post("/groups/g1/join",
                                    json={"member_id": "a"}).json()["token"]
                token_b = http.post("/groups/g1/join",
                                    json={"member_id": "b"}).json()["token"]
                http.post("/groups/g1/commit", json={"token": token_a})
                http.post("/groups/g1/commit", json={"token": token_b})
                with http.stream("GET", "/groups/g1/stream",
                                 params={"token": token_b}) as stream:
                    http.post("/groups/g1/messages",
                              json={"token": token_a, "body": "live"})
                    payload = None
                    for line in stream.iter_lines():
                        if line.startswith("data: "):
                            payload = json.loads(line[len("data: "):])
                            if payload["type"] == "message":
                                break
                    assert payload["record"]["payload"]["body"] == "live"
                    assert payload["content_visible"] is True
