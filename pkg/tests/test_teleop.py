"""Teleoperation service: sessions, ticking, recording, lifecycle."""

import json
import time

import numpy as np
import pytest
from fastapi.testclient import TestClient

from counterbc import teleop, trainer
from counterbc.dataset import load_jsonl
from counterbc.envs import make_env


@pytest.fixture()
def client(tmp_path):
    app = teleop.create_app(tmp_path, pause_timeout_s=0.25)
    with TestClient(app) as c:
        c.data_dir = tmp_path
        yield c


def _open(client, env="cartpole", tick_ms=5, seed=1):
    r = client.post("/session", json={"env": env, "tick_ms": tick_ms, "seed": seed})
    assert r.status_code == 200, r.text
    return r.json()


def _recv(ws):
    return json.loads(ws.receive_text())


def _collect_until(ws, msg_type, limit=500):
    """All messages up to and including the first of the given type."""
    msgs = []
    for _ in range(limit):
        msgs.append(_recv(ws))
        if msgs[-1]["type"] == msg_type:
            return msgs
    raise AssertionError(f"no {msg_type!r} message within {limit} reads")


# ---------------------------------------------------------------- HTTP surface


def test_open_session_returns_env_metadata(client):
    meta = _open(client, "cartpole")
    assert meta["state_dim"] == 4
    assert meta["action_dim"] == 1
    assert meta["action_low"] == [-1.0]
    assert meta["action_high"] == [1.0]
    assert meta["tick_ms"] == 5
    assert "cart_x" in meta["render_keys"]


def test_unknown_env_is_404(client):
    r = client.post("/session", json={"env": "lunar_lander"})
    assert r.status_code == 404


def test_absval_not_teleoperable(client):
    r = client.post("/session", json={"env": "absval"})
    assert r.status_code == 400
    assert "dynamics" in r.json()["detail"]


def test_bad_tick_rejected(client):
    assert client.post(
        "/session", json={"env": "cartpole", "tick_ms": 0}
    ).status_code == 400
    assert client.post(
        "/session", json={"env": "cartpole", "tick_ms": 2.5}
    ).status_code == 400


def test_sessions_are_distinct(client):
    a = _open(client)
    b = _open(client)
    assert a["session_id"] != b["session_id"]


def test_info_and_delete(client):
    sid = _open(client)["session_id"]
    info = client.get(f"/session/{sid}").json()
    assert info["status"] == "idle" and info["pairs"] == 0
    assert client.delete(f"/session/{sid}").status_code == 200
    assert client.get(f"/session/{sid}").status_code == 404
    assert client.delete(f"/session/{sid}").status_code == 404


# ---------------------------------------------------------------- recording


def test_constant_action_stream_records_that_constant(client):
    sid = _open(client, "cartpole")["session_id"]
    with client.websocket_connect(f"/session/{sid}/stream") as ws:
        ws.send_text(json.dumps({"type": "action", "a": [0.6]}))
        for _ in range(6):
            msg = _recv(ws)
            assert msg["type"] == "state"
            assert msg["pairs"] > 0
        ws.send_text(json.dumps({"type": "finish"}))
        msgs = _collect_until(ws, "saved")
    saved = msgs[-1]
    states_seen = sum(m["type"] == "state" for m in msgs) + 6
    assert saved["pairs"] == states_seen

    ds = load_jsonl(saved["path"])
    assert len(ds) == saved["pairs"]
    assert np.all(ds.actions == 0.6)
    assert ds.provenance["env"] == "cartpole"
    assert ds.provenance["session"] == sid
    assert ds.provenance["tick_ms"] == 5
    assert ds.provenance["episode_starts"] == [0]


def test_zero_hold_before_first_action(client):
    sid = _open(client, "cartpole")["session_id"]
    with client.websocket_connect(f"/session/{sid}/stream") as ws:
        for _ in range(4):
            _recv(ws)
        ws.send_text(json.dumps({"type": "finish"}))
        saved = _collect_until(ws, "saved")[-1]
    ds = load_jsonl(saved["path"])
    assert np.all(ds.actions == 0.0)


def test_out_of_range_action_recorded_clipped(client):
    sid = _open(client, "cartpole")["session_id"]
    with client.websocket_connect(f"/session/{sid}/stream") as ws:
        ws.send_text(json.dumps({"type": "action", "a": [5.0]}))
        for _ in range(4):
            _recv(ws)
        ws.send_text(json.dumps({"type": "finish"}))
        saved = _collect_until(ws, "saved")[-1]
    ds = load_jsonl(saved["path"])
    # the executed (post-clip) action is stored, never the wire value
    assert np.all(ds.actions == 1.0)


def test_recorded_states_are_prestep(client):
    meta = _open(client, "cartpole", seed=11)
    sid = meta["session_id"]
    with client.websocket_connect(f"/session/{sid}/stream") as ws:
        first = _recv(ws)
        ws.send_text(json.dumps({"type": "finish"}))
        saved = _collect_until(ws, "saved")[-1]
    ds = load_jsonl(saved["path"])
    # replay: the first recorded state must reproduce the first streamed
    # post-step state under the same held zero action
    env = make_env("cartpole")
    env._state = ds.states[0].copy()
    stepped = env.step(np.zeros(1)).state
    np.testing.assert_allclose(stepped, np.array(first["s"]), atol=1e-12)


# ---------------------------------------------------------------- episodes


def test_terminal_auto_resets_and_marks_episodes(client):
    sid = _open(client, "intersection", tick_ms=2)["session_id"]
    with client.websocket_connect(f"/session/{sid}/stream") as ws:
        # drive straight at the goal: terminal within ~20 ticks per episode
        ws.send_text(json.dumps({"type": "action", "a": [0.0, 1.0]}))
        msgs = []
        terminals = 0
        while terminals < 2:
            m = _recv(ws)
            if m["type"] != "state":
                continue
            msgs.append(m)
            terminals += m["terminal"]
        ws.send_text(json.dumps({"type": "finish"}))
        tail = _collect_until(ws, "saved")
    saved = tail[-1]
    all_states = msgs + [m for m in tail if m["type"] == "state"]
    assert saved["pairs"] == len(all_states)

    # episode counter visible on the wire: increments right after a terminal
    first_terminal_idx = next(i for i, m in enumerate(msgs) if m["terminal"])
    assert msgs[first_terminal_idx]["episode"] == 0
    assert msgs[first_terminal_idx + 1]["episode"] == 1

    ds = load_jsonl(saved["path"])
    starts = ds.provenance["episode_starts"]
    assert starts[0] == 0
    assert starts[1] == first_terminal_idx + 1
    assert len(starts) >= 2


def test_manual_reset_records_boundary(client):
    sid = _open(client, "cartpole")["session_id"]
    with client.websocket_connect(f"/session/{sid}/stream") as ws:
        for _ in range(3):
            _recv(ws)
        ws.send_text(json.dumps({"type": "reset"}))
        msgs = _collect_until(ws, "state")  # at least one tick after reset
        for _ in range(2):
            _recv(ws)
        ws.send_text(json.dumps({"type": "finish"}))
        saved = _collect_until(ws, "saved")[-1]
    ds = load_jsonl(saved["path"])
    starts = ds.provenance["episode_starts"]
    assert starts[0] == 0 and len(starts) == 2
    # the boundary falls at 3 pairs plus however many ticks raced the reset
    assert starts[1] >= 3
    assert ds.provenance["episode_starts"][-1] < len(ds)


# ---------------------------------------------------------------- protocol errors


def test_bad_messages_get_error_replies(client):
    sid = _open(client, "cartpole", tick_ms=50)["session_id"]
    with client.websocket_connect(f"/session/{sid}/stream") as ws:
        ws.send_text("this is not json")
        assert _collect_until(ws, "error")[-1]["message"] == "invalid JSON"
        ws.send_text(json.dumps({"type": "action", "a": [1.0, 2.0]}))
        assert "1 numbers" in _collect_until(ws, "error")[-1]["message"]
        ws.send_text(json.dumps({"type": "action", "a": ["x"]}))
        assert "numbers" in _collect_until(ws, "error")[-1]["message"]
        ws.send_text(json.dumps({"type": "action", "a": [float("inf")]}))
        # json.dumps writes Infinity which round-trips via parse; reject it
        assert "finite" in _collect_until(ws, "error")[-1]["message"]
        ws.send_text(json.dumps({"type": "warp"}))
        assert "unknown message type" in _collect_until(ws, "error")[-1]["message"]
        ws.send_text(json.dumps({"no": "type"}))
        assert "type" in _collect_until(ws, "error")[-1]["message"]


def test_finish_with_empty_buffer_is_error(client):
    sid = _open(client, "cartpole", tick_ms=1000)["session_id"]
    with client.websocket_connect(f"/session/{sid}/stream") as ws:
        ws.send_text(json.dumps({"type": "finish"}))
        err = _collect_until(ws, "error")[-1]
        assert "nothing recorded" in err["message"]
    # nothing was written
    assert not list(client.data_dir.glob("*.jsonl"))


def test_unknown_session_stream_rejected(client):
    with client.websocket_connect("/session/deadbeef/stream") as ws:
        assert _recv(ws)["message"] == "unknown session"


def test_finished_session_cannot_restream(client):
    sid = _open(client)["session_id"]
    with client.websocket_connect(f"/session/{sid}/stream") as ws:
        _recv(ws)
        ws.send_text(json.dumps({"type": "finish"}))
        _collect_until(ws, "saved")
    with client.websocket_connect(f"/session/{sid}/stream") as ws:
        assert "already finished" in _recv(ws)["message"]


def test_concurrent_stream_rejected(client):
    sid = _open(client, tick_ms=20)["session_id"]
    with client.websocket_connect(f"/session/{sid}/stream") as first:
        with client.websocket_connect(f"/session/{sid}/stream") as second:
            assert "already streaming" in _recv(second)["message"]
        _recv(first)  # first stream still alive and ticking


# ---------------------------------------------------------------- pause lifecycle


def test_disconnect_pauses_then_discards(client):
    sid = _open(client)["session_id"]
    with client.websocket_connect(f"/session/{sid}/stream") as ws:
        _recv(ws)
    # closed without finishing: paused, then discarded after the timeout
    info = client.get(f"/session/{sid}")
    assert info.status_code == 200 and info.json()["status"] == "paused"
    time.sleep(0.6)
    assert client.get(f"/session/{sid}").status_code == 404


def test_reconnect_resumes_with_buffer_intact(client):
    sid = _open(client)["session_id"]
    with client.websocket_connect(f"/session/{sid}/stream") as ws:
        first_batch = [_recv(ws) for _ in range(3)]
    assert client.get(f"/session/{sid}").json()["status"] == "paused"
    with client.websocket_connect(f"/session/{sid}/stream") as ws:
        m = _recv(ws)
        assert m["pairs"] > first_batch[-1]["pairs"]
        ws.send_text(json.dumps({"type": "finish"}))
        saved = _collect_until(ws, "saved")[-1]
    ds = load_jsonl(saved["path"])
    assert len(ds) == saved["pairs"] >= 4
    # survived past the pause timeout because it resumed
    time.sleep(0.4)
    assert client.get(f"/session/{sid}").json()["status"] == "finished"


def test_sessions_are_isolated(client):
    sid_a = _open(client, "cartpole")["session_id"]
    sid_b = _open(client, "cartpole")["session_id"]
    with client.websocket_connect(f"/session/{sid_a}/stream") as wa:
        with client.websocket_connect(f"/session/{sid_b}/stream") as wb:
            wa.send_text(json.dumps({"type": "action", "a": [0.9]}))
            for _ in range(3):
                _recv(wa)
                _recv(wb)
            wa.send_text(json.dumps({"type": "finish"}))
            wb.send_text(json.dumps({"type": "finish"}))
            saved_a = _collect_until(wa, "saved")[-1]
            saved_b = _collect_until(wb, "saved")[-1]
    ds_a = load_jsonl(saved_a["path"])
    ds_b = load_jsonl(saved_b["path"])
    assert np.all(ds_a.actions == 0.9)
    assert np.all(ds_b.actions == 0.0)


# ---------------------------------------------------------------- artifacts


def test_dataset_download_endpoint(client):
    sid = _open(client)["session_id"]
    assert client.get(f"/session/{sid}/dataset").status_code == 404
    with client.websocket_connect(f"/session/{sid}/stream") as ws:
        for _ in range(3):
            _recv(ws)
        ws.send_text(json.dumps({"type": "finish"}))
        saved = _collect_until(ws, "saved")[-1]
    r = client.get(f"/session/{sid}/dataset")
    assert r.status_code == 200
    assert r.content == open(saved["path"], "rb").read()


def test_saved_dataset_is_trainable(client):
    sid = _open(client, "cartpole")["session_id"]
    with client.websocket_connect(f"/session/{sid}/stream") as ws:
        ws.send_text(json.dumps({"type": "action", "a": [0.3]}))
        for _ in range(8):
            _recv(ws)
        ws.send_text(json.dumps({"type": "finish"}))
        saved = _collect_until(ws, "saved")[-1]
    ds = load_jsonl(saved["path"])
    env = make_env("cartpole")
    cfg = trainer.TrainConfig(loss="counterbc", epochs=2, hidden=4,
                              delta=0.2, m_samples=2)
    result = trainer.train(ds, env.action_spec, cfg)
    assert len(result.history) == 2


def test_static_assets_served_behind_api_routes(tmp_path):
    static = tmp_path / "ui"
    static.mkdir()
    (static / "index.html").write_text("<html>ui</html>", encoding="utf-8")
    app = teleop.create_app(tmp_path / "data", static_dir=static)
    with TestClient(app) as c:
        assert c.get("/").text == "<html>ui</html>"
        assert c.get("/index.html").status_code == 200
        # API routes keep precedence over the mount
        assert c.post("/session", json={"env": "cartpole"}).status_code == 200


def test_missing_static_dir_rejected(tmp_path):
    with pytest.raises(ValueError):
        teleop.create_app(tmp_path / "data", static_dir=tmp_path / "nope")
