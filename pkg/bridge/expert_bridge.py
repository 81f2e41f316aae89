#!/usr/bin/env python3
"""Reference external policy for the air-hockey harness wire protocol.

Speaks newline-delimited JSON over a TCP socket (``--listen HOST:PORT``) or
stdio (``--stdio``), answering each ``obs`` with exactly one ``action``.
It re-implements the in-process scripted expert with the same constants —
including its own copy of the planar forward kinematics, since the wire
observation carries only joint and puck state — so a harness driving this
process must reproduce the in-process expert's episodes exactly. That makes
the file a living document of the protocol and a template for plugging a
real learned policy into the safety layer: replace ``expert_action`` with a
model call and keep the session loop.

Protocol summary (the harness is the client and opens every exchange):
  hello {protocol_version: 1, action_dim: 2, obs_dim: 10}  -> hello echo
  reset {seed}                                             -> reset echo
  obs {q[3], qd[3], puck_p[2], puck_v[2]}                  -> action {v_ee[2]}
  bye                                                      -> bye echo, close

Counters: every reply carries the request's episode/step. A malformed or
unsupported message gets an ``error`` reply and the connection closes.

No dependencies beyond the standard library.
"""

from __future__ import annotations

import argparse
import json
import math
import socket
import sys

PROTOCOL_VERSION = 1
ACTION_DIM = 2
OBS_DIM = 10
MAX_LINE_BYTES = 64 * 1024

# Arm and table constants, mirrored from the harness defaults.
LINK_LENGTHS = (0.5, 0.4, 0.3)
BASE_POSITION = (-0.1, 0.5)
TABLE_LENGTH = 2.0
GOAL_CENTER_Y = 0.5
PUCK_RADIUS = 0.03
MALLET_RADIUS = 0.05

# Scripted-expert constants, mirrored from the in-process implementation.
V_EE_MAX = 1.5
APPROACH_OFFSET = 0.05
POS_TOL = 0.03
LATERAL_TOL = 0.005
APPROACH_GAIN = 20.0
STRIKE_SPEED = 0.75


def end_effector(q):
    """Planar chain forward kinematics; operation order matches the harness."""
    t1 = q[0]
    t2 = t1 + q[1]
    t3 = t2 + q[2]
    x = BASE_POSITION[0] + LINK_LENGTHS[0] * math.cos(t1)
    y = BASE_POSITION[1] + LINK_LENGTHS[0] * math.sin(t1)
    x = x + LINK_LENGTHS[1] * math.cos(t2)
    y = y + LINK_LENGTHS[1] * math.sin(t2)
    x = x + LINK_LENGTHS[2] * math.cos(t3)
    y = y + LINK_LENGTHS[2] * math.sin(t3)
    return x, y


def expert_action(q, puck_p):
    """Two-phase hitting law, identical arithmetic to the in-process expert."""
    px, py = float(puck_p[0]), float(puck_p[1])
    ex, ey = end_effector(q)
    gx = TABLE_LENGTH - px
    gy = GOAL_CENTER_Y - py
    gd = math.sqrt(gx * gx + gy * gy)
    if gd < 1e-9:
        ghx, ghy = 1.0, 0.0
    else:
        ghx, ghy = gx / gd, gy / gd
    standoff = MALLET_RADIUS + PUCK_RADIUS + APPROACH_OFFSET
    hx = px - standoff * ghx
    hy = py - standoff * ghy

    rx, ry = ex - hx, ey - hy
    longitudinal = rx * ghx + ry * ghy
    lateral = abs(rx * ghy - ry * ghx)
    strike = min(STRIKE_SPEED, V_EE_MAX)
    if lateral <= LATERAL_TOL and longitudinal >= -POS_TOL:
        vx, vy = strike * ghx, strike * ghy
    else:
        vx, vy = APPROACH_GAIN * -rx, APPROACH_GAIN * -ry
        speed = math.sqrt(vx * vx + vy * vy)
        if speed > V_EE_MAX:
            scale = V_EE_MAX / speed
            vx, vy = vx * scale, vy * scale
    vx = min(max(vx, -V_EE_MAX), V_EE_MAX)
    vy = min(max(vy, -V_EE_MAX), V_EE_MAX)
    return vx, vy


def _reply(obj, kind, payload=None):
    out = {"kind": kind, "episode": obj.get("episode", 0), "step": obj.get("step", 0)}
    if payload:
        out.update(payload)
    return (json.dumps(out) + "\n").encode("utf-8")


def _error(obj, message):
    return _reply(obj, "error", {"message": message})


def handle_message(line: bytes):
    """Map one request line to (reply bytes, keep_session_open)."""
    try:
        obj = json.loads(line.decode("utf-8"))
        if not isinstance(obj, dict):
            raise ValueError("not an object")
    except (UnicodeDecodeError, ValueError):
        return _error({}, "malformed message"), False

    kind = obj.get("kind")
    if kind == "hello":
        if obj.get("protocol_version") != PROTOCOL_VERSION:
            return _error(obj, f"unsupported protocol_version {obj.get('protocol_version')!r}"), False
        return _reply(
            obj,
            "hello",
            {"protocol_version": PROTOCOL_VERSION, "action_dim": ACTION_DIM, "obs_dim": OBS_DIM},
        ), True
    if kind == "reset":
        # the hitting law is stateless; nothing to reset beyond the echo
        return _reply(obj, "reset"), True
    if kind == "obs":
        q = obj.get("q")
        puck_p = obj.get("puck_p")
        if (
            not isinstance(q, list)
            or len(q) != 3
            or not isinstance(puck_p, list)
            or len(puck_p) != 2
        ):
            return _error(obj, "obs payload must carry q[3] and puck_p[2]"), False
        vx, vy = expert_action([float(v) for v in q], [float(v) for v in puck_p])
        return _reply(obj, "action", {"v_ee": [vx, vy]}), True
    if kind == "bye":
        return _reply(obj, "bye"), False
    return _error(obj, f"unexpected message kind {kind!r}"), False


def serve_stream(recv, send) -> None:
    """One session: strict request-response until bye, EOF, or error."""
    buffer = b""
    while True:
        while b"\n" not in buffer:
            if len(buffer) > MAX_LINE_BYTES:
                send(_error({}, "line too long"))
                return
            chunk = recv()
            if not chunk:
                return  # harness disconnected: clean exit
            buffer += chunk
        line, buffer = buffer.split(b"\n", 1)
        reply, keep_open = handle_message(line)
        send(reply)
        if not keep_open:
            return


def serve_socket(host: str, port: int, announce=print) -> None:
    """Accept connections one at a time until interrupted."""
    listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    listener.bind((host, port))
    listener.listen(1)
    actual = listener.getsockname()
    announce(f"listening on {actual[0]}:{actual[1]}", flush=True)
    try:
        while True:
            conn, _ = listener.accept()
            try:
                serve_stream(lambda: conn.recv(4096), conn.sendall)
            except OSError:
                pass
            finally:
                conn.close()
    except KeyboardInterrupt:
        pass
    finally:
        listener.close()


def serve_stdio() -> None:
    stdin = sys.stdin.buffer
    stdout = sys.stdout.buffer

    def send(data):
        stdout.write(data)
        stdout.flush()

    serve_stream(lambda: stdin.read1(4096), send)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    mode = parser.add_mutually_exclusive_group(required=True)
    mode.add_argument("--listen", metavar="HOST:PORT", help="serve over TCP (PORT 0 picks a free one)")
    mode.add_argument("--stdio", action="store_true", help="serve over stdin/stdout")
    args = parser.parse_args(argv)
    if args.stdio:
        serve_stdio()
        return 0
    host, _, port = args.listen.rpartition(":")
    if not host or not port.lstrip("-").isdigit():
        parser.error("--listen expects HOST:PORT")
    serve_socket(host, int(port))
    return 0


if __name__ == "__main__":
    sys.exit(main())
