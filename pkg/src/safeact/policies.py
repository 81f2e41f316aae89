"""End-effector velocity policies and the newline-delimited JSON wire protocol.

Policies consume an :class:`~safeact.airhockey.Observation` and emit a 2-D
end-effector velocity command; the harness converts it to joint velocities
via inverse kinematics before filtering. The wire protocol lets an external
process (e.g. a learned policy server) occupy the same seat.

Wire protocol (normative):
  * transport: newline-delimited JSON over a stream socket or stdio pipe,
    one flat object per line with fields ``kind``, ``episode``, ``step``
    plus the payload for that kind;
  * handshake: the harness opens with ``hello`` carrying
    ``protocol_version`` 1, ``action_dim`` 2, ``obs_dim`` 10 and expects a
    ``hello`` back (an ``error`` reply rejects the session);
  * per episode: ``reset`` with the episode seed, echoed by the server;
  * per step: ``obs`` carrying exactly q[3], qd[3], puck_p[2], puck_v[2],
    answered by exactly one ``action`` carrying v_ee[2] with matching
    counters; ``bye`` closes the session and is echoed.

Numbers are serialized in Python's shortest round-trip decimal form, so
float values survive the wire bit-exactly.
"""

from __future__ import annotations

import json
import math
import socket
from dataclasses import dataclass, field

import numpy as np

from .airhockey import Observation, TableGeometry
from .errors import DesyncError, ProtocolError

PROTOCOL_VERSION = 1
ACTION_DIM = 2
OBS_DIM = 10
MESSAGE_KINDS = ("hello", "obs", "action", "reset", "bye", "error")
MAX_LINE_BYTES = 64 * 1024

DEFAULT_V_EE_MAX = 1.5


@dataclass(frozen=True)
class ExpertParams:
    """Constants of the scripted hitting law (tuned once against the oracle run)."""

    approach_offset: float = 0.05
    pos_tol: float = 0.03
    lateral_tol: float = 0.005
    approach_gain: float = 20.0
    # Kept below the arm's realizable end-effector speed so the unfiltered
    # baseline's per-joint clamp does not bend the strike direction.
    strike_speed: float = 0.75


def _clamp(x: float, bound: float) -> float:
    return min(max(x, -bound), bound)


def scripted_expert_action(
    obs: Observation,
    table: TableGeometry,
    params: ExpertParams = ExpertParams(),
    v_ee_max: float = DEFAULT_V_EE_MAX,
) -> np.ndarray:
    """Two-phase hitting law: line up behind the puck, then strike through it.

    The hit point sits behind the puck on the puck-to-goal line. While not
    lined up, the command is a proportional approach toward the hit point,
    speed-capped along its direction so the downstream joint-bound clamp
    rarely distorts it; once the end-effector is behind the puck and
    laterally within ``lateral_tol`` of the strike line, it drives through
    the puck toward the goal at strike speed. Stateless, so the bridge
    reference client can reproduce it exactly. Scalar math only, for
    bit-parity over the wire.
    """
    px, py = float(obs.puck_p[0]), float(obs.puck_p[1])
    ex, ey = float(obs.ee_p[0]), float(obs.ee_p[1])
    gx = table.length - px
    gy = table.goal_center_y - py
    gd = math.sqrt(gx * gx + gy * gy)
    if gd < 1e-9:
        ghx, ghy = 1.0, 0.0
    else:
        ghx, ghy = gx / gd, gy / gd
    standoff = table.mallet_radius + table.puck_radius + params.approach_offset
    hx = px - standoff * ghx
    hy = py - standoff * ghy

    rx, ry = ex - hx, ey - hy
    longitudinal = rx * ghx + ry * ghy
    lateral = abs(rx * ghy - ry * ghx)
    strike = min(params.strike_speed, v_ee_max)
    if lateral <= params.lateral_tol and longitudinal >= -params.pos_tol:
        vx, vy = strike * ghx, strike * ghy
    else:
        vx, vy = params.approach_gain * -rx, params.approach_gain * -ry
        speed = math.sqrt(vx * vx + vy * vy)
        if speed > v_ee_max:
            scale = v_ee_max / speed
            vx, vy = vx * scale, vy * scale
    return np.array([_clamp(vx, v_ee_max), _clamp(vy, v_ee_max)])


def random_policy_action(rng: np.random.Generator, v_ee_max: float = DEFAULT_V_EE_MAX) -> np.ndarray:
    """Componentwise uniform command in [-v_ee_max, v_ee_max]."""
    return rng.uniform(-v_ee_max, v_ee_max, size=2)


def adversarial_policy_action(
    obs: Observation, table: TableGeometry, v_ee_max: float = DEFAULT_V_EE_MAX
) -> np.ndarray:
    """Full-speed command straight at the nearest table wall.

    Ties break in the fixed order top, bottom, left, right, so the exact
    table center drives toward +y.
    """
    ex, ey = float(obs.ee_p[0]), float(obs.ee_p[1])
    walls = (
        (table.width - ey, (0.0, 1.0)),
        (ey, (0.0, -1.0)),
        (ex, (-1.0, 0.0)),
        (table.length - ex, (1.0, 0.0)),
    )
    _, direction = min(walls, key=lambda w: w[0])
    return v_ee_max * np.array(direction)


class ScriptedExpertPolicy:
    """In-process expert; see :func:`scripted_expert_action`."""

    def __init__(
        self,
        table: TableGeometry,
        params: ExpertParams = ExpertParams(),
        v_ee_max: float = DEFAULT_V_EE_MAX,
    ):
        self.table = table
        self.params = params
        self.v_ee_max = v_ee_max

    def reset(self, seed: int | None = None) -> None:
        pass

    def act(self, obs: Observation) -> np.ndarray:
        return scripted_expert_action(obs, self.table, self.params, self.v_ee_max)


class RandomPolicy:
    def __init__(self, seed: int = 0, v_ee_max: float = DEFAULT_V_EE_MAX):
        self.v_ee_max = v_ee_max
        self._rng = np.random.default_rng(seed)

    def reset(self, seed: int | None = None) -> None:
        if seed is not None:
            self._rng = np.random.default_rng(seed)

    def act(self, obs: Observation) -> np.ndarray:
        return random_policy_action(self._rng, self.v_ee_max)


class AdversarialPolicy:
    def __init__(self, table: TableGeometry, v_ee_max: float = DEFAULT_V_EE_MAX):
        self.table = table
        self.v_ee_max = v_ee_max

    def reset(self, seed: int | None = None) -> None:
        pass

    def act(self, obs: Observation) -> np.ndarray:
        return adversarial_policy_action(obs, self.table, self.v_ee_max)


@dataclass
class WireMessage:
    kind: str
    episode: int = 0
    step: int = 0
    payload: dict = field(default_factory=dict)


def encode_message(msg: WireMessage) -> bytes:
    """One message per line: flat JSON object terminated by a newline."""
    if msg.kind not in MESSAGE_KINDS:
        raise ProtocolError(f"unknown message kind {msg.kind!r}")
    obj = {"kind": msg.kind, "episode": int(msg.episode), "step": int(msg.step)}
    for key, value in msg.payload.items():
        if isinstance(value, np.ndarray):
            value = [float(x) for x in value]
        obj[key] = value
    return (json.dumps(obj) + "\n").encode("utf-8")


def decode_message(line: bytes, last: tuple[int, int] | None = None) -> WireMessage:
    """Parse one wire line; total over arbitrary input up to 64 KiB.

    Rejects unknown kinds and, when ``last`` counters are given, any
    episode/step regression.
    """
    if len(line) > MAX_LINE_BYTES:
        raise ProtocolError("line exceeds 64 KiB", raw=line[:256])
    try:
        obj = json.loads(line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ProtocolError(f"malformed wire line: {exc}", raw=line) from exc
    if not isinstance(obj, dict):
        raise ProtocolError("wire line is not a JSON object", raw=line)
    kind = obj.get("kind")
    if kind not in MESSAGE_KINDS:
        raise ProtocolError(f"unknown message kind {kind!r}", raw=line)
    try:
        episode = int(obj.get("episode", 0))
        step = int(obj.get("step", 0))
    except (TypeError, ValueError) as exc:
        raise ProtocolError("episode/step counters must be integers", raw=line) from exc
    if episode < 0 or step < 0:
        raise ProtocolError("episode/step counters must be non-negative", raw=line)
    if last is not None and (episode, step) < tuple(last):
        raise DesyncError(
            f"counter regression: got ({episode}, {step}), already at {tuple(last)}", raw=line
        )
    payload = {k: v for k, v in obj.items() if k not in ("kind", "episode", "step")}
    return WireMessage(kind=kind, episode=episode, step=step, payload=payload)


def observation_payload(obs: Observation) -> dict:
    """The proprioceptive vector that goes over the wire (10 numbers)."""
    return {
        "q": [float(x) for x in obs.q],
        "qd": [float(x) for x in obs.qd],
        "puck_p": [float(x) for x in obs.puck_p],
        "puck_v": [float(x) for x in obs.puck_v],
    }


class _LineChannel:
    """Blocking line-oriented I/O over a socket, with a per-read timeout."""

    def __init__(self, sock: socket.socket, timeout: float):
        self._sock = sock
        self._sock.settimeout(timeout)
        self._buffer = b""

    def send_line(self, data: bytes) -> None:
        try:
            self._sock.sendall(data)
        except OSError as exc:
            raise ProtocolError(f"send failed: {exc}") from exc

    def recv_line(self) -> bytes:
        while b"\n" not in self._buffer:
            if len(self._buffer) > MAX_LINE_BYTES:
                raise ProtocolError("peer sent an over-long line", raw=self._buffer[:256])
            try:
                chunk = self._sock.recv(4096)
            except socket.timeout as exc:
                raise ProtocolError("timed out waiting for remote policy") from exc
            except OSError as exc:
                raise ProtocolError(f"recv failed: {exc}") from exc
            if not chunk:
                raise ProtocolError("remote policy closed the connection")
            self._buffer += chunk
        line, self._buffer = self._buffer.split(b"\n", 1)
        return line

    def close(self) -> None:
        try:
            self._sock.close()
        except OSError:
            pass


class RemotePolicy:
    """Adapter speaking the wire protocol to an external policy process.

    Strictly request-response: one outstanding message at a time, one action
    awaited per observation, with a timeout. Protocol failures raise; the
    harness records them as aborted episodes rather than substituting
    actions.
    """

    def __init__(
        self,
        address: str | None = None,
        sock: socket.socket | None = None,
        timeout: float = 1.0,
        v_ee_max: float = DEFAULT_V_EE_MAX,
    ):
        if sock is None:
            if address is None:
                raise ProtocolError("remote policy needs an address or an open socket")
            host, _, port = address.rpartition(":")
            if not host or not port.isdigit():
                raise ProtocolError(f"remote address must be HOST:PORT, got {address!r}")
            try:
                sock = socket.create_connection((host, int(port)), timeout=timeout)
            except OSError as exc:
                raise ProtocolError(f"cannot connect to remote policy at {address}: {exc}") from exc
        self._channel = _LineChannel(sock, timeout)
        self.v_ee_max = v_ee_max
        self._episode = 0
        self._step = 0
        self._handshake()

    def _exchange(self, msg: WireMessage, expect: str) -> WireMessage:
        self._channel.send_line(encode_message(msg))
        reply = decode_message(self._channel.recv_line())
        if reply.kind == "error":
            raise ProtocolError(f"remote policy error: {reply.payload.get('message', '')}")
        if reply.kind != expect:
            raise ProtocolError(f"expected {expect!r} reply, got {reply.kind!r}")
        if (reply.episode, reply.step) != (msg.episode, msg.step):
            raise DesyncError(
                f"reply counters ({reply.episode}, {reply.step}) do not match "
                f"request ({msg.episode}, {msg.step})"
            )
        return reply

    def _handshake(self) -> None:
        payload = {
            "protocol_version": PROTOCOL_VERSION,
            "action_dim": ACTION_DIM,
            "obs_dim": OBS_DIM,
        }
        reply = self._exchange(WireMessage("hello", 0, 0, payload), "hello")
        version = reply.payload.get("protocol_version")
        if version != PROTOCOL_VERSION:
            raise ProtocolError(f"remote policy speaks protocol {version!r}, need {PROTOCOL_VERSION}")

    def reset(self, seed: int | None = None, episode: int | None = None) -> None:
        if episode is not None:
            self._episode = episode
        self._step = 0
        payload = {} if seed is None else {"seed": int(seed)}
        self._exchange(WireMessage("reset", self._episode, 0, payload), "reset")

    def act(self, obs: Observation) -> np.ndarray:
        msg = WireMessage("obs", self._episode, self._step, observation_payload(obs))
        reply = self._exchange(msg, "action")
        v = reply.payload.get("v_ee")
        if not isinstance(v, list) or len(v) != ACTION_DIM:
            raise ProtocolError(f"action payload must carry v_ee[{ACTION_DIM}]")
        self._step += 1
        return np.array([float(x) for x in v])

    def close(self) -> None:
        try:
            self._channel.send_line(encode_message(WireMessage("bye", self._episode, self._step)))
            self._channel.recv_line()
        except ProtocolError:
            pass
        finally:
            self._channel.close()
