"""Newline-delimited JSON protocol for external detector / upscaler backends.

Every message is one UTF-8 line of compact JSON whose fields appear in a
fixed order (``v``, ``type``, ``request_id``, payload), so a given message
always serializes to the same bytes.  Requests carry base64-encoded PNG
images; a backend answers each request with exactly one response line and
never receives a second request on a connection before replying.

Backends are addressed by URI: ``exec:CMD [ARGS...]`` spawns a child
process speaking the protocol on stdin/stdout, ``tcp:HOST:PORT`` connects
to a listening server.

Numbers use a canonical form: integral values are written without a
fractional part (``9`` never ``9.0``), matching what JSON serializers in
other languages produce, so conforming implementations yield identical
bytes for identical messages.
"""

from __future__ import annotations

import base64
import json
import math
import select
import shlex
import socket
import subprocess
import threading
from contextlib import contextmanager

from srdet.imagebuf import ImageBuffer, decode_png, encode_png

__all__ = [
    "PROTOCOL_VERSION",
    "WireError",
    "BackendError",
    "encode_message",
    "decode_message",
    "detect_request",
    "detections_response",
    "upscale_request",
    "image_response",
    "error_response",
    "image_to_field",
    "image_from_field",
    "next_request_id",
    "Connection",
    "ExecConnection",
    "TcpConnection",
    "open_connection",
    "ConnectionPool",
]

PROTOCOL_VERSION = 1


class WireError(Exception):
    """A message violated the protocol (bad JSON, version, or fields)."""


class BackendError(Exception):
    """The backend reported an error or the transport failed."""


_id_lock = threading.Lock()
_id_counter = 0


def next_request_id() -> int:
    """Next value of the process-wide monotonically increasing request id."""
    global _id_counter
    with _id_lock:
        _id_counter += 1
        return _id_counter


def _canon_num(v):
    """Canonical JSON number: integral floats become plain integers."""
    if isinstance(v, float) and v.is_integer():
        return int(v)
    return v


def image_to_field(img: ImageBuffer) -> str:
    """Encode a buffer as the base64-PNG string used in image fields."""
    return base64.b64encode(encode_png(img)).decode("ascii")


def image_from_field(field: str, context: str = "image") -> ImageBuffer:
    try:
        raw = base64.b64decode(field, validate=True)
    except (ValueError, TypeError) as exc:
        raise WireError(f"{context}: invalid base64 ({exc})") from exc
    try:
        return decode_png(raw, name=context)
    except Exception as exc:
        raise WireError(f"{context}: undecodable PNG ({exc})") from exc


def encode_message(msg: dict) -> bytes:
    """Serialize a message dict to one compact JSON line (with newline)."""
    return (json.dumps(msg, separators=(",", ":")) + "\n").encode("utf-8")


def decode_message(line) -> dict:
    """Parse one protocol line, checking structure and version."""
    if isinstance(line, bytes):
        try:
            line = line.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise WireError(f"message is not UTF-8: {exc}") from exc
    line = line.strip()
    if not line:
        raise WireError("empty message line")
    try:
        msg = json.loads(line)
    except json.JSONDecodeError as exc:
        raise WireError(f"message is not valid JSON: {exc}") from exc
    if not isinstance(msg, dict):
        raise WireError(f"message must be a JSON object, got {type(msg).__name__}")
    if msg.get("v") != PROTOCOL_VERSION:
        raise WireError(f"unsupported protocol version {msg.get('v')!r}")
    if not isinstance(msg.get("type"), str):
        raise WireError("message missing string 'type' field")
    if not isinstance(msg.get("request_id"), int):
        raise WireError("message missing integer 'request_id' field")
    return msg


def detect_request(
    img: ImageBuffer,
    max_detections: int,
    min_score: float,
    request_id: int,
) -> dict:
    return {
        "v": PROTOCOL_VERSION,
        "type": "detect",
        "request_id": request_id,
        "image": image_to_field(img),
        "max_detections": int(max_detections),
        "min_score": _canon_num(float(min_score)),
    }


def detections_response(request_id: int, detections) -> dict:
    """Build a detect reply; ``detections`` holds objects with box fields."""
    items = []
    for det in detections:
        items.append(
            {
                "box": [_canon_num(v) for v in (det.x1, det.y1, det.x2, det.y2)],
                "class_id": det.class_id,
                "score": _canon_num(det.score),
            }
        )
    return {
        "v": PROTOCOL_VERSION,
        "type": "detections",
        "request_id": request_id,
        "detections": items,
    }


def upscale_request(img: ImageBuffer, zoom: int, request_id: int) -> dict:
    return {
        "v": PROTOCOL_VERSION,
        "type": "upscale",
        "request_id": request_id,
        "image": image_to_field(img),
        "zoom": int(zoom),
    }


def image_response(request_id: int, img: ImageBuffer) -> dict:
    return {
        "v": PROTOCOL_VERSION,
        "type": "image",
        "request_id": request_id,
        "image": image_to_field(img),
    }


def error_response(request_id: int, message: str) -> dict:
    return {
        "v": PROTOCOL_VERSION,
        "type": "error",
        "request_id": request_id,
        "error": str(message),
    }


def _check_reply(reply: dict, request_id: int, expected_type: str) -> dict:
    if reply["request_id"] != request_id:
        raise WireError(
            f"response request_id {reply['request_id']} does not match "
            f"request {request_id}"
        )
    if reply["type"] == "error":
        raise BackendError(f"backend error: {reply.get('error', '<no detail>')}")
    if reply["type"] != expected_type:
        raise WireError(
            f"expected '{expected_type}' response, got '{reply['type']}'"
        )
    return reply


class Connection:
    """One serially-used backend connection: at most one request in flight."""

    def send(self, msg: dict) -> dict:
        """Write one request line and read one response line."""
        raise NotImplementedError

    def request(self, msg: dict, expected_type: str) -> dict:
        reply = self.send(msg)
        return _check_reply(reply, msg["request_id"], expected_type)

    def close(self) -> None:
        raise NotImplementedError

    def __enter__(self):
        return self

    def __exit__(self, *exc_info):
        self.close()


class ExecConnection(Connection):
    """Backend as a child process speaking the protocol on stdin/stdout."""

    def __init__(self, argv: list[str], timeout: float = 30.0):
        self.argv = argv
        self.timeout = timeout
        try:
            self._proc = subprocess.Popen(
                argv,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
            )
        except OSError as exc:
            raise BackendError(f"cannot start backend {argv!r}: {exc}") from exc

    def send(self, msg: dict) -> dict:
        proc = self._proc
        if proc.poll() is not None:
            raise BackendError(f"backend {self.argv!r} exited ({proc.returncode})")
        try:
            proc.stdin.write(encode_message(msg))
            proc.stdin.flush()
        except (OSError, ValueError) as exc:
            raise BackendError(f"cannot write to backend {self.argv!r}: {exc}") from exc
        ready, _, _ = select.select([proc.stdout], [], [], self.timeout)
        if not ready:
            raise BackendError(
                f"backend {self.argv!r} timed out after {self.timeout}s"
            )
        line = proc.stdout.readline()
        if not line:
            raise BackendError(f"backend {self.argv!r} closed its output")
        return decode_message(line)

    def close(self) -> None:
        proc = self._proc
        if proc.poll() is None:
            try:
                proc.stdin.close()
            except OSError:
                pass
            try:
                proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                proc.kill()
                proc.wait()


class TcpConnection(Connection):
    """Backend reached over a TCP socket."""

    def __init__(self, host: str, port: int, timeout: float = 30.0):
        try:
            self._sock = socket.create_connection((host, port), timeout=timeout)
        except OSError as exc:
            raise BackendError(f"cannot connect to {host}:{port}: {exc}") from exc
        self._file = self._sock.makefile("rwb")
        self._addr = f"{host}:{port}"

    def send(self, msg: dict) -> dict:
        try:
            self._file.write(encode_message(msg))
            self._file.flush()
            line = self._file.readline()
        except OSError as exc:
            raise BackendError(f"backend {self._addr} I/O failed: {exc}") from exc
        if not line:
            raise BackendError(f"backend {self._addr} closed the connection")
        return decode_message(line)

    def close(self) -> None:
        try:
            self._file.close()
        finally:
            self._sock.close()


def open_connection(uri: str, timeout: float = 30.0) -> Connection:
    """Open a backend connection from an ``exec:`` or ``tcp:`` URI."""
    if uri.startswith("exec:"):
        argv = shlex.split(uri[len("exec:") :])
        if not argv:
            raise ValueError(f"empty exec backend command in {uri!r}")
        return ExecConnection(argv, timeout=timeout)
    if uri.startswith("tcp:"):
        rest = uri[len("tcp:") :]
        host, sep, port_s = rest.rpartition(":")
        if not sep or not host:
            raise ValueError(f"tcp backend URI must be tcp:host:port, got {uri!r}")
        try:
            port = int(port_s)
        except ValueError:
            raise ValueError(f"invalid port in backend URI {uri!r}") from None
        return TcpConnection(host, port, timeout=timeout)
    raise ValueError(f"unknown backend URI scheme: {uri!r} (use exec: or tcp:)")


class ConnectionPool:
    """Fixed-size pool of backend connections for parallel window requests.

    Connections are created lazily, up to ``size``; each borrowed
    connection is used by one thread at a time.  A connection that raised
    is discarded instead of being returned to the pool.
    """

    def __init__(self, uri: str, size: int = 1, timeout: float = 30.0):
        if size < 1:
            raise ValueError(f"pool size must be >= 1, got {size}")
        self.uri = uri
        self.timeout = timeout
        self._idle: list[Connection] = []
        self._sema = threading.BoundedSemaphore(size)
        self._lock = threading.Lock()
        self._closed = False

    @contextmanager
    def connection(self):
        self._sema.acquire()
        conn = None
        try:
            with self._lock:
                if self._closed:
                    raise BackendError("connection pool is closed")
                if self._idle:
                    conn = self._idle.pop()
            if conn is None:
                conn = open_connection(self.uri, timeout=self.timeout)
            yield conn
        except BaseException:
            if conn is not None:
                conn.close()
            raise
        else:
            with self._lock:
                if self._closed:
                    conn.close()
                else:
                    self._idle.append(conn)
        finally:
            self._sema.release()

    def request(self, msg: dict, expected_type: str) -> dict:
        with self.connection() as conn:
            return conn.request(msg, expected_type)

    def close(self) -> None:
        with self._lock:
            self._closed = True
            idle, self._idle = self._idle, []
        for conn in idle:
            conn.close()
