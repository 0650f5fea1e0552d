"""Client side of the optional external-responder protocol.

A real model backend may listen on a local stream socket and answer one JSON
object per line. Request keys: id, owner, sender, topic, body. Response keys:
id, answerable, body. Anything that goes wrong on the wire is treated as
"unanswerable" so the caller falls back to forwarding the message.
"""

from __future__ import annotations

import json
import logging
import socket
from dataclasses import dataclass
from typing import Optional, Union

from .protocol import Message, apply_disclosure
from .responder import Response

log = logging.getLogger(__name__)

Address = Union[str, tuple[str, int]]


@dataclass(frozen=True)
class AdapterReply:
    id: int
    answerable: bool
    body: str = ""


def encode_request(msg: Message, owner: str) -> bytes:
    req = {"id": msg.id, "owner": owner, "sender": msg.sender, "topic": msg.topic, "body": msg.body}
    return (json.dumps(req, separators=(",", ":")) + "\n").encode("utf-8")


def decode_reply(line: bytes, expected_id: int) -> Optional[AdapterReply]:
    """Parse one reply line; ``None`` for anything malformed or mismatched."""
    try:
        obj = json.loads(line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError):
        return None
    if not isinstance(obj, dict) or set(obj) != {"id", "answerable", "body"}:
        return None
    if obj["id"] != expected_id or not isinstance(obj["answerable"], bool) or not isinstance(obj["body"], str):
        return None
    if obj["answerable"] and not obj["body"]:
        return None
    return AdapterReply(obj["id"], obj["answerable"], obj["body"])


class AdapterClient:
    """Blocking one-request-per-connection client."""

    def __init__(self, address: Address, timeout_s: float = 5.0):
        self.address = address
        self.timeout_s = timeout_s

    def _connect(self) -> socket.socket:
        if isinstance(self.address, str):
            sock = socket.socket(socket.AF_UNIX, socket.SOCK_STREAM)
        else:
            sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        sock.settimeout(self.timeout_s)
        sock.connect(self.address)
        return sock

    def ask(self, msg: Message, owner: str) -> AdapterReply:
        try:
            with self._connect() as sock:
                sock.sendall(encode_request(msg, owner))
                buf = b""
                while b"\n" not in buf:
                    chunk = sock.recv(65536)
                    if not chunk:
                        break
                    buf += chunk
        except OSError as exc:  # includes socket.timeout
            log.warning("responder adapter failed for message %s: %s", msg.id, exc)
            return AdapterReply(msg.id, False)
        line = buf.split(b"\n", 1)[0]
        reply = decode_reply(line, msg.id)
        if reply is None:
            log.warning("malformed adapter reply for message %s", msg.id)
            return AdapterReply(msg.id, False)
        return reply

    def respond(self, msg: Message, owner: str, model_version: int, service_time_s: float) -> Optional[Response]:
        reply = self.ask(msg, owner)
        if not reply.answerable:
            return None
        return Response(apply_disclosure(reply.body), model_version, service_time_s)
