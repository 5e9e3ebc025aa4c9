"""Performative messages and the append-only session log.

Every exchange between the user, the supervisor and the agents is a
performative message. The log sequence number is the authoritative total
order of a session; replaying the log reconstructs the session state.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Iterator, Mapping

LOG_VERSION = 1


class LogCorrupt(ValueError):
    """The persisted log cannot be replayed (gap, bad record or version skew)."""


class Performative(Enum):
    ANNOUNCE = "announce"
    ACCEPT_TASK = "accept_task"
    DECLINE_TASK = "decline_task"
    QUERY_USER = "query_user"
    USER_RESPONSE = "user_response"
    INFORM = "inform"
    PROPOSE_SOLUTION = "propose_solution"
    VALIDATE = "validate"
    REJECT = "reject"
    ABANDON = "abandon"
    CANCEL = "cancel"

    @classmethod
    def parse(cls, name: str) -> "Performative":
        try:
            return cls(name)
        except ValueError:
            raise LogCorrupt(f"unknown performative: {name!r}") from None


@dataclass(frozen=True)
class Message:
    seq: int
    conversation: str
    performative: Performative
    sender: str
    receiver: str
    content: Mapping[str, Any]
    timestamp: str = ""

    def to_json(self) -> dict[str, Any]:
        return {
            "v": LOG_VERSION,
            "seq": self.seq,
            "conversation": self.conversation,
            "performative": self.performative.value,
            "sender": self.sender,
            "receiver": self.receiver,
            "content": dict(self.content),
            "ts": self.timestamp,
        }

    @classmethod
    def from_json(cls, raw: Mapping[str, Any]) -> "Message":
        version = raw.get("v")
        if version != LOG_VERSION:
            raise LogCorrupt(f"log record version {version!r}, expected {LOG_VERSION}")
        try:
            return cls(
                seq=int(raw["seq"]),
                conversation=str(raw["conversation"]),
                performative=Performative.parse(str(raw["performative"])),
                sender=str(raw["sender"]),
                receiver=str(raw["receiver"]),
                content=dict(raw.get("content", {})),
                timestamp=str(raw.get("ts", "")),
            )
        except KeyError as exc:
            raise LogCorrupt(f"log record missing field {exc}") from None


BROADCAST = "*"


class MessageLog:
    """Append-only message log, optionally persisted as one JSON record per line.

    Sequence numbers start at 1 and never have gaps; ``since(seq)`` returns
    the strictly newer suffix, which is what stream resumption needs.
    """

    def __init__(self, path: str | Path | None = None, clock: Callable[[], str] | None = None):
        self.path = Path(path) if path is not None else None
        self.clock = clock
        self._messages: list[Message] = []
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return len(self._messages)

    def __iter__(self) -> Iterator[Message]:
        return iter(list(self._messages))

    @property
    def messages(self) -> list[Message]:
        return list(self._messages)

    @property
    def last_seq(self) -> int:
        return len(self._messages)

    def since(self, seq: int) -> list[Message]:
        if seq < 0:
            seq = 0
        return self._messages[seq:]

    def append(
        self,
        conversation: str,
        performative: Performative,
        sender: str,
        receiver: str,
        content: Mapping[str, Any] | None = None,
    ) -> Message:
        with self._lock:
            message = Message(
                seq=len(self._messages) + 1,
                conversation=conversation,
                performative=performative,
                sender=sender,
                receiver=receiver,
                content=dict(content or {}),
                timestamp=self.clock() if self.clock else "",
            )
            self._messages.append(message)
            if self.path is not None:
                with self.path.open("a", encoding="utf-8") as fh:
                    fh.write(json.dumps(message.to_json(), ensure_ascii=False) + "\n")
            return message

    @classmethod
    def load(cls, path: str | Path, clock: Callable[[], str] | None = None) -> "MessageLog":
        log = cls(path=path, clock=clock)
        try:
            lines = Path(path).read_text(encoding="utf-8").splitlines()
        except FileNotFoundError:
            raise LogCorrupt(f"no such log: {path}") from None
        for i, line in enumerate(lines):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise LogCorrupt(f"line {i + 1}: not valid JSON ({exc.msg})") from None
            message = Message.from_json(record)
            if message.seq != len(log._messages) + 1:
                raise LogCorrupt(
                    f"line {i + 1}: sequence {message.seq}, expected {len(log._messages) + 1}"
                )
            log._messages.append(message)
        return log
