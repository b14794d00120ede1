"""Resolve each media item to a visual domain: bypass when known, else classify."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Any, Mapping

from .agents import AgentRegistry, render
from .client import AgentOutput, CallStatus, ChatClient
from .domains import VisualDomain
from .media import MediaItem, MediaKind

ROUTER_AGENT = "DomainRouter"

#: Option letters in router-prompt order (the order of the workflow table).
LETTER_TO_DOMAIN: dict[str, VisualDomain] = {
    letter: domain for letter, domain in zip("ABCDEFGHI", VisualDomain)
}

MAX_ROUTE_ATTEMPTS = 3
_RETRY_REMINDER = "Answer with the letter only."


class RouteMethod(str, Enum):
    BYPASS = "bypass"
    CLASSIFIED = "classified"


@dataclass(frozen=True)
class RoutingDecision:
    item_id: str
    domain: VisualDomain
    method: RouteMethod
    raw_response: str | None = None
    attempts: int = 0

    def __post_init__(self) -> None:
        if self.method is RouteMethod.BYPASS and (
            self.attempts != 0 or self.raw_response is not None
        ):
            raise ValueError(f"bypass decision for {self.item_id} carries classifier data")
        if self.attempts < 0:
            raise ValueError("attempts must be non-negative")

    def to_dict(self) -> dict[str, Any]:
        return {
            "item_id": self.item_id,
            "domain": self.domain.value,
            "method": self.method.value,
            "raw_response": self.raw_response,
            "attempts": self.attempts,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "RoutingDecision":
        return cls(
            item_id=d["item_id"],
            domain=VisualDomain(d["domain"]),
            method=RouteMethod(d["method"]),
            raw_response=d.get("raw_response"),
            attempts=int(d.get("attempts", 0)),
        )


class UnroutableError(Exception):
    """The classifier produced no usable domain within the attempt budget."""

    def __init__(self, item_id: str, attempts: int, last_response: str | None):
        super().__init__(f"item {item_id!r} unroutable after {attempts} attempts")
        self.item_id = item_id
        self.attempts = attempts
        self.last_response = last_response


def _normalize(text: str) -> str:
    return " ".join(text.split()).casefold()


_NAME_TO_DOMAIN: dict[str, VisualDomain] = {}
for _d in VisualDomain:
    _NAME_TO_DOMAIN[_normalize(_d.display_name)] = _d
    _NAME_TO_DOMAIN[_normalize(_d.value)] = _d


def parse_router_reply(text: str) -> VisualDomain | None:
    """Parse a classifier reply into a domain, or None on parse failure.

    Accepted forms: a bare option letter; a letter followed by ")" or "."
    (optionally continuing with that letter's domain name); or the full
    domain name alone, case-insensitively. Anything else fails.
    """
    reply = text.strip()
    if not reply:
        return None
    head, rest = reply[0].upper(), reply[1:]
    if head in LETTER_TO_DOMAIN:
        domain = LETTER_TO_DOMAIN[head]
        if not rest:
            return domain
        if rest[0] in ").":
            trailer = _normalize(rest[1:])
            if not trailer or trailer == _normalize(domain.display_name):
                return domain
            return None
    return _NAME_TO_DOMAIN.get(_normalize(reply))


def route(
    item: MediaItem,
    registry: AgentRegistry,
    client: ChatClient,
    call_log: list[AgentOutput] | None = None,
) -> RoutingDecision:
    """Resolve an item's domain.

    Items with a known domain bypass classification, as do videos (the table
    has exactly one video row). Otherwise the router agent is called; parse
    failures are retried up to two extra times with a letter-only reminder
    appended, after which UnroutableError excludes the item. A reply naming
    the video domain for an image counts as a parse failure.

    call_log, when given, collects the AgentOutput of every model call made.
    """
    if item.known_domain is not None:
        return RoutingDecision(item.id, item.known_domain, RouteMethod.BYPASS)
    if item.kind is MediaKind.VIDEO:
        return RoutingDecision(item.id, VisualDomain.VIDEO_TEMPORAL, RouteMethod.BYPASS)

    spec = registry.resolve(ROUTER_AGENT)
    last_response: str | None = None
    for attempt in range(1, MAX_ROUTE_ATTEMPTS + 1):
        context = {} if attempt == 1 else {"extra": _RETRY_REMINDER}
        request = render(spec, item, context)
        output = client.chat(request)
        if call_log is not None:
            call_log.append(output)
        if output.status is not CallStatus.OK:
            last_response = None
            continue
        last_response = output.text
        domain = parse_router_reply(output.text)
        if domain is None or domain is VisualDomain.VIDEO_TEMPORAL:
            continue
        return RoutingDecision(
            item.id, domain, RouteMethod.CLASSIFIED, raw_response=output.text, attempts=attempt
        )
    raise UnroutableError(item.id, MAX_ROUTE_ATTEMPTS, last_response)
