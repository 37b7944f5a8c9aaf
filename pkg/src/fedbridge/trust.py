"""Circles of trust and interoperability responsibility.

Three cross-dialect topologies are recognized. When the authority sits at
the center of its circle (several service providers lean on one identity
provider) the authority carries the interoperability burden; when a single
service provider federates with several authorities, the provider carries
it; and when the pair shares no direct link at all but both trust a common
third party, that dedicated broker carries it and the relay path runs
through it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from types import MappingProxyType
from typing import Iterable, Mapping

from .errors import AmbiguousTopology, InvariantViolation, NoTrustPath, UnknownEntity
from .messages import EntityId


class Role(Enum):
    IDENTITY_PROVIDER = "identity-provider"
    SERVICE_PROVIDER = "service-provider"
    BROKER = "broker"


class Dialect(Enum):
    SAML2 = "saml2"
    WSFED11B = "wsfed1.1b"
    BOTH = "both"


@dataclass(frozen=True)
class FederationEntity:
    id: EntityId
    role: Role
    dialect: Dialect
    endpoints: Mapping[str, str] = field(default_factory=dict)
    keys: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.role is Role.BROKER and self.dialect is not Dialect.BOTH:
            raise InvariantViolation(f"broker {self.id} must speak both dialects")
        if self.role is not Role.BROKER and self.dialect is Dialect.BOTH:
            raise InvariantViolation(f"{self.id} must have exactly one dialect")
        object.__setattr__(self, "endpoints", MappingProxyType(dict(self.endpoints)))
        object.__setattr__(self, "keys", tuple(self.keys))

    def endpoint(self, kind: str) -> str:
        try:
            return self.endpoints[kind]
        except KeyError:
            raise UnknownEntity(f"{self.id} has no {kind!r} endpoint") from None


class TrustTopology:
    """Immutable set of federation entities plus their direct trust links.

    Links are undirected: a shared signing secret trusts both ways. Built
    once at configuration load; every query afterwards is read-only.
    """

    def __init__(
        self,
        entities: Iterable[FederationEntity],
        links: Iterable[tuple[EntityId, EntityId]],
    ):
        self._entities: dict[EntityId, FederationEntity] = {}
        for entity in entities:
            if entity.id in self._entities:
                raise InvariantViolation(f"duplicate entity {entity.id}")
            self._entities[entity.id] = entity

        self._links: set[frozenset[EntityId]] = set()
        for a, b in links:
            if a == b:
                raise InvariantViolation(f"self trust link on {a}")
            if a not in self._entities or b not in self._entities:
                raise InvariantViolation(f"trust link references unknown entity: {a}, {b}")
            self._links.add(frozenset((a, b)))

    def entity(self, entity_id: EntityId) -> FederationEntity:
        try:
            return self._entities[entity_id]
        except KeyError:
            raise UnknownEntity(str(entity_id)) from None

    def entities(self) -> list[FederationEntity]:
        return list(self._entities.values())

    def linked(self, a: EntityId, b: EntityId) -> bool:
        return frozenset((a, b)) in self._links

    def neighbors(self, entity_id: EntityId) -> list[FederationEntity]:
        out = []
        for pair in self._links:
            if entity_id in pair:
                (other,) = pair - {entity_id}
                out.append(self._entities[other])
        return sorted(out, key=lambda e: e.id.value)

    def by_role(self, role: Role) -> list[FederationEntity]:
        return sorted(
            (e for e in self._entities.values() if e.role is role),
            key=lambda e: e.id.value,
        )


def _require_pair(
    topo: TrustTopology, sp: EntityId, ip: EntityId
) -> tuple[FederationEntity, FederationEntity]:
    sp_entity = topo.entity(sp)
    ip_entity = topo.entity(ip)
    if sp_entity.role is not Role.SERVICE_PROVIDER:
        raise UnknownEntity(f"{sp} is not a service provider")
    if ip_entity.role is not Role.IDENTITY_PROVIDER:
        raise UnknownEntity(f"{ip} is not an identity provider")
    if sp_entity.dialect is ip_entity.dialect:
        raise UnknownEntity(f"{sp} and {ip} share a dialect; nothing to interoperate")
    return sp_entity, ip_entity


def _brokers_between(topo: TrustTopology, sp: EntityId, ip: EntityId) -> list[FederationEntity]:
    return [
        b
        for b in topo.by_role(Role.BROKER)
        if topo.linked(sp, b.id) and topo.linked(b.id, ip)
    ]


def resolve_responsible(topo: TrustTopology, sp: EntityId, ip: EntityId) -> EntityId:
    """Which entity bears the interoperability processes for this pair.

    Direct link: the hub of the circle is responsible (authority-centered
    topology puts it on the identity provider, provider-centered on the
    service provider; both at once is ambiguous and reported as such).
    No direct link: the dedicated third party both sides trust.
    """
    _require_pair(topo, sp, ip)

    if topo.linked(sp, ip):
        ip_is_hub = (
            sum(1 for n in topo.neighbors(ip) if n.role is Role.SERVICE_PROVIDER) >= 2
        )
        sp_is_hub = (
            sum(1 for n in topo.neighbors(sp) if n.role is Role.IDENTITY_PROVIDER) >= 2
        )
        if ip_is_hub and sp_is_hub:
            raise AmbiguousTopology(
                f"both {ip} and {sp} are hubs of their circle"
            )
        if sp_is_hub:
            return sp
        # Authority-centered is also the degenerate one-on-one reading: the
        # asserting party owns the trust relationship it anchors.
        return ip

    brokers = _brokers_between(topo, sp, ip)
    if not brokers:
        raise NoTrustPath(f"{sp} and {ip} share neither a link nor a broker")
    return brokers[0].id


def resolve_path(topo: TrustTopology, sp: EntityId, ip: EntityId) -> list[EntityId]:
    """Relay path for the pair: direct, or through exactly one broker."""
    _require_pair(topo, sp, ip)
    if topo.linked(sp, ip):
        return [sp, ip]
    brokers = _brokers_between(topo, sp, ip)
    if not brokers:
        raise NoTrustPath(f"{sp} and {ip} share neither a link nor a broker")
    return [sp, brokers[0].id, ip]
