"""fedbridge: a dedicated third party that lets SAML2 and WS-Federation
passive-profile deployments consume each other's security information."""

from .messages import (
    EntityId,
    SamlAssertion,
    SamlAuthnRequest,
    SamlResponse,
    SamlStatus,
    Signature,
    WstRequestSecurityToken,
    WstRequestSecurityTokenResponse,
    canonical_bytes,
    parse,
    serialize,
)

__all__ = [
    "EntityId",
    "SamlAssertion",
    "SamlAuthnRequest",
    "SamlResponse",
    "SamlStatus",
    "Signature",
    "WstRequestSecurityToken",
    "WstRequestSecurityTokenResponse",
    "canonical_bytes",
    "parse",
    "serialize",
]

__version__ = "0.1.0"
