"""Shared builders and hypothesis strategies for the fedbridge test suite."""

from __future__ import annotations

from datetime import datetime, timedelta, timezone

from hypothesis import strategies as st

from fedbridge.messages import (
    EntityId,
    SamlAssertion,
    SamlAuthnRequest,
    SamlResponse,
    SamlStatus,
    WstRequestSecurityToken,
    WstRequestSecurityTokenResponse,
    fresh_id,
    utc_now,
)
from fedbridge.translate import SAML2_ASSERTION_TOKEN_TYPE, WST_ISSUE_URI

NOW = datetime(2026, 8, 10, 12, 0, 0, tzinfo=timezone.utc)

SP_ID = EntityId("https://sp.example.test")
IDP_ID = EntityId("https://idp.example.test")
BROKER_ID = EntityId("https://broker.example.test")

EMAIL_FORMAT = "urn:oasis:names:tc:SAML:1.1:nameid-format:emailAddress"
PASSWORD_CLASS = "urn:oasis:names:tc:SAML:2.0:ac:classes:Password"


# ---------------------------------------------------------------------------
# Builders with sensible defaults
# ---------------------------------------------------------------------------


def make_authn_request(**overrides) -> SamlAuthnRequest:
    values = dict(
        id=fresh_id(),
        issue_instant=NOW,
        issuer=SP_ID,
        destination="https://broker.example.test/saml/sso",
        acs_url="https://sp.example.test/acs",
        name_id_policy_format=EMAIL_FORMAT,
        requested_authn_context=(PASSWORD_CLASS,),
        force_authn=False,
    )
    values.update(overrides)
    return SamlAuthnRequest(**values)


def make_assertion(**overrides) -> SamlAssertion:
    values = dict(
        id=fresh_id(),
        issuer=IDP_ID,
        subject_name="alice",
        subject_name_format=EMAIL_FORMAT,
        authn_context_class=PASSWORD_CLASS,
        authn_instant=NOW,
        not_before=NOW - timedelta(minutes=1),
        not_on_or_after=NOW + timedelta(minutes=5),
        attributes=(("urn:example:attr:mail", "alice@example.test"),),
    )
    values.update(overrides)
    return SamlAssertion(**values)


def make_live_assertion(**overrides) -> SamlAssertion:
    """Assertion whose validity window brackets the wall clock."""
    now = utc_now()
    values = dict(
        authn_instant=now,
        not_before=now - timedelta(minutes=1),
        not_on_or_after=now + timedelta(minutes=5),
    )
    values.update(overrides)
    return make_assertion(**values)


def make_response(assertion: SamlAssertion | None = None, **overrides) -> SamlResponse:
    if assertion is None and overrides.get("status", SamlStatus.SUCCESS) is SamlStatus.SUCCESS:
        assertion = make_assertion()
    values = dict(
        id=fresh_id(),
        in_response_to=fresh_id(),
        issuer=IDP_ID,
        status=SamlStatus.SUCCESS,
        assertion=assertion,
    )
    values.update(overrides)
    return SamlResponse(**values)


def make_rst(**overrides) -> WstRequestSecurityToken:
    values = dict(
        context="ctx-0001",
        request_type=WST_ISSUE_URI,
        token_type=SAML2_ASSERTION_TOKEN_TYPE,
        reply_to="https://wsfed-sp.example.test/return",
    )
    values.update(overrides)
    return WstRequestSecurityToken(**values)


_DEFAULT_TOKEN = object()


def make_rstr(token=_DEFAULT_TOKEN, **overrides) -> WstRequestSecurityTokenResponse:
    if token is _DEFAULT_TOKEN:
        token = make_assertion()
    values = dict(
        context="ctx-0001",
        token_type=SAML2_ASSERTION_TOKEN_TYPE,
        requested_token=token,
        lifetime=(token.not_before, token.not_on_or_after) if token is not None else None,
    )
    values.update(overrides)
    return WstRequestSecurityTokenResponse(**values)


# ---------------------------------------------------------------------------
# Hypothesis strategies
# ---------------------------------------------------------------------------

# Anything XML 1.0 can carry: no control chars besides tab/lf/cr, no
# surrogates, no U+FFFE/U+FFFF.
xml_text = st.text(
    alphabet=st.characters(
        blacklist_categories=("Cs",),
        blacklist_characters="".join(
            chr(c) for c in range(0x20) if c not in (0x09, 0x0A, 0x0D)
        )
        + "￾￿",
    ),
    max_size=40,
)

_uri_tail = st.text(
    alphabet="abcdefghijklmnopqrstuvwxyz0123456789.-", min_size=1, max_size=24
)

uris = _uri_tail.map(lambda s: f"urn:x-test:{s}")
urls = _uri_tail.map(lambda s: f"https://{s}.example.test/endpoint")
entity_ids = _uri_tail.map(lambda s: EntityId(f"https://{s}.example.test"))

instants = st.datetimes(
    min_value=datetime(2001, 1, 1),
    max_value=datetime(2099, 12, 31),
    timezones=st.just(timezone.utc),
).map(lambda d: d.replace(microsecond=0))

token_ids = _uri_tail.map(lambda s: f"_{s}")

attribute_lists = st.lists(
    st.tuples(uris, xml_text), max_size=4
).map(tuple)


@st.composite
def authn_requests(draw, context_classes: st.SearchStrategy | None = None):
    if context_classes is None:
        context_classes = st.lists(uris, max_size=3).map(tuple)
    return SamlAuthnRequest(
        id=draw(token_ids),
        issue_instant=draw(instants),
        issuer=draw(entity_ids),
        destination=draw(st.one_of(st.just(""), urls)),
        acs_url=draw(urls),
        name_id_policy_format=draw(
            st.one_of(
                st.none(),
                st.just(EMAIL_FORMAT),
                st.just("urn:oasis:names:tc:SAML:2.0:nameid-format:persistent"),
            )
        ),
        requested_authn_context=draw(context_classes),
        force_authn=draw(st.booleans()),
    )


@st.composite
def assertions(draw):
    not_before = draw(instants)
    return SamlAssertion(
        id=draw(token_ids),
        issuer=draw(entity_ids),
        subject_name=draw(xml_text),
        subject_name_format=draw(uris),
        authn_context_class=draw(uris),
        authn_instant=not_before,
        not_before=not_before,
        not_on_or_after=not_before + timedelta(seconds=draw(st.integers(1, 86_400))),
        attributes=draw(attribute_lists),
    )


@st.composite
def responses(draw):
    status = draw(st.sampled_from(list(SamlStatus)))
    return SamlResponse(
        id=draw(token_ids),
        in_response_to=draw(st.one_of(st.just(""), token_ids)),
        issuer=draw(entity_ids),
        status=status,
        assertion=draw(assertions()) if status is SamlStatus.SUCCESS else None,
    )


@st.composite
def rsts(draw):
    claims_dialect = draw(st.one_of(st.none(), uris))
    return WstRequestSecurityToken(
        context=draw(st.one_of(st.just(""), token_ids)),
        request_type=draw(st.one_of(st.just(WST_ISSUE_URI), uris)),
        token_type=draw(st.one_of(st.just(SAML2_ASSERTION_TOKEN_TYPE), uris)),
        reply_to=draw(urls),
        claims_dialect=claims_dialect,
        claim_types=draw(st.lists(uris, max_size=3).map(tuple))
        if claims_dialect is not None
        else (),
        authentication_type=draw(st.one_of(st.none(), uris)),
        force_authn=draw(st.booleans()),
    )


@st.composite
def rstrs(draw):
    token = draw(st.one_of(st.none(), assertions()))
    lifetime = None
    if token is not None and draw(st.booleans()):
        lifetime = (token.not_before, token.not_on_or_after)
    return WstRequestSecurityTokenResponse(
        context=draw(st.one_of(st.just(""), token_ids)),
        token_type=SAML2_ASSERTION_TOKEN_TYPE,
        requested_token=token,
        lifetime=lifetime,
    )


def any_documents():
    return st.one_of(authn_requests(), assertions(), responses(), rsts(), rstrs())
