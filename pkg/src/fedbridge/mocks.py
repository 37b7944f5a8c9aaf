"""Mock federation actors for end-to-end exercise of the broker.

One authority and one service provider per dialect, each a small HTTP
service sharing the broker's message/binding code but none of its state.
Authorities keep a user table and a session set and record every
authentication event; providers keep their outstanding requests and record
every security context they establish, so scenario verdicts can inspect
exactly what crossed the wire.
"""

from __future__ import annotations

import secrets
import threading
import time
from dataclasses import dataclass
from datetime import timedelta
from urllib.parse import urlparse

from .bindings import (
    PostMessage,
    RedirectMessage,
    decode_saml_redirect,
    decode_saml_response_post,
    decode_wsfed_signin,
    decode_wsfed_signin_response_post,
    encode_saml_redirect,
    encode_saml_response_post,
    encode_wsfed_signin,
    encode_wsfed_signin_response_post,
)
from .errors import FedBridgeError, TokenMissing, UnknownSubject
from .httpd import (
    HttpRequest,
    HttpResponse,
    RouteHandler,
    form_response,
    page_response,
    redirect_response,
)
from .messages import (
    SamlAssertion,
    SamlAuthnRequest,
    SamlResponse,
    SamlStatus,
    WstRequestSecurityToken,
    WstRequestSecurityTokenResponse,
    fresh_id,
    utc_now,
)
from .signing import KeyRecord, KeyStore, sign, verify
from .translate import (
    SAML2_ASSERTION_TOKEN_TYPE,
    WST_ISSUE_URI,
    claims_to_name_id_policy,
    name_id_policy_to_claims,
)
from .trust import FederationEntity

UNSPECIFIED_NAMEID_FORMAT = "urn:oasis:names:tc:SAML:1.1:nameid-format:unspecified"
PASSWORD_CONTEXT_CLASS = "urn:oasis:names:tc:SAML:2.0:ac:classes:Password"
ASSERTION_LIFETIME_SECONDS = 300


@dataclass
class SecurityContext:
    """What a service provider holds after a successful sign-in."""

    subject: str
    subject_format: str
    attributes: tuple[tuple[str, str], ...]
    assertion: SamlAssertion
    correlation: str


class MockAuthority:
    """Common identity-provider machinery: user table, sessions, issuance."""

    def __init__(
        self,
        entity: FederationEntity,
        signing_key: KeyRecord,
        users: dict[str, dict[str, str]],
        *,
        active_subject: str | None = None,
        has_session: bool = True,
        clock_skew: float = 60.0,
    ):
        self.entity = entity
        self.signing_key = signing_key
        self.users = users
        self.active_subject = active_subject or next(iter(users), None)
        self.clock_skew = clock_skew
        self.auth_events: list[str] = []
        self.issued: list[SamlAssertion] = []
        self._sessions: set[str] = set(self.users) if has_session else set()
        self._lock = threading.Lock()

    def ensure_authenticated(self, subject: str, force: bool) -> None:
        """Prompt (i.e. record an authentication event) unless a session
        exists and the request does not force freshness."""
        with self._lock:
            if force or subject not in self._sessions:
                self.auth_events.append(subject)
                self._sessions.add(subject)

    def issue_assertion(
        self,
        subject: str,
        authn_context_class: str,
        name_format: str = UNSPECIFIED_NAMEID_FORMAT,
        attrs: tuple[tuple[str, str], ...] | None = None,
    ) -> SamlAssertion:
        if subject not in self.users:
            raise UnknownSubject(subject)
        if attrs is None:
            attrs = tuple(sorted(self.users[subject].items()))
        now = utc_now()
        assertion = sign(
            SamlAssertion(
                id=fresh_id(),
                issuer=self.entity.id,
                subject_name=subject,
                subject_name_format=name_format,
                authn_context_class=authn_context_class,
                authn_instant=now,
                not_before=now - timedelta(seconds=int(self.clock_skew)),
                not_on_or_after=now + timedelta(seconds=ASSERTION_LIFETIME_SECONDS),
                attributes=attrs,
            ),
            self.signing_key,
        )
        with self._lock:
            self.issued.append(assertion)
        return assertion


class MockWsfedSts(MockAuthority):
    """WS-Federation authority: answers sign-in redirects with an issued
    token posted back through the passive client."""

    def handle_signin(self, params: dict[str, str]) -> PostMessage:
        rst, wctx = decode_wsfed_signin(params)
        subject = self.active_subject
        if subject is None or subject not in self.users:
            raise UnknownSubject(str(subject))
        self.ensure_authenticated(subject, rst.force_authn)

        name_format = (
            claims_to_name_id_policy(rst.claims_dialect, rst.claim_types)
            or UNSPECIFIED_NAMEID_FORMAT
        )
        assertion = self.issue_assertion(
            subject,
            rst.authentication_type or PASSWORD_CONTEXT_CLASS,
            name_format=name_format,
        )
        rstr = WstRequestSecurityTokenResponse(
            context=wctx,
            token_type=SAML2_ASSERTION_TOKEN_TYPE,
            requested_token=assertion,
            lifetime=(assertion.not_before, assertion.not_on_or_after),
        )
        return encode_wsfed_signin_response_post(rstr, wctx, rst.reply_to)

    def routes(self) -> dict[tuple[str, str], RouteHandler]:
        def signin(request: HttpRequest) -> HttpResponse:
            return form_response(self.handle_signin(request.query))

        return {("GET", "/signin"): signin}


class MockSamlIdp(MockAuthority):
    """SAML authority: answers authentication requests at its single
    sign-on endpoint."""

    def handle_sso(self, params: dict[str, str]) -> PostMessage:
        req, relay_state = decode_saml_redirect(params)
        subject = self.active_subject
        if subject is None or subject not in self.users:
            raise UnknownSubject(str(subject))
        self.ensure_authenticated(subject, req.force_authn)

        assertion = self.issue_assertion(
            subject,
            req.requested_authn_context[0]
            if req.requested_authn_context
            else PASSWORD_CONTEXT_CLASS,
            name_format=req.name_id_policy_format or UNSPECIFIED_NAMEID_FORMAT,
        )
        response = SamlResponse(
            id=fresh_id(),
            in_response_to=req.id,
            issuer=self.entity.id,
            status=SamlStatus.SUCCESS,
            assertion=assertion,
        )
        return encode_saml_response_post(response, relay_state, req.acs_url)

    def routes(self) -> dict[tuple[str, str], RouteHandler]:
        def sso(request: HttpRequest) -> HttpResponse:
            return form_response(self.handle_sso(request.query))

        return {("GET", "/sso"): sso}


class _MockSpBase:
    def __init__(
        self,
        entity: FederationEntity,
        trusted: KeyStore,
        broker_entry_url: str,
        *,
        clock_skew: float = 60.0,
        name_id_format: str | None = None,
        force_authn: bool = False,
    ):
        self.entity = entity
        self.trusted = trusted
        self.broker_entry_url = broker_entry_url
        self.clock_skew = clock_skew
        self.name_id_format = name_id_format
        self.force_authn = force_authn
        self.contexts: list[SecurityContext] = []
        self.failures: list[str] = []
        self._outstanding: dict[str, str] = {}
        self._lock = threading.Lock()

    @property
    def login_url(self) -> str:
        consumer = self.entity.endpoints.get("acs") or self.entity.endpoints.get("return", "")
        parsed = urlparse(consumer)
        return f"{parsed.scheme}://{parsed.netloc}/login"

    def _fail(self, code: str, correlation: str = "") -> HttpResponse:
        with self._lock:
            self.failures.append(code)
        return page_response(
            "sign-in failed",
            code,
            status=403,
            headers=(("X-Outcome", f"failed:{code}"), ("X-Correlation", correlation)),
        )

    def _established(self, context: SecurityContext) -> HttpResponse:
        with self._lock:
            self.contexts.append(context)
        return page_response(
            "signed in",
            f"welcome {context.subject}",
            headers=(("X-Outcome", "established"), ("X-Correlation", context.correlation)),
        )

    def _lifetime_ok(self, assertion: SamlAssertion) -> bool:
        now = time.time()
        return (
            assertion.not_before.timestamp() - self.clock_skew
            <= now
            <= assertion.not_on_or_after.timestamp() + self.clock_skew
        )


class MockSamlSp(_MockSpBase):
    """SAML service provider: initiates at /login, consumes at /acs."""

    def start_login(self) -> RedirectMessage:
        request = SamlAuthnRequest(
            id=fresh_id(),
            issue_instant=utc_now(),
            issuer=self.entity.id,
            destination=self.broker_entry_url,
            acs_url=self.entity.endpoint("acs"),
            name_id_policy_format=self.name_id_format,
            requested_authn_context=(PASSWORD_CONTEXT_CLASS,),
            force_authn=self.force_authn,
        )
        relay_state = secrets.token_urlsafe(12)
        with self._lock:
            self._outstanding[request.id] = relay_state
        return encode_saml_redirect(request, relay_state, self.broker_entry_url)

    def handle_acs(self, fields: dict[str, str]) -> HttpResponse:
        try:
            response, relay_state = decode_saml_response_post(fields)
        except FedBridgeError as exc:
            return self._fail(exc.code)

        with self._lock:
            expected_relay = self._outstanding.pop(response.in_response_to, None)
        if expected_relay is None:
            return self._fail("UnknownRequest", response.in_response_to)
        if relay_state != expected_relay:
            return self._fail("RelayStateMismatch", response.in_response_to)
        if response.status is not SamlStatus.SUCCESS:
            return self._fail(f"Status:{response.status.value}", response.in_response_to)
        assert response.assertion is not None
        try:
            verify(response.assertion, self.trusted)
        except FedBridgeError as exc:
            return self._fail(exc.code, response.in_response_to)
        if not response.assertion.subject_name:
            return self._fail("NoSubject", response.in_response_to)
        if not self._lifetime_ok(response.assertion):
            return self._fail("LifetimeInvalid", response.in_response_to)

        return self._established(
            SecurityContext(
                subject=response.assertion.subject_name,
                subject_format=response.assertion.subject_name_format,
                attributes=response.assertion.attributes,
                assertion=response.assertion,
                correlation=response.in_response_to,
            )
        )

    def routes(self) -> dict[tuple[str, str], RouteHandler]:
        def login(_: HttpRequest) -> HttpResponse:
            return redirect_response(self.start_login())

        def acs(request: HttpRequest) -> HttpResponse:
            return self.handle_acs(request.form)

        return {("GET", "/login"): login, ("POST", "/acs"): acs}


class MockWsfedSp(_MockSpBase):
    """WS-Federation service provider: initiates at /login, consumes at /return."""

    def __init__(self, *args, authentication_type: str | None = None, **kwargs):
        super().__init__(*args, **kwargs)
        self.authentication_type = authentication_type

    def start_login(self) -> RedirectMessage:
        claims_dialect = None
        claim_types: tuple[str, ...] = ()
        if self.name_id_format is not None:
            claims_dialect, claim_types = name_id_policy_to_claims(self.name_id_format)
        context = secrets.token_urlsafe(12)
        rst = WstRequestSecurityToken(
            context=context,
            request_type=WST_ISSUE_URI,
            token_type=SAML2_ASSERTION_TOKEN_TYPE,
            reply_to=self.entity.endpoint("return"),
            claims_dialect=claims_dialect,
            claim_types=claim_types,
            authentication_type=self.authentication_type,
            force_authn=self.force_authn,
        )
        with self._lock:
            self._outstanding[context] = context
        return encode_wsfed_signin(rst, context, self.broker_entry_url)

    def handle_return(self, fields: dict[str, str]) -> HttpResponse:
        wctx = fields.get("wctx", "")
        try:
            rstr, _ = decode_wsfed_signin_response_post(fields, require_token=True)
        except TokenMissing:
            with self._lock:
                self._outstanding.pop(wctx, None)
            return self._fail("TokenMissing", wctx)
        except FedBridgeError as exc:
            return self._fail(exc.code, wctx)

        with self._lock:
            known = self._outstanding.pop(wctx, None)
        if known is None:
            return self._fail("UnknownRequest", wctx)
        if rstr.context != wctx:
            return self._fail("ContextMismatch", wctx)
        assert rstr.requested_token is not None
        assertion = rstr.requested_token
        try:
            verify(assertion, self.trusted)
        except FedBridgeError as exc:
            return self._fail(exc.code, wctx)
        if not assertion.subject_name:
            return self._fail("NoSubject", wctx)
        if not self._lifetime_ok(assertion):
            return self._fail("LifetimeInvalid", wctx)

        return self._established(
            SecurityContext(
                subject=assertion.subject_name,
                subject_format=assertion.subject_name_format,
                attributes=assertion.attributes,
                assertion=assertion,
                correlation=wctx,
            )
        )

    def routes(self) -> dict[tuple[str, str], RouteHandler]:
        def login(_: HttpRequest) -> HttpResponse:
            return redirect_response(self.start_login())

        def wsfed_return(request: HttpRequest) -> HttpResponse:
            return self.handle_return(request.form)

        return {("GET", "/login"): login, ("POST", "/return"): wsfed_return}


def mock_issue_assertion(
    authority: MockAuthority,
    subject: str,
    authn_context: str,
    attrs: tuple[tuple[str, str], ...] | list[tuple[str, str]] | None = None,
) -> SamlAssertion:
    """Issue a signed assertion from a mock authority's user table."""
    return authority.issue_assertion(
        subject,
        authn_context,
        attrs=tuple(attrs) if attrs is not None else None,
    )
